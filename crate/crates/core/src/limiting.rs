//! Limiting thrust: the root of the shooting function `s(τ) = r_p* − r_c`.
//!
//! The bracket is expanded geometrically until `s` changes sign, bisected to
//! the requested width, then polished by Illinois false position until
//! `|s| ≤ polish_tol`.

use crate::ocp::{solve_ocp_from, OcpError, OcpKind, OcpScenario, SteeringProfile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LimitingError {
    #[error("invalid bracket [{lo}, {hi}] N")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("tolerance must be positive, got {0} N")]
    InvalidTolerance(f64),
    #[error("no sign change of s on [{lo}, {hi}] N after {expansions} expansions (s = {s_lo} m, {s_hi} m)")]
    BracketFailure { lo: f64, hi: f64, s_lo: f64, s_hi: f64, expansions: usize },
    #[error("inner solver failed at tau = {tau} N: {source}")]
    InnerSolverFailure {
        tau: f64,
        #[source]
        source: OcpError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingSettings {
    pub max_expansions: usize,
    /// Stop polishing once `|s(τ)|` is below this, m. Zero disables polishing.
    pub polish_tol: f64,
    pub max_polish: usize,
    /// Seed each solve with the control from the nearest solved thrust.
    pub warm_start: bool,
}

impl Default for LimitingSettings {
    fn default() -> Self {
        Self { max_expansions: 10, polish_tol: 0.5, max_polish: 12, warm_start: true }
    }
}

pub const DEFAULT_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketStep {
    pub lo: f64,
    pub hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Bracket,
    Bisection,
    Polish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub phase: Phase,
    /// N
    pub tau: f64,
    /// m
    pub s: f64,
    /// s
    pub t_f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warm_started: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionReport {
    pub kind: OcpKind,
    /// Polished root, N.
    pub tau_max: f64,
    /// `s(tau_max)`, m.
    pub s_at_tau_max: f64,
    /// Midpoint of the bracket when bisection reached `tolerance`, N.
    pub bisection_midpoint: f64,
    /// Requested bracket width, N.
    pub tolerance: f64,
    /// Bracket width when bisection stopped, N.
    pub tolerance_achieved: f64,
    pub expansions: usize,
    pub bracket_history: Vec<BracketStep>,
    pub evaluations: Vec<Evaluation>,
    /// Sign-ordering anomalies of `s` seen on bracket triples.
    pub warnings: Vec<String>,
}

impl BisectionReport {
    pub fn final_bracket(&self) -> BracketStep {
        *self.bracket_history.last().expect("history is never empty")
    }

    pub fn evaluation_count(&self) -> usize {
        self.evaluations.len()
    }

    pub fn count(&self, phase: Phase) -> usize {
        self.evaluations.iter().filter(|e| e.phase == phase).count()
    }
}

struct Shooter<F> {
    eval: F,
    evaluations: Vec<Evaluation>,
}

impl<F: FnMut(f64, Phase) -> Result<Evaluation, LimitingError>> Shooter<F> {
    fn s(&mut self, tau: f64, phase: Phase) -> Result<f64, LimitingError> {
        let e = (self.eval)(tau, phase)?;
        let s = e.s;
        self.evaluations.push(e);
        Ok(s)
    }
}

fn check_order(warnings: &mut Vec<String>, b: &BracketStep, mid: f64, s_mid: f64) {
    if !(b.s_lo <= s_mid && s_mid <= b.s_hi) {
        warnings.push(format!(
            "s not monotone on ({}, {}, {}) N: ({}, {}, {}) m",
            b.lo, mid, b.hi, b.s_lo, s_mid, b.s_hi
        ));
    }
}

/// Finds `τ_max` with `s(τ_max) = 0`, starting from `[tau_lo, tau_hi]`.
pub fn find_tau_max(
    sc: &OcpScenario,
    tau_lo: f64,
    tau_hi: f64,
    tol: f64,
) -> Result<BisectionReport, LimitingError> {
    find_tau_max_with(sc, tau_lo, tau_hi, tol, &LimitingSettings::default())
}

pub fn find_tau_max_with(
    sc: &OcpScenario,
    tau_lo: f64,
    tau_hi: f64,
    tol: f64,
    settings: &LimitingSettings,
) -> Result<BisectionReport, LimitingError> {
    let mut solved: Vec<(f64, SteeringProfile)> = Vec::new();
    let eval = |tau: f64, phase: Phase| {
        let warm = if settings.warm_start {
            solved
                .iter()
                .min_by(|a, b| (a.0 - tau).abs().total_cmp(&(b.0 - tau).abs()))
                .map(|(_, p)| p.clone())
        } else {
            None
        };
        let sol = solve_ocp_from(sc, tau, warm.as_ref())
            .map_err(|source| LimitingError::InnerSolverFailure { tau, source })?;
        let e = Evaluation {
            phase,
            tau,
            s: sol.terminal_rp - sc.constants.r_c,
            t_f: sol.t_f,
            converged: sol.converged,
            iterations: sol.diagnostics.iterations,
            warm_started: warm.is_some(),
        };
        solved.push((tau, sol.profile));
        Ok(e)
    };
    search(sc.kind, eval, tau_lo, tau_hi, tol, settings)
}

/// Bracketing, bisection and polishing on an arbitrary shooting function.
fn search<F>(
    kind: OcpKind,
    eval: F,
    tau_lo: f64,
    tau_hi: f64,
    tol: f64,
    settings: &LimitingSettings,
) -> Result<BisectionReport, LimitingError>
where
    F: FnMut(f64, Phase) -> Result<Evaluation, LimitingError>,
{
    if !(tau_lo > 0.0 && tau_hi > tau_lo && tau_hi.is_finite()) {
        return Err(LimitingError::InvalidBracket { lo: tau_lo, hi: tau_hi });
    }
    if !(tol > 0.0) {
        return Err(LimitingError::InvalidTolerance(tol));
    }
    let mut sh = Shooter { eval, evaluations: Vec::new() };
    let mut warnings = Vec::new();
    let mut history = Vec::new();

    let (mut lo, mut hi) = (tau_lo, tau_hi);
    let mut s_lo = sh.s(lo, Phase::Bracket)?;
    let mut s_hi = sh.s(hi, Phase::Bracket)?;
    let mut expansions = 0;
    history.push(BracketStep { lo, hi, s_lo, s_hi });
    while !(s_lo < 0.0 && s_hi > 0.0) {
        if expansions == settings.max_expansions {
            return Err(LimitingError::BracketFailure { lo, hi, s_lo, s_hi, expansions });
        }
        expansions += 1;
        if s_hi <= 0.0 {
            // the old upper end is a valid lower end
            if s_lo < 0.0 {
                lo = hi;
                s_lo = s_hi;
            }
            hi *= 2.0;
            s_hi = sh.s(hi, Phase::Bracket)?;
        } else {
            if s_lo > 0.0 {
                hi = lo;
                s_hi = s_lo;
            }
            lo /= 2.0;
            s_lo = sh.s(lo, Phase::Bracket)?;
        }
        history.push(BracketStep { lo, hi, s_lo, s_hi });
    }

    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let s_mid = sh.s(mid, Phase::Bisection)?;
        check_order(&mut warnings, history.last().expect("non-empty"), mid, s_mid);
        if s_mid > 0.0 {
            hi = mid;
            s_hi = s_mid;
        } else {
            lo = mid;
            s_lo = s_mid;
        }
        history.push(BracketStep { lo, hi, s_lo, s_hi });
    }
    let bisection_midpoint = 0.5 * (lo + hi);
    let tolerance_achieved = hi - lo;

    // Illinois false position inside the final bracket.
    let mut best = if s_lo.abs() < s_hi.abs() { (lo, s_lo) } else { (hi, s_hi) };
    let mut side = 0i8;
    let (mut w_lo, mut w_hi) = (s_lo, s_hi);
    let polish_budget = if settings.polish_tol > 0.0 { settings.max_polish } else { 0 };
    for _ in 0..polish_budget {
        if best.1.abs() <= settings.polish_tol {
            break;
        }
        let tau = (lo * w_hi - hi * w_lo) / (w_hi - w_lo);
        if !(tau > lo && tau < hi) {
            break;
        }
        let s = sh.s(tau, Phase::Polish)?;
        check_order(&mut warnings, history.last().expect("non-empty"), tau, s);
        if s.abs() < best.1.abs() {
            best = (tau, s);
        }
        if s > 0.0 {
            hi = tau;
            s_hi = s;
            w_hi = s;
            if side == 1 {
                w_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = tau;
            s_lo = s;
            w_lo = s;
            if side == -1 {
                w_hi *= 0.5;
            }
            side = -1;
        }
        history.push(BracketStep { lo, hi, s_lo, s_hi });
    }
    if settings.polish_tol > 0.0 && best.1.abs() > settings.polish_tol {
        warnings.push(format!("polishing stopped with |s| = {} m at tau = {} N", best.1.abs(), best.0));
    }
    if settings.polish_tol == 0.0 {
        best = (bisection_midpoint, f64::NAN);
    }

    Ok(BisectionReport {
        kind,
        tau_max: best.0,
        s_at_tau_max: best.1,
        bisection_midpoint,
        tolerance: tol,
        tolerance_achieved,
        expansions,
        bracket_history: history,
        evaluations: sh.evaluations,
        warnings,
    })
}

#[cfg(test)]
mod tests;
