//! Perigee-maximizing optimal control at a fixed thrust magnitude, for orbit
//! insertion (mass-depleting system, forward from `x_i`) and de-orbit
//! (mass-growing system, backward from the entry interface).
//!
//! The thrust direction is parameterized by an in-plane steering angle `α(t)`
//! measured from the local transverse direction toward the radial one,
//! `u = cos α t̂ + sin α r̂` with `t̂ = ĥ × r̂`, interpolated by a natural cubic
//! spline on uniform knots over `[0, span]` and held constant afterwards.
//! Each candidate is propagated until the first perigee passage, and
//! `−r_p(t_f)/r_c` is minimized by BFGS.

pub mod bfgs;
pub mod spline;

use crate::astro::{EngineParameters, PhysicalConstants, RegionClass, SatelliteState, StateVector, Vec3};
use crate::propagator::{
    ControlLaw, Direction, EventKind, PropagationError, Propagator, PropagatorTolerances, TerminalReason,
    Trajectory,
};
use bfgs::{BfgsReport, BfgsSettings, StopReason};
use serde::{Deserialize, Serialize};
use spline::UniformSpline;
use std::cell::Cell;
use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use thiserror::Error;

/// Objective assigned to controls whose run never reaches a perigee.
const PENALTY: f64 = 1e3;
/// Initial throttle parameter in the relaxed-magnitude mode (σ ≈ 0.9997).
const THROTTLE_START: f64 = 8.0;
const MASS_ITERATIONS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcpKind {
    /// Orbit insertion: forward system from `x_i`.
    Oip,
    /// De-orbit: backward system from `(r_f, −v_f)`.
    Dop,
}

impl fmt::Display for OcpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OcpKind::Oip => "OIP",
            OcpKind::Dop => "DOP",
        })
    }
}

#[derive(Debug, Error, Clone)]
pub enum OcpError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("thrust must be positive and finite, got {0} N")]
    InvalidThrust(f64),
    #[error("no perigee passage within t_max = {t_max} s at tau = {tau} N")]
    EventNeverFires { tau: f64, t_max: f64 },
    #[error("optimizer did not converge at tau = {tau} N ({reason:?})")]
    NoConvergence { tau: f64, reason: StopReason, diagnostics: Box<OcpDiagnostics> },
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSettings {
    pub initial_knots: usize,
    pub final_knots: usize,
    /// Constant steering angles (rad) used as starting profiles.
    pub start_angles: Vec<f64>,
    pub bfgs: BfgsSettings,
    pub tolerances: PropagatorTolerances,
    /// Propagation cap, s. Defaults to ten periods of the anchor orbit.
    pub t_max: Option<f64>,
    /// Add an out-of-plane steering angle.
    pub out_of_plane: bool,
    /// Let the optimizer throttle below full thrust (diagnostic).
    pub relax_magnitude: bool,
    /// Relative tolerance of the de-orbit mass fixed point.
    pub mass_tol: f64,
    /// Return `NoConvergence` instead of a flagged solution.
    pub require_convergence: bool,
}

impl Default for OcpSettings {
    fn default() -> Self {
        Self {
            initial_knots: 16,
            final_knots: 64,
            start_angles: vec![0.0, PI, FRAC_PI_4, -FRAC_PI_4],
            bfgs: BfgsSettings { stall_tol: 1e-4 / PhysicalConstants::earth().r_c, ..Default::default() },
            tolerances: PropagatorTolerances::default(),
            t_max: None,
            out_of_plane: false,
            relax_magnitude: false,
            mass_tol: 1e-10,
            require_convergence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpScenario {
    pub kind: OcpKind,
    /// `x_i` for insertion, `(r_f, −v_f)` for de-orbit.
    pub anchor: StateVector,
    /// `m_i`; for de-orbit this is the mass the backward run must end with.
    pub anchor_mass: f64,
    pub engine: EngineParameters,
    pub constants: PhysicalConstants,
    pub settings: OcpSettings,
}

impl OcpScenario {
    pub fn oip(
        x_i: StateVector,
        m_i: f64,
        engine: EngineParameters,
        constants: PhysicalConstants,
    ) -> Result<Self, OcpError> {
        let class = x_i.classify(&constants);
        if class != RegionClass::PMinus {
            return Err(OcpError::InvalidScenario(format!("initial state is {class}, expected PMinus")));
        }
        Self::checked(OcpKind::Oip, x_i, m_i, engine, constants)
    }

    /// Builds the de-orbit problem from the entry-interface state `x_f`.
    pub fn dop_from_entry(
        x_f: StateVector,
        m_i: f64,
        engine: EngineParameters,
        constants: PhysicalConstants,
    ) -> Result<Self, OcpError> {
        let class = x_f.classify(&constants);
        if class != RegionClass::PMinus {
            return Err(OcpError::InvalidScenario(format!("entry state is {class}, expected PMinus")));
        }
        let anchor = StateVector { r: x_f.r, v: -x_f.v };
        Self::checked(OcpKind::Dop, anchor, m_i, engine, constants)
    }

    fn checked(
        kind: OcpKind,
        anchor: StateVector,
        m_i: f64,
        engine: EngineParameters,
        constants: PhysicalConstants,
    ) -> Result<Self, OcpError> {
        if !(m_i > 0.0 && m_i.is_finite()) {
            return Err(OcpError::InvalidScenario("initial mass must be positive".into()));
        }
        if !(m_i > engine.m_dry) {
            return Err(OcpError::InvalidScenario("initial mass must exceed the dry mass".into()));
        }
        Ok(Self { kind, anchor, anchor_mass: m_i, engine, constants, settings: OcpSettings::default() })
    }

    pub fn with_settings(mut self, settings: OcpSettings) -> Self {
        self.settings = settings;
        self
    }

    /// The entry-interface state of a de-orbit scenario.
    pub fn entry_state(&self) -> Option<StateVector> {
        match self.kind {
            OcpKind::Oip => None,
            OcpKind::Dop => Some(StateVector { r: self.anchor.r, v: -self.anchor.v }),
        }
    }

    pub fn direction(&self) -> Direction {
        match self.kind {
            OcpKind::Oip => Direction::Forward,
            OcpKind::Dop => Direction::BackwardMassGrowing,
        }
    }

    pub fn t_max(&self) -> f64 {
        self.settings.t_max.unwrap_or_else(|| {
            self.anchor.orbital_period(self.constants.mu).map(|p| 10.0 * p).unwrap_or(1e6)
        })
    }

    fn propagator(&self, tau: f64) -> Propagator {
        Propagator::new(self.constants, &self.engine.with_thrust(tau))
            .with_tolerances(self.settings.tolerances)
            .with_record(false)
    }

    /// Time to the first perigee passage of the unthrusted anchor orbit.
    pub fn drift_time_to_perigee(&self) -> Result<f64, OcpError> {
        let s0 = SatelliteState { x: self.anchor, m: self.anchor_mass };
        let traj = self.propagator(0.0).propagate(
            &s0,
            &ControlLaw::Zero,
            self.t_max(),
            &[EventKind::PerigeeMatch],
            Direction::Forward,
        )?;
        match traj.terminal_reason {
            TerminalReason::PerigeeMatch => Ok(traj.last().t),
            _ => Err(OcpError::EventNeverFires { tau: 0.0, t_max: self.t_max() }),
        }
    }
}

/// Steering history: knot values of the in-plane angle and, optionally, an
/// out-of-plane angle and a logistic throttle parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringProfile {
    /// s
    pub span: f64,
    /// rad
    pub angle: Vec<f64>,
    /// rad
    pub elevation: Option<Vec<f64>>,
    /// `σ = 1/(1 + e^{−k})`
    pub throttle: Option<Vec<f64>>,
}

impl SteeringProfile {
    pub fn constant(span: f64, knots: usize, angle: f64, out_of_plane: bool, relax: bool) -> Self {
        Self {
            span,
            angle: vec![angle; knots],
            elevation: out_of_plane.then(|| vec![0.0; knots]),
            throttle: relax.then(|| vec![THROTTLE_START; knots]),
        }
    }

    pub fn knots(&self) -> usize {
        self.angle.len()
    }

    /// Times where the interpolated control loses smoothness.
    pub fn breakpoints(&self) -> Vec<f64> {
        vec![self.span]
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.angle.clone();
        if let Some(e) = &self.elevation {
            p.extend_from_slice(e);
        }
        if let Some(k) = &self.throttle {
            p.extend_from_slice(k);
        }
        p
    }

    fn with_params(&self, p: &[f64]) -> Self {
        let n = self.knots();
        let mut off = n;
        let mut next = |present: bool| {
            present.then(|| {
                let v = p[off..off + n].to_vec();
                off += n;
                v
            })
        };
        let elevation = next(self.elevation.is_some());
        let throttle = next(self.throttle.is_some());
        Self { span: self.span, angle: p[..n].to_vec(), elevation, throttle }
    }

    pub fn resample(&self, span: f64, knots: usize) -> Self {
        let re = |v: &Vec<f64>| UniformSpline::new(self.span, v).resample(span, knots);
        Self {
            span,
            angle: re(&self.angle),
            elevation: self.elevation.as_ref().map(re),
            throttle: self.throttle.as_ref().map(re),
        }
    }

    pub fn compile(&self) -> CompiledSteering {
        CompiledSteering {
            angle: UniformSpline::new(self.span, &self.angle),
            elevation: self.elevation.as_ref().map(|v| UniformSpline::new(self.span, v)),
            throttle: self.throttle.as_ref().map(|v| UniformSpline::new(self.span, v)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledSteering {
    angle: UniformSpline,
    elevation: Option<UniformSpline>,
    throttle: Option<UniformSpline>,
}

impl CompiledSteering {
    pub fn throttle(&self, t: f64) -> f64 {
        self.throttle.as_ref().map_or(1.0, |k| 1.0 / (1.0 + (-k.eval(t)).exp()))
    }

    /// Thrust direction scaled by the throttle, in the orbit frame of `x`.
    pub fn direction(&self, t: f64, x: &StateVector) -> Vec3 {
        let rh = x.r.normalize();
        let h = x.r.cross(&x.v);
        let hn = h.norm();
        let hh = if hn > 0.0 { h / hn } else { Vec3::zeros() };
        let th = hh.cross(&rh);
        let a = self.angle.eval(t);
        let mut u = a.cos() * th + a.sin() * rh;
        if let Some(e) = &self.elevation {
            let d = e.eval(t);
            u = d.cos() * u + d.sin() * hh;
        }
        u * self.throttle(t)
    }
}

fn steering_law(profile: &SteeringProfile, tau: f64) -> ControlLaw {
    let c = profile.compile();
    ControlLaw::steering(move |t, s| c.direction(t, &s.x) * tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub knots: usize,
    pub start: Option<usize>,
    pub iterations: usize,
    pub evaluations: usize,
    /// m; `None` when no perigee passage was reached.
    pub terminal_rp: Option<f64>,
    pub grad_norm: f64,
    pub reason: StopReason,
}

impl StageReport {
    fn from_bfgs(r: &BfgsReport, knots: usize, start: Option<usize>, r_c: f64) -> Self {
        Self {
            knots,
            start,
            iterations: r.iterations,
            evaluations: r.evaluations,
            terminal_rp: (r.f < PENALTY).then(|| -r.f * r_c),
            grad_norm: r.grad_norm,
            reason: r.reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpDiagnostics {
    pub stages: Vec<StageReport>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Max-norm of the final finite-difference gradient (nondimensional).
    pub grad_norm: f64,
    pub reason: StopReason,
    pub best_start: Option<usize>,
    pub warm_started: bool,
    /// Smallest throttle along the solution, relaxed-magnitude mode only.
    pub min_throttle: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcpSolution {
    pub kind: OcpKind,
    pub tau: f64,
    /// Physical (mass-depleting) trajectory. For de-orbit this is the time
    /// reversal of `backward`, so it ends at the entry interface.
    pub trajectory: Trajectory,
    /// The mass-growing run actually optimized (de-orbit only).
    pub backward: Option<Trajectory>,
    pub t_f: f64,
    /// `r_p` at the optimized run's perigee-match event, m.
    pub terminal_rp: f64,
    /// Mass at the start of the physical trajectory, kg.
    pub initial_mass: f64,
    /// Mass at the end of the physical trajectory, kg.
    pub final_mass: f64,
    pub profile: SteeringProfile,
    pub converged: bool,
    pub diagnostics: OcpDiagnostics,
}

impl OcpSolution {
    /// Thrust law reproducing `trajectory` when applied to the mass-depleting
    /// system from its first sample.
    pub fn physical_control_law(&self) -> ControlLaw {
        let c = self.profile.compile();
        let tau = self.tau;
        match self.kind {
            OcpKind::Oip => ControlLaw::steering(move |t, s| c.direction(t, &s.x) * tau),
            OcpKind::Dop => {
                let tf = self.t_f;
                ControlLaw::steering(move |t, s| {
                    let mirrored = StateVector { r: s.x.r, v: -s.x.v };
                    c.direction(tf - t, &mirrored) * tau
                })
            }
        }
    }

    /// `max |‖τ(t)‖ − tau| / tau` over the samples.
    pub fn magnitude_error(&self) -> f64 {
        self.trajectory.samples.iter().map(|s| (s.tau.norm() - self.tau).abs() / self.tau).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    rp: f64,
    tf: f64,
    m_start: f64,
}

#[derive(Debug)]
enum EvalFailure {
    NoPerigee,
    Propagation(PropagationError),
}

struct Problem<'a> {
    sc: &'a OcpScenario,
    tau: f64,
    prop: Propagator,
    t_max: f64,
    /// Last converged de-orbit start mass; seeds the next fixed point.
    mass_guess: Cell<f64>,
}

impl<'a> Problem<'a> {
    fn new(sc: &'a OcpScenario, tau: f64, mass_guess: f64) -> Self {
        Self { sc, tau, prop: sc.propagator(tau), t_max: sc.t_max(), mass_guess: Cell::new(mass_guess) }
    }

    fn events(&self) -> &'static [EventKind] {
        match self.sc.kind {
            OcpKind::Oip => &[EventKind::PerigeeMatch, EventKind::MassFloor],
            OcpKind::Dop => &[EventKind::PerigeeMatch],
        }
    }

    fn run(&self, profile: &SteeringProfile, m0: f64, record: bool) -> Result<Trajectory, EvalFailure> {
        let s0 = SatelliteState { x: self.sc.anchor, m: m0 };
        let law = steering_law(profile, self.tau);
        let prop = if record { self.prop.clone().with_record(true) } else { self.prop.clone() };
        let traj = prop
            .propagate_with_breakpoints(&s0, &law, self.t_max, self.events(), self.sc.direction(), &profile.breakpoints())
            .map_err(EvalFailure::Propagation)?;
        if traj.terminal_reason != TerminalReason::PerigeeMatch {
            return Err(EvalFailure::NoPerigee);
        }
        Ok(traj)
    }

    fn summarize(&self, traj: &Trajectory) -> Eval {
        let end = traj.last();
        Eval {
            rp: end.state.x.perigee(self.sc.constants.mu).unwrap_or(f64::NAN),
            tf: end.t,
            m_start: traj.first().state.m,
        }
    }

    /// Start mass of the run and the run itself. For de-orbit, solves
    /// `m(t_f; m_start) = m_i` by secant iteration.
    fn solve_mass(&self, profile: &SteeringProfile, record: bool) -> Result<Trajectory, EvalFailure> {
        let m_i = self.sc.anchor_mass;
        if self.sc.kind == OcpKind::Oip {
            return self.run(profile, m_i, record);
        }
        let tol = self.sc.settings.mass_tol * m_i;
        let floor = self.sc.engine.m_dry;
        let residual = |m0: f64| -> Result<(f64, Trajectory), EvalFailure> {
            if !(m0 > floor) {
                return Err(EvalFailure::NoPerigee);
            }
            let traj = self.run(profile, m0, record)?;
            Ok((traj.last().state.m - m_i, traj))
        };
        let mut x0 = self.mass_guess.get();
        let (mut r0, traj) = residual(x0)?;
        if r0.abs() <= tol {
            return Ok(traj);
        }
        let mut x1 = x0 - r0;
        let mut best = (r0.abs(), x0, traj);
        for _ in 0..MASS_ITERATIONS {
            let (r1, traj) = residual(x1)?;
            if r1.abs() <= tol {
                self.mass_guess.set(x1);
                return Ok(traj);
            }
            if r1.abs() < best.0 {
                best = (r1.abs(), x1, traj);
            }
            let mut slope = (r1 - r0) / (x1 - x0);
            if !(slope.is_finite() && slope > 0.1) {
                slope = 1.0;
            }
            x0 = x1;
            r0 = r1;
            x1 -= r1 / slope;
        }
        // The residual has a noise floor set by event-time jitter; settle for
        // the best iterate when it is close to tolerance.
        if best.0 <= 100.0 * tol {
            self.mass_guess.set(best.1);
            return Ok(best.2);
        }
        Err(EvalFailure::NoPerigee)
    }

    fn evaluate(&self, profile: &SteeringProfile) -> Result<Eval, EvalFailure> {
        self.solve_mass(profile, false).map(|t| self.summarize(&t))
    }

    fn objective(&self, base: &SteeringProfile, p: &[f64]) -> f64 {
        match self.evaluate(&base.with_params(p)) {
            Ok(e) if e.rp.is_finite() => -e.rp / self.sc.constants.r_c,
            _ => PENALTY,
        }
    }

    fn optimize(&self, start: &SteeringProfile) -> (SteeringProfile, BfgsReport) {
        let report = bfgs::minimize(|p| self.objective(start, p), &start.params(), &self.sc.settings.bfgs);
        (start.with_params(&report.x), report)
    }
}

/// Solves the perigee-maximization problem at thrust `tau`.
pub fn solve_ocp(sc: &OcpScenario, tau: f64) -> Result<OcpSolution, OcpError> {
    solve_ocp_from(sc, tau, None)
}

/// As [`solve_ocp`], seeding the optimizer with `warm` instead of the
/// constant-angle starts.
pub fn solve_ocp_from(
    sc: &OcpScenario,
    tau: f64,
    warm: Option<&SteeringProfile>,
) -> Result<OcpSolution, OcpError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(OcpError::InvalidThrust(tau));
    }
    let set = &sc.settings;
    if set.initial_knots == 0 || set.final_knots == 0 {
        return Err(OcpError::InvalidScenario("knot counts must be positive".into()));
    }
    let r_c = sc.constants.r_c;
    let t_ref = sc.drift_time_to_perigee()?;
    let span0 = if t_ref > 0.0 { t_ref } else { sc.anchor.orbital_period(sc.constants.mu).unwrap_or(1.0) };
    let beta = sc.engine.beta;
    let mass_seed = match sc.kind {
        OcpKind::Oip => sc.anchor_mass,
        OcpKind::Dop => (sc.anchor_mass - beta * tau * span0).max(0.5 * sc.anchor_mass),
    };
    let mut stages = Vec::new();

    let (mut best, mut best_report, best_start, mut seed) = match warm {
        Some(w) => {
            let start = w.resample(w.span, set.final_knots);
            let p = Problem::new(sc, tau, mass_seed);
            let (prof, rep) = p.optimize(&start);
            stages.push(StageReport::from_bfgs(&rep, set.final_knots, None, r_c));
            (prof, rep, None, p.mass_guess.get())
        }
        None => {
            let starts: Vec<SteeringProfile> = set
                .start_angles
                .iter()
                .map(|&a| SteeringProfile::constant(span0, set.initial_knots, a, set.out_of_plane, set.relax_magnitude))
                .collect();
            let results: Vec<(SteeringProfile, BfgsReport, f64)> = std::thread::scope(|scope| {
                let handles: Vec<_> = starts
                    .iter()
                    .map(|s| {
                        scope.spawn(move || {
                            let p = Problem::new(sc, tau, mass_seed);
                            let (prof, rep) = p.optimize(s);
                            (prof, rep, p.mass_guess.get())
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("optimizer thread panicked")).collect()
            });
            let mut best_idx = None;
            for (i, (_, rep, _)) in results.iter().enumerate() {
                stages.push(StageReport::from_bfgs(rep, set.initial_knots, Some(i), r_c));
                if rep.f < PENALTY && best_idx.is_none_or(|b: usize| rep.f < results[b].1.f) {
                    best_idx = Some(i);
                }
            }
            let Some(b) = best_idx else {
                return Err(OcpError::EventNeverFires { tau, t_max: sc.t_max() });
            };
            let (prof, rep, seed) = results.into_iter().nth(b).expect("index in range");
            (prof, rep, Some(b), seed)
        }
    };
    if best_report.f >= PENALTY {
        return Err(OcpError::EventNeverFires { tau, t_max: sc.t_max() });
    }

    // Refit the knot grid to the achieved t_f and refine.
    let needs_refine = best.knots() != set.final_knots || warm.is_none();
    if needs_refine {
        let p = Problem::new(sc, tau, seed);
        let tf = p.evaluate(&best).map(|e| e.tf).unwrap_or(best.span);
        let start = best.resample(tf, set.final_knots);
        let (prof, rep) = p.optimize(&start);
        stages.push(StageReport::from_bfgs(&rep, set.final_knots, best_start, r_c));
        if rep.f <= best_report.f {
            best = prof;
            best_report = rep;
        }
        seed = p.mass_guess.get();
    }

    let p = Problem::new(sc, tau, seed);
    let traj = p.solve_mass(&best, true).map_err(|e| match e {
        EvalFailure::Propagation(err) => OcpError::Propagation(err),
        EvalFailure::NoPerigee => OcpError::EventNeverFires { tau, t_max: sc.t_max() },
    })?;
    let eval = p.summarize(&traj);
    let compiled = best.compile();
    let min_throttle = best.throttle.as_ref().map(|_| {
        traj.samples.iter().map(|s| compiled.throttle(s.t)).fold(f64::INFINITY, f64::min)
    });
    let diagnostics = OcpDiagnostics {
        iterations: stages.iter().map(|s| s.iterations).sum(),
        evaluations: stages.iter().map(|s| s.evaluations).sum(),
        stages,
        grad_norm: best_report.grad_norm,
        reason: best_report.reason,
        best_start,
        warm_started: warm.is_some(),
        min_throttle,
    };
    let converged = best_report.reason.is_converged();
    if !converged && set.require_convergence {
        return Err(OcpError::NoConvergence { tau, reason: best_report.reason, diagnostics: Box::new(diagnostics) });
    }
    let (trajectory, backward, initial_mass, final_mass) = match sc.kind {
        OcpKind::Oip => {
            let mf = traj.last().state.m;
            (traj, None, eval.m_start, mf)
        }
        OcpKind::Dop => {
            let mi = traj.last().state.m;
            (traj.time_reversed(), Some(traj), mi, eval.m_start)
        }
    };
    Ok(OcpSolution {
        kind: sc.kind,
        tau,
        trajectory,
        backward,
        t_f: eval.tf,
        terminal_rp: eval.rp,
        initial_mass,
        final_mass,
        profile: best,
        converged,
        diagnostics,
    })
}

/// `r_p(t_f) − r_c` at the optimum.
pub fn shooting_s(sc: &OcpScenario, tau: f64) -> Result<f64, OcpError> {
    Ok(solve_ocp(sc, tau)?.terminal_rp - sc.constants.r_c)
}
