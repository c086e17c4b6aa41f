//! Adaptive DOP853 integration with event location.
//!
//! Events are located by bisection on the event function, where each trial
//! state is obtained by re-stepping from the start of the accepted step, so
//! event states carry the full integrator accuracy.

use super::tableau::{A, B, C, E3, E5, STAGES};
use thiserror::Error;

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dydt: &mut [f64; N]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// negative → positive
    Rising,
    /// positive → negative
    Falling,
    Either,
}

impl Crossing {
    fn matches(self, g0: f64, g1: f64) -> bool {
        match self {
            Crossing::Rising => g0 < 0.0 && g1 >= 0.0,
            Crossing::Falling => g0 > 0.0 && g1 <= 0.0,
            Crossing::Either => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
        }
    }
}

pub trait EventFunction<const N: usize> {
    fn value(&self, t: f64, y: &[f64; N]) -> f64;

    fn crossing(&self) -> Crossing {
        Crossing::Either
    }

    /// Stop refining once `|g| ≤ value_tol`.
    fn value_tol(&self) -> f64 {
        0.0
    }

    /// Second-chance filter applied at the located root; a rejected root
    /// does not stop the integration.
    fn accept(&self, _t: f64, _y: &[f64; N]) -> bool {
        true
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone)]
pub struct Tolerances<const N: usize> {
    pub rtol: f64,
    pub atol: [f64; N],
}

impl<const N: usize> Tolerances<N> {
    pub fn uniform(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol: [atol; N] }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

/// Outcome of an integration run.
#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    /// Index of the event that stopped the run, if any.
    pub event: Option<usize>,
    /// Set when the observer asked to stop.
    pub halted: bool,
    pub stats: Stats,
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const EVENT_ITER_CAP: usize = 60;

#[derive(Debug, Clone)]
pub struct Dop853<const N: usize> {
    pub tol: Tolerances<N>,
    pub max_steps: usize,
    pub h_max: f64,
}

impl<const N: usize> Dop853<N> {
    pub fn new(tol: Tolerances<N>) -> Self {
        Self { tol, max_steps: 1_000_000, h_max: f64::INFINITY }
    }

    fn scale(&self, y0: &[f64; N], y1: &[f64; N]) -> [f64; N] {
        let mut s = [0.0; N];
        for i in 0..N {
            s[i] = self.tol.atol[i] + self.tol.rtol * y0[i].abs().max(y1[i].abs());
        }
        s
    }

    /// One explicit step of size `h` from `(t, y)` with `f0 = f(t, y)`.
    /// Returns the new state, its derivative and the normalized error.
    pub fn step<S: OdeSystem<N>>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        f0: &[f64; N],
        h: f64,
    ) -> ([f64; N], [f64; N], f64) {
        let mut k = [[0.0; N]; STAGES + 1];
        k[0] = *f0;
        let mut ys = [0.0; N];
        for s in 1..STAGES {
            for i in 0..N {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                ys[i] = y[i] + h * acc;
            }
            let mut ks = [0.0; N];
            sys.rhs(t + C[s] * h, &ys, &mut ks);
            k[s] = ks;
        }
        let mut y_new = [0.0; N];
        for i in 0..N {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(STAGES) {
                acc += B[j] * kj[i];
            }
            y_new[i] = y[i] + h * acc;
        }
        let mut f_new = [0.0; N];
        sys.rhs(t + h, &y_new, &mut f_new);
        k[STAGES] = f_new;

        let scale = self.scale(y, &y_new);
        let (mut e5, mut e3) = (0.0, 0.0);
        for i in 0..N {
            let (mut a5, mut a3) = (0.0, 0.0);
            for (j, kj) in k.iter().enumerate() {
                a5 += E5[j] * kj[i];
                a3 += E3[j] * kj[i];
            }
            e5 += (a5 / scale[i]).powi(2);
            e3 += (a3 / scale[i]).powi(2);
        }
        let err = if e5 == 0.0 && e3 == 0.0 {
            0.0
        } else {
            h.abs() * e5 / ((e5 + 0.01 * e3) * N as f64).sqrt()
        };
        (y_new, f_new, err)
    }

    fn initial_step<S: OdeSystem<N>>(&self, sys: &S, t0: f64, y0: &[f64; N], f0: &[f64; N], dir: f64) -> f64 {
        let scale = self.scale(y0, y0);
        let norm = |v: &[f64; N]| -> f64 {
            (v.iter().zip(scale.iter()).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt()
        };
        let d0 = norm(y0);
        let d1 = norm(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = y0[i] + dir * h0 * f0[i];
        }
        let mut f1 = [0.0; N];
        sys.rhs(t0 + dir * h0, &y1, &mut f1);
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - f0[i];
        }
        let d2 = norm(&diff) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(self.h_max)
    }

    /// Integrates from `t0` to `t_end` (either direction), stopping at the
    /// first accepted root of any event. `observer` sees every accepted
    /// step endpoint (and the initial point); returning `false` halts.
    pub fn integrate<S, F>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        events: &[&dyn EventFunction<N>],
        mut observer: F,
    ) -> Result<Outcome<N>, IntegratorError>
    where
        S: OdeSystem<N>,
        F: FnMut(f64, &[f64; N]) -> bool,
    {
        let mut stats = Stats::default();
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let mut t = t0;
        let mut y = y0;
        let mut f = [0.0; N];
        sys.rhs(t, &y, &mut f);
        stats.evals += 1;
        if !observer(t, &y) {
            return Ok(Outcome { t, y, event: None, halted: true, stats });
        }
        if t == t_end {
            return Ok(Outcome { t, y, event: None, halted: false, stats });
        }
        let mut g: Vec<f64> = events.iter().map(|e| e.value(t, &y)).collect();
        let mut h = self.initial_step(sys, t0, &y, &f, dir);
        stats.evals += 1;
        let mut last_rejected = false;

        loop {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(IntegratorError::MaxSteps(self.max_steps));
            }
            let remaining = (t_end - t).abs();
            let h_min = 10.0 * f64::EPSILON * t.abs().max(1.0);
            if h < h_min {
                return Err(IntegratorError::StepSizeUnderflow { t });
            }
            let mut last = false;
            if h >= remaining {
                h = remaining;
                last = true;
            }
            let (y_new, f_new, err) = self.step(sys, t, &y, &f, dir * h);
            stats.evals += STAGES;
            if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
                stats.rejected += 1;
                h *= MIN_FACTOR;
                last_rejected = true;
                continue;
            }
            if err > 1.0 {
                stats.rejected += 1;
                h *= (SAFETY * err.powf(-1.0 / 8.0)).max(MIN_FACTOR);
                last_rejected = true;
                continue;
            }
            stats.accepted += 1;
            let t_new = if last { t_end } else { t + dir * h };

            // events
            let g_new: Vec<f64> = events.iter().map(|e| e.value(t_new, &y_new)).collect();
            let mut first: Option<(usize, f64, [f64; N])> = None;
            for (idx, ev) in events.iter().enumerate() {
                if !ev.crossing().matches(g[idx], g_new[idx]) {
                    continue;
                }
                let (te, ye, iters) =
                    self.locate(sys, *ev, t, &y, &f, g[idx], t_new, &y_new, g_new[idx]);
                stats.evals += STAGES * iters;
                if !ev.accept(te, &ye) {
                    continue;
                }
                let earlier = match &first {
                    None => true,
                    Some((_, tf, _)) => dir * (te - tf) < 0.0,
                };
                if earlier {
                    first = Some((idx, te, ye));
                }
            }
            if let Some((idx, te, ye)) = first {
                observer(te, &ye);
                return Ok(Outcome { t: te, y: ye, event: Some(idx), halted: false, stats });
            }

            t = t_new;
            y = y_new;
            f = f_new;
            g = g_new;
            if !observer(t, &y) {
                return Ok(Outcome { t, y, event: None, halted: true, stats });
            }
            if last {
                return Ok(Outcome { t, y, event: None, halted: false, stats });
            }
            let mut factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-1.0 / 8.0)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;
            h = (h * factor).min(self.h_max);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn locate<S: OdeSystem<N>>(
        &self,
        sys: &S,
        ev: &dyn EventFunction<N>,
        t0: f64,
        y0: &[f64; N],
        f0: &[f64; N],
        g0: f64,
        t1: f64,
        y1: &[f64; N],
        g1: f64,
    ) -> (f64, [f64; N], usize) {
        let tol = ev.value_tol();
        let (mut a, mut ga) = (t0, g0);
        let (mut b, mut gb, mut yb) = (t1, g1, *y1);
        if tol > 0.0 && gb.abs() <= tol {
            return (b, yb, 0);
        }
        for iter in 0..EVENT_ITER_CAP {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            let (ym, _, _) = self.step(sys, t0, y0, f0, m - t0);
            let gm = ev.value(m, &ym);
            if gm == 0.0 || (tol > 0.0 && gm.abs() <= tol && gm.signum() == gb.signum()) {
                return (m, ym, iter + 1);
            }
            if (gm < 0.0) == (ga < 0.0) && gm != 0.0 {
                a = m;
                ga = gm;
            } else {
                b = m;
                gb = gm;
                yb = ym;
            }
        }
        (b, yb, EVENT_ITER_CAP)
    }
}
