//! Quasi-Newton (BFGS) minimization with finite-difference gradients and a
//! backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsSettings {
    pub max_iterations: usize,
    /// Stop when the accepted step's max-norm falls below this.
    pub step_tol: f64,
    /// Stop when the objective improved by less than this over `stall_window` iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
    pub grad_tol: f64,
    pub fd_step: f64,
    /// Largest max-norm step tried by the line search.
    pub max_step: f64,
    pub central_differences: bool,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tol: 1e-10,
            stall_tol: 1e-12,
            stall_window: 5,
            grad_tol: 1e-12,
            fd_step: 1e-6,
            max_step: 0.5,
            central_differences: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    StepTolerance,
    Stall,
    GradientTolerance,
    /// No decrease along the search direction at working precision.
    LineSearch,
    MaxIterations,
}

impl StopReason {
    pub fn is_converged(self) -> bool {
        !matches!(self, StopReason::MaxIterations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub reason: StopReason,
}

fn gradient<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x: &DVector<f64>,
    fx: f64,
    s: &BfgsSettings,
    evals: &mut usize,
) -> DVector<f64> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.as_slice().to_vec();
    for i in 0..n {
        let h = s.fd_step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        *evals += 1;
        g[i] = if s.central_differences {
            xp[i] = x[i] - h;
            let fm = f(&xp);
            *evals += 1;
            (fp - fm) / (2.0 * h)
        } else {
            (fp - fx) / h
        };
        xp[i] = x[i];
    }
    g
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], s: &BfgsSettings) -> BfgsReport {
    let n = x0.len();
    let mut evals = 0;
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    evals += 1;
    let mut g = gradient(&mut f, &x, fx, s, &mut evals);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut history = vec![fx];
    let mut reason = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < s.max_iterations {
        if g.amax() < s.grad_tol {
            reason = StopReason::GradientTolerance;
            break;
        }
        let mut p = -(&h * &g);
        if g.dot(&p) >= 0.0 {
            h = DMatrix::identity(n, n);
            scaled = false;
            p = -g.clone();
        }
        if !scaled {
            // unit-free first step
            p *= s.max_step / p.amax();
        } else if p.amax() > s.max_step {
            p *= s.max_step / p.amax();
        }
        let slope = g.dot(&p);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = &x + alpha * &p;
            let fnew = f(xn.as_slice());
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            reason = StopReason::LineSearch;
            break;
        };
        iterations += 1;
        let gn = gradient(&mut f, &xn, fnew, s, &mut evals);
        let step = &xn - &x;
        let y = &gn - &g;
        let sy = step.dot(&y);
        if sy > 1e-300 {
            if !scaled {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h -= rho * (&hy * step.transpose() + &step * hy.transpose());
            h += (rho * rho * yhy + rho) * (&step * step.transpose());
        }
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        if step.amax() < s.step_tol {
            reason = StopReason::StepTolerance;
            break;
        }
        if history.len() > s.stall_window {
            let old = history[history.len() - 1 - s.stall_window];
            if old - fx < s.stall_tol {
                reason = StopReason::Stall;
                break;
            }
        }
    }
    BfgsReport {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations,
        evaluations: evals,
        grad_norm: g.amax(),
        reason,
    }
}
