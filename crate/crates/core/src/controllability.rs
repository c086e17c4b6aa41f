//! Constructive controllability pieces: the linearized rank test, element-space
//! paths between orbits, the outward spiral with its thrust bound, and local
//! steering by the controllability Gramian.

use crate::astro::{EngineParameters, PhysicalConstants, RegionClass, SatelliteState, StateVector, Vec3};
use crate::elements::{angle_diff, meoe_from_state, state_from_meoe, ElementsError, Meoe};
use crate::propagator::integrator::{Dop853, OdeSystem, Tolerances};
use crate::propagator::ORIGIN_GUARD;
use nalgebra::{DMatrix, Matrix3, Matrix6, Matrix6x3, Vector6};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllabilityError {
    #[error("state is at the origin")]
    OriginSingularity,
    #[error("{which} endpoint is {class}, outside the region required by the path mode")]
    EndpointOutsideRegion { which: &'static str, class: RegionClass },
    #[error("initial state is {0}, expected PMinus")]
    NotInPMinus(RegionClass),
    #[error("reference state is {0}, expected PPlus")]
    NotInPPlus(RegionClass),
    #[error("velocity is zero")]
    ZeroVelocity,
    #[error("controllability Gramian is singular")]
    GramianSingular,
    #[error("invalid argument: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Elements(#[from] ElementsError),
    #[error("integration failed: {0}")]
    Integration(String),
}

/// `ẋ ≈ A δx + B δu` around a state of the drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedPair {
    pub a: Matrix6<f64>,
    pub b: Matrix6x3<f64>,
}

fn gravity_gradient(r: &Vec3, mu: f64) -> Matrix3<f64> {
    let rn = r.norm();
    Matrix3::identity() * (-mu / rn.powi(3)) + (r * r.transpose()) * (3.0 * mu / rn.powi(5))
}

fn input_matrix() -> Matrix6x3<f64> {
    let mut b = Matrix6x3::zeros();
    b.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
    b
}

pub fn linearize(x: &StateVector, mu: f64) -> Result<LinearizedPair, ControllabilityError> {
    if x.r.norm() < ORIGIN_GUARD {
        return Err(ControllabilityError::OriginSingularity);
    }
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&gravity_gradient(&x.r, mu));
    Ok(LinearizedPair { a, b: input_matrix() })
}

/// Numerical rank with singular values below `1e-8 σ_max` treated as zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-8 * max).count()
}

/// Rank of `[B₀ B₁]` with `B₀ = B` and `B₁ = A B₀` (B is constant).
pub fn rank_condition(x: &StateVector, mu: f64) -> Result<usize, ControllabilityError> {
    let p = linearize(x, mu)?;
    let b1 = p.a * p.b;
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<6, 3>(0, 0).copy_from(&p.b);
    m.fixed_view_mut::<6, 3>(0, 3).copy_from(&b1);
    Ok(numerical_rank(&DMatrix::from_column_slice(6, 6, m.as_slice())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathMode {
    /// Interpolates the radius; stays in the admissible region.
    AdmissibleA,
    /// Interpolates the perigee distance; stays above the atmosphere.
    StablePPlus,
}

/// States `x(λ_k)`, `λ_k = k/(n−1)`, with `(e_x, e_y, h_x, h_y, l)` linear in
/// `λ` and `P(λ)` chosen so that the radius (AdmissibleA) or the perigee
/// distance (StablePPlus) is affine in `λ`.
pub fn meoe_path(
    x_i: &StateVector,
    x_f: &StateVector,
    mode: PathMode,
    n: usize,
    constants: &PhysicalConstants,
) -> Result<Vec<StateVector>, ControllabilityError> {
    if n < 2 {
        return Err(ControllabilityError::Invalid("a path needs at least two samples"));
    }
    for (which, x) in [("initial", x_i), ("final", x_f)] {
        let class = x.classify(constants);
        let ok = match mode {
            PathMode::AdmissibleA => class.is_admissible(),
            PathMode::StablePPlus => class == RegionClass::PPlus,
        };
        if !ok {
            return Err(ControllabilityError::EndpointOutsideRegion { which, class });
        }
    }
    let mu = constants.mu;
    let zi = meoe_from_state(x_i, mu)?;
    let zf = meoe_from_state(x_f, mu)?;
    let dl = angle_diff(zf.l, zi.l);
    let (ri, rf) = (x_i.r.norm(), x_f.r.norm());
    let (rpi, rpf) = (zi.perigee(), zf.perigee());
    (0..n)
        .map(|k| {
            let lam = k as f64 / (n - 1) as f64;
            let lin = |a: f64, b: f64| (1.0 - lam) * a + lam * b;
            let mut z = Meoe {
                p: 0.0,
                ex: lin(zi.ex, zf.ex),
                ey: lin(zi.ey, zf.ey),
                hx: lin(zi.hx, zf.hx),
                hy: lin(zi.hy, zf.hy),
                l: zi.l + lam * dl,
            };
            z.p = match mode {
                PathMode::AdmissibleA => lin(ri, rf) * z.w(),
                PathMode::StablePPlus => lin(rpi, rpf) * (1.0 + z.eccentricity()),
            };
            Ok(state_from_meoe(&z, mu)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralOptions {
    /// Radial weight of the velocity law.
    pub a_i: f64,
    /// Transverse weight of the velocity law; nonzero.
    pub b_i: f64,
    /// `r_p(T̄) = r_c + perigee_margin`, m.
    pub perigee_margin: f64,
    pub samples: usize,
}

impl Default for SpiralOptions {
    fn default() -> Self {
        Self { a_i: 1.0, b_i: 1.0, perigee_margin: 1.0, samples: 201 }
    }
}

impl SpiralOptions {
    /// Weights for which the velocity law reproduces `v_i` at `t = 0`.
    pub fn matching(x_i: &StateVector) -> Result<Self, ControllabilityError> {
        let eta = x_i.flight_path_angle().map_err(|_| ControllabilityError::ZeroVelocity)?;
        Ok(Self {
            a_i: 2f64.sqrt() * eta.sin(),
            b_i: 2f64.sqrt() * eta.cos(),
            ..Self::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralSample {
    pub t: f64,
    pub r: Vec3,
    pub v: Vec3,
    /// rad, measured from `r_i`
    pub theta: f64,
    pub m: f64,
    pub tau: Vec3,
    pub rp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralResult {
    pub c0: f64,
    /// `r_p(0) / r_i^{1/2}`
    pub c1: f64,
    pub options: SpiralOptions,
    /// T̄, s
    pub duration: f64,
    pub samples: Vec<SpiralSample>,
    /// max ‖τ‖ over the arc, N
    pub tau_bar: f64,
    pub terminal: SatelliteState,
}

/// Closed-form kinematics of the spiral `v = C₀ (2r)^{-1/2} (a r̂ + b r̂⊥)`.
#[derive(Debug, Clone, Copy)]
pub struct Spiral {
    pub mu: f64,
    pub c0: f64,
    pub a: f64,
    pub b: f64,
    pub r_i: f64,
    /// in-plane unit vectors: `r̂_i` and the prograde perpendicular
    pub e1: Vec3,
    pub e2: Vec3,
}

impl Spiral {
    pub fn new(x_i: &StateVector, mu: f64, a: f64, b: f64) -> Result<Self, ControllabilityError> {
        let vn = x_i.v.norm();
        if vn == 0.0 {
            return Err(ControllabilityError::ZeroVelocity);
        }
        if !(a > 0.0) || b == 0.0 {
            return Err(ControllabilityError::Invalid("spiral weights need a_i > 0 and b_i != 0"));
        }
        let r_i = x_i.r.norm();
        let h = x_i.angular_momentum();
        if h.norm() == 0.0 {
            return Err(ControllabilityError::Invalid("initial state is colinear"));
        }
        let e1 = x_i.r / r_i;
        let e2 = (h / h.norm()).cross(&e1);
        Ok(Self { mu, c0: r_i.sqrt() * vn, a, b, r_i, e1, e2 })
    }

    /// `r(t) = (r_i^{3/2} + 3 a C₀ t / (2√2))^{2/3}`
    pub fn radius(&self, t: f64) -> f64 {
        (self.r_i.powf(1.5) + 3.0 * self.a * self.c0 * t / (2.0 * 2f64.sqrt())).powf(2.0 / 3.0)
    }

    /// Inverse of [`Spiral::radius`].
    pub fn time_at_radius(&self, r: f64) -> f64 {
        (r.powf(1.5) - self.r_i.powf(1.5)) * 2.0 * 2f64.sqrt() / (3.0 * self.a * self.c0)
    }

    /// `θ(t) = (b/a) ln(r(t)/r_i)`
    pub fn theta(&self, t: f64) -> f64 {
        self.b / self.a * (self.radius(t) / self.r_i).ln()
    }

    fn basis(&self, theta: f64) -> (Vec3, Vec3) {
        let (s, c) = theta.sin_cos();
        (c * self.e1 + s * self.e2, -s * self.e1 + c * self.e2)
    }

    pub fn state(&self, t: f64) -> StateVector {
        let r = self.radius(t);
        let (rh, th) = self.basis(self.theta(t));
        let k = self.c0 / (2.0 * r).sqrt();
        StateVector { r: r * rh, v: k * (self.a * rh + self.b * th) }
    }

    /// `v̇ + μ r/‖r‖³`: the acceleration the thrust must supply.
    pub fn control_acceleration(&self, t: f64) -> Vec3 {
        let r = self.radius(t);
        let (rh, th) = self.basis(self.theta(t));
        let c2 = self.c0 * self.c0;
        let radial = -(self.a * self.a / 4.0 + self.b * self.b / 2.0) * c2 / (r * r) + self.mu / (r * r);
        let transverse = self.a * self.b * c2 / (4.0 * r * r);
        radial * rh + transverse * th
    }

    /// `‖h‖ = b C₀ (r/2)^{1/2}`
    pub fn angular_momentum_norm(&self, t: f64) -> f64 {
        self.b.abs() * self.c0 * (self.radius(t) / 2.0).sqrt()
    }

    /// Components of `L` on `(r̂, r̂⊥)`: `(b² C₀²/2 − μ, −a b C₀²/2)`.
    pub fn laplace_components(&self) -> (f64, f64) {
        let c2 = self.c0 * self.c0;
        (self.b * self.b * c2 / 2.0 - self.mu, -self.a * self.b * c2 / 2.0)
    }
}

struct MassOde<'a> {
    spiral: &'a Spiral,
    beta: f64,
}

impl OdeSystem<1> for MassOde<'_> {
    fn rhs(&self, t: f64, y: &[f64; 1], d: &mut [f64; 1]) {
        d[0] = -self.beta * self.spiral.control_acceleration(t).norm() * y[0];
    }
}

pub fn spiral_construct(
    x_i: &StateVector,
    m_i: f64,
    engine: &EngineParameters,
    constants: &PhysicalConstants,
    options: &SpiralOptions,
) -> Result<SpiralResult, ControllabilityError> {
    if x_i.v.norm() == 0.0 {
        return Err(ControllabilityError::ZeroVelocity);
    }
    let class = x_i.classify(constants);
    if class != RegionClass::PMinus {
        return Err(ControllabilityError::NotInPMinus(class));
    }
    if !(m_i > 0.0) || options.samples < 2 {
        return Err(ControllabilityError::Invalid("mass must be positive and samples at least 2"));
    }
    let mu = constants.mu;
    let sp = Spiral::new(x_i, mu, options.a_i, options.b_i)?;
    if sp.c0 * sp.c0 >= 2.0 * mu {
        return Err(ControllabilityError::NotInPMinus(class));
    }
    // r_p is proportional to r along the spiral (h² ∝ r, e constant).
    let (lr, lt) = sp.laplace_components();
    let e = lr.hypot(lt) / mu;
    if e >= 1.0 {
        return Err(ControllabilityError::Invalid("spiral orbit is not elliptic for these weights"));
    }
    let rp_per_r = options.b_i * options.b_i * sp.c0 * sp.c0 / (2.0 * mu * (1.0 + e));
    let r_end = ((constants.r_c + options.perigee_margin) / rp_per_r).max(sp.r_i);
    let duration = sp.time_at_radius(r_end);

    let times: Vec<f64> =
        (0..options.samples).map(|k| duration * k as f64 / (options.samples - 1) as f64).collect();
    let solver = Dop853::new(Tolerances::uniform(1e-12, 1e-12 * m_i));
    let ode = MassOde { spiral: &sp, beta: engine.beta };
    let mut masses = vec![m_i];
    let mut m = [m_i];
    for w in times.windows(2) {
        let out = solver
            .integrate(&ode, w[0], m, w[1], &[], |_, _| true)
            .map_err(|e| ControllabilityError::Integration(e.to_string()))?;
        m = out.y;
        masses.push(m[0]);
    }
    let samples: Vec<SpiralSample> = times
        .iter()
        .zip(&masses)
        .map(|(&t, &m)| {
            let x = sp.state(t);
            SpiralSample {
                t,
                r: x.r,
                v: x.v,
                theta: sp.theta(t),
                m,
                tau: sp.control_acceleration(t) * m,
                rp: x.perigee(mu).unwrap_or(f64::NAN),
            }
        })
        .collect();
    let tau_bar = samples.iter().map(|s| s.tau.norm()).fold(0.0, f64::max);
    let last = samples.last().expect("at least two samples");
    let terminal = SatelliteState { x: StateVector { r: last.r, v: last.v }, m: last.m };
    Ok(SpiralResult {
        c0: sp.c0,
        c1: samples[0].rp / sp.r_i.sqrt(),
        options: *options,
        duration,
        samples,
        tau_bar,
        terminal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSteerResult {
    pub success: bool,
    /// ‖x(T) − target‖, nondimensional
    pub miss: f64,
    /// ‖target − x̄‖, nondimensional
    pub initial_offset: f64,
    /// Period of the reference orbit, s.
    pub period: f64,
    /// Smallest eigenvalue of the Gramian over one period (nondimensional).
    pub gramian_min_eigenvalue: f64,
    /// Largest control acceleration, m/s².
    pub max_control: f64,
    /// `(t, u)` in s and m/s².
    pub control: Vec<(f64, Vec3)>,
}

/// Reference orbit, state transition matrix and Gramian, nondimensional.
struct GramianOde;

const GRAM_N: usize = 6 + 36 + 36;

fn a_nd(r: &Vec3) -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&gravity_gradient(r, 1.0));
    a
}

fn drift_nd(x: &[f64]) -> [f64; 6] {
    let r = Vec3::new(x[0], x[1], x[2]);
    let k = -1.0 / r.norm().powi(3);
    [x[3], x[4], x[5], k * x[0], k * x[1], k * x[2]]
}

impl OdeSystem<GRAM_N> for GramianOde {
    fn rhs(&self, _t: f64, y: &[f64; GRAM_N], d: &mut [f64; GRAM_N]) {
        d[..6].copy_from_slice(&drift_nd(&y[..6]));
        let a = a_nd(&Vec3::new(y[0], y[1], y[2]));
        let phi = Matrix6::from_column_slice(&y[6..42]);
        let w = Matrix6::from_column_slice(&y[42..78]);
        let bbt = input_matrix() * input_matrix().transpose();
        d[6..42].copy_from_slice((a * phi).as_slice());
        d[42..78].copy_from_slice((a * w + w * a.transpose() + bbt).as_slice());
    }
}

/// Nonlinear state, reference state and adjoint: `u = Bᵀλ`, `λ̇ = −Aᵀλ`.
struct SteerOde {
    eps: f64,
}

impl SteerOde {
    fn control(&self, y: &[f64; 18]) -> Vec3 {
        let u = Vec3::new(y[15], y[16], y[17]);
        let n = u.norm();
        if n > self.eps { u * (self.eps / n) } else { u }
    }
}

impl OdeSystem<18> for SteerOde {
    fn rhs(&self, _t: f64, y: &[f64; 18], d: &mut [f64; 18]) {
        let u = self.control(y);
        let f = drift_nd(&y[..6]);
        d[..6].copy_from_slice(&f);
        d[3] += u.x;
        d[4] += u.y;
        d[5] += u.z;
        d[6..12].copy_from_slice(&drift_nd(&y[6..12]));
        let a = a_nd(&Vec3::new(y[6], y[7], y[8]));
        let lam = Vector6::from_column_slice(&y[12..18]);
        d[12..18].copy_from_slice((-(a.transpose() * lam)).as_slice());
    }
}

/// Steers the acceleration-bounded system from `xbar` to `target` over one
/// period of `xbar`'s orbit with the least-norm control of the linearization.
pub fn verify_local_steer(
    xbar: &StateVector,
    target: &StateVector,
    eps: f64,
    constants: &PhysicalConstants,
) -> Result<LocalSteerResult, ControllabilityError> {
    let class = xbar.classify(constants);
    if class != RegionClass::PPlus {
        return Err(ControllabilityError::NotInPPlus(class));
    }
    if !(eps > 0.0) {
        return Err(ControllabilityError::Invalid("eps must be positive"));
    }
    let (l, v) = (constants.r_c, (constants.mu / constants.r_c).sqrt());
    let ts = l / v;
    let acc = v / ts;
    let nd = |x: &StateVector| -> [f64; 6] {
        [x.r.x / l, x.r.y / l, x.r.z / l, x.v.x / v, x.v.y / v, x.v.z / v]
    };
    let x0 = nd(xbar);
    let xt = nd(target);
    let a_nd_len = xbar.semi_major_axis(constants.mu).map_err(|_| ControllabilityError::NotInPPlus(class))? / l;
    let period = 2.0 * PI * a_nd_len.powf(1.5);

    let mut y0 = [0.0; GRAM_N];
    y0[..6].copy_from_slice(&x0);
    for i in 0..6 {
        y0[6 + i * 7] = 1.0;
    }
    let solver = Dop853::new(Tolerances::uniform(1e-12, 1e-14));
    let out = solver
        .integrate(&GramianOde, 0.0, y0, period, &[], |_, _| true)
        .map_err(|e| ControllabilityError::Integration(e.to_string()))?;
    let phi = Matrix6::from_column_slice(&out.y[6..42]);
    let w = Matrix6::from_column_slice(&out.y[42..78]);
    let w = (w + w.transpose()) * 0.5;
    let min_eig = w.symmetric_eigenvalues().min();
    let chol = w.cholesky().ok_or(ControllabilityError::GramianSingular)?;
    if !(min_eig > 0.0) {
        return Err(ControllabilityError::GramianSingular);
    }
    // x̄ returns to itself after one period, so the required offset is
    // target − x̄ref(T).
    let xref_t = Vector6::from_column_slice(&out.y[..6]);
    let d = Vector6::from_column_slice(&xt) - xref_t;
    let lam0 = phi.transpose() * chol.solve(&d);

    let mut y = [0.0; 18];
    y[..6].copy_from_slice(&x0);
    y[6..12].copy_from_slice(&x0);
    y[12..18].copy_from_slice(lam0.as_slice());
    let sys = SteerOde { eps: eps / acc };
    let solver = Dop853::new(Tolerances::uniform(1e-12, 1e-14));
    let mut control = Vec::new();
    let out = solver
        .integrate(&sys, 0.0, y, period, &[], |t, y| {
            control.push((t * ts, sys.control(y) * acc));
            true
        })
        .map_err(|e| ControllabilityError::Integration(e.to_string()))?;
    let xf = Vector6::from_column_slice(&out.y[..6]);
    let target_v = Vector6::from_column_slice(&xt);
    let miss = (xf - target_v).norm();
    let initial_offset = (target_v - Vector6::from_column_slice(&x0)).norm();
    let max_control = control.iter().map(|(_, u)| u.norm()).fold(0.0, f64::max);
    Ok(LocalSteerResult {
        success: miss <= 0.1 * initial_offset,
        miss,
        initial_offset,
        period: period * ts,
        gramian_min_eigenvalue: min_eig,
        max_control,
        control,
    })
}

#[cfg(test)]
mod tests;
