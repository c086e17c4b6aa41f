//! Controlled two-body dynamics (mass-depleting, its mass-growing reversal,
//! and the mass-normalized acceleration-bounded system), integrated with an
//! adaptive DOP853 scheme and terminal events.

pub mod integrator;
mod tableau;

use crate::astro::{PhysicalConstants, SatelliteState, StateVector, Vec3};
use integrator::{Crossing, Dop853, EventFunction, IntegratorError, OdeSystem, Tolerances};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Radius below which the dynamics are considered singular, m.
pub const ORIGIN_GUARD: f64 = 1.0;
/// Relative slack allowed on the thrust bound.
pub const THRUST_BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("trajectory reached the origin (|r| < {ORIGIN_GUARD} m) at t = {t} s")]
    OriginSingularity { t: f64 },
    #[error("mass became non-positive at t = {t} s")]
    NonPositiveMass { t: f64 },
    #[error("step size underflow at t = {t} s")]
    StepSizeUnderflow { t: f64 },
    #[error("thrust bound {tau_bound} N is below eps * m_i = {required} N")]
    BoundViolated { tau_bound: f64, required: f64 },
    #[error("integration failed: {0}")]
    Integrator(String),
    #[error("invalid propagation request: {0}")]
    Invalid(&'static str),
}

/// Which mass equation is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `ṁ = −β‖τ‖`
    Forward,
    /// `ṁ = +β‖τ‖`, the time reversal of the forward system.
    BackwardMassGrowing,
}

impl Direction {
    fn mass_sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::BackwardMassGrowing => 1.0,
        }
    }
}

pub type SteeringFn = Arc<dyn Fn(f64, &SatelliteState) -> Vec3 + Send + Sync>;

/// Thrust as a function of time and state, in N.
#[derive(Clone)]
pub enum ControlLaw {
    Zero,
    Constant(Vec3),
    Steering(SteeringFn),
}

impl fmt::Debug for ControlLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlLaw::Zero => f.write_str("Zero"),
            ControlLaw::Constant(v) => write!(f, "Constant({}, {}, {})", v.x, v.y, v.z),
            ControlLaw::Steering(_) => f.write_str("Steering(..)"),
        }
    }
}

impl ControlLaw {
    pub fn steering<F>(f: F) -> Self
    where
        F: Fn(f64, &SatelliteState) -> Vec3 + Send + Sync + 'static,
    {
        ControlLaw::Steering(Arc::new(f))
    }

    /// Thrust at `(t, s)`, projected onto the ball of radius `bound`.
    pub fn thrust(&self, t: f64, s: &SatelliteState, bound: f64) -> Vec3 {
        let tau = match self {
            ControlLaw::Zero => return Vec3::zeros(),
            ControlLaw::Constant(v) => *v,
            ControlLaw::Steering(f) => f(t, s),
        };
        let n = tau.norm();
        if n > bound * (1.0 + THRUST_BOUND_SLACK) {
            tau * (bound / n)
        } else {
            tau
        }
    }
}

/// `(v, −μ r/‖r‖³)`
pub fn drift_rhs(x: &StateVector, mu: f64) -> Result<[f64; 6], PropagationError> {
    let rn = x.r.norm();
    if rn < ORIGIN_GUARD {
        return Err(PropagationError::OriginSingularity { t: f64::NAN });
    }
    let a = -mu / rn.powi(3) * x.r;
    Ok([x.v.x, x.v.y, x.v.z, a.x, a.y, a.z])
}

/// `(v, −μ r/‖r‖³ + τ/m, ∓β‖τ‖)`
pub fn controlled_rhs(
    s: &SatelliteState,
    tau: Vec3,
    direction: Direction,
    mu: f64,
    beta: f64,
) -> Result<[f64; 7], PropagationError> {
    if !(s.m > 0.0) {
        return Err(PropagationError::NonPositiveMass { t: f64::NAN });
    }
    let d = drift_rhs(&s.x, mu)?;
    let a = tau / s.m;
    Ok([
        d[0],
        d[1],
        d[2],
        d[3] + a.x,
        d[4] + a.y,
        d[5] + a.z,
        direction.mass_sign() * beta * tau.norm(),
    ])
}

/// Terminal events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// `‖r‖ = r_p(x)`: passage through the perigee of the osculating orbit.
    PerigeeMatch,
    /// `‖r‖ = r_c` while descending.
    AtmosphereCrossing,
    /// `m = m_dry` while depleting.
    MassFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalReason {
    TimeExhausted,
    PerigeeMatch,
    AtmosphereCrossing,
    MassFloor,
}

impl From<EventKind> for TerminalReason {
    fn from(k: EventKind) -> Self {
        match k {
            EventKind::PerigeeMatch => TerminalReason::PerigeeMatch,
            EventKind::AtmosphereCrossing => TerminalReason::AtmosphereCrossing,
            EventKind::MassFloor => TerminalReason::MassFloor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: SatelliteState,
    pub tau: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<(f64, EventKind)>,
    pub terminal_reason: TerminalReason,
    pub direction: Direction,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn duration(&self) -> f64 {
        self.last().t - self.first().t
    }

    /// Applies `(r, v, m)(t) ↦ (r, −v, m)(t_f − t)`, which maps trajectories of
    /// the backward system onto trajectories of the forward one (and back).
    /// The thrust history is reversed along with the states.
    pub fn time_reversed(&self) -> Trajectory {
        let tf = self.last().t;
        let t0 = self.first().t;
        let samples = self
            .samples
            .iter()
            .rev()
            .map(|s| Sample {
                t: t0 + tf - s.t,
                state: SatelliteState {
                    x: StateVector { r: s.state.x.r, v: -s.state.x.v },
                    m: s.state.m,
                },
                tau: s.tau,
            })
            .collect();
        let direction = match self.direction {
            Direction::Forward => Direction::BackwardMassGrowing,
            Direction::BackwardMassGrowing => Direction::Forward,
        };
        Trajectory {
            samples,
            events: self.events.iter().map(|&(t, k)| (t0 + tf - t, k)).collect(),
            terminal_reason: self.terminal_reason,
            direction,
        }
    }
}

/// Characteristic scales used to nondimensionalize the equations.
#[derive(Debug, Clone, Copy)]
pub struct Scales {
    pub length: f64,
    pub velocity: f64,
    pub mass: f64,
}

impl Scales {
    pub fn new(constants: &PhysicalConstants, mass: f64) -> Self {
        Self {
            length: constants.r_c,
            velocity: (constants.mu / constants.r_c).sqrt(),
            mass,
        }
    }

    pub fn time(&self) -> f64 {
        self.length / self.velocity
    }

    pub fn force(&self) -> f64 {
        self.mass * self.velocity * self.velocity / self.length
    }

    pub fn to_nd(&self, s: &SatelliteState) -> [f64; 7] {
        let (l, v) = (self.length, self.velocity);
        [
            s.x.r.x / l,
            s.x.r.y / l,
            s.x.r.z / l,
            s.x.v.x / v,
            s.x.v.y / v,
            s.x.v.z / v,
            s.m / self.mass,
        ]
    }

    pub fn from_nd(&self, y: &[f64; 7]) -> SatelliteState {
        let (l, v) = (self.length, self.velocity);
        SatelliteState {
            x: StateVector {
                r: Vec3::new(y[0], y[1], y[2]) * l,
                v: Vec3::new(y[3], y[4], y[5]) * v,
            },
            m: y[6] * self.mass,
        }
    }
}

/// Integration tolerances in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorTolerances {
    pub rtol: f64,
    /// m
    pub atol_position: f64,
    /// m/s
    pub atol_velocity: f64,
    /// kg
    pub atol_mass: f64,
}

impl Default for PropagatorTolerances {
    fn default() -> Self {
        Self { rtol: 1e-12, atol_position: 1e-6, atol_velocity: 1e-9, atol_mass: 1e-9 }
    }
}

impl PropagatorTolerances {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            rtol: self.rtol * factor,
            atol_position: self.atol_position * factor,
            atol_velocity: self.atol_velocity * factor,
            atol_mass: self.atol_mass * factor,
        }
    }

    fn nondimensional(&self, scales: &Scales) -> Tolerances<7> {
        let p = self.atol_position / scales.length;
        let v = self.atol_velocity / scales.velocity;
        let m = self.atol_mass / scales.mass;
        Tolerances { rtol: self.rtol, atol: [p, p, p, v, v, v, m] }
    }
}

struct ScaledDynamics<'a> {
    law: &'a ControlLaw,
    scales: Scales,
    tau_bound: f64,
    /// β·‖τ‖ scaled to nondimensional mass rate per unit thrust
    beta_nd: f64,
    sign: f64,
}

impl ScaledDynamics<'_> {
    fn thrust_si(&self, t: f64, y: &[f64; 7]) -> Vec3 {
        let s = self.scales.from_nd(y);
        self.law.thrust(t * self.scales.time(), &s, self.tau_bound)
    }
}

impl OdeSystem<7> for ScaledDynamics<'_> {
    fn rhs(&self, t: f64, y: &[f64; 7], d: &mut [f64; 7]) {
        let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        let k = 1.0 / (r2 * r2.sqrt());
        let tau = self.thrust_si(t, y);
        let a = tau / (y[6] * self.scales.force());
        d[0] = y[3];
        d[1] = y[4];
        d[2] = y[5];
        d[3] = -k * y[0] + a.x;
        d[4] = -k * y[1] + a.y;
        d[5] = -k * y[2] + a.z;
        d[6] = self.sign * self.beta_nd * tau.norm();
    }
}

fn rv_dot(y: &[f64; 7]) -> f64 {
    y[0] * y[3] + y[1] * y[4] + y[2] * y[5]
}

struct PerigeeEvent;

impl EventFunction<7> for PerigeeEvent {
    /// The radial velocity vanishes exactly where `‖r‖ − r_p(x)` does (or at
    /// the osculating apogee), and unlike `‖r‖ − r_p` it changes sign there.
    fn value(&self, _t: f64, y: &[f64; 7]) -> f64 {
        rv_dot(y)
    }
    fn crossing(&self) -> Crossing {
        Crossing::Rising
    }
    /// Rejects osculating apogees: at perigee `v²r/μ = 1 + e ≥ 1`.
    fn accept(&self, _t: f64, y: &[f64; 7]) -> bool {
        let r = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let v2 = y[3] * y[3] + y[4] * y[4] + y[5] * y[5];
        v2 * r >= 1.0
    }
}

struct RadiusEvent;

impl EventFunction<7> for RadiusEvent {
    fn value(&self, _t: f64, y: &[f64; 7]) -> f64 {
        (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt() - 1.0
    }
    fn crossing(&self) -> Crossing {
        Crossing::Falling
    }
}

struct MassEvent {
    floor: f64,
}

impl EventFunction<7> for MassEvent {
    fn value(&self, _t: f64, y: &[f64; 7]) -> f64 {
        y[6] - self.floor
    }
    fn crossing(&self) -> Crossing {
        Crossing::Falling
    }
}

/// Propagates the mass-varying system under a control law.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub constants: PhysicalConstants,
    /// s/m
    pub beta: f64,
    /// N
    pub tau_bound: f64,
    /// kg
    pub m_dry: f64,
    pub tolerances: PropagatorTolerances,
    /// Keep every accepted step; otherwise only the endpoints.
    pub record: bool,
}

impl Propagator {
    pub fn new(constants: PhysicalConstants, engine: &crate::astro::EngineParameters) -> Self {
        Self {
            constants,
            beta: engine.beta,
            tau_bound: engine.tau_bound,
            m_dry: engine.m_dry,
            tolerances: PropagatorTolerances::default(),
            record: true,
        }
    }

    pub fn with_record(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    pub fn with_tolerances(mut self, tolerances: PropagatorTolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    /// Integrates from `s0` for at most `t_max` seconds, stopping at the first
    /// of `events`.
    pub fn propagate(
        &self,
        s0: &SatelliteState,
        law: &ControlLaw,
        t_max: f64,
        events: &[EventKind],
        direction: Direction,
    ) -> Result<Trajectory, PropagationError> {
        self.propagate_with_breakpoints(s0, law, t_max, events, direction, &[])
    }

    /// As [`Propagator::propagate`], restarting the integrator at each time in
    /// `breakpoints` so that no step straddles a kink of the control law.
    pub fn propagate_with_breakpoints(
        &self,
        s0: &SatelliteState,
        law: &ControlLaw,
        t_max: f64,
        events: &[EventKind],
        direction: Direction,
        breakpoints: &[f64],
    ) -> Result<Trajectory, PropagationError> {
        if !(t_max > 0.0) {
            return Err(PropagationError::Invalid("t_max must be positive"));
        }
        if !(s0.m > 0.0) {
            return Err(PropagationError::NonPositiveMass { t: 0.0 });
        }
        if s0.x.r.norm() < ORIGIN_GUARD {
            return Err(PropagationError::OriginSingularity { t: 0.0 });
        }
        let mu = self.constants.mu;
        let tau0 = law.thrust(0.0, s0, self.tau_bound);
        let first = Sample { t: 0.0, state: *s0, tau: tau0 };

        // A circular start is its own perigee at every instant.
        if events.contains(&EventKind::PerigeeMatch) {
            if let Ok((rp, ra)) = s0.x.perigee_apogee(mu) {
                if ra - rp <= 1e-6 {
                    return Ok(Trajectory {
                        samples: vec![first],
                        events: vec![(0.0, EventKind::PerigeeMatch)],
                        terminal_reason: TerminalReason::PerigeeMatch,
                        direction,
                    });
                }
            }
        }

        let scales = Scales::new(&self.constants, s0.m);
        let dynamics = ScaledDynamics {
            law,
            scales,
            tau_bound: self.tau_bound,
            beta_nd: self.beta * scales.time() / scales.mass,
            sign: direction.mass_sign(),
        };
        let perigee = PerigeeEvent;
        let radius = RadiusEvent;
        let mass = MassEvent { floor: self.m_dry / scales.mass };
        let mut active: Vec<(&dyn EventFunction<7>, EventKind)> = Vec::new();
        for &k in events {
            let e: &dyn EventFunction<7> = match k {
                EventKind::PerigeeMatch => &perigee,
                EventKind::AtmosphereCrossing => &radius,
                EventKind::MassFloor => &mass,
            };
            if !active.iter().any(|(_, kk)| *kk == k) {
                active.push((e, k));
            }
        }
        let fns: Vec<&dyn EventFunction<7>> = active.iter().map(|(e, _)| *e).collect();

        let solver = Dop853::new(self.tolerances.nondimensional(&scales));
        let t_scale = scales.time();
        let mut samples = Vec::new();
        let mut failure: Option<PropagationError> = None;
        let record = self.record;
        let guard = ORIGIN_GUARD / scales.length;
        let mut ends: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > 0.0 && b < t_max).collect();
        ends.sort_by(f64::total_cmp);
        ends.dedup();
        ends.push(t_max);
        let mut t0 = 0.0;
        let mut y0 = scales.to_nd(s0);
        let mut outcome = None;
        for (seg, &te) in ends.iter().enumerate() {
            let out = solver
                .integrate(&dynamics, t0, y0, te / t_scale, &fns, |t, y| {
                    let rn = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
                    if rn < guard {
                        failure = Some(PropagationError::OriginSingularity { t: t * t_scale });
                        return false;
                    }
                    if !(y[6] > 0.0) {
                        failure = Some(PropagationError::NonPositiveMass { t: t * t_scale });
                        return false;
                    }
                    if record && (seg == 0 || t > t0) {
                        let state = scales.from_nd(y);
                        let tau = dynamics.thrust_si(t, y);
                        samples.push(Sample { t: t * t_scale, state, tau });
                    }
                    true
                })
                .map_err(|e| match e {
                    IntegratorError::StepSizeUnderflow { t } => {
                        PropagationError::StepSizeUnderflow { t: t * t_scale }
                    }
                    other => PropagationError::Integrator(other.to_string()),
                })?;
            let done = out.event.is_some() || out.halted;
            t0 = out.t;
            y0 = out.y;
            outcome = Some(out);
            if done {
                break;
            }
        }
        let outcome = outcome.expect("at least one segment");
        if let Some(err) = failure {
            return Err(err);
        }
        let end_t = outcome.t * t_scale;
        let end_state = scales.from_nd(&outcome.y);
        if !record {
            samples.push(first);
            samples.push(Sample { t: end_t, state: end_state, tau: dynamics.thrust_si(outcome.t, &outcome.y) });
        }
        let (events, terminal_reason) = match outcome.event {
            Some(i) => (vec![(end_t, active[i].1)], active[i].1.into()),
            None => (Vec::new(), TerminalReason::TimeExhausted),
        };
        Ok(Trajectory { samples, events, terminal_reason, direction })
    }

    /// Propagates the drift alone, without mass.
    pub fn propagate_drift(&self, x0: &StateVector, t: f64) -> Result<StateVector, PropagationError> {
        let s0 = SatelliteState { x: *x0, m: 1.0 };
        let traj = self
            .clone()
            .with_record(false)
            .propagate(&s0, &ControlLaw::Zero, t, &[], Direction::Forward)?;
        Ok(traj.last().state.x)
    }
}

pub type AccelerationFn = Arc<dyn Fn(f64, &StateVector) -> Vec3 + Send + Sync>;

/// A control of the acceleration-bounded system `ẋ = f₀(x) + (0, u)`,
/// `‖u‖ ≤ eps`.
#[derive(Clone)]
pub struct NormalizedControl {
    pub eps: f64,
    pub law: AccelerationFn,
}

impl NormalizedControl {
    pub fn new<F>(eps: f64, f: F) -> Self
    where
        F: Fn(f64, &StateVector) -> Vec3 + Send + Sync + 'static,
    {
        Self { eps, law: Arc::new(f) }
    }

    pub fn zero() -> Self {
        Self::new(0.0, |_, _| Vec3::zeros())
    }

    /// `u(t, x)` projected onto the ball of radius `eps`.
    pub fn eval(&self, t: f64, x: &StateVector) -> Vec3 {
        let u = (self.law)(t, x);
        let n = u.norm();
        if n > self.eps && n > 0.0 {
            u * (self.eps / n)
        } else {
            u
        }
    }
}

/// Thrust law `τ = u·m` realizing an acceleration-bounded control on the
/// mass-varying system.
pub fn rescale_control(
    control: &NormalizedControl,
    m_i: f64,
    tau_bound: f64,
) -> Result<ControlLaw, PropagationError> {
    let required = control.eps * m_i;
    if tau_bound < required * (1.0 - THRUST_BOUND_SLACK) {
        return Err(PropagationError::BoundViolated { tau_bound, required });
    }
    let c = control.clone();
    Ok(ControlLaw::steering(move |t, s| c.eval(t, &s.x) * s.m))
}

struct NormalizedDynamics<'a> {
    control: &'a NormalizedControl,
    scales: Scales,
}

impl OdeSystem<6> for NormalizedDynamics<'_> {
    fn rhs(&self, t: f64, y: &[f64; 6], d: &mut [f64; 6]) {
        let (l, v) = (self.scales.length, self.scales.velocity);
        let x = StateVector {
            r: Vec3::new(y[0], y[1], y[2]) * l,
            v: Vec3::new(y[3], y[4], y[5]) * v,
        };
        let u = self.control.eval(t * self.scales.time(), &x) * (l / (v * v));
        let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        let k = 1.0 / (r2 * r2.sqrt());
        d[0] = y[3];
        d[1] = y[4];
        d[2] = y[5];
        d[3] = -k * y[0] + u.x;
        d[4] = -k * y[1] + u.y;
        d[5] = -k * y[2] + u.z;
    }
}

/// Trajectory of the acceleration-bounded system, sampled at accepted steps.
pub fn propagate_normalized(
    constants: &PhysicalConstants,
    x0: &StateVector,
    control: &NormalizedControl,
    t_max: f64,
    tolerances: &PropagatorTolerances,
) -> Result<Vec<(f64, StateVector)>, PropagationError> {
    let scales = Scales::new(constants, 1.0);
    let tol7 = tolerances.nondimensional(&scales);
    let tol = Tolerances { rtol: tol7.rtol, atol: [tol7.atol[0], tol7.atol[1], tol7.atol[2], tol7.atol[3], tol7.atol[4], tol7.atol[5]] };
    let solver = Dop853::new(tol);
    let sys = NormalizedDynamics { control, scales };
    let (l, v, ts) = (scales.length, scales.velocity, scales.time());
    let y0 = [x0.r.x / l, x0.r.y / l, x0.r.z / l, x0.v.x / v, x0.v.y / v, x0.v.z / v];
    let mut out = Vec::new();
    solver
        .integrate(&sys, 0.0, y0, t_max / ts, &[], |t, y| {
            out.push((
                t * ts,
                StateVector { r: Vec3::new(y[0], y[1], y[2]) * l, v: Vec3::new(y[3], y[4], y[5]) * v },
            ));
            true
        })
        .map_err(|e| PropagationError::Integrator(e.to_string()))?;
    Ok(out)
}
