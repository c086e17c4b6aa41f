//! Constants, state types, first integrals and orbit geometry of the
//! two-body problem, plus the classification of states into the periodic
//! sub-regions bounded by the atmosphere.
//!
//! Everything here is in SI units (m, s, kg, N).

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Relative size of `‖r × v‖` (w.r.t. `‖r‖‖v‖`) below which `r` and `v` are
/// treated as colinear.
pub const COLINEAR_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AstroError {
    #[error("state is not on a periodic (elliptic, non-colinear) orbit")]
    NotPeriodic,
    #[error("velocity is zero, flight path angle undefined")]
    ZeroVelocity,
    #[error("plane basis is not orthonormal")]
    DegenerateBasis,
    #[error("position is at the origin")]
    OriginSingularity,
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> AstroError {
    AstroError::InvalidParameter { field, reason: reason.into() }
}

/// Gravitational parameter, Earth and atmosphere radii, standard gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// m³/s²
    pub mu: f64,
    /// Earth radius, m
    pub r_e: f64,
    /// Radius of the top of the atmosphere, m
    pub r_c: f64,
    /// m/s²
    pub g0: f64,
}

impl PhysicalConstants {
    pub const DEFAULT_MU: f64 = 3.986_004_7e14;
    pub const DEFAULT_EARTH_RADIUS: f64 = 6_374_000.0;
    pub const DEFAULT_ATMOSPHERE_DEPTH: f64 = 90_000.0;
    pub const DEFAULT_G0: f64 = 9.8;

    pub fn new(mu: f64, r_e: f64, r_c: f64, g0: f64) -> Result<Self, AstroError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid("mu", "must be positive"));
        }
        if !(r_e > 0.0 && r_e.is_finite()) {
            return Err(invalid("r_e", "must be positive"));
        }
        if !(r_c > r_e && r_c.is_finite()) {
            return Err(invalid("r_c", "must exceed the Earth radius"));
        }
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(invalid("g0", "must be positive"));
        }
        Ok(Self { mu, r_e, r_c, g0 })
    }

    /// Earth with a 90 km atmosphere.
    pub fn earth() -> Self {
        Self {
            mu: Self::DEFAULT_MU,
            r_e: Self::DEFAULT_EARTH_RADIUS,
            r_c: Self::DEFAULT_EARTH_RADIUS + Self::DEFAULT_ATMOSPHERE_DEPTH,
            g0: Self::DEFAULT_G0,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::earth()
    }
}

/// Engine and vehicle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineParameters {
    /// Specific impulse, s
    pub isp: f64,
    /// Mass-flow coefficient `1/(isp·g0)`, s/m
    pub beta: f64,
    /// Bound on the thrust magnitude, N
    pub tau_bound: f64,
    /// Dry mass, kg
    pub m_dry: f64,
}

impl EngineParameters {
    pub fn new(isp: f64, g0: f64, tau_bound: f64, m_dry: f64) -> Result<Self, AstroError> {
        if !(isp > 0.0 && isp.is_finite()) {
            return Err(invalid("isp", "must be positive"));
        }
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(invalid("g0", "must be positive"));
        }
        if !(tau_bound >= 0.0 && tau_bound.is_finite()) {
            return Err(invalid("tau_bound", "must be non-negative"));
        }
        if !(m_dry > 0.0 && m_dry.is_finite()) {
            return Err(invalid("m_dry", "must be positive"));
        }
        Ok(Self { isp, beta: 1.0 / (isp * g0), tau_bound, m_dry })
    }

    pub fn with_thrust(self, tau_bound: f64) -> Self {
        Self { tau_bound, ..self }
    }
}

/// Position and velocity in the geocentric inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub r: Vec3,
    pub v: Vec3,
}

impl StateVector {
    pub fn new(r: Vec3, v: Vec3) -> Result<Self, AstroError> {
        if !(r.norm() > 0.0) || !r.iter().chain(v.iter()).all(|c| c.is_finite()) {
            return Err(AstroError::OriginSingularity);
        }
        Ok(Self { r, v })
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self {
            r: Vec3::new(y[0], y[1], y[2]),
            v: Vec3::new(y[3], y[4], y[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z]
    }

    /// `h = r × v`
    pub fn angular_momentum(&self) -> Vec3 {
        self.r.cross(&self.v)
    }

    /// `L = v × h − μ r/‖r‖`
    pub fn laplace_vector(&self, mu: f64) -> Vec3 {
        self.v.cross(&self.angular_momentum()) - mu * self.r / self.r.norm()
    }

    pub fn specific_energy(&self, mu: f64) -> f64 {
        0.5 * self.v.norm_squared() - mu / self.r.norm()
    }

    pub fn eccentricity(&self, mu: f64) -> f64 {
        self.laplace_vector(mu).norm() / mu
    }

    pub fn is_colinear(&self) -> bool {
        self.angular_momentum().norm() <= COLINEAR_TOL * self.r.norm() * self.v.norm()
    }

    /// Elliptic with nonzero angular momentum.
    pub fn is_periodic(&self, mu: f64) -> bool {
        !self.is_colinear() && self.specific_energy(mu) < 0.0
    }

    /// Perigee and apogee distances `(r_p, r_a)`.
    pub fn perigee_apogee(&self, mu: f64) -> Result<(f64, f64), AstroError> {
        if !self.is_periodic(mu) {
            return Err(AstroError::NotPeriodic);
        }
        let p = self.angular_momentum().norm_squared() / mu;
        let e = self.eccentricity(mu);
        Ok((p / (1.0 + e), p / (1.0 - e)))
    }

    pub fn perigee(&self, mu: f64) -> Result<f64, AstroError> {
        self.perigee_apogee(mu).map(|(rp, _)| rp)
    }

    pub fn semi_major_axis(&self, mu: f64) -> Result<f64, AstroError> {
        if !self.is_periodic(mu) {
            return Err(AstroError::NotPeriodic);
        }
        Ok(-mu / (2.0 * self.specific_energy(mu)))
    }

    /// Smallest period of the drift orbit through this state.
    pub fn orbital_period(&self, mu: f64) -> Result<f64, AstroError> {
        let a = self.semi_major_axis(mu)?;
        Ok(2.0 * PI * (a.powi(3) / mu).sqrt())
    }

    /// Angle between the velocity and the local horizontal plane, in
    /// `[−π/2, π/2]`.
    pub fn flight_path_angle(&self) -> Result<f64, AstroError> {
        let vn = self.v.norm();
        if vn == 0.0 {
            return Err(AstroError::ZeroVelocity);
        }
        let s = self.r.dot(&self.v) / (self.r.norm() * vn);
        Ok(s.clamp(-1.0, 1.0).asin())
    }

    /// Builds `r = ‖r‖ b₁`, `v = ‖v‖ (sin η b₁ + cos η b₂)`.
    pub fn from_scalars(
        rnorm: f64,
        vnorm: f64,
        eta: f64,
        basis: (Vec3, Vec3),
    ) -> Result<Self, AstroError> {
        if !(rnorm > 0.0 && rnorm.is_finite()) {
            return Err(invalid("rnorm", "must be positive"));
        }
        if !(vnorm > 0.0 && vnorm.is_finite()) {
            return Err(invalid("vnorm", "must be positive"));
        }
        if !(eta.abs() <= FRAC_PI_2) {
            return Err(invalid("eta", "must lie in [-pi/2, pi/2]"));
        }
        let (b1, b2) = basis;
        let tol = 1e-12;
        if (b1.norm() - 1.0).abs() > tol || (b2.norm() - 1.0).abs() > tol || b1.dot(&b2).abs() > tol
        {
            return Err(AstroError::DegenerateBasis);
        }
        Ok(Self {
            r: rnorm * b1,
            v: vnorm * (eta.sin() * b1 + eta.cos() * b2),
        })
    }

    /// Same as [`StateVector::from_scalars`] in the canonical xy plane.
    pub fn from_scalars_xy(rnorm: f64, vnorm: f64, eta: f64) -> Result<Self, AstroError> {
        Self::from_scalars(rnorm, vnorm, eta, (Vec3::x(), Vec3::y()))
    }

    pub fn rotated(&self, rot: &Rotation3<f64>) -> Self {
        Self { r: rot * self.r, v: rot * self.v }
    }

    pub fn classify(&self, constants: &PhysicalConstants) -> RegionClass {
        RegionClass::of(self, constants)
    }
}

/// State of the mass-varying system: position, velocity and mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub x: StateVector,
    /// kg
    pub m: f64,
}

impl SatelliteState {
    pub fn new(x: StateVector, m: f64) -> Result<Self, AstroError> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid("m", "mass must be positive"));
        }
        Ok(Self { x, m })
    }
}

/// Region of the state space a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionClass {
    /// `E ≥ 0`: parabolic or hyperbolic.
    NonElliptic,
    /// `h = 0`: position and velocity colinear.
    Colinear,
    /// Elliptic, above the atmosphere, perigee above the atmosphere.
    PPlus,
    /// Elliptic, above the atmosphere, perigee inside the atmosphere.
    PMinus,
    /// Elliptic but currently inside the atmosphere.
    PInsideAtmosphere,
}

impl RegionClass {
    pub fn of(x: &StateVector, constants: &PhysicalConstants) -> Self {
        let mu = constants.mu;
        if x.is_colinear() {
            return Self::Colinear;
        }
        if x.specific_energy(mu) >= 0.0 {
            return Self::NonElliptic;
        }
        if x.r.norm() <= constants.r_c {
            return Self::PInsideAtmosphere;
        }
        // periodic by the checks above
        let (rp, _) = x.perigee_apogee(mu).expect("periodic state");
        if rp > constants.r_c {
            Self::PPlus
        } else {
            Self::PMinus
        }
    }

    /// Member of the admissible region (elliptic, above the atmosphere).
    pub fn is_admissible(self) -> bool {
        matches!(self, Self::PPlus | Self::PMinus)
    }
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NonElliptic => "NonElliptic",
            Self::Colinear => "Colinear",
            Self::PPlus => "PPlus",
            Self::PMinus => "PMinus",
            Self::PInsideAtmosphere => "PInsideAtmosphere",
        };
        f.write_str(s)
    }
}
