//! Classical (COE) and modified equinoctial (MEOE) orbital elements and their
//! conversions to and from cartesian states.
//!
//! The MEOE parameter `p` is the semi-latus rectum in meters, `p = ‖h‖²/μ`.

use crate::astro::{StateVector, Vec3};
use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

/// Eccentricity and `sin i` below this make the COE chart singular.
pub const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementsError {
    #[error("classical elements are singular (e = {e:.3e}, sin i = {sin_i:.3e}); use equinoctial elements")]
    SingularElements { e: f64, sin_i: f64 },
    #[error("state is not on a periodic orbit")]
    NotPeriodic,
    #[error("W = 1 + ex cos l + ey sin l is not positive ({0})")]
    NonPositiveW(f64),
    #[error("invalid elements: {0}")]
    Invalid(&'static str),
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Smallest signed difference `a − b` modulo 2π, in `(−π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Classical orbital elements. Angles in radians, stored in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coe {
    /// Semi-major axis, m
    pub a: f64,
    pub e: f64,
    pub i: f64,
    /// Argument of perigee
    pub arg_perigee: f64,
    /// Right ascension of the ascending node
    pub raan: f64,
    pub true_anomaly: f64,
}

/// Modified equinoctial elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Meoe {
    /// Semi-latus rectum, m
    pub p: f64,
    pub ex: f64,
    pub ey: f64,
    pub hx: f64,
    pub hy: f64,
    /// True longitude, rad
    pub l: f64,
}

impl Meoe {
    pub fn eccentricity(&self) -> f64 {
        self.ex.hypot(self.ey)
    }

    pub fn w(&self) -> f64 {
        1.0 + self.ex * self.l.cos() + self.ey * self.l.sin()
    }

    /// Perigee distance of the orbit, `p/(1+e)`.
    pub fn perigee(&self) -> f64 {
        self.p / (1.0 + self.eccentricity())
    }

    pub fn is_valid(&self) -> bool {
        self.p > 0.0 && self.ex * self.ex + self.ey * self.ey < 1.0
    }
}

/// Classical elements of a periodic state.
pub fn coe_from_state(x: &StateVector, mu: f64) -> Result<Coe, ElementsError> {
    if !x.is_periodic(mu) {
        return Err(ElementsError::NotPeriodic);
    }
    let h = x.angular_momentum();
    let l = x.laplace_vector(mu);
    let e = l.norm() / mu;
    let hn = h.norm();
    let cos_i = (h.z / hn).clamp(-1.0, 1.0);
    let sin_i = (1.0 - cos_i * cos_i).sqrt();
    if e < SINGULAR_TOL || sin_i < SINGULAR_TOL {
        return Err(ElementsError::SingularElements { e, sin_i });
    }
    let a = -mu / (2.0 * x.specific_energy(mu));
    let node = Vec3::z().cross(&h);
    let raan = normalize_angle(node.y.atan2(node.x));

    let cos_w = (l.dot(&node) / (l.norm() * node.norm())).clamp(-1.0, 1.0);
    let mut arg_perigee = cos_w.acos();
    if l.z < 0.0 {
        arg_perigee = TAU - arg_perigee;
    }
    let cos_t = (l.dot(&x.r) / (l.norm() * x.r.norm())).clamp(-1.0, 1.0);
    let mut true_anomaly = cos_t.acos();
    if x.r.dot(&x.v) < 0.0 {
        true_anomaly = TAU - true_anomaly;
    }
    Ok(Coe {
        a,
        e,
        i: cos_i.acos(),
        arg_perigee: normalize_angle(arg_perigee),
        raan,
        true_anomaly: normalize_angle(true_anomaly),
    })
}

/// Cartesian state from classical elements (perifocal frame rotated by
/// `R₃(Ω) R₁(i) R₃(ω)`).
pub fn state_from_coe(c: &Coe, mu: f64) -> Result<StateVector, ElementsError> {
    if !(c.a > 0.0) || !(0.0..1.0).contains(&c.e) {
        return Err(ElementsError::Invalid("need a > 0 and 0 <= e < 1"));
    }
    let p = c.a * (1.0 - c.e * c.e);
    let (s, co) = c.true_anomaly.sin_cos();
    let rn = p / (1.0 + c.e * co);
    let r_pf = Vec3::new(rn * co, rn * s, 0.0);
    let k = (mu / p).sqrt();
    let v_pf = Vec3::new(-k * s, k * (c.e + co), 0.0);
    let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), c.raan)
        * Rotation3::from_axis_angle(&Vec3::x_axis(), c.i)
        * Rotation3::from_axis_angle(&Vec3::z_axis(), c.arg_perigee);
    Ok(StateVector { r: rot * r_pf, v: rot * v_pf })
}

pub fn meoe_from_coe(c: &Coe) -> Meoe {
    let lon_per = c.arg_perigee + c.raan;
    let t = (c.i / 2.0).tan();
    Meoe {
        p: c.a * (1.0 - c.e * c.e),
        ex: c.e * lon_per.cos(),
        ey: c.e * lon_per.sin(),
        hx: t * c.raan.cos(),
        hy: t * c.raan.sin(),
        l: normalize_angle(lon_per + c.true_anomaly),
    }
}

/// Unit vectors `f̂`, `ĝ` spanning the orbital plane in the equinoctial frame.
fn equinoctial_basis(hx: f64, hy: f64) -> (Vec3, Vec3) {
    let c = 1.0 + hx * hx + hy * hy;
    let f = Vec3::new(1.0 + hx * hx - hy * hy, 2.0 * hx * hy, -2.0 * hy) / c;
    let g = Vec3::new(2.0 * hx * hy, 1.0 - hx * hx + hy * hy, 2.0 * hx) / c;
    (f, g)
}

pub fn state_from_meoe(z: &Meoe, mu: f64) -> Result<StateVector, ElementsError> {
    if !z.is_valid() {
        return Err(ElementsError::Invalid("need p > 0 and ex^2 + ey^2 < 1"));
    }
    let w = z.w();
    if w <= 0.0 {
        return Err(ElementsError::NonPositiveW(w));
    }
    let (hx, hy) = (z.hx, z.hy);
    let c = 1.0 + hx * hx + hy * hy;
    let (sl, cl) = z.l.sin_cos();
    let rk = z.p / (c * w);
    let r = rk
        * Vec3::new(
            (1.0 + hx * hx - hy * hy) * cl + 2.0 * hx * hy * sl,
            (1.0 - hx * hx + hy * hy) * sl + 2.0 * hx * hy * cl,
            2.0 * hx * sl - 2.0 * hy * cl,
        );
    let vk = (mu / z.p).sqrt() / c;
    let (ecl, esl) = (z.ex + cl, z.ey + sl);
    let v = vk
        * Vec3::new(
            2.0 * hx * hy * ecl - (1.0 + hx * hx - hy * hy) * esl,
            -2.0 * hx * hy * esl + (1.0 - hx * hx + hy * hy) * ecl,
            2.0 * hx * ecl + 2.0 * hy * esl,
        );
    Ok(StateVector { r, v })
}

/// Equinoctial elements computed directly from `h` and `L`, valid for
/// circular and equatorial orbits (not for `i = π`).
pub fn meoe_from_state(x: &StateVector, mu: f64) -> Result<Meoe, ElementsError> {
    if !x.is_periodic(mu) {
        return Err(ElementsError::NotPeriodic);
    }
    let h = x.angular_momentum();
    let hn = h.norm();
    let w = h / hn;
    if 1.0 + w.z <= SINGULAR_TOL {
        return Err(ElementsError::SingularElements { e: x.eccentricity(mu), sin_i: 0.0 });
    }
    let hx = -w.y / (1.0 + w.z);
    let hy = w.x / (1.0 + w.z);
    let (f, g) = equinoctial_basis(hx, hy);
    let ev = x.laplace_vector(mu) / mu;
    Ok(Meoe {
        p: hn * hn / mu,
        ex: ev.dot(&f),
        ey: ev.dot(&g),
        hx,
        hy,
        l: normalize_angle(x.r.dot(&g).atan2(x.r.dot(&f))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::PhysicalConstants;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    const MU: f64 = PhysicalConstants::DEFAULT_MU;

    fn sample_coe() -> Coe {
        Coe { a: 7e6, e: 0.1, i: 0.5, arg_perigee: 1.0, raan: 2.0, true_anomaly: 0.3 }
    }

    fn rel(a: &StateVector, b: &StateVector) -> f64 {
        ((a.r - b.r).norm() / b.r.norm()).max((a.v - b.v).norm() / b.v.norm())
    }

    #[test]
    fn equatorial_circle_is_singular_for_coe() {
        let x = StateVector::new(Vec3::new(7e6, 0.0, 0.0), Vec3::new(0.0, (MU / 7e6).sqrt(), 0.0)).unwrap();
        assert!(matches!(coe_from_state(&x, MU), Err(ElementsError::SingularElements { .. })));
        let z = meoe_from_state(&x, MU).unwrap();
        assert!(z.ex.abs() < 1e-12 && z.ey.abs() < 1e-12);
        assert!(z.hx.abs() < 1e-15 && z.hy.abs() < 1e-15);
    }

    #[test]
    fn coe_roundtrip() {
        let c = sample_coe();
        let x = state_from_coe(&c, MU).unwrap();
        let back = coe_from_state(&x, MU).unwrap();
        assert_relative_eq!(back.a, c.a, max_relative = 1e-9);
        assert_relative_eq!(back.e, c.e, max_relative = 1e-9);
        assert!((back.i - c.i).abs() < 1e-9);
        assert!(angle_diff(back.arg_perigee, c.arg_perigee).abs() < 1e-9);
        assert!(angle_diff(back.raan, c.raan).abs() < 1e-9);
        assert!(angle_diff(back.true_anomaly, c.true_anomaly).abs() < 1e-9);
    }

    #[test]
    fn zero_anomaly_is_perigee() {
        let c = Coe { true_anomaly: 0.0, ..sample_coe() };
        let x = state_from_coe(&c, MU).unwrap();
        assert_relative_eq!(x.r.norm(), x.perigee(MU).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(x.r.norm(), c.a * (1.0 - c.e), max_relative = 1e-12);
    }

    #[test]
    fn perigee_apogee_from_planar_coe() {
        let c = Coe { a: 7e6, e: 0.1, i: 0.0, arg_perigee: 0.0, raan: 0.0, true_anomaly: 1.3 };
        let x = state_from_coe(&c, MU).unwrap();
        let (rp, ra) = x.perigee_apogee(MU).unwrap();
        assert_relative_eq!(rp, 7e6 * 0.9, max_relative = 1e-9);
        assert_relative_eq!(ra, 7e6 * 1.1, max_relative = 1e-9);
    }

    #[test]
    fn meoe_from_coe_special_cases() {
        let z = meoe_from_coe(&Coe { e: 0.0, ..sample_coe() });
        assert_eq!((z.ex, z.ey), (0.0, 0.0));
        let z = meoe_from_coe(&Coe { i: 0.0, ..sample_coe() });
        assert_eq!((z.hx, z.hy), (0.0, 0.0));
        let z = meoe_from_coe(&sample_coe());
        assert_relative_eq!(z.ex * z.ex + z.ey * z.ey, 0.01, max_relative = 1e-12);
    }

    #[test]
    fn meoe_composition_matches_coe_state() {
        let c = sample_coe();
        let x = state_from_coe(&c, MU).unwrap();
        let y = state_from_meoe(&meoe_from_coe(&c), MU).unwrap();
        assert!(rel(&y, &x) < 1e-9);
    }

    #[test]
    fn state_from_meoe_circular_equatorial() {
        let z = Meoe { p: 7e6, ex: 0.0, ey: 0.0, hx: 0.0, hy: 0.0, l: 0.0 };
        let x = state_from_meoe(&z, MU).unwrap();
        assert_relative_eq!(x.r, Vec3::new(7e6, 0.0, 0.0));
        assert_relative_eq!(x.v, Vec3::new(0.0, (MU / 7e6).sqrt(), 0.0));
    }

    #[test]
    fn state_from_meoe_is_periodic_in_l() {
        let z = meoe_from_coe(&sample_coe());
        let a = state_from_meoe(&z, MU).unwrap();
        let b = state_from_meoe(&Meoe { l: z.l + TAU, ..z }, MU).unwrap();
        assert!(rel(&a, &b) < 1e-14);
    }

    #[test]
    fn state_from_meoe_identities() {
        let z = Meoe { p: 6.8e6, ex: 0.05, ey: -0.03, hx: 0.2, hy: -0.4, l: 2.2 };
        let x = state_from_meoe(&z, MU).unwrap();
        assert_relative_eq!(x.angular_momentum().norm_squared() / MU, z.p, max_relative = 1e-9);
        assert_relative_eq!(x.eccentricity(MU), z.eccentricity(), max_relative = 1e-9);
        assert!(state_from_meoe(&Meoe { ex: 1.2, ..z }, MU).is_err());
    }

    #[test]
    fn oip_state_roundtrip() {
        let c = PhysicalConstants::earth();
        let x = StateVector::from_scalars_xy(c.r_e + 110_000.0, 7879.5, 5f64.to_radians()).unwrap();
        let y = state_from_meoe(&meoe_from_state(&x, MU).unwrap(), MU).unwrap();
        assert!(rel(&y, &x) < 1e-9);
    }

    #[test]
    fn polar_orbit_inclination_components() {
        let c = Coe { i: FRAC_PI_2, ..sample_coe() };
        let x = state_from_coe(&c, MU).unwrap();
        let z = meoe_from_state(&x, MU).unwrap();
        assert_relative_eq!(z.hx * z.hx + z.hy * z.hy, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn retrograde_equatorial_is_singular() {
        let c = Coe { i: PI, ..sample_coe() };
        let x = state_from_coe(&c, MU).unwrap();
        assert!(meoe_from_state(&x, MU).is_err());
    }
}
