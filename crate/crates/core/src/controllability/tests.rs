use super::*;
use crate::propagator::integrator::{Dop853, OdeSystem, Tolerances};
use approx::assert_relative_eq;

fn consts() -> PhysicalConstants {
    PhysicalConstants::earth()
}

fn x_i() -> StateVector {
    let c = consts();
    StateVector::from_scalars_xy(c.r_e + 110e3, 7879.5, 5f64.to_radians()).unwrap()
}

fn engine() -> EngineParameters {
    EngineParameters::new(300.0, 9.8, 10.0, 100.0).unwrap()
}

fn circular(alt: f64) -> StateVector {
    let c = consts();
    let r = c.r_e + alt;
    StateVector { r: Vec3::new(r, 0.0, 0.0), v: Vec3::new(0.0, (c.mu / r).sqrt(), 0.0) }
}

#[test]
fn linearization_matches_finite_differences() {
    let mu = consts().mu;
    let x = StateVector { r: Vec3::new(6.9e6, 1.2e6, -3e5), v: Vec3::new(-900.0, 7400.0, 600.0) };
    let p = linearize(&x, mu).unwrap();
    let f = |y: &[f64; 6]| {
        let r = Vec3::new(y[0], y[1], y[2]);
        let g = -mu / r.norm().powi(3) * r;
        [y[3], y[4], y[5], g.x, g.y, g.z]
    };
    let y0 = x.to_array();
    for j in 0..6 {
        let h = if j < 3 { 1.0 } else { 1e-3 };
        let (mut yp, mut ym) = (y0, y0);
        yp[j] += h;
        ym[j] -= h;
        let (fp, fm) = (f(&yp), f(&ym));
        for i in 0..6 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!((fd - p.a[(i, j)]).abs() <= 1e-9 * (1.0 + fd.abs()), "A[{i},{j}]");
        }
    }
    assert_eq!(p.b.fixed_view::<3, 3>(0, 0), Matrix3::zeros());
    assert_eq!(p.b.fixed_view::<3, 3>(3, 0), Matrix3::identity());
}

#[test]
fn rank_is_full_away_from_origin() {
    let mu = consts().mu;
    assert_eq!(rank_condition(&x_i(), mu).unwrap(), 6);
    assert_eq!(rank_condition(&circular(500e3), mu).unwrap(), 6);
    let origin = StateVector { r: Vec3::zeros(), v: Vec3::new(1.0, 0.0, 0.0) };
    assert_eq!(rank_condition(&origin, mu), Err(ControllabilityError::OriginSingularity));
}

#[test]
fn numerical_rank_threshold() {
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-7, 1e-9]));
    assert_eq!(numerical_rank(&m), 2);
    assert_eq!(numerical_rank(&DMatrix::zeros(3, 4)), 0);
}

#[test]
fn path_endpoints_and_admissibility() {
    let c = consts();
    let xa = circular(300e3);
    let xb = StateVector::from_scalars_xy(c.r_e + 900e3, 7450.0, 1f64.to_radians()).unwrap();
    for mode in [PathMode::AdmissibleA, PathMode::StablePPlus] {
        let path = meoe_path(&xa, &xb, mode, 41, &c).unwrap();
        assert_eq!(path.len(), 41);
        assert!((path[0].r - xa.r).norm() < 1e-6 && (path[0].v - xa.v).norm() < 1e-9);
        let last = path.last().unwrap();
        assert!((last.r - xb.r).norm() < 1e-6 && (last.v - xb.v).norm() < 1e-9);
        for x in &path {
            let class = x.classify(&c);
            match mode {
                PathMode::AdmissibleA => assert!(class.is_admissible()),
                PathMode::StablePPlus => assert_eq!(class, RegionClass::PPlus),
            }
        }
    }
}

#[test]
fn admissible_path_radius_is_affine() {
    let c = consts();
    let (xa, xb) = (x_i(), circular(700e3));
    let path = meoe_path(&xa, &xb, PathMode::AdmissibleA, 11, &c).unwrap();
    let (ra, rb) = (xa.r.norm(), xb.r.norm());
    for (k, x) in path.iter().enumerate() {
        let lam = k as f64 / 10.0;
        assert_relative_eq!(x.r.norm(), (1.0 - lam) * ra + lam * rb, max_relative = 1e-12);
    }
}

#[test]
fn stable_path_rejects_pminus_endpoint() {
    let c = consts();
    let err = meoe_path(&x_i(), &circular(500e3), PathMode::StablePPlus, 5, &c).unwrap_err();
    assert_eq!(err, ControllabilityError::EndpointOutsideRegion { which: "initial", class: RegionClass::PMinus });
}

struct Kinematics(Spiral);

impl OdeSystem<3> for Kinematics {
    fn rhs(&self, _t: f64, y: &[f64; 3], d: &mut [f64; 3]) {
        let r = Vec3::new(y[0], y[1], y[2]);
        let rn = r.norm();
        let rh = r / rn;
        let th = self.0.e1.cross(&self.0.e2).cross(&rh);
        let v = self.0.c0 / (2.0 * rn).sqrt() * (self.0.a * rh + self.0.b * th);
        d.copy_from_slice(v.as_slice());
    }
}

#[test]
fn spiral_closed_forms_match_integration() {
    let c = consts();
    for (a, b) in [(1.0, 1.0), (0.3, 1.2)] {
        let sp = Spiral::new(&x_i(), c.mu, a, b).unwrap();
        let solver = Dop853::new(Tolerances::uniform(1e-13, 1e-6));
        let mut y = [sp.e1.x * sp.r_i, sp.e1.y * sp.r_i, sp.e1.z * sp.r_i];
        let mut t = 0.0;
        for k in 1..=10 {
            let t1 = 300.0 * k as f64;
            y = solver.integrate(&Kinematics(sp), t, y, t1, &[], |_, _| true).unwrap().y;
            t = t1;
            let x = sp.state(t);
            let r = Vec3::new(y[0], y[1], y[2]);
            assert!((r - x.r).norm() / x.r.norm() < 1e-10, "a={a} t={t}");
            let theta = sp.e2.dot(&r).atan2(sp.e1.dot(&r));
            assert!(angle_diff(theta, sp.theta(t)).abs() < 1e-8, "a={a} t={t}");
        }
    }
}

#[test]
fn spiral_acceleration_matches_finite_differences() {
    let c = consts();
    let sp = Spiral::new(&x_i(), c.mu, 0.7, 1.1).unwrap();
    for t in [0.0, 500.0, 4000.0] {
        let h = 1e-2;
        let vdot = (sp.state(t + h).v - sp.state((t - h).max(0.0)).v) / if t == 0.0 { h } else { 2.0 * h };
        let r = sp.state(t).r;
        let u = vdot + c.mu * r / r.norm().powi(3);
        let tol = if t == 0.0 { 1e-4 } else { 1e-7 };
        assert!((u - sp.control_acceleration(t)).norm() < tol * u.norm(), "t={t}");
    }
}

#[test]
fn spiral_integrals() {
    let c = consts();
    let sp = Spiral::new(&x_i(), c.mu, 1.0, 1.0).unwrap();
    let (lr, lt) = sp.laplace_components();
    assert_relative_eq!(lr, sp.c0 * sp.c0 / 2.0 - c.mu);
    for t in [0.0, 1000.0, 20000.0] {
        let x = sp.state(t);
        assert_relative_eq!(x.angular_momentum().norm(), sp.angular_momentum_norm(t), max_relative = 1e-12);
        let l = x.laplace_vector(c.mu);
        let rh = x.r / x.r.norm();
        let th = (x.angular_momentum() / x.angular_momentum().norm()).cross(&rh);
        assert_relative_eq!(l.dot(&rh), lr, max_relative = 1e-10);
        assert_relative_eq!(l.dot(&th), lt, max_relative = 1e-10);
    }
}

#[test]
fn spiral_reaches_pplus_with_increasing_perigee() {
    let c = consts();
    let res = spiral_construct(&x_i(), 1000.0, &engine(), &c, &SpiralOptions::default()).unwrap();
    assert_eq!(res.samples.first().unwrap().t, 0.0);
    assert_relative_eq!(res.samples.last().unwrap().t, res.duration);
    for w in res.samples.windows(2) {
        assert!(w[1].rp > w[0].rp);
        assert!(w[1].m < w[0].m);
    }
    assert!(res.terminal.x.perigee(c.mu).unwrap() > c.r_c);
    assert_eq!(res.terminal.x.classify(&c), RegionClass::PPlus);
    assert!(res.tau_bar.is_finite() && res.tau_bar > 0.0);
    assert_relative_eq!(res.c1, res.samples[0].rp / x_i().r.norm().sqrt());
}

#[test]
fn spiral_mass_matches_rocket_equation_form() {
    let c = consts();
    let res = spiral_construct(&x_i(), 1000.0, &engine(), &c, &SpiralOptions { samples: 2001, ..Default::default() })
        .unwrap();
    let sp = Spiral::new(&x_i(), c.mu, 1.0, 1.0).unwrap();
    // ln(m_i/m) = β ∫‖u‖ dt, Simpson on the sample grid
    let n = res.samples.len() - 1;
    let h = res.duration / n as f64;
    let integral: f64 = (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            w * sp.control_acceleration(k as f64 * h).norm()
        })
        .sum::<f64>()
        * h
        / 3.0;
    let m = res.samples.last().unwrap().m;
    assert_relative_eq!((1000.0 / m).ln(), engine().beta * integral, max_relative = 1e-8);
}

#[test]
fn matching_weights_reproduce_initial_velocity() {
    let c = consts();
    let opts = SpiralOptions::matching(&x_i()).unwrap();
    let sp = Spiral::new(&x_i(), c.mu, opts.a_i, opts.b_i).unwrap();
    assert!((sp.state(0.0).v - x_i().v).norm() < 1e-9);
    // the default weights keep the speed but not the direction
    let sp1 = Spiral::new(&x_i(), c.mu, 1.0, 1.0).unwrap();
    assert_relative_eq!(sp1.state(0.0).v.norm(), x_i().v.norm(), max_relative = 1e-14);
}

#[test]
fn spiral_preconditions() {
    let c = consts();
    let e = engine();
    let o = SpiralOptions::default();
    assert_eq!(
        spiral_construct(&circular(500e3), 1000.0, &e, &c, &o).unwrap_err(),
        ControllabilityError::NotInPMinus(RegionClass::PPlus)
    );
    let still = StateVector { r: Vec3::new(c.r_c + 1e5, 0.0, 0.0), v: Vec3::zeros() };
    assert_eq!(spiral_construct(&still, 1000.0, &e, &c, &o).unwrap_err(), ControllabilityError::ZeroVelocity);
}

#[test]
fn local_steer_reaches_nearby_target() {
    let c = consts();
    let xbar = circular(500e3);
    let (l, v) = (c.r_c, (c.mu / c.r_c).sqrt());
    let target = StateVector {
        r: xbar.r + Vec3::new(0.6e-3 * l, 0.0, 0.3e-3 * l),
        v: xbar.v + Vec3::new(0.0, -0.5e-3 * v, 0.2e-3 * v),
    };
    let res = verify_local_steer(&xbar, &target, 1.0, &c).unwrap();
    assert!(res.success, "{} vs {}", res.miss, res.initial_offset);
    assert!(res.gramian_min_eigenvalue > 0.0);
    assert_relative_eq!(res.period, xbar.orbital_period(c.mu).unwrap(), max_relative = 1e-12);
    assert!(res.max_control < 1.0);
}

#[test]
fn local_steer_miss_is_second_order() {
    let c = consts();
    let xbar = StateVector::from_scalars_xy(c.r_c + 800e3, 7500.0, 2f64.to_radians()).unwrap();
    let miss = |k: f64| {
        let target = StateVector {
            r: xbar.r + Vec3::new(k * 3e3, k * 2e3, k * -1e3),
            v: xbar.v + Vec3::new(k * 2.0, 0.0, k * 1.5),
        };
        let r = verify_local_steer(&xbar, &target, 10.0, &c).unwrap();
        r.miss / r.initial_offset
    };
    let (m1, m2) = (miss(0.5), miss(1.0));
    assert!(m1 < 0.1 && m2 < 0.1);
    assert!((m2 / m1 - 2.0).abs() < 0.5, "{m1} {m2}");
}

#[test]
fn local_steer_needs_pplus_reference() {
    let c = consts();
    let err = verify_local_steer(&x_i(), &x_i(), 1.0, &c).unwrap_err();
    assert_eq!(err, ControllabilityError::NotInPPlus(RegionClass::PMinus));
}
