use super::*;

fn eval_of(f: impl Fn(f64) -> f64) -> impl FnMut(f64, Phase) -> Result<Evaluation, LimitingError> {
    move |tau, phase| {
        Ok(Evaluation { phase, tau, s: f(tau), t_f: 0.0, converged: true, iterations: 0, warm_started: false })
    }
}

fn run(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<BisectionReport, LimitingError> {
    search(OcpKind::Oip, eval_of(f), lo, hi, tol, &LimitingSettings::default())
}

#[test]
fn linear_root() {
    let r = run(|t| 100.0 * (t - 8.052), 1.0, 50.0, 0.005).unwrap();
    assert!((r.bisection_midpoint - 8.052).abs() <= 0.0025);
    assert!(r.tolerance_achieved <= 0.005);
    assert!(r.s_at_tau_max.abs() <= 0.5);
    assert!((r.tau_max - 8.052).abs() <= 0.005);
    assert_eq!(r.expansions, 0);
    assert!(r.warnings.is_empty());
}

#[test]
fn brackets_keep_sign_structure() {
    let r = run(|t| (t - 3.3).powi(3) + 0.1 * (t - 3.3), 1.0, 50.0, 1e-4).unwrap();
    for b in &r.bracket_history {
        assert!(b.s_lo < 0.0 && b.s_hi > 0.0, "{b:?}");
        assert!(b.lo < b.hi);
    }
    let f = r.final_bracket();
    assert!(f.lo <= r.tau_max && r.tau_max <= f.hi);
}

#[test]
fn bisection_halves_and_count_is_bounded() {
    let (lo, hi, tol) = (1.0, 50.0, 0.01);
    let r = run(|t| t.ln() - 2.0, lo, hi, tol).unwrap();
    let bisect: Vec<&BracketStep> = r.bracket_history[..=r.count(Phase::Bisection)].iter().collect();
    for w in bisect.windows(2) {
        let (a, b) = (w[0].hi - w[0].lo, w[1].hi - w[1].lo);
        assert!((b - a / 2.0).abs() < 1e-12 * a);
    }
    let bound = r.expansions + ((hi - lo) / tol).log2().ceil() as usize + 2;
    assert!(r.count(Phase::Bracket) + r.count(Phase::Bisection) <= bound);
}

#[test]
fn expands_upward() {
    let r = run(|t| t - 120.0, 1.0, 50.0, 0.01).unwrap();
    assert_eq!(r.expansions, 2);
    assert_eq!(r.bracket_history[2].lo, 100.0);
    assert_eq!(r.bracket_history[2].hi, 200.0);
    assert!((r.tau_max - 120.0).abs() < 0.01);
}

#[test]
fn expands_downward() {
    let r = run(|t| t - 0.3, 1.0, 50.0, 0.001).unwrap();
    assert_eq!(r.expansions, 2);
    assert_eq!(r.bracket_history[2].hi, 0.5);
    assert!((r.tau_max - 0.3).abs() < 0.001);
}

#[test]
fn reports_missing_sign_change() {
    let e = run(|_| -1.0, 1.0, 50.0, 0.01).unwrap_err();
    match e {
        LimitingError::BracketFailure { expansions, hi, .. } => {
            assert_eq!(expansions, 10);
            assert_eq!(hi, 50.0 * 1024.0);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn rejects_bad_arguments() {
    assert!(matches!(run(|t| t, 5.0, 1.0, 0.1), Err(LimitingError::InvalidBracket { .. })));
    assert!(matches!(run(|t| t, 0.0, 1.0, 0.1), Err(LimitingError::InvalidBracket { .. })));
    assert!(matches!(run(|t| t, 1.0, 2.0, 0.0), Err(LimitingError::InvalidTolerance(_))));
}

#[test]
fn flags_non_monotone_samples() {
    // increasing overall, with a dip just above the first midpoint
    let r = run(|t| if (25.0..26.0).contains(&t) { -100.0 } else { t - 30.0 }, 1.0, 50.0, 0.5).unwrap();
    assert!(!r.warnings.is_empty());
}

#[test]
fn deterministic() {
    let f = |t: f64| (t / 7.0).sinh() - 1.0;
    assert_eq!(run(f, 1.0, 50.0, 0.005).unwrap(), run(f, 1.0, 50.0, 0.005).unwrap());
}

#[test]
fn polishing_reaches_target_on_curved_function() {
    let r = run(|t| 1e4 * (t.powi(3) - 500.0), 1.0, 50.0, 0.005).unwrap();
    assert!(r.s_at_tau_max.abs() <= 0.5, "{}", r.s_at_tau_max);
    assert!(r.count(Phase::Polish) > 0);
}

#[test]
fn polishing_can_be_disabled() {
    let settings = LimitingSettings { polish_tol: 0.0, ..Default::default() };
    let r = search(OcpKind::Dop, eval_of(|t| t - 2.0), 1.0, 4.0, 0.01, &settings).unwrap();
    assert_eq!(r.tau_max, r.bisection_midpoint);
    assert!(r.s_at_tau_max.is_nan());
    assert_eq!(r.count(Phase::Polish), 0);
}

#[test]
fn inner_failure_names_the_thrust() {
    let eval = |tau: f64, phase: Phase| {
        if tau > 20.0 {
            Err(LimitingError::InnerSolverFailure {
                tau,
                source: OcpError::InvalidThrust(tau),
            })
        } else {
            Ok(Evaluation { phase, tau, s: tau - 30.0, t_f: 0.0, converged: true, iterations: 0, warm_started: false })
        }
    };
    let e = search(OcpKind::Oip, eval, 1.0, 50.0, 0.01, &LimitingSettings::default()).unwrap_err();
    assert!(matches!(e, LimitingError::InnerSolverFailure { tau, .. } if tau == 50.0));
}
