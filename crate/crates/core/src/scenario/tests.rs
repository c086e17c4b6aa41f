use super::*;
use crate::astro::RegionClass;
use approx::assert_relative_eq;

const OIP: &str = r#"
kind = "oip"
name = "x_i"

[engine]
isp = "2000 s"
m_dry = "50 kg"

[initial]
mass = "150 kg"
scalars = { altitude = "110 km", v = "7879.5 m/s", eta = "5 deg" }

[bisection]
lo = "1 N"
hi = "50 N"
tol = "0.005 N"
"#;

fn field_of(e: ScenarioError) -> String {
    match e {
        ScenarioError::Field { field, .. } => field,
        other => panic!("expected a field error, got {other}"),
    }
}

#[test]
fn parses_units() {
    assert_eq!(parse_quantity("110 km", Dim::Length), Ok(110e3));
    assert_relative_eq!(parse_quantity("5 deg", Dim::Angle).unwrap(), 5f64.to_radians());
    assert_eq!(parse_quantity(" 2 h ", Dim::Time), Ok(7200.0));
    assert_eq!(parse_quantity("3.9860047e5 km^3/s^2", Dim::GravParam), Ok(3.9860047e14));
    assert!(parse_quantity("110", Dim::Length).is_err());
    assert!(parse_quantity("110 kg", Dim::Length).is_err());
    assert!(parse_quantity("abc km", Dim::Length).is_err());
}

#[test]
fn loads_insertion_scenario() {
    let sc = Scenario::from_toml(OIP).unwrap();
    assert_eq!(sc.kind, ProblemKind::Oip);
    assert_eq!(sc.initial_mass, Some(150.0));
    let x = sc.initial_state.unwrap();
    assert_relative_eq!(x.r.norm(), 6_374_000.0 + 110e3);
    assert_relative_eq!(x.v.norm(), 7879.5);
    assert_relative_eq!(x.flight_path_angle().unwrap(), 5f64.to_radians(), max_relative = 1e-12);
    assert_relative_eq!(sc.engine.beta, 1.0 / (2000.0 * 9.8));
    assert_eq!(x.classify(&sc.constants), RegionClass::PMinus);
    let ocp = sc.ocp_scenario().unwrap();
    assert_eq!(ocp.anchor_mass, 150.0);
    assert_eq!(sc.bisection.tol, 0.005);
}

#[test]
fn hash_tracks_text() {
    let a = Scenario::from_toml(OIP).unwrap();
    let b = Scenario::from_toml(&OIP.replace("x_i", "x_j")).unwrap();
    assert_eq!(a.hash.len(), 16);
    assert_ne!(a.hash, b.hash);
    assert_eq!(a.hash, Scenario::from_toml(OIP).unwrap().hash);
}

#[test]
fn rejects_unknown_keys() {
    let e = Scenario::from_toml(&OIP.replace("m_dry", "dry_mass")).unwrap_err();
    assert!(matches!(e, ScenarioError::Syntax(ref m) if m.contains("dry_mass")), "{e}");
}

#[test]
fn errors_name_the_field() {
    let cases = [
        (OIP.replace("\"2000 s\"", "\"fast\""), "engine.isp"),
        (OIP.replace("\"2000 s\"", "2000"), "engine.isp"),
        (OIP.replace("\"7879.5 m/s\"", "\"x m/s\""), "initial.scalars.v"),
        (OIP.replace("\"5 deg\"", "true"), "initial.scalars.eta"),
        (OIP.replace("\"150 kg\"", "\"150 N\""), "initial.mass"),
        (OIP.replace("\"0.005 N\"", "\"0 N\""), "bisection.tol"),
    ];
    for (text, field) in cases {
        assert_eq!(field_of(Scenario::from_toml(&text).unwrap_err()), field);
    }
}

#[test]
fn one_state_form_per_state() {
    let text = OIP.replace(
        "scalars = {",
        "cartesian = { r = [\"7000 km\", \"0 m\", \"0 m\"], v = [\"0 m/s\", \"7.5 km/s\", \"0 m/s\"] }\nscalars = {",
    );
    assert_eq!(field_of(Scenario::from_toml(&text).unwrap_err()), "initial");
}

#[test]
fn element_forms_match_conversions() {
    let mu = PhysicalConstants::earth().mu;
    let coe = Coe { a: 7.1e6, e: 0.02, i: 0.9, raan: 1.1, arg_perigee: 0.4, true_anomaly: 2.0 };
    let text = OIP.replace(
        "scalars = { altitude = \"110 km\", v = \"7879.5 m/s\", eta = \"5 deg\" }",
        "coe = { a = \"7100 km\", e = 0.02, i = \"0.9 rad\", raan = \"1.1 rad\", arg_perigee = \"0.4 rad\", true_anomaly = \"2 rad\" }",
    )
    .replace("kind = \"oip\"", "kind = \"classify\"");
    let x = Scenario::from_toml(&text).unwrap().initial_state.unwrap();
    let y = state_from_coe(&coe, mu).unwrap();
    assert!((y.r - x.r).norm() < 1e-6 && (y.v - x.v).norm() < 1e-9);

    let z = crate::elements::meoe_from_coe(&coe);
    let text = OIP
        .replace(
            "scalars = { altitude = \"110 km\", v = \"7879.5 m/s\", eta = \"5 deg\" }",
            &format!(
                "meoe = {{ p = \"{} m\", ex = {}, ey = {}, hx = {}, hy = {}, l = \"{} rad\" }}",
                z.p, z.ex, z.ey, z.hx, z.hy, z.l
            ),
        )
        .replace("kind = \"oip\"", "kind = \"classify\"");
    let w = Scenario::from_toml(&text).unwrap().initial_state.unwrap();
    assert!((w.r - x.r).norm() < 1e-6 && (w.v - x.v).norm() < 1e-9);
}

#[test]
fn on_orbit_points_share_the_orbit() {
    let text = OIP.replace(
        "scalars = { altitude = \"110 km\", v = \"7879.5 m/s\", eta = \"5 deg\" }",
        "on_orbit = { reference = { altitude = \"110 km\", v = \"7879.5 m/s\", eta = \"5 deg\" }, altitude = \"379494 m\" }",
    );
    let base = Scenario::from_toml(OIP).unwrap();
    let sc = Scenario::from_toml(&text).unwrap();
    let mu = sc.constants.mu;
    let (x0, x1) = (base.initial_state.unwrap(), sc.initial_state.unwrap());
    assert_relative_eq!(x1.r.norm(), 6_374_000.0 + 379_494.0);
    assert_relative_eq!(x1.specific_energy(mu), x0.specific_energy(mu), max_relative = 1e-12);
    assert_relative_eq!(x1.angular_momentum().norm(), x0.angular_momentum().norm(), max_relative = 1e-12);
    assert!(x1.flight_path_angle().unwrap() > 0.0);
}

#[test]
fn deorbit_needs_entry_state() {
    let text = r#"
kind = "dop"
[engine]
isp = "313 s"
m_dry = "60 t"
[initial]
mass = "95254.38 kg"
"#;
    assert_eq!(field_of(Scenario::from_toml(text).unwrap_err()), "final");
    let full = format!("{text}[final]\nscalars = {{ altitude = \"122 km\", v = \"7879.5 m/s\", eta = \"-15 deg\" }}\n");
    let sc = Scenario::from_toml(&full).unwrap();
    let ocp = sc.ocp_scenario().unwrap();
    assert_eq!(ocp.anchor.v, -sc.final_state.unwrap().v);
}

#[test]
fn propagate_needs_one_duration() {
    let text = OIP.replace("kind = \"oip\"", "kind = \"propagate\"");
    let both = format!("{text}[propagate]\nduration = \"100 s\"\nperiods = 1\n");
    assert_eq!(field_of(Scenario::from_toml(&both).unwrap_err()), "propagate");
    let ok = format!("{text}[propagate]\nperiods = 1\nstop_at = [\"perigee\"]\n");
    let sc = Scenario::from_toml(&ok).unwrap();
    assert_eq!(sc.propagate.stop_at, vec![StopEvent::Perigee]);
}
