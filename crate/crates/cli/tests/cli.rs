use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowthrust"))
        .args(args)
        .env_remove("LOWTHRUST_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn scenario(name: &str) -> String {
    scenarios().join(format!("{name}.toml")).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn classify_insertion_state() {
    let o = run(&["classify", &scenario("oip_x_i")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("initial: PMinus"), "{out}");
    assert!(out.contains("< r_c"), "{out}");
}

#[test]
fn every_bundled_scenario_validates() {
    let mut n = 0;
    for entry in std::fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let o = run(&["classify", path.to_str().unwrap()]);
            assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
            n += 1;
        }
    }
    assert!(n >= 8);
}

#[test]
fn propagate_one_period_returns_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["propagate", &scenario("propagate_circular"), "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["trajectory.csv", "r_rp.csv", "planar.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let traj = rows(&a.join("trajectory.csv"));
    let (first, last) = (&traj[0], traj.last().unwrap());
    let r0 = (first[1].powi(2) + first[2].powi(2) + first[3].powi(2)).sqrt();
    let dr = ((last[1] - first[1]).powi(2) + (last[2] - first[2]).powi(2) + (last[3] - first[3]).powi(2)).sqrt();
    assert!(dr < 1e-8 * r0, "{dr}");
    // circular to the 10 digits of the scenario speed; mass unchanged
    assert!((first[11] - r0).abs() < 1e-2 && (first[12] - r0).abs() < 1e-2);
    assert!(first[13] < 1e-9);
    assert_eq!(first[7], last[7]);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lowthrust"))
        .args(["path", &scenario("path_leo")])
        .env("LOWTHRUST_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let path = rows(&dir.path().join("path.csv"));
    assert_eq!(path.len(), 101);
    assert_eq!(path[0][0], 0.0);
    assert_eq!(path[100][0], 1.0);
}

#[test]
fn spiral_writes_samples() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spiral", &scenario("spiral_x_i"), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tau_bar"));
    let s = rows(&dir.path().join("spiral.csv"));
    assert_eq!(s.len(), 401);
    assert!(s.windows(2).all(|w| w[1][11] > w[0][11] && w[1][7] < w[0][7]));
}

#[test]
fn unknown_field_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "kind = \"propagate\"\n[initial]\nmass = \"1 kg\"\nscalars = { altitude = \"500 km\", v = \"7.6 km/s\", eta = \"0 deg\" }\n[propagate]\nperiodz = 1\n",
    )
    .unwrap();
    let o = run(&["propagate", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("periodz"), "{}", stderr(&o));
}

#[test]
fn bad_unit_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "kind = \"classify\"\n[initial]\nmass = \"1 kg\"\nscalars = { altitude = \"500 kg\", v = \"7.6 km/s\", eta = \"0 deg\" }\n",
    )
    .unwrap();
    let o = run(&["classify", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("altitude"), "{}", stderr(&o));
}

#[test]
fn missing_scenario_file() {
    let o = run(&["classify", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
}
