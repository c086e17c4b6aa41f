//! CSV and line-delimited JSON artifacts.
//!
//! Numbers are written with 15 significant digits in scientific notation so
//! that reruns produce identical bytes.

use crate::astro::{StateVector, Vec3};
use crate::controllability::SpiralResult;
use crate::ocp::OcpSolution;
use crate::propagator::Trajectory;
use serde::Serialize;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use thiserror::Error;

pub const TRAJECTORY_HEADER: &str = "t,rx,ry,rz,vx,vy,vz,m,taux,tauy,tauz,rp,ra,e,E";

#[derive(Debug, Error, PartialEq)]
pub enum ExportError {
    #[error("artifact has no trajectory samples")]
    MissingTrajectory,
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.14e}")
    }
}

fn push_row(out: &mut String, cols: &[f64]) {
    let row: Vec<String> = cols.iter().map(|&x| num(x)).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

/// `(r_p, r_a, e, E)`; `r_a` is NaN unless the orbit is elliptic.
pub fn orbit_columns(x: &StateVector, mu: f64) -> [f64; 4] {
    let e = x.eccentricity(mu);
    let energy = x.specific_energy(mu);
    let p = x.angular_momentum().norm_squared() / mu;
    let rp = if x.is_colinear() { f64::NAN } else { p / (1.0 + e) };
    let ra = if x.is_periodic(mu) { p / (1.0 - e) } else { f64::NAN };
    [rp, ra, e, energy]
}

/// One CSV row per `(t, state, mass, thrust)`.
pub fn rows_csv<'a>(rows: impl IntoIterator<Item = (f64, &'a StateVector, f64, Vec3)>, mu: f64) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for (t, x, m, tau) in rows {
        let o = orbit_columns(x, mu);
        push_row(
            &mut out,
            &[t, x.r.x, x.r.y, x.r.z, x.v.x, x.v.y, x.v.z, m, tau.x, tau.y, tau.z, o[0], o[1], o[2], o[3]],
        );
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory, mu: f64) -> String {
    rows_csv(traj.samples.iter().map(|s| (s.t, &s.state.x, s.state.m, s.tau)), mu)
}

pub fn spiral_csv(res: &SpiralResult, mu: f64) -> String {
    let states: Vec<StateVector> = res.samples.iter().map(|s| StateVector { r: s.r, v: s.v }).collect();
    rows_csv(res.samples.iter().zip(&states).map(|(s, x)| (s.t, x, s.m, s.tau)), mu)
}

/// Path samples carry no time or mass: `t` is the path parameter `λ` and
/// the mass column is NaN.
pub fn path_csv(path: &[StateVector], mu: f64) -> String {
    let n = path.len().saturating_sub(1).max(1) as f64;
    rows_csv(path.iter().enumerate().map(|(k, x)| (k as f64 / n, x, f64::NAN, Vec3::zeros())), mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    RAndRpVsTime,
    PlanarTrajectory,
}

/// Plot-ready data for a trajectory.
///
/// `RAndRpVsTime` gives `t,r,rp,rc`. `PlanarTrajectory` gives
/// `series,x,y`: the trajectory in the plane of its initial angular
/// momentum, with `x` along the initial position, followed by `circle_points`
/// samples of the atmosphere boundary.
pub fn figure_data(
    traj: &Trajectory,
    kind: FigureKind,
    mu: f64,
    r_c: f64,
    circle_points: usize,
) -> Result<String, ExportError> {
    if traj.samples.is_empty() {
        return Err(ExportError::MissingTrajectory);
    }
    let mut out = String::new();
    match kind {
        FigureKind::RAndRpVsTime => {
            out.push_str("t,r,rp,rc\n");
            for s in &traj.samples {
                let rp = orbit_columns(&s.state.x, mu)[0];
                push_row(&mut out, &[s.t, s.state.x.r.norm(), rp, r_c]);
            }
        }
        FigureKind::PlanarTrajectory => {
            let x0 = &traj.first().state.x;
            let e1 = x0.r / x0.r.norm();
            let h = x0.angular_momentum();
            let e2 = if h.norm() > 0.0 { (h / h.norm()).cross(&e1) } else { e1.cross(&Vec3::z()).normalize() };
            out.push_str("series,x,y\n");
            for s in &traj.samples {
                let r = s.state.x.r;
                let _ = writeln!(out, "trajectory,{},{}", num(r.dot(&e1)), num(r.dot(&e2)));
            }
            for k in 0..circle_points {
                let a = TAU * k as f64 / circle_points as f64;
                let _ = writeln!(out, "atmosphere,{},{}", num(r_c * a.cos()), num(r_c * a.sin()));
            }
        }
    }
    Ok(out)
}

/// One line of the solution summary log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRecord {
    pub scenario: String,
    pub scenario_hash: String,
    pub kind: String,
    pub tau: f64,
    pub t_f: f64,
    pub terminal_rp: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SummaryRecord {
    pub fn from_solution(scenario: &str, hash: &str, sol: &OcpSolution) -> Self {
        Self {
            scenario: scenario.to_string(),
            scenario_hash: hash.to_string(),
            kind: sol.kind.to_string(),
            tau: sol.tau,
            t_f: sol.t_f,
            terminal_rp: sol.terminal_rp,
            converged: sol.converged,
            iterations: sol.diagnostics.iterations,
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::{PhysicalConstants, SatelliteState};
    use crate::propagator::{Direction, Sample, TerminalReason};

    fn circular_traj() -> (Trajectory, PhysicalConstants) {
        let c = PhysicalConstants::earth();
        let r = c.r_c + 400e3;
        let v = (c.mu / r).sqrt();
        let samples = (0..4)
            .map(|k| {
                let a = k as f64 * 0.3;
                let x = StateVector {
                    r: r * Vec3::new(a.cos(), a.sin(), 0.0),
                    v: v * Vec3::new(-a.sin(), a.cos(), 0.0),
                };
                Sample { t: a * r / v, state: SatelliteState { x, m: 100.0 }, tau: Vec3::zeros() }
            })
            .collect();
        let traj = Trajectory {
            samples,
            events: vec![],
            terminal_reason: TerminalReason::TimeExhausted,
            direction: Direction::Forward,
        };
        (traj, c)
    }

    #[test]
    fn trajectory_csv_layout() {
        let (traj, c) = circular_traj();
        let csv = trajectory_csv(&traj, c.mu);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 5);
        let cols: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(cols.len(), 15);
        assert!((cols[11] - (c.r_c + 400e3)).abs() < 1e-6);
        assert!((cols[12] - cols[11]).abs() < 1e-6);
        assert!(cols[13] < 1e-12);
        // 15 significant digits
        assert_eq!(lines[1].split(',').nth(1).unwrap().split('e').next().unwrap().len(), 16);
    }

    #[test]
    fn apogee_is_nan_when_not_elliptic() {
        let x = StateVector { r: Vec3::new(7e6, 0.0, 0.0), v: Vec3::new(0.0, 12e3, 0.0) };
        let o = orbit_columns(&x, PhysicalConstants::earth().mu);
        assert!(o[0].is_finite() && o[1].is_nan() && o[3] > 0.0);
    }

    #[test]
    fn circular_figure_columns_are_constant() {
        let (traj, c) = circular_traj();
        let csv = figure_data(&traj, FigureKind::RAndRpVsTime, c.mu, c.r_c, 0).unwrap();
        for line in csv.lines().skip(1) {
            let cols: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert!((cols[1] - cols[2]).abs() < 1e-6);
            assert_eq!(cols[3], c.r_c);
        }
    }

    #[test]
    fn planar_figure_has_circle() {
        let (traj, c) = circular_traj();
        let csv = figure_data(&traj, FigureKind::PlanarTrajectory, c.mu, c.r_c, 8).unwrap();
        assert_eq!(csv.lines().filter(|l| l.starts_with("trajectory")).count(), 4);
        assert_eq!(csv.lines().filter(|l| l.starts_with("atmosphere")).count(), 8);
        let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert!(first[2].parse::<f64>().unwrap().abs() < 1e-6);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let (mut traj, c) = circular_traj();
        traj.samples.clear();
        assert_eq!(
            figure_data(&traj, FigureKind::RAndRpVsTime, c.mu, c.r_c, 0),
            Err(ExportError::MissingTrajectory)
        );
    }
}
