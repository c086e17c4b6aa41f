use clap::{Parser, Subcommand};
use lowthrust::astro::{PhysicalConstants, SatelliteState, StateVector};
use lowthrust::controllability::{meoe_path, spiral_construct};
use lowthrust::elements::{coe_from_state, meoe_from_state};
use lowthrust::export::{
    figure_data, path_csv, spiral_csv, trajectory_csv, FigureKind, SummaryRecord,
};
use lowthrust::limiting::{find_tau_max_with, BisectionReport, Phase};
use lowthrust::ocp::{solve_ocp, OcpKind, OcpSolution};
use lowthrust::propagator::{ControlLaw, Direction, EventKind, Propagator};
use lowthrust::scenario::{ProblemKind, Scenario, Steering, StopEvent};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Total vacuum thrust of the two orbiter OMS engines, N.
const OMS_TOTAL_THRUST: f64 = 53_378.6;
const CIRCLE_POINTS: usize = 361;

#[derive(Parser)]
#[command(name = "lowthrust", version, about = "Bounded-thrust orbit insertion and de-orbit analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long, env = "LOWTHRUST_OUTPUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Region, energy, eccentricity, perigee, apogee and period of the scenario states.
    Classify(Common),
    /// Classical and modified equinoctial elements of the scenario states.
    Elements(Common),
    /// Propagate the initial state and write the trajectory CSV.
    Propagate(Common),
    /// Outward spiral from the initial state; writes samples and the thrust bound.
    Spiral(Common),
    /// Element-space path between the initial and final states.
    Path(Common),
    /// Solve the perigee-maximizing control problem at one thrust level.
    Ocp {
        #[command(flatten)]
        common: Common,
        /// Thrust magnitude, N (default: `ocp.tau`, then `engine.thrust`).
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Find the limiting thrust by bisection on the shooting function.
    TauMax {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Also solve at τ_max and τ_max ± OFFSET N and write their figure data.
        #[arg(long, value_name = "OFFSET")]
        figures: Option<f64>,
    },
}

enum Failure {
    Validation(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Solver(_) | Failure::Io(_) => 3,
        }
    }
}

fn validation(e: impl Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn solver(e: impl Display) -> Failure {
    Failure::Solver(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Validation(m) => format!("invalid scenario: {m}"),
                Failure::Solver(m) => format!("solver failure: {m}"),
                Failure::Io(m) => format!("i/o error: {m}"),
            };
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn load(common: &Common) -> Result<(Scenario, PathBuf), Failure> {
    let sc = Scenario::load(&common.scenario).map_err(validation)?;
    let dir = common
        .out
        .clone()
        .or_else(|| sc.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
    Ok((sc, dir))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn states(sc: &Scenario) -> Vec<(&'static str, StateVector)> {
    let mut v = Vec::new();
    if let Some(x) = sc.initial_state {
        v.push(("initial", x));
    }
    if let Some(x) = sc.final_state {
        v.push(("final", x));
    }
    v
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Classify(c) => classify(&load(&c)?.0),
        Command::Elements(c) => elements(&load(&c)?.0),
        Command::Propagate(c) => {
            let (sc, dir) = load(&c)?;
            propagate(&sc, &dir)
        }
        Command::Spiral(c) => {
            let (sc, dir) = load(&c)?;
            spiral(&sc, &dir)
        }
        Command::Path(c) => {
            let (sc, dir) = load(&c)?;
            path(&sc, &dir)
        }
        Command::Ocp { common, tau } => {
            let (sc, dir) = load(&common)?;
            ocp(&sc, &dir, tau)
        }
        Command::TauMax { common, lo, hi, tol, figures } => {
            let (sc, dir) = load(&common)?;
            tau_max(&sc, &dir, lo, hi, tol, figures)
        }
    }
}

fn classify(sc: &Scenario) -> Result<(), Failure> {
    let c = &sc.constants;
    for (label, x) in states(sc) {
        let class = x.classify(c);
        println!("{label}: {class}");
        println!("  E   = {:.9e} m^2/s^2", x.specific_energy(c.mu));
        println!("  e   = {:.9}", x.eccentricity(c.mu));
        match x.perigee_apogee(c.mu) {
            Ok((rp, ra)) => {
                let rel = if rp < c.r_c { "<" } else { ">" };
                println!("  r_p = {rp:.3} m ({rel} r_c = {:.0} m)", c.r_c);
                println!("  r_a = {ra:.3} m");
                println!("  t_p = {:.3} s", x.orbital_period(c.mu).map_err(validation)?);
            }
            Err(_) => println!("  not periodic"),
        }
    }
    Ok(())
}

fn elements(sc: &Scenario) -> Result<(), Failure> {
    let mu = sc.constants.mu;
    for (label, x) in states(sc) {
        println!("{label}:");
        match coe_from_state(&x, mu) {
            Ok(k) => println!(
                "  coe:  a = {:.3} m, e = {:.9}, i = {:.9} rad, raan = {:.9} rad, arg_perigee = {:.9} rad, true_anomaly = {:.9} rad",
                k.a, k.e, k.i, k.raan, k.arg_perigee, k.true_anomaly
            ),
            Err(e) => println!("  coe:  {e}"),
        }
        match meoe_from_state(&x, mu) {
            Ok(z) => println!(
                "  meoe: p = {:.3} m, ex = {:.9}, ey = {:.9}, hx = {:.9}, hy = {:.9}, l = {:.9} rad",
                z.p, z.ex, z.ey, z.hx, z.hy, z.l
            ),
            Err(e) => println!("  meoe: {e}"),
        }
    }
    Ok(())
}

fn initial_sat(sc: &Scenario) -> Result<SatelliteState, Failure> {
    let x = sc.initial_state.ok_or_else(|| validation("initial: missing"))?;
    let m = sc.initial_mass.ok_or_else(|| validation("initial.mass: missing"))?;
    Ok(SatelliteState { x, m })
}

fn write_figures(dir: &Path, prefix: &str, traj: &lowthrust::propagator::Trajectory, c: &PhysicalConstants) -> Result<(), Failure> {
    let fig = |k| figure_data(traj, k, c.mu, c.r_c, CIRCLE_POINTS).map_err(solver);
    write(dir, &format!("{prefix}r_rp.csv"), &fig(FigureKind::RAndRpVsTime)?)?;
    write(dir, &format!("{prefix}planar.csv"), &fig(FigureKind::PlanarTrajectory)?)
}

fn propagate(sc: &Scenario, dir: &Path) -> Result<(), Failure> {
    let c = sc.constants;
    let s0 = initial_sat(sc)?;
    let p = &sc.propagate;
    let t = match (p.duration, p.periods) {
        (Some(d), _) => d,
        (None, Some(n)) => n * s0.x.orbital_period(c.mu).map_err(|e| validation(format!("propagate.periods: {e}")))?,
        _ => return Err(validation("propagate: missing")),
    };
    let bound = sc.engine.tau_bound;
    let law = if bound == 0.0 {
        ControlLaw::Zero
    } else {
        let steering = p.steering;
        ControlLaw::steering(move |_, s| {
            let r = s.x.r / s.x.r.norm();
            let h = s.x.angular_momentum();
            let t_hat = (h / h.norm()).cross(&r);
            bound
                * match steering {
                    Steering::Tangential => t_hat,
                    Steering::AntiTangential => -t_hat,
                    Steering::Radial => r,
                }
        })
    };
    let events: Vec<EventKind> = p
        .stop_at
        .iter()
        .map(|e| match e {
            StopEvent::Perigee => EventKind::PerigeeMatch,
            StopEvent::Atmosphere => EventKind::AtmosphereCrossing,
            StopEvent::MassFloor => EventKind::MassFloor,
        })
        .collect();
    let direction = if p.backward { Direction::BackwardMassGrowing } else { Direction::Forward };
    let traj = Propagator::new(c, &sc.engine)
        .propagate(&s0, &law, t, &events, direction)
        .map_err(solver)?;
    println!("terminal: {:?} at t = {:.6} s", traj.terminal_reason, traj.last().t);
    write(dir, "trajectory.csv", &trajectory_csv(&traj, c.mu))?;
    write_figures(dir, "", &traj, &c)
}

fn spiral(sc: &Scenario, dir: &Path) -> Result<(), Failure> {
    let s0 = initial_sat(sc)?;
    let opts = sc.spiral_options().map_err(validation)?;
    let res = spiral_construct(&s0.x, s0.m, &sc.engine, &sc.constants, &opts).map_err(validation)?;
    println!("C0       = {:.9e} m^1.5/s", res.c0);
    println!("C1       = {:.9e} m^0.5", res.c1);
    println!("duration = {:.6} s", res.duration);
    println!("tau_bar  = {:.6} N", res.tau_bar);
    println!("terminal r_p = {:.3} m, mass = {:.6} kg", res.samples.last().map_or(f64::NAN, |s| s.rp), res.terminal.m);
    write(dir, "spiral.csv", &spiral_csv(&res, sc.constants.mu))
}

fn path(sc: &Scenario, dir: &Path) -> Result<(), Failure> {
    let xi = sc.initial_state.ok_or_else(|| validation("initial: missing"))?;
    let xf = sc.final_state.ok_or_else(|| validation("final: missing"))?;
    let samples = meoe_path(&xi, &xf, sc.path_mode, sc.path_samples, &sc.constants).map_err(validation)?;
    println!("{} samples, mode {:?}", samples.len(), sc.path_mode);
    write(dir, "path.csv", &path_csv(&samples, sc.constants.mu))
}

fn print_solution(sol: &OcpSolution, r_c: f64) {
    println!("kind         {}", sol.kind);
    println!("tau          {:.6} N", sol.tau);
    println!("t_f          {:.6} s", sol.t_f);
    println!("terminal r_p {:.3} m (s = {:+.3} m)", sol.terminal_rp, sol.terminal_rp - r_c);
    println!("mass         {:.6} -> {:.6} kg", sol.initial_mass, sol.final_mass);
    println!("converged    {} ({:?}, {} iterations)", sol.converged, sol.diagnostics.reason, sol.diagnostics.iterations);
}

fn save_solution(sc: &Scenario, dir: &Path, prefix: &str, sol: &OcpSolution) -> Result<(), Failure> {
    let c = &sc.constants;
    write(dir, &format!("{prefix}trajectory.csv"), &trajectory_csv(&sol.trajectory, c.mu))?;
    write_figures(dir, prefix, &sol.trajectory, c)?;
    let rec = SummaryRecord::from_solution(&sc.name, &sc.hash, sol);
    write(dir, &format!("{prefix}summary.jsonl"), &rec.to_json_line())
}

fn ocp(sc: &Scenario, dir: &Path, tau: Option<f64>) -> Result<(), Failure> {
    let problem = sc.ocp_scenario().map_err(validation)?;
    let tau = tau
        .or(sc.tau)
        .or((sc.engine.tau_bound > 0.0).then_some(sc.engine.tau_bound))
        .ok_or_else(|| validation("ocp.tau: missing (or pass --tau)"))?;
    if !(tau > 0.0) {
        return Err(validation("--tau must be positive"));
    }
    let sol = solve_ocp(&problem, tau).map_err(solver)?;
    print_solution(&sol, sc.constants.r_c);
    save_solution(sc, dir, "", &sol)
}

fn print_report(r: &BisectionReport) {
    println!("{:>4} {:>16} {:>16} {:>16} {:>16}", "step", "lo [N]", "hi [N]", "s(lo) [m]", "s(hi) [m]");
    for (k, b) in r.bracket_history.iter().enumerate() {
        println!("{k:>4} {:>16.6} {:>16.6} {:>16.3} {:>16.3}", b.lo, b.hi, b.s_lo, b.s_hi);
    }
    println!(
        "evaluations: {} ({} bracketing, {} bisection, {} polishing)",
        r.evaluation_count(),
        r.count(Phase::Bracket),
        r.count(Phase::Bisection),
        r.count(Phase::Polish)
    );
    println!("bisection midpoint: {:.6} N (bracket width {:.6} N, requested {:.6} N)", r.bisection_midpoint, r.tolerance_achieved, r.tolerance);
    println!("tau_max:            {:.6} N (s = {:+.3} m)", r.tau_max, r.s_at_tau_max);
    for w in &r.warnings {
        println!("warning: {w}");
    }
}

fn tau_max(
    sc: &Scenario,
    dir: &Path,
    lo: Option<f64>,
    hi: Option<f64>,
    tol: Option<f64>,
    figures: Option<f64>,
) -> Result<(), Failure> {
    if !matches!(sc.kind, ProblemKind::Oip | ProblemKind::Dop) {
        return Err(validation("kind: tau-max needs an oip or dop scenario"));
    }
    let problem = sc.ocp_scenario().map_err(validation)?;
    let b = &sc.bisection;
    let (lo, hi, tol) = (lo.unwrap_or(b.lo), hi.unwrap_or(b.hi), tol.unwrap_or(b.tol));
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(validation("bisection: need 0 < lo < hi and tol > 0"));
    }
    let report = find_tau_max_with(&problem, lo, hi, tol, &b.settings).map_err(solver)?;
    print_report(&report);
    if problem.kind == OcpKind::Dop {
        let rel = if report.tau_max < OMS_TOTAL_THRUST { "below" } else { "above" };
        println!("tau_max is {rel} the OMS total vacuum thrust of {OMS_TOTAL_THRUST} N");
    }
    let json = serde_json::to_string_pretty(&report).map_err(solver)?;
    write(dir, "tau_max.json", &(json + "\n"))?;
    if let Some(offset) = figures {
        let mut levels = vec![("tau_max_", report.tau_max)];
        if offset > 0.0 {
            levels.push(("tau_max_plus_", report.tau_max + offset));
            levels.push(("tau_max_minus_", report.tau_max - offset));
        }
        for (prefix, tau) in levels {
            let sol = solve_ocp(&problem, tau).map_err(solver)?;
            println!("{prefix}: tau = {tau:.6} N, terminal r_p - r_c = {:+.3} m", sol.terminal_rp - sc.constants.r_c);
            save_solution(sc, dir, prefix, &sol)?;
        }
    }
    Ok(())
}
