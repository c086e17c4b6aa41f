//! Scenario files: a TOML tree with unit-suffixed quantities.
//!
//! Every dimensional value is a string such as `"110 km"`, `"5 deg"` or
//! `"2000 s"`; bare numbers are accepted only for dimensionless fields.
//! Leaves are read as raw TOML values and converted afterwards so that every
//! error names the offending field.

use crate::astro::{EngineParameters, PhysicalConstants, StateVector, Vec3};
use crate::controllability::{PathMode, SpiralOptions};
use crate::elements::{state_from_coe, state_from_meoe, Coe, Meoe};
use crate::limiting::{LimitingSettings, DEFAULT_TOLERANCE};
use crate::ocp::{OcpError, OcpScenario, OcpSettings};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;
use toml::Value;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed scenario: {0}")]
    Syntax(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Length,
    Speed,
    Angle,
    Mass,
    Time,
    Force,
    GravParam,
    Acceleration,
}

impl Dim {
    fn name(self) -> &'static str {
        match self {
            Dim::Length => "length",
            Dim::Speed => "speed",
            Dim::Angle => "angle",
            Dim::Mass => "mass",
            Dim::Time => "time",
            Dim::Force => "force",
            Dim::GravParam => "gravitational parameter",
            Dim::Acceleration => "acceleration",
        }
    }

    fn factor(self, unit: &str) -> Option<f64> {
        let f = match (self, unit) {
            (Dim::Length, "m") => 1.0,
            (Dim::Length, "km") => 1e3,
            (Dim::Speed, "m/s") => 1.0,
            (Dim::Speed, "km/s") => 1e3,
            (Dim::Angle, "rad") => 1.0,
            (Dim::Angle, "deg") => std::f64::consts::PI / 180.0,
            (Dim::Mass, "kg") => 1.0,
            (Dim::Mass, "t") => 1e3,
            (Dim::Time, "s") => 1.0,
            (Dim::Time, "min") => 60.0,
            (Dim::Time, "h") => 3600.0,
            (Dim::Time, "d") => 86400.0,
            (Dim::Force, "N") => 1.0,
            (Dim::Force, "mN") => 1e-3,
            (Dim::Force, "kN") => 1e3,
            (Dim::GravParam, "m^3/s^2") => 1.0,
            (Dim::GravParam, "km^3/s^2") => 1e9,
            (Dim::Acceleration, "m/s^2") => 1.0,
            _ => return None,
        };
        Some(f)
    }

    fn units(self) -> &'static str {
        match self {
            Dim::Length => "m, km",
            Dim::Speed => "m/s, km/s",
            Dim::Angle => "deg, rad",
            Dim::Mass => "kg, t",
            Dim::Time => "s, min, h, d",
            Dim::Force => "N, mN, kN",
            Dim::GravParam => "m^3/s^2, km^3/s^2",
            Dim::Acceleration => "m/s^2",
        }
    }
}

/// Parses `"<number> <unit>"` into SI.
pub fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let text = text.trim();
    let split = text.find(char::is_whitespace).ok_or_else(|| {
        format!("expected a {} with a unit ({}), got '{text}'", dim.name(), dim.units())
    })?;
    let (num, unit) = (&text[..split], text[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("'{num}' is not a number"))?;
    if !value.is_finite() {
        return Err(format!("'{num}' is not finite"));
    }
    let f = dim
        .factor(unit)
        .ok_or_else(|| format!("unknown {} unit '{unit}' (expected one of {})", dim.name(), dim.units()))?;
    Ok(value * f)
}

fn qty(v: &Value, field: &str, dim: Dim) -> Result<f64, ScenarioError> {
    match v {
        Value::String(s) => parse_quantity(s, dim).map_err(|m| field_err(field, m)),
        Value::Integer(_) | Value::Float(_) => Err(field_err(
            field,
            format!("missing unit: write the {} as a string like \"{} {}\"", dim.name(), v, dim.units().split(',').next().unwrap_or("")),
        )),
        other => Err(field_err(field, format!("expected a {} string, got {}", dim.name(), other.type_str()))),
    }
}

fn opt_qty(v: &Option<Value>, field: &str, dim: Dim) -> Result<Option<f64>, ScenarioError> {
    v.as_ref().map(|v| qty(v, field, dim)).transpose()
}

fn number(v: &Value, field: &str) -> Result<f64, ScenarioError> {
    let x = match v {
        Value::Integer(i) => *i as f64,
        Value::Float(f) => *f,
        Value::String(s) => s.trim().parse().map_err(|_| field_err(field, format!("'{s}' is not a number")))?,
        other => return Err(field_err(field, format!("expected a number, got {}", other.type_str()))),
    };
    if !x.is_finite() {
        return Err(field_err(field, "must be finite"));
    }
    Ok(x)
}

fn opt_number(v: &Option<Value>, field: &str) -> Result<Option<f64>, ScenarioError> {
    v.as_ref().map(|v| number(v, field)).transpose()
}

fn count(v: &Option<Value>, field: &str) -> Result<Option<usize>, ScenarioError> {
    match v {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(other) => Err(field_err(field, format!("expected a non-negative integer, got {other}"))),
    }
}

fn flag(v: &Option<Value>, field: &str) -> Result<Option<bool>, ScenarioError> {
    match v {
        None => Ok(None),
        Some(Value::Boolean(b)) => Ok(Some(*b)),
        Some(other) => Err(field_err(field, format!("expected true or false, got {other}"))),
    }
}

fn text<'a>(v: &'a Option<Value>, field: &str) -> Result<Option<&'a str>, ScenarioError> {
    match v {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(field_err(field, format!("expected a string, got {other}"))),
    }
}

fn vector(v: &Value, field: &str, dim: Option<Dim>) -> Result<Vec3, ScenarioError> {
    let Value::Array(items) = v else {
        return Err(field_err(field, "expected an array of three components"));
    };
    if items.len() != 3 {
        return Err(field_err(field, format!("expected three components, got {}", items.len())));
    }
    let mut out = [0.0; 3];
    for (k, item) in items.iter().enumerate() {
        let f = format!("{field}[{k}]");
        out[k] = match dim {
            Some(d) => qty(item, &f, d)?,
            None => number(item, &f)?,
        };
    }
    Ok(Vec3::from(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Oip,
    Dop,
    Propagate,
    Spiral,
    Path,
    Classify,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    kind: ProblemKind,
    name: Option<String>,
    description: Option<String>,
    output_dir: Option<String>,
    constants: Option<RawConstants>,
    engine: Option<RawEngine>,
    initial: Option<RawState>,
    #[serde(rename = "final")]
    final_: Option<RawState>,
    propagate: Option<RawPropagate>,
    ocp: Option<RawOcp>,
    bisection: Option<RawBisection>,
    path: Option<RawPath>,
    spiral: Option<RawSpiral>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    mu: Option<Value>,
    r_e: Option<Value>,
    atmosphere_depth: Option<Value>,
    g0: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEngine {
    isp: Option<Value>,
    m_dry: Option<Value>,
    thrust: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    mass: Option<Value>,
    cartesian: Option<RawCartesian>,
    coe: Option<RawCoe>,
    meoe: Option<RawMeoe>,
    scalars: Option<RawScalars>,
    on_orbit: Option<RawOnOrbit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCartesian {
    r: Value,
    v: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoe {
    a: Value,
    e: Value,
    i: Value,
    raan: Value,
    arg_perigee: Value,
    true_anomaly: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeoe {
    p: Value,
    ex: Value,
    ey: Value,
    hx: Value,
    hy: Value,
    l: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScalars {
    r: Option<Value>,
    altitude: Option<Value>,
    v: Value,
    eta: Value,
    b1: Option<Value>,
    b2: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOnOrbit {
    reference: RawScalars,
    r: Option<Value>,
    altitude: Option<Value>,
    branch: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPropagate {
    duration: Option<Value>,
    periods: Option<Value>,
    steering: Option<Value>,
    stop_at: Option<Vec<Value>>,
    direction: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOcp {
    tau: Option<Value>,
    initial_knots: Option<Value>,
    final_knots: Option<Value>,
    t_max: Option<Value>,
    out_of_plane: Option<Value>,
    relax_magnitude: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBisection {
    lo: Option<Value>,
    hi: Option<Value>,
    tol: Option<Value>,
    polish_tol: Option<Value>,
    max_expansions: Option<Value>,
    warm_start: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    mode: Option<Value>,
    samples: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpiral {
    a_i: Option<Value>,
    b_i: Option<Value>,
    match_initial_velocity: Option<Value>,
    perigee_margin: Option<Value>,
    samples: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steering {
    Tangential,
    AntiTangential,
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopEvent {
    Perigee,
    Atmosphere,
    MassFloor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagateConfig {
    pub duration: Option<f64>,
    pub periods: Option<f64>,
    pub steering: Steering,
    pub stop_at: Vec<StopEvent>,
    pub backward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionConfig {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub settings: LimitingSettings,
}

/// A validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ProblemKind,
    pub name: String,
    pub description: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub constants: PhysicalConstants,
    pub engine: EngineParameters,
    pub initial_state: Option<StateVector>,
    pub initial_mass: Option<f64>,
    pub final_state: Option<StateVector>,
    pub propagate: PropagateConfig,
    pub tau: Option<f64>,
    pub ocp_settings: OcpSettings,
    pub bisection: BisectionConfig,
    pub path_mode: PathMode,
    pub path_samples: usize,
    pub spiral: SpiralOptions,
    pub spiral_match_velocity: bool,
    /// FNV-1a of the file text, hex.
    pub hash: String,
}

pub fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn scalars(s: &RawScalars, field: &str, c: &PhysicalConstants) -> Result<(f64, f64, f64, (Vec3, Vec3)), ScenarioError> {
    let rnorm = match (&s.r, &s.altitude) {
        (Some(r), None) => qty(r, &format!("{field}.r"), Dim::Length)?,
        (None, Some(a)) => c.r_e + qty(a, &format!("{field}.altitude"), Dim::Length)?,
        _ => return Err(field_err(field, "give exactly one of r and altitude")),
    };
    let v = qty(&s.v, &format!("{field}.v"), Dim::Speed)?;
    let eta = qty(&s.eta, &format!("{field}.eta"), Dim::Angle)?;
    let b1 = s.b1.as_ref().map(|b| vector(b, &format!("{field}.b1"), None)).transpose()?.unwrap_or(Vec3::x());
    let b2 = s.b2.as_ref().map(|b| vector(b, &format!("{field}.b2"), None)).transpose()?.unwrap_or(Vec3::y());
    Ok((rnorm, v, eta, (b1, b2)))
}

fn state(
    raw: &RawState,
    field: &str,
    c: &PhysicalConstants,
) -> Result<(Option<StateVector>, Option<f64>), ScenarioError> {
    let forms = [
        raw.cartesian.is_some(),
        raw.coe.is_some(),
        raw.meoe.is_some(),
        raw.scalars.is_some(),
        raw.on_orbit.is_some(),
    ];
    if forms.iter().filter(|&&f| f).count() > 1 {
        return Err(field_err(field, "give only one of cartesian, coe, meoe, scalars, on_orbit"));
    }
    let mu = c.mu;
    let wrap = |f: String| move |e: crate::astro::AstroError| field_err(&f, e.to_string());
    let x = if !forms.contains(&true) {
        None
    } else if let Some(k) = &raw.cartesian {
        Some(StateVector {
            r: vector(&k.r, &format!("{field}.cartesian.r"), Some(Dim::Length))?,
            v: vector(&k.v, &format!("{field}.cartesian.v"), Some(Dim::Speed))?,
        })
    } else if let Some(k) = &raw.coe {
        let f = format!("{field}.coe");
        let coe = Coe {
            a: qty(&k.a, &format!("{f}.a"), Dim::Length)?,
            e: number(&k.e, &format!("{f}.e"))?,
            i: qty(&k.i, &format!("{f}.i"), Dim::Angle)?,
            raan: qty(&k.raan, &format!("{f}.raan"), Dim::Angle)?,
            arg_perigee: qty(&k.arg_perigee, &format!("{f}.arg_perigee"), Dim::Angle)?,
            true_anomaly: qty(&k.true_anomaly, &format!("{f}.true_anomaly"), Dim::Angle)?,
        };
        Some(state_from_coe(&coe, mu).map_err(|e| field_err(&f, e.to_string()))?)
    } else if let Some(k) = &raw.meoe {
        let f = format!("{field}.meoe");
        let z = Meoe {
            p: qty(&k.p, &format!("{f}.p"), Dim::Length)?,
            ex: number(&k.ex, &format!("{f}.ex"))?,
            ey: number(&k.ey, &format!("{f}.ey"))?,
            hx: number(&k.hx, &format!("{f}.hx"))?,
            hy: number(&k.hy, &format!("{f}.hy"))?,
            l: qty(&k.l, &format!("{f}.l"), Dim::Angle)?,
        };
        Some(state_from_meoe(&z, mu).map_err(|e| field_err(&f, e.to_string()))?)
    } else if let Some(k) = &raw.scalars {
        let f = format!("{field}.scalars");
        let (r, v, eta, basis) = scalars(k, &f, c)?;
        Some(StateVector::from_scalars(r, v, eta, basis).map_err(wrap(f))?)
    } else {
        let k = raw.on_orbit.as_ref().expect("one form is present");
        let f = format!("{field}.on_orbit");
        let (r0, v0, eta0, basis) = scalars(&k.reference, &format!("{f}.reference"), c)?;
        let reference = StateVector::from_scalars(r0, v0, eta0, basis).map_err(wrap(f.clone()))?;
        let r = match (&k.r, &k.altitude) {
            (Some(r), None) => qty(r, &format!("{f}.r"), Dim::Length)?,
            (None, Some(a)) => c.r_e + qty(a, &format!("{f}.altitude"), Dim::Length)?,
            _ => return Err(field_err(&f, "give exactly one of r and altitude")),
        };
        let descending = match text(&k.branch, &format!("{f}.branch"))? {
            None | Some("ascending") => false,
            Some("descending") => true,
            Some(other) => {
                return Err(field_err(&format!("{f}.branch"), format!("'{other}' is not ascending or descending")))
            }
        };
        Some(point_on_orbit(&reference, r, descending, basis, mu).map_err(|m| field_err(&f, m))?)
    };
    let mass = opt_qty(&raw.mass, &format!("{field}.mass"), Dim::Mass)?;
    if let Some(m) = mass {
        if !(m > 0.0) {
            return Err(field_err(&format!("{field}.mass"), "must be positive"));
        }
    }
    Ok((x, mass))
}

/// The point of `reference`'s orbit at radius `r` on the requested branch,
/// placed at `r b₁` in the reference plane.
pub fn point_on_orbit(
    reference: &StateVector,
    r: f64,
    descending: bool,
    basis: (Vec3, Vec3),
    mu: f64,
) -> Result<StateVector, String> {
    let (rp, ra) = reference.perigee_apogee(mu).map_err(|e| e.to_string())?;
    if !(r >= rp && r <= ra) {
        return Err(format!("radius {r} m is outside the orbit's range [{rp}, {ra}] m"));
    }
    let energy = reference.specific_energy(mu);
    let h = reference.angular_momentum().norm();
    let v = (2.0 * (energy + mu / r)).sqrt();
    let eta = (h / (r * v)).clamp(-1.0, 1.0).acos();
    let eta = if descending { -eta } else { eta };
    StateVector::from_scalars(r, v, eta, basis).map_err(|e| e.to_string())
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let mut sc = Self::from_toml(&text)?;
        if sc.name.is_empty() {
            sc.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(sc)
    }

    pub fn from_toml(source: &str) -> Result<Self, ScenarioError> {
        let raw: RawFile = toml::from_str(source).map_err(|e| ScenarioError::Syntax(e.to_string()))?;

        let mut constants = PhysicalConstants::earth();
        if let Some(k) = &raw.constants {
            let mu = opt_qty(&k.mu, "constants.mu", Dim::GravParam)?.unwrap_or(constants.mu);
            let r_e = opt_qty(&k.r_e, "constants.r_e", Dim::Length)?.unwrap_or(constants.r_e);
            let depth = opt_qty(&k.atmosphere_depth, "constants.atmosphere_depth", Dim::Length)?
                .unwrap_or(PhysicalConstants::DEFAULT_ATMOSPHERE_DEPTH);
            let g0 = opt_qty(&k.g0, "constants.g0", Dim::Acceleration)?.unwrap_or(constants.g0);
            if !(depth > 0.0) {
                return Err(field_err("constants.atmosphere_depth", "must be positive"));
            }
            constants = PhysicalConstants::new(mu, r_e, r_e + depth, g0)
                .map_err(|e| field_err("constants", e.to_string()))?;
        }

        let (isp, m_dry, thrust) = match &raw.engine {
            Some(e) => (
                opt_qty(&e.isp, "engine.isp", Dim::Time)?,
                opt_qty(&e.m_dry, "engine.m_dry", Dim::Mass)?,
                opt_qty(&e.thrust, "engine.thrust", Dim::Force)?,
            ),
            None => (None, None, None),
        };
        let needs_engine = matches!(raw.kind, ProblemKind::Oip | ProblemKind::Dop | ProblemKind::Spiral);
        if needs_engine && isp.is_none() {
            return Err(field_err("engine.isp", "missing"));
        }
        let engine = EngineParameters::new(isp.unwrap_or(1.0), constants.g0, thrust.unwrap_or(0.0), m_dry.unwrap_or(1.0))
            .map_err(|e| field_err("engine", e.to_string()))?;

        let (initial_state, initial_mass) = match &raw.initial {
            Some(s) => state(s, "initial", &constants)?,
            None => (None, None),
        };
        let final_state = match &raw.final_ {
            Some(s) => {
                if s.mass.is_some() {
                    return Err(field_err("final.mass", "the final mass is not an input"));
                }
                state(s, "final", &constants)?.0
            }
            None => None,
        };

        let mut propagate = PropagateConfig {
            duration: None,
            periods: None,
            steering: Steering::Tangential,
            stop_at: Vec::new(),
            backward: false,
        };
        if let Some(p) = &raw.propagate {
            propagate.duration = opt_qty(&p.duration, "propagate.duration", Dim::Time)?;
            propagate.periods = opt_number(&p.periods, "propagate.periods")?;
            if propagate.duration.is_some() == propagate.periods.is_some() {
                return Err(field_err("propagate", "give exactly one of duration and periods"));
            }
            propagate.steering = match text(&p.steering, "propagate.steering")? {
                None | Some("tangential") => Steering::Tangential,
                Some("antitangential") => Steering::AntiTangential,
                Some("radial") => Steering::Radial,
                Some(o) => return Err(field_err("propagate.steering", format!("unknown steering '{o}'"))),
            };
            for (k, v) in p.stop_at.iter().flatten().enumerate() {
                let f = format!("propagate.stop_at[{k}]");
                propagate.stop_at.push(match v.as_str() {
                    Some("perigee") => StopEvent::Perigee,
                    Some("atmosphere") => StopEvent::Atmosphere,
                    Some("mass_floor") => StopEvent::MassFloor,
                    _ => return Err(field_err(&f, format!("unknown event {v}"))),
                });
            }
            propagate.backward = match text(&p.direction, "propagate.direction")? {
                None | Some("forward") => false,
                Some("backward") => true,
                Some(o) => return Err(field_err("propagate.direction", format!("unknown direction '{o}'"))),
            };
        }

        let mut ocp_settings = OcpSettings::default();
        let mut tau = None;
        if let Some(o) = &raw.ocp {
            tau = opt_qty(&o.tau, "ocp.tau", Dim::Force)?;
            if let Some(n) = count(&o.initial_knots, "ocp.initial_knots")? {
                ocp_settings.initial_knots = n;
            }
            if let Some(n) = count(&o.final_knots, "ocp.final_knots")? {
                ocp_settings.final_knots = n;
            }
            if ocp_settings.initial_knots < 2 || ocp_settings.final_knots < 2 {
                return Err(field_err("ocp.final_knots", "knot counts must be at least 2"));
            }
            ocp_settings.t_max = opt_qty(&o.t_max, "ocp.t_max", Dim::Time)?;
            if let Some(b) = flag(&o.out_of_plane, "ocp.out_of_plane")? {
                ocp_settings.out_of_plane = b;
            }
            if let Some(b) = flag(&o.relax_magnitude, "ocp.relax_magnitude")? {
                ocp_settings.relax_magnitude = b;
            }
        }

        let mut bisection =
            BisectionConfig { lo: 1.0, hi: 50.0, tol: DEFAULT_TOLERANCE, settings: LimitingSettings::default() };
        if let Some(b) = &raw.bisection {
            bisection.lo = opt_qty(&b.lo, "bisection.lo", Dim::Force)?.unwrap_or(bisection.lo);
            bisection.hi = opt_qty(&b.hi, "bisection.hi", Dim::Force)?.unwrap_or(bisection.hi);
            bisection.tol = opt_qty(&b.tol, "bisection.tol", Dim::Force)?.unwrap_or(bisection.tol);
            if let Some(p) = opt_qty(&b.polish_tol, "bisection.polish_tol", Dim::Length)? {
                bisection.settings.polish_tol = p;
            }
            if let Some(n) = count(&b.max_expansions, "bisection.max_expansions")? {
                bisection.settings.max_expansions = n;
            }
            if let Some(w) = flag(&b.warm_start, "bisection.warm_start")? {
                bisection.settings.warm_start = w;
            }
        }
        if !(bisection.lo > 0.0 && bisection.hi > bisection.lo) {
            return Err(field_err("bisection", "need 0 < lo < hi"));
        }
        if !(bisection.tol > 0.0) {
            return Err(field_err("bisection.tol", "must be positive"));
        }

        let (mut path_mode, mut path_samples) = (PathMode::AdmissibleA, 101);
        if let Some(p) = &raw.path {
            path_mode = match text(&p.mode, "path.mode")? {
                None | Some("admissible_a") => PathMode::AdmissibleA,
                Some("stable_pplus") => PathMode::StablePPlus,
                Some(o) => return Err(field_err("path.mode", format!("unknown mode '{o}'"))),
            };
            path_samples = count(&p.samples, "path.samples")?.unwrap_or(path_samples);
        }

        let mut spiral = SpiralOptions::default();
        let mut spiral_match_velocity = false;
        if let Some(s) = &raw.spiral {
            spiral.a_i = opt_number(&s.a_i, "spiral.a_i")?.unwrap_or(spiral.a_i);
            spiral.b_i = opt_number(&s.b_i, "spiral.b_i")?.unwrap_or(spiral.b_i);
            spiral.perigee_margin =
                opt_qty(&s.perigee_margin, "spiral.perigee_margin", Dim::Length)?.unwrap_or(spiral.perigee_margin);
            spiral.samples = count(&s.samples, "spiral.samples")?.unwrap_or(spiral.samples);
            spiral_match_velocity = flag(&s.match_initial_velocity, "spiral.match_initial_velocity")?.unwrap_or(false);
        }

        let sc = Self {
            kind: raw.kind,
            name: raw.name.clone().unwrap_or_default(),
            description: raw.description.clone(),
            output_dir: raw.output_dir.as_ref().map(PathBuf::from),
            constants,
            engine,
            initial_state,
            initial_mass,
            final_state,
            propagate,
            tau,
            ocp_settings,
            bisection,
            path_mode,
            path_samples,
            spiral,
            spiral_match_velocity,
            hash: fnv1a(source.as_bytes()),
        };
        sc.check_required()?;
        Ok(sc)
    }

    fn check_required(&self) -> Result<(), ScenarioError> {
        let need_initial = !matches!(self.kind, ProblemKind::Dop);
        if need_initial && self.initial_state.is_none() {
            return Err(field_err("initial", "missing"));
        }
        let need_mass = matches!(self.kind, ProblemKind::Oip | ProblemKind::Dop | ProblemKind::Spiral | ProblemKind::Propagate);
        if need_mass && self.initial_mass.is_none() {
            return Err(field_err("initial.mass", "missing"));
        }
        if matches!(self.kind, ProblemKind::Dop | ProblemKind::Path) && self.final_state.is_none() {
            return Err(field_err("final", "missing"));
        }
        if self.kind == ProblemKind::Propagate && self.propagate.duration.is_none() && self.propagate.periods.is_none()
        {
            return Err(field_err("propagate", "missing"));
        }
        Ok(())
    }

    /// The optimal control problem described by an `oip` or `dop` file.
    pub fn ocp_scenario(&self) -> Result<OcpScenario, ScenarioError> {
        let m_i = self.initial_mass.ok_or_else(|| field_err("initial.mass", "missing"))?;
        let to_field = |f: &'static str| move |e: OcpError| field_err(f, e.to_string());
        let sc = match self.kind {
            ProblemKind::Oip => {
                let x = self.initial_state.ok_or_else(|| field_err("initial", "missing"))?;
                OcpScenario::oip(x, m_i, self.engine, self.constants).map_err(to_field("initial"))?
            }
            ProblemKind::Dop => {
                let x = self.final_state.ok_or_else(|| field_err("final", "missing"))?;
                OcpScenario::dop_from_entry(x, m_i, self.engine, self.constants).map_err(to_field("final"))?
            }
            _ => return Err(field_err("kind", "expected oip or dop")),
        };
        Ok(sc.with_settings(self.ocp_settings.clone()))
    }

    pub fn spiral_options(&self) -> Result<SpiralOptions, ScenarioError> {
        if !self.spiral_match_velocity {
            return Ok(self.spiral);
        }
        let x = self.initial_state.ok_or_else(|| field_err("initial", "missing"))?;
        let m = SpiralOptions::matching(&x).map_err(|e| field_err("spiral.match_initial_velocity", e.to_string()))?;
        Ok(SpiralOptions { a_i: m.a_i, b_i: m.b_i, ..self.spiral })
    }
}

#[cfg(test)]
mod tests;
