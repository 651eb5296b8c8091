//! Run configurations, presets, and the scenario driver that writes
//! artifacts and maps outcomes to exit codes.
//!
//! The configuration format is sectioned `key = value` text:
//!
//! ```text
//! # comment
//! [grid]
//! lx = 4
//! ly = 4
//! n = 128            # or nx / ny
//!
//! [init]
//! bump = 2, 2, 0.15, 12pi   # cx, cy, width, mass; repeatable
//! background = 0.2
//!
//! [mu]
//! radial = 0, 1, 2, 2, 0.5, 1.0   # inner, outer, cx, cy, r0, r1
//! ```
//!
//! Numbers may carry a `pi` factor (`12pi`, `pi`). Unknown sections and
//! keys are errors naming the line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cutoff::{cutoff_for_point, verify_cutoff, CertificateReport, Cutoff};
use crate::elliptic::Preconditioner;
use crate::error::{Error, Result};
use crate::grid::{CellMask, Grid, ScalarField};
use crate::io::{load_snapshot, save_snapshot};
use crate::monitors::{
    blowup_report, check_local_boundedness, eta_for_p, mass_comparison_ratio, running_median_ratio,
    BlowupReport, DetectConfig, LocalBoundedness, MonitorKind, MonitorSpec, Verdict,
};
use crate::ops::integrate;
use crate::series::TimeSeries;
use crate::stepper::{run, Coefficients, Monitor, ReactionScheme, RunOptions, SimState, StepperConfig};

/// Process exit codes of a scenario run.
pub mod exit {
    /// Completed and bounded, as expected or with no expectation.
    pub const BOUNDED: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    /// The solver failed (for example, no convergence).
    pub const NUMERICAL: i32 = 5;
    /// Blow-up suspected, and every stated expectation held.
    pub const BLOWUP_EXPECTED: i32 = 10;
    /// Blow-up suspected with no stated expectation.
    pub const BLOWUP: i32 = 11;
    /// Completed but inconclusive, with no stated expectation.
    pub const INCONCLUSIVE: i32 = 12;
    /// An expectation in the `[expect]` section failed.
    pub const MISMATCH: i32 = 20;
}

pub const PRESETS: [&str; 4] = ["damped_uniform", "blowup_in_hole", "local_bound_control", "free_keller_segel"];

const BLOWUP_IN_HOLE: &str = "\
[grid]
lx = 4
ly = 4
n = 256

[init]
bump = 2, 2, 0.15, 12pi
background = 0.2

[kappa]
constant = 0.2

[mu]
radial = 0, 1, 2, 2, 0.5, 1.0

[stepper]
t_end = 10
u_cap = 1e4

[output]
cadence = 10

[expect]
outcome = blowup
localized = true
";

const LOCAL_BOUND_EXTRA: &str = "
[monitors]
mu0 = 0.5
control_point = 3.5, 2
local_lp = 3.5, 2, 1.5
grad_v_local = true
phi_u_inf = true
region_disc = hole, 2, 2, 0.25

[expect]
local_bounded = true
";

const DAMPED_UNIFORM: &str = "\
[grid]
lx = 4
ly = 4
n = 128

[init]
bump = 2, 2, 0.15, 12pi

[kappa]
constant = 0.5

[mu]
constant = 1

[stepper]
t_end = 5

[output]
cadence = 20

[expect]
outcome = bounded
";

const FREE_KELLER_SEGEL: &str = "\
[grid]
lx = 4
ly = 4
n = 256

[init]
bump = 2, 2, 0.15, 12pi

[kappa]
constant = 0

[mu]
constant = 0

[stepper]
t_end = 10
u_cap = 1e4

[output]
cadence = 10

[expect]
outcome = blowup
";

/// Configuration text of a preset.
pub fn preset_text(name: &str) -> Option<String> {
    Some(match name {
        "damped_uniform" => DAMPED_UNIFORM.to_string(),
        "blowup_in_hole" => BLOWUP_IN_HOLE.to_string(),
        "local_bound_control" => format!("{BLOWUP_IN_HOLE}{LOCAL_BOUND_EXTRA}"),
        "free_keller_segel" => FREE_KELLER_SEGEL.to_string(),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Option<RunConfig> {
    let mut cfg = parse_config(&preset_text(name)?).expect("preset configurations parse");
    cfg.name = name.to_string();
    Some(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    /// Gaussian bumps, each scaled to its mass.
    Bumps(Vec<Bump>),
    Constant(f64),
    /// Constant with the given total mass.
    ConstantMass(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    /// Uniform value added everywhere.
    pub background: f64,
    /// Relative amplitude of a seeded uniform perturbation.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSpec {
    Constant(f64),
    /// `inner` for `r ≤ r0`, `outer` for `r ≥ r1`, joined by `6t⁵ − 15t⁴ + 10t³`.
    Radial {
        inner: f64,
        outer: f64,
        cx: f64,
        cy: f64,
        r0: f64,
        r1: f64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorConfig {
    pub mass: bool,
    pub v_w1p: Vec<f64>,
    pub v_lq: Vec<f64>,
    /// `(x, y, p)` for localized `∫φuᵖ` with a point cutoff.
    pub local_lp: Vec<(f64, f64, f64)>,
    pub mu0: Option<f64>,
    pub grad_v_local: bool,
    pub phi_u_inf: bool,
    /// Points whose cutoff plateau is monitored for local boundedness.
    pub control_points: Vec<(f64, f64)>,
    /// `(tag, cx, cy, r)` discs monitored for their local maximum.
    pub region_discs: Vec<(String, f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExpectedOutcome {
    Bounded,
    Blowup,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expectation {
    pub outcome: Option<ExpectedOutcome>,
    pub localized: Option<bool>,
    pub local_bounded: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub grid: GridSpec,
    pub init: InitSpec,
    pub kappa: CoefficientSpec,
    pub mu: CoefficientSpec,
    pub stepper: StepperConfig,
    pub monitors: MonitorConfig,
    pub out_dir: Option<PathBuf>,
    pub snapshots: Vec<f64>,
    pub cadence: usize,
    pub expect: Expectation,
    pub seed: u64,
    /// Threshold fraction for the blow-up set.
    pub blowup_fraction: f64,
    pub eps_mu: Option<f64>,
    pub fit_samples: usize,
}

impl RunConfig {
    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.lx, self.grid.ly, self.grid.nx, self.grid.ny)
    }

    /// Resolve relative file paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InitKind::File(p) = &mut self.init.kind {
            fix(p);
        }
        for c in [&mut self.kappa, &mut self.mu] {
            if let CoefficientSpec::File(p) = c {
                fix(p);
            }
        }
    }
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    let t = s.trim();
    let (body, factor) = match t.strip_suffix("pi") {
        Some(b) => (b.trim().trim_end_matches('*').trim(), std::f64::consts::PI),
        None => (t, 1.0),
    };
    let base = if body.is_empty() && factor != 1.0 {
        1.0
    } else {
        body.parse::<f64>()
            .map_err(|_| cfg_err(line, format!("expected a number, got {t:?}")))?
    };
    let v = base * factor;
    if !v.is_finite() {
        return Err(cfg_err(line, format!("number {t:?} is not finite")));
    }
    Ok(v)
}

fn parse_list(s: &str, n: usize, line: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != n {
        return Err(cfg_err(line, format!("expected {n} comma-separated numbers, got {:?}", s.trim())));
    }
    parts.iter().map(|p| parse_num(p, line)).collect()
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| cfg_err(line, format!("expected a nonnegative integer, got {:?}", s.trim())))
}

fn parse_bool(s: &str, line: usize) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(cfg_err(line, format!("expected true or false, got {other:?}"))),
    }
}

fn parse_coefficient(key: &str, value: &str, line: usize) -> Result<CoefficientSpec> {
    Ok(match key {
        "constant" => CoefficientSpec::Constant(parse_num(value, line)?),
        "radial" => {
            let v = parse_list(value, 6, line)?;
            if !(v[4] >= 0.0 && v[5] > v[4]) {
                return Err(cfg_err(line, "radial ramp needs 0 <= r0 < r1"));
            }
            CoefficientSpec::Radial {
                inner: v[0],
                outer: v[1],
                cx: v[2],
                cy: v[3],
                r0: v[4],
                r1: v[5],
            }
        }
        "file" => CoefficientSpec::File(PathBuf::from(value.trim())),
        _ => return Err(cfg_err(line, format!("unknown key {key:?}"))),
    })
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        name: "config".into(),
        grid: GridSpec {
            lx: 1.0,
            ly: 1.0,
            nx: 64,
            ny: 64,
        },
        init: InitSpec {
            kind: InitKind::Constant(0.0),
            background: 0.0,
            noise: 0.0,
        },
        kappa: CoefficientSpec::Constant(0.0),
        mu: CoefficientSpec::Constant(0.0),
        stepper: StepperConfig::default(),
        monitors: MonitorConfig::default(),
        out_dir: None,
        snapshots: Vec::new(),
        cadence: 1,
        expect: Expectation::default(),
        seed: 0,
        blowup_fraction: 0.5,
        eps_mu: None,
        fit_samples: 20,
    };
    let mut section = String::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut bumps: Vec<Bump> = Vec::new();
    let mut init_kind: Option<(InitKind, usize)> = None;
    let mut mu_line = 0;
    let repeatable = ["bump", "control_point", "local_lp", "region_disc", "v_w1p", "v_lq"];

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(line, format!("malformed section header {body:?}")))?
                .trim();
            if !["grid", "init", "kappa", "mu", "stepper", "monitors", "output", "expect", "run"].contains(&name) {
                return Err(cfg_err(line, format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("expected key = value, got {body:?}")))?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(cfg_err(line, format!("key {key:?} appears before any section")));
        }
        if !repeatable.contains(&key) {
            if let Some(prev) = seen.insert((section.clone(), key.to_string()), line) {
                return Err(cfg_err(line, format!("key {key:?} already set on line {prev}")));
            }
        }
        match (section.as_str(), key) {
            ("grid", "lx") => cfg.grid.lx = parse_num(value, line)?,
            ("grid", "ly") => cfg.grid.ly = parse_num(value, line)?,
            ("grid", "nx") => cfg.grid.nx = parse_usize(value, line)?,
            ("grid", "ny") => cfg.grid.ny = parse_usize(value, line)?,
            ("grid", "n") => {
                let n = parse_usize(value, line)?;
                cfg.grid.nx = n;
                cfg.grid.ny = n;
            }
            ("init", "bump") => {
                let v = parse_list(value, 4, line)?;
                if !(v[2] > 0.0) {
                    return Err(cfg_err(line, "bump width must be positive"));
                }
                if v[3] < 0.0 {
                    return Err(cfg_err(line, "bump mass must be nonnegative"));
                }
                bumps.push(Bump {
                    cx: v[0],
                    cy: v[1],
                    width: v[2],
                    mass: v[3],
                });
            }
            ("init", "constant" | "mass" | "file") => {
                if let Some((_, prev)) = &init_kind {
                    return Err(cfg_err(line, format!("initial condition already given on line {prev}")));
                }
                let kind = match key {
                    "constant" => {
                        let c = parse_num(value, line)?;
                        if c < 0.0 {
                            return Err(cfg_err(line, "initial density must be nonnegative"));
                        }
                        InitKind::Constant(c)
                    }
                    "mass" => {
                        let m = parse_num(value, line)?;
                        if m < 0.0 {
                            return Err(cfg_err(line, "mass must be nonnegative"));
                        }
                        InitKind::ConstantMass(m)
                    }
                    _ => InitKind::File(PathBuf::from(value)),
                };
                init_kind = Some((kind, line));
            }
            ("init", "background") => {
                cfg.init.background = parse_num(value, line)?;
                if cfg.init.background < 0.0 {
                    return Err(cfg_err(line, "background must be nonnegative"));
                }
            }
            ("init", "noise") => {
                cfg.init.noise = parse_num(value, line)?;
                if !(0.0..1.0).contains(&cfg.init.noise) {
                    return Err(cfg_err(line, "noise amplitude must lie in [0, 1)"));
                }
            }
            ("kappa", k) => cfg.kappa = parse_coefficient(k, value, line)?,
            ("mu", k) => {
                cfg.mu = parse_coefficient(k, value, line)?;
                mu_line = line;
            }
            ("stepper", "t_end") => cfg.stepper.t_end = parse_num(value, line)?,
            ("stepper", "cfl_safety") => cfg.stepper.cfl_safety = parse_num(value, line)?,
            ("stepper", "dt_min") => cfg.stepper.dt_min = parse_num(value, line)?,
            ("stepper", "dt_max") => cfg.stepper.dt_max = parse_num(value, line)?,
            ("stepper", "u_cap") => cfg.stepper.u_cap = Some(parse_num(value, line)?),
            ("stepper", "tol") => cfg.stepper.elliptic.tol = parse_num(value, line)?,
            ("stepper", "max_iter") => cfg.stepper.elliptic.max_iter = Some(parse_usize(value, line)?),
            ("stepper", "scheme") => {
                cfg.stepper.scheme = match value {
                    "patankar" => ReactionScheme::Patankar,
                    "explicit" => ReactionScheme::Explicit,
                    other => return Err(cfg_err(line, format!("unknown scheme {other:?}"))),
                }
            }
            ("stepper", "preconditioner") => {
                cfg.stepper.elliptic.preconditioner = match value {
                    "cosine" => Preconditioner::Cosine,
                    "jacobi" => Preconditioner::Jacobi,
                    other => return Err(cfg_err(line, format!("unknown preconditioner {other:?}"))),
                }
            }
            ("monitors", "mass") => cfg.monitors.mass = parse_bool(value, line)?,
            ("monitors", "v_w1p") => {
                let p = parse_num(value, line)?;
                if !(1.0..2.0).contains(&p) {
                    return Err(cfg_err(line, format!("v_w1p exponent {p} outside [1, 2)")));
                }
                cfg.monitors.v_w1p.push(p);
            }
            ("monitors", "v_lq") => {
                let q = parse_num(value, line)?;
                if !(q >= 1.0) {
                    return Err(cfg_err(line, "v_lq exponent must be at least 1"));
                }
                cfg.monitors.v_lq.push(q);
            }
            ("monitors", "local_lp") => {
                let v = parse_list(value, 3, line)?;
                if !(v[2] > 1.0 && v[2] < 2.0) {
                    return Err(cfg_err(line, format!("local_lp exponent {} outside (1, 2)", v[2])));
                }
                cfg.monitors.local_lp.push((v[0], v[1], v[2]));
            }
            ("monitors", "mu0") => cfg.monitors.mu0 = Some(parse_num(value, line)?),
            ("monitors", "grad_v_local") => cfg.monitors.grad_v_local = parse_bool(value, line)?,
            ("monitors", "phi_u_inf") => cfg.monitors.phi_u_inf = parse_bool(value, line)?,
            ("monitors", "control_point") => {
                let v = parse_list(value, 2, line)?;
                cfg.monitors.control_points.push((v[0], v[1]));
            }
            ("monitors", "region_disc") => {
                let (tag, rest) = value
                    .split_once(',')
                    .ok_or_else(|| cfg_err(line, "region_disc = tag, cx, cy, r"))?;
                let tag = tag.trim();
                if tag.is_empty() || !tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(cfg_err(line, format!("region tag {tag:?} must be alphanumeric")));
                }
                let v = parse_list(rest, 3, line)?;
                cfg.monitors.region_discs.push((tag.to_string(), v[0], v[1], v[2]));
            }
            ("output", "dir") => cfg.out_dir = Some(PathBuf::from(value)),
            ("output", "cadence") => cfg.cadence = parse_usize(value, line)?.max(1),
            ("output", "snapshots") => {
                cfg.snapshots = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_num(s, line))
                    .collect::<Result<_>>()?;
            }
            ("expect", "outcome") => {
                cfg.expect.outcome = Some(match value {
                    "bounded" => ExpectedOutcome::Bounded,
                    "blowup" => ExpectedOutcome::Blowup,
                    other => return Err(cfg_err(line, format!("unknown outcome {other:?}"))),
                })
            }
            ("expect", "localized") => cfg.expect.localized = Some(parse_bool(value, line)?),
            ("expect", "local_bounded") => cfg.expect.local_bounded = Some(parse_bool(value, line)?),
            ("run", "name") => cfg.name = value.to_string(),
            ("run", "seed") => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| cfg_err(line, format!("seed must be an integer, got {value:?}")))?
            }
            ("run", "fraction") => {
                cfg.blowup_fraction = parse_num(value, line)?;
                if !(cfg.blowup_fraction > 0.0 && cfg.blowup_fraction <= 1.0) {
                    return Err(cfg_err(line, "fraction must lie in (0, 1]"));
                }
            }
            ("run", "eps_mu") => cfg.eps_mu = Some(parse_num(value, line)?),
            ("run", "fit_samples") => cfg.fit_samples = parse_usize(value, line)?.max(2),
            (s, k) => return Err(cfg_err(line, format!("unknown key {k:?} in [{s}]"))),
        }
    }

    if !bumps.is_empty() {
        if let Some((_, prev)) = &init_kind {
            return Err(cfg_err(*prev, "bumps cannot be combined with constant, mass or file"));
        }
        cfg.init.kind = InitKind::Bumps(bumps);
    } else if let Some((kind, _)) = init_kind {
        cfg.init.kind = kind;
    }
    match &cfg.mu {
        CoefficientSpec::Constant(m) if *m < 0.0 => {
            return Err(cfg_err(mu_line, format!("mu must be nonnegative, got {m}")))
        }
        CoefficientSpec::Radial { inner, outer, .. } if inner.min(*outer) < 0.0 => {
            return Err(cfg_err(mu_line, "mu must be nonnegative on the whole ramp"))
        }
        _ => {}
    }
    let at = |s: &str, k: &str| seen.get(&(s.to_string(), k.to_string())).copied().unwrap_or(0);
    Grid::new(cfg.grid.lx, cfg.grid.ly, cfg.grid.nx, cfg.grid.ny)
        .map_err(|e| cfg_err(at("grid", "n").max(at("grid", "nx")).max(at("grid", "lx")), e.to_string()))?;
    let s = &cfg.stepper;
    if !(s.cfl_safety > 0.0 && s.cfl_safety < 1.0) {
        return Err(cfg_err(at("stepper", "cfl_safety"), "cfl_safety must lie in (0, 1)"));
    }
    if !(s.dt_min > 0.0 && s.dt_min < s.dt_max) {
        return Err(cfg_err(at("stepper", "dt_min").max(at("stepper", "dt_max")), "need 0 < dt_min < dt_max"));
    }
    if !(s.t_end > 0.0) {
        return Err(cfg_err(at("stepper", "t_end"), "t_end must be positive"));
    }
    if !(s.elliptic.tol > 0.0 && s.elliptic.tol <= 1e-4) {
        return Err(cfg_err(at("stepper", "tol"), "tol must lie in (0, 1e-4]"));
    }
    if let Some(m) = cfg.monitors.mu0 {
        if !(m > 0.0) {
            return Err(cfg_err(at("monitors", "mu0"), "mu0 must be positive"));
        }
    }
    for path in [&cfg.init.kind].iter().filter_map(|k| match k {
        InitKind::File(p) => Some(p),
        _ => None,
    }) {
        if path.as_os_str().is_empty() {
            return Err(cfg_err(at("init", "file"), "empty file path"));
        }
    }
    Ok(cfg)
}

/// Parse a configuration file; relative paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if let Some(base) = path.parent() {
        cfg.resolve_paths(base);
    }
    for p in referenced_files(&cfg) {
        if !p.exists() {
            return Err(Error::InvalidParameter(format!("referenced file {} does not exist", p.display())));
        }
    }
    if cfg.name == "config" {
        if let Some(stem) = path.file_stem() {
            cfg.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(cfg)
}

fn referenced_files(cfg: &RunConfig) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let InitKind::File(p) = &cfg.init.kind {
        out.push(p.clone());
    }
    for c in [&cfg.kappa, &cfg.mu] {
        if let CoefficientSpec::File(p) = c {
            out.push(p.clone());
        }
    }
    out
}

/// `6t⁵ − 15t⁴ + 10t³` clamped to `[0, 1]`.
pub fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn load_field(path: &Path, grid: &Grid) -> Result<ScalarField> {
    let (f, _) = load_snapshot(path)?;
    if !f.grid.same_shape(grid) {
        return Err(Error::InvalidParameter(format!(
            "{} holds a {}x{} field on {}x{}, expected {}x{} on {}x{}",
            path.display(),
            f.grid.nx,
            f.grid.ny,
            f.grid.lx,
            f.grid.ly,
            grid.nx,
            grid.ny,
            grid.lx,
            grid.ly
        )));
    }
    Ok(f)
}

pub fn build_coefficient(spec: &CoefficientSpec, grid: &Grid) -> Result<ScalarField> {
    Ok(match spec {
        CoefficientSpec::Constant(c) => ScalarField::constant(*grid, *c),
        CoefficientSpec::Radial {
            inner,
            outer,
            cx,
            cy,
            r0,
            r1,
        } => ScalarField::from_fn(*grid, |x, y| {
            let s = smootherstep(((x - cx).hypot(y - cy) - r0) / (r1 - r0));
            inner + (outer - inner) * s
        }),
        CoefficientSpec::File(p) => load_field(p, grid)?,
    })
}

/// Initial density; each Gaussian is scaled to its requested mass.
pub fn build_initial(spec: &InitSpec, grid: &Grid, seed: u64) -> Result<ScalarField> {
    let mut u = match &spec.kind {
        InitKind::Bumps(bumps) => {
            let mut acc = ScalarField::zeros(*grid);
            for b in bumps {
                if b.mass < 0.0 {
                    return Err(Error::InvalidParameter("bump mass must be nonnegative".into()));
                }
                let mut g = ScalarField::from_fn(*grid, |x, y| {
                    (-((x - b.cx).powi(2) + (y - b.cy).powi(2)) / (2.0 * b.width * b.width)).exp()
                });
                let m = integrate(&g);
                if b.mass > 0.0 {
                    if !(m > 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "bump at ({}, {}) has no mass on the grid",
                            b.cx, b.cy
                        )));
                    }
                    g.scale(b.mass / m);
                } else {
                    g.scale(0.0);
                }
                for (a, v) in acc.values.iter_mut().zip(&g.values) {
                    *a += v;
                }
            }
            acc
        }
        InitKind::Constant(c) => ScalarField::constant(*grid, *c),
        InitKind::ConstantMass(m) => {
            if *m < 0.0 {
                return Err(Error::InvalidParameter("mass must be nonnegative".into()));
            }
            ScalarField::constant(*grid, m / grid.area())
        }
        InitKind::File(p) => load_field(p, grid)?,
    };
    if spec.background != 0.0 {
        u = u.map(|x| x + spec.background);
    }
    if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in u.values.iter_mut() {
            *x *= 1.0 + spec.noise * rng.gen_range(-1.0..1.0);
        }
    }
    if let Some(k) = u.values.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(format!("initial density {} at cell {k} is invalid", u.values[k])));
    }
    Ok(u)
}

/// A cutoff built for a monitor, with its certificate.
#[derive(Debug, Clone)]
pub struct CertifiedCutoff {
    pub label: String,
    pub cutoff: Arc<Cutoff>,
    pub report: CertificateReport,
}

/// Monitors resolved against the coefficient field.
pub struct ResolvedMonitors {
    pub specs: Vec<MonitorSpec>,
    pub cutoffs: Vec<CertifiedCutoff>,
    /// Labels of the control-point local maxima.
    pub control_labels: Vec<String>,
    /// Labels of localized `L^p` columns.
    pub local_lp_labels: Vec<String>,
}

pub fn resolve_monitors(m: &MonitorConfig, mu: &ScalarField) -> Result<ResolvedMonitors> {
    let g = mu.grid;
    let mut out = ResolvedMonitors {
        specs: Vec::new(),
        cutoffs: Vec::new(),
        control_labels: Vec::new(),
        local_lp_labels: Vec::new(),
    };
    let mu0_at = |x: f64, y: f64| {
        m.mu0.unwrap_or_else(|| {
            let (i, j) = g.cell_of(x, y);
            mu.at(i, j) / 2.0
        })
    };
    if m.mass {
        out.specs.push(MonitorSpec::new(MonitorKind::MassL1));
    }
    for &p in &m.v_w1p {
        out.specs.push(MonitorSpec::v_w1p(p)?);
    }
    for &q in &m.v_lq {
        out.specs.push(MonitorSpec::new(MonitorKind::VLq { q }));
    }
    let many = m.local_lp.len() > 1;
    for (k, &(x, y, p)) in m.local_lp.iter().enumerate() {
        let mu0 = mu0_at(x, y);
        let c = Arc::new(cutoff_for_point((x, y), mu, Some(mu0), eta_for_p(p))?);
        let mut spec = MonitorSpec::local_lp(c.clone(), p, mu, mu0)?;
        if many {
            spec = spec.with_tag(format!("{k}"));
        }
        let label = spec.label();
        out.local_lp_labels.push(label.clone());
        out.cutoffs.push(CertifiedCutoff {
            label: label.clone(),
            report: verify_cutoff(&c),
            cutoff: c.clone(),
        });
        if m.grad_v_local {
            out.specs.push(spec.derived_grad_v().expect("local Lp monitor derives a gradient monitor"));
        }
        if m.phi_u_inf {
            let mut s = MonitorSpec::new(MonitorKind::PhiUInf { cutoff: c.clone() });
            s.tag = spec.tag.clone();
            out.specs.push(s);
        }
        out.specs.push(spec);
    }
    for (k, &(x, y)) in m.control_points.iter().enumerate() {
        let c = cutoff_for_point((x, y), mu, Some(mu0_at(x, y)), 0.25)?;
        let tag = if m.control_points.len() > 1 { format!("ctrl{k}") } else { "ctrl".into() };
        let spec = MonitorSpec::new(MonitorKind::UInfLocal { region: c.k.clone() }).with_tag(tag);
        out.control_labels.push(spec.label());
        out.specs.push(spec);
    }
    for (tag, cx, cy, r) in &m.region_discs {
        let region = CellMask::disc(&g, *cx, *cy, *r);
        if region.is_empty() {
            return Err(Error::InvalidParameter(format!("region {tag} contains no cell centers")));
        }
        out.specs.push(MonitorSpec::new(MonitorKind::UInfLocal { region }).with_tag(tag.clone()));
    }
    let mut labels: Vec<String> = out.specs.iter().map(|s| s.label()).collect();
    labels.sort();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(format!("duplicate monitor column {}", w[0])));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelledBound {
    pub label: String,
    #[serde(flatten)]
    pub check: LocalBoundedness,
}

#[derive(Debug, Clone, Serialize)]
pub struct MedianCheck {
    pub label: String,
    pub max: f64,
    /// Largest value over the running median.
    pub median_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub label: String,
    pub all_passed: bool,
    pub eta: f64,
    pub c_phi: f64,
    pub c_phi_continuous: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub exit_code: i32,
    pub blowup: BlowupReport,
    pub steps: usize,
    pub initial_mass: f64,
    pub final_mass: f64,
    /// Worst `mass(t) / (m₀ e^{t κ⁺})`.
    pub mass_comparison_ratio: f64,
    pub clipped_mass: f64,
    pub local_bounds: Vec<LabelledBound>,
    pub local_lp: Vec<MedianCheck>,
    pub certificates: Vec<CertificateSummary>,
    pub expectation_failures: Vec<String>,
}

pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub series: TimeSeries,
    pub state: SimState,
    pub coefficients: Coefficients,
    pub u0: ScalarField,
    pub cutoffs: Vec<CertifiedCutoff>,
    pub snapshots: Vec<(f64, ScalarField)>,
}

impl ScenarioOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

fn expectation_failures(cfg: &RunConfig, report: &ScenarioReport, controls: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let verdict = report.blowup.verdict;
    match cfg.expect.outcome {
        Some(ExpectedOutcome::Blowup) if verdict != Verdict::BlowupSuspected => {
            out.push(format!("expected blow-up, verdict {verdict:?}"))
        }
        Some(ExpectedOutcome::Bounded) if verdict != Verdict::Bounded => {
            out.push(format!("expected bounded, verdict {verdict:?}"))
        }
        _ => {}
    }
    if let Some(want) = cfg.expect.localized {
        let got = report.blowup.localized;
        if verdict == Verdict::BlowupSuspected && got != Some(want) {
            out.push(format!(
                "expected localized = {want}, got {got:?} (mu_overlap {:?})",
                report.blowup.mu_overlap
            ));
        }
    }
    if let Some(want) = cfg.expect.local_bounded {
        if controls.is_empty() {
            out.push("local_bounded expected but no control_point monitor is configured".into());
        }
        for b in report.local_bounds.iter().filter(|b| controls.contains(&b.label)) {
            if b.check.bounded != want {
                out.push(format!(
                    "expected {} bounded = {want}: sup {:.4e}, threshold {:.4e}",
                    b.label, b.check.sup, b.check.threshold
                ));
            }
        }
    }
    out
}

fn exit_code_for(cfg: &RunConfig, verdict: Verdict, failures: &[String]) -> i32 {
    if !failures.is_empty() {
        return exit::MISMATCH;
    }
    let stated = cfg.expect.outcome.is_some();
    match verdict {
        Verdict::Bounded => exit::BOUNDED,
        Verdict::BlowupSuspected if stated => exit::BLOWUP_EXPECTED,
        Verdict::BlowupSuspected => exit::BLOWUP,
        Verdict::Inconclusive => exit::INCONCLUSIVE,
    }
}

/// Run a configuration; artifacts go to `out_dir` when given.
pub fn run_scenario(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<ScenarioOutcome> {
    let grid = cfg.build_grid()?;
    let kappa = build_coefficient(&cfg.kappa, &grid)?;
    let mu = build_coefficient(&cfg.mu, &grid)?;
    let coefficients = Coefficients::new(kappa, mu)?;
    let u0 = build_initial(&cfg.init, &grid, cfg.seed)?;
    let resolved = resolve_monitors(&cfg.monitors, &coefficients.mu)?;
    let monitors: Vec<Box<dyn Monitor>> = resolved
        .specs
        .iter()
        .cloned()
        .map(|s| Box::new(s) as Box<dyn Monitor>)
        .collect();
    let opts = RunOptions {
        cadence: cfg.cadence,
        snapshot_times: cfg.snapshots.clone(),
    };
    log::info!("running {} on {}x{} to t = {}", cfg.name, grid.nx, grid.ny, cfg.stepper.t_end);
    let out = run(u0.clone(), &coefficients, &cfg.stepper, &monitors, &opts)?;

    let detect = DetectConfig {
        fit_samples: cfg.fit_samples,
        ..Default::default()
    };
    let blowup = blowup_report(
        &out.series,
        &out.state.u,
        &coefficients.mu,
        &detect,
        cfg.blowup_fraction,
        cfg.eps_mu,
    );
    let times = out.series.times();
    let local_bounds = resolved
        .specs
        .iter()
        .filter(|s| matches!(s.kind, MonitorKind::UInfLocal { .. }))
        .map(|s| {
            let label = s.label();
            let values = out.series.column(&label).unwrap_or_default();
            LabelledBound {
                check: check_local_boundedness(&times, &values, None),
                label,
            }
        })
        .collect();
    let local_lp = resolved
        .local_lp_labels
        .iter()
        .map(|label| {
            let values = out.series.column(label).unwrap_or_default();
            MedianCheck {
                label: label.clone(),
                max: values.iter().copied().fold(0.0, f64::max),
                median_ratio: running_median_ratio(&values),
            }
        })
        .collect();
    let certificates = resolved
        .cutoffs
        .iter()
        .map(|c| CertificateSummary {
            label: c.label.clone(),
            all_passed: c.report.all_passed(),
            eta: c.cutoff.eta,
            c_phi: c.cutoff.c_phi,
            c_phi_continuous: c.cutoff.c_phi_continuous,
        })
        .collect();
    let mut report = ScenarioReport {
        name: cfg.name.clone(),
        exit_code: 0,
        blowup,
        steps: out.state.step_index,
        initial_mass: integrate(&u0),
        final_mass: integrate(&out.state.u),
        mass_comparison_ratio: mass_comparison_ratio(&out.series, coefficients.kappa_plus_max()),
        clipped_mass: out.state.clipped_total,
        local_bounds,
        local_lp,
        certificates,
        expectation_failures: Vec::new(),
    };
    report.expectation_failures = expectation_failures(cfg, &report, &resolved.control_labels);
    report.exit_code = exit_code_for(cfg, report.blowup.verdict, &report.expectation_failures);

    let outcome = ScenarioOutcome {
        report,
        series: out.series,
        state: out.state,
        coefficients,
        u0,
        cutoffs: resolved.cutoffs,
        snapshots: out.snapshots,
    };
    if let Some(dir) = out_dir.or(cfg.out_dir.as_deref()) {
        write_artifacts(dir, &outcome)?;
    }
    Ok(outcome)
}

/// `series.csv`, `report.json`, `final_u.snap`, `mu.snap`, snapshots and
/// cutoff certificates under `dir`.
pub fn write_artifacts(dir: &Path, o: &ScenarioOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    o.series.write_csv(&mut csv)?;
    fs::write(dir.join("series.csv"), csv)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&o.report)?)?;
    save_snapshot(&dir.join("final_u.snap"), &o.state.u, o.state.t)?;
    save_snapshot(&dir.join("mu.snap"), &o.coefficients.mu, 0.0)?;
    for (k, (t, f)) in o.snapshots.iter().enumerate() {
        save_snapshot(&dir.join(format!("u_{k:03}.snap")), f, *t)?;
    }
    for c in &o.cutoffs {
        save_snapshot(&dir.join(format!("cutoff_{}.snap", c.label)), &c.cutoff.phi, 0.0)?;
        fs::write(dir.join(format!("cutoff_{}.txt", c.label)), format!("{}\n", c.report))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nn = 16\n[init]\nconstant = 1\n[mu]\nconstant = 1\n[stepper]\nt_end = 0.01\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid.nx, 16);
        assert_eq!(c.grid.lx, 1.0);
        assert_eq!(c.stepper.cfl_safety, 0.4);
        assert_eq!(c.init.kind, InitKind::Constant(1.0));
        assert_eq!(c.kappa, CoefficientSpec::Constant(0.0));
    }

    #[test]
    fn negative_mu_rejected() {
        let e = parse_config("[mu]\nconstant = -1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
    }

    #[test]
    fn unknown_key_named() {
        let e = parse_config("[grid]\nn = 8\n[mu]\nmu_typo = 1\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("mu_typo") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn pi_suffix() {
        assert_eq!(parse_num("12pi", 1).unwrap(), 12.0 * std::f64::consts::PI);
        assert_eq!(parse_num("pi", 1).unwrap(), std::f64::consts::PI);
        assert_eq!(parse_num(" 2.5 ", 1).unwrap(), 2.5);
        assert!(parse_num("twelve", 1).is_err());
    }

    #[test]
    fn presets_parse() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert_eq!(c.name, name);
        }
        assert!(preset("nope").is_none());
        let c = preset("local_bound_control").unwrap();
        assert_eq!(c.monitors.local_lp, vec![(3.5, 2.0, 1.5)]);
        assert_eq!(c.expect.local_bounded, Some(true));
    }

    #[test]
    fn initial_masses() {
        let g = Grid::new(1.0, 1.0, 32, 32).unwrap();
        let spec = InitSpec {
            kind: InitKind::ConstantMass(3.0),
            background: 0.0,
            noise: 0.0,
        };
        let u = build_initial(&spec, &g, 0).unwrap();
        assert!((u.values[0] - 3.0).abs() < 1e-15);
        let spec = InitSpec {
            kind: InitKind::Bumps(vec![
                Bump { cx: 0.3, cy: 0.3, width: 0.05, mass: 1.5 },
                Bump { cx: 0.7, cy: 0.6, width: 0.08, mass: 2.0 },
            ]),
            background: 0.0,
            noise: 0.0,
        };
        let u = build_initial(&spec, &g, 0).unwrap();
        assert!((integrate(&u) - 3.5).abs() < 1e-8 * 3.5);
    }

    #[test]
    fn radial_ramp_values() {
        let g = Grid::new(4.0, 4.0, 64, 64).unwrap();
        let spec = CoefficientSpec::Radial { inner: 0.0, outer: 1.0, cx: 2.0, cy: 2.0, r0: 0.5, r1: 1.0 };
        let mu = build_coefficient(&spec, &g).unwrap();
        let (i, j) = g.cell_of(2.0, 2.0);
        assert_eq!(mu.at(i, j), 0.0);
        assert_eq!(mu.at(0, 0), 1.0);
        assert!(mu.min() >= 0.0 && mu.max() <= 1.0);
    }

    #[test]
    fn exit_codes_follow_expectations() {
        let mut c = parse_config(MINIMAL).unwrap();
        assert_eq!(exit_code_for(&c, Verdict::Bounded, &[]), exit::BOUNDED);
        assert_eq!(exit_code_for(&c, Verdict::BlowupSuspected, &[]), exit::BLOWUP);
        assert_eq!(exit_code_for(&c, Verdict::Inconclusive, &[]), exit::INCONCLUSIVE);
        c.expect.outcome = Some(ExpectedOutcome::Blowup);
        assert_eq!(exit_code_for(&c, Verdict::BlowupSuspected, &[]), exit::BLOWUP_EXPECTED);
        assert_eq!(exit_code_for(&c, Verdict::Bounded, &["x".into()]), exit::MISMATCH);
    }

    #[test]
    fn small_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse_config(MINIMAL).unwrap();
        let o = run_scenario(&c, Some(dir.path())).unwrap();
        assert_eq!(o.exit_code(), exit::BOUNDED);
        for f in ["series.csv", "report.json", "final_u.snap", "mu.snap"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
