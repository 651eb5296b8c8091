//! Adaptive explicit time stepping of the density equation with the
//! screened Poisson constraint re-solved after every update.

use serde::{Deserialize, Serialize};

use crate::elliptic::{EllipticSolveConfig, ScreenedPoissonSolver};
use crate::error::{Error, Result};
use crate::grid::{check_same_grid, ScalarField};
use crate::ops::{laplacian_into, upwind_divergence_into, FaceVelocity};
use crate::series::{Sample, TimeSeries};

/// Guard added to the reaction rate denominator of the step bound.
const RATE_EPS: f64 = 1e-30;

/// Logistic coefficients sampled at cell centers.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub kappa: ScalarField,
    pub mu: ScalarField,
}

impl Coefficients {
    pub fn new(kappa: ScalarField, mu: ScalarField) -> Result<Self> {
        check_same_grid(&kappa.grid, &mu.grid)?;
        if !kappa.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        if let Some(k) = mu.values.iter().position(|&m| m < 0.0) {
            let (i, j) = mu.grid.ij(k);
            return Err(Error::InvalidParameter(format!(
                "mu must be nonnegative, found {} at cell ({i}, {j})",
                mu.values[k]
            )));
        }
        Ok(Self { kappa, mu })
    }

    pub fn constant(grid: crate::grid::Grid, kappa: f64, mu: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, kappa), ScalarField::constant(grid, mu))
    }

    pub fn kappa_inf(&self) -> f64 {
        self.kappa.max_abs()
    }

    pub fn kappa_plus_max(&self) -> f64 {
        self.kappa.max().max(0.0)
    }

    pub fn mu_inf(&self) -> f64 {
        self.mu.max_abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReactionScheme {
    /// `(u + dt (T + κ⁺u)) / (1 + dt (μu + κ⁻))`, unconditionally positive.
    #[default]
    Patankar,
    /// Forward Euler on the whole right-hand side; conserves the discrete mass law exactly.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Running,
    BlowupSuspected,
    Completed,
    DtUnderflow,
}

impl RunStatus {
    /// Both flagged terminations count as suspected blow-up.
    pub fn is_blowup(self) -> bool {
        matches!(self, RunStatus::BlowupSuspected | RunStatus::DtUnderflow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub cfl_safety: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Density flagging blow-up; `None` means `1e4 * max(1, max u0)`.
    pub u_cap: Option<f64>,
    pub t_end: f64,
    pub scheme: ReactionScheme,
    pub elliptic: EllipticSolveConfig,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            cfl_safety: 0.4,
            dt_min: 1e-10,
            dt_max: 1e-2,
            u_cap: None,
            t_end: 1.0,
            scheme: ReactionScheme::Patankar,
            elliptic: EllipticSolveConfig::default(),
        }
    }
}

impl StepperConfig {
    pub fn resolved_u_cap(&self, u0: &ScalarField) -> f64 {
        self.u_cap.unwrap_or_else(|| 1e4 * u0.max().max(1.0))
    }

    pub fn validate(&self, u0: &ScalarField) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_safety must lie in (0, 1), got {}",
                self.cfl_safety
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < dt_min < dt_max, got {} and {}",
                self.dt_min, self.dt_max
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be positive, got {}", self.t_end)));
        }
        let cap = self.resolved_u_cap(u0);
        if !(cap > u0.max()) {
            return Err(Error::InvalidParameter(format!(
                "u_cap = {cap} must exceed max u0 = {}",
                u0.max()
            )));
        }
        self.elliptic.validate(&u0.grid)
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub u: ScalarField,
    pub v: ScalarField,
    pub t: f64,
    pub dt: f64,
    pub step_index: usize,
    pub status: RunStatus,
    /// Mass added by clipping negative values to zero in the last step.
    pub last_clipped: f64,
    pub clipped_total: f64,
    pub cg_iterations: usize,
}

impl SimState {
    /// Initial state; `v` is solved from `u0`.
    pub fn new(u0: ScalarField, elliptic: &EllipticSolveConfig) -> Result<Self> {
        if !u0.is_finite() {
            return Err(Error::InvalidParameter("initial density is not finite".into()));
        }
        if let Some(k) = u0.values.iter().position(|&x| x < 0.0) {
            let (i, j) = u0.grid.ij(k);
            return Err(Error::InvalidParameter(format!(
                "initial density must be nonnegative, found {} at cell ({i}, {j})",
                u0.values[k]
            )));
        }
        let solver = ScreenedPoissonSolver::new(u0.grid, *elliptic)?;
        Self::with_solver(u0, &solver)
    }

    fn with_solver(u0: ScalarField, solver: &ScreenedPoissonSolver) -> Result<Self> {
        let (v, stats) = solver.solve(&u0, &ScalarField::zeros(u0.grid))?;
        Ok(Self {
            u: u0,
            v,
            t: 0.0,
            dt: 0.0,
            step_index: 0,
            status: RunStatus::Running,
            last_clipped: 0.0,
            clipped_total: 0.0,
            cg_iterations: stats.iterations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DtLimiter {
    Diffusion,
    Advection,
    Reaction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtBound {
    /// Step demanded by stability before clamping.
    pub raw: f64,
    /// `raw` clamped to `[dt_min, dt_max]`.
    pub dt: f64,
    pub limiter: DtLimiter,
}

/// Explicit stability bound: diffusion `h²/4`, advection `h / max|∇v|_face`,
/// reaction `1 / (‖κ‖∞ + 2‖μ‖∞ max u)`, scaled by `cfl_safety`.
pub fn stable_dt(state: &SimState, coeffs: &Coefficients, cfg: &StepperConfig) -> DtBound {
    let faces = FaceVelocity::from_potential(&state.v);
    stable_dt_with_faces(state, &faces, coeffs, cfg)
}

fn stable_dt_with_faces(
    state: &SimState,
    faces: &FaceVelocity,
    coeffs: &Coefficients,
    cfg: &StepperConfig,
) -> DtBound {
    let h = state.u.grid.h_min();
    let diffusion = h * h / 4.0;
    let speed = faces.max_abs();
    let advection = if speed > 0.0 { h / speed } else { f64::INFINITY };
    let reaction = 1.0 / (coeffs.kappa_inf() + 2.0 * coeffs.mu_inf() * state.u.max().max(0.0) + RATE_EPS);
    let (limit, limiter) = [
        (diffusion, DtLimiter::Diffusion),
        (advection, DtLimiter::Advection),
        (reaction, DtLimiter::Reaction),
    ]
    .into_iter()
    .fold((f64::INFINITY, DtLimiter::Diffusion), |acc, c| if c.0 < acc.0 { c } else { acc });
    let raw = cfg.cfl_safety * limit;
    DtBound {
        raw,
        dt: raw.clamp(cfg.dt_min, cfg.dt_max),
        limiter,
    }
}

/// Advance one step of length `dt`, then re-solve `v`.
pub fn step(state: &SimState, coeffs: &Coefficients, dt: f64, cfg: &StepperConfig) -> Result<SimState> {
    let faces = FaceVelocity::from_potential(&state.v);
    let solver = ScreenedPoissonSolver::new(state.u.grid, cfg.elliptic)?;
    step_with_faces(state, &faces, coeffs, dt, cfg, &solver)
}

fn step_with_faces(
    state: &SimState,
    faces: &FaceVelocity,
    coeffs: &Coefficients,
    dt: f64,
    cfg: &StepperConfig,
    solver: &ScreenedPoissonSolver,
) -> Result<SimState> {
    check_same_grid(&state.u.grid, &coeffs.mu.grid)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let g = state.u.grid;
    let n = g.len();
    let u = &state.u.values;
    let mut diff = vec![0.0; n];
    laplacian_into(&g, u, &mut diff);
    let mut adv = vec![0.0; n];
    upwind_divergence_into(&g, u, faces, &mut adv);

    let kappa = &coeffs.kappa.values;
    let mu = &coeffs.mu.values;
    let mut next = vec![0.0; n];
    let mut clipped = 0.0;
    for k in 0..n {
        let transport = diff[k] - adv[k];
        let uk = u[k];
        let value = match cfg.scheme {
            ReactionScheme::Explicit => uk + dt * (transport + kappa[k] * uk - mu[k] * uk * uk),
            ReactionScheme::Patankar => {
                let kp = kappa[k].max(0.0);
                let km = (-kappa[k]).max(0.0);
                (uk + dt * (transport + kp * uk)) / (1.0 + dt * (mu[k] * uk + km))
            }
        };
        if value < 0.0 {
            clipped -= value;
            next[k] = 0.0;
        } else {
            next[k] = value;
        }
        if !value.is_finite() {
            return Err(Error::StateDiverged {
                step: state.step_index + 1,
                time: state.t + dt,
            });
        }
    }
    let clipped = clipped * g.cell_area();
    if clipped > 0.0 {
        log::debug!(
            "step {}: clipped {clipped:.3e} of negative mass",
            state.step_index + 1
        );
    }
    let u_next = ScalarField { grid: g, values: next };
    let (v_next, stats) = solver.solve(&u_next, &state.v)?;
    Ok(SimState {
        u: u_next,
        v: v_next,
        t: state.t + dt,
        dt,
        step_index: state.step_index + 1,
        status: RunStatus::Running,
        last_clipped: clipped,
        clipped_total: state.clipped_total + clipped,
        cg_iterations: state.cg_iterations + stats.iterations,
    })
}

/// A scalar functional sampled along a run.
pub trait Monitor: Send + Sync {
    /// Column name in the time series.
    fn label(&self) -> String;
    fn measure(&self, state: &SimState) -> f64;
    /// Sample every `cadence` steps; `None` uses the run's cadence.
    fn cadence(&self) -> Option<usize> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Record a sample every this many steps (the final state is always recorded).
    pub cadence: usize,
    /// Times at which a copy of `u` is kept; steps are shortened to land on them.
    pub snapshot_times: Vec<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            cadence: 1,
            snapshot_times: Vec::new(),
        }
    }
}

pub struct RunOutput {
    pub state: SimState,
    pub series: TimeSeries,
    pub snapshots: Vec<(f64, ScalarField)>,
    pub u_cap: f64,
}

/// Step from `u0` until `t_end`, a blow-up flag, or step-size underflow.
pub fn run(
    u0: ScalarField,
    coeffs: &Coefficients,
    cfg: &StepperConfig,
    monitors: &[Box<dyn Monitor>],
    opts: &RunOptions,
) -> Result<RunOutput> {
    check_same_grid(&u0.grid, &coeffs.mu.grid)?;
    cfg.validate(&u0)?;
    let u_cap = cfg.resolved_u_cap(&u0);
    let cadence = opts.cadence.max(1);
    let mut pending: Vec<f64> = opts
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t >= 0.0 && t <= cfg.t_end)
        .collect();
    pending.sort_by(|a, b| a.total_cmp(b));
    pending.reverse();

    let solver = ScreenedPoissonSolver::new(u0.grid, cfg.elliptic)?;
    let mut state = SimState::new(u0, &cfg.elliptic)?;
    let labels = monitors.iter().map(|m| m.label()).collect();
    let mut series = TimeSeries::new(labels, cfg.t_end, u_cap);
    let mut snapshots = Vec::new();
    let mut last = vec![f64::NAN; monitors.len()];

    record(&mut series, &state, monitors, &mut last, cadence, true);
    while pending.last().is_some_and(|&t| t <= 0.0) {
        pending.pop();
        snapshots.push((0.0, state.u.clone()));
    }

    let t_tol = 1e-12 * cfg.t_end;
    let status = loop {
        if state.t >= cfg.t_end - t_tol {
            break RunStatus::Completed;
        }
        if state.u.max() >= u_cap {
            break RunStatus::BlowupSuspected;
        }
        let faces = FaceVelocity::from_potential(&state.v);
        let bound = stable_dt_with_faces(&state, &faces, coeffs, cfg);
        if bound.raw < cfg.dt_min {
            log::info!(
                "stability demands dt = {:.3e} < dt_min at t = {:.6}",
                bound.raw,
                state.t
            );
            break RunStatus::DtUnderflow;
        }
        let mut dt = bound.dt.min(cfg.t_end - state.t);
        if let Some(&ts) = pending.last() {
            if ts > state.t && ts - state.t < dt {
                dt = ts - state.t;
            }
        }
        match step_with_faces(&state, &faces, coeffs, dt, cfg, &solver) {
            Ok(next) => state = next,
            Err(Error::StateDiverged { step, time }) => {
                log::warn!("non-finite density at step {step}, t = {time:.6e}");
                break RunStatus::BlowupSuspected;
            }
            Err(e) => return Err(e),
        }
        record(&mut series, &state, monitors, &mut last, cadence, false);
        while pending.last().is_some_and(|&t| t <= state.t + t_tol) {
            let t = pending.pop().unwrap_or(state.t);
            snapshots.push((t, state.u.clone()));
        }
    };
    state.status = status;
    if series.samples.last().map(|s| s.step) != Some(state.step_index) {
        record(&mut series, &state, monitors, &mut last, cadence, true);
    }
    series.status = status;
    Ok(RunOutput {
        state,
        series,
        snapshots,
        u_cap,
    })
}

fn record(
    series: &mut TimeSeries,
    state: &SimState,
    monitors: &[Box<dyn Monitor>],
    last: &mut [f64],
    cadence: usize,
    force: bool,
) {
    let due = force || state.step_index.is_multiple_of(cadence);
    let mut any_monitor = false;
    for (m, slot) in monitors.iter().zip(last.iter_mut()) {
        let every = m.cadence().unwrap_or(cadence).max(1);
        if force || state.step_index.is_multiple_of(every) {
            *slot = m.measure(state);
            any_monitor = true;
        }
    }
    if !(due || any_monitor) {
        return;
    }
    let argmax = state.u.argmax();
    series.samples.push(Sample {
        step: state.step_index,
        t: state.t,
        dt: state.dt,
        mass: crate::ops::integrate(&state.u),
        max_u: state.u.values[argmax],
        min_u: state.u.min(),
        argmax,
        clipped: state.clipped_total,
        cg_iterations: state.cg_iterations,
        monitors: last.to_vec(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::ops::integrate;

    fn grid(n: usize) -> Grid {
        Grid::new(1.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn rejects_negative_mu() {
        let g = grid(8);
        let mu = ScalarField::from_fn(g, |x, _| x - 0.5);
        assert!(Coefficients::new(ScalarField::zeros(g), mu).is_err());
    }

    #[test]
    fn diffusion_only_bound() {
        let g = grid(16);
        let cfg = StepperConfig { cfl_safety: 0.5, dt_max: 1.0, ..Default::default() };
        let s = SimState::new(ScalarField::zeros(g), &cfg.elliptic).unwrap();
        let c = Coefficients::constant(g, 0.0, 0.0).unwrap();
        let b = stable_dt(&s, &c, &cfg);
        let h = 1.0 / 16.0;
        assert!((b.dt - 0.5 * h * h / 4.0).abs() < 1e-18);
        assert_eq!(b.limiter, DtLimiter::Diffusion);

        let s2 = SimState::new(ScalarField::zeros(grid(32)), &cfg.elliptic).unwrap();
        let c2 = Coefficients::constant(grid(32), 0.0, 0.0).unwrap();
        let b2 = stable_dt(&s2, &c2, &cfg);
        assert!((b.dt / b2.dt - 4.0).abs() < 1e-12);

        let tight = StepperConfig { dt_max: 1e-6, ..cfg };
        assert_eq!(stable_dt(&s, &c, &tight).dt, 1e-6);
    }

    #[test]
    fn reaction_limits_large_densities() {
        let g = grid(16);
        let cfg = StepperConfig::default();
        let c = Coefficients::constant(g, 0.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for amp in [1.0, 1e3, 1e6, 1e9] {
            let s = SimState::new(ScalarField::constant(g, amp), &cfg.elliptic).unwrap();
            let b = stable_dt(&s, &c, &cfg);
            assert!(b.raw < prev || amp == 1.0);
            prev = b.raw;
        }
        assert!(prev < 1e-9);
    }

    #[test]
    fn zero_is_invariant() {
        let g = grid(16);
        let c = Coefficients::constant(g, 1.0, 1.0).unwrap();
        let cfg = StepperConfig::default();
        let mut s = SimState::new(ScalarField::zeros(g), &cfg.elliptic).unwrap();
        for _ in 0..20 {
            s = step(&s, &c, 1e-3, &cfg).unwrap();
        }
        assert!(s.u.values.iter().all(|&x| x == 0.0));
        assert!(s.v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn explicit_step_mass_identity() {
        let g = grid(24);
        let u0 = ScalarField::from_fn(g, |x, y| 1.0 + 0.5 * (6.0 * x).sin() * (4.0 * y).cos());
        let kappa = ScalarField::from_fn(g, |x, _| x - 0.3);
        let mu = ScalarField::from_fn(g, |_, y| y * y);
        let c = Coefficients::new(kappa.clone(), mu.clone()).unwrap();
        let cfg = StepperConfig { scheme: ReactionScheme::Explicit, ..Default::default() };
        let s0 = SimState::new(u0, &cfg.elliptic).unwrap();
        let dt = stable_dt(&s0, &c, &cfg).dt;
        let s1 = step(&s0, &c, dt, &cfg).unwrap();
        let source: Vec<f64> = (0..g.len())
            .map(|k| kappa.values[k] * s0.u.values[k] - mu.values[k] * s0.u.values[k].powi(2))
            .collect();
        let react = integrate(&ScalarField::from_values(g, source).unwrap());
        let lhs = integrate(&s1.u) - integrate(&s0.u);
        let rhs = dt * react + s1.last_clipped;
        assert!((lhs - rhs).abs() <= 1e-10 * integrate(&s0.u));
    }

    #[test]
    fn run_of_zero_data_completes() {
        let g = grid(16);
        let c = Coefficients::constant(g, 0.3, 1.0).unwrap();
        let cfg = StepperConfig { t_end: 0.05, ..Default::default() };
        let out = run(ScalarField::zeros(g), &c, &cfg, &[], &RunOptions::default()).unwrap();
        assert_eq!(out.state.status, RunStatus::Completed);
        assert!(out.series.samples.iter().all(|s| s.max_u == 0.0 && s.mass == 0.0));
        assert!((out.state.t - 0.05).abs() < 1e-12);
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let g = grid(16);
        let c = Coefficients::constant(g, 0.0, 1.0).unwrap();
        let cfg = StepperConfig { t_end: 0.01, ..Default::default() };
        let opts = RunOptions { cadence: 5, snapshot_times: vec![0.0, 0.003, 0.01] };
        let u0 = ScalarField::from_fn(g, |x, y| 1.0 + x * y);
        let out = run(u0, &c, &cfg, &[], &opts).unwrap();
        let times: Vec<f64> = out.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(times.len(), 3);
        assert!((times[1] - 0.003).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let g = grid(8);
        let u0 = ScalarField::constant(g, 2.0);
        assert!(StepperConfig { cfl_safety: 1.5, ..Default::default() }.validate(&u0).is_err());
        assert!(StepperConfig { dt_min: 1.0, dt_max: 0.1, ..Default::default() }.validate(&u0).is_err());
        assert!(StepperConfig { u_cap: Some(1.0), ..Default::default() }.validate(&u0).is_err());
        assert!(StepperConfig::default().validate(&u0).is_ok());
        assert_eq!(StepperConfig::default().resolved_u_cap(&u0), 2e4);
    }
}
