//! Functionals sampled along a run, blow-up detection, and the checks of
//! where blow-up may and may not happen.

use std::sync::Arc;

use serde::Serialize;

use crate::cutoff::Cutoff;
use crate::error::{Error, Result};
use crate::grid::{check_same_grid, CellMask, Grid, ScalarField};
use crate::ops::{gradient_magnitude, integrate};
use crate::series::TimeSeries;
use crate::stepper::{Monitor, RunStatus, SimState};

/// Exponent `η = 1/(2(p+1))` required of the cutoff in the localized `L^p` bound.
pub fn eta_for_p(p: f64) -> f64 {
    1.0 / (2.0 * (p + 1.0))
}

/// Upper end of the admissible range `p < 1/(1 − μ₀)₊`.
pub fn p_upper(mu0: f64) -> f64 {
    if mu0 >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - mu0)
    }
}

/// `q = 2p/(2−p)`, the gradient exponent paired with a localized `L^p` bound.
pub fn derived_q(p: f64) -> f64 {
    let q = 2.0 * p / (2.0 - p);
    assert!(p > 1.0 && p < 2.0 && q > 2.0, "q = 2p/(2-p) = {q} from p = {p} must exceed 2");
    q
}

pub fn mass_l1(u: &ScalarField) -> f64 {
    integrate(&u.map(f64::abs))
}

/// `∫ φ uᵖ`, rejecting a cutoff whose `η` differs from `1/(2(p+1))`.
pub fn localized_lp(u: &ScalarField, c: &Cutoff, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    let expected = eta_for_p(p);
    if (c.eta - expected).abs() > 1e-12 {
        return Err(Error::EtaMismatch {
            found: c.eta,
            expected,
            p,
        });
    }
    check_same_grid(&u.grid, &c.phi.grid)?;
    Ok(localized_lp_unchecked(u, &c.phi, p))
}

fn localized_lp_unchecked(u: &ScalarField, phi: &ScalarField, p: f64) -> f64 {
    let s: f64 = phi
        .values
        .iter()
        .zip(&u.values)
        .filter(|(f, _)| **f > 0.0)
        .map(|(f, x)| f * x.max(0.0).powf(p))
        .sum();
    s * u.grid.cell_area()
}

/// Check the hypotheses of the localized `L^p` bound: `1 < p < 1/(1−μ₀)₊`,
/// `η = 1/(2(p+1))`, and `supp φ ⊂ {μ > μ₀}`.
pub fn check_local_lp_hypotheses(c: &Cutoff, p: f64, mu: &ScalarField, mu0: f64) -> Result<()> {
    let hi = p_upper(mu0);
    if !(p > 1.0 && p < hi) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} must lie in (1, {hi}) for mu0 = {mu0}"
        )));
    }
    let expected = eta_for_p(p);
    if (c.eta - expected).abs() > 1e-12 {
        return Err(Error::EtaMismatch {
            found: c.eta,
            expected,
            p,
        });
    }
    check_same_grid(&mu.grid, &c.phi.grid)?;
    if let Some(k) = (0..mu.grid.len()).find(|&k| c.phi.values[k] > 0.0 && !(mu.values[k] > mu0)) {
        let (i, j) = mu.grid.ij(k);
        return Err(Error::InvalidParameter(format!(
            "cutoff support reaches cell ({i}, {j}) where mu = {} <= mu0 = {mu0}",
            mu.values[k]
        )));
    }
    Ok(())
}

/// `(Σ_{region} |∇_h v|^q h_x h_y)^{1/q}`.
pub fn grad_norm_local(v: &ScalarField, region: &CellMask, q: f64) -> f64 {
    if region.is_empty() {
        log::warn!("gradient norm over an empty region");
        return 0.0;
    }
    let g = gradient_magnitude(v);
    let s: f64 = region.indices().map(|k| g.values[k].powf(q)).sum();
    (s * v.grid.cell_area()).powf(1.0 / q)
}

/// `(‖v‖_p^p + ‖∇_h v‖_p^p)^{1/p}` for any `p ≥ 1`.
pub fn w1p_norm(v: &ScalarField, p: f64) -> f64 {
    let g = gradient_magnitude(v);
    let s: f64 = v
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a.abs().powf(p) + b.powf(p))
        .sum();
    (s * v.grid.cell_area()).powf(1.0 / p)
}

/// `W^{1,p}` norm of `v`, for `p` in the range `[1, 2)` where it is bounded.
pub fn sobolev_norm_v(v: &ScalarField, p: f64) -> Result<f64> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::ExponentOutOfRange(p));
    }
    Ok(w1p_norm(v, p))
}

pub fn lq_norm(v: &ScalarField, q: f64) -> f64 {
    let s: f64 = v.values.iter().map(|a| a.abs().powf(q)).sum();
    (s * v.grid.cell_area()).powf(1.0 / q)
}

/// `max φ u`.
pub fn phi_u_inf(u: &ScalarField, phi: &ScalarField) -> f64 {
    u.values.iter().zip(&phi.values).map(|(a, b)| a * b).fold(0.0, f64::max)
}

/// `max_{region} u`; 0 on an empty region.
pub fn u_inf_local(u: &ScalarField, region: &CellMask) -> f64 {
    region.indices().map(|k| u.values[k]).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub enum MonitorKind {
    MassL1,
    VW1p { p: f64 },
    VLq { q: f64 },
    LocalLp { cutoff: Arc<Cutoff>, p: f64 },
    GradVLocal { region: CellMask, q: f64 },
    PhiUInf { cutoff: Arc<Cutoff> },
    UInfLocal { region: CellMask },
}

#[derive(Debug, Clone)]
pub struct MonitorSpec {
    pub kind: MonitorKind,
    /// Every `k` steps; `None` uses the run cadence.
    pub cadence: Option<usize>,
    /// Optional suffix appended to the column label.
    pub tag: Option<String>,
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

impl MonitorSpec {
    pub fn new(kind: MonitorKind) -> Self {
        Self {
            kind,
            cadence: None,
            tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn with_cadence(mut self, every: usize) -> Self {
        self.cadence = Some(every.max(1));
        self
    }

    /// `W^{1,p}` norm of `v`; `p` must lie in `[1, 2)`.
    pub fn v_w1p(p: f64) -> Result<Self> {
        if !(1.0..2.0).contains(&p) {
            return Err(Error::ExponentOutOfRange(p));
        }
        Ok(Self::new(MonitorKind::VW1p { p }))
    }

    /// Localized `∫φuᵖ`, after checking the hypotheses against `μ` and `μ₀`.
    pub fn local_lp(cutoff: Arc<Cutoff>, p: f64, mu: &ScalarField, mu0: f64) -> Result<Self> {
        check_local_lp_hypotheses(&cutoff, p, mu, mu0)?;
        Ok(Self::new(MonitorKind::LocalLp { cutoff, p }))
    }

    /// The gradient monitor paired with a localized `L^p` monitor: the
    /// `L^q` norm of `∇v` on the plateau set `K`, `q = 2p/(2−p)`.
    pub fn derived_grad_v(&self) -> Option<Self> {
        match &self.kind {
            MonitorKind::LocalLp { cutoff, p } => {
                let q = derived_q(*p);
                Some(Self {
                    kind: MonitorKind::GradVLocal {
                        region: cutoff.k.clone(),
                        q,
                    },
                    cadence: self.cadence,
                    tag: self.tag.clone(),
                })
            }
            _ => None,
        }
    }

    pub fn base_label(&self) -> String {
        match &self.kind {
            MonitorKind::MassL1 => "mass_L1".into(),
            MonitorKind::VW1p { p } => format!("V_W1p_p{}", fmt_num(*p)),
            MonitorKind::VLq { q } => format!("V_Lq_q{}", fmt_num(*q)),
            MonitorKind::LocalLp { cutoff, p } => {
                format!("localLp_p{}_eta{}", fmt_num(*p), fmt_num(cutoff.eta))
            }
            MonitorKind::GradVLocal { q, .. } => format!("gradVLocal_q{}", fmt_num(*q)),
            MonitorKind::PhiUInf { cutoff } => format!("phiUInf_eta{}", fmt_num(cutoff.eta)),
            MonitorKind::UInfLocal { .. } => "uInfLocal".into(),
        }
    }

    /// Check that masks and cutoffs live on `grid`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let mask_ok = |m: &CellMask| m.grid_nx == grid.nx && m.grid_ny == grid.ny;
        let ok = match &self.kind {
            MonitorKind::LocalLp { cutoff, .. } | MonitorKind::PhiUInf { cutoff } => {
                cutoff.phi.grid.same_shape(grid)
            }
            MonitorKind::GradVLocal { region, .. } | MonitorKind::UInfLocal { region } => mask_ok(region),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn evaluate(&self, u: &ScalarField, v: &ScalarField) -> f64 {
        match &self.kind {
            MonitorKind::MassL1 => mass_l1(u),
            MonitorKind::VW1p { p } => w1p_norm(v, *p),
            MonitorKind::VLq { q } => lq_norm(v, *q),
            MonitorKind::LocalLp { cutoff, p } => localized_lp_unchecked(u, &cutoff.phi, *p),
            MonitorKind::GradVLocal { region, q } => grad_norm_local(v, region, *q),
            MonitorKind::PhiUInf { cutoff } => phi_u_inf(u, &cutoff.phi),
            MonitorKind::UInfLocal { region } => u_inf_local(u, region),
        }
    }
}

impl Monitor for MonitorSpec {
    fn label(&self) -> String {
        match &self.tag {
            Some(t) => format!("{}_{t}", self.base_label()),
            None => self.base_label(),
        }
    }

    fn measure(&self, state: &SimState) -> f64 {
        self.evaluate(&state.u, &state.v)
    }

    fn cadence(&self) -> Option<usize> {
        self.cadence
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Bounded,
    BlowupSuspected,
    Inconclusive,
}

#[derive(Debug, Clone, Copy)]
pub struct DetectConfig {
    /// Samples used in the extrapolation of `1/max u`.
    pub fit_samples: usize,
    /// Growth of `max u` over the run that makes a completed run inconclusive.
    pub growth_factor: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            fit_samples: 20,
            growth_factor: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub verdict: Verdict,
    pub status: RunStatus,
    pub final_time: f64,
    pub t_end: f64,
    pub u_cap: f64,
    /// Extrapolated zero of `1/max u`; a heuristic, not a rate-based estimate.
    pub t_max_estimate: Option<f64>,
    pub t_max_is_heuristic: bool,
    /// Cells `[i, j]` of the estimated blow-up set.
    pub blowup_cells: Vec<[usize; 2]>,
    pub blowup_area: f64,
    pub eps_mu: Option<f64>,
    /// Fraction of blow-up cells with `μ ≤ eps_mu`.
    pub mu_overlap: Option<f64>,
    pub localized: Option<bool>,
    /// Location and value of the running maximum over the recorded samples.
    pub witness: Vec<PeakSample>,
}

impl BlowupReport {
    /// Attach the blow-up set and its overlap with `{μ ≤ eps_mu}`.
    pub fn attach_set(&mut self, grid: &Grid, set: &CellMask, mu: &ScalarField, eps_mu: Option<f64>) {
        let eps = eps_mu.unwrap_or_else(|| default_eps_mu(mu));
        let (ok, overlap) = check_blowup_localization(set, mu, Some(eps));
        self.blowup_cells = set.cell_list().into_iter().map(|(i, j)| [i, j]).collect();
        self.blowup_area = set.area(grid);
        self.eps_mu = Some(eps);
        self.mu_overlap = Some(overlap);
        self.localized = Some(ok);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Zero of the least-squares line through `(t, 1/max u)` over the last `k` samples.
pub fn extrapolate_blowup_time(times: &[f64], max_u: &[f64], k: usize) -> Option<f64> {
    let n = times.len().min(max_u.len());
    let k = k.min(n);
    if k < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (n - k..n)
        .filter(|&i| max_u[i] > 0.0 && max_u[i].is_finite())
        .map(|i| (times[i], 1.0 / max_u[i]))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let tb = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let yb = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tb) * (p.1 - yb)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tb).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return None;
    }
    let t = tb - yb / slope;
    t.is_finite().then_some(t)
}

/// Verdict and extrapolated blow-up time from a recorded series.
///
/// The verdict follows the run status; a run that completed after `max u`
/// grew by `growth_factor` or more is inconclusive.
pub fn detect_blowup(series: &TimeSeries, cfg: &DetectConfig) -> BlowupReport {
    if series.len() < 10 {
        log::warn!("blow-up detection on only {} samples", series.len());
    }
    let max_u = series.max_u();
    let times = series.times();
    let verdict = if series.status.is_blowup() {
        Verdict::BlowupSuspected
    } else {
        let first = max_u.first().copied().unwrap_or(0.0);
        let peak = max_u.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 && peak >= cfg.growth_factor * first {
            Verdict::Inconclusive
        } else {
            Verdict::Bounded
        }
    };
    let t_max_estimate = match verdict {
        Verdict::Bounded => None,
        _ => extrapolate_blowup_time(&times, &max_u, cfg.fit_samples),
    };
    BlowupReport {
        verdict,
        status: series.status,
        final_time: series.final_time(),
        t_end: series.t_end,
        u_cap: series.u_cap,
        t_max_estimate,
        t_max_is_heuristic: true,
        blowup_cells: Vec::new(),
        blowup_area: 0.0,
        eps_mu: None,
        mu_overlap: None,
        localized: None,
        witness: Vec::new(),
    }
}

/// Detection plus the witness history and, for blow-up runs, the blow-up
/// set and its overlap with `{μ ≤ eps_mu}`.
pub fn blowup_report(
    series: &TimeSeries,
    final_u: &ScalarField,
    mu: &ScalarField,
    cfg: &DetectConfig,
    fraction: f64,
    eps_mu: Option<f64>,
) -> BlowupReport {
    let g = final_u.grid;
    let mut report = detect_blowup(series, cfg);
    report.witness = series
        .samples
        .iter()
        .map(|s| {
            let (i, j) = g.ij(s.argmax.min(g.len() - 1));
            let (x, y) = g.center(i, j);
            PeakSample {
                t: s.t,
                x,
                y,
                value: s.max_u,
            }
        })
        .collect();
    if report.verdict == Verdict::BlowupSuspected {
        let set = blowup_set_with_history(final_u, series, fraction);
        report.attach_set(&g, &set, mu, eps_mu);
    }
    report
}

/// Cells where `u ≥ fraction · max u`.
pub fn estimate_blowup_set(final_u: &ScalarField, fraction: f64) -> CellMask {
    let g = final_u.grid;
    let m = final_u.max();
    if !(m > 0.0) {
        return CellMask::empty(&g);
    }
    let cut = fraction * m;
    CellMask::from_indices(&g, (0..g.len()).filter(|&k| final_u.values[k] >= cut))
}

/// `estimate_blowup_set` united with the cells that hosted the running
/// maximum during the last 10% of recorded steps.
pub fn blowup_set_with_history(final_u: &ScalarField, series: &TimeSeries, fraction: f64) -> CellMask {
    let g = final_u.grid;
    let mut set = estimate_blowup_set(final_u, fraction);
    if let Some(last) = series.samples.last() {
        let from = last.step - last.step / 10;
        let hist = series
            .samples
            .iter()
            .filter(|s| s.step >= from && s.argmax < g.len())
            .map(|s| s.argmax);
        set.union_with(&CellMask::from_indices(&g, hist));
    }
    set
}

/// `0.05 · max μ`.
pub fn default_eps_mu(mu: &ScalarField) -> f64 {
    0.05 * mu.max()
}

/// Whether every cell of `bset` has `μ ≤ eps_mu`, and the fraction that does.
/// An empty set is trivially localized.
pub fn check_blowup_localization(bset: &CellMask, mu: &ScalarField, eps_mu: Option<f64>) -> (bool, f64) {
    let eps = eps_mu.unwrap_or_else(|| default_eps_mu(mu));
    let n = bset.count();
    if n == 0 {
        return (true, 1.0);
    }
    let inside = bset.indices().filter(|&k| mu.values[k] <= eps).count();
    (inside == n, inside as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalBoundedness {
    pub bounded: bool,
    pub sup: f64,
    pub reference: f64,
    pub reference_time: f64,
    pub threshold: f64,
}

/// Plateau test on a recorded local maximum: `sup ≤ threshold`, with the
/// default threshold 10 times the value at one tenth of the recorded span.
pub fn check_local_boundedness(times: &[f64], values: &[f64], threshold: Option<f64>) -> LocalBoundedness {
    let t_last = times.last().copied().unwrap_or(0.0);
    let t_ref = 0.1 * t_last;
    let k = times.iter().position(|&t| t >= t_ref).unwrap_or(0);
    let reference = values.get(k).copied().unwrap_or(0.0);
    let threshold = threshold.unwrap_or(10.0 * reference);
    let sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    LocalBoundedness {
        bounded: sup.is_finite() && sup <= threshold,
        sup,
        reference,
        reference_time: times.get(k).copied().unwrap_or(0.0),
        threshold,
    }
}

/// Largest `value_k / median(value_0..=value_k)`; the series passes when it
/// stays below `factor`.
pub fn running_median_ratio(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = Vec::with_capacity(values.len());
    let mut worst: f64 = 0.0;
    for &x in values {
        let pos = sorted.partition_point(|&y| y < x);
        sorted.insert(pos, x);
        let n = sorted.len();
        let med = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        if med > 0.0 {
            worst = worst.max(x / med);
        } else if x > 0.0 {
            worst = f64::INFINITY;
        }
    }
    worst
}

/// Worst `mass(t) / (m₀ e^{t κ⁺})` along a series.
pub fn mass_comparison_ratio(series: &TimeSeries, kappa_plus_max: f64) -> f64 {
    let Some(first) = series.samples.first() else {
        return 0.0;
    };
    let m0 = first.mass;
    series
        .samples
        .iter()
        .map(|s| {
            let bound = m0 * (s.t * kappa_plus_max).exp();
            if bound > 0.0 {
                s.mass / bound
            } else if s.mass > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::{build_cutoff, PlateauSpec, Region, Symmetry};

    fn cutoff(g: &Grid, eta: f64) -> Cutoff {
        let spec = PlateauSpec {
            k: Region::Disc { cx: 0.5, cy: 0.5, r: 0.1 },
            v: Region::Disc { cx: 0.5, cy: 0.5, r: 0.3 },
            delta: None,
            symmetry: Symmetry::None,
        };
        build_cutoff(&spec, g, eta).unwrap()
    }

    #[test]
    fn localized_lp_constants() {
        let g = Grid::new(1.0, 1.0, 32, 32).unwrap();
        let c = cutoff(&g, 0.2);
        assert_eq!(localized_lp(&ScalarField::zeros(g), &c, 1.5).unwrap(), 0.0);
        let one = localized_lp(&ScalarField::constant(g, 1.0), &c, 1.5).unwrap();
        assert!((one - integrate(&c.phi)).abs() < 1e-12);
        let c2 = cutoff(&g, 1.0 / 6.0);
        let four = localized_lp(&ScalarField::constant(g, 2.0), &c2, 2.0).unwrap();
        assert!((four - 4.0 * integrate(&c2.phi)).abs() < 1e-12);
    }

    #[test]
    fn localized_lp_rejects_wrong_eta() {
        let g = Grid::new(1.0, 1.0, 32, 32).unwrap();
        let c = cutoff(&g, 0.25);
        assert!(matches!(
            localized_lp(&ScalarField::constant(g, 1.0), &c, 1.5),
            Err(Error::EtaMismatch { .. })
        ));
    }

    #[test]
    fn hypotheses_check_support_and_range() {
        let g = Grid::new(1.0, 1.0, 32, 32).unwrap();
        let c = cutoff(&g, 0.2);
        let mu = ScalarField::constant(g, 1.0);
        assert!(check_local_lp_hypotheses(&c, 1.5, &mu, 0.5).is_ok());
        // p = 1.5 needs mu0 > 1/3.
        assert!(check_local_lp_hypotheses(&c, 1.5, &mu, 0.2).is_err());
        let holed = ScalarField::from_fn(g, |x, _| if x < 0.45 { 0.0 } else { 1.0 });
        assert!(check_local_lp_hypotheses(&c, 1.5, &holed, 0.5).is_err());
    }

    #[test]
    fn labels() {
        let g = Grid::new(1.0, 1.0, 32, 32).unwrap();
        let c = Arc::new(cutoff(&g, 0.2));
        let mu = ScalarField::constant(g, 1.0);
        let m = MonitorSpec::local_lp(c.clone(), 1.5, &mu, 0.5).unwrap();
        assert_eq!(m.label(), "localLp_p1.5_eta0.2");
        let d = m.derived_grad_v().unwrap();
        assert_eq!(d.label(), "gradVLocal_q6");
        assert_eq!(MonitorSpec::new(MonitorKind::UInfLocal { region: c.k.clone() }).with_tag("ctrl").label(), "uInfLocal_ctrl");
    }

    #[test]
    fn q_is_derived_and_exceeds_two() {
        for p in [1.1, 1.5, 1.9] {
            let q = derived_q(p);
            assert!((q - 2.0 * p / (2.0 - p)).abs() < 1e-15 && q > 2.0);
        }
    }

    #[test]
    fn sobolev_range() {
        let g = Grid::new(1.0, 1.0, 16, 16).unwrap();
        assert_eq!(sobolev_norm_v(&ScalarField::zeros(g), 1.5).unwrap(), 0.0);
        let one = sobolev_norm_v(&ScalarField::constant(g, 1.0), 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
        assert!(matches!(sobolev_norm_v(&ScalarField::zeros(g), 2.0), Err(Error::ExponentOutOfRange(_))));
    }

    #[test]
    fn grad_norm_single_cell_and_empty() {
        let g = Grid::new(1.0, 1.0, 16, 16).unwrap();
        let v = ScalarField::from_fn(g, |x, y| x * x + y);
        let k = g.idx(5, 7);
        let cell = CellMask::from_indices(&g, [k]);
        let gm = gradient_magnitude(&v).values[k];
        let q = 3.0;
        assert!((grad_norm_local(&v, &cell, q) - gm * g.cell_area().powf(1.0 / q)).abs() < 1e-14);
        assert_eq!(grad_norm_local(&v, &CellMask::empty(&g), 2.0), 0.0);
        assert_eq!(grad_norm_local(&ScalarField::constant(g, 3.0), &CellMask::full(&g), 2.0), 0.0);
    }

    #[test]
    fn blowup_set_thresholds() {
        let g = Grid::new(1.0, 1.0, 16, 16).unwrap();
        let mut u = ScalarField::constant(g, 0.1);
        u.values[g.idx(3, 3)] = 10.0;
        let one = estimate_blowup_set(&u, 0.5);
        assert_eq!(one.cell_list(), vec![(3, 3)]);
        u.values[g.idx(12, 9)] = 10.0;
        assert_eq!(estimate_blowup_set(&u, 0.5).count(), 2);
        u.values[g.idx(12, 9)] = 9.0;
        assert_eq!(estimate_blowup_set(&u, 1.0).cell_list(), vec![(3, 3)]);
    }

    #[test]
    fn localization_check() {
        let g = Grid::new(1.0, 1.0, 16, 16).unwrap();
        let mu = ScalarField::from_fn(g, |x, _| if x < 0.5 { 0.0 } else { 1.0 });
        let left = CellMask::rect(&g, 0.0, 0.0, 0.4, 1.0);
        assert_eq!(check_blowup_localization(&left, &mu, None), (true, 1.0));
        let mut mixed = left.clone();
        mixed.cells[g.idx(15, 0)] = true;
        let (ok, frac) = check_blowup_localization(&mixed, &mu, None);
        assert!(!ok && frac < 1.0);
    }

    #[test]
    fn constant_series_is_bounded() {
        let pts: Vec<(f64, f64)> = (0..50).map(|k| (k as f64 * 0.1, 3.0)).collect();
        let s = TimeSeries::from_max_u(&pts, RunStatus::Completed, 4.9, 1e4);
        let r = detect_blowup(&s, &DetectConfig::default());
        assert_eq!(r.verdict, Verdict::Bounded);
        assert_eq!(r.t_max_estimate, None);
    }

    #[test]
    fn running_median() {
        assert_eq!(running_median_ratio(&[1.0, 1.0, 1.0]), 1.0);
        assert!((running_median_ratio(&[1.0, 1.0, 1.0, 5.0]) - 5.0).abs() < 1e-15);
        assert!(running_median_ratio(&[2.0, 1.0, 0.5]) <= 1.0 + 1e-15);
    }

    #[test]
    fn local_boundedness_reference() {
        let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let flat: Vec<f64> = t.iter().map(|_| 2.0).collect();
        assert!(check_local_boundedness(&t, &flat, None).bounded);
        let growing: Vec<f64> = t.iter().map(|&s| 1.0 / (1.01 - s)).collect();
        assert!(!check_local_boundedness(&t, &growing, None).bounded);
    }
}
