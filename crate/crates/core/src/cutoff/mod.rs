//! Cut-off functions: the boundary chart, the mollified plateau, and the
//! sharpened cutoff `φ = φ̃^{1/η}` with its certified constant.
//!
//! The certificate is discrete: gradients and Laplacians are the module's
//! mirrored-ghost operators, and `c_phi` is the smallest constant with
//! `|∇_h φ| ≤ c_phi φ^{1−η}` and `|Δ_h φ| ≤ c_phi φ^{1−2η}` at every cell.
//! Cells with `φ = 0` satisfy both as `0 ≤ 0`.

pub mod chart;
pub mod plateau;

use std::fmt;

use serde::Serialize;

pub use chart::{boundary_chart, boundary_chart_with, integrate_dopri5, BoundaryChart, ChartOptions, Side};
pub use plateau::{bump_profile, mollified_plateau, smooth_step, Plateau, PlateauSpec, Region, Symmetry};

use crate::error::{Error, Result};
use crate::grid::{CellMask, Grid, ScalarField};
use crate::ops::{gradient_magnitude, hessian, laplacian};

/// Relative slack when comparing measured ratios against a claimed constant.
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Cutoff {
    pub phi: ScalarField,
    pub eta: f64,
    /// Smallest constant making both discrete inequalities hold.
    pub c_phi: f64,
    /// `max(‖φ̃‖_{C¹}/η, ‖φ̃‖²_{C²}/η²)` from discrete norms of `φ̃`.
    pub c_phi_continuous: f64,
    /// Cells where `φ` must equal 1.
    pub k: CellMask,
    /// Cells outside which `φ` must vanish.
    pub v: CellMask,
    pub delta: f64,
    pub spec: Option<PlateauSpec>,
}

impl Cutoff {
    /// Assemble a cutoff with a claimed constant, without certifying it.
    pub fn from_parts(phi: ScalarField, eta: f64, c_phi: f64, k: CellMask, v: CellMask) -> Self {
        Self {
            phi,
            eta,
            c_phi,
            c_phi_continuous: f64::NAN,
            k,
            v,
            delta: f64::NAN,
            spec: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.phi.grid
    }

    /// Cells with `φ > 0`.
    pub fn support(&self) -> CellMask {
        let g = self.phi.grid;
        CellMask::from_indices(&g, (0..g.len()).filter(|&k| self.phi.values[k] > 0.0))
    }
}

/// `η` must lie in `(0, ½]`.
pub fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eta must lie in (0, 1/2], got {eta}")))
    }
}

/// Worst-case ratios of the two discrete inequalities and where they occur.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteRatios {
    pub gradient: f64,
    pub gradient_cell: Option<usize>,
    pub laplacian: f64,
    pub laplacian_cell: Option<usize>,
}

/// `max |∇_h φ| / φ^{1−η}` and `max |Δ_h φ| / φ^{1−2η}` over cells with `φ > 0`.
pub fn discrete_ratios(phi: &ScalarField, eta: f64) -> DiscreteRatios {
    let grad = gradient_magnitude(phi);
    let lap = laplacian(phi);
    let mut out = DiscreteRatios {
        gradient: 0.0,
        gradient_cell: None,
        laplacian: 0.0,
        laplacian_cell: None,
    };
    for (k, &p) in phi.values.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        // Ratios in log form so tiny φ does not underflow the denominator.
        let lp = p.ln();
        let rg = log_ratio(grad.values[k], (1.0 - eta) * lp);
        if rg > out.gradient {
            out.gradient = rg;
            out.gradient_cell = Some(k);
        }
        let rl = log_ratio(lap.values[k].abs(), (1.0 - 2.0 * eta) * lp);
        if rl > out.laplacian {
            out.laplacian = rl;
            out.laplacian_cell = Some(k);
        }
    }
    out
}

fn log_ratio(num: f64, log_den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        (num.ln() - log_den).exp()
    }
}

/// `max |∇_h φ| / φ` over cells with `φ > 0`: the `η = 0` ratio, which no
/// nontrivial compactly supported cutoff keeps bounded under refinement.
pub fn eta_zero_ratio(phi: &ScalarField) -> f64 {
    discrete_ratios(phi, 0.0).gradient
}

/// `max(‖φ̃‖_{C¹}/η, ‖φ̃‖²_{C²}/η²)` with sup norms of discrete derivatives.
pub fn continuous_constant(phi_tilde: &ScalarField, eta: f64) -> f64 {
    let c0 = phi_tilde.max_abs();
    let c1 = c0 + gradient_magnitude(phi_tilde).max_abs();
    let (xx, yy, xy) = hessian(phi_tilde);
    let c2 = c1 + xx.max_abs().max(yy.max_abs()).max(xy.max_abs());
    (c1 / eta).max(c2 * c2 / (eta * eta))
}

/// `φ = φ̃^{1/η}`, with `K = {φ̃ = 1}` and `V = {φ̃ > 0}`.
pub fn sharpen(phi_tilde: &ScalarField, eta: f64) -> Result<Cutoff> {
    check_eta(eta)?;
    if let Some(k) = phi_tilde
        .values
        .iter()
        .position(|&x| !(x.is_finite() && (0.0..=1.0).contains(&x)))
    {
        return Err(Error::InvalidParameter(format!(
            "plateau value {} at cell {k} is outside [0, 1]",
            phi_tilde.values[k]
        )));
    }
    let g = phi_tilde.grid;
    let k = CellMask::from_indices(&g, (0..g.len()).filter(|&i| phi_tilde.values[i] == 1.0));
    let v = CellMask::from_indices(&g, (0..g.len()).filter(|&i| phi_tilde.values[i] > 0.0));
    let phi = if eta == 0.5 {
        phi_tilde.map(|x| x * x)
    } else {
        phi_tilde.map(|x| x.powf(1.0 / eta))
    };
    let r = discrete_ratios(&phi, eta);
    Ok(Cutoff {
        c_phi: r.gradient.max(r.laplacian),
        c_phi_continuous: continuous_constant(phi_tilde, eta),
        phi,
        eta,
        k,
        v,
        delta: f64::NAN,
        spec: None,
    })
}

/// Sharpen a mollified plateau, keeping its `K`, `V` and `δ`.
pub fn sharpen_plateau(plateau: &Plateau, eta: f64, spec: Option<PlateauSpec>) -> Result<Cutoff> {
    let mut c = sharpen(&plateau.phi_tilde, eta)?;
    c.k = plateau.k.clone();
    c.v = plateau.v.clone();
    c.delta = plateau.delta;
    c.spec = spec;
    Ok(c)
}

/// Build, sharpen and certify the cutoff for `spec`.
pub fn build_cutoff(spec: &PlateauSpec, grid: &Grid, eta: f64) -> Result<Cutoff> {
    check_eta(eta)?;
    let plateau = mollified_plateau(spec, grid)?;
    sharpen_plateau(&plateau, eta, Some(spec.clone()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst measured value.
    pub measured: f64,
    /// Value it was compared against.
    pub bound: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub eta: f64,
    pub c_phi: f64,
    pub c_phi_continuous: f64,
    pub ratios: DiscreteRatios,
    pub checks: Vec<Check>,
}

impl CertificateReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "eta = {}", self.eta)?;
        writeln!(f, "c_phi = {:.6e}", self.c_phi)?;
        writeln!(f, "c_phi_continuous = {:.6e}", self.c_phi_continuous)?;
        writeln!(f, "gradient_ratio = {:.6e}", self.ratios.gradient)?;
        writeln!(f, "laplacian_ratio = {:.6e}", self.ratios.laplacian)?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<10} {}  measured {:.3e}  bound {:.3e}  {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.measured,
                c.bound,
                c.detail
            )?;
        }
        write!(f, "overall {}", if self.all_passed() { "PASS" } else { "FAIL" })
    }
}

/// One-sided third-order normal derivative at each wall, from the four
/// nearest cell centers.
fn wall_derivative(phi: &ScalarField) -> f64 {
    const W: [f64; 4] = [-71.0, 141.0, -93.0, 23.0];
    let g = phi.grid;
    let mut worst: f64 = 0.0;
    for j in 0..g.ny {
        let lo: f64 = (0..4).map(|k| W[k] * phi.at(k, j)).sum::<f64>() / (24.0 * g.hx);
        let hi: f64 = (0..4).map(|k| W[k] * phi.at(g.nx - 1 - k, j)).sum::<f64>() / (24.0 * g.hx);
        worst = worst.max(lo.abs()).max(hi.abs());
    }
    for i in 0..g.nx {
        let lo: f64 = (0..4).map(|k| W[k] * phi.at(i, k)).sum::<f64>() / (24.0 * g.hy);
        let hi: f64 = (0..4).map(|k| W[k] * phi.at(i, g.ny - 1 - k)).sum::<f64>() / (24.0 * g.hy);
        worst = worst.max(lo.abs()).max(hi.abs());
    }
    worst
}

/// Check range, plateau, support, boundary flatness, and both inequalities.
pub fn verify_cutoff(c: &Cutoff) -> CertificateReport {
    let phi = &c.phi;
    let g = phi.grid;
    let mut checks = Vec::new();

    let (lo, hi) = (phi.min(), phi.max());
    checks.push(Check {
        name: "range",
        passed: phi.is_finite() && lo >= 0.0 && hi <= 1.0,
        measured: if lo < 0.0 { lo } else { hi },
        bound: 1.0,
        detail: format!("min {lo:.3e}, max {hi:.3e}"),
    });

    let plateau_err = c.k.indices().map(|k| (phi.values[k] - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check {
        name: "plateau",
        passed: plateau_err <= 1e-12,
        measured: plateau_err,
        bound: 1e-12,
        detail: format!("{} cells in K", c.k.count()),
    });

    let leak = (0..g.len())
        .filter(|&k| !c.v.contains(k))
        .map(|k| phi.values[k].abs())
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "support",
        passed: leak == 0.0,
        measured: leak,
        bound: 0.0,
        detail: format!("{} cells in V", c.v.count()),
    });

    let grad_max = gradient_magnitude(phi).max_abs();
    let normal = wall_derivative(phi);
    let normal_bound = 0.1 * grad_max + 1e-12;
    checks.push(Check {
        name: "neumann",
        passed: normal <= normal_bound,
        measured: normal,
        bound: normal_bound,
        detail: "one-sided normal derivative at the walls".into(),
    });

    let r = discrete_ratios(phi, c.eta);
    let limit = c.c_phi * (1.0 + RATIO_SLACK);
    let at = |cell: Option<usize>| {
        cell.map_or_else(String::new, |k| {
            let (i, j) = g.ij(k);
            format!("worst at cell ({i}, {j}), phi = {:.3e}", phi.values[k])
        })
    };
    checks.push(Check {
        name: "gradient",
        passed: r.gradient <= limit,
        measured: r.gradient,
        bound: c.c_phi,
        detail: at(r.gradient_cell),
    });
    checks.push(Check {
        name: "laplacian",
        passed: r.laplacian <= limit,
        measured: r.laplacian,
        bound: c.c_phi,
        detail: at(r.laplacian_cell),
    });

    CertificateReport {
        eta: c.eta,
        c_phi: c.c_phi,
        c_phi_continuous: c.c_phi_continuous,
        ratios: r,
        checks,
    }
}

/// 4-connected component of `{μ > mu0}` containing the cell `start`.
fn component(mu: &ScalarField, mu0: f64, start: usize) -> CellMask {
    let g = mu.grid;
    let mut mask = CellMask::empty(&g);
    let mut stack = vec![start];
    mask.cells[start] = true;
    while let Some(k) = stack.pop() {
        let (i, j) = g.ij(k);
        let mut visit = |a: usize, b: usize| {
            let n = g.idx(a, b);
            if !mask.cells[n] && mu.values[n] > mu0 {
                mask.cells[n] = true;
                stack.push(n);
            }
        };
        if i > 0 {
            visit(i - 1, j);
        }
        if i + 1 < g.nx {
            visit(i + 1, j);
        }
        if j > 0 {
            visit(i, j - 1);
        }
        if j + 1 < g.ny {
            visit(i, j + 1);
        }
    }
    mask
}

/// Certified cutoff around `x0` supported in `{μ > mu0}`.
///
/// `mu0` defaults to `μ(x0)/2`. With `R` the distance from `x0` to the
/// nearest cell outside the `{μ > mu0}` component of `x0`, `K` is the closed
/// disc of radius `R/3` and `V` the open disc of radius `R`; walls are
/// handled by reflection.
pub fn cutoff_for_point(x0: (f64, f64), mu: &ScalarField, mu0: Option<f64>, eta: f64) -> Result<Cutoff> {
    check_eta(eta)?;
    let g = mu.grid;
    let (x, y) = x0;
    if !(x >= 0.0 && x <= g.lx && y >= 0.0 && y <= g.ly) {
        return Err(Error::InvalidParameter(format!("point ({x}, {y}) is outside the domain")));
    }
    let (ci, cj) = g.cell_of(x, y);
    let here = mu.at(ci, cj);
    let mu0 = mu0.unwrap_or(here / 2.0);
    if !(here > mu0) {
        return Err(Error::InvalidParameter(format!(
            "mu(x0) = {here} must exceed mu0 = {mu0}"
        )));
    }
    let comp = component(mu, mu0, g.idx(ci, cj));
    let small = Error::NoPositivityNeighborhood { x, y, mu0 };
    for dj in -1..=1isize {
        for di in -1..=1isize {
            let (a, b) = (ci as isize + di, cj as isize + dj);
            if a < 0 || b < 0 || a >= g.nx as isize || b >= g.ny as isize {
                continue;
            }
            if !comp.contains(g.idx(a as usize, b as usize)) {
                return Err(small);
            }
        }
    }
    if comp.count() < 9 {
        return Err(small);
    }

    let r = (0..g.len())
        .filter(|&k| !comp.contains(k))
        .map(|k| {
            let (i, j) = g.ij(k);
            let (cx, cy) = g.center(i, j);
            (cx - x).hypot(cy - y)
        })
        .fold(f64::INFINITY, f64::min);
    let own = CellMask::from_indices(&g, [g.idx(ci, cj)]);
    let (k_region, v_region) = if r.is_finite() {
        let mut k = CellMask::disc(&g, x, y, r / 3.0);
        k.union_with(&own);
        let v = CellMask::from_predicate(&g, |px, py| (px - x).hypot(py - y) < r);
        (k, v)
    } else {
        let mut k = CellMask::disc(&g, x, y, 0.25 * g.lx.min(g.ly));
        k.union_with(&own);
        (k, CellMask::full(&g))
    };
    let spec = PlateauSpec {
        k: Region::Mask(k_region),
        v: Region::Mask(v_region.intersect(&comp)),
        delta: None,
        symmetry: Symmetry::DomainWalls,
    };
    let c = build_cutoff(&spec, &g, eta)?;
    debug_assert!(c.support().is_subset_of(&comp));
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_spec(r_k: f64, r_v: f64) -> PlateauSpec {
        PlateauSpec {
            k: Region::Disc { cx: 0.5, cy: 0.5, r: r_k },
            v: Region::Disc { cx: 0.5, cy: 0.5, r: r_v },
            delta: None,
            symmetry: Symmetry::None,
        }
    }

    #[test]
    fn half_exponent_squares() {
        let g = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let pt = ScalarField::from_fn(g, |x, _| x);
        let c = sharpen(&pt, 0.5).unwrap();
        for (a, b) in c.phi.values.iter().zip(&pt.values) {
            assert_eq!(*a, b * b);
        }
    }

    #[test]
    fn constant_one_has_zero_constant() {
        let g = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let c = sharpen(&ScalarField::constant(g, 1.0), 0.25).unwrap();
        assert_eq!(c.c_phi, 0.0);
        assert!(c.phi.values.iter().all(|&x| x == 1.0));
        assert!(verify_cutoff(&c).all_passed());
    }

    #[test]
    fn zero_cutoff_passes() {
        let g = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let c = sharpen(&ScalarField::zeros(g), 0.25).unwrap();
        assert_eq!(c.c_phi, 0.0);
        assert!(verify_cutoff(&c).all_passed());
    }

    #[test]
    fn eta_range() {
        let g = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let f = ScalarField::zeros(g);
        assert!(sharpen(&f, 0.0).is_err());
        assert!(sharpen(&f, 0.6).is_err());
        assert!(sharpen(&f, -0.1).is_err());
    }

    #[test]
    fn disc_cutoff_certifies() {
        let g = Grid::new(1.0, 1.0, 64, 64).unwrap();
        let c = build_cutoff(&disc_spec(0.15, 0.4), &g, 0.25).unwrap();
        let report = verify_cutoff(&c);
        assert!(report.all_passed(), "{report}");
        assert!(c.c_phi.is_finite() && c.c_phi > 0.0);
    }

    #[test]
    fn claimed_constant_too_small_fails() {
        let g = Grid::new(1.0, 1.0, 64, 64).unwrap();
        let mut c = build_cutoff(&disc_spec(0.15, 0.4), &g, 0.25).unwrap();
        c.c_phi *= 0.5;
        let report = verify_cutoff(&c);
        assert!(!report.check("gradient").unwrap().passed || !report.check("laplacian").unwrap().passed);
    }

    #[test]
    fn point_cutoff_uniform_mu() {
        let g = Grid::new(2.0, 2.0, 32, 32).unwrap();
        let mu = ScalarField::constant(g, 1.0);
        let c = cutoff_for_point((1.0, 1.0), &mu, Some(0.5), 0.25).unwrap();
        assert_eq!(c.v.count(), g.len());
        assert!(c.k.contains(g.idx(16, 16)));
        assert!(verify_cutoff(&c).all_passed());
    }

    #[test]
    fn point_cutoff_rejects_low_mu() {
        let g = Grid::new(1.0, 1.0, 16, 16).unwrap();
        let mu = ScalarField::constant(g, 0.2);
        assert!(cutoff_for_point((0.5, 0.5), &mu, Some(0.5), 0.25).is_err());
    }

    #[test]
    fn point_cutoff_rejects_thin_component() {
        let g = Grid::new(1.0, 1.0, 16, 16).unwrap();
        let mu = ScalarField::from_fn(g, |x, _| if (x - 0.53).abs() < 0.04 { 1.0 } else { 0.0 });
        match cutoff_for_point((0.53, 0.5), &mu, Some(0.5), 0.25) {
            Err(Error::NoPositivityNeighborhood { .. }) => {}
            other => panic!("expected NoPositivityNeighborhood, got {other:?}"),
        }
    }
}
