//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's derivative or ratio code.
#![allow(dead_code)]

use std::f64::consts::PI;

use chemotaxis_core::elliptic::{solve_screened_poisson, EllipticSolveConfig};
use chemotaxis_core::series::TimeSeries;
use chemotaxis_core::stepper::{
    run, step, Coefficients, ReactionScheme, RunOptions, RunStatus, SimState, StepperConfig,
};
use chemotaxis_core::{Grid, ScalarField};

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `e[k] / e[k+1]`.
pub fn ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

/// L∞ error of the screened Poisson solve of `1 + cos(πx/lx)` against
/// `1 + cos(πx/lx)/(1 + (π/lx)²)`.
pub fn elliptic_error(n: usize, lx: f64, ly: f64) -> f64 {
    let g = Grid::new(lx, ly, n, n).unwrap();
    let k = PI / lx;
    let u = ScalarField::from_fn(g, |x, _| 1.0 + (k * x).cos());
    let v = solve_screened_poisson(&u, &EllipticSolveConfig::default()).unwrap();
    let exact = ScalarField::from_fn(g, |x, _| 1.0 + (k * x).cos() / (1.0 + k * k));
    linf(&v.values, &exact.values)
}

/// Value at `t = 1` of a spatially constant run with constant `κ`, `μ`.
pub fn homogeneous_run(c: f64, kappa: f64, mu: f64, n: usize) -> (f64, f64, RunStatus) {
    let g = Grid::new(1.0, 1.0, n, n).unwrap();
    let coeffs = Coefficients::new(ScalarField::constant(g, kappa), ScalarField::constant(g, mu)).unwrap();
    let cfg = StepperConfig {
        t_end: 1.0,
        dt_max: 1e-4,
        dt_min: 1e-12,
        u_cap: Some(1e6),
        ..Default::default()
    };
    let out = run(ScalarField::constant(g, c), &coeffs, &cfg, &[], &RunOptions::default()).unwrap();
    let spread = out.state.u.max() - out.state.u.min();
    (out.state.u.values[0], spread, out.state.status)
}

pub fn poly_smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// `φ̃(x, y) = S((x − a)/(b − a))` with the cubic smoothstep `S`.
pub fn ramp(g: Grid, a: f64, b: f64) -> ScalarField {
    ScalarField::from_fn(g, |x, _| poly_smoothstep((x - a) / (b - a)))
}

/// Brute-force `max |D φ| / φ^{1−η}` for `φ = S((x−a)/(b−a))^{1/η}` on a
/// 1D cell-centered lattice of `n` cells over `[0, l]`, with centered
/// differences and mirrored end values.
pub fn dense_ramp_ratio(n: usize, l: f64, a: f64, b: f64, eta: f64) -> f64 {
    let h = l / n as f64;
    let phi: Vec<f64> = (0..n)
        .map(|i| poly_smoothstep(((i as f64 + 0.5) * h - a) / (b - a)).powf(1.0 / eta))
        .collect();
    let at = |i: isize| -> f64 {
        let k = if i < 0 { -1 - i } else if i >= n as isize { 2 * n as isize - 1 - i } else { i };
        phi[k as usize]
    };
    let mut worst: f64 = 0.0;
    for i in 0..n as isize {
        let p = at(i);
        if p > 0.0 {
            let d = (at(i + 1) - at(i - 1)) / (2.0 * h);
            worst = worst.max(d.abs() / p.powf(1.0 - eta));
        }
    }
    worst
}

/// Piecewise-linear tent in `x`; its gradient jumps at the peak and the feet.
pub fn tent(g: Grid, center: f64, half_width: f64) -> ScalarField {
    ScalarField::from_fn(g, |x, _| (1.0 - (x - center).abs() / half_width).max(0.0))
}

/// `max u(t) = A/(T − t)` sampled on `[0, 0.99 T]`.
pub fn synthetic_blowup(a: f64, t_max: f64, samples: usize) -> TimeSeries {
    let pts: Vec<(f64, f64)> = (0..samples)
        .map(|k| {
            let t = 0.99 * t_max * k as f64 / (samples - 1) as f64;
            (t, a / (t_max - t))
        })
        .collect();
    TimeSeries::from_max_u(&pts, RunStatus::BlowupSuspected, t_max, f64::INFINITY)
}

/// Worst relative defect of the per-step mass law
/// `M(uⁿ⁺¹) − M(uⁿ) = dt ∫(κuⁿ − μ(uⁿ)²) + clipped` over `steps` explicit steps.
pub fn explicit_mass_defect(u0: ScalarField, coeffs: &Coefficients, steps: usize) -> f64 {
    let g = u0.grid;
    let cfg = StepperConfig {
        scheme: ReactionScheme::Explicit,
        u_cap: Some(f64::MAX),
        t_end: f64::MAX,
        ..Default::default()
    };
    let area = g.cell_area();
    let sum = |f: &[f64]| f.iter().sum::<f64>() * area;
    let mut s = SimState::new(u0, &cfg.elliptic).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let dt = chemotaxis_core::stepper::stable_dt(&s, coeffs, &cfg).dt;
        let react: Vec<f64> = s
            .u
            .values
            .iter()
            .zip(coeffs.kappa.values.iter().zip(&coeffs.mu.values))
            .map(|(u, (k, m))| k * u - m * u * u)
            .collect();
        let next = step(&s, coeffs, dt, &cfg).unwrap();
        let m0 = sum(&s.u.values);
        let m1 = sum(&next.u.values);
        let predicted = m0 + dt * sum(&react) + next.last_clipped;
        worst = worst.max((m1 - predicted).abs() / m0.abs().max(f64::MIN_POSITIVE));
        s = next;
    }
    worst
}

/// Least-squares slope of `values` over the last tenth of `times`, scaled
/// by the window length and divided by the window mean: the relative change
/// of the fitted line across the last decile.
pub fn last_decile_relative_change(times: &[f64], values: &[f64]) -> f64 {
    let t_end = *times.last().unwrap();
    let t0 = times[0] + 0.9 * (t_end - times[0]);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0)
        .map(|(t, v)| (*t, *v))
        .collect();
    let n = pts.len() as f64;
    let tb = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let vb = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tb) * (p.1 - vb)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tb).powi(2)).sum();
    sxy / sxx * (t_end - t0) / vb
}
