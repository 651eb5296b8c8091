//! Screened Poisson solve `(I - Δ_h) v = u` with zero-Neumann walls.
//!
//! The mirrored-ghost operator is symmetric positive definite and is solved
//! by a matrix-free preconditioned conjugate gradient iteration. Two
//! preconditioners are available: the diagonal (Jacobi), and the inverse of
//! the operator in the cosine basis, which diagonalizes `I - Δ_h` exactly for
//! this stencil and wall convention.

use std::sync::Arc;

use rustdct::{Dct2, Dct3, DctPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, Grid, ScalarField};
use crate::ops::laplacian_into;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EllipticMethod {
    #[default]
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Preconditioner {
    Jacobi,
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticSolveConfig {
    /// Relative residual target `‖(I - Δ_h)v - u‖₂ ≤ tol ‖u‖₂`.
    pub tol: f64,
    /// Iteration cap; `None` means `nx * ny`.
    pub max_iter: Option<usize>,
    pub method: EllipticMethod,
    pub preconditioner: Preconditioner,
}

impl Default for EllipticSolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            method: EllipticMethod::ConjugateGradient,
            preconditioner: Preconditioner::Cosine,
        }
    }
}

impl EllipticSolveConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(Error::InvalidParameter(format!(
                "elliptic tol must lie in (0, 1e-4], got {}",
                self.tol
            )));
        }
        if let Some(m) = self.max_iter {
            if m < grid.len() {
                return Err(Error::InvalidParameter(format!(
                    "elliptic max_iter must be at least nx*ny = {}, got {m}",
                    grid.len()
                )));
            }
        }
        Ok(())
    }

    fn cap(&self, grid: &Grid) -> usize {
        self.max_iter.unwrap_or(grid.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// `out = (I - Δ_h) v`.
fn apply_operator(g: &Grid, v: &[f64], out: &mut [f64]) {
    laplacian_into(g, v, out);
    for (o, &x) in out.iter_mut().zip(v) {
        *o = x - *o;
    }
}

/// Diagonal of `(I - Δ_h)` including the mirrored-ghost reduction at walls.
fn diagonal(g: &Grid) -> Vec<f64> {
    let ax = 1.0 / (g.hx * g.hx);
    let ay = 1.0 / (g.hy * g.hy);
    let mut d = Vec::with_capacity(g.len());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let nbx = (i > 0) as u8 + (i + 1 < g.nx) as u8;
            let nby = (j > 0) as u8 + (j + 1 < g.ny) as u8;
            d.push(1.0 + nbx as f64 * ax + nby as f64 * ay);
        }
    }
    d
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Exact inverse of `I - Δ_h` in the DCT-II basis.
struct CosineInverse {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Dct2<f64>>,
    fwd_y: Arc<dyn Dct2<f64>>,
    inv_x: Arc<dyn Dct3<f64>>,
    inv_y: Arc<dyn Dct3<f64>>,
    /// `1 / λ_pq` with the transform normalization folded in.
    scale: Vec<f64>,
}

impl CosineInverse {
    fn new(g: &Grid) -> Self {
        let mut planner = DctPlanner::new();
        let (nx, ny) = (g.nx, g.ny);
        let mut scale = Vec::with_capacity(g.len());
        let norm = 4.0 / (nx * ny) as f64;
        for q in 0..ny {
            let sy = (std::f64::consts::PI * q as f64 / (2.0 * ny as f64)).sin();
            for p in 0..nx {
                let sx = (std::f64::consts::PI * p as f64 / (2.0 * nx as f64)).sin();
                let lambda = 1.0 + 4.0 * sx * sx / (g.hx * g.hx) + 4.0 * sy * sy / (g.hy * g.hy);
                scale.push(norm / lambda);
            }
        }
        Self {
            nx,
            ny,
            fwd_x: planner.plan_dct2(nx),
            fwd_y: planner.plan_dct2(ny),
            inv_x: planner.plan_dct3(nx),
            inv_y: planner.plan_dct3(ny),
            scale,
        }
    }

    /// `out = (I - Δ_h)⁻¹ r`.
    fn apply(&self, r: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        out.copy_from_slice(r);
        for row in out.chunks_exact_mut(nx) {
            self.fwd_x.process_dct2(row);
        }
        scratch.resize(out.len(), 0.0);
        transpose(out, scratch, nx, ny);
        for col in scratch.chunks_exact_mut(ny) {
            self.fwd_y.process_dct2(col);
        }
        // scratch is laid out [p][q]
        for p in 0..nx {
            for q in 0..ny {
                scratch[p * ny + q] *= self.scale[q * nx + p];
            }
        }
        // DCT-III inverts DCT-II up to the factor 2/n, folded into `scale`.
        for col in scratch.chunks_exact_mut(ny) {
            self.inv_y.process_dct3(col);
        }
        transpose(scratch, out, ny, nx);
        for row in out.chunks_exact_mut(nx) {
            self.inv_x.process_dct3(row);
        }
    }
}

fn transpose(src: &[f64], dst: &mut [f64], cols: usize, rows: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Cosine(CosineInverse),
}

/// Reusable solver for one grid; holds the preconditioner setup.
pub struct ScreenedPoissonSolver {
    grid: Grid,
    cfg: EllipticSolveConfig,
    precond: Precond,
}

impl ScreenedPoissonSolver {
    pub fn new(grid: Grid, cfg: EllipticSolveConfig) -> Result<Self> {
        cfg.validate(&grid)?;
        let precond = match cfg.preconditioner {
            Preconditioner::Jacobi => {
                Precond::Jacobi(diagonal(&grid).into_iter().map(|d| 1.0 / d).collect())
            }
            Preconditioner::Cosine => Precond::Cosine(CosineInverse::new(&grid)),
        };
        Ok(Self { grid, cfg, precond })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &EllipticSolveConfig {
        &self.cfg
    }

    /// Solve starting from `guess`.
    pub fn solve(&self, u: &ScalarField, guess: &ScalarField) -> Result<(ScalarField, SolveStats)> {
        check_same_grid(&u.grid, &self.grid)?;
        check_same_grid(&guess.grid, &self.grid)?;
        self.conjugate_gradient(u, guess, self.cfg.tol, self.cfg.cap(&self.grid))
    }

    fn precondition(&self, r: &[f64], z: &mut [f64], scratch: &mut Vec<f64>) {
        match &self.precond {
            Precond::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Precond::Cosine(c) => c.apply(r, z, scratch),
        }
    }

    fn conjugate_gradient(
        &self,
        u: &ScalarField,
        guess: &ScalarField,
        tol: f64,
        cap: usize,
    ) -> Result<(ScalarField, SolveStats)> {
        let g = u.grid;
        if !u.is_finite() {
            return Err(Error::InvalidParameter("right-hand side is not finite".into()));
        }
        let n = g.len();
        let rhs = &u.values;
        let rhs_norm = norm(rhs);
        let scale = if rhs_norm > 0.0 { rhs_norm } else { 1.0 };
        let target = tol * scale;

        let mut x = if guess.is_finite() {
            guess.values.clone()
        } else {
            vec![0.0; n]
        };
        let mut r = vec![0.0; n];
        apply_operator(&g, &x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let mut res = norm(&r);
        if res <= target {
            return Ok((
                ScalarField { grid: g, values: x },
                SolveStats {
                    iterations: 0,
                    residual: res / scale,
                },
            ));
        }

        let mut scratch = Vec::with_capacity(n);
        let mut z = vec![0.0; n];
        self.precondition(&r, &mut z, &mut scratch);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);

        for it in 1..=cap {
            apply_operator(&g, &p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                // Search direction collapsed; the residual is at roundoff level.
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            res = norm(&r);
            if res <= target {
                return Ok((
                    ScalarField { grid: g, values: x },
                    SolveStats {
                        iterations: it,
                        residual: res / scale,
                    },
                ));
            }
            self.precondition(&r, &mut z, &mut scratch);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }

        // Recompute the true residual before giving up.
        let v = ScalarField { grid: g, values: x };
        let true_res = residual(u, &v)?;
        if true_res <= tol {
            return Ok((
                v,
                SolveStats {
                    iterations: cap,
                    residual: true_res,
                },
            ));
        }
        Err(Error::NonConvergence {
            iterations: cap,
            residual: true_res,
        })
    }
}

/// Solve from a zero initial guess.
pub fn solve_screened_poisson(u: &ScalarField, cfg: &EllipticSolveConfig) -> Result<ScalarField> {
    let guess = ScalarField::zeros(u.grid);
    solve_with_guess(u, &guess, cfg).map(|(v, _)| v)
}

/// Solve starting from `guess` (typically the previous time step's `v`).
pub fn solve_with_guess(
    u: &ScalarField,
    guess: &ScalarField,
    cfg: &EllipticSolveConfig,
) -> Result<(ScalarField, SolveStats)> {
    check_same_grid(&u.grid, &guess.grid)?;
    ScreenedPoissonSolver::new(u.grid, *cfg)?.solve(u, guess)
}

/// `‖(I - Δ_h)v - u‖₂ / ‖u‖₂`, or the absolute norm when `u = 0`.
pub fn residual(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    check_same_grid(&u.grid, &v.grid)?;
    let g = u.grid;
    let mut av = vec![0.0; g.len()];
    apply_operator(&g, &v.values, &mut av);
    let r: f64 = av
        .iter()
        .zip(&u.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let un = norm(&u.values);
    Ok(if un > 0.0 { r / un } else { r })
}
