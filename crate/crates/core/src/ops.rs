//! Discrete operators with mirrored ghost cells (zero normal derivative).
//!
//! All reductions run in a fixed row-major order so results are reproducible.

use crate::error::Result;
use crate::grid::{check_same_grid, Grid, ScalarField};

/// Five-point Laplacian. Ghost values mirror the adjacent interior cell.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let mut out = vec![0.0; g.len()];
    laplacian_into(&g, &f.values, &mut out);
    ScalarField { grid: g, values: out }
}

pub(crate) fn laplacian_into(g: &Grid, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let ax = 1.0 / (g.hx * g.hx);
    let ay = 1.0 / (g.hy * g.hy);
    for j in 0..ny {
        let row = j * nx;
        let down = if j == 0 { row } else { row - nx };
        let up = if j + 1 == ny { row } else { row + nx };
        for i in 0..nx {
            let c = f[row + i];
            let w = if i == 0 { c } else { f[row + i - 1] };
            let e = if i + 1 == nx { c } else { f[row + i + 1] };
            let s = f[down + i];
            let n = f[up + i];
            out[row + i] = (e - 2.0 * c + w) * ax + (n - 2.0 * c + s) * ay;
        }
    }
}

/// Centered gradient at cell centers.
///
/// Equivalent to averaging the two adjacent face gradients, with the wall face
/// gradient equal to zero.
pub fn gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let g = f.grid;
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let k = g.idx(i as usize, j as usize);
            gx[k] = (f.at_mirrored(i + 1, j) - f.at_mirrored(i - 1, j)) / (2.0 * g.hx);
            gy[k] = (f.at_mirrored(i, j + 1) - f.at_mirrored(i, j - 1)) / (2.0 * g.hy);
        }
    }
    (
        ScalarField { grid: g, values: gx },
        ScalarField { grid: g, values: gy },
    )
}

/// Pointwise `|grad f|` from [`gradient`].
pub fn gradient_magnitude(f: &ScalarField) -> ScalarField {
    let (gx, gy) = gradient(f);
    ScalarField {
        grid: f.grid,
        values: gx.values.iter().zip(&gy.values).map(|(a, b)| a.hypot(*b)).collect(),
    }
}

/// Second differences `(f_xx, f_yy, f_xy)` with mirrored ghosts.
pub fn hessian(f: &ScalarField) -> (ScalarField, ScalarField, ScalarField) {
    let g = f.grid;
    let mut xx = vec![0.0; g.len()];
    let mut yy = vec![0.0; g.len()];
    let mut xy = vec![0.0; g.len()];
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let k = g.idx(i as usize, j as usize);
            let c = f.at_mirrored(i, j);
            xx[k] = (f.at_mirrored(i + 1, j) - 2.0 * c + f.at_mirrored(i - 1, j)) / (g.hx * g.hx);
            yy[k] = (f.at_mirrored(i, j + 1) - 2.0 * c + f.at_mirrored(i, j - 1)) / (g.hy * g.hy);
            xy[k] = (f.at_mirrored(i + 1, j + 1) - f.at_mirrored(i + 1, j - 1)
                - f.at_mirrored(i - 1, j + 1)
                + f.at_mirrored(i - 1, j - 1))
                / (4.0 * g.hx * g.hy);
        }
    }
    (
        ScalarField { grid: g, values: xx },
        ScalarField { grid: g, values: yy },
        ScalarField { grid: g, values: xy },
    )
}

/// Velocities on cell faces. Wall faces are stored and always zero.
///
/// `x` holds `(nx + 1) * ny` entries, face `i` of row `j` sitting between
/// cells `i - 1` and `i`; `y` holds `nx * (ny + 1)` entries likewise.
#[derive(Debug, Clone)]
pub struct FaceVelocity {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceVelocity {
    /// Compact face gradient `(v_{i} - v_{i-1}) / hx`, zero on walls.
    pub fn from_potential(v: &ScalarField) -> Self {
        let g = v.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut x = vec![0.0; (nx + 1) * ny];
        let mut y = vec![0.0; nx * (ny + 1)];
        for j in 0..ny {
            for i in 1..nx {
                x[j * (nx + 1) + i] = (v.at(i, j) - v.at(i - 1, j)) / g.hx;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                y[j * nx + i] = (v.at(i, j) - v.at(i, j - 1)) / g.hy;
            }
        }
        Self { grid: g, x, y }
    }

    /// Arithmetic average of cell-centered components onto interior faces.
    pub fn from_cell_centered(gvx: &ScalarField, gvy: &ScalarField) -> Result<Self> {
        check_same_grid(&gvx.grid, &gvy.grid)?;
        let g = gvx.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut x = vec![0.0; (nx + 1) * ny];
        let mut y = vec![0.0; nx * (ny + 1)];
        for j in 0..ny {
            for i in 1..nx {
                x[j * (nx + 1) + i] = 0.5 * (gvx.at(i, j) + gvx.at(i - 1, j));
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                y[j * nx + i] = 0.5 * (gvy.at(i, j) + gvy.at(i, j - 1));
            }
        }
        Ok(Self { grid: g, x, y })
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.y).fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Conservative divergence of `u * grad v` from cell-centered gradient components.
///
/// Face velocities are averages of the adjacent cell values; `u` on each face
/// is taken from the upwind cell; wall fluxes vanish.
pub fn advect_flux_divergence(
    u: &ScalarField,
    gvx: &ScalarField,
    gvy: &ScalarField,
) -> Result<ScalarField> {
    check_same_grid(&u.grid, &gvx.grid)?;
    let faces = FaceVelocity::from_cell_centered(gvx, gvy)?;
    upwind_divergence(u, &faces)
}

/// Upwind flux divergence for face velocities already on the faces.
pub fn upwind_divergence(u: &ScalarField, faces: &FaceVelocity) -> Result<ScalarField> {
    check_same_grid(&u.grid, &faces.grid)?;
    let g = u.grid;
    let mut out = vec![0.0; g.len()];
    upwind_divergence_into(&g, &u.values, faces, &mut out);
    Ok(ScalarField { grid: g, values: out })
}

pub(crate) fn upwind_divergence_into(g: &Grid, u: &[f64], faces: &FaceVelocity, out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    out.iter_mut().for_each(|o| *o = 0.0);
    let inv_hx = 1.0 / g.hx;
    let inv_hy = 1.0 / g.hy;
    for j in 0..ny {
        for i in 1..nx {
            let a = faces.x[j * (nx + 1) + i];
            let left = j * nx + i - 1;
            let right = left + 1;
            let up = if a >= 0.0 { u[left] } else { u[right] };
            let flux = a * up * inv_hx;
            out[left] += flux;
            out[right] -= flux;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let a = faces.y[j * nx + i];
            let below = (j - 1) * nx + i;
            let above = below + nx;
            let up = if a >= 0.0 { u[below] } else { u[above] };
            let flux = a * up * inv_hy;
            out[below] += flux;
            out[above] -= flux;
        }
    }
}

/// Midpoint rule `hx * hy * sum(values)`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_area() * f.values.iter().sum::<f64>()
}

/// Midpoint rule over the cells of a mask.
pub fn integrate_masked(f: &ScalarField, mask: &crate::grid::CellMask) -> f64 {
    f.grid.cell_area() * mask.indices().map(|k| f.values[k]).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn cos_x(g: Grid) -> ScalarField {
        ScalarField::from_fn(g, |x, _| (PI * x / g.lx).cos())
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let g = Grid::new(2.0, 1.0, 8, 6).unwrap();
        let f = ScalarField::constant(g, 3.7);
        assert!(laplacian(&f).values.iter().all(|&v| v == 0.0));
        let (gx, gy) = gradient(&f);
        assert!(gx.values.iter().chain(&gy.values).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_cos_y_has_no_x_component() {
        let g = Grid::new(1.0, 2.0, 16, 16).unwrap();
        let f = ScalarField::from_fn(g, |_, y| (PI * y / g.ly).cos());
        let (gx, _) = gradient(&f);
        assert!(gx.max_abs() == 0.0);
    }

    #[test]
    fn laplacian_of_separable_eigenfunction() {
        let g = Grid::new(1.0, 2.0, 64, 64).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (PI * x).cos() * (PI * y / 2.0).cos());
        let lam = PI * PI + PI * PI / 4.0;
        let l = laplacian(&f);
        let err = l
            .values
            .iter()
            .zip(&f.values)
            .fold(0.0f64, |m, (a, b)| m.max((a + lam * b).abs()));
        assert!(err < 5e-3, "err = {err}");
    }

    #[test]
    fn zero_velocity_gives_zero_flux() {
        let g = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let u = ScalarField::from_fn(g, |x, y| x + y * y);
        let z = ScalarField::zeros(g);
        let d = advect_flux_divergence(&u, &z, &z).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_density_flux_reduces_to_laplacian_of_potential() {
        let g = Grid::new(1.0, 1.0, 64, 8).unwrap();
        let v = cos_x(g);
        let u = ScalarField::constant(g, 1.0);
        let faces = FaceVelocity::from_potential(&v);
        let d = upwind_divergence(&u, &faces).unwrap();
        let l = laplacian(&v);
        for (a, b) in d.values.iter().zip(&l.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn midpoint_integrals() {
        let g = Grid::new(1.0, 1.0, 5, 7).unwrap();
        assert!((integrate(&ScalarField::constant(g, 1.0)) - 1.0).abs() < 1e-14);
        let g = Grid::new(2.0, 1.0, 8, 4).unwrap();
        assert!((integrate(&ScalarField::constant(g, 3.0)) - 6.0).abs() < 1e-14);
        let g = Grid::new(1.5, 1.0, 12, 4).unwrap();
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x / g.lx).cos());
        assert!(integrate(&f).abs() < 1e-12);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = Grid::new(1.0, 1.0, 8, 8).unwrap();
        let b = Grid::new(1.0, 1.0, 8, 9).unwrap();
        let u = ScalarField::zeros(a);
        let z = ScalarField::zeros(b);
        assert!(advect_flux_divergence(&u, &z, &z).is_err());
    }
}
