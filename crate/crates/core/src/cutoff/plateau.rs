//! Mollified plateau: convolution of the indicator of a `δ/3`-neighbourhood
//! of `K'` with a normalized radial bump supported in radius `δ/3`.
//!
//! The kernel radius equals the neighbourhood radius, so the plateau is
//! exactly 1 on `K'` and vanishes at distance `2δ/3` from it, inside `V'`.

use crate::error::{Error, Result};
use crate::grid::{CellMask, Grid, ScalarField};

/// `exp(-1/t)` for `t > 0`, else 0.
#[inline]
fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C^∞ step rising from 0 at `t <= 0` to 1 at `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = psi(t);
        a / (a + psi(1.0 - t))
    }
}

/// Radial profile: 1 below `inner`, 0 above `outer`, smooth and decreasing between.
pub fn bump_profile(s: f64, inner: f64, outer: f64) -> f64 {
    1.0 - smooth_step((s - inner) / (outer - inner))
}

/// Geometric description of a cell set.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Mask(CellMask),
}

impl Region {
    /// Cells whose centers lie in the region; discs are closed when `closed`.
    pub fn rasterize(&self, grid: &Grid, closed: bool) -> CellMask {
        match self {
            Region::Disc { cx, cy, r } => {
                if closed {
                    CellMask::disc(grid, *cx, *cy, *r)
                } else {
                    CellMask::from_predicate(grid, |x, y| (x - cx).hypot(y - cy) < *r)
                }
            }
            Region::Rect { x0, y0, x1, y1 } => {
                if closed {
                    CellMask::rect(grid, *x0, *y0, *x1, *y1)
                } else {
                    CellMask::from_predicate(grid, |x, y| x > *x0 && x < *x1 && y > *y0 && y < *y1)
                }
            }
            Region::Mask(m) => m.clone(),
        }
    }
}

/// How the sets are symmetrized before mollifying.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symmetry {
    /// Sets are used as given; everything outside the grid is outside `V'`.
    None,
    /// Chart-plane reflection `x₂ ↦ 2·line − x₂`; `line` must fall on a lattice line.
    MirrorY { line: f64 },
    /// Reflection across all four walls of the rectangle, so the result has
    /// zero normal derivative there.
    DomainWalls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSpec {
    /// Compact set where the plateau equals 1.
    pub k: Region,
    /// Open superset outside which the plateau vanishes.
    pub v: Region,
    /// Optional override of `δ = dist(K', ℝ² ∖ V')`; must not exceed the measured value.
    pub delta: Option<f64>,
    pub symmetry: Symmetry,
}

#[derive(Debug, Clone)]
pub struct Plateau {
    pub phi_tilde: ScalarField,
    pub k: CellMask,
    pub v: CellMask,
    /// Zero when `K` is empty.
    pub delta: f64,
    pub symmetry: Symmetry,
}

/// Symmetrized membership on in-domain cells.
fn symmetrize(mask: &CellMask, grid: &Grid, sym: Symmetry) -> Result<CellMask> {
    match sym {
        Symmetry::None | Symmetry::DomainWalls => Ok(mask.clone()),
        Symmetry::MirrorY { line } => {
            let twice = 2.0 * line / grid.hy;
            let r = twice.round();
            if (twice - r).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "mirror line y = {line} is not a lattice line of the grid"
                )));
            }
            let r = r as isize;
            let mut out = mask.clone();
            for j in 0..grid.ny {
                let jm = r - 1 - j as isize;
                if jm < 0 || jm >= grid.ny as isize {
                    continue;
                }
                for i in 0..grid.nx {
                    if mask.contains(grid.idx(i, jm as usize)) {
                        out.cells[grid.idx(i, j)] = true;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Cells of `mask` with an 8-neighbour outside it (or on the grid edge).
fn frontier(mask: &CellMask, grid: &Grid) -> Vec<(isize, isize)> {
    let mut out = Vec::new();
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            if !mask.contains(grid.idx(i as usize, j as usize)) {
                continue;
            }
            let edge = (-1..=1).any(|dj| {
                (-1..=1).any(|di| {
                    let (a, b) = (i + di, j + dj);
                    a < 0
                        || b < 0
                        || a >= grid.nx as isize
                        || b >= grid.ny as isize
                        || !mask.contains(grid.idx(a as usize, b as usize))
                })
            });
            if edge {
                out.push((i, j));
            }
        }
    }
    out
}

/// Lattice points outside `v` adjacent (8-neighbourhood) to `v`, optionally
/// including the ring of exterior points just beyond the grid.
fn outer_frontier(v: &CellMask, grid: &Grid, exterior_ring: bool) -> Vec<(isize, isize)> {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let inside = |a: isize, b: isize| a >= 0 && b >= 0 && a < nx && b < ny;
    let in_v = |a: isize, b: isize| inside(a, b) && v.contains(grid.idx(a as usize, b as usize));
    let lo = if exterior_ring { -1 } else { 0 };
    let mut out = Vec::new();
    for j in lo..ny - lo {
        for i in lo..nx - lo {
            if in_v(i, j) {
                continue;
            }
            let near_v = (-1..=1).any(|dj| (-1..=1).any(|di| in_v(i + di, j + dj)));
            if near_v {
                out.push((i, j));
            }
        }
    }
    out
}

fn lattice_distance(grid: &Grid, a: (isize, isize), b: (isize, isize)) -> f64 {
    (((a.0 - b.0) as f64) * grid.hx).hypot(((a.1 - b.1) as f64) * grid.hy)
}

/// `δ = dist(K', ℝ² ∖ V')` measured between lattice points.
fn measure_delta(k: &CellMask, v: &CellMask, grid: &Grid, sym: Symmetry) -> f64 {
    let kf = frontier(k, grid);
    let vf = outer_frontier(v, grid, !matches!(sym, Symmetry::DomainWalls));
    let cap = match sym {
        // Beyond this the once-reflected copy of the domain would not suffice.
        Symmetry::DomainWalls => 0.5 * grid.lx.min(grid.ly),
        _ => f64::INFINITY,
    };
    let mut best = cap;
    for &a in &kf {
        for &b in &vf {
            best = best.min(lattice_distance(grid, a, b));
        }
    }
    best
}

/// Build the mollified plateau `φ̃` of `spec` on `grid`.
pub fn mollified_plateau(spec: &PlateauSpec, grid: &Grid) -> Result<Plateau> {
    let k_raw = spec.k.rasterize(grid, true);
    let v_raw = spec.v.rasterize(grid, false);
    let k = symmetrize(&k_raw, grid, spec.symmetry)?;
    let v = symmetrize(&v_raw, grid, spec.symmetry)?;
    if k.is_empty() {
        return Ok(Plateau {
            phi_tilde: ScalarField::zeros(*grid),
            k,
            v,
            delta: 0.0,
            symmetry: spec.symmetry,
        });
    }
    if !k.is_subset_of(&v) {
        return Err(Error::InvalidParameter("K must lie inside V".into()));
    }
    let measured = measure_delta(&k, &v, grid, spec.symmetry);
    let delta = match spec.delta {
        Some(d) if d > 0.0 && d <= measured * (1.0 + 1e-12) => d,
        Some(d) => {
            return Err(Error::InvalidParameter(format!(
                "delta = {d} must lie in (0, {measured}]"
            )))
        }
        None => measured,
    };
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }

    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let reach = |r: f64| ((r / grid.hx).ceil() as isize, (r / grid.hy).ceil() as isize);

    // χ: lattice points closer than δ/3 to K'.
    let third = delta / 3.0;
    let (sx, sy) = reach(third);
    let stamp: Vec<(isize, isize)> = (-sy..=sy)
        .flat_map(|dj| (-sx..=sx).map(move |di| (di, dj)))
        .filter(|&(di, dj)| lattice_distance(grid, (0, 0), (di, dj)) < third)
        .collect();
    let mut chi = vec![0.0f64; grid.len()];
    let images = |i: isize, n: isize| -> Vec<isize> {
        match spec.symmetry {
            Symmetry::DomainWalls => vec![i, -1 - i, 2 * n - 1 - i],
            _ => vec![i],
        }
    };
    for kk in k.indices() {
        let (i, j) = grid.ij(kk);
        for &ii in &images(i as isize, nx) {
            for &jj in &images(j as isize, ny) {
                for &(di, dj) in &stamp {
                    let (a, b) = (ii + di, jj + dj);
                    if a >= 0 && b >= 0 && a < nx && b < ny {
                        chi[grid.idx(a as usize, b as usize)] = 1.0;
                    }
                }
            }
        }
    }

    // Kernel ξ(|offset|): 1 below δ/6, 0 beyond δ/3.
    let outer = third;
    let (rx, ry) = reach(outer);
    let mut kernel: Vec<(isize, isize, f64)> = Vec::new();
    for dj in -ry..=ry {
        for di in -rx..=rx {
            let w = bump_profile(lattice_distance(grid, (0, 0), (di, dj)), 0.5 * third, outer);
            if w > 0.0 {
                kernel.push((di, dj, w));
            }
        }
    }
    let norm: f64 = kernel.iter().map(|t| t.2).sum();

    // χ on an extended array so the inner loop has no branching.
    let ex = rx.max(1);
    let ey = ry.max(1);
    let wx = nx + 2 * ex;
    let wy = ny + 2 * ey;
    let mut chi_ext = vec![0.0f64; (wx * wy) as usize];
    for b in 0..wy {
        for a in 0..wx {
            let (i, j) = (a - ex, b - ey);
            let val = match spec.symmetry {
                Symmetry::DomainWalls => {
                    chi[grid.idx(Grid::mirror(i, grid.nx), Grid::mirror(j, grid.ny))]
                }
                _ if i >= 0 && j >= 0 && i < nx && j < ny => chi[grid.idx(i as usize, j as usize)],
                _ => 0.0,
            };
            chi_ext[(b * wx + a) as usize] = val;
        }
    }

    // Only cells within 2δ/3 of K' can be positive.
    let near = dilate(&k, grid, 2.0 * third, spec.symmetry);
    let mut values = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let idx = grid.idx(i as usize, j as usize);
            if !near[idx] {
                continue;
            }
            let mut acc = 0.0;
            for &(di, dj, w) in &kernel {
                acc += chi_ext[((j + ey + dj) * wx + (i + ex + di)) as usize] * w;
            }
            values[idx] = (acc / norm).clamp(0.0, 1.0);
        }
    }
    Ok(Plateau {
        phi_tilde: ScalarField { grid: *grid, values },
        k,
        v,
        delta,
        symmetry: spec.symmetry,
    })
}

/// In-domain cells within distance `r` (inclusive) of K' or its wall images.
fn dilate(k: &CellMask, grid: &Grid, r: f64, sym: Symmetry) -> Vec<bool> {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let rx = (r / grid.hx).ceil() as isize;
    let ry = (r / grid.hy).ceil() as isize;
    let mut out = vec![false; grid.len()];
    for (a, b) in frontier(k, grid) {
        let ims: Vec<(isize, isize)> = match sym {
            Symmetry::DomainWalls => [a, -1 - a, 2 * nx - 1 - a]
                .iter()
                .flat_map(|&x| [b, -1 - b, 2 * ny - 1 - b].map(|y| (x, y)))
                .collect(),
            _ => vec![(a, b)],
        };
        for (ia, ib) in ims {
            for dj in -ry..=ry {
                for di in -rx..=rx {
                    let (i, j) = (ia + di, ib + dj);
                    if i < 0 || j < 0 || i >= nx || j >= ny {
                        continue;
                    }
                    if lattice_distance(grid, (0, 0), (di, dj)) <= r * (1.0 + 1e-12) {
                        out[grid.idx(i as usize, j as usize)] = true;
                    }
                }
            }
        }
    }
    for kk in k.indices() {
        out[kk] = true;
    }
    out
}
