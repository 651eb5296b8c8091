//! Uniform cell-centered rectangle, scalar fields and cell masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of cells per axis.
pub const MIN_CELLS: usize = 4;

/// Cell-centered discretization of `[0, lx] x [0, ly]`.
///
/// Cell `(i, j)` has its center at `((i + 1/2) hx, (j + 1/2) hy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "extents must be positive and finite, got {lx} x {ly}"
            )));
        }
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per axis, got {nx} x {ny}"
            )));
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index: `j` outer, `i` inner.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }

    /// Cell containing `(x, y)`, clamped to the rectangle.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x / self.hx).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((y / self.hy).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }

    /// Mirror an extended lattice index back into `0..n` (one reflection per side).
    #[inline]
    pub fn mirror(k: isize, n: usize) -> usize {
        let n = n as isize;
        let r = if k < 0 {
            -1 - k
        } else if k >= n {
            2 * n - 1 - k
        } else {
            k
        };
        r.clamp(0, n - 1) as usize
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.lx.to_bits() == other.lx.to_bits()
            && self.ly.to_bits() == other.ly.to_bits()
    }
}

/// Only zero-flux walls are supported; ghost cells mirror the adjacent interior cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundaryCondition {
    #[default]
    NeumannZero,
}

/// One value per cell, row-major by `j` then `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f(x, y)` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Value at an extended index, mirrored across the walls.
    #[inline]
    pub fn at_mirrored(&self, i: isize, j: isize) -> f64 {
        let i = Grid::mirror(i, self.grid.nx);
        let j = Grid::mirror(j, self.grid.ny);
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of the first maximal cell.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// A set of cells on a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub cells: Vec<bool>,
}

impl CellMask {
    pub fn empty(grid: &Grid) -> Self {
        Self {
            grid_nx: grid.nx,
            grid_ny: grid.ny,
            cells: vec![false; grid.len()],
        }
    }

    pub fn full(grid: &Grid) -> Self {
        Self {
            grid_nx: grid.nx,
            grid_ny: grid.ny,
            cells: vec![true; grid.len()],
        }
    }

    pub fn from_predicate(grid: &Grid, pred: impl Fn(f64, f64) -> bool) -> Self {
        let mut cells = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                cells.push(pred(x, y));
            }
        }
        Self {
            grid_nx: grid.nx,
            grid_ny: grid.ny,
            cells,
        }
    }

    /// Cells whose center lies within `r` of `(cx, cy)` (closed disc).
    pub fn disc(grid: &Grid, cx: f64, cy: f64, r: f64) -> Self {
        Self::from_predicate(grid, |x, y| (x - cx).hypot(y - cy) <= r)
    }

    pub fn rect(grid: &Grid, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::from_predicate(grid, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1)
    }

    pub fn from_indices(grid: &Grid, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(grid);
        for k in idx {
            m.cells[k] = true;
        }
        m
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.cells[k]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    pub fn area(&self, grid: &Grid) -> f64 {
        self.count() as f64 * grid.cell_area()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(k, &c)| c.then_some(k))
    }

    pub fn union_with(&mut self, other: &CellMask) {
        for (a, &b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= b;
        }
    }

    pub fn intersect(&self, other: &CellMask) -> CellMask {
        CellMask {
            grid_nx: self.grid_nx,
            grid_ny: self.grid_ny,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn is_subset_of(&self, other: &CellMask) -> bool {
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint_from(&self, other: &CellMask) -> bool {
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !(a && b))
    }

    /// `(i, j)` pairs of the member cells.
    pub fn cell_list(&self) -> Vec<(usize, usize)> {
        self.indices()
            .map(|k| (k % self.grid_nx, k / self.grid_nx))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings() {
        let g = Grid::new(1.0, 1.0, 4, 4).unwrap();
        assert_eq!(g.hx, 0.25);
        assert_eq!(g.hy, 0.25);
        let g = Grid::new(2.0, 1.0, 8, 4).unwrap();
        assert_eq!(g.hx, 0.25);
        assert_eq!(g.hy, 0.25);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1.0, 1.0, 3, 4).is_err());
        assert!(Grid::new(1.0, 1.0, 4, 2).is_err());
        assert!(Grid::new(0.0, 1.0, 4, 4).is_err());
        assert!(Grid::new(1.0, -2.0, 4, 4).is_err());
        assert!(Grid::new(f64::NAN, 1.0, 4, 4).is_err());
    }

    #[test]
    fn centers_and_lookup() {
        let g = Grid::new(2.0, 1.0, 8, 4).unwrap();
        assert_eq!(g.center(0, 0), (0.125, 0.125));
        assert_eq!(g.center(7, 3), (1.875, 0.875));
        assert_eq!(g.cell_of(1.0, 0.5), (4, 2));
        assert_eq!(g.cell_of(-1.0, 5.0), (0, 3));
        assert_eq!(g.ij(g.idx(5, 2)), (5, 2));
    }

    #[test]
    fn mirror_indices() {
        assert_eq!(Grid::mirror(-1, 4), 0);
        assert_eq!(Grid::mirror(-2, 4), 1);
        assert_eq!(Grid::mirror(4, 4), 3);
        assert_eq!(Grid::mirror(5, 4), 2);
        assert_eq!(Grid::mirror(2, 4), 2);
    }

    #[test]
    fn mask_ops() {
        let g = Grid::new(1.0, 1.0, 10, 10).unwrap();
        let d = CellMask::disc(&g, 0.5, 0.5, 0.2);
        let all = CellMask::full(&g);
        assert!(d.is_subset_of(&all));
        assert!(!d.is_empty());
        assert_eq!(d.intersect(&all), d);
        let far = CellMask::disc(&g, 0.05, 0.05, 0.01);
        assert!(d.is_disjoint_from(&far));
        assert_eq!(far.cell_list(), vec![(0, 0)]);
    }
}
