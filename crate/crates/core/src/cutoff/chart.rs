//! Boundary-flattening chart for a boundary given locally as a graph.
//!
//! The domain is `{y > f(x)}` near `(x0, y0)` with `f'(x0) > 0`. With `w`
//! solving `w' = w / f'`, `w(x0) = 1`, the map
//!
//! ```text
//! Φ(x, y) = (w(x) e^y − e^{y0}, y − f(x))
//! ```
//!
//! sends the boundary to `{Φ₂ = 0}`, the domain to `{Φ₂ > 0}`, and has
//! `∂_ν Φ₁ = 0`, `∂_ν Φ₂ = −√(1 + f'²)` on the boundary.

use crate::error::{Error, Result};

/// Relative tolerance of the adaptive integrator for `w`.
const ODE_RTOL: f64 = 1e-13;
const ODE_ATOL: f64 = 1e-15;

/// Which side of the boundary graph a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    Boundary,
    Outside,
}

pub struct BoundaryChart<F, D>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    f: F,
    f_prime: D,
    pub x0: f64,
    pub y0: f64,
    /// Half-width of the chart interval in `x`.
    pub delta: f64,
}

/// Options controlling how far the chart interval may extend.
#[derive(Debug, Clone, Copy)]
pub struct ChartOptions {
    /// Upper bound on the half-width.
    pub max_delta: f64,
    /// The interval stops where `f'` falls below this fraction of `f'(x0)`.
    pub min_slope_fraction: f64,
    /// Sampling resolution used when probing `f'`.
    pub probe_points: usize,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            max_delta: 1.0,
            min_slope_fraction: 0.05,
            probe_points: 2000,
        }
    }
}

/// Build the chart around `(x0, y0)` with default options.
pub fn boundary_chart<F, D>(f: F, f_prime: D, x0: f64, y0: f64) -> Result<BoundaryChart<F, D>>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    boundary_chart_with(f, f_prime, x0, y0, ChartOptions::default())
}

pub fn boundary_chart_with<F, D>(
    f: F,
    f_prime: D,
    x0: f64,
    y0: f64,
    opts: ChartOptions,
) -> Result<BoundaryChart<F, D>>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let fx0 = f(x0);
    if (fx0 - y0).abs() > 1e-12 * (1.0 + y0.abs()) {
        return Err(Error::InvalidParameter(format!(
            "chart base point must lie on the boundary: f(x0) = {fx0}, y0 = {y0}"
        )));
    }
    let s0 = f_prime(x0);
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "f'(x0) must be positive (rotate the boundary first), got {s0}"
        )));
    }
    let floor = opts.min_slope_fraction * s0;
    let n = opts.probe_points.max(2);
    let step = opts.max_delta / n as f64;
    let mut delta = opts.max_delta;
    for k in 1..=n {
        let d = k as f64 * step;
        let ok = [x0 - d, x0 + d].into_iter().all(|x| {
            let s = f_prime(x);
            s.is_finite() && s > floor
        });
        if !ok {
            delta = (k - 1) as f64 * step;
            break;
        }
    }
    if delta <= 0.0 {
        return Err(Error::InvalidParameter(
            "no positive chart half-width keeps f' > 0".into(),
        ));
    }
    Ok(BoundaryChart {
        f,
        f_prime,
        x0,
        y0,
        delta,
    })
}

impl<F, D> BoundaryChart<F, D>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    pub fn contains_x(&self, x: f64) -> bool {
        (x - self.x0).abs() < self.delta
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if self.contains_x(x) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "x = {x} outside the chart interval ({}, {})",
                self.x0 - self.delta,
                self.x0 + self.delta
            )))
        }
    }

    pub fn boundary(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn slope(&self, x: f64) -> f64 {
        (self.f_prime)(x)
    }

    /// `w(x)` by adaptive Dormand–Prince integration of `w' = w / f'` from `x0`.
    pub fn w(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(integrate_dopri5(|s, w| w / (self.f_prime)(s), self.x0, 1.0, x))
    }

    /// `Φ(x, y)`.
    pub fn map(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let w = self.w(x)?;
        Ok((w * y.exp() - self.y0.exp(), y - (self.f)(x)))
    }

    /// `DΦ(x, y)` as rows `[[∂xΦ₁, ∂yΦ₁], [∂xΦ₂, ∂yΦ₂]]`.
    pub fn jacobian(&self, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        let w = self.w(x)?;
        let s = (self.f_prime)(x);
        let ey = y.exp();
        Ok([[w / s * ey, w * ey], [-s, 1.0]])
    }

    /// Outward unit normal at the boundary point above `x`.
    pub fn normal(&self, x: f64) -> (f64, f64) {
        let s = (self.f_prime)(x);
        let n = (1.0 + s * s).sqrt();
        (s / n, -1.0 / n)
    }

    /// `DΦ · ν` at the boundary point `(x, f(x))`.
    pub fn normal_derivative(&self, x: f64) -> Result<(f64, f64)> {
        let y = (self.f)(x);
        let j = self.jacobian(x, y)?;
        let (nx, ny) = self.normal(x);
        Ok((j[0][0] * nx + j[0][1] * ny, j[1][0] * nx + j[1][1] * ny))
    }

    pub fn classify(&self, x: f64, y: f64) -> Result<Side> {
        let (_, p2) = self.map(x, y)?;
        Ok(if p2 > 0.0 {
            Side::Inside
        } else if p2 < 0.0 {
            Side::Outside
        } else {
            Side::Boundary
        })
    }
}

/// Integrate the scalar ODE `y' = rhs(x, y)` from `(x0, y0)` to `x1`
/// with an embedded 5(4) Runge–Kutta pair and step-size control.
pub fn integrate_dopri5(rhs: impl Fn(f64, f64) -> f64, x0: f64, y0: f64, x1: f64) -> f64 {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let span = x1 - x0;
    if span == 0.0 {
        return y0;
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = dir * span.abs().min(1e-2);
    let mut k = [0.0; 7];
    for _ in 0..1_000_000 {
        if (x1 - x) * dir <= 0.0 {
            break;
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        for s in 0..7 {
            let mut ys = y;
            for (a, kk) in A[s].iter().zip(&k).take(s) {
                ys += h * a * kk;
            }
            k[s] = rhs(x + C[s] * h, ys);
        }
        let y5 = y + h * B5.iter().zip(&k).map(|(b, kk)| b * kk).sum::<f64>();
        let y4 = y + h * B4.iter().zip(&k).map(|(b, kk)| b * kk).sum::<f64>();
        let scale = ODE_ATOL + ODE_RTOL * y.abs().max(y5.abs());
        let err = ((y5 - y4) / scale).abs();
        if err <= 1.0 {
            x += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * (1.0 + x.abs()) {
            h = dir * 1e-14 * (1.0 + x.abs());
        }
    }
    y
}
