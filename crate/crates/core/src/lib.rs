//! Finite-volume simulation of the parabolic-elliptic chemotaxis system
//! with spatially varying logistic growth and damping,
//!
//! ```text
//! u_t = Δu − ∇·(u∇v) + κ(x)u − μ(x)u²,   0 = Δv − v + u,   ∂_ν u = ∂_ν v = 0,
//! ```
//!
//! together with the cut-off machinery and monitors used to check where
//! solutions may blow up.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod elliptic;
pub mod cutoff;
pub mod error;
pub mod grid;
pub mod io;
pub mod monitors;
pub mod ops;
pub mod scenario;
pub mod series;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{BoundaryCondition, CellMask, Grid, ScalarField};
