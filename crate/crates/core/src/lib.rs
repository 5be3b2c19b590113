//! Tail asymptotics of randomly stopped sums `S_τ = ξ_1 + … + ξ_τ`.
//!
//! Lattice convolution with certified brackets, the concave weight
//! construction for heavy-tailed laws, exponential change of measure,
//! application pipelines (random-walk supremum, compound Poisson, infinitely
//! divisible laws, subcritical branching) and Monte Carlo cross-checks.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod cli;
pub mod concave;
pub mod convolve;
pub mod dist;
pub mod error;
pub mod exec;
pub mod io;
pub mod quad;
pub mod simulate;
pub mod tilt;

pub use error::{Error, Result};
