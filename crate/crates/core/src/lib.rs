//! Local saddle-point optimization for `min_x max_y f(x, y)`.
//!
//! The crate ships simultaneous gradient descent/ascent (GDA), the
//! curvature-exploiting CESP update that adds the extreme curvature
//! direction of the block Hessians to each GDA step, and Adagrad-style
//! linear-transformed variants of both. On top of the steppers sits an
//! analysis layer: stationary-point classification through the spectrum of
//! the GDA dynamics Jacobian, escape and neighbourhood checks, grid scans and
//! basin-of-attraction rasters.
//!
//! ```
//! use cesp_core::problems::{toy_problem, PointZ};
//! use cesp_core::analysis::{classify_point, Verdict};
//!
//! let toy = toy_problem();
//! let origin = PointZ::new(vec![0.0], vec![0.0]);
//! let report = classify_point(&toy, &origin, 1e-6).unwrap();
//! assert_eq!(report.verdict, Verdict::StableUndesired);
//! ```

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basin;
pub mod curvature;
pub mod dynamics;
mod error;
pub mod finite_diff;
pub mod linalg;
pub mod problems;
pub mod seed;
pub mod spectral;

pub use error::{Error, Result};
pub use problems::{PointZ, ProblemInstance, SmoothnessConstants};

/// `(x, y)` block selector for Hessian-vector products and eigenpairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    X,
    Y,
}
