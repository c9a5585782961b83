//! Forest graphical models with nonparametric (kernel) edge weights.
//!
//! Provides plain forest density estimation, a scale-free structure prior and
//! a joint prior that encourages several forests to share edges, together
//! with synthetic tree-copula data and edge-recovery scoring.

pub mod data;
pub mod datagen;
pub mod density;
pub mod error;
pub mod eval;
pub mod forest;
pub mod io;
pub mod solvers;

pub use data::Dataset;
pub use density::{HoldoutTerms, KernelConfig, WeightMatrix, WeightMode};
pub use error::{Error, Result};
pub use eval::{f1_score, ScoreReport};
pub use forest::{Edge, EdgeTrace, Forest};
pub use solvers::{fit_fde, fit_joint, fit_scalefree, FitResult, PriorConfig};
