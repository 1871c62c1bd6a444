//! Sparse identification of discrete-time nonlinear dynamics with a
//! tunable basis-function library.
//!
//! The crate discovers models of the form
//!
//! ```text
//! x(k+1) = (Θ(x(k), w(k); Φ) Ξ)ᵀ
//! ```
//!
//! where `Θ` is a row of candidate basis functions (fixed polynomials plus
//! Gaussian RBFs with tunable centers and scales `Φ`), and `Ξ` is a sparse
//! coefficient matrix found by sequentially thresholded least squares.
//!
//! Two nested optimizations produce the final model:
//!
//! * **Inner layer** ([`stlsq`]): for a fixed `Φ`, solve the sparse
//!   regression on one-step-ahead data.
//! * **Outer layer** ([`liboptim`]): search over `Φ` with a seeded genetic
//!   algorithm, scoring each candidate by the recursive long-term (RLT)
//!   rollout error [`loss::j_ms`] of the inner-layer model on held-out
//!   trajectories.
//!
//! [`synth`] provides discrete-time plants with known sparse ground truth
//! for end-to-end verification, and [`model_io`] persists fitted models as
//! diff-stable JSON.

pub mod dataset;
pub mod error;
pub mod liboptim;
pub mod library;
pub mod loss;
pub mod model_io;
pub mod numfmt;
pub mod rollout;
pub mod stlsq;
pub mod synth;

pub use dataset::{ShiftedMatrices, TimeSeriesDataset};
pub use error::{Error, Result};
pub use liboptim::{
    ComparisonReport, GaConfig, LomConfig, OptimTrace, StrategyMode, StrategySpec,
};
pub use library::{BasisDescriptor, LibrarySpec};
pub use loss::{LossReport, LossWeights};
pub use model_io::{load_model, save_model, Provenance};
pub use rollout::{OneStepPrediction, RolloutResult, SindyModel};
pub use stlsq::{CoefficientMatrix, SolverKind, StlsqConfig};
pub use synth::{builtin_plants, plant_by_name, ExcitationSpec, SyntheticPlant};
