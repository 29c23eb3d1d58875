//! Gradient-based scene fitting.
//!
//! [`fit`] alternates forward rendering, optional shading, an ℓ1 photometric
//! loss, the analytic backward pass and Adam updates, with pruning and
//! subdivision at configurable points.

pub mod adam;
pub mod checkpoint;
pub mod fit;
pub mod loss;
pub mod refine;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use fit::{
    fit, FitConfig, FitResult, Fitter, GammaSchedule, LearningRates, Observation, OptimizerState, StepRecord,
};
pub use loss::{opacity_depth_regularizer, photometric_loss};
pub use refine::{prune, subdivide, subdivide_sphere, PruneConfig, SubdivideConfig};
