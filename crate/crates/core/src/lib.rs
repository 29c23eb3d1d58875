//! Differentiable rendering of feature-carrying spheres.
//!
//! A [`SphereScene`] is rendered through a [`Camera`] by soft depth blending:
//! every ray mixes the features of the spheres it passes through with weights
//! that favor near, central and opaque hits, plus a background term. The
//! forward pass ([`render_forward`]) records what the backward pass
//! ([`render_backward`]) needs to produce gradients for every sphere and
//! camera parameter, and [`optim`] uses those gradients to fit scenes to
//! posed images.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blend;
pub mod camera;
pub mod cli;
pub mod config;
pub mod error;
pub mod grad;
pub mod imaging;
pub mod optim;
pub mod parallel;
pub mod raster;
pub mod scene;
pub mod shade;
pub mod synth;
pub mod testkit;

pub use blend::BlendParams;
pub use camera::{Camera, Projection, Rotation, Sensor};
pub use error::{Error, Result};
pub use grad::{render_backward, BackwardOptions, CameraGradients, SceneGradients};
pub use imaging::FeatureImage;
pub use raster::{render_forward, render_forward_with, BackwardBuffer, RenderOptions, RenderOutput, RenderStats};
pub use scene::{Sphere, SphereScene};
