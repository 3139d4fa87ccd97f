//! Offset-aware correlation (OAC) kernels and an attentive global
//! transformation estimator for semantic image alignment.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense `f64` arrays, the handful of differentiable
//!   operations the network needs, finite-difference checking and ADAM.
//! * [`geometry`]: affine and thin-plate-spline transforms, warping, the
//!   transformed grid distance loss and the PCK metric.
//! * [`correlation`]: the dense correlation layer, offset reordering and the
//!   OAC kernel in its direct and reordered (1×1 convolution) forms.
//! * [`network`]: the local transformation encoder and attention head.
//! * [`pipeline`]: feature providers, synthetic pair generation, training
//!   and evaluation.
//! * [`io`]: the `OACT` tensor format, checkpoints and PNM images.

pub mod correlation;
pub mod error;
pub mod geometry;
pub mod io;
pub mod network;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use correlation::{CorrelationMap, DisplacementMap, OacKernelBank, ReorderedCorrelationMap};
pub use error::{Error, Result};
pub use geometry::{AffineParams, GridPoints, TpsParams, TransformFamily, TransformParams};
pub use network::{Model, ModelConfig, Mode};
pub use tensor::{Parameter, Tensor};
