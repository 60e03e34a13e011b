//! Aggregate gaze-time modelling from scan-path statistics.
//!
//! * [`gaze`]: the scan-path process, exact enumeration and Monte-Carlo estimators.
//! * [`imaging`]: netpbm IO, resizing, blur, patch grids and heatmap rendering.
//! * [`autodiff`]: a small reverse-mode differentiation engine over `f64` tensors.
//! * [`nn`]: layers, the Adam optimizer, the learning-rate schedule and checkpoints.
//! * [`model`]: the gaze network that predicts log gaze time and region weights.
//! * [`pipeline`]: synthetic data, k-fold training, evaluation and the patch sweep.

pub mod gaze;
pub mod imaging;
pub mod autodiff;
pub mod nn;
pub mod model;
pub mod pipeline;
