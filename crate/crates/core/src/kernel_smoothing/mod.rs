//! Kernels, local linear weights, smoothing and the hat matrix.

mod convolution;
mod kernel;
mod weights;

pub use convolution::{adaptive_simpson, kstar, kstar2, KernelConvolution};
pub use kernel::KernelSpec;
pub use weights::{
    hat_matrix, local_linear_weights, moment_sums, smooth_series, Bandwidth, HatMatrix,
    MomentSums, Smoother, SmootherWeights,
};
