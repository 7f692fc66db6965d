//! Low-complexity data-dependent separable transforms for block residual coding.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`graph_model`] | generalized Laplacians, self-loop rank-one updates, Kronecker sums |
//! | [`base_transforms`] | graph Fourier transforms, closed-form DCT-2 / DST-7, 8-bit kernels |
//! | [`progressive`] | Cauchy transition kernels from a base DTT to its updated graph |
//! | [`graph_learning`] | maximum-likelihood estimation of the row/column update parameters |
//! | [`integer_kernel`] | INT-DTT+: split, quantize, fine-tune, integer forward/inverse |
//! | [`rdot`] | deadzone quantizer, rate proxies, RD transform selection, Lloyd design loop |
//! | [`mode_clustering`] | k-means grouping of learned parameters and kernel memory accounting |
//! | [`eval`] | datasets, synthetic residuals, BD-rate, the end-to-end experiment |

pub mod base_transforms;
pub mod error;
pub mod eval;
pub mod graph_learning;
pub mod graph_model;
pub mod integer_kernel;
pub mod mode_clustering;
pub mod progressive;
pub mod rdot;

pub use error::{Error, Result};
