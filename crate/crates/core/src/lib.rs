//! Approximation of iterated Itô stochastic integrals by truncated multiple
//! Fourier–Legendre (or trigonometric) series.
//!
//! The pipeline: choose a kernel ([`KernelSpec`]), compute its coefficient
//! tensor ([`build_tensor`]), draw a table of Gaussian variables
//! ([`sample_table`]) and sum the expansion ([`approximate_integral`]). The
//! [`oracle`] module simulates the same integrals by brute-force Riemann sums
//! on a fine grid, and [`sde`] uses the double integrals in Milstein steps.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64`/`*32` aliases below fix the scalar.

pub mod basis;
pub mod coefficients;
pub mod combinatorics;
mod error;
pub mod expansion;
pub mod hermite;
pub mod oracle;
pub mod rng;
pub mod sde;
mod scalar;
pub mod stats;

pub use basis::{eval_basis, gauss_legendre, integrate_basis, BasisKind, Interval, QuadratureRule};
pub use coefficients::{
    build_tensor, fourier_coefficient, kernel_eval, kernel_l2_norm_sq, truncation_residual, CoefficientTensor,
    GeneralKernel, KernelSpec, WeightSpec,
};
pub use combinatorics::{enumerate_pair_partitions, pair_partition_count, PairPartition};
pub use error::{Error, Result};
pub use expansion::{
    approximate_integral, mse_estimate, sample_table, term_hermite, term_partition, term_recurrence, GaussianTable,
    MultiIndex, MseEstimate, TermForm,
};
pub use hermite::{hermite, hermite2, HermiteDegree};
pub use scalar::Real;

pub type Interval64 = Interval<f64>;
pub type Interval32 = Interval<f32>;
pub type WeightSpec64 = WeightSpec<f64>;
pub type WeightSpec32 = WeightSpec<f32>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type KernelSpec32 = KernelSpec<f32>;
pub type CoefficientTensor64 = CoefficientTensor<f64>;
pub type CoefficientTensor32 = CoefficientTensor<f32>;
pub type GaussianTable64 = GaussianTable<f64>;
pub type GaussianTable32 = GaussianTable<f32>;
pub type WienerPath64 = oracle::WienerPath<f64>;
pub type WienerPath32 = oracle::WienerPath<f32>;
pub type BilinearSystem64 = sde::BilinearSystem<f64>;
pub type SchemeConfig64 = sde::SchemeConfig<f64>;
