//! Self-normalized sums and Studentized U-statistics at desk scale.

// `!(a > b)` is used on purpose so that NaN is rejected along with the failing values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod concentration;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod quadrature;
pub mod rng;
pub mod summand;
pub mod tilting;
pub mod ustat;

pub use bounds::{BoundReport, Estimate};
pub use concentration::{ConcentrationReport, DeltaChoice};
pub use distributions::{make_distribution, DistributionSpec, Family, Moment};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, RatioCurve};
pub use kernels::{builtin_kernel, BoundKernel, KernelSpec};
pub use rng::SeedStream;
pub use tilting::{Event, Statistic, TailEstimate, TiltedDistribution};
pub use ustat::{hoeffding_decompose, HoeffdingDecomp};
