//! Shared fixtures for the criterion benches.

use selfnorm::{DistributionSpec, SeedStream};

/// A reproducible standard normal sample.
pub fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    DistributionSpec::standard_normal().sample(n, SeedStream::new(seed, 0))
}
