//! The desk-scale studies: ratio spike, ratio grouping, divergence bounds,
//! greedy search with schedule fit, and schedule comparison.
//!
//! Quality is energy distance to reference class samples, so lower is better
//! everywhere.

pub mod compare;
pub mod divergence;
pub mod greedy;
pub mod grouping;
pub mod ratio_spike;
pub mod stats;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::guidance::GuidanceSchedule;
use crate::metrics::{rows_to_matrix, EnergyScorer};
use crate::mixture::{Condition, MixtureSpec};
use crate::rng;
use crate::sampler::{sample_batch, IntegratorKind};

pub use compare::{run_schedule_comparison, sweep, CompareRow, SweepRow};
pub use divergence::{run_divergence, DivergenceConfig, DivergenceReport, DivergenceRow};
pub use greedy::{run_greedy_search, GreedyConfig, GreedyReport};
pub use grouping::{run_ratio_grouping, GroupingConfig, GroupingReport};
pub use ratio_spike::{run_ratio_spike, RatioSpikeReport, RatioSpikeRow};

/// Noise seed for the trajectories of one label.
pub fn label_seed(seed: u64, label_index: usize) -> u64 {
    rng::derive(&[seed, rng::domain::NOISE, label_index as u64])
}

/// Scorer against `n` reference draws from class `label`.
pub fn reference_scorer(spec: &MixtureSpec, label: &str, n: usize, seed: u64) -> Result<EnergyScorer> {
    let li = spec.class_index(label)?;
    let data_seed = rng::derive(&[seed, rng::domain::REFERENCE, li as u64]);
    Ok(EnergyScorer::new(spec.sample_data(Condition::Class(label), n, data_seed)?))
}

/// Terminal states of a batch as matrix rows. Any failed trajectory is an error.
pub fn terminal_samples(
    spec: &MixtureSpec,
    label: &str,
    schedule: &GuidanceSchedule,
    n_steps: usize,
    integrator: IntegratorKind,
    n_seeds: usize,
    rng_seed: u64,
) -> Result<DMatrix<f64>> {
    let batch = sample_batch(spec, label, schedule, n_steps, integrator, n_seeds, rng_seed);
    let mut rows = Vec::with_capacity(batch.len());
    for e in batch {
        rows.push(e.result?.terminal().clone());
    }
    Ok(rows_to_matrix(&rows, spec.dim()))
}

fn check_labels(spec: &MixtureSpec, labels: &[String]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("at least one label is required".into()));
    }
    for l in labels {
        spec.class_index(l)?;
    }
    Ok(())
}
