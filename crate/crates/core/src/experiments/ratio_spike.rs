//! Ratio dynamics along the reverse trajectory, aggregated over seeds.

use serde::{Deserialize, Serialize};

use super::stats::{mean, quantile_sorted};
use crate::error::{Error, Result};
use crate::guidance::GuidanceSchedule;
use crate::mixture::MixtureSpec;
use crate::sampler::{sample_batch, IntegratorKind, Trajectory};

pub const MIN_SEEDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSpikeRow {
    pub step: usize,
    pub t: f64,
    pub mean_ratio: f64,
    pub p10: f64,
    pub p90: f64,
    /// Seeds whose ratio was defined at this step.
    pub n_defined: usize,
}

#[derive(Debug, Clone)]
pub struct RatioSpikeReport {
    pub rows: Vec<RatioSpikeRow>,
    /// Seeds whose trajectory failed, with the failure.
    pub excluded: Vec<(u64, String)>,
    pub trajectories: Vec<(u64, Trajectory)>,
}

impl RatioSpikeReport {
    pub fn mean_ratios(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_ratio).collect()
    }
}

pub fn run_ratio_spike(
    spec: &MixtureSpec,
    label: &str,
    schedule: &GuidanceSchedule,
    n_steps: usize,
    integrator: IntegratorKind,
    n_seeds: usize,
    seed: u64,
) -> Result<RatioSpikeReport> {
    if n_seeds < MIN_SEEDS {
        return Err(Error::InsufficientSeeds(format!(
            "ratio spike needs at least {MIN_SEEDS} seeds, got {n_seeds}"
        )));
    }
    spec.class_index(label)?;
    let batch = sample_batch(spec, label, schedule, n_steps, integrator, n_seeds, seed);
    let mut excluded = Vec::new();
    let mut trajectories = Vec::new();
    for entry in batch {
        match entry.result {
            Ok(traj) => trajectories.push((entry.seed_index, traj)),
            Err(e) => excluded.push((entry.seed_index, e.to_string())),
        }
    }

    let times = crate::sampler::uniform_grid(n_steps);
    let rows = (0..n_steps)
        .map(|k| {
            let mut vals: Vec<f64> = trajectories
                .iter()
                .filter_map(|(_, tr)| tr.ratios[k].value())
                .collect();
            vals.sort_by(f64::total_cmp);
            let (m, p10, p90) = if vals.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (mean(&vals), quantile_sorted(&vals, 0.1), quantile_sorted(&vals, 0.9))
            };
            RatioSpikeRow {
                step: k,
                t: times[k],
                mean_ratio: m,
                p10,
                p90,
                n_defined: vals.len(),
            }
        })
        .collect();

    Ok(RatioSpikeReport { rows, excluded, trajectories })
}
