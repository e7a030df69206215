//! Schedule comparison over step counts and integrators, and the RAAG
//! hyperparameter sweep.

use serde::{Deserialize, Serialize};

use super::stats::mean;
use super::{check_labels, label_seed, reference_scorer, terminal_samples};
use crate::error::{Error, Result};
use crate::guidance::GuidanceSchedule;
use crate::metrics::{quality_score, EnergyScorer};
use crate::mixture::MixtureSpec;
use crate::sampler::IntegratorKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub schedule: String,
    pub integrator: IntegratorKind,
    pub n_steps: usize,
    /// Averaged over labels.
    pub energy_distance: f64,
    pub mean_error: f64,
}

struct Bench<'a> {
    spec: &'a MixtureSpec,
    labels: &'a [String],
    scorers: Vec<EnergyScorer>,
    n_seeds: usize,
    seed: u64,
}

impl<'a> Bench<'a> {
    fn new(spec: &'a MixtureSpec, labels: &'a [String], n_seeds: usize, n_reference: usize, seed: u64) -> Result<Self> {
        check_labels(spec, labels)?;
        if n_seeds < 2 || n_reference < 2 {
            return Err(Error::InvalidParameter("n_seeds and n_reference must be >= 2".into()));
        }
        let scorers = labels
            .iter()
            .map(|l| reference_scorer(spec, l, n_reference, seed))
            .collect::<Result<_>>()?;
        Ok(Self { spec, labels, scorers, n_seeds, seed })
    }

    /// Mean (energy distance, mean error) over labels.
    fn score(&self, sched: &GuidanceSchedule, n_steps: usize, integrator: IntegratorKind) -> Result<(f64, f64)> {
        let mut ed = Vec::new();
        let mut me = Vec::new();
        for (label, scorer) in self.labels.iter().zip(&self.scorers) {
            let li = self.spec.class_index(label)?;
            let samples = terminal_samples(
                self.spec,
                label,
                sched,
                n_steps,
                integrator,
                self.n_seeds,
                label_seed(self.seed, li),
            )?;
            let q = quality_score(&samples, scorer, self.spec.class_mean(label)?)?;
            ed.push(q.energy_distance);
            me.push(q.mean_error);
        }
        Ok((mean(&ed), mean(&me)))
    }
}

/// Full factorial over schedules, step counts and integrators. Noise draws
/// are shared across cells.
#[allow(clippy::too_many_arguments)]
pub fn run_schedule_comparison(
    spec: &MixtureSpec,
    labels: &[String],
    schedules: &[GuidanceSchedule],
    step_counts: &[usize],
    integrators: &[IntegratorKind],
    n_seeds: usize,
    n_reference: usize,
    seed: u64,
) -> Result<Vec<CompareRow>> {
    let has_constant = schedules.iter().any(|s| matches!(s, GuidanceSchedule::Constant { .. }));
    let has_raag = schedules.iter().any(|s| matches!(s, GuidanceSchedule::Raag { .. }));
    if !has_constant || !has_raag {
        return Err(Error::InvalidParameter(
            "schedules must include at least one constant and one raag schedule".into(),
        ));
    }
    if step_counts.is_empty() || step_counts.contains(&0) {
        return Err(Error::InvalidParameter("step_counts must be non-empty and >= 1".into()));
    }
    if integrators.is_empty() {
        return Err(Error::InvalidParameter("integrators must not be empty".into()));
    }
    for s in schedules {
        if let GuidanceSchedule::Table { entries } = s {
            if let Some(&n) = step_counts.iter().find(|&&n| n > entries.len()) {
                return Err(Error::InvalidParameter(format!(
                    "table schedule has {} entries but n_steps={n}",
                    entries.len()
                )));
            }
        }
        s.validate()?;
    }
    let bench = Bench::new(spec, labels, n_seeds, n_reference, seed)?;
    let mut rows = Vec::new();
    for sched in schedules {
        for &integrator in integrators {
            for &n_steps in step_counts {
                let (energy_distance, mean_error) = bench.score(sched, n_steps, integrator)?;
                rows.push(CompareRow {
                    schedule: sched.describe(),
                    integrator,
                    n_steps,
                    energy_distance,
                    mean_error,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w_max: f64,
    pub alpha: f64,
    pub energy_distance: f64,
    pub mean_error: f64,
}

/// RAAG quality over the `w_max x alpha` grid at a fixed step count.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    spec: &MixtureSpec,
    labels: &[String],
    w_max_values: &[f64],
    alpha_values: &[f64],
    n_steps: usize,
    integrator: IntegratorKind,
    n_seeds: usize,
    n_reference: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if w_max_values.is_empty() || alpha_values.is_empty() {
        return Err(Error::InvalidParameter("sweep grids must not be empty".into()));
    }
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
    }
    let bench = Bench::new(spec, labels, n_seeds, n_reference, seed)?;
    let mut rows = Vec::new();
    for &w_max in w_max_values {
        for &alpha in alpha_values {
            let sched = GuidanceSchedule::raag(w_max, alpha)?;
            let (energy_distance, mean_error) = bench.score(&sched, n_steps, integrator)?;
            rows.push(SweepRow { w_max, alpha, energy_distance, mean_error });
        }
    }
    Ok(rows)
}
