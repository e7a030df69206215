//! Greedy per-step search over guidance scales, then an exponential fit of
//! the chosen scales against the ratio measured at each step.
//!
//! Every candidate of a label is evaluated on the same noise draws, and the
//! candidate set at step `k` always contains the incumbent (the default scale
//! at `k`), so the best score never gets worse from one step to the next.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_labels, label_seed, reference_scorer, stats::mean};
use crate::error::{Error, Result};
use crate::guidance::{fit_exponential, FitResult, GuidanceSchedule};
use crate::metrics::{rows_to_matrix, EnergyScorer};
use crate::mixture::MixtureSpec;
use crate::sampler::{sample_batch, IntegratorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyConfig {
    pub labels: Vec<String>,
    pub n_search_steps: usize,
    pub total_steps: usize,
    #[serde(default = "default_w")]
    pub default_w: f64,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    pub n_eval_seeds: usize,
    pub n_reference: usize,
    #[serde(default)]
    pub integrator: IntegratorKind,
}

fn default_w() -> f64 {
    7.0
}

/// `{1, 1.5, ..., 9}`.
pub fn default_grid() -> Vec<f64> {
    (0..17).map(|i| 1.0 + 0.5 * i as f64).collect()
}

impl GreedyConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.labels.is_empty() {
            v.push("labels must not be empty".into());
        }
        if self.n_search_steps == 0 {
            v.push("n_search_steps must be >= 1".into());
        }
        if self.total_steps < self.n_search_steps {
            v.push(format!(
                "total_steps ({}) must be >= n_search_steps ({})",
                self.total_steps, self.n_search_steps
            ));
        }
        if self.grid.is_empty() {
            v.push("grid must not be empty".into());
        }
        if self.grid.windows(2).any(|p| p[0] >= p[1]) {
            v.push("grid must be strictly increasing".into());
        }
        if self.grid.iter().any(|w| !w.is_finite() || *w < 1.0) {
            v.push("grid values must be finite and >= 1".into());
        }
        if !self.grid.contains(&self.default_w) {
            v.push(format!("grid must contain default_w={}", self.default_w));
        }
        if self.n_eval_seeds < 2 {
            v.push("n_eval_seeds must be >= 2".into());
        }
        if self.n_reference < 2 {
            v.push("n_reference must be >= 2".into());
        }
        v
    }

    /// Candidates evaluated per label.
    pub fn candidate_count(&self) -> usize {
        self.grid.len() * self.n_search_steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub label: String,
    pub k: usize,
    /// Seed-averaged ratio at step `k` under the incumbent scales.
    pub rho_k: f64,
    pub w_star: f64,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResult {
    pub label: String,
    pub default_score: f64,
    pub steps: Vec<GreedyStep>,
    pub monotone: bool,
    /// Final table of scales, `total_steps` long.
    pub schedule: Vec<f64>,
}

#[derive(Debug)]
pub struct GreedyReport {
    pub labels: Vec<LabelResult>,
    pub skipped_labels: Vec<String>,
    pub fit: Result<FitResult>,
}

impl GreedyReport {
    pub fn steps(&self) -> impl Iterator<Item = &GreedyStep> {
        self.labels.iter().flat_map(|l| &l.steps)
    }

    pub fn all_monotone(&self) -> bool {
        self.labels.iter().all(|l| l.monotone)
    }
}

struct Evaluation {
    score: f64,
    mean_ratios: Vec<Option<f64>>,
}

fn evaluate(
    spec: &MixtureSpec,
    label: &str,
    entries: &[f64],
    cfg: &GreedyConfig,
    scorer: &EnergyScorer,
    noise_seed: u64,
) -> Result<Evaluation> {
    let sched = GuidanceSchedule::Table { entries: entries.to_vec() };
    let batch = sample_batch(spec, label, &sched, cfg.total_steps, cfg.integrator, cfg.n_eval_seeds, noise_seed);
    let mut trajs = Vec::with_capacity(batch.len());
    for e in batch {
        trajs.push(e.result?);
    }
    let terminals = rows_to_matrix(trajs.iter().map(|t| t.terminal()), spec.dim());
    let mean_ratios = (0..cfg.total_steps)
        .map(|k| {
            let vals: Vec<f64> = trajs.iter().filter_map(|t| t.ratios[k].value()).collect();
            (!vals.is_empty()).then(|| mean(&vals))
        })
        .collect();
    Ok(Evaluation { score: scorer.score(&terminals)?, mean_ratios })
}

fn search_label(spec: &MixtureSpec, label: &str, cfg: &GreedyConfig, seed: u64) -> Result<Option<LabelResult>> {
    let li = spec.class_index(label)?;
    let scorer = reference_scorer(spec, label, cfg.n_reference, seed)?;
    let noise_seed = label_seed(seed, li);
    let mut entries = vec![cfg.default_w; cfg.total_steps];
    let default = evaluate(spec, label, &entries, cfg, &scorer, noise_seed)?;
    let mut incumbent_ratios = default.mean_ratios.clone();
    let mut steps = Vec::with_capacity(cfg.n_search_steps);

    for k in 0..cfg.n_search_steps {
        let Some(rho_k) = incumbent_ratios[k] else {
            log::warn!("label {label}: ratio undefined at step {k} for every seed; skipping label");
            return Ok(None);
        };
        let evals: Vec<Evaluation> = cfg
            .grid
            .par_iter()
            .map(|&w| {
                let mut cand = entries.clone();
                cand[k] = w;
                evaluate(spec, label, &cand, cfg, &scorer, noise_seed)
            })
            .collect::<Result<_>>()?;
        // first minimum in ascending grid order, so ties go to the smaller w
        let mut best = 0;
        for (i, e) in evals.iter().enumerate() {
            if e.score < evals[best].score {
                best = i;
            }
        }
        entries[k] = cfg.grid[best];
        incumbent_ratios = evals[best].mean_ratios.clone();
        steps.push(GreedyStep {
            label: label.to_string(),
            k,
            rho_k,
            w_star: cfg.grid[best],
            best_score: evals[best].score,
        });
    }
    let monotone = steps.windows(2).all(|p| p[1].best_score <= p[0].best_score)
        && steps.first().is_none_or(|s| s.best_score <= default.score);
    Ok(Some(LabelResult {
        label: label.to_string(),
        default_score: default.score,
        steps,
        monotone,
        schedule: entries,
    }))
}

pub fn run_greedy_search(spec: &MixtureSpec, cfg: &GreedyConfig, seed: u64) -> Result<GreedyReport> {
    let errs = cfg.violations();
    if !errs.is_empty() {
        return Err(Error::InvalidParameter(errs.join("; ")));
    }
    check_labels(spec, &cfg.labels)?;
    let mut labels = Vec::new();
    let mut skipped_labels = Vec::new();
    for label in &cfg.labels {
        match search_label(spec, label, cfg, seed)? {
            Some(r) => labels.push(r),
            None => skipped_labels.push(label.clone()),
        }
    }
    let pairs: Vec<(f64, f64)> = labels.iter().flat_map(|l| &l.steps).map(|s| (s.rho_k, s.w_star)).collect();
    let fit = fit_exponential(&pairs);
    Ok(GreedyReport { labels, skipped_labels, fit })
}
