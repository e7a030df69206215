//! Do seeds with a low initial ratio end closer to their class than seeds
//! with a high one?

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::stats::mean;
use super::{check_labels, label_seed, reference_scorer};
use crate::error::{Error, Result};
use crate::guidance::GuidanceSchedule;
use crate::metrics::rows_to_matrix;
use crate::mixture::MixtureSpec;
use crate::rng;
use crate::sampler::{sample_batch, IntegratorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingConfig {
    pub labels: Vec<String>,
    pub w_const: f64,
    pub n_steps: usize,
    pub n_seeds_per: usize,
    pub top_k: usize,
    pub n_reference: usize,
    pub n_permutations: usize,
}

impl GroupingConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.labels.is_empty() {
            v.push("labels must not be empty".into());
        }
        if !self.w_const.is_finite() || self.w_const < 1.0 {
            v.push(format!("w_const must be finite and >= 1, got {}", self.w_const));
        }
        if self.n_steps == 0 {
            v.push("n_steps must be >= 1".into());
        }
        if self.top_k == 0 {
            v.push("top_k must be >= 1".into());
        }
        if self.n_seeds_per < 2 * self.top_k {
            v.push(format!(
                "n_seeds_per ({}) must be at least 2 * top_k ({})",
                self.n_seeds_per,
                2 * self.top_k
            ));
        }
        if self.n_reference < 2 {
            v.push("n_reference must be >= 2".into());
        }
        if self.n_permutations == 0 {
            v.push("n_permutations must be >= 1".into());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Low,
    High,
    Middle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingRow {
    pub label: String,
    pub seed: u64,
    pub ratio0: f64,
    /// Energy distance of this single terminal sample to the reference.
    pub score: f64,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGroups {
    pub label: String,
    pub low_energy: f64,
    pub high_energy: f64,
    pub low_mean_ratio: f64,
    pub high_mean_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct GroupingReport {
    pub rows: Vec<GroupingRow>,
    pub labels: Vec<LabelGroups>,
    /// Energy distance of each group to the reference, averaged over labels.
    pub low_group_score: f64,
    pub high_group_score: f64,
    /// Two-sided permutation test on `high - low`, reshuffling group
    /// membership within each label.
    pub p_value: f64,
}

/// Everything needed to re-score any split of one label's grouped seeds.
struct Stratum {
    /// Mean distance from each seed's terminal sample to the reference.
    to_reference: Vec<f64>,
    /// Pairwise distances between the terminal samples.
    pairwise: Vec<Vec<f64>>,
    self_term: f64,
    /// Indices into the above, low group first.
    members: Vec<usize>,
    n_low: usize,
}

impl Stratum {
    fn energy(&self, idx: &[usize]) -> f64 {
        let n = idx.len() as f64;
        let cross: f64 = idx.iter().map(|&i| self.to_reference[i]).sum::<f64>() / n;
        let within: f64 = idx.iter().map(|&i| idx.iter().map(|&j| self.pairwise[i][j]).sum::<f64>()).sum::<f64>() / (n * n);
        2.0 * cross - within - self.self_term
    }

    fn split_difference(&self, members: &[usize]) -> f64 {
        self.energy(&members[self.n_low..]) - self.energy(&members[..self.n_low])
    }
}

pub fn run_ratio_grouping(spec: &MixtureSpec, cfg: &GroupingConfig, seed: u64) -> Result<GroupingReport> {
    let errs = cfg.violations();
    if !errs.is_empty() {
        if cfg.n_seeds_per < 2 * cfg.top_k {
            return Err(Error::InsufficientSeeds(errs.join("; ")));
        }
        return Err(Error::InvalidParameter(errs.join("; ")));
    }
    check_labels(spec, &cfg.labels)?;
    let schedule = GuidanceSchedule::Constant { w: cfg.w_const };
    let k = cfg.top_k;

    let mut rows = Vec::new();
    let mut strata = Vec::new();
    let mut labels = Vec::new();
    for label in &cfg.labels {
        let li = spec.class_index(label)?;
        let scorer = reference_scorer(spec, label, cfg.n_reference, seed)?;
        let batch = sample_batch(
            spec,
            label,
            &schedule,
            cfg.n_steps,
            IntegratorKind::Euler,
            cfg.n_seeds_per,
            label_seed(seed, li),
        );
        let mut seeds = Vec::with_capacity(batch.len());
        for e in batch {
            let traj = e.result?;
            seeds.push((e.seed_index, traj.ratios[0].or_zero(), traj.terminal().clone()));
        }
        let terminals = rows_to_matrix(seeds.iter().map(|s| &s.2), spec.dim());
        let to_reference = scorer.distances_to_reference(&terminals);
        let pairwise: Vec<Vec<f64>> = seeds
            .iter()
            .map(|a| seeds.iter().map(|b| (&a.2 - &b.2).norm()).collect())
            .collect();

        let mut order: Vec<usize> = (0..seeds.len()).collect();
        order.sort_by(|&a, &b| seeds[a].1.total_cmp(&seeds[b].1).then(a.cmp(&b)));
        let mut groups = vec![Group::Middle; seeds.len()];
        for &i in &order[..k] {
            groups[i] = Group::Low;
        }
        for &i in &order[order.len() - k..] {
            groups[i] = Group::High;
        }
        let low: Vec<usize> = order[..k].to_vec();
        let high: Vec<usize> = order[order.len() - k..].to_vec();
        let stratum = Stratum {
            to_reference,
            pairwise,
            self_term: scorer.self_term(),
            members: low.iter().chain(&high).copied().collect(),
            n_low: k,
        };
        let ratio_mean = |idx: &[usize]| mean(&idx.iter().map(|&i| seeds[i].1).collect::<Vec<_>>());
        labels.push(LabelGroups {
            label: label.clone(),
            low_energy: stratum.energy(&low),
            high_energy: stratum.energy(&high),
            low_mean_ratio: ratio_mean(&low),
            high_mean_ratio: ratio_mean(&high),
        });
        for (i, s) in seeds.iter().enumerate() {
            rows.push(GroupingRow {
                label: label.clone(),
                seed: s.0,
                ratio0: s.1,
                score: 2.0 * stratum.to_reference[i] - stratum.self_term,
                group: groups[i],
            });
        }
        strata.push(stratum);
    }

    let low_group_score = mean(&labels.iter().map(|l| l.low_energy).collect::<Vec<_>>());
    let high_group_score = mean(&labels.iter().map(|l| l.high_energy).collect::<Vec<_>>());
    let p_value = permutation_p_value(&strata, cfg.n_permutations, seed);

    Ok(GroupingReport { rows, labels, low_group_score, high_group_score, p_value })
}

/// Share of within-label reshuffles whose mean `high - low` difference is at
/// least as extreme as the observed one.
fn permutation_p_value(strata: &[Stratum], n_perm: usize, seed: u64) -> f64 {
    let statistic = |splits: &[Vec<usize>]| -> f64 {
        strata.iter().zip(splits).map(|(s, m)| s.split_difference(m)).sum::<f64>() / strata.len() as f64
    };
    let mut splits: Vec<Vec<usize>> = strata.iter().map(|s| s.members.clone()).collect();
    let observed = statistic(&splits);
    let tol = 1e-12 * observed.abs().max(1.0);
    let mut rng = rng::stream(seed, &[rng::domain::PERMUTATION]);
    let mut extreme = 0usize;
    for _ in 0..n_perm {
        for m in splits.iter_mut() {
            m.shuffle(&mut rng);
        }
        if statistic(&splits).abs() >= observed.abs() - tol {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (n_perm + 1) as f64
}
