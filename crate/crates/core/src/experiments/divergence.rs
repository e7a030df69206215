//! Separation of paired trajectories started a distance `eps` apart, compared
//! against the exponential lower-bound rate and the upper bound
//! `(2 w rho_max V_max s + D0) exp(L_u (1 + w rho_max) s)`, with `s = 1 - t`
//! the time elapsed since the start of sampling.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{ols, spearman};
use super::label_seed;
use crate::error::{Error, Result};
use crate::metrics::{estimate_bound_constants, guided_velocity, BoundConstants, Probe, MIN_PROBES};
use crate::mixture::MixtureSpec;
use crate::rng;
use crate::sampler::{initial_noise, uniform_grid};

/// Separations above this are treated as blown up.
const OVERFLOW: f64 = 1e100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    pub label: String,
    pub w_values: Vec<f64>,
    #[serde(default = "default_eps")]
    pub perturbation_eps: f64,
    pub n_steps: usize,
    #[serde(default = "default_horizon")]
    pub horizon_t: f64,
    pub n_seeds: usize,
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
}

fn default_eps() -> f64 {
    1e-4
}

fn default_horizon() -> f64 {
    0.25
}

fn default_fd_eps() -> f64 {
    1e-5
}

impl DivergenceConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.w_values.is_empty() {
            v.push("w_values must not be empty".into());
        }
        if self.w_values.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            v.push("w_values must be finite and > 0".into());
        }
        if self.w_values.windows(2).any(|p| p[0] >= p[1]) {
            v.push("w_values must be strictly increasing".into());
        }
        if !(self.perturbation_eps > 0.0) || !self.perturbation_eps.is_finite() {
            v.push(format!("perturbation_eps must be > 0, got {}", self.perturbation_eps));
        }
        if self.n_steps == 0 {
            v.push("n_steps must be >= 1".into());
        }
        if !(self.horizon_t > 0.0 && self.horizon_t <= 1.0) {
            v.push(format!("horizon_t must lie in (0, 1], got {}", self.horizon_t));
        } else if self.n_steps > 0 {
            let states = window_len(self.n_steps, self.horizon_t);
            if 2 * states < MIN_PROBES {
                v.push(format!(
                    "horizon_t={} with n_steps={} leaves {} window states per trajectory; need {}",
                    self.horizon_t,
                    self.n_steps,
                    states,
                    MIN_PROBES.div_ceil(2)
                ));
            }
        }
        if self.n_seeds == 0 {
            v.push("n_seeds must be >= 1".into());
        }
        if !(self.fd_eps > 0.0) || !self.fd_eps.is_finite() {
            v.push(format!("fd_eps must be > 0, got {}", self.fd_eps));
        }
        v
    }
}

/// Number of grid states with elapsed time at most `horizon`.
fn window_len(n_steps: usize, horizon: f64) -> usize {
    ((horizon * n_steps as f64 + 1e-9).floor() as usize).min(n_steps) + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub seed: u64,
    pub w: f64,
    pub rho0: f64,
    pub delta0: f64,
    /// Slope of `ln D` against elapsed time over the window.
    pub growth_rate_fit: f64,
    pub lower_bound_a: f64,
    /// Upper-bound right-hand side at the end of the window.
    pub upper_bound_rhs_at_t: f64,
    pub delta_at_t: f64,
    /// Upper bound satisfied at every window step.
    pub holds: bool,
    pub diverged: bool,
    pub constants: Option<BoundConstants>,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub rho0: f64,
    pub inverse_ratio: f64,
    pub argmin_w: f64,
    /// Argmin is at most one grid index away from the grid point nearest `1 / rho0`.
    pub within_one_cell: bool,
    /// Rank correlation of growth rate with `|1 - w rho0|` across the grid.
    pub spearman_growth_vs_gap: f64,
}

#[derive(Debug, Clone)]
pub struct DivergenceReport {
    pub rows: Vec<DivergenceRow>,
    pub seeds: Vec<SeedSummary>,
    /// Elapsed times of the window steps.
    pub window_s: Vec<f64>,
}

impl DivergenceReport {
    pub fn holds_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.holds).count() as f64 / self.rows.len() as f64
    }

    pub fn within_one_cell_fraction(&self) -> f64 {
        self.seeds.iter().filter(|s| s.within_one_cell).count() as f64 / self.seeds.len() as f64
    }
}

fn unit_direction(dim: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, &[rng::domain::PERTURBATION, index]);
    loop {
        let u = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
        let n = u.norm();
        if n > 0.0 {
            return u / n;
        }
    }
}

/// Fixed-scale Euler path over the first `len` grid states. Stops early on a
/// non-finite state.
fn fixed_scale_path(
    spec: &MixtureSpec,
    label: &str,
    w: f64,
    times: &[f64],
    len: usize,
    x1: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let dt = times[0] - times[1];
    let mut states = vec![x1.clone()];
    for k in 0..len - 1 {
        let v = guided_velocity(spec, label, w, &states[k], times[k])?;
        let next = &states[k] - v * dt;
        if next.iter().any(|c| !c.is_finite()) {
            break;
        }
        states.push(next);
    }
    Ok(states)
}

fn run_pair(
    spec: &MixtureSpec,
    cfg: &DivergenceConfig,
    times: &[f64],
    len: usize,
    seed_index: u64,
    w: f64,
    x1: &DVector<f64>,
    y1: &DVector<f64>,
    rho0: f64,
) -> Result<DivergenceRow> {
    let xs = fixed_scale_path(spec, &cfg.label, w, times, len, x1)?;
    let ys = fixed_scale_path(spec, &cfg.label, w, times, len, y1)?;
    let n = xs.len().min(ys.len());
    let deltas: Vec<f64> = (0..n).map(|k| (&xs[k] - &ys[k]).norm()).collect();
    let delta0 = deltas[0];
    let diverged = n < len || deltas.iter().any(|d| !d.is_finite() || *d > OVERFLOW);
    let s: Vec<f64> = times[..n].iter().map(|t| 1.0 - t).collect();

    let growth_rate_fit = {
        let logs: Vec<f64> = deltas.iter().map(|d| d.max(f64::MIN_POSITIVE).ln()).collect();
        ols(&s, &logs).map(|(slope, _)| slope).unwrap_or(f64::NAN)
    };

    if diverged {
        return Ok(DivergenceRow {
            seed: seed_index,
            w,
            rho0,
            delta0,
            growth_rate_fit,
            lower_bound_a: f64::NAN,
            upper_bound_rhs_at_t: f64::NAN,
            delta_at_t: *deltas.last().unwrap(),
            holds: false,
            diverged,
            constants: None,
            deltas,
        });
    }

    let probes: Vec<Probe> = xs
        .iter()
        .chain(&ys)
        .zip(times[..n].iter().chain(&times[..n]))
        .map(|(x, &t)| Probe { x: x.clone(), t })
        .collect();
    let reference: Vec<Probe> = xs.iter().zip(times).map(|(x, &t)| Probe { x: x.clone(), t }).collect();
    let c = estimate_bound_constants(spec, &cfg.label, w, &probes, &reference, cfg.fd_eps)?;
    if c.fd_unstable_probes > 0 {
        log::warn!(
            "seed {seed_index}, w={w}: {} probes with unstable finite differences",
            c.fd_unstable_probes
        );
    }
    let rhs = |s: f64| (2.0 * w * c.rho_max * c.v_max * s + delta0) * (c.l_u * (1.0 + w * c.rho_max) * s).exp();
    let holds = deltas.iter().zip(&s).all(|(d, &s)| *d <= rhs(s));
    if !holds {
        log::warn!("upper bound violated: seed {seed_index}, w={w}, constants {c:?}, deltas {deltas:?}");
    }
    let lower_bound_a = c.lambda_max.max(0.0) * c.sigma_min * (1.0 - w * rho0).abs() / (w * (c.l_u + c.l_delta));

    Ok(DivergenceRow {
        seed: seed_index,
        w,
        rho0,
        delta0,
        growth_rate_fit,
        lower_bound_a,
        upper_bound_rhs_at_t: rhs(*s.last().unwrap()),
        delta_at_t: *deltas.last().unwrap(),
        holds,
        diverged,
        constants: Some(c),
        deltas,
    })
}

pub fn run_divergence(spec: &MixtureSpec, cfg: &DivergenceConfig, seed: u64) -> Result<DivergenceReport> {
    let errs = cfg.violations();
    if !errs.is_empty() {
        return Err(Error::InvalidParameter(errs.join("; ")));
    }
    let li = spec.class_index(&cfg.label)?;
    let times = uniform_grid(cfg.n_steps);
    let len = window_len(cfg.n_steps, cfg.horizon_t);
    let noise_seed = label_seed(seed, li);

    let per_seed: Vec<Result<(Vec<DivergenceRow>, SeedSummary)>> = (0..cfg.n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let x1 = initial_noise(spec.dim(), noise_seed, i);
            let y1 = &x1 + unit_direction(spec.dim(), seed, i) * cfg.perturbation_eps;
            let rho0 = spec.velocity_pair(&cfg.label, &x1, 1.0)?.ratio.or_zero();
            let rows = cfg
                .w_values
                .iter()
                .map(|&w| run_pair(spec, cfg, &times, len, i, w, &x1, &y1, rho0))
                .collect::<Result<Vec<_>>>()?;
            Ok((rows.clone(), summarize(i, rho0, &cfg.w_values, &rows)))
        })
        .collect();

    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for r in per_seed {
        let (mut rs, s) = r?;
        rows.append(&mut rs);
        seeds.push(s);
    }
    Ok(DivergenceReport {
        rows,
        seeds,
        window_s: times[..len].iter().map(|t| 1.0 - t).collect(),
    })
}

fn summarize(seed: u64, rho0: f64, grid: &[f64], rows: &[DivergenceRow]) -> SeedSummary {
    let rate = |r: &DivergenceRow| if r.diverged { f64::INFINITY } else { r.growth_rate_fit };
    let argmin = (0..rows.len())
        .min_by(|&a, &b| rate(&rows[a]).total_cmp(&rate(&rows[b])).then(a.cmp(&b)))
        .unwrap();
    let inverse_ratio = if rho0 > 0.0 { 1.0 / rho0 } else { f64::INFINITY };
    let nearest = (0..grid.len())
        .min_by(|&a, &b| (grid[a] - inverse_ratio).abs().total_cmp(&(grid[b] - inverse_ratio).abs()))
        .unwrap();
    let gaps: Vec<f64> = grid.iter().map(|w| (1.0 - w * rho0).abs()).collect();
    let rates: Vec<f64> = rows.iter().map(rate).collect();
    SeedSummary {
        seed,
        rho0,
        inverse_ratio,
        argmin_w: grid[argmin],
        within_one_cell: argmin.abs_diff(nearest) <= 1,
        spearman_growth_vs_gap: if grid.len() > 1 { spearman(&gaps, &rates) } else { f64::NAN },
    }
}
