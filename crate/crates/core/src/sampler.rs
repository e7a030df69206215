//! Reverse-time integration of the guided flow from noise (`t = 1`) to data
//! (`t = 0`) on a uniform grid.
//!
//! The velocity `E[x1 - x0 | x_t]` points from data towards noise, so each
//! step moves against it: `x_{k+1} = x_k - dt * v_cfg(x_k, t_k)`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{cfg_combine, GuidanceSchedule};
use crate::mixture::{MixtureSpec, Ratio};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorKind {
    #[default]
    Euler,
    /// Explicit trapezoid (predictor-corrector). The ratio-driven scale is
    /// re-evaluated at the predictor state.
    Heun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `1 = t_0 > t_1 > ... > t_N = 0`.
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Ratio at the pre-step state of each step.
    pub ratios: Vec<Ratio>,
    /// Guidance scale applied at each step.
    pub scales: Vec<f64>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.scales.len()
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// `t_k = (N - k) / N`, so both endpoints are exact.
pub fn uniform_grid(n_steps: usize) -> Vec<f64> {
    (0..=n_steps)
        .map(|k| (n_steps - k) as f64 / n_steps as f64)
        .collect()
}

fn guided_velocity(
    spec: &MixtureSpec,
    label: &str,
    schedule: &GuidanceSchedule,
    step: usize,
    x: &DVector<f64>,
    t: f64,
) -> Result<(DVector<f64>, Ratio, f64)> {
    let pair = spec.velocity_pair(label, x, t)?;
    let w = schedule.scale_at(step, pair.ratio)?;
    Ok((cfg_combine(&pair.v_u, &pair.v_c, w), pair.ratio, w))
}

pub fn sample(
    spec: &MixtureSpec,
    label: &str,
    schedule: &GuidanceSchedule,
    n_steps: usize,
    integrator: IntegratorKind,
    x1: &DVector<f64>,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    spec.class_index(label)?;
    let times = uniform_grid(n_steps);
    let dt = 1.0 / n_steps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut ratios = Vec::with_capacity(n_steps);
    let mut scales = Vec::with_capacity(n_steps);
    states.push(x1.clone());

    for k in 0..n_steps {
        let x = &states[k];
        let (v, ratio, w) = guided_velocity(spec, label, schedule, k, x, times[k])?;
        let next = match integrator {
            IntegratorKind::Euler => x - &v * dt,
            IntegratorKind::Heun => {
                let pred = x - &v * dt;
                if pred.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFiniteState { step: k });
                }
                let (v2, _, _) = guided_velocity(spec, label, schedule, k, &pred, times[k + 1])?;
                x - (v + v2) * (0.5 * dt)
            }
        };
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { step: k });
        }
        ratios.push(ratio);
        scales.push(w);
        states.push(next);
    }

    Ok(Trajectory {
        times,
        states,
        ratios,
        scales,
    })
}

/// Initial noise for seed `index` of a batch.
pub fn initial_noise(dim: usize, rng_seed: u64, index: u64) -> DVector<f64> {
    let mut rng = rng::stream(rng_seed, &[rng::domain::NOISE, index]);
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

#[derive(Debug)]
pub struct BatchEntry {
    pub seed_index: u64,
    pub x1: DVector<f64>,
    pub result: Result<Trajectory>,
}

/// Runs `n_seeds` independent trajectories. Failures are kept per entry.
pub fn sample_batch(
    spec: &MixtureSpec,
    label: &str,
    schedule: &GuidanceSchedule,
    n_steps: usize,
    integrator: IntegratorKind,
    n_seeds: usize,
    rng_seed: u64,
) -> Vec<BatchEntry> {
    (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let x1 = initial_noise(spec.dim(), rng_seed, i);
            let result = sample(spec, label, schedule, n_steps, integrator, &x1);
            BatchEntry {
                seed_index: i,
                x1,
                result,
            }
        })
        .collect()
}
