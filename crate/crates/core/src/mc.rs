//! Monte-Carlo cross-check for the closed-form velocities.
//!
//! Simulates `(x0, x1, x_t)` triples and forms the Nadaraya-Watson estimate
//! of `E[x1 - x0 | x_t ~ x]` with a Gaussian kernel. Uses only sampling from
//! the mixture, none of the conditioning algebra in [`crate::mixture`].

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::{Condition, MixtureSpec};
use crate::rng;

const CHUNK: usize = 1 << 14;
pub const MIN_SAMPLES: usize = 10_000;
pub const MIN_ESS: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct McEstimate {
    pub estimate: DVector<f64>,
    pub std_error: DVector<f64>,
    pub effective_sample_size: f64,
    /// Set when the kernel weights imply fewer than [`MIN_ESS`] effective samples.
    pub low_ess: bool,
}

/// Bandwidth that shrinks with the spread of the noise part of `x_t`.
pub fn default_bandwidth(t: f64) -> f64 {
    0.1 * t.sqrt()
}

#[derive(Clone)]
struct Sums {
    w: f64,
    w2: f64,
    wy: DVector<f64>,
    w2y: DVector<f64>,
    w2y2: DVector<f64>,
}

impl Sums {
    fn zeros(d: usize) -> Self {
        Self {
            w: 0.0,
            w2: 0.0,
            wy: DVector::zeros(d),
            w2y: DVector::zeros(d),
            w2y2: DVector::zeros(d),
        }
    }

    fn merge(mut self, other: &Sums) -> Self {
        self.w += other.w;
        self.w2 += other.w2;
        self.wy += &other.wy;
        self.w2y += &other.w2y;
        self.w2y2 += &other.w2y2;
        self
    }
}

pub fn mc_velocity(
    spec: &MixtureSpec,
    cond: Condition<'_>,
    x: &DVector<f64>,
    t: f64,
    n_samples: usize,
    bandwidth: f64,
    rng_seed: u64,
) -> Result<McEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "n_samples must be at least {MIN_SAMPLES}, got {n_samples}"
        )));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t={t} outside [0, 1]")));
    }
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: x.len() });
    }
    if let Condition::Class(label) = cond {
        spec.class_index(label)?;
    }

    let d = spec.dim();
    let inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let n_chunks = n_samples.div_ceil(CHUNK);
    let partial: Vec<Sums> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(rng_seed, &[rng::domain::MONTE_CARLO, c as u64]);
            let count = CHUNK.min(n_samples - c * CHUNK);
            let mut sums = Sums::zeros(d);
            for _ in 0..count {
                let x0 = spec.draw(cond, &mut rng).expect("label checked above");
                let x1 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let xt = &x1 * t + &x0 * (1.0 - t);
                let w = (-(xt - x).norm_squared() * inv_two_h2).exp();
                if w == 0.0 {
                    continue;
                }
                let y = x1 - x0;
                sums.w += w;
                sums.w2 += w * w;
                sums.wy.axpy(w, &y, 1.0);
                sums.w2y.axpy(w * w, &y, 1.0);
                sums.w2y2.axpy(w * w, &y.component_mul(&y), 1.0);
            }
            sums
        })
        .collect();
    let total = partial.iter().fold(Sums::zeros(d), |acc, s| acc.merge(s));

    if total.w == 0.0 {
        return Ok(McEstimate {
            estimate: DVector::from_element(d, f64::NAN),
            std_error: DVector::from_element(d, f64::INFINITY),
            effective_sample_size: 0.0,
            low_ess: true,
        });
    }
    let estimate = &total.wy / total.w;
    // sum w^2 (y - est)^2, expanded
    let resid = DVector::from_fn(d, |j, _| {
        let m = estimate[j];
        (total.w2y2[j] - 2.0 * m * total.w2y[j] + m * m * total.w2).max(0.0)
    });
    let std_error = resid.map(|r| r.sqrt() / total.w);
    let ess = total.w * total.w / total.w2;
    Ok(McEstimate {
        estimate,
        std_error,
        effective_sample_size: ess,
        low_ess: ess < MIN_ESS,
    })
}
