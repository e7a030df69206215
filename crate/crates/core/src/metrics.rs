//! Sample-quality metrics and empirical constants for the divergence bounds.

use nalgebra::{DMatrix, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::cfg_combine;
use crate::mixture::{Condition, MixtureSpec};

/// Mean Euclidean distance over all `n * m` row pairs.
fn mean_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = a.ncols();
    let mut total = 0.0;
    for i in 0..a.nrows() {
        let mut row = 0.0;
        for j in 0..b.nrows() {
            let mut s = 0.0;
            for k in 0..d {
                let diff = a[(i, k)] - b[(j, k)];
                s += diff * diff;
            }
            row += s.sqrt();
        }
        total += row;
    }
    total / (a.nrows() * b.nrows()) as f64
}

/// Total order on matrices so the cross term is always summed in the same
/// orientation, which makes the distance exactly symmetric.
fn precedes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    if a.nrows() != b.nrows() {
        return a.nrows() < b.nrows();
    }
    for (x, y) in a.iter().zip(b.iter()) {
        if x != y {
            return x.total_cmp(y).is_lt();
        }
    }
    true
}

fn check_samples(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidParameter("energy distance needs non-empty samples".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: b.ncols() });
    }
    Ok(())
}

/// V-statistic energy distance `2 E|A - B| - E|A - A'| - E|B - B'|` between
/// the rows of `a` and the rows of `b`.
pub fn energy_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_samples(a, b)?;
    let cross = if precedes(a, b) { mean_distance(a, b) } else { mean_distance(b, a) };
    Ok(2.0 * cross - (mean_distance(a, a) + mean_distance(b, b)))
}

/// Energy distance against a fixed reference sample whose self-term is
/// computed once. Gives the same value as [`energy_distance`].
#[derive(Debug, Clone)]
pub struct EnergyScorer {
    reference: DMatrix<f64>,
    self_term: f64,
}

impl EnergyScorer {
    pub fn new(reference: DMatrix<f64>) -> Self {
        let self_term = mean_distance(&reference, &reference);
        Self { reference, self_term }
    }

    pub fn reference(&self) -> &DMatrix<f64> {
        &self.reference
    }

    pub fn score(&self, samples: &DMatrix<f64>) -> Result<f64> {
        check_samples(samples, &self.reference)?;
        let cross = if precedes(samples, &self.reference) {
            mean_distance(samples, &self.reference)
        } else {
            mean_distance(&self.reference, samples)
        };
        Ok(2.0 * cross - (mean_distance(samples, samples) + self.self_term))
    }

    /// Mean distance from each sample row to the reference rows.
    pub fn distances_to_reference(&self, samples: &DMatrix<f64>) -> Vec<f64> {
        (0..samples.nrows())
            .map(|i| mean_distance(&samples.rows(i, 1).into_owned(), &self.reference))
            .collect()
    }

    pub fn self_term(&self) -> f64 {
        self.self_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub energy_distance: f64,
    /// `||mean(samples) - mu_c||`.
    pub mean_error: f64,
}

pub fn quality_score(
    samples: &DMatrix<f64>,
    reference: &EnergyScorer,
    target_mean: &DVector<f64>,
) -> Result<QualityScore> {
    let energy_distance = reference.score(samples)?;
    let mean = samples.row_mean().transpose();
    Ok(QualityScore {
        energy_distance,
        mean_error: (mean - target_mean).norm(),
    })
}

/// Stacks vectors as the rows of a matrix.
pub fn rows_to_matrix<'a, I>(rows: I, dim: usize) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let rows: Vec<&DVector<f64>> = rows.into_iter().collect();
    DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}

pub fn central_difference_jacobian<F>(f: F, x: &DVector<f64>, eps: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let d = x.len();
    let mut cols = Vec::with_capacity(d);
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += eps;
        xm[j] -= eps;
        cols.push((f(&xp)? - f(&xm)?) / (2.0 * eps));
    }
    Ok(DMatrix::from_columns(&cols))
}

pub fn forward_difference_jacobian<F>(f: F, x: &DVector<f64>, eps: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let f0 = f(x)?;
    let mut cols = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp[j] += eps;
        cols.push((f(&xp)? - &f0) / eps);
    }
    Ok(DMatrix::from_columns(&cols))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.singular_values().min()
}

/// Largest real part of the eigenvalues. If the QR iteration stalls, falls
/// back to the largest eigenvalue of the symmetric part, which bounds it
/// from above.
pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for tol in [f64::EPSILON, 1e-12 * scale, 1e-9 * scale] {
        if let Some(schur) = Schur::try_new(m.clone(), tol, 10_000) {
            if let Some(eig) = schur.eigenvalues() {
                return eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            return schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    log::warn!("Schur iteration did not converge; using the symmetric-part bound");
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Empirical constants appearing in the trajectory-divergence bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Largest spectral norm of the unconditional-velocity Jacobian.
    pub l_u: f64,
    /// Largest spectral norm of the velocity-gap Jacobian.
    pub l_delta: f64,
    /// Smallest singular value of the unconditional-velocity Jacobian.
    pub sigma_min: f64,
    /// Largest real part among eigenvalues of the guided-velocity Jacobian.
    pub lambda_max: f64,
    /// Largest ratio measured at the probes.
    pub rho_max: f64,
    /// Largest unconditional-velocity norm along the reference trajectory.
    pub v_max: f64,
    /// Probes where central and forward differences disagreed by more than 10%.
    pub fd_unstable_probes: usize,
}

/// A point `x` at time `t` where the Jacobians are probed.
#[derive(Debug, Clone)]
pub struct Probe {
    pub x: DVector<f64>,
    pub t: f64,
}

pub const MIN_PROBES: usize = 10;

/// Finite-difference estimates over `probes`. These are local constants for
/// the probed region, not global suprema.
pub fn estimate_bound_constants(
    spec: &MixtureSpec,
    label: &str,
    w: f64,
    probes: &[Probe],
    reference: &[Probe],
    fd_eps: f64,
) -> Result<BoundConstants> {
    if !(fd_eps > 0.0) {
        return Err(Error::InvalidParameter(format!("fd_eps must be > 0, got {fd_eps}")));
    }
    if probes.len() < MIN_PROBES {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_PROBES} probes, got {}",
            probes.len()
        )));
    }
    spec.class_index(label)?;

    let mut c = BoundConstants {
        l_u: 0.0,
        l_delta: 0.0,
        sigma_min: f64::INFINITY,
        lambda_max: f64::NEG_INFINITY,
        rho_max: 0.0,
        v_max: 0.0,
        fd_unstable_probes: 0,
    };
    for p in probes {
        let t = p.t;
        let v_u = |x: &DVector<f64>| spec.unconditional_velocity(x, t);
        let gap = |x: &DVector<f64>| {
            let pair = spec.velocity_pair(label, x, t)?;
            Ok(pair.delta)
        };
        let j_u = central_difference_jacobian(v_u, &p.x, fd_eps)?;
        let j_d = central_difference_jacobian(gap, &p.x, fd_eps)?;
        let j_u_fwd = forward_difference_jacobian(v_u, &p.x, fd_eps)?;
        let scale = j_u.norm().max(1e-12);
        if (&j_u - &j_u_fwd).norm() > 0.1 * scale {
            c.fd_unstable_probes += 1;
        }
        let j_w = &j_u + &j_d * w;
        c.l_u = c.l_u.max(spectral_norm(&j_u));
        c.l_delta = c.l_delta.max(spectral_norm(&j_d));
        c.sigma_min = c.sigma_min.min(min_singular_value(&j_u));
        c.lambda_max = c.lambda_max.max(max_real_eigenvalue(&j_w));
        if let Some(r) = spec.velocity_pair(label, &p.x, t)?.ratio.value() {
            c.rho_max = c.rho_max.max(r);
        }
    }
    for p in reference {
        c.v_max = c.v_max.max(spec.unconditional_velocity(&p.x, p.t)?.norm());
    }
    Ok(c)
}

/// Guided velocity `v_u + w delta` at a point.
pub fn guided_velocity(
    spec: &MixtureSpec,
    label: &str,
    w: f64,
    x: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let v_c = spec.velocity(Condition::Class(label), x, t)?;
    let v_u = spec.velocity(Condition::Unconditional, x, t)?;
    Ok(cfg_combine(&v_u, &v_c, w))
}
