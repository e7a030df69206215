//! Class-conditional Gaussian mixtures and their exact rectified-flow velocities.
//!
//! Data `x0` is drawn from the mixture, noise `x1 ~ N(0, I)`, and the
//! interpolant is `x_t = t x1 + (1 - t) x0`. For one Gaussian component
//! `N(mu, S)` the pair `(x0, x_t)` is jointly Gaussian with
//!
//! ```text
//! x_t ~ N((1 - t) mu, C),      C = (1 - t)^2 S + t^2 I
//! E[x0 | x_t] = mu + (1 - t) S C^-1 r,   E[x1 | x_t] = t C^-1 r,   r = x_t - (1 - t) mu
//! ```
//!
//! so `E[x1 - x0 | x_t] = (t I - (1 - t) S) C^-1 r - mu`. The mixture velocity
//! is the responsibility-weighted sum over components.
//!
//! Every covariance is diagonalised once, `S = Q diag(l) Q^T`. Then `C` shares
//! the eigenbasis with eigenvalues `(1 - t)^2 l + t^2`, which makes each
//! evaluation a pair of matrix-vector products with no per-call factorisation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const SUM_TOL: f64 = 1e-12;

/// Which distribution a velocity or sample refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition<'a> {
    Unconditional,
    Class(&'a str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub label: String,
    pub components: Vec<Component>,
}

/// Ratio of the velocity gap norm to the unconditional velocity norm.
///
/// `Undefined` marks the points where the unconditional velocity vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Defined(f64),
    Undefined,
}

impl Ratio {
    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Defined(r) => Some(r),
            Ratio::Undefined => None,
        }
    }

    /// Guidance schedules read an undefined ratio as zero.
    pub fn or_zero(self) -> f64 {
        self.value().unwrap_or(0.0)
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Ratio::Defined(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityPair {
    pub v_u: DVector<f64>,
    pub v_c: DVector<f64>,
    pub delta: DVector<f64>,
    pub ratio: Ratio,
}

impl VelocityPair {
    pub fn new(v_u: DVector<f64>, v_c: DVector<f64>) -> Self {
        let delta = &v_c - &v_u;
        let denom = v_u.norm();
        let ratio = if denom > 0.0 {
            Ratio::Defined(delta.norm() / denom)
        } else {
            Ratio::Undefined
        };
        Self {
            v_u,
            v_c,
            delta,
            ratio,
        }
    }
}

/// Velocity and the component responsibilities that produced it.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub velocity: DVector<f64>,
    pub responsibilities: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Prepared {
    log_weight: f64,
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    cholesky: DMatrix<f64>,
}

struct ComponentEval {
    log_density: f64,
    velocity: DVector<f64>,
    /// `-C^-1 r`, the gradient of the log density.
    score: DVector<f64>,
}

impl Prepared {
    fn new(component: &Component, dim: usize, where_: &str) -> Result<Self> {
        let cov = &component.covariance;
        if cov.nrows() != dim || cov.ncols() != dim || component.mean.len() != dim {
            return Err(Error::InvalidSpec(format!(
                "{where_}: mean/covariance do not match dim {dim}"
            )));
        }
        if cov.iter().any(|v| !v.is_finite()) || component.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("{where_}: non-finite entries")));
        }
        let asym = (cov - cov.transpose()).amax();
        if asym > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::InvalidSpec(format!(
                "{where_}: covariance is not symmetric"
            )));
        }
        let cholesky = cov
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::InvalidSpec(format!("{where_}: covariance is not positive definite"))
            })?
            .l();
        let eig = SymmetricEigen::new(cov.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "{where_}: covariance is not positive definite"
            )));
        }
        Ok(Self {
            log_weight: component.weight.ln(),
            mean: component.mean.clone(),
            basis: eig.eigenvectors,
            eigenvalues: eig.eigenvalues,
            cholesky,
        })
    }

    fn evaluate(&self, x: &DVector<f64>, t: f64) -> Result<ComponentEval> {
        let s = 1.0 - t;
        let r = x - &self.mean * s;
        let rot = self.basis.tr_mul(&r);
        let d = x.len() as f64;
        let mut quad = 0.0;
        let mut log_det = 0.0;
        let mut scaled = DVector::zeros(rot.len());
        let mut inv = DVector::zeros(rot.len());
        for i in 0..rot.len() {
            let l = self.eigenvalues[i];
            let c = s * s * l + t * t;
            if !(c > f64::MIN_POSITIVE) {
                return Err(Error::DegenerateMarginal { t });
            }
            let y = rot[i] / c;
            quad += rot[i] * y;
            log_det += c.ln();
            inv[i] = y;
            scaled[i] = (t - s * l) * y;
        }
        let velocity = &self.basis * scaled - &self.mean;
        let score = -(&self.basis * inv);
        Ok(ComponentEval {
            log_density: -0.5 * (quad + log_det + d * (2.0 * PI).ln()),
            velocity,
            score,
        })
    }

    /// `(t I - (1 - t) S) C^-1`, the Jacobian of the component velocity.
    fn linear_map(&self, t: f64) -> DMatrix<f64> {
        let s = 1.0 - t;
        let diag = self
            .eigenvalues
            .map(|l| (t - s * l) / (s * s * l + t * t));
        &self.basis * DMatrix::from_diagonal(&diag) * self.basis.transpose()
    }
}

/// A class-conditional Gaussian mixture over `R^dim`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpecDoc", into = "MixtureSpecDoc")]
pub struct MixtureSpec {
    dim: usize,
    classes: Vec<ClassSpec>,
    class_priors: Vec<f64>,
    prepared: Vec<Vec<Prepared>>,
    class_means: Vec<DVector<f64>>,
    unconditional_mean: DVector<f64>,
}

impl PartialEq for MixtureSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.classes == other.classes
            && self.class_priors == other.class_priors
    }
}

impl MixtureSpec {
    pub fn new(dim: usize, classes: Vec<ClassSpec>, class_priors: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("dim must be positive".into()));
        }
        if classes.len() < 2 {
            return Err(Error::InvalidSpec("at least 2 classes are required".into()));
        }
        if class_priors.len() != classes.len() {
            return Err(Error::InvalidSpec(format!(
                "{} priors for {} classes",
                class_priors.len(),
                classes.len()
            )));
        }
        check_probability_vector(&class_priors, "class_priors")?;
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].iter().any(|o| o.label == c.label) {
                return Err(Error::InvalidSpec(format!("duplicate label `{}`", c.label)));
            }
            if c.components.is_empty() {
                return Err(Error::InvalidSpec(format!("class `{}` has no components", c.label)));
            }
            let weights: Vec<f64> = c.components.iter().map(|k| k.weight).collect();
            check_probability_vector(&weights, &format!("class `{}` weights", c.label))?;
        }

        let mut prepared = Vec::with_capacity(classes.len());
        let mut class_means = Vec::with_capacity(classes.len());
        for c in &classes {
            let comps = c
                .components
                .iter()
                .enumerate()
                .map(|(k, comp)| Prepared::new(comp, dim, &format!("class `{}` component {k}", c.label)))
                .collect::<Result<Vec<_>>>()?;
            let mean = c
                .components
                .iter()
                .fold(DVector::zeros(dim), |acc, k| acc + &k.mean * k.weight);
            prepared.push(comps);
            class_means.push(mean);
        }
        let unconditional_mean = class_means
            .iter()
            .zip(&class_priors)
            .fold(DVector::zeros(dim), |acc, (m, &p)| acc + m * p);

        Ok(Self {
            dim,
            classes,
            class_priors,
            prepared,
            class_means,
            unconditional_mean,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mixture spec serialises")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[ClassSpec] {
        &self.classes
    }

    pub fn class_priors(&self) -> &[f64] {
        &self.class_priors
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.label.as_str())
    }

    pub fn class_index(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn unconditional_mean(&self) -> &DVector<f64> {
        &self.unconditional_mean
    }

    pub fn class_mean(&self, label: &str) -> Result<&DVector<f64>> {
        Ok(&self.class_means[self.class_index(label)?])
    }

    /// Rescales every ambient coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let classes = self
            .classes
            .iter()
            .map(|c| ClassSpec {
                label: c.label.clone(),
                components: c
                    .components
                    .iter()
                    .map(|k| Component {
                        weight: k.weight,
                        mean: &k.mean * factor,
                        covariance: &k.covariance * (factor * factor),
                    })
                    .collect(),
            })
            .collect();
        Self::new(self.dim, classes, self.class_priors.clone())
    }

    fn check_point(&self, x: &DVector<f64>, t: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!("t={t} outside [0, 1]")));
        }
        Ok(())
    }

    /// `(log weight, component)` pairs making up the requested distribution.
    fn components(&self, cond: Condition<'_>) -> Result<Vec<(f64, &Prepared)>> {
        match cond {
            Condition::Unconditional => Ok(self
                .prepared
                .iter()
                .zip(&self.class_priors)
                .flat_map(|(comps, &p)| comps.iter().map(move |k| (p.ln() + k.log_weight, k)))
                .collect()),
            Condition::Class(label) => {
                let idx = self.class_index(label)?;
                Ok(self.prepared[idx].iter().map(|k| (k.log_weight, k)).collect())
            }
        }
    }

    fn evaluate_all(
        &self,
        cond: Condition<'_>,
        x: &DVector<f64>,
        t: f64,
    ) -> Result<(Vec<(f64, &Prepared)>, Vec<ComponentEval>, Vec<f64>)> {
        self.check_point(x, t)?;
        let comps = self.components(cond)?;
        let evals = comps
            .iter()
            .map(|(_, k)| k.evaluate(x, t))
            .collect::<Result<Vec<_>>>()?;
        let logits: Vec<f64> = comps
            .iter()
            .zip(&evals)
            .map(|((lw, _), e)| lw + e.log_density)
            .collect();
        let resp = softmax(&logits);
        Ok((comps, evals, resp))
    }

    pub fn posterior(&self, cond: Condition<'_>, x: &DVector<f64>, t: f64) -> Result<Posterior> {
        let (_, evals, resp) = self.evaluate_all(cond, x, t)?;
        let velocity = evals
            .iter()
            .zip(&resp)
            .fold(DVector::zeros(self.dim), |acc, (e, &g)| acc + &e.velocity * g);
        Ok(Posterior {
            velocity,
            responsibilities: resp,
        })
    }

    pub fn velocity(&self, cond: Condition<'_>, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        Ok(self.posterior(cond, x, t)?.velocity)
    }

    /// `E[x1 - x0 | x_t = x]` under the full mixture.
    pub fn unconditional_velocity(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.velocity(Condition::Unconditional, x, t)
    }

    /// `E[x1 - x0 | x_t = x, c = label]`.
    pub fn conditional_velocity(
        &self,
        label: &str,
        x: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>> {
        self.velocity(Condition::Class(label), x, t)
    }

    pub fn velocity_pair(&self, label: &str, x: &DVector<f64>, t: f64) -> Result<VelocityPair> {
        let v_c = self.conditional_velocity(label, x, t)?;
        let v_u = self.unconditional_velocity(x, t)?;
        Ok(VelocityPair::new(v_u, v_c))
    }

    /// `||mu_c - mu_u|| / ||x1 - mu_u||`, the ratio at the first reverse step.
    pub fn initial_ratio_closed_form(&self, label: &str, x1: &DVector<f64>) -> Result<f64> {
        self.check_point(x1, 1.0)?;
        let mu_c = self.class_mean(label)?;
        let mu_u = &self.unconditional_mean;
        let denom = (x1 - mu_u).norm();
        if denom == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok((mu_c - mu_u).norm() / denom)
    }

    /// Exact Jacobian of the velocity field with respect to `x`.
    ///
    /// `J = sum_k g_k A_k + sum_k g_k v_k (s_k - s_bar)^T` where `A_k` is the
    /// component linear map, `s_k` the component score and `g_k` the
    /// responsibilities.
    pub fn velocity_jacobian(
        &self,
        cond: Condition<'_>,
        x: &DVector<f64>,
        t: f64,
    ) -> Result<DMatrix<f64>> {
        let (comps, evals, resp) = self.evaluate_all(cond, x, t)?;
        let mean_score = evals
            .iter()
            .zip(&resp)
            .fold(DVector::zeros(self.dim), |acc, (e, &g)| acc + &e.score * g);
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        for (((_, k), e), &g) in comps.iter().zip(&evals).zip(&resp) {
            if g == 0.0 {
                continue;
            }
            jac += k.linear_map(t) * g;
            jac += (&e.velocity * g) * (&e.score - &mean_score).transpose();
        }
        Ok(jac)
    }

    /// Draws one sample from the data distribution or a class.
    pub fn draw<R: Rng + ?Sized>(&self, cond: Condition<'_>, rng: &mut R) -> Result<DVector<f64>> {
        let class = match cond {
            Condition::Class(label) => self.class_index(label)?,
            Condition::Unconditional => pick(&self.class_priors, rng.random::<f64>()),
        };
        let weights: Vec<f64> = self.classes[class].components.iter().map(|k| k.weight).collect();
        let comp = &self.prepared[class][pick(&weights, rng.random::<f64>())];
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(&comp.mean + &comp.cholesky * z)
    }

    /// `n` i.i.d. draws as the rows of an `n x dim` matrix.
    pub fn sample_data(&self, cond: Condition<'_>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        let mut rng = rng::stream(seed, &[rng::domain::DATA]);
        let mut out = DMatrix::zeros(n, self.dim);
        for i in 0..n {
            let x = self.draw(cond, &mut rng)?;
            out.set_row(i, &x.transpose());
        }
        Ok(out)
    }
}

fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidSpec(format!("{what} must be finite and non-negative")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidSpec(format!("{what} sum to {sum}, expected 1")));
    }
    Ok(())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassDoc {
    label: String,
    components: Vec<ComponentDoc>,
}

/// On-disk layout; covariances are row-major flat arrays of `dim^2` numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureSpecDoc {
    dim: usize,
    class_priors: Vec<f64>,
    classes: Vec<ClassDoc>,
}

impl TryFrom<MixtureSpecDoc> for MixtureSpec {
    type Error = Error;

    fn try_from(doc: MixtureSpecDoc) -> Result<Self> {
        let d = doc.dim;
        let classes = doc
            .classes
            .into_iter()
            .map(|c| {
                let components = c
                    .components
                    .into_iter()
                    .map(|k| {
                        if k.covariance.len() != d * d || k.mean.len() != d {
                            return Err(Error::InvalidSpec(format!(
                                "class `{}`: mean needs {d} and covariance {} numbers",
                                c.label,
                                d * d
                            )));
                        }
                        Ok(Component {
                            weight: k.weight,
                            mean: DVector::from_vec(k.mean),
                            covariance: DMatrix::from_row_slice(d, d, &k.covariance),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ClassSpec {
                    label: c.label,
                    components,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureSpec::new(d, classes, doc.class_priors)
    }
}

impl From<MixtureSpec> for MixtureSpecDoc {
    fn from(spec: MixtureSpec) -> Self {
        let classes = spec
            .classes
            .into_iter()
            .map(|c| ClassDoc {
                label: c.label,
                components: c
                    .components
                    .into_iter()
                    .map(|k| ComponentDoc {
                        weight: k.weight,
                        mean: k.mean.iter().copied().collect(),
                        covariance: k.covariance.transpose().iter().copied().collect(),
                    })
                    .collect(),
            })
            .collect();
        MixtureSpecDoc {
            dim: spec.dim,
            class_priors: spec.class_priors,
            classes,
        }
    }
}
