//! Guidance-scale policies.
//!
//! The ratio-aware schedule maps the current ratio to a scale with
//! `w(rho) = 1 + (w_max - 1) exp(-alpha rho)`: the full ceiling when the
//! conditional signal is weak, decaying towards plain conditional sampling
//! (`w = 1`) when the ratio spikes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Ratio;

/// `v_u + w (v_c - v_u)`.
pub fn cfg_combine(v_u: &DVector<f64>, v_c: &DVector<f64>, w: f64) -> DVector<f64> {
    v_u + (v_c - v_u) * w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum GuidanceSchedule {
    Constant { w: f64 },
    Raag { w_max: f64, alpha: f64 },
    Table { entries: Vec<f64> },
    /// `max(1, w_max - slope * rho)`.
    Linear { w_max: f64, slope: f64 },
    /// `w_max` below `rho_cut`, 1 from there on.
    Piecewise { w_max: f64, rho_cut: f64 },
    /// `1 + (w_max - 1) / (1 + exp(steepness (rho - midpoint)))`.
    Sigmoid { w_max: f64, steepness: f64, midpoint: f64 },
}

fn finite_at_least(v: f64, min: f64, what: &str, errs: &mut Vec<String>) {
    if !v.is_finite() || v < min {
        errs.push(format!("{what} must be finite and >= {min}, got {v}"));
    }
}

fn finite_positive(v: f64, what: &str, errs: &mut Vec<String>) {
    if !v.is_finite() || v <= 0.0 {
        errs.push(format!("{what} must be finite and > 0, got {v}"));
    }
}

impl GuidanceSchedule {
    pub fn raag(w_max: f64, alpha: f64) -> Result<Self> {
        let s = GuidanceSchedule::Raag { w_max, alpha };
        s.validate()?;
        Ok(s)
    }

    /// Every parameter violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match *self {
            GuidanceSchedule::Constant { w } => finite_at_least(w, 1.0, "w", &mut errs),
            GuidanceSchedule::Raag { w_max, alpha } => {
                if !w_max.is_finite() || w_max <= 1.0 {
                    errs.push(format!("w_max must be finite and > 1, got {w_max}"));
                }
                finite_positive(alpha, "alpha", &mut errs);
            }
            GuidanceSchedule::Table { ref entries } => {
                if entries.is_empty() {
                    errs.push("table must have at least one entry".into());
                }
                for (i, &e) in entries.iter().enumerate() {
                    finite_at_least(e, 1.0, &format!("entries[{i}]"), &mut errs);
                }
            }
            GuidanceSchedule::Linear { w_max, slope } => {
                finite_at_least(w_max, 1.0, "w_max", &mut errs);
                finite_positive(slope, "slope", &mut errs);
            }
            GuidanceSchedule::Piecewise { w_max, rho_cut } => {
                finite_at_least(w_max, 1.0, "w_max", &mut errs);
                finite_positive(rho_cut, "rho_cut", &mut errs);
            }
            GuidanceSchedule::Sigmoid { w_max, steepness, midpoint } => {
                finite_at_least(w_max, 1.0, "w_max", &mut errs);
                finite_positive(steepness, "steepness", &mut errs);
                finite_positive(midpoint, "midpoint", &mut errs);
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(errs.join("; ")))
        }
    }

    /// Scale as a function of the ratio alone, for the ratio-driven kinds.
    pub fn of_ratio(&self, rho: f64) -> Option<f64> {
        Some(match *self {
            GuidanceSchedule::Constant { w } => w,
            GuidanceSchedule::Raag { w_max, alpha } => 1.0 + (w_max - 1.0) * (-alpha * rho).exp(),
            GuidanceSchedule::Linear { w_max, slope } => (w_max - slope * rho).max(1.0),
            GuidanceSchedule::Piecewise { w_max, rho_cut } => {
                if rho < rho_cut {
                    w_max
                } else {
                    1.0
                }
            }
            GuidanceSchedule::Sigmoid { w_max, steepness, midpoint } => {
                1.0 + (w_max - 1.0) / (1.0 + (steepness * (rho - midpoint)).exp())
            }
            GuidanceSchedule::Table { .. } => return None,
        })
    }

    /// Guidance scale for reverse step `step` given the ratio measured there.
    /// An undefined ratio counts as zero.
    pub fn scale_at(&self, step: usize, ratio: Ratio) -> Result<f64> {
        if let GuidanceSchedule::Table { entries } = self {
            return entries.get(step).copied().ok_or(Error::IndexOutOfRange {
                index: step,
                len: entries.len(),
            });
        }
        let rho = ratio.or_zero();
        Ok(self.of_ratio(rho).expect("non-table schedule"))
    }

    /// Short human-readable identifier used in result tables.
    pub fn describe(&self) -> String {
        match self {
            GuidanceSchedule::Constant { w } => format!("constant(w={w})"),
            GuidanceSchedule::Raag { w_max, alpha } => format!("raag(w_max={w_max};alpha={alpha})"),
            GuidanceSchedule::Table { entries } => {
                let e: Vec<String> = entries.iter().map(|v| v.to_string()).collect();
                format!("table({})", e.join(";"))
            }
            GuidanceSchedule::Linear { w_max, slope } => format!("linear(w_max={w_max};slope={slope})"),
            GuidanceSchedule::Piecewise { w_max, rho_cut } => {
                format!("piecewise(w_max={w_max};rho_cut={rho_cut})")
            }
            GuidanceSchedule::Sigmoid { w_max, steepness, midpoint } => {
                format!("sigmoid(w_max={w_max};steepness={steepness};midpoint={midpoint})")
            }
        }
    }

    /// Linear, piecewise and sigmoid counterparts of `Raag { w_max, alpha }`
    /// for the modelling-function ablation.
    ///
    /// All start at `w_max` for `rho = 0`. The linear and sigmoid variants also
    /// pass through the exponential's value at `rho = 1` (the sigmoid's
    /// midpoint is placed so that `steepness * midpoint = 10`, keeping its
    /// value at zero within `(w_max - 1) / (1 + e^10)` of the ceiling). A
    /// step function cannot take an intermediate value, so the piecewise
    /// variant cuts at the exponential's half-decay point `ln 2 / alpha`.
    pub fn ablation_variants(w_max: f64, alpha: f64) -> Result<Vec<GuidanceSchedule>> {
        GuidanceSchedule::raag(w_max, alpha)?;
        let at_one = 1.0 + (w_max - 1.0) * (-alpha).exp();
        let slope = w_max - at_one;
        // exp(k (1 - m)) = e^alpha - 1, with k m = 10
        let log_odds = alpha.exp_m1().ln();
        if log_odds <= -10.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha={alpha} too small for a matched sigmoid"
            )));
        }
        let steepness = 10.0 + log_odds;
        let midpoint = 10.0 / steepness;
        let variants = vec![
            GuidanceSchedule::Linear { w_max, slope },
            GuidanceSchedule::Piecewise { w_max, rho_cut: std::f64::consts::LN_2 / alpha },
            GuidanceSchedule::Sigmoid { w_max, steepness, midpoint },
        ];
        for v in &variants {
            v.validate()?;
        }
        Ok(variants)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub w_max_hat: f64,
    pub alpha_hat: f64,
    pub rmse_log: f64,
    pub n_points_used: usize,
    pub n_points_excluded: usize,
}

impl FitResult {
    pub fn schedule(&self) -> GuidanceSchedule {
        GuidanceSchedule::Raag { w_max: self.w_max_hat, alpha: self.alpha_hat }
    }
}

/// Least-squares fit of `ln(w* - 1) = ln(w_max - 1) - alpha rho`.
///
/// Pairs with `w* <= 1 + 1e-9` carry no information about the decay (their
/// log is undefined) and are excluded.
pub fn fit_exponential(pairs: &[(f64, f64)]) -> Result<FitResult> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|&&(rho, w)| w > 1.0 + 1e-9 && rho.is_finite() && w.is_finite())
        .map(|&(rho, w)| (rho, (w - 1.0).ln()))
        .collect();
    let excluded = pairs.len() - usable.len();
    if usable.len() < 3 {
        return Err(Error::InsufficientPoints { usable: usable.len(), excluded });
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 || usable.iter().all(|p| p.0 == usable[0].0) {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rmse_log = (usable
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let alpha_hat = -slope;
    if !(alpha_hat > 0.0) {
        return Err(Error::NonDecayingFit { alpha_hat });
    }
    Ok(FitResult {
        w_max_hat: 1.0 + intercept.exp(),
        alpha_hat,
        rmse_log,
        n_points_used: usable.len(),
        n_points_excluded: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn cfg_combine_examples() {
        let (u, c) = (v(&[1.0, -2.0]), v(&[0.5, 3.0]));
        assert_eq!(cfg_combine(&u, &c, 1.0), c);
        assert_eq!(cfg_combine(&u, &c, 0.0), u);
        assert_eq!(cfg_combine(&v(&[1.0, 0.0]), &v(&[2.0, 0.0]), 7.0), v(&[8.0, 0.0]));
    }

    #[test]
    fn scale_at_examples() {
        let s = GuidanceSchedule::raag(18.0, 12.0).unwrap();
        assert_eq!(s.scale_at(0, Ratio::Defined(0.0)).unwrap(), 18.0);
        assert_eq!(s.scale_at(0, Ratio::Undefined).unwrap(), 18.0);
        assert!((s.scale_at(0, Ratio::Defined(1e3)).unwrap() - 1.0).abs() < 1e-6);
        let s = GuidanceSchedule::raag(7.0, 1.0).unwrap();
        assert!((s.scale_at(3, Ratio::Defined(std::f64::consts::LN_2)).unwrap() - 4.0).abs() < 1e-12);
        let c = GuidanceSchedule::Constant { w: 5.0 };
        assert_eq!(c.scale_at(99, Ratio::Defined(3.0)).unwrap(), 5.0);
        let t = GuidanceSchedule::Table { entries: vec![2.0, 3.0] };
        assert_eq!(t.scale_at(1, Ratio::Undefined).unwrap(), 3.0);
        assert!(matches!(t.scale_at(2, Ratio::Undefined), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn validation() {
        assert!(GuidanceSchedule::raag(1.0, 2.0).is_err());
        assert!(GuidanceSchedule::raag(5.0, 0.0).is_err());
        assert!(GuidanceSchedule::Constant { w: 0.5 }.validate().is_err());
        assert!(GuidanceSchedule::Table { entries: vec![1.0, f64::NAN] }.validate().is_err());
        assert!(GuidanceSchedule::Linear { w_max: 5.0, slope: -1.0 }.validate().is_err());
        assert!(GuidanceSchedule::Sigmoid { w_max: 5.0, steepness: 0.0, midpoint: 1.0 }.validate().is_err());
        let errs = GuidanceSchedule::Raag { w_max: 0.0, alpha: -1.0 }.violations();
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn schedule_json_shape() {
        let s = GuidanceSchedule::Raag { w_max: 18.0, alpha: 12.0 };
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"kind":"raag","params":{"w_max":18.0,"alpha":12.0}}"#);
        let t: GuidanceSchedule =
            serde_json::from_str(r#"{"kind":"table","params":{"entries":[1,2.5]}}"#).unwrap();
        assert_eq!(t, GuidanceSchedule::Table { entries: vec![1.0, 2.5] });
        let c: GuidanceSchedule = serde_json::from_str(r#"{"kind":"constant","params":{"w":7}}"#).unwrap();
        assert_eq!(c, GuidanceSchedule::Constant { w: 7.0 });
    }

    #[test]
    fn ablation_variants_boundaries() {
        let (w_max, alpha) = (9.0, 2.0);
        let raag = GuidanceSchedule::raag(w_max, alpha).unwrap();
        let variants = GuidanceSchedule::ablation_variants(w_max, alpha).unwrap();
        for s in &variants {
            let w0 = s.of_ratio(0.0).unwrap();
            assert!((w0 - w_max).abs() < 1e-4 * (w_max - 1.0), "{s:?} at 0 gives {w0}");
        }
        let at_one = raag.of_ratio(1.0).unwrap();
        assert!((variants[0].of_ratio(1.0).unwrap() - at_one).abs() < 1e-12);
        assert!((variants[2].of_ratio(1.0).unwrap() - at_one).abs() < 1e-12);

        // linear reaches 1 at rho_cut = (w_max - 1) / slope
        let lin = GuidanceSchedule::Linear { w_max: 7.0, slope: 3.0 };
        assert_eq!(lin.of_ratio(2.0).unwrap(), 1.0);
        assert_eq!(lin.of_ratio(5.0).unwrap(), 1.0);
        let pw = GuidanceSchedule::Piecewise { w_max: 7.0, rho_cut: 0.5 };
        assert_eq!(pw.of_ratio(0.5 - 1e-9).unwrap(), 7.0);
        assert_eq!(pw.of_ratio(0.5 + 1e-9).unwrap(), 1.0);
    }

    #[test]
    fn fit_recovers_noiseless_parameters() {
        let (w_max, alpha) = (9.0, 4.0);
        let pairs: Vec<(f64, f64)> = (0..12)
            .map(|i| {
                let rho = 0.05 * i as f64;
                (rho, 1.0 + (w_max - 1.0) * (-alpha * rho).exp())
            })
            .collect();
        let fit = fit_exponential(&pairs).unwrap();
        assert!((fit.w_max_hat - 9.0).abs() < 1e-9);
        assert!((fit.alpha_hat - 4.0).abs() < 1e-9);
        assert!(fit.rmse_log < 1e-12);
    }

    #[test]
    fn fit_with_multiplicative_noise_within_five_percent() {
        let (w_max, alpha) = (9.0, 4.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pairs: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let rho = 0.02 * i as f64;
                let eps: f64 = noise.sample(&mut rng);
                (rho, 1.0 + (w_max - 1.0) * (-alpha * rho).exp() * eps.exp())
            })
            .collect();
        let fit = fit_exponential(&pairs).unwrap();
        assert!((fit.w_max_hat / w_max - 1.0).abs() < 0.05);
        assert!((fit.alpha_hat / alpha - 1.0).abs() < 0.05);
    }

    #[test]
    fn fit_errors() {
        let pairs = [(0.1, 3.0), (0.2, 2.0), (0.3, 1.0), (0.4, 1.0 + 1e-12)];
        assert!(matches!(
            fit_exponential(&pairs),
            Err(Error::InsufficientPoints { usable: 2, excluded: 2 })
        ));
        let same = [(0.5, 3.0), (0.5, 2.0), (0.5, 4.0)];
        assert!(matches!(fit_exponential(&same), Err(Error::DegenerateFit)));
        let rising = [(0.1, 2.0), (0.2, 3.0), (0.3, 4.0)];
        assert!(matches!(fit_exponential(&rising), Err(Error::NonDecayingFit { .. })));
    }

    proptest! {
        #[test]
        fn cfg_combine_is_affine(
            u in proptest::collection::vec(-5.0..5.0f64, 3),
            c in proptest::collection::vec(-5.0..5.0f64, 3),
            a in 0.0..20.0f64,
            b in 0.0..20.0f64,
        ) {
            let (u, c) = (DVector::from_vec(u), DVector::from_vec(c));
            let mid = cfg_combine(&u, &c, (a + b) / 2.0);
            let avg = (cfg_combine(&u, &c, a) + cfg_combine(&u, &c, b)) / 2.0;
            prop_assert!((mid - avg).amax() <= 1e-12 * (1.0 + a + b) * 10.0);
        }

        #[test]
        fn raag_is_bounded_and_decreasing(w_max in 1.01..20.0f64, alpha in 0.1..20.0f64) {
            let s = GuidanceSchedule::raag(w_max, alpha).unwrap();
            let mut prev = f64::INFINITY;
            // beyond rho ~ 30 / alpha the decayed term vanishes below f64 resolution
            for i in 0..200 {
                let rho = i as f64 * 0.05 / alpha;
                let w = s.of_ratio(rho).unwrap();
                prop_assert!(w > 1.0 && w <= w_max);
                prop_assert!(w < prev);
                prev = w;
            }
            let far = s.of_ratio(1e6).unwrap();
            prop_assert!(far >= 1.0 && far <= w_max);
        }

        #[test]
        fn fit_inverts_the_schedule(w_max in 1.5..20.0f64, alpha in 0.1..20.0f64) {
            let pairs: Vec<(f64, f64)> = (0..10)
                .map(|i| {
                    let rho = 0.1 * i as f64 / alpha;
                    (rho, 1.0 + (w_max - 1.0) * (-alpha * rho).exp())
                })
                .collect();
            let fit = fit_exponential(&pairs).unwrap();
            prop_assert!((fit.w_max_hat / w_max - 1.0).abs() < 1e-9);
            prop_assert!((fit.alpha_hat / alpha - 1.0).abs() < 1e-9);
        }
    }
}
