//! Canonical benchmark mixtures. Every number is a literal so the specs are
//! identical on every machine.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{ClassSpec, Component, MixtureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two unit-covariance classes at `(2, 0)` and `(-2, 0)`.
    TwoClass2d,
    /// Eight two-component classes in 8-D with class offsets of varying size.
    EightClass8d,
    /// Four identical standard-normal classes; every ratio is zero.
    SharedMeanNull,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::TwoClass2d, Preset::EightClass8d, Preset::SharedMeanNull];

    pub fn name(self) -> &'static str {
        match self {
            Preset::TwoClass2d => "two-class-2d",
            Preset::EightClass8d => "eight-class-8d",
            Preset::SharedMeanNull => "shared-mean-null",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset `{s}`")))
    }
}

fn component(weight: f64, mean: &[f64], cov_rows: &[f64]) -> Component {
    let d = mean.len();
    Component {
        weight,
        mean: DVector::from_column_slice(mean),
        covariance: DMatrix::from_row_slice(d, d, cov_rows),
    }
}

fn identity(d: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = scale;
    }
    v
}

fn two_class_2d() -> MixtureSpec {
    let cov = identity(2, 1.0);
    MixtureSpec::new(
        2,
        vec![
            ClassSpec { label: "0".into(), components: vec![component(1.0, &[2.0, 0.0], &cov)] },
            ClassSpec { label: "1".into(), components: vec![component(1.0, &[-2.0, 0.0], &cov)] },
        ],
        vec![0.5, 0.5],
    )
    .expect("preset is valid")
}

/// Classes come in opposite pairs along the first four axes at distance 3
/// from the origin, so the unconditional mean is the origin and
/// `||mu_c - mu_u|| = 3` for every class. Each class splits into two
/// components along one of the last four axes.
fn eight_class_8d() -> MixtureSpec {
    const D: usize = 8;
    const RADIUS: f64 = 3.0;
    const SPLIT: f64 = 0.5;
    let mut classes = Vec::with_capacity(8);
    for (i, sign) in (0..8).map(|i| (i, if i % 2 == 0 { 1.0 } else { -1.0 })) {
        let axis = i / 2;
        let split_axis = 4 + (i % 4);
        let mut cov = identity(D, 0.25);
        cov[split_axis * D + split_axis] = 0.125;
        let (a, b) = (axis, split_axis);
        cov[a * D + b] = 0.0625;
        cov[b * D + a] = 0.0625;
        let mut centre = [0.0; D];
        centre[axis] = sign * RADIUS;
        let mut lo = centre;
        let mut hi = centre;
        lo[split_axis] -= SPLIT;
        hi[split_axis] += SPLIT;
        classes.push(ClassSpec {
            label: i.to_string(),
            components: vec![component(0.5, &lo, &cov), component(0.5, &hi, &cov)],
        });
    }
    MixtureSpec::new(D, classes, vec![0.125; 8]).expect("preset is valid")
}

fn shared_mean_null() -> MixtureSpec {
    const D: usize = 4;
    let classes = (0..4)
        .map(|i| ClassSpec {
            label: i.to_string(),
            components: vec![component(1.0, &[0.0; D], &identity(D, 1.0))],
        })
        .collect();
    MixtureSpec::new(D, classes, vec![0.25; 4]).expect("preset is valid")
}

pub fn build(preset: Preset) -> MixtureSpec {
    match preset {
        Preset::TwoClass2d => two_class_2d(),
        Preset::EightClass8d => eight_class_8d(),
        Preset::SharedMeanNull => shared_mean_null(),
    }
}

/// Writes the preset as a JSON spec file.
pub fn generate_spec(preset: Preset, out_path: &Path) -> Result<MixtureSpec> {
    let spec = build(preset);
    std::fs::write(out_path, spec.to_json() + "\n")?;
    Ok(spec)
}
