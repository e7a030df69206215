//! Run configuration files.
//!
//! ```json
//! {"experiment": "ratio-spike", "spec_path": "spec.json", "out_dir": "out",
//!  "seed": 42, "params": {"label": "0", "schedule": {"kind": "constant",
//!  "params": {"w": 7.0}}, "n_steps": 10, "n_seeds": 100}}
//! ```
//!
//! Parsing reports every violation it finds rather than stopping at the first.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::experiments::{DivergenceConfig, GreedyConfig, GroupingConfig};
use crate::guidance::GuidanceSchedule;
use crate::mixture::MixtureSpec;
use crate::sampler::IntegratorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RatioSpike,
    RatioGroup,
    Divergence,
    Greedy,
    Compare,
    Sweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::RatioSpike,
        ExperimentKind::RatioGroup,
        ExperimentKind::Divergence,
        ExperimentKind::Greedy,
        ExperimentKind::Compare,
        ExperimentKind::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RatioSpike => "ratio-spike",
            ExperimentKind::RatioGroup => "ratio-group",
            ExperimentKind::Divergence => "divergence",
            ExperimentKind::Greedy => "greedy",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioSpikeParams {
    pub label: String,
    pub schedule: GuidanceSchedule,
    pub n_steps: usize,
    #[serde(default)]
    pub integrator: IntegratorKind,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareParams {
    pub labels: Vec<String>,
    pub schedules: Vec<GuidanceSchedule>,
    pub step_counts: Vec<usize>,
    #[serde(default = "default_integrators")]
    pub integrators: Vec<IntegratorKind>,
    /// Adds the linear, piecewise and sigmoid counterparts of every RAAG
    /// schedule in `schedules`.
    #[serde(default)]
    pub ablation: bool,
    pub n_seeds: usize,
    pub n_reference: usize,
}

fn default_integrators() -> Vec<IntegratorKind> {
    vec![IntegratorKind::Euler]
}

impl CompareParams {
    /// `schedules` plus the ablation variants when requested.
    pub fn expanded_schedules(&self) -> crate::Result<Vec<GuidanceSchedule>> {
        let mut out = self.schedules.clone();
        if self.ablation {
            for s in &self.schedules {
                if let GuidanceSchedule::Raag { w_max, alpha } = *s {
                    out.extend(GuidanceSchedule::ablation_variants(w_max, alpha)?);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    pub labels: Vec<String>,
    pub w_max_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub n_steps: usize,
    #[serde(default)]
    pub integrator: IntegratorKind,
    pub n_seeds: usize,
    pub n_reference: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentParams {
    RatioSpike(RatioSpikeParams),
    RatioGroup(GroupingConfig),
    Divergence(DivergenceConfig),
    Greedy(GreedyConfig),
    Compare(CompareParams),
    Sweep(SweepParams),
}

impl ExperimentParams {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentParams::RatioSpike(_) => ExperimentKind::RatioSpike,
            ExperimentParams::RatioGroup(_) => ExperimentKind::RatioGroup,
            ExperimentParams::Divergence(_) => ExperimentKind::Divergence,
            ExperimentParams::Greedy(_) => ExperimentKind::Greedy,
            ExperimentParams::Compare(_) => ExperimentKind::Compare,
            ExperimentParams::Sweep(_) => ExperimentKind::Sweep,
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            ExperimentParams::RatioSpike(p) => serde_json::to_value(p),
            ExperimentParams::RatioGroup(p) => serde_json::to_value(p),
            ExperimentParams::Divergence(p) => serde_json::to_value(p),
            ExperimentParams::Greedy(p) => serde_json::to_value(p),
            ExperimentParams::Compare(p) => serde_json::to_value(p),
            ExperimentParams::Sweep(p) => serde_json::to_value(p),
        };
        v.expect("parameter blocks serialize")
    }

    /// Semantic checks that need no spec.
    pub fn violations(&self) -> Vec<String> {
        match self {
            ExperimentParams::RatioSpike(p) => {
                let mut v = p.schedule.violations();
                if p.n_steps == 0 {
                    v.push("n_steps must be >= 1".into());
                }
                if let GuidanceSchedule::Table { entries } = &p.schedule {
                    if entries.len() < p.n_steps {
                        v.push(format!("table has {} entries but n_steps={}", entries.len(), p.n_steps));
                    }
                }
                if p.n_seeds < crate::experiments::ratio_spike::MIN_SEEDS {
                    v.push(format!(
                        "n_seeds must be >= {}, got {}",
                        crate::experiments::ratio_spike::MIN_SEEDS,
                        p.n_seeds
                    ));
                }
                v
            }
            ExperimentParams::RatioGroup(p) => p.violations(),
            ExperimentParams::Divergence(p) => p.violations(),
            ExperimentParams::Greedy(p) => p.violations(),
            ExperimentParams::Compare(p) => {
                let mut v = Vec::new();
                if p.labels.is_empty() {
                    v.push("labels must not be empty".into());
                }
                if !p.schedules.iter().any(|s| matches!(s, GuidanceSchedule::Constant { .. }))
                    || !p.schedules.iter().any(|s| matches!(s, GuidanceSchedule::Raag { .. }))
                {
                    v.push("schedules must include at least one constant and one raag schedule".into());
                }
                for (i, s) in p.schedules.iter().enumerate() {
                    v.extend(s.violations().into_iter().map(|e| format!("schedules[{i}]: {e}")));
                    if let GuidanceSchedule::Table { entries } = s {
                        if p.step_counts.iter().any(|&n| n > entries.len()) {
                            v.push(format!("schedules[{i}]: table shorter than the largest step count"));
                        }
                    }
                }
                if p.step_counts.is_empty() || p.step_counts.contains(&0) {
                    v.push("step_counts must be non-empty and every entry >= 1".into());
                }
                if p.integrators.is_empty() {
                    v.push("integrators must not be empty".into());
                }
                if p.n_seeds < 2 {
                    v.push("n_seeds must be >= 2".into());
                }
                if p.n_reference < 2 {
                    v.push("n_reference must be >= 2".into());
                }
                v
            }
            ExperimentParams::Sweep(p) => {
                let mut v = Vec::new();
                if p.labels.is_empty() {
                    v.push("labels must not be empty".into());
                }
                if p.w_max_values.is_empty() || p.w_max_values.iter().any(|w| !w.is_finite() || *w <= 1.0) {
                    v.push("w_max_values must be non-empty, finite and > 1".into());
                }
                if p.alpha_values.is_empty() || p.alpha_values.iter().any(|a| !a.is_finite() || *a <= 0.0) {
                    v.push("alpha_values must be non-empty, finite and > 0".into());
                }
                if p.n_steps == 0 {
                    v.push("n_steps must be >= 1".into());
                }
                if p.n_seeds < 2 {
                    v.push("n_seeds must be >= 2".into());
                }
                if p.n_reference < 2 {
                    v.push("n_reference must be >= 2".into());
                }
                v
            }
        }
    }

    /// Labels the experiment refers to.
    pub fn labels(&self) -> Vec<&str> {
        match self {
            ExperimentParams::RatioSpike(p) => vec![p.label.as_str()],
            ExperimentParams::RatioGroup(p) => p.labels.iter().map(String::as_str).collect(),
            ExperimentParams::Divergence(p) => vec![p.label.as_str()],
            ExperimentParams::Greedy(p) => p.labels.iter().map(String::as_str).collect(),
            ExperimentParams::Compare(p) => p.labels.iter().map(String::as_str).collect(),
            ExperimentParams::Sweep(p) => p.labels.iter().map(String::as_str).collect(),
        }
    }

    /// Violations that depend on the loaded spec (unknown labels).
    pub fn spec_violations(&self, spec: &MixtureSpec) -> Vec<String> {
        self.labels()
            .into_iter()
            .filter(|l| spec.class_index(l).is_err())
            .map(|l| format!("label `{l}` is not in the spec"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub params: ExperimentParams,
}

const TOP_LEVEL: [&str; 5] = ["experiment", "spec_path", "out_dir", "seed", "params"];

/// Field names and which of them are required, per parameter block.
fn param_fields(kind: ExperimentKind) -> (&'static [&'static str], &'static [&'static str]) {
    match kind {
        ExperimentKind::RatioSpike => (
            &["label", "schedule", "n_steps", "integrator", "n_seeds"],
            &["label", "schedule", "n_steps", "n_seeds"],
        ),
        ExperimentKind::RatioGroup => (
            &["labels", "w_const", "n_steps", "n_seeds_per", "top_k", "n_reference", "n_permutations"],
            &["labels", "w_const", "n_steps", "n_seeds_per", "top_k", "n_reference", "n_permutations"],
        ),
        ExperimentKind::Divergence => (
            &["label", "w_values", "perturbation_eps", "n_steps", "horizon_t", "n_seeds", "fd_eps"],
            &["label", "w_values", "n_steps", "n_seeds"],
        ),
        ExperimentKind::Greedy => (
            &[
                "labels",
                "n_search_steps",
                "total_steps",
                "default_w",
                "grid",
                "n_eval_seeds",
                "n_reference",
                "integrator",
            ],
            &["labels", "n_search_steps", "total_steps", "n_eval_seeds", "n_reference"],
        ),
        ExperimentKind::Compare => (
            &["labels", "schedules", "step_counts", "integrators", "ablation", "n_seeds", "n_reference"],
            &["labels", "schedules", "step_counts", "n_seeds", "n_reference"],
        ),
        ExperimentKind::Sweep => (
            &["labels", "w_max_values", "alpha_values", "n_steps", "integrator", "n_seeds", "n_reference"],
            &["labels", "w_max_values", "alpha_values", "n_steps", "n_seeds", "n_reference"],
        ),
    }
}

/// Deserializes one field at a time so that each bad field gets its own message.
fn check_fields<T: DeserializeOwned>(
    obj: &Map<String, Value>,
    kind: ExperimentKind,
    errs: &mut Vec<String>,
) -> Option<T> {
    let (fields, required) = param_fields(kind);
    let before = errs.len();
    for key in obj.keys() {
        if !fields.contains(&key.as_str()) {
            errs.push(format!("params: unknown field `{key}` for {kind}"));
        }
    }
    for key in required {
        if !obj.contains_key(*key) {
            errs.push(format!("params: missing field `{key}`"));
        }
    }
    if errs.len() > before {
        return None;
    }
    match serde_json::from_value::<T>(Value::Object(obj.clone())) {
        Ok(p) => Some(p),
        Err(e) => {
            errs.push(format!("params: {e}"));
            None
        }
    }
}

impl RunConfig {
    pub fn kind(&self) -> ExperimentKind {
        self.params.kind()
    }

    /// Parses and validates a config. On failure returns every violation found.
    pub fn from_value(value: &Value) -> Result<Self, Vec<String>> {
        let Some(obj) = value.as_object() else {
            return Err(vec!["config must be a JSON object".into()]);
        };
        let mut errs = Vec::new();
        for key in obj.keys() {
            if !TOP_LEVEL.contains(&key.as_str()) {
                errs.push(format!("unknown field `{key}`"));
            }
        }
        let kind = match obj.get("experiment") {
            None => {
                errs.push("missing field `experiment`".into());
                None
            }
            Some(v) => match serde_json::from_value::<ExperimentKind>(v.clone()) {
                Ok(k) => Some(k),
                Err(_) => {
                    let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                    errs.push(format!("experiment must be one of {}, got {v}", names.join(", ")));
                    None
                }
            },
        };
        let mut path_field = |name: &str| match obj.get(name) {
            None => {
                errs.push(format!("missing field `{name}`"));
                None
            }
            Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
            Some(v) => {
                errs.push(format!("{name} must be a non-empty string, got {v}"));
                None
            }
        };
        let spec_path = path_field("spec_path");
        let out_dir = path_field("out_dir");
        let seed = match obj.get("seed") {
            None => {
                errs.push("missing field `seed`".into());
                None
            }
            Some(v) => match v.as_u64() {
                Some(s) => Some(s),
                None => {
                    errs.push(format!("seed must be an unsigned 64-bit integer, got {v}"));
                    None
                }
            },
        };
        let params = match (obj.get("params"), kind) {
            (None, _) => {
                errs.push("missing field `params`".into());
                None
            }
            (Some(Value::Object(p)), Some(kind)) => {
                let parsed = match kind {
                    ExperimentKind::RatioSpike => check_fields(p, kind, &mut errs).map(ExperimentParams::RatioSpike),
                    ExperimentKind::RatioGroup => check_fields(p, kind, &mut errs).map(ExperimentParams::RatioGroup),
                    ExperimentKind::Divergence => check_fields(p, kind, &mut errs).map(ExperimentParams::Divergence),
                    ExperimentKind::Greedy => check_fields(p, kind, &mut errs).map(ExperimentParams::Greedy),
                    ExperimentKind::Compare => check_fields(p, kind, &mut errs).map(ExperimentParams::Compare),
                    ExperimentKind::Sweep => check_fields(p, kind, &mut errs).map(ExperimentParams::Sweep),
                };
                if let Some(p) = &parsed {
                    errs.extend(p.violations().into_iter().map(|e| format!("params: {e}")));
                }
                parsed
            }
            (Some(Value::Object(_)), None) => None,
            (Some(v), _) => {
                errs.push(format!("params must be an object, got {v}"));
                None
            }
        };
        match (spec_path, out_dir, seed, params) {
            (Some(spec_path), Some(out_dir), Some(seed), Some(params)) if errs.is_empty() => {
                Ok(RunConfig { spec_path, out_dir, seed, params })
            }
            _ => Err(errs),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, Vec<String>> {
        let value: Value = serde_json::from_str(text).map_err(|e| vec![format!("invalid JSON: {e}")])?;
        Self::from_value(&value)
    }

    /// Canonical JSON form (keys sorted).
    pub fn to_value(&self) -> Value {
        let mut m = BTreeMap::new();
        m.insert("experiment", Value::String(self.kind().name().into()));
        m.insert("spec_path", Value::String(self.spec_path.to_string_lossy().into_owned()));
        m.insert("out_dir", Value::String(self.out_dir.to_string_lossy().into_owned()));
        m.insert("seed", Value::from(self.seed));
        m.insert("params", self.params.to_value());
        serde_json::to_value(m).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.to_value()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

impl Serialize for RunConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RunConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        RunConfig::from_value(&v).map_err(|errs| serde::de::Error::custom(errs.join("; ")))
    }
}
