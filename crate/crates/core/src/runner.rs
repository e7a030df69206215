//! Executes a run config and writes its outputs.
//!
//! Every run writes `results.csv` and `summary.json` into `out_dir`.
//! Ratio-spike runs also write `trajectories.csv`, and `states.json` when
//! states are dumped. CSV files are comma-separated with LF line endings and
//! end with a `config_hash` column.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentParams, RunConfig};
use crate::experiments::{self, stats};
use crate::mixture::MixtureSpec;

/// State norms above this are flagged in `trajectories.csv`.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    ConfigNotFound,
    ConfigInvalid,
    SpecNotFound,
    SpecInvalid,
    OutputExists,
    Runtime,
    Io,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::ConfigNotFound => "config-not-found",
            ErrorKind::ConfigInvalid => "config-invalid",
            ErrorKind::SpecNotFound => "spec-not-found",
            ErrorKind::SpecInvalid => "spec-invalid",
            ErrorKind::OutputExists => "output-exists",
            ErrorKind::Runtime => "runtime",
            ErrorKind::Io => "io",
        }
    }

    /// 2 for anything wrong with the inputs, 1 for failures while running.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Runtime | ErrorKind::Io => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl RunError {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), violations: Vec::new() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// `{"error": {"kind": ..., "message": ..., "violations": [...]}}` on one line.
    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for RunError {}

fn runtime(e: crate::Error) -> RunError {
    RunError::new(ErrorKind::Runtime, e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::new(ErrorKind::Io, format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub force: bool,
    pub dump_states: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub config_hash: String,
    /// One-line human-readable result.
    pub summary_line: String,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads a config file. Relative paths inside it are kept as written.
pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| {
        let kind = if e.kind() == io::ErrorKind::NotFound { ErrorKind::ConfigNotFound } else { ErrorKind::Io };
        RunError::new(kind, format!("{}: {e}", path.display()))
    })?;
    RunConfig::from_json(&text).map_err(|violations| RunError {
        kind: ErrorKind::ConfigInvalid,
        message: format!("{} violation(s) in {}", violations.len(), path.display()),
        violations,
    })
}

fn load_spec(path: &Path) -> Result<MixtureSpec, RunError> {
    let text = fs::read_to_string(path).map_err(|e| {
        let kind = if e.kind() == io::ErrorKind::NotFound { ErrorKind::SpecNotFound } else { ErrorKind::Io };
        RunError::new(kind, format!("{}: {e}", path.display()))
    })?;
    MixtureSpec::from_json(&text).map_err(|e| RunError::new(ErrorKind::SpecInvalid, format!("{}: {e}", path.display())))
}

/// Runs the config file at `config_path`. Relative `spec_path` and `out_dir`
/// are resolved against the config file's directory.
pub fn run_file(config_path: &Path, opts: RunOptions) -> Result<RunOutcome, RunError> {
    let cfg = load_config(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_config(&cfg, base, opts)
}

pub fn run_config(cfg: &RunConfig, base: &Path, opts: RunOptions) -> Result<RunOutcome, RunError> {
    let spec = load_spec(&resolve(base, &cfg.spec_path))?;
    let violations = cfg.params.spec_violations(&spec);
    if !violations.is_empty() {
        return Err(RunError {
            kind: ErrorKind::ConfigInvalid,
            message: format!("{} violation(s) against the mixture spec", violations.len()),
            violations,
        });
    }
    let out_dir = resolve(base, &cfg.out_dir);
    let summary_path = out_dir.join("summary.json");
    if summary_path.exists() && !opts.force {
        return Err(RunError::new(
            ErrorKind::OutputExists,
            format!("{} exists; pass --force to overwrite", summary_path.display()),
        ));
    }
    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;

    let hash = cfg.hash();
    let mut out = Output { dir: out_dir.clone(), hash: hash.clone(), files: Vec::new() };
    let (stats, line) = execute(cfg, &spec, opts, &mut out)?;
    let summary = json!({
        "experiment": cfg.kind().name(),
        "config": cfg.to_value(),
        "config_hash": hash,
        "quality": "energy distance to reference class samples; lower is better, so the search takes the argmin",
        "stats": stats,
    });
    out.write_text("summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
    Ok(RunOutcome {
        out_dir,
        files: out.files,
        summary_line: format!("{}: {line} [config {}] -> {}", cfg.kind().name(), &hash[..12], summary_path.display()),
        config_hash: hash,
    })
}

struct Output {
    dir: PathBuf,
    hash: String,
    files: Vec<PathBuf>,
}

impl Output {
    fn write_text(&mut self, name: &str, text: String) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    /// Writes `header` plus `config_hash`, and one record per row.
    fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut h: Vec<&str> = header.to_vec();
        h.push("config_hash");
        w.write_record(&h).map_err(|e| io_err(&path, e))?;
        for r in rows {
            w.write_record(r.iter().map(String::as_str).chain([self.hash.as_str()]))
                .map_err(|e| io_err(&path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| io_err(&path, e))?;
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn execute(cfg: &RunConfig, spec: &MixtureSpec, opts: RunOptions, out: &mut Output) -> Result<(Value, String), RunError> {
    let seed = cfg.seed;
    match &cfg.params {
        ExperimentParams::RatioSpike(p) => {
            let rep = experiments::run_ratio_spike(spec, &p.label, &p.schedule, p.n_steps, p.integrator, p.n_seeds, seed)
                .map_err(runtime)?;
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| vec![f(r.t), f(r.mean_ratio), f(r.p10), f(r.p90), r.step.to_string(), r.n_defined.to_string()])
                .collect();
            out.write_csv("results.csv", &["t", "mean_ratio", "p10", "p90", "step", "n_defined"], &rows)?;

            let mut traj_rows = Vec::new();
            for (s, tr) in &rep.trajectories {
                for k in 0..tr.n_steps() {
                    let norm = tr.states[k].norm();
                    let flag = !norm.is_finite() || norm > DIVERGENCE_NORM;
                    traj_rows.push(vec![
                        s.to_string(),
                        k.to_string(),
                        f(tr.times[k]),
                        f(tr.scales[k]),
                        tr.ratios[k].value().map(f).unwrap_or_default(),
                        f(norm),
                        flag.to_string(),
                    ]);
                }
            }
            out.write_csv(
                "trajectories.csv",
                &["seed", "step", "t", "scale", "ratio", "state_norm", "divergence_flag"],
                &traj_rows,
            )?;
            if opts.dump_states {
                let dump: Vec<Value> = rep
                    .trajectories
                    .iter()
                    .map(|(s, tr)| {
                        let states: Vec<Vec<f64>> = tr.states.iter().map(|x| x.iter().copied().collect()).collect();
                        json!({ "seed": s, "times": tr.times, "states": states })
                    })
                    .collect();
                out.write_text("states.json", serde_json::to_string(&dump).expect("states serialize") + "\n")?;
            }

            let means = rep.mean_ratios();
            let half = p.n_steps / 2;
            let tail: Vec<f64> = means[half..].iter().copied().filter(|v| v.is_finite()).collect();
            let tail_mean = if tail.is_empty() { f64::NAN } else { stats::mean(&tail) };
            let drops: Vec<f64> = means.windows(2).map(|w| w[0] - w[1]).collect();
            let largest_drop_step = (0..drops.len()).max_by(|&a, &b| drops[a].total_cmp(&drops[b]).then(b.cmp(&a)));
            let stats = json!({
                "n_seeds": p.n_seeds,
                "n_excluded": rep.excluded.len(),
                "excluded": rep.excluded.iter().map(|(s, e)| json!({"seed": s, "error": e})).collect::<Vec<_>>(),
                "mean_ratio_first_step": means[0],
                "mean_ratio_second_half": tail_mean,
                "spike": means[0] > tail_mean,
                "largest_drop_after_step": largest_drop_step,
            });
            let line = format!(
                "mean ratio {:.4} at t=1, {:.4} over the second half, {} seeds excluded",
                means[0],
                tail_mean,
                rep.excluded.len()
            );
            Ok((stats, line))
        }
        ExperimentParams::RatioGroup(p) => {
            let rep = experiments::run_ratio_grouping(spec, p, seed).map_err(runtime)?;
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| {
                    let group = serde_json::to_value(r.group).unwrap();
                    vec![r.label.clone(), r.seed.to_string(), f(r.ratio0), f(r.score), group.as_str().unwrap().to_string()]
                })
                .collect();
            out.write_csv("results.csv", &["label", "seed", "ratio0", "score", "group"], &rows)?;
            let stats = json!({
                "low_group_score": rep.low_group_score,
                "high_group_score": rep.high_group_score,
                "p_value": rep.p_value,
                "test": "two-sided permutation test, group membership reshuffled within each label",
                "n_permutations": p.n_permutations,
                "labels": rep.labels,
            });
            let line = format!(
                "low-ratio group {:.4}, high-ratio group {:.4}, p = {:.4}",
                rep.low_group_score, rep.high_group_score, rep.p_value
            );
            Ok((stats, line))
        }
        ExperimentParams::Divergence(p) => {
            let rep = experiments::run_divergence(spec, p, seed).map_err(runtime)?;
            let c = |r: &experiments::DivergenceRow, g: fn(&crate::metrics::BoundConstants) -> f64| {
                r.constants.as_ref().map(|k| f(g(k))).unwrap_or_default()
            };
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.seed.to_string(),
                        f(r.w),
                        f(r.rho0),
                        f(r.delta0),
                        f(r.growth_rate_fit),
                        f(r.lower_bound_a),
                        f(r.upper_bound_rhs_at_t),
                        f(r.delta_at_t),
                        r.holds.to_string(),
                        r.diverged.to_string(),
                        c(r, |k| k.l_u),
                        c(r, |k| k.l_delta),
                        c(r, |k| k.sigma_min),
                        c(r, |k| k.lambda_max),
                        c(r, |k| k.rho_max),
                        c(r, |k| k.v_max),
                    ]
                })
                .collect();
            out.write_csv(
                "results.csv",
                &[
                    "seed",
                    "w",
                    "rho0",
                    "delta0",
                    "growth_rate_fit",
                    "lower_bound_a",
                    "upper_bound_rhs_at_t",
                    "delta_at_t",
                    "holds",
                    "diverged",
                    "l_u",
                    "l_delta",
                    "sigma_min",
                    "lambda_max",
                    "rho_max",
                    "v_max",
                ],
                &rows,
            )?;
            let violations: Vec<Value> = rep
                .rows
                .iter()
                .filter(|r| !r.holds)
                .map(|r| json!({"seed": r.seed, "w": r.w, "deltas": r.deltas, "constants": r.constants}))
                .collect();
            let spearman: Vec<f64> =
                rep.seeds.iter().map(|s| s.spearman_growth_vs_gap).filter(|v| v.is_finite()).collect();
            let stats = json!({
                "upper_bound_holds_fraction": rep.holds_fraction(),
                "argmin_within_one_cell_fraction": rep.within_one_cell_fraction(),
                "mean_spearman_growth_vs_gap": if spearman.is_empty() { f64::NAN } else { stats::mean(&spearman) },
                "n_diverged": rep.rows.iter().filter(|r| r.diverged).count(),
                "window_elapsed_times": rep.window_s,
                "seeds": rep.seeds,
                "upper_bound_violations": violations,
                "constants_note": "empirical constants over the probed window, not global suprema",
            });
            let line = format!(
                "upper bound holds on {:.1}% of runs; growth-rate argmin near 1/rho0 for {:.1}% of seeds",
                100.0 * rep.holds_fraction(),
                100.0 * rep.within_one_cell_fraction()
            );
            Ok((stats, line))
        }
        ExperimentParams::Greedy(p) => {
            let rep = experiments::run_greedy_search(spec, p, seed).map_err(runtime)?;
            let rows: Vec<Vec<String>> = rep
                .steps()
                .map(|s| vec![s.label.clone(), s.k.to_string(), f(s.rho_k), f(s.w_star), f(s.best_score)])
                .collect();
            out.write_csv("results.csv", &["label", "k", "rho_k", "w_star", "best_score"], &rows)?;
            let (fit, fit_error) = match &rep.fit {
                Ok(fit) => (serde_json::to_value(fit).unwrap(), Value::Null),
                Err(e) => (Value::Null, Value::String(e.to_string())),
            };
            let stats = json!({
                "candidates_per_label": p.candidate_count(),
                "all_monotone": rep.all_monotone(),
                "labels": rep.labels.iter().map(|l| json!({
                    "label": l.label,
                    "default_score": l.default_score,
                    "monotone": l.monotone,
                    "schedule": l.schedule,
                })).collect::<Vec<_>>(),
                "skipped_labels": rep.skipped_labels,
                "fit": fit,
                "fit_error": fit_error,
            });
            let fit_text = match &rep.fit {
                Ok(fit) => format!("fit w_max={:.4} alpha={:.4}", fit.w_max_hat, fit.alpha_hat),
                Err(e) => format!("no fit ({e})"),
            };
            let line = format!("{} labels searched, monotone: {}, {fit_text}", rep.labels.len(), rep.all_monotone());
            Ok((stats, line))
        }
        ExperimentParams::Compare(p) => {
            let scheds = p.expanded_schedules().map_err(runtime)?;
            let rows = experiments::run_schedule_comparison(
                spec,
                &p.labels,
                &scheds,
                &p.step_counts,
                &p.integrators,
                p.n_seeds,
                p.n_reference,
                seed,
            )
            .map_err(runtime)?;
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let integ = serde_json::to_value(r.integrator).unwrap();
                    vec![
                        r.schedule.clone(),
                        integ.as_str().unwrap().to_string(),
                        r.n_steps.to_string(),
                        f(r.energy_distance),
                        f(r.mean_error),
                    ]
                })
                .collect();
            out.write_csv(
                "results.csv",
                &["schedule", "integrator", "n_steps", "energy_distance", "mean_error"],
                &csv_rows,
            )?;
            let best = rows.iter().min_by(|a, b| a.energy_distance.total_cmp(&b.energy_distance)).unwrap();
            let stats = json!({ "n_cells": rows.len(), "best": best, "rows": rows });
            let line = format!(
                "{} cells; best {} @ {} steps with energy distance {:.4}",
                rows.len(),
                best.schedule,
                best.n_steps,
                best.energy_distance
            );
            Ok((stats, line))
        }
        ExperimentParams::Sweep(p) => {
            let rows = experiments::sweep(
                spec,
                &p.labels,
                &p.w_max_values,
                &p.alpha_values,
                p.n_steps,
                p.integrator,
                p.n_seeds,
                p.n_reference,
                seed,
            )
            .map_err(runtime)?;
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![f(r.w_max), f(r.alpha), f(r.energy_distance), f(r.mean_error)])
                .collect();
            out.write_csv("results.csv", &["w_max", "alpha", "energy_distance", "mean_error"], &csv_rows)?;
            let cmp = |a: &&experiments::SweepRow, b: &&experiments::SweepRow| a.energy_distance.total_cmp(&b.energy_distance);
            let best = rows.iter().min_by(cmp).unwrap();
            let worst = rows.iter().max_by(cmp).unwrap();
            let stats = json!({
                "best": best,
                "worst": worst,
                "worst_over_best": worst.energy_distance / best.energy_distance,
            });
            let line = format!(
                "{} cells; best w_max={} alpha={} ({:.4}), worst/best = {:.3}",
                rows.len(),
                best.w_max,
                best.alpha,
                best.energy_distance,
                worst.energy_distance / best.energy_distance
            );
            Ok((stats, line))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{generate_spec, Preset};

    fn write_config(dir: &Path, body: Value) -> PathBuf {
        let p = dir.join("config.json");
        fs::write(&p, serde_json::to_string_pretty(&body).unwrap()).unwrap();
        p
    }

    fn spike_config() -> Value {
        json!({
            "experiment": "ratio-spike",
            "spec_path": "spec.json",
            "out_dir": "out",
            "seed": 7,
            "params": {
                "label": "1",
                "schedule": {"kind": "raag", "params": {"w_max": 7.0, "alpha": 2.0}},
                "n_steps": 6,
                "n_seeds": 50
            }
        })
    }

    #[test]
    fn ratio_spike_outputs_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        generate_spec(Preset::TwoClass2d, &dir.path().join("spec.json")).unwrap();
        let cfg = write_config(dir.path(), spike_config());
        let opts = RunOptions { force: false, dump_states: true };
        let first = run_file(&cfg, opts).unwrap();
        let results = fs::read(dir.path().join("out/results.csv")).unwrap();
        let text = String::from_utf8(results.clone()).unwrap();
        assert!(text.starts_with("t,mean_ratio,p10,p90,"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().ends_with(&first.config_hash));
        let traj = fs::read_to_string(dir.path().join("out/trajectories.csv")).unwrap();
        assert!(traj.starts_with("seed,step,t,scale,ratio,state_norm,divergence_flag,config_hash\n"));
        assert_eq!(traj.lines().count(), 1 + 50 * 6);
        assert!(dir.path().join("out/states.json").exists());

        let err = run_file(&cfg, opts).unwrap_err();
        assert_eq!(err.kind, ErrorKind::OutputExists);
        assert_eq!(err.exit_code(), 2);

        let summary = fs::read(dir.path().join("out/summary.json")).unwrap();
        run_file(&cfg, RunOptions { force: true, dump_states: true }).unwrap();
        assert_eq!(fs::read(dir.path().join("out/results.csv")).unwrap(), results);
        assert_eq!(fs::read(dir.path().join("out/summary.json")).unwrap(), summary);

        let echoed: Value = serde_json::from_slice(&summary).unwrap();
        let back = RunConfig::from_value(&echoed["config"]).unwrap();
        assert_eq!(back, load_config(&cfg).unwrap());
    }

    #[test]
    fn missing_spec_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), spike_config());
        let err = run_file(&cfg, RunOptions::default()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::SpecNotFound);
        assert_eq!(err.exit_code(), 2);
        let v: Value = serde_json::from_str(&err.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "spec-not-found");
    }

    #[test]
    fn unknown_label_and_bad_config() {
        let dir = tempfile::tempdir().unwrap();
        generate_spec(Preset::TwoClass2d, &dir.path().join("spec.json")).unwrap();
        let mut body = spike_config();
        body["params"]["label"] = json!("9");
        let cfg = write_config(dir.path(), body);
        let err = run_file(&cfg, RunOptions::default()).unwrap_err();
        assert_eq!(err.kind, ErrorKind::ConfigInvalid);
        assert!(err.violations[0].contains('9'));

        let mut body = spike_config();
        body["seed"] = json!("x");
        body["params"]["n_seeds"] = json!(1);
        let cfg = write_config(dir.path(), body);
        let err = run_file(&cfg, RunOptions::default()).unwrap_err();
        assert_eq!(err.violations.len(), 2);
        assert_eq!(run_file(&dir.path().join("nope.json"), RunOptions::default()).unwrap_err().kind, ErrorKind::ConfigNotFound);
    }

    #[test]
    fn every_experiment_writes_hashed_csv() {
        let dir = tempfile::tempdir().unwrap();
        generate_spec(Preset::TwoClass2d, &dir.path().join("spec.json")).unwrap();
        let bodies = [
            json!({"experiment": "ratio-group", "spec_path": "spec.json", "out_dir": "g", "seed": 1, "params": {
                "labels": ["0", "1"], "w_const": 7.0, "n_steps": 5, "n_seeds_per": 8, "top_k": 3,
                "n_reference": 32, "n_permutations": 100}}),
            json!({"experiment": "divergence", "spec_path": "spec.json", "out_dir": "d", "seed": 1, "params": {
                "label": "0", "w_values": [1.0, 2.0], "n_steps": 20, "n_seeds": 2}}),
            json!({"experiment": "greedy", "spec_path": "spec.json", "out_dir": "r", "seed": 1, "params": {
                "labels": ["0"], "n_search_steps": 1, "total_steps": 4, "grid": [1.0, 7.0],
                "n_eval_seeds": 4, "n_reference": 16}}),
            json!({"experiment": "compare", "spec_path": "spec.json", "out_dir": "c", "seed": 1, "params": {
                "labels": ["0"], "schedules": [{"kind": "constant", "params": {"w": 7.0}},
                {"kind": "raag", "params": {"w_max": 7.0, "alpha": 2.0}}], "step_counts": [4],
                "ablation": true, "n_seeds": 4, "n_reference": 16}}),
            json!({"experiment": "sweep", "spec_path": "spec.json", "out_dir": "s", "seed": 1, "params": {
                "labels": ["0"], "w_max_values": [4.0, 8.0], "alpha_values": [1.0], "n_steps": 4,
                "n_seeds": 4, "n_reference": 16}}),
        ];
        for body in bodies {
            let out = body["out_dir"].as_str().unwrap().to_string();
            let cfg = write_config(dir.path(), body);
            let outcome = run_file(&cfg, RunOptions::default()).unwrap_or_else(|e| panic!("{e}"));
            let csv = fs::read_to_string(dir.path().join(&out).join("results.csv")).unwrap();
            let header = csv.lines().next().unwrap();
            assert!(header.ends_with(",config_hash"), "{header}");
            assert!(csv.lines().skip(1).all(|l| l.ends_with(&outcome.config_hash)));
            assert!(csv.lines().count() > 1);
        }
    }
}
