//! `flowguide run <config.json>` and `flowguide gen-spec <preset> <out.json>`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
//! Failures print a single JSON line `{"error": {...}}` to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowguide::presets::{self, Preset};
use flowguide::runner::{self, RunOptions};
use serde_json::json;

#[derive(Parser)]
#[command(name = "flowguide", version, about = "Exact-oracle guidance experiments for rectified flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overwrite an existing summary in the output directory.
        #[arg(long)]
        force: bool,
        /// Worker threads (default: available parallelism).
        #[arg(long, env = "FLOWGUIDE_THREADS")]
        threads: Option<usize>,
        /// Also write the full trajectory states as JSON.
        #[arg(long)]
        dump_states: bool,
    },
    /// Write one of the pinned benchmark mixtures as a JSON spec.
    GenSpec {
        /// two-class-2d, eight-class-8d or shared-mean-null
        preset: String,
        out: PathBuf,
    },
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end().to_string(), 2),
    };
    match cli.command {
        Command::Run { config, force, threads, dump_states } => {
            if let Some(n) = threads {
                if n == 0 {
                    return fail("usage", "--threads must be at least 1".into(), 2);
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    return fail("runtime", format!("cannot start worker pool: {e}"), 1);
                }
            }
            match runner::run_file(&config, RunOptions { force, dump_states }) {
                Ok(outcome) => {
                    println!("{}", outcome.summary_line);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}", e.to_json());
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::GenSpec { preset, out } => {
            let preset: Preset = match preset.parse() {
                Ok(p) => p,
                Err(e) => return fail("usage", e.to_string(), 2),
            };
            match presets::generate_spec(preset, &out) {
                Ok(_) => {
                    println!("{preset}: wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail("path-unwritable", format!("{}: {e}", out.display()), 1),
            }
        }
    }
}
