//! Exact-oracle laboratory for classifier-free guidance in rectified-flow
//! sampling.
//!
//! Class-conditional Gaussian mixtures make the conditional and unconditional
//! velocities available in closed form, so guidance schedules, the
//! conditional/unconditional ratio and trajectory sensitivity can be studied
//! without any learned model in the loop.

pub mod config;
pub mod error;
pub mod experiments;
pub mod guidance;
pub mod mc;
pub mod metrics;
pub mod mixture;
pub mod presets;
pub mod rng;
pub mod runner;
pub mod sampler;

pub use config::{ExperimentKind, ExperimentParams, RunConfig};
pub use error::{Error, Result};
pub use guidance::{cfg_combine, fit_exponential, FitResult, GuidanceSchedule};
pub use mixture::{ClassSpec, Component, Condition, MixtureSpec, Ratio, VelocityPair};
pub use presets::Preset;
pub use sampler::{sample, sample_batch, IntegratorKind, Trajectory};
