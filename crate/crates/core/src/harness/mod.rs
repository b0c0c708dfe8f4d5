//! Scenario runner: episodes, suites, planner benchmarks and logging.

mod bench;
mod episode;
mod log;
mod metrics;
mod scenario;
mod suite;

pub use bench::{bench_planner, representative_states, BenchReport, BenchRow};
pub use episode::{run_episode, run_episode_with, EpisodeOptions, EpisodeResult, Policy};
pub use log::{LogRow, TrajectoryLog};
pub use metrics::{posture_check, EpisodeMetrics, PostureCheck, FALL_HEIGHT_FRACTION, UPRIGHT_TILT};
pub use scenario::{default_workers, Ablation, LogOptions, ScenarioConfig, WORKERS_ENV};
pub use suite::{metric_values, run_seeds, run_suite, summarize, MeanStderr, Seeds, SuiteManifest, SuiteRow, SuiteRun, SuiteSummary};

use crate::error::Result;

/// The constant-gain variant of `cfg`, with its gain set to the mean
/// morphology gain of the same scenario run without the ablation.
pub fn matched_constant_gains(cfg: &ScenarioConfig) -> Result<(ScenarioConfig, f64)> {
    let mut reference = cfg.clone();
    reference.ablation.constant_gain = false;
    reference.log.dir = None;
    let mean = run_episode(&reference)?.metrics.mean_gain;
    let mut out = cfg.clone();
    out.ablation.constant_gain = true;
    out.gains = cfg.gains.matched_constant(mean);
    Ok((out, mean))
}
