//! Scenario × seed suites with mean ± standard-error summaries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode_with, EpisodeOptions};
use super::metrics::EpisodeMetrics;
use super::scenario::{Ablation, ScenarioConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    /// Seeds `0..n`.
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteRun {
    /// Row label; defaults to the scenario name.
    #[serde(default)]
    pub label: Option<String>,
    pub scenario: String,
    /// Replaces the scenario's ablation switches when present.
    #[serde(default)]
    pub ablation: Option<Ablation>,
    /// Match the constant gain to the mean morphology gain of this earlier row.
    #[serde(default)]
    pub match_gain_of: Option<String>,
    #[serde(default)]
    pub seeds: Option<Seeds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    #[serde(default)]
    pub name: String,
    pub seeds: Seeds,
    pub runs: Vec<SuiteRun>,
    /// Directory for `summary.json`; relative to the manifest.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Stop episodes at the first fall.
    #[serde(default)]
    pub stop_on_fall: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    /// Sample mean and `s / √n` with the n−1 standard deviation; zero
    /// standard error for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStderr {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        MeanStderr { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub label: String,
    pub scenario: String,
    pub seeds: Vec<u64>,
    /// Fraction of episodes without a fall that end upright.
    pub success_rate: f64,
    pub metrics: BTreeMap<String, MeanStderr>,
    pub episodes: Vec<EpisodeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub name: String,
    pub rows: Vec<SuiteRow>,
}

impl SuiteSummary {
    pub fn row(&self, label: &str) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Scalar metrics aggregated per row.
pub fn metric_values(m: &EpisodeMetrics) -> [(&'static str, f64); 9] {
    [
        ("cumulative_cost", m.cumulative_cost),
        ("forward_distance", m.forward_distance),
        ("time_upright", m.time_upright),
        ("energy", m.energy),
        ("plans", m.plans as f64),
        ("mean_plan_latency", m.mean_plan_latency),
        ("max_plan_latency", m.max_plan_latency),
        ("mean_gain", m.mean_gain),
        ("success", if m.success() { 1.0 } else { 0.0 }),
    ]
}

pub fn summarize(label: &str, scenario: &str, seeds: Vec<u64>, episodes: Vec<EpisodeMetrics>) -> SuiteRow {
    let mut metrics = BTreeMap::new();
    let columns: Vec<[(&str, f64); 9]> = episodes.iter().map(metric_values).collect();
    if let Some(first) = columns.first() {
        for (k, (name, _)) in first.iter().enumerate() {
            let values: Vec<f64> = columns.iter().map(|c| c[k].1).collect();
            metrics.insert(name.to_string(), MeanStderr::of(&values));
        }
    }
    let success_rate = metrics.get("success").map_or(0.0, |m| m.mean);
    SuiteRow {
        label: label.to_string(),
        scenario: scenario.to_string(),
        seeds,
        success_rate,
        metrics,
        episodes,
    }
}

/// Run every episode of `cfg` over `seeds`, in parallel across seeds.
pub fn run_seeds(cfg: &ScenarioConfig, seeds: &[u64], opts: EpisodeOptions) -> Result<Vec<EpisodeMetrics>> {
    seeds
        .par_iter()
        .map(|&s| Ok(run_episode_with(&cfg.with_seed(s)?, opts)?.metrics))
        .collect()
}

impl SuiteManifest {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn load_scenario(name: &str, base: Option<&Path>) -> Result<ScenarioConfig> {
    match base.map(|b| b.join(name)) {
        Some(p) if p.exists() => ScenarioConfig::from_file(p),
        _ => ScenarioConfig::load(name),
    }
}

/// Run a suite. All scenarios are loaded and validated before any episode runs.
pub fn run_suite(manifest: &SuiteManifest, base: Option<&Path>) -> Result<SuiteSummary> {
    if manifest.runs.is_empty() {
        return Err(Error::validation("suite has no runs"));
    }
    let mut prepared = Vec::with_capacity(manifest.runs.len());
    for run in &manifest.runs {
        let mut cfg = load_scenario(&run.scenario, base)?;
        if let Some(a) = &run.ablation {
            cfg.ablation = *a;
        }
        cfg.log.dir = cfg.log.dir.take().map(|d| base.map_or(d.clone(), |b| b.join(&d)));
        cfg.validate()?;
        let label = run.label.clone().unwrap_or_else(|| run.scenario.clone());
        if let Some(src) = &run.match_gain_of {
            if !prepared.iter().any(|(l, _, _): &(String, ScenarioConfig, &SuiteRun)| l == src) {
                return Err(Error::validation(format!("`match_gain_of = {src}` must name an earlier run")));
            }
        }
        prepared.push((label, cfg, run));
    }
    let opts = EpisodeOptions {
        record: false,
        stop_on_fall: manifest.stop_on_fall,
    };
    let mut rows: Vec<SuiteRow> = Vec::with_capacity(prepared.len());
    for (label, mut cfg, run) in prepared {
        if let Some(src) = &run.match_gain_of {
            let mean = rows
                .iter()
                .find(|r| &r.label == src)
                .and_then(|r| r.metrics.get("mean_gain"))
                .map_or(0.0, |m| m.mean);
            cfg.ablation.constant_gain = true;
            cfg.gains = cfg.gains.matched_constant(mean);
        }
        let seeds = run.seeds.as_ref().unwrap_or(&manifest.seeds).expand();
        let opts = EpisodeOptions {
            record: cfg.log.dir.is_some(),
            ..opts
        };
        let episodes = run_seeds(&cfg, &seeds, opts)?;
        rows.push(summarize(&label, &run.scenario, seeds, episodes));
    }
    let summary = SuiteSummary {
        name: manifest.name.clone(),
        rows,
    };
    if let Some(out) = &manifest.output {
        let dir = base.map_or_else(|| out.clone(), |b| b.join(out));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_formula() {
        let m = MeanStderr::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // s² = 5/3, s/√n = √(5/12)
        assert!((m.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStderr::of(&[7.0]).stderr, 0.0);
    }

    #[test]
    fn seeds_expand() {
        assert_eq!(Seeds::Count(3).expand(), vec![0, 1, 2]);
        let m: SuiteManifest = toml::from_str("seeds = [4, 9]\n[[runs]]\nscenario = \"stand\"\n").unwrap();
        assert_eq!(m.seeds.expand(), vec![4, 9]);
    }
}
