//! Tuning manifests and their on-disk outputs.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{optimize, tuned_preset, EvalRecord, ParamBound, ParamSpace, SuggestConfig, TuningResult};
use crate::error::{Error, Result};
use crate::harness::ScenarioConfig;

fn default_factor() -> f64 {
    10.0
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneManifest {
    /// Bundled scenario name or path, relative to the manifest.
    pub scenario: String,
    pub budget: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// One bound per task weight. Defaults to `[w/f, w·f]` log scale.
    #[serde(default)]
    pub bounds: Option<Vec<ParamBound>>,
    #[serde(default = "default_factor")]
    pub bound_factor: f64,
    #[serde(default)]
    pub suggest: SuggestConfig,
    /// Output directory for the history and tuned preset.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TuneOutput {
    pub result: TuningResult,
    pub space: ParamSpace,
    pub history_path: Option<PathBuf>,
    pub preset_path: Option<PathBuf>,
}

impl TuneManifest {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn scenario_config(&self, base: Option<&Path>) -> Result<ScenarioConfig> {
        match base.map(|b| b.join(&self.scenario)) {
            Some(p) if p.exists() => ScenarioConfig::from_file(p),
            _ => ScenarioConfig::load(&self.scenario),
        }
    }

    pub fn space(&self, cfg: &ScenarioConfig) -> Result<ParamSpace> {
        let theta = cfg.task.theta();
        match &self.bounds {
            Some(b) if b.len() != theta.len() => Err(Error::Dimension {
                what: "tuning bounds",
                expected: theta.len(),
                got: b.len(),
            }),
            Some(b) => ParamSpace::new(b.clone()),
            None => ParamSpace::around(&theta, self.bound_factor),
        }
    }
}

fn write_history(path: &Path, history: &[EvalRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in history {
        writeln!(f, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Run a manifest. Paths in it resolve against `base`.
pub fn run_manifest(
    manifest: &TuneManifest,
    base: Option<&Path>,
    progress: impl FnMut(usize, &EvalRecord),
) -> Result<TuneOutput> {
    let cfg = manifest.scenario_config(base)?;
    let space = manifest.space(&cfg)?;
    if manifest.seeds.is_empty() {
        return Err(Error::validation("tuning needs at least one seed"));
    }
    let result = optimize(&cfg, &space, manifest.budget, &manifest.seeds, &manifest.suggest, progress)?;
    let (mut history_path, mut preset_path) = (None, None);
    if let Some(out) = &manifest.output {
        let dir = base.map_or_else(|| out.clone(), |b| b.join(out));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let h = dir.join("history.jsonl");
        write_history(&h, &result.history)?;
        let p = dir.join(format!("{}-tuned.toml", cfg.task.name));
        let text = tuned_preset(&cfg.task, &result.best_theta)?.to_toml_string()?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        history_path = Some(h);
        preset_path = Some(p);
    }
    Ok(TuneOutput {
        result,
        space,
        history_path,
        preset_path,
    })
}
