//! Trajectory logs: one CSV row per control step plus a JSON metrics sidecar.

use std::path::{Path, PathBuf};

use super::metrics::EpisodeMetrics;
use crate::costs::CostSpec;
use crate::dynamics::ModelSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub act: Vec<f64>,
    pub u: Vec<f64>,
    /// Per-muscle tension; empty unless activations are logged.
    pub tension: Vec<f64>,
    pub z_star: Vec<f64>,
    pub cost: f64,
    pub terms: Vec<f64>,
    pub upright: bool,
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    coords: Vec<String>,
    muscles: Vec<String>,
    targets: Vec<String>,
    terms: Vec<String>,
    pub activations: bool,
    pub rows: Vec<LogRow>,
    pub metrics: Option<EpisodeMetrics>,
}

fn coordinate_names(model: &ModelSpec) -> Vec<String> {
    let mut names = Vec::with_capacity(model.nq());
    for j in &model.joints {
        match j.kind.dofs() {
            1 => names.push(j.name.clone()),
            _ => names.extend(["x", "y", "theta"].iter().map(|s| format!("{}_{s}", j.name))),
        }
    }
    names
}

impl TrajectoryLog {
    pub fn new(model: &ModelSpec, cost: &CostSpec, activations: bool) -> Self {
        let coords = coordinate_names(model);
        TrajectoryLog {
            targets: model.posture_mask.iter().map(|&d| coords[d].clone()).collect(),
            coords,
            muscles: model.muscles.iter().map(|m| m.name.clone()).collect(),
            terms: cost.labels().iter().map(|s| s.to_string()).collect(),
            activations,
            rows: Vec::new(),
            metrics: None,
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.coords.iter().map(|c| format!("q_{c}")));
        h.extend(self.coords.iter().map(|c| format!("qdot_{c}")));
        if self.activations {
            h.extend(self.muscles.iter().map(|m| format!("a_{m}")));
            h.extend(self.muscles.iter().map(|m| format!("u_{m}")));
            h.extend(self.muscles.iter().map(|m| format!("tension_{m}")));
        }
        h.extend(["u_mean", "u_max", "act_sum"].map(String::from));
        h.extend(self.targets.iter().map(|c| format!("z_{c}")));
        h.push("cost".into());
        h.extend(self.terms.iter().map(|t| format!("term_{t}")));
        h.push("upright".into());
        h
    }

    fn record(&self, r: &LogRow) -> Vec<String> {
        let f = |v: &f64| format!("{v}");
        let mut out = vec![f(&r.t)];
        out.extend(r.q.iter().map(f));
        out.extend(r.qdot.iter().map(f));
        if self.activations {
            out.extend(r.act.iter().map(f));
            out.extend(r.u.iter().map(f));
            out.extend(r.tension.iter().map(f));
        }
        let n = r.u.len().max(1) as f64;
        out.push(f(&(r.u.iter().sum::<f64>() / n)));
        out.push(f(&r.u.iter().copied().fold(0.0, f64::max)));
        out.push(f(&r.act.iter().sum::<f64>()));
        out.extend(r.z_star.iter().map(f));
        out.push(f(&r.cost));
        out.extend(r.terms.iter().map(f));
        out.push(if r.upright { "1".into() } else { "0".into() });
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            w.write_record(self.record(r))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Write `<name>_seed<seed>.csv` and `<name>_seed<seed>.json` into `dir`.
    pub fn write(&self, dir: &Path, name: &str, seed: u64) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem: String = name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let csv_path = dir.join(format!("{stem}_seed{seed}.csv"));
        let json_path = dir.join(format!("{stem}_seed{seed}.json"));
        self.write_csv(&csv_path)?;
        let text = serde_json::to_string_pretty(&self.metrics)?;
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }
}
