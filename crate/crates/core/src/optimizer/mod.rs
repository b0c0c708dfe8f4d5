//! Black-box tuning of planning-cost weights against a fixed true cost.
//!
//! `J(θ)` is the seed-averaged cumulative true cost of full episodes whose
//! planner optimizes the scenario's task preset with weights `θ`. New
//! candidates come from a Latin-hypercube design, then Gaussian-process
//! expected improvement, or from a (μ+λ) evolution strategy.

mod gp;
mod manifest;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::harness::{run_episode_with, EpisodeOptions, ScenarioConfig};

pub use gp::{expected_improvement, GaussianProcess, Hyperparameters};
pub use manifest::{run_manifest, TuneManifest, TuneOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBound {
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub bounds: Vec<ParamBound>,
}

impl ParamSpace {
    pub fn new(bounds: Vec<ParamBound>) -> Result<Self> {
        let s = ParamSpace { bounds };
        s.validate()?;
        Ok(s)
    }

    /// `[w/factor, w·factor]` in log scale around every positive weight;
    /// zero weights get `[0, 1]` linear.
    pub fn around(theta: &[f64], factor: f64) -> Result<Self> {
        if !(factor > 1.0) {
            return Err(Error::validation("bound factor must exceed 1"));
        }
        Self::new(
            theta
                .iter()
                .map(|&w| {
                    if w > 0.0 {
                        ParamBound {
                            lower: w / factor,
                            upper: w * factor,
                            log: true,
                        }
                    } else {
                        ParamBound {
                            lower: 0.0,
                            upper: 1.0,
                            log: false,
                        }
                    }
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::validation("parameter space has no dimensions"));
        }
        for (i, b) in self.bounds.iter().enumerate() {
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(Error::validation(format!("bound {i}: need finite lower < upper")));
            }
            if b.log && b.lower <= 0.0 {
                return Err(Error::validation(format!("bound {i}: log scale needs lower > 0")));
            }
            if b.lower < 0.0 {
                return Err(Error::validation(format!("bound {i}: weights cannot be negative")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Map a unit-cube point to weights.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(u)
            .map(|(b, &t)| {
                let t = t.clamp(0.0, 1.0);
                let v = if b.log {
                    (b.lower.ln() + t * (b.upper.ln() - b.lower.ln())).exp()
                } else {
                    b.lower + t * (b.upper - b.lower)
                };
                v.clamp(b.lower, b.upper)
            })
            .collect()
    }

    /// Map weights to the unit cube, clamping out-of-range values.
    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(theta)
            .map(|(b, &v)| {
                let v = v.clamp(b.lower, b.upper);
                let t = if b.log {
                    (v.ln() - b.lower.ln()) / (b.upper.ln() - b.lower.ln())
                } else {
                    (v - b.lower) / (b.upper - b.lower)
                };
                t.clamp(0.0, 1.0)
            })
            .collect()
    }
}

/// `n` points of a Latin hypercube in the unit cube.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub theta: Vec<f64>,
    /// Mean cumulative true cost over the seeds; NaN when failed.
    /// JSON has no NaN, so non-finite values are written as `null`.
    #[serde(deserialize_with = "nullable::scalar")]
    pub objective: f64,
    /// Some episode diverged.
    pub failed: bool,
    #[serde(deserialize_with = "nullable::vector")]
    pub per_seed: Vec<f64>,
    pub seeds: Vec<u64>,
    pub wall_time: f64,
}

mod nullable {
    use serde::{Deserialize, Deserializer};

    pub fn scalar<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub fn vector<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }
}

/// Run one episode per seed with the planner optimizing `theta_plan` on the
/// scenario's task and score it with `theta_true` on its true cost.
pub fn evaluate_theta(cfg: &ScenarioConfig, theta_plan: &[f64], theta_true: &[f64], seeds: &[u64]) -> Result<EvalRecord> {
    let start = Instant::now();
    let mut base = cfg.clone();
    base.task = cfg.task.with_theta(theta_plan)?;
    base.true_cost = cfg.true_cost.with_theta(theta_true)?;
    base.log.dir = None;
    let opts = EpisodeOptions {
        record: false,
        stop_on_fall: false,
    };
    let runs: Vec<Result<(f64, bool)>> = seeds
        .par_iter()
        .map(|&s| {
            let m = run_episode_with(&base.with_seed(s)?, opts)?.metrics;
            Ok((m.cumulative_cost, m.diverged || !m.cumulative_cost.is_finite()))
        })
        .collect();
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut failed = false;
    for r in runs {
        let (c, d) = r?;
        per_seed.push(c);
        failed |= d;
    }
    let objective = if failed || per_seed.is_empty() {
        f64::NAN
    } else {
        per_seed.iter().sum::<f64>() / per_seed.len() as f64
    };
    Ok(EvalRecord {
        theta: theta_plan.to_vec(),
        objective,
        failed,
        per_seed,
        seeds: seeds.to_vec(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Bayesian,
    Evolutionary { mu: usize, lambda: usize, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuggestConfig {
    pub strategy: Strategy,
    /// Size of the initial space-filling design.
    pub initial_design: usize,
    pub candidates: usize,
    pub noise_floor: f64,
    /// Failed evaluations are scored at this multiple of the worst finite J.
    pub penalty_factor: f64,
    /// Seeds the initial design and model fitting.
    pub seed: u64,
}

impl Default for SuggestConfig {
    fn default() -> Self {
        SuggestConfig {
            strategy: Strategy::Bayesian,
            initial_design: 8,
            candidates: 512,
            noise_floor: 1e-6,
            penalty_factor: 10.0,
            seed: 0,
        }
    }
}

impl SuggestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_design == 0 || self.candidates == 0 {
            return Err(Error::validation("initial_design and candidates must be positive"));
        }
        if !(self.noise_floor > 0.0 && self.penalty_factor >= 1.0) {
            return Err(Error::validation("noise_floor must be positive and penalty_factor ≥ 1"));
        }
        if let Strategy::Evolutionary { mu, lambda, sigma } = self.strategy {
            if mu == 0 || lambda == 0 || !(sigma > 0.0) {
                return Err(Error::validation("evolutionary strategy needs mu, lambda, sigma > 0"));
            }
        }
        Ok(())
    }
}

/// Objectives with failures replaced by the penalty ceiling. `None` when
/// nothing finite has been observed.
pub fn scored_objectives(history: &[EvalRecord], penalty_factor: f64) -> Option<Vec<f64>> {
    let worst = history
        .iter()
        .filter(|r| !r.failed && r.objective.is_finite())
        .map(|r| r.objective)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))?;
    let ceiling = if worst > 0.0 { penalty_factor * worst } else { worst + penalty_factor };
    Some(
        history
            .iter()
            .map(|r| if r.failed || !r.objective.is_finite() { ceiling } else { r.objective })
            .collect(),
    )
}

/// Spread-out point: the random candidate farthest from everything seen.
fn space_filling(seen: &[Vec<f64>], dim: usize, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut best = (f64::NEG_INFINITY, vec![0.5; dim]);
    for _ in 0..n {
        let c: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let d = seen
            .iter()
            .map(|s| s.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if d > best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Next weight vector to evaluate.
pub fn suggest(history: &[EvalRecord], space: &ParamSpace, cfg: &SuggestConfig, rng: &mut impl Rng) -> Vec<f64> {
    let dim = space.dim();
    if history.len() < cfg.initial_design {
        let mut design_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let design = latin_hypercube(cfg.initial_design, dim, &mut design_rng);
        return space.from_unit(&design[history.len()]);
    }
    let x: Vec<Vec<f64>> = history.iter().map(|r| space.to_unit(&r.theta)).collect();
    let Some(y) = scored_objectives(history, cfg.penalty_factor) else {
        return space.from_unit(&space_filling(&x, dim, cfg.candidates, rng));
    };
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return space.from_unit(&space_filling(&x, dim, cfg.candidates, rng));
    }
    let u = match cfg.strategy {
        Strategy::Bayesian => match GaussianProcess::fit(x.clone(), &y, cfg.noise_floor, rng) {
            Some(gp) => (0..cfg.candidates)
                .map(|_| (0..dim).map(|_| rng.random()).collect::<Vec<f64>>())
                .map(|c| {
                    let (m, s) = gp.predict(&c);
                    (expected_improvement(m, s, lo), c)
                })
                .fold((f64::NEG_INFINITY, vec![0.5; dim]), |best, cand| if cand.0 > best.0 { cand } else { best })
                .1,
            None => space_filling(&x, dim, cfg.candidates, rng),
        },
        Strategy::Evolutionary { mu, lambda, sigma } => {
            // The parent pool is the μ best of the latest μ+λ evaluations.
            let window = history.len().min(mu + lambda);
            let mut pool: Vec<usize> = (history.len() - window..history.len()).collect();
            pool.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
            pool.truncate(mu);
            let parent = &x[pool[rng.random_range(0..pool.len())]];
            parent
                .iter()
                .map(|p| {
                    let e: f64 = StandardNormal.sample(rng);
                    (p + sigma * e).clamp(0.0, 1.0)
                })
                .collect()
        }
    };
    space.from_unit(&u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best_theta: Vec<f64>,
    pub best_objective: f64,
    pub history: Vec<EvalRecord>,
    /// Incumbent objective after each evaluation; NaN while nothing has succeeded.
    pub best_so_far: Vec<f64>,
}

/// `budget` rounds of suggest → evaluate against the scenario's true cost.
/// `progress` sees each record as it lands.
pub fn optimize(
    cfg: &ScenarioConfig,
    space: &ParamSpace,
    budget: usize,
    seeds: &[u64],
    suggest_cfg: &SuggestConfig,
    mut progress: impl FnMut(usize, &EvalRecord),
) -> Result<TuningResult> {
    optimize_with(space, budget, suggest_cfg, |theta| {
        evaluate_theta(cfg, theta, &cfg.true_cost.theta(), seeds)
    }, &mut progress)
}

/// The optimization loop against an arbitrary evaluator.
pub fn optimize_with(
    space: &ParamSpace,
    budget: usize,
    suggest_cfg: &SuggestConfig,
    mut evaluate: impl FnMut(&[f64]) -> Result<EvalRecord>,
    progress: &mut impl FnMut(usize, &EvalRecord),
) -> Result<TuningResult> {
    space.validate()?;
    suggest_cfg.validate()?;
    if budget == 0 {
        return Err(Error::validation("budget must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(suggest_cfg.seed.wrapping_add(1));
    let mut history: Vec<EvalRecord> = Vec::with_capacity(budget);
    let mut best_so_far = Vec::with_capacity(budget);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..budget {
        let theta = suggest(&history, space, suggest_cfg, &mut rng);
        let record = evaluate(&theta)?;
        if !record.failed && record.objective.is_finite() && best.as_ref().is_none_or(|(b, _)| record.objective < *b) {
            best = Some((record.objective, record.theta.clone()));
        }
        best_so_far.push(best.as_ref().map_or(f64::NAN, |b| b.0));
        progress(i, &record);
        history.push(record);
    }
    let (best_objective, best_theta) = best.unwrap_or_else(|| (f64::NAN, history[0].theta.clone()));
    Ok(TuningResult {
        best_theta,
        best_objective,
        history,
        best_so_far,
    })
}

/// The planning preset with tuned weights, ready for a scenario's `task`.
pub fn tuned_preset(task: &CostSpec, theta: &[f64]) -> Result<CostSpec> {
    let mut spec = task.with_theta(theta)?;
    spec.name = format!("{}-tuned", task.name);
    Ok(spec)
}
