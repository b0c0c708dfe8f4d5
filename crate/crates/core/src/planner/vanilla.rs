//! Baseline MPPI over raw muscle-control sequences.
//!
//! Same rollout count, cost, and weighted update as the posture planner, but
//! the decision variable is the whole excitation sequence (`steps × nu`),
//! applied open loop during rollouts and in the episode.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{update_distribution, PlannerConfig, RolloutContext, RolloutOutcome, SamplingDistribution, UpdateInfo};
use crate::costs::evaluate;
use crate::dynamics::{forward_step, SimState};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VanillaConfig {
    pub sigma_init: f64,
    pub sigma_floor: f64,
}

impl Default for VanillaConfig {
    fn default() -> Self {
        VanillaConfig {
            sigma_init: 0.2,
            sigma_floor: 0.05,
        }
    }
}

/// A planned excitation sequence starting at `start_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaPlan {
    pub start_time: f64,
    pub controls: Vec<Vec<f64>>,
    pub info: UpdateInfo,
    pub late: usize,
}

impl VanillaPlan {
    /// Control for time `t`, holding the last entry past the end.
    pub fn control_at(&self, t: f64, control_dt: f64) -> &[f64] {
        let k = ((t - self.start_time) / control_dt + 1e-9).floor().max(0.0) as usize;
        &self.controls[k.min(self.controls.len() - 1)]
    }
}

pub struct VanillaPlanner {
    cfg: PlannerConfig,
    vcfg: VanillaConfig,
    nu: usize,
    steps: usize,
    mean: Vec<f64>,
    sigma: Vec<f64>,
    last_start: Option<f64>,
    rng: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
}

impl VanillaPlanner {
    pub fn new(ctx: &RolloutContext, initial: &SimState, cfg: PlannerConfig, vcfg: VanillaConfig, workers: usize) -> Result<Self> {
        cfg.validate()?;
        let steps = ctx.control_steps();
        let nu = ctx.model.nu();
        let mean = (0..steps).flat_map(|_| initial.act.iter().copied()).collect();
        Ok(VanillaPlanner {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            pool: super::worker_pool(workers)?,
            sigma: vec![vcfg.sigma_init.max(vcfg.sigma_floor); steps * nu],
            cfg,
            vcfg,
            nu,
            steps,
            mean,
            last_start: None,
        })
    }

    /// Drop the controls already executed since the previous plan and repeat
    /// the final one.
    fn shift(&mut self, now: f64, control_dt: f64) {
        let Some(prev) = self.last_start else { return };
        let k = (((now - prev) / control_dt).round().max(0.0) as usize).min(self.steps);
        if k == 0 {
            return;
        }
        let nu = self.nu;
        self.mean.drain(..k * nu);
        let last = self.mean[self.mean.len().saturating_sub(nu)..].to_vec();
        let fill = if last.is_empty() { vec![0.0; nu] } else { last };
        for _ in 0..k {
            self.mean.extend_from_slice(&fill);
        }
        self.sigma.drain(..k * nu);
        self.sigma.extend(std::iter::repeat_n(self.vcfg.sigma_init, k * nu));
    }

    fn sequence_cost(&self, ctx: &RolloutContext, snapshot: &SimState, seq: &[f64]) -> (f64, bool) {
        let mut state = snapshot.clone();
        let mut total = 0.0;
        for u in seq.chunks(self.nu) {
            total += evaluate(ctx.cost, ctx.model, &state, u);
            for _ in 0..ctx.timing.substeps {
                match forward_step(ctx.model, &state, u, ctx.perturbation, ctx.timing.dt) {
                    Ok(next) => state = next,
                    Err(_) => return (f64::INFINITY, true),
                }
            }
        }
        if total.is_finite() {
            (total, false)
        } else {
            (f64::INFINITY, true)
        }
    }

    pub fn plan(&mut self, ctx: &RolloutContext, state: &SimState, deadline: Option<Instant>) -> VanillaPlan {
        let control_dt = ctx.timing.control_dt();
        self.shift(state.time, control_dt);
        let mut info = UpdateInfo::default();
        let mut late = 0;
        for _ in 0..self.cfg.iterations {
            let candidates: Vec<Vec<f64>> = (0..self.cfg.n_samples)
                .map(|_| {
                    self.mean
                        .iter()
                        .zip(&self.sigma)
                        .map(|(m, s)| {
                            let e: f64 = StandardNormal.sample(&mut self.rng);
                            (m + s * e).clamp(0.0, 1.0)
                        })
                        .collect()
                })
                .collect();
            let run = |(index, z): (usize, Vec<f64>)| {
                if deadline.is_some_and(|d| Instant::now() >= d) {
                    return RolloutOutcome {
                        index,
                        z,
                        cost: f64::INFINITY,
                        diverged: false,
                    };
                }
                let (cost, diverged) = self.sequence_cost(ctx, state, &z);
                RolloutOutcome { index, z, cost, diverged }
            };
            let outcomes: Vec<RolloutOutcome> = match &self.pool {
                Some(pool) => pool.install(|| candidates.into_par_iter().enumerate().map(run).collect()),
                None => candidates.into_iter().enumerate().map(run).collect(),
            };
            late += outcomes.iter().filter(|o| o.cost.is_infinite() && !o.diverged).count();
            let dist = SamplingDistribution {
                mu: self.mean.clone(),
                sigma: self.sigma.clone(),
            };
            let cfg = PlannerConfig {
                sigma_floor: self.vcfg.sigma_floor,
                ..self.cfg.clone()
            };
            let (next, i) = update_distribution(&outcomes, &dist, &cfg);
            self.mean = next.mu.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
            self.sigma = next.sigma;
            info = i;
        }
        self.last_start = Some(state.time);
        VanillaPlan {
            start_time: state.time,
            controls: self.mean.chunks(self.nu).map(<[f64]>::to_vec).collect(),
            info,
            late,
        }
    }
}
