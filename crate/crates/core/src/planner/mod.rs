//! Sampling-based posture planner.
//!
//! Each plan draws candidate target postures, evaluates every candidate by
//! rolling the dynamics forward under the low-level controller for a fixed
//! horizon, and re-fits a factorized Gaussian to the cost-weighted elites.
//! The first `n_instant` candidates are centered on the current posture
//! instead of the running mean, which lets the plan follow sudden state
//! changes that the warm-started distribution has not caught up with.

mod update;
mod vanilla;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{evaluate, CostSpec};
use crate::dynamics::{forward_step_at, ModelSpec, Perturbation, PoseGeometry, SimState};
use crate::error::{Error, Result};
use crate::lowlevel::{act_with, act_with_geometry, clamp_to_mask, extract_posture, ControlTiming, GainConfig, InversionDiagnostics, TargetPosture};

pub use update::{update_distribution, UpdateInfo};
pub use vanilla::{VanillaConfig, VanillaPlan, VanillaPlanner};

/// Factorized Gaussian over target postures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl SamplingDistribution {
    /// Centered on the current posture with `sigma_init` everywhere.
    pub fn centered(model: &ModelSpec, state: &SimState, cfg: &PlannerConfig) -> Self {
        SamplingDistribution {
            mu: extract_posture(model, state).z,
            sigma: vec![cfg.sigma_init.max(cfg.sigma_floor); model.nz()],
        }
    }
}

/// MPPI temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Temperature {
    /// `λ = fraction · (median finite cost − min cost)`, recomputed per update.
    Adaptive { fraction: f64 },
    Fixed { lambda: f64 },
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::Adaptive { fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Total rollouts per iteration.
    pub n_samples: usize,
    /// Rollouts centered on the current posture.
    pub n_instant: usize,
    /// Rollout horizon (s).
    pub horizon: f64,
    pub iterations: usize,
    pub temperature: Temperature,
    /// Number of lowest-cost samples that receive weight.
    pub elites: usize,
    pub sigma_init: f64,
    pub sigma_floor: f64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_samples: 64,
            n_instant: 10,
            horizon: 0.3,
            iterations: 1,
            temperature: Temperature::default(),
            elites: 16,
            sigma_init: 0.15,
            sigma_floor: 0.03,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::validation(m));
        if self.n_samples == 0 {
            return fail("n_samples must be at least 1".into());
        }
        if self.n_instant > self.n_samples {
            return fail(format!("n_instant ({}) exceeds n_samples ({})", self.n_instant, self.n_samples));
        }
        if self.elites == 0 || self.elites > self.n_samples {
            return fail(format!("elites must be in 1..={}, got {}", self.n_samples, self.elites));
        }
        if !(self.horizon > 0.0) || self.iterations == 0 {
            return fail("horizon and iterations must be positive".into());
        }
        if !(self.sigma_floor > 0.0) || !(self.sigma_init > 0.0) {
            return fail("sigma_init and sigma_floor must be positive".into());
        }
        match self.temperature {
            Temperature::Adaptive { fraction } if !(fraction > 0.0) => fail("temperature fraction must be positive".into()),
            Temperature::Fixed { lambda } if !(lambda > 0.0) => fail("temperature lambda must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub index: usize,
    pub z: Vec<f64>,
    /// Cumulative horizon cost; `+∞` when diverged or cut by a deadline.
    pub cost: f64,
    pub diverged: bool,
}

/// Everything a rollout needs besides the start state and the target.
#[derive(Debug, Clone, Copy)]
pub struct RolloutContext<'a> {
    pub model: &'a ModelSpec,
    pub cost: &'a CostSpec,
    pub gains: &'a GainConfig,
    /// What rollouts may know about the episode's perturbations.
    pub perturbation: &'a Perturbation,
    pub timing: ControlTiming,
    pub horizon: f64,
}

impl RolloutContext<'_> {
    pub fn control_steps(&self) -> usize {
        ((self.horizon / self.timing.control_dt()).round() as usize).max(1)
    }
}

/// Draw `n_samples` candidates: the first `n_instant` around the current
/// posture, the rest around `dist.mu`, all from `rng` in index order.
pub fn sample_candidates(
    dist: &SamplingDistribution,
    state: &SimState,
    model: &ModelSpec,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<TargetPosture> {
    let current = extract_posture(model, state).z;
    (0..cfg.n_samples)
        .map(|n| {
            let center = if n < cfg.n_instant { &current } else { &dist.mu };
            let mut z: Vec<f64> = center
                .iter()
                .zip(&dist.sigma)
                .map(|(c, s)| {
                    let e: f64 = StandardNormal.sample(rng);
                    c + s * e
                })
                .collect();
            clamp_to_mask(model, &mut z);
            TargetPosture { z }
        })
        .collect()
}

/// Roll the snapshot forward under `π_MP(·, z)` and sum the cost at every
/// control step.
pub fn rollout(ctx: &RolloutContext, snapshot: &SimState, z: &TargetPosture) -> (f64, bool) {
    let dt_c = ctx.timing.control_dt();
    let mut state = snapshot.clone();
    let mut total = 0.0;
    for _ in 0..ctx.control_steps() {
        let at = PoseGeometry::compute(ctx.model, &state.q, &state.qdot);
        let out = act_with_geometry(ctx.model, &state, &at.geometry, z, ctx.gains, dt_c, ctx.perturbation);
        total += evaluate(ctx.cost, ctx.model, &state, &out.u);
        // The first substep starts from the configuration the controller saw.
        let mut first = Some(at);
        for _ in 0..ctx.timing.substeps {
            match forward_step_at(ctx.model, &state, first.take(), &out.u, ctx.perturbation, ctx.timing.dt) {
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

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanDiagnostics {
    pub iterations: Vec<UpdateInfo>,
    /// Rollouts skipped because the wall-clock deadline had passed.
    pub late: usize,
    pub inversion: InversionDiagnostics,
}

impl PlanDiagnostics {
    pub fn all_diverged(&self) -> bool {
        self.iterations.iter().any(|i| i.all_diverged)
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub z_star: TargetPosture,
    /// `π_MP(state, z*)`.
    pub u: Vec<f64>,
    pub distribution: SamplingDistribution,
    pub outcomes: Vec<RolloutOutcome>,
    pub diagnostics: PlanDiagnostics,
}

/// Evaluate all candidates on `pool` (or inline without one); results come
/// back in candidate order regardless of scheduling.
fn evaluate_candidates(
    ctx: &RolloutContext,
    state: &SimState,
    candidates: Vec<TargetPosture>,
    pool: Option<&rayon::ThreadPool>,
    deadline: Option<Instant>,
) -> Vec<RolloutOutcome> {
    let run = |(index, z): (usize, TargetPosture)| {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return RolloutOutcome {
                index,
                z: z.z,
                cost: f64::INFINITY,
                diverged: false,
            };
        }
        let (cost, diverged) = rollout(ctx, state, &z);
        RolloutOutcome {
            index,
            z: z.z,
            cost,
            diverged,
        }
    };
    match pool {
        Some(pool) if pool.current_num_threads() > 1 => {
            pool.install(|| candidates.into_par_iter().enumerate().map(run).collect())
        }
        _ => candidates.into_iter().enumerate().map(run).collect(),
    }
}

/// One full plan: `iterations` rounds of sample → rollout → update, then
/// `z* = μ` and the controls for the current state.
pub fn plan(
    ctx: &RolloutContext,
    state: &SimState,
    dist: &SamplingDistribution,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    pool: Option<&rayon::ThreadPool>,
    deadline: Option<Instant>,
) -> PlanOutput {
    let mut dist = dist.clone();
    let mut diagnostics = PlanDiagnostics::default();
    let mut outcomes = Vec::new();
    for _ in 0..cfg.iterations {
        let candidates = sample_candidates(&dist, state, ctx.model, cfg, rng);
        outcomes = evaluate_candidates(ctx, state, candidates, pool, deadline);
        diagnostics.late += outcomes.iter().filter(|o| o.cost.is_infinite() && !o.diverged).count();
        let (next, info) = update_distribution(&outcomes, &dist, cfg);
        dist = next;
        clamp_to_mask(ctx.model, &mut dist.mu);
        diagnostics.iterations.push(info);
    }
    let z_star = TargetPosture { z: dist.mu.clone() };
    let out = act_with(ctx.model, state, &z_star, ctx.gains, ctx.timing.control_dt(), ctx.perturbation);
    diagnostics.inversion = out.diagnostics;
    PlanOutput {
        z_star,
        u: out.u,
        distribution: dist,
        outcomes,
        diagnostics,
    }
}

/// Rayon pool with `workers` threads; `None` for a single worker.
pub fn worker_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::validation(format!("cannot start {workers} planner workers: {e}")))
}

/// Warm-started planner state for one episode.
pub struct Planner {
    pub cfg: PlannerConfig,
    dist: SamplingDistribution,
    rng: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
}

impl Planner {
    pub fn new(model: &ModelSpec, initial: &SimState, cfg: PlannerConfig, workers: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Planner {
            dist: SamplingDistribution::centered(model, initial, &cfg),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            pool: worker_pool(workers)?,
            cfg,
        })
    }

    /// Reset to `μ = M_pos(s₀)`, `σ = sigma_init` and reseed.
    pub fn reset(&mut self, model: &ModelSpec, initial: &SimState) {
        self.dist = SamplingDistribution::centered(model, initial, &self.cfg);
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
    }

    pub fn distribution(&self) -> &SamplingDistribution {
        &self.dist
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn plan(&mut self, ctx: &RolloutContext, state: &SimState, deadline: Option<Instant>) -> PlanOutput {
        let out = plan(ctx, state, &self.dist, &self.cfg, &mut self.rng, self.pool.as_ref(), deadline);
        self.dist = out.distribution.clone();
        out
    }
}
