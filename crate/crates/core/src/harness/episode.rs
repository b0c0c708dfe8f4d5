//! Episode loop: simulation stepping under the latest plan, in lockstep or
//! paced against wall-clock time.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::log::{LogRow, TrajectoryLog};
use super::metrics::{posture_check, EpisodeMetrics};
use super::scenario::ScenarioConfig;
use crate::costs::{evaluate, evaluate_terms, standing_height, TermKind};
use crate::dynamics::{forward_step, muscle_force, muscle_geometry, Perturbation, SimState};
use crate::error::{Error, Result};
use crate::lowlevel::{act_with, extract_posture, GainConfig, InversionDiagnostics, TargetPosture};
use crate::planner::{Planner, RolloutContext, VanillaPlan, VanillaPlanner};

/// What the simulation applies between plans.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Track a target posture through the low-level controller.
    Posture(TargetPosture),
    /// Replay a planned excitation sequence.
    Sequence(VanillaPlan),
}

pub(super) enum HighLevel {
    Posture(Planner),
    Vanilla(VanillaPlanner),
}

impl HighLevel {
    pub(super) fn plan(&mut self, ctx: &RolloutContext, state: &SimState, deadline: Option<Instant>) -> (Policy, u64, InversionDiagnostics) {
        match self {
            HighLevel::Posture(p) => {
                let out = p.plan(ctx, state, deadline);
                (Policy::Posture(out.z_star), out.diagnostics.late as u64, out.diagnostics.inversion)
            }
            HighLevel::Vanilla(v) => {
                let out = v.plan(ctx, state, deadline);
                let late = out.late as u64;
                (Policy::Sequence(out), late, InversionDiagnostics::default())
            }
        }
    }
}

pub struct EpisodeResult {
    pub metrics: EpisodeMetrics,
    pub log: Option<TrajectoryLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpisodeOptions {
    /// Keep the per-control-step trajectory.
    pub record: bool,
    /// Stop simulating once the model falls; the remaining control steps are
    /// charged at the cost of the last simulated step.
    pub stop_on_fall: bool,
}

/// Per-step bookkeeping shared by the lockstep and paced loops.
struct Tracker<'a> {
    cfg: &'a ScenarioConfig,
    gains: GainConfig,
    standing: f64,
    metrics: EpisodeMetrics,
    log: Option<TrajectoryLog>,
    start_com: f64,
    gain_sum: f64,
    gain_count: u64,
    latency_sum: f64,
}

impl<'a> Tracker<'a> {
    fn new(cfg: &'a ScenarioConfig, record: bool) -> Self {
        let model = &cfg.model;
        let standing = cfg
            .true_cost
            .terms
            .iter()
            .find_map(|t| match t.kind {
                TermKind::Height { target } => target,
                _ => None,
            })
            .unwrap_or_else(|| standing_height(model));
        let start = posture_check(model, &cfg.initial, standing);
        Tracker {
            gains: cfg.effective_gains(),
            standing,
            metrics: EpisodeMetrics {
                duration: cfg.duration,
                ..EpisodeMetrics::default()
            },
            log: record.then(|| TrajectoryLog::new(model, &cfg.true_cost, cfg.log.activations)),
            start_com: start.com_x,
            gain_sum: 0.0,
            gain_count: 0,
            latency_sum: 0.0,
            cfg,
        }
    }

    fn control(&mut self, state: &SimState, policy: &Policy) -> Vec<f64> {
        let cfg = self.cfg;
        match policy {
            Policy::Posture(z) => {
                let out = act_with(&cfg.model, state, z, &self.gains, cfg.timing.control_dt(), &cfg.perturbation);
                self.gain_sum += out.gains.iter().sum::<f64>();
                self.gain_count += out.gains.len() as u64;
                self.metrics.gain_degenerate += out.diagnostics.gain_degenerate;
                self.metrics.denominator_floored += out.diagnostics.denominator_floored;
                out.u
            }
            Policy::Sequence(plan) => {
                let failed = cfg.perturbation.failed_mask(state.time, cfg.model.nu());
                plan.control_at(state.time, cfg.timing.control_dt())
                    .iter()
                    .zip(failed)
                    .map(|(&u, f)| if f { 0.0 } else { u.clamp(0.0, 1.0) })
                    .collect()
            }
        }
    }

    fn plan_done(&mut self, latency: f64, late: u64, inversion: InversionDiagnostics) {
        self.metrics.plans += 1;
        self.latency_sum += latency;
        self.metrics.max_plan_latency = self.metrics.max_plan_latency.max(latency);
        self.metrics.late_rollouts += late;
        self.metrics.gain_degenerate += inversion.gain_degenerate;
        self.metrics.denominator_floored += inversion.denominator_floored;
    }

    /// Record the row for `state` with control `u`; returns the step cost.
    fn record(&mut self, state: &SimState, u: &[f64], policy: &Policy) -> f64 {
        let cfg = self.cfg;
        let model = &cfg.model;
        let dt_c = cfg.timing.control_dt();
        let cost = evaluate(&cfg.true_cost, model, state, u);
        self.metrics.cumulative_cost += cost;
        self.metrics.energy += state.act.iter().sum::<f64>();
        let check = posture_check(model, state, self.standing);
        if self.metrics.fall_time.is_none() {
            self.metrics.forward_distance = check.com_x - self.start_com;
            if check.fallen {
                self.metrics.fall_time = Some(state.time);
            }
        }
        if check.upright {
            self.metrics.time_upright += dt_c;
        } else if self.metrics.first_not_upright.is_none() {
            self.metrics.first_not_upright = Some(state.time);
        }
        if let Some(log) = &mut self.log {
            let z = match policy {
                Policy::Posture(z) => z.z.clone(),
                Policy::Sequence(_) => vec![f64::NAN; model.nz()],
            };
            let tensions = if cfg.log.activations {
                let g = muscle_geometry(model, &state.q, &state.qdot);
                let failed = cfg.perturbation.failed_mask(state.time, model.nu());
                model
                    .muscles
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        if failed[i] {
                            0.0
                        } else {
                            muscle_force(m, g.lengths[i], g.velocities[i], state.act[i]).tension
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            log.rows.push(LogRow {
                t: state.time,
                q: state.q.clone(),
                qdot: state.qdot.clone(),
                act: state.act.clone(),
                u: u.to_vec(),
                tension: tensions,
                z_star: z,
                cost,
                terms: evaluate_terms(&cfg.true_cost, model, state),
                upright: check.upright,
            });
        }
        cost
    }

    fn finish(mut self, last: &SimState) -> EpisodeResult {
        let check = posture_check(&self.cfg.model, last, self.standing);
        if self.metrics.fall_time.is_none() {
            self.metrics.forward_distance = check.com_x - self.start_com;
            if check.fallen {
                self.metrics.fall_time = Some(last.time);
            }
        }
        self.metrics.final_upright = check.upright && !self.metrics.diverged;
        if self.metrics.plans > 0 {
            self.metrics.mean_plan_latency = self.latency_sum / self.metrics.plans as f64;
        }
        if self.gain_count > 0 {
            self.metrics.mean_gain = self.gain_sum / self.gain_count as f64;
        }
        if let Some(log) = &mut self.log {
            log.metrics = Some(self.metrics.clone());
        }
        EpisodeResult {
            metrics: self.metrics,
            log: self.log,
        }
    }
}

pub(super) fn high_level(cfg: &ScenarioConfig, ctx: &RolloutContext) -> Result<HighLevel> {
    let planner_cfg = cfg.effective_planner();
    Ok(if cfg.ablation.vanilla_mppi {
        HighLevel::Vanilla(VanillaPlanner::new(ctx, &cfg.initial, planner_cfg, cfg.vanilla.clone(), cfg.workers)?)
    } else {
        HighLevel::Posture(Planner::new(&cfg.model, &cfg.initial, planner_cfg, cfg.workers)?)
    })
}

fn substeps(cfg: &ScenarioConfig, state: &SimState, u: &[f64]) -> Result<SimState> {
    let mut s = state.clone();
    for _ in 0..cfg.timing.substeps {
        s = forward_step(&cfg.model, &s, u, &cfg.perturbation, cfg.timing.dt)?;
    }
    Ok(s)
}

/// Run one episode. Lockstep when `realtime_fraction == 0`, paced otherwise.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<EpisodeResult> {
    run_episode_with(
        cfg,
        EpisodeOptions {
            record: cfg.log.dir.is_some(),
            stop_on_fall: false,
        },
    )
}

pub fn run_episode_with(cfg: &ScenarioConfig, opts: EpisodeOptions) -> Result<EpisodeResult> {
    cfg.validate()?;
    let result = if cfg.realtime_fraction > 0.0 {
        run_paced(cfg, opts)?
    } else {
        run_lockstep(cfg, opts)?
    };
    if let (Some(dir), Some(log)) = (&cfg.log.dir, &result.log) {
        log.write(dir, &cfg.name, cfg.seed)?;
    }
    Ok(result)
}

pub(super) fn planning_context<'a>(cfg: &'a ScenarioConfig, gains: &'a GainConfig, failures: &'a Perturbation) -> RolloutContext<'a> {
    RolloutContext {
        model: &cfg.model,
        cost: &cfg.task,
        gains,
        perturbation: failures,
        timing: cfg.timing,
        horizon: cfg.planner.horizon,
    }
}

fn run_lockstep(cfg: &ScenarioConfig, opts: EpisodeOptions) -> Result<EpisodeResult> {
    let gains = cfg.effective_gains();
    let failures = cfg.perturbation.failures_only();
    let ctx = planning_context(cfg, &gains, &failures);
    let mut hl = high_level(cfg, &ctx)?;
    let mut tracker = Tracker::new(cfg, opts.record);
    let mut state = cfg.initial.clone();
    let mut policy = Policy::Posture(extract_posture(&cfg.model, &state));
    let steps = cfg.control_steps();
    for k in 0..steps {
        if k % cfg.replan_every == 0 {
            let t0 = Instant::now();
            let (p, late, inv) = hl.plan(&ctx, &state, None);
            tracker.plan_done(t0.elapsed().as_secs_f64(), late, inv);
            policy = p;
        }
        let u = tracker.control(&state, &policy);
        let cost = tracker.record(&state, &u, &policy);
        if opts.stop_on_fall && tracker.metrics.fall_time.is_some() {
            tracker.metrics.cumulative_cost += cost * (steps - k - 1) as f64;
            break;
        }
        match substeps(cfg, &state, &u) {
            Ok(next) => state = next,
            Err(Error::Diverged { .. }) => {
                tracker.metrics.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(tracker.finish(&state))
}

/// Single-slot mailbox: writers overwrite, readers take the latest value.
struct Mailbox<T> {
    slot: Mutex<(Option<T>, bool)>,
    ready: Condvar,
}

impl<T> Mailbox<T> {
    fn new() -> Self {
        Mailbox {
            slot: Mutex::new((None, false)),
            ready: Condvar::new(),
        }
    }

    fn put(&self, v: T) {
        let mut g = self.slot.lock().unwrap();
        g.0 = Some(v);
        self.ready.notify_all();
    }

    fn take(&self) -> Option<T> {
        self.slot.lock().unwrap().0.take()
    }

    fn close(&self) {
        self.slot.lock().unwrap().1 = true;
        self.ready.notify_all();
    }

    /// Block until a value is available or the mailbox is closed.
    fn wait_take(&self) -> Option<T> {
        let mut g = self.slot.lock().unwrap();
        loop {
            if let Some(v) = g.0.take() {
                return Some(v);
            }
            if g.1 {
                return None;
            }
            g = self.ready.wait(g).unwrap();
        }
    }
}

struct PlanMessage {
    policy: Policy,
    latency: f64,
    late: u64,
    inversion: InversionDiagnostics,
}

/// Simulation on the calling thread, slowed to `realtime_fraction` of real
/// time; planning on a second thread with a per-plan wall-clock budget. The
/// simulation never waits for the planner and keeps using the last plan.
fn run_paced(cfg: &ScenarioConfig, opts: EpisodeOptions) -> Result<EpisodeResult> {
    let gains = cfg.effective_gains();
    let failures = cfg.perturbation.failures_only();
    let ctx = planning_context(cfg, &gains, &failures);
    let mut hl = high_level(cfg, &ctx)?;
    let snapshots: Mailbox<SimState> = Mailbox::new();
    let plans: Mailbox<PlanMessage> = Mailbox::new();
    let budget = Duration::from_secs_f64(cfg.plan_budget);
    let step_wall = Duration::from_secs_f64(cfg.timing.control_dt() / cfg.realtime_fraction);

    std::thread::scope(|scope| {
        scope.spawn(|| {
            while let Some(state) = snapshots.wait_take() {
                let t0 = Instant::now();
                let (policy, late, inversion) = hl.plan(&ctx, &state, Some(t0 + budget));
                plans.put(PlanMessage {
                    policy,
                    latency: t0.elapsed().as_secs_f64(),
                    late,
                    inversion,
                });
            }
        });

        let mut tracker = Tracker::new(cfg, opts.record);
        let mut state = cfg.initial.clone();
        let mut policy = Policy::Posture(extract_posture(&cfg.model, &state));
        let steps = cfg.control_steps();
        let start = Instant::now();
        let mut result = Ok(());
        snapshots.put(state.clone());
        for k in 0..steps {
            if let Some(msg) = plans.take() {
                tracker.plan_done(msg.latency, msg.late, msg.inversion);
                policy = msg.policy;
                snapshots.put(state.clone());
            }
            let u = tracker.control(&state, &policy);
            let cost = tracker.record(&state, &u, &policy);
            if opts.stop_on_fall && tracker.metrics.fall_time.is_some() {
                tracker.metrics.cumulative_cost += cost * (steps - k - 1) as f64;
                break;
            }
            match substeps(cfg, &state, &u) {
                Ok(next) => state = next,
                Err(Error::Diverged { .. }) => {
                    tracker.metrics.diverged = true;
                    break;
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
            let target = start + step_wall * (k as u32 + 1);
            if let Some(wait) = target.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        snapshots.close();
        result.map(|_| tracker.finish(&state))
    })
}
