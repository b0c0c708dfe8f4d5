//! Planner latency and throughput measurements.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::episode::{high_level, planning_context, run_episode_with, EpisodeOptions, Policy};
use super::scenario::ScenarioConfig;
use crate::dynamics::SimState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    pub n_samples: usize,
    pub plans: usize,
    pub mean_latency: f64,
    pub p95_latency: f64,
    pub rollouts_per_second: f64,
    /// Planning horizon over mean plan latency.
    pub realtime_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub horizon: f64,
    pub rows: Vec<BenchRow>,
    /// Plan outputs matched bit for bit across all worker counts.
    pub identical_across_workers: bool,
}

/// States visited at the first `plans` replanning points of a lockstep run.
pub fn representative_states(cfg: &ScenarioConfig, plans: usize) -> Result<Vec<SimState>> {
    let mut probe = cfg.clone();
    probe.realtime_fraction = 0.0;
    probe.log.dir = None;
    probe.duration = (plans * cfg.replan_every) as f64 * cfg.timing.control_dt();
    let log = run_episode_with(
        &probe,
        EpisodeOptions {
            record: true,
            stop_on_fall: false,
        },
    )?
    .log
    .expect("recorded");
    Ok(log
        .rows
        .iter()
        .step_by(cfg.replan_every)
        .take(plans)
        .map(|r| SimState {
            q: r.q.clone(),
            qdot: r.qdot.clone(),
            act: r.act.clone(),
            time: r.t,
        })
        .collect())
}

fn fingerprint(p: &Policy) -> Vec<u64> {
    match p {
        Policy::Posture(z) => z.z.iter().map(|v| v.to_bits()).collect(),
        Policy::Sequence(s) => s.controls.iter().flatten().map(|v| v.to_bits()).collect(),
    }
}

/// Replay the planner over `states` in order and time every call.
fn time_plans(cfg: &ScenarioConfig, states: &[SimState]) -> Result<(Vec<f64>, Vec<Vec<u64>>)> {
    let gains = cfg.effective_gains();
    let failures = cfg.perturbation.failures_only();
    let ctx = planning_context(cfg, &gains, &failures);
    let mut hl = high_level(cfg, &ctx)?;
    let mut latencies = Vec::with_capacity(states.len());
    let mut outputs = Vec::with_capacity(states.len());
    for s in states {
        let t0 = Instant::now();
        let (policy, _, _) = hl.plan(&ctx, s, None);
        latencies.push(t0.elapsed().as_secs_f64());
        outputs.push(fingerprint(&policy));
    }
    Ok((latencies, outputs))
}

fn row(cfg: &ScenarioConfig, latencies: &[f64]) -> BenchRow {
    let n = latencies.len();
    let mean = latencies.iter().sum::<f64>() / n as f64;
    let mut sorted = latencies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p95 = sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    let p = cfg.effective_planner();
    BenchRow {
        workers: cfg.workers,
        n_samples: p.n_samples,
        plans: n,
        mean_latency: mean,
        p95_latency: p95,
        rollouts_per_second: (p.n_samples * p.iterations) as f64 / mean,
        realtime_factor: p.horizon / mean,
    }
}

/// Time `plans` planner calls per worker count, plus one sweep over sample
/// counts `sample_counts` at the first worker count.
pub fn bench_planner(cfg: &ScenarioConfig, workers: &[usize], sample_counts: &[usize], plans: usize) -> Result<BenchReport> {
    if workers.is_empty() || plans == 0 {
        return Err(Error::validation("bench needs at least one worker count and one plan"));
    }
    let states = representative_states(cfg, plans)?;
    let mut rows = Vec::new();
    let mut reference: Option<Vec<Vec<u64>>> = None;
    let mut identical = true;
    for &w in workers {
        let mut c = cfg.clone();
        c.workers = w;
        c.validate()?;
        let (lat, out) = time_plans(&c, &states)?;
        match &reference {
            None => reference = Some(out),
            Some(r) => identical &= *r == out,
        }
        rows.push(row(&c, &lat));
    }
    for &n in sample_counts {
        let mut c = cfg.clone();
        c.workers = workers[0];
        c.planner.n_samples = n;
        c.planner.n_instant = c.planner.n_instant.min(n);
        c.planner.elites = c.planner.elites.min(n);
        c.validate()?;
        let (lat, _) = time_plans(&c, &states)?;
        rows.push(row(&c, &lat));
    }
    Ok(BenchReport {
        scenario: cfg.name.clone(),
        horizon: cfg.planner.horizon,
        rows,
        identical_across_workers: identical,
    })
}
