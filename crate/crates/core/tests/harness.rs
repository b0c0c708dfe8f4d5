use std::process::Command;

use posture_mpc::harness::*;

fn short(name: &str, duration: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::load(name).unwrap();
    cfg.duration = duration;
    cfg
}

fn recorded(cfg: &ScenarioConfig) -> EpisodeResult {
    run_episode_with(cfg, EpisodeOptions { record: true, stop_on_fall: false }).unwrap()
}

#[test]
fn stand_is_deterministic_for_a_seed() {
    let cfg = short("stand", 1.0).with_seed(7).unwrap();
    let a = run_episode(&cfg).unwrap().metrics;
    let mut b = run_episode(&cfg).unwrap().metrics;
    assert!(a.plans > 0 && a.final_upright);
    // Latencies are wall-clock; everything else must match exactly.
    b.mean_plan_latency = a.mean_plan_latency;
    b.max_plan_latency = a.max_plan_latency;
    assert_eq!(a, b);
    let mut w = cfg.clone();
    w.workers = 2;
    assert_eq!(run_episode(&w).unwrap().metrics.cumulative_cost, a.cumulative_cost);
}

#[test]
fn log_rows_reproduce_metrics() {
    let cfg = short("stand", 0.5);
    let r = recorded(&cfg);
    let log = r.log.unwrap();
    assert_eq!(log.rows.len(), cfg.control_steps());
    let mut cost = 0.0;
    let mut energy = 0.0;
    let mut upright = 0.0;
    for row in &log.rows {
        cost += row.cost;
        energy += row.act.iter().sum::<f64>();
        if row.upright {
            upright += cfg.timing.control_dt();
        }
    }
    assert_eq!(cost, r.metrics.cumulative_cost);
    assert_eq!(energy, r.metrics.energy);
    assert_eq!(upright, r.metrics.time_upright);
    assert_eq!(r.metrics.plans as usize, cfg.control_steps().div_ceil(cfg.replan_every));
}

#[test]
fn csv_log_round_trips_energy() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short("hold", 0.3);
    cfg.log.dir = Some(dir.path().to_path_buf());
    cfg.log.activations = true;
    let m = run_episode(&cfg).unwrap().metrics;
    let csv_path = dir.path().join("hold_seed0.csv");
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "act_sum").unwrap();
    assert!(header.iter().any(|h| h == "tension_flexor"));
    let energy: f64 = rdr.records().map(|r| r.unwrap()[col].parse::<f64>().unwrap()).sum();
    assert_eq!(energy, m.energy);
    let json: EpisodeMetrics = serde_json::from_str(&std::fs::read_to_string(dir.path().join("hold_seed0.json")).unwrap()).unwrap();
    assert_eq!(json.cumulative_cost, m.cumulative_cost);
}

#[test]
fn failed_muscles_are_silent_in_the_log() {
    let text = r#"
name = "early-failure"
model = "biped"
task = "stand"
duration = 0.4
[[perturbation.failures]]
time = 0.2
group = "flexor_right"
fraction = 0.3
"#;
    let mut cfg = ScenarioConfig::from_toml_named("early-failure", text, None).unwrap();
    cfg.log.activations = true;
    let r = recorded(&cfg);
    let failed = cfg.perturbation.failures()[0].muscles.clone();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed, vec![cfg.model.muscle_by_name("hamstrings_r").unwrap()]);
    let log = r.log.unwrap();
    for row in &log.rows {
        for &m in &failed {
            if row.t >= 0.2 {
                assert_eq!((row.u[m], row.tension[m]), (0.0, 0.0), "t = {}", row.t);
            }
        }
    }
    assert!(log.rows.iter().any(|row| row.t < 0.2 && row.tension[failed[0]] > 0.0));
}

#[test]
fn walk_continues_after_failure() {
    let cfg = short("walk-failure", 6.0);
    let r = recorded(&cfg);
    assert!(!r.metrics.diverged);
    let log = r.log.unwrap();
    let after = log.rows.iter().filter(|row| row.t >= 5.0 && row.upright).count() as f64 * cfg.timing.control_dt();
    assert!(after > 0.0, "upright time after failure {after}");
    assert!((log.rows.last().unwrap().t - 6.0).abs() < 0.01);
}

#[test]
fn suite_of_one_matches_the_episode() {
    let cfg = short("hold", 0.3).with_seed(4).unwrap();
    let direct = run_episode(&cfg).unwrap().metrics;
    let runs = run_seeds(&cfg, &[4], EpisodeOptions::default()).unwrap();
    let row = summarize("hold", "hold", vec![4], runs);
    for (name, v) in metric_values(&direct) {
        if !name.contains("latency") {
            assert_eq!(row.metrics[name].mean, v, "{name}");
            assert_eq!(row.metrics[name].stderr, 0.0);
        }
    }
}

#[test]
fn suite_stderr_matches_per_episode_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("hold-short.toml"),
        "name = \"hold-short\"\nmodel = \"pendulum\"\ntask = \"hold\"\nduration = 0.3\n[initial]\nnoise = 0.05\n",
    )
    .unwrap();
    let manifest: SuiteManifest = toml::from_str(
        r#"
name = "pair"
seeds = 4
output = "out"
[[runs]]
label = "instant"
scenario = "hold-short.toml"
[[runs]]
label = "no-instant"
scenario = "hold-short.toml"
ablation = { no_instant = true }
[[runs]]
label = "constant"
scenario = "hold-short.toml"
match_gain_of = "instant"
"#,
    )
    .unwrap();
    let summary = run_suite(&manifest, Some(dir.path())).unwrap();
    assert_eq!(summary.rows.len(), 3);
    assert!(summary.row("instant").is_some() && summary.row("no-instant").is_some());
    for row in &summary.rows {
        assert_eq!(row.seeds, vec![0, 1, 2, 3]);
        let c: Vec<f64> = row.episodes.iter().map(|e| e.cumulative_cost).collect();
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let m = row.metrics["cumulative_cost"];
        assert!((m.mean - mean).abs() < 1e-9 && (m.stderr - sd / n.sqrt()).abs() < 1e-9);
        assert!(m.stderr > 0.0);
    }
    let constant = summary.row("constant").unwrap();
    let instant = summary.row("instant").unwrap();
    assert!((constant.metrics["mean_gain"].mean - instant.metrics["mean_gain"].mean).abs() / instant.metrics["mean_gain"].mean < 1e-9);
    let written: SuiteSummary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(written.rows.len(), 3);

    let bad: SuiteManifest = toml::from_str("seeds = 1\n[[runs]]\nscenario = \"hold\"\nmatch_gain_of = \"later\"\n").unwrap();
    assert!(run_suite(&bad, None).is_err());
    assert!(toml::from_str::<SuiteManifest>("seeds = 1\nruns = []\nextra = 1\n").is_err());
}

#[test]
fn paced_mode_runs_against_the_clock() {
    let mut cfg = short("hold", 0.5);
    cfg.realtime_fraction = 1.0;
    let m = run_episode(&cfg).unwrap().metrics;
    assert!(m.plans > 0 && m.cumulative_cost.is_finite());
    assert!(m.mean_plan_latency > 0.0);
}

#[test]
fn vanilla_and_pd_variants_run() {
    for f in [
        |a: &mut Ablation| a.vanilla_mppi = true,
        |a: &mut Ablation| a.pd_mode = true,
        |a: &mut Ablation| a.no_instant = true,
    ] {
        let mut cfg = short("stand", 0.2);
        f(&mut cfg.ablation);
        let m = run_episode(&cfg).unwrap().metrics;
        assert!(m.cumulative_cost.is_finite() && m.plans > 0);
    }
    let (matched, mean) = matched_constant_gains(&short("stand", 0.2)).unwrap();
    assert!(mean > 0.0 && matched.ablation.constant_gain);
    assert!((run_episode(&matched).unwrap().metrics.mean_gain - mean).abs() / mean < 1e-9);
}

#[test]
fn bench_reports_identical_plans_and_realtime_factor() {
    let cfg = short("stand", 0.5);
    let report = bench_planner(&cfg, &[1, 2], &[8, 32], 4).unwrap();
    assert!(report.identical_across_workers);
    for row in &report.rows {
        assert!((row.realtime_factor - report.horizon / row.mean_latency).abs() < 1e-12);
        assert!(row.p95_latency >= 0.0 && row.rollouts_per_second > 0.0);
    }
    let at = |n| report.rows.iter().find(|r| r.workers == 1 && r.n_samples == n).unwrap().mean_latency;
    // Cost per plan grows with the rollout count.
    assert!(at(32) > 1.5 * at(8), "{} vs {}", at(32), at(8));
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_posture-mpc"))
}

#[test]
fn cli_exit_codes() {
    let ok = cli().args(["run", "--scenario", "hold", "--seed", "2"]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let m: EpisodeMetrics = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(m.plans > 0);

    let missing = cli().args(["run", "--scenario", "no-such-scenario"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    let usage = cli().args(["run"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    let bad_manifest = cli().args(["suite", "--manifest", "/nonexistent/suite.toml"]).output().unwrap();
    assert_eq!(bad_manifest.status.code(), Some(1));
}
