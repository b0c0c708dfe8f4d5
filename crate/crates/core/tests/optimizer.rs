use posture_mpc::costs::CostSpec;
use posture_mpc::harness::{run_episode, ScenarioConfig};
use posture_mpc::optimizer::*;
use posture_mpc::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn record(theta: &[f64], objective: f64) -> EvalRecord {
    EvalRecord {
        theta: theta.to_vec(),
        objective,
        failed: !objective.is_finite(),
        per_seed: vec![objective],
        seeds: vec![0],
        wall_time: 0.0,
    }
}

fn unit_interval() -> ParamSpace {
    ParamSpace::new(vec![ParamBound { lower: 0.0, upper: 1.0, log: false }]).unwrap()
}

fn quadratic(theta: &[f64]) -> posture_mpc::Result<EvalRecord> {
    Ok(record(theta, (theta[0] - 0.3).powi(2)))
}

#[test]
fn quadratic_minimum_found_within_budget() {
    let result = optimize_with(&unit_interval(), 30, &SuggestConfig::default(), quadratic, &mut |_, _| {}).unwrap();
    assert_eq!(result.history.len(), 30);
    assert!((result.best_theta[0] - 0.3).abs() <= 0.05, "best {:?}", result.best_theta);
    assert!(result.best_so_far.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*result.best_so_far.last().unwrap(), result.best_objective);
}

#[test]
fn evolutionary_fallback_improves_on_quadratic() {
    let cfg = SuggestConfig {
        strategy: Strategy::Evolutionary { mu: 4, lambda: 8, sigma: 0.2 },
        ..SuggestConfig::default()
    };
    let result = optimize_with(&unit_interval(), 40, &cfg, quadratic, &mut |_, _| {}).unwrap();
    assert!(result.history.iter().all(|r| (0.0..=1.0).contains(&r.theta[0])));
    assert!(result.best_objective < result.best_so_far[7], "{:?}", result.best_so_far);
    assert!(result.best_so_far.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn suggestions_respect_bounds_and_log_scale() {
    let space = ParamSpace::new(vec![
        ParamBound { lower: 0.01, upper: 100.0, log: true },
        ParamBound { lower: 0.5, upper: 3.0, log: false },
    ])
    .unwrap();
    assert!((space.from_unit(&[0.5, 0.5])[0] - 1.0).abs() < 1e-12);
    assert!((space.from_unit(&[0.5, 0.5])[1] - 1.75).abs() < 1e-12);
    let cfg = SuggestConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let first = suggest(&[], &space, &cfg, &mut rng);
    assert!(first[0] >= 0.01 && first[0] <= 100.0 && first[1] >= 0.5 && first[1] <= 3.0);
    // Objective with its optimum at a corner draws the search to the edge of the box.
    let result = optimize_with(
        &space,
        25,
        &cfg,
        |t| Ok(record(t, -t[0].ln() - t[1])),
        &mut |_, _| {},
    )
    .unwrap();
    let mut small = 0;
    for r in &result.history {
        assert!(r.theta[0] >= 0.01 && r.theta[0] <= 100.0 && r.theta[1] >= 0.5 && r.theta[1] <= 3.0);
        small += (r.theta[0] < 1.0) as usize;
    }
    // A uniform design in log space puts about half the points below 1.
    assert!(small >= 3, "{small} points below 1");
    assert!(ParamSpace::new(vec![ParamBound { lower: 0.0, upper: 1.0, log: true }]).is_err());
    assert!(ParamSpace::new(vec![ParamBound { lower: 1.0, upper: 1.0, log: false }]).is_err());
    assert!(ParamSpace::new(vec![ParamBound { lower: -1.0, upper: 1.0, log: false }]).is_err());
}

#[test]
fn budget_of_one_returns_that_point() {
    let result = optimize_with(&unit_interval(), 1, &SuggestConfig::default(), quadratic, &mut |_, _| {}).unwrap();
    assert_eq!(result.history.len(), 1);
    assert_eq!(result.best_theta, result.history[0].theta);
    assert_eq!(result.best_so_far, vec![result.history[0].objective]);
    assert!(matches!(
        optimize_with(&unit_interval(), 0, &SuggestConfig::default(), quadratic, &mut |_, _| {}),
        Err(Error::Validation(_))
    ));
}

#[test]
fn failed_evaluations_never_become_the_incumbent() {
    let eval = |t: &[f64]| Ok(if t[0] < 0.5 { record(t, f64::NAN) } else { record(t, t[0]) });
    let result = optimize_with(&unit_interval(), 20, &SuggestConfig::default(), eval, &mut |_, _| {}).unwrap();
    assert!(result.history.iter().any(|r| r.failed));
    assert!(result.best_theta[0] >= 0.5);
    assert!(result.best_so_far.iter().filter(|v| v.is_finite()).collect::<Vec<_>>().windows(2).all(|w| w[1] <= w[0]));
    let scored = scored_objectives(&result.history, 10.0).unwrap();
    let worst = result.history.iter().filter(|r| !r.failed).map(|r| r.objective).fold(f64::MIN, f64::max);
    for (r, s) in result.history.iter().zip(&scored) {
        assert_eq!(*s, if r.failed { 10.0 * worst } else { r.objective });
    }
}

#[test]
fn same_inputs_same_suggestions() {
    let run = || optimize_with(&unit_interval(), 12, &SuggestConfig::default(), quadratic, &mut |_, _| {}).unwrap();
    assert_eq!(run().history, run().history);
    let other = SuggestConfig { seed: 5, ..SuggestConfig::default() };
    let moved = optimize_with(&unit_interval(), 12, &other, quadratic, &mut |_, _| {}).unwrap();
    assert_ne!(moved.history[0].theta, run().history[0].theta);
}

#[test]
fn gp_recovers_a_smooth_function() {
    let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gp = GaussianProcess::fit(xs, &ys, 1e-6, &mut rng).unwrap();
    let (m, sd) = gp.predict(&[0.5]);
    assert!((m - 1.5f64.sin()).abs() < 0.02, "{m}");
    assert!(sd < 0.05);
    let (_, far) = gp.predict(&[3.0]);
    assert!(far > sd);
}

fn short_stand(duration: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::load("stand").unwrap();
    cfg.duration = duration;
    cfg
}

#[test]
fn objective_is_the_harness_cumulative_cost() {
    let cfg = short_stand(0.4);
    let theta = cfg.true_cost.theta();
    let r = evaluate_theta(&cfg, &theta, &theta, &[3]).unwrap();
    let direct = run_episode(&cfg.with_seed(3).unwrap()).unwrap().metrics.cumulative_cost;
    assert_eq!(r.objective, direct);
    assert_eq!(r.per_seed, vec![direct]);
    let again = evaluate_theta(&cfg, &theta, &theta, &[3]).unwrap();
    assert_eq!(again.objective, r.objective);
}

#[test]
fn blind_planner_scores_worse() {
    let cfg = short_stand(1.5);
    let theta = cfg.true_cost.theta();
    let seeds = [0, 1, 2, 3, 4];
    let informed = evaluate_theta(&cfg, &theta, &theta, &seeds).unwrap();
    let blind = evaluate_theta(&cfg, &vec![0.0; theta.len()], &theta, &seeds).unwrap();
    assert!(blind.objective > informed.objective, "blind {} informed {}", blind.objective, informed.objective);
}

#[test]
fn manifest_writes_history_and_preset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.toml"),
        "name = \"tiny\"\nmodel = \"pendulum\"\ntask = \"hold\"\nduration = 0.1\n",
    )
    .unwrap();
    let manifest: TuneManifest = toml::from_str(
        "scenario = \"tiny.toml\"\nbudget = 3\nseeds = [0]\noutput = \"out\"\n[suggest]\ninitial_design = 2\n",
    )
    .unwrap();
    let mut seen = 0;
    let out = run_manifest(&manifest, Some(dir.path()), |_, _| seen += 1).unwrap();
    assert_eq!(seen, 3);
    let history = std::fs::read_to_string(out.history_path.unwrap()).unwrap();
    assert_eq!(history.lines().count(), 3);
    let first: EvalRecord = serde_json::from_str(history.lines().next().unwrap()).unwrap();
    assert_eq!(first, out.result.history[0]);
    let preset = CostSpec::from_file(out.preset_path.unwrap()).unwrap();
    assert_eq!(preset.theta(), out.result.best_theta);
    assert!(preset.name.ends_with("-tuned"));
    for (t, b) in out.result.best_theta.iter().zip(&out.space.bounds) {
        assert!(*t >= b.lower && *t <= b.upper);
    }
    let typo = toml::from_str::<TuneManifest>("scenario = \"x\"\nbudget = 1\nbugdet = 2\n");
    assert!(typo.is_err());
}
