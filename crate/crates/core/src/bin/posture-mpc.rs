use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use posture_mpc::harness::{bench_planner, run_episode, run_suite, ScenarioConfig, SuiteManifest, WORKERS_ENV};
use posture_mpc::optimizer::{run_manifest, TuneManifest};

#[derive(Parser)]
#[command(name = "posture-mpc", version, about = "Posture MPC scenarios, suites, tuning and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and print its metrics as JSON.
    Run {
        /// Scenario file or bundled scenario name.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_instant: bool,
        #[arg(long)]
        constant_gain: bool,
        #[arg(long)]
        pd: bool,
        #[arg(long)]
        vanilla_mppi: bool,
        #[arg(long)]
        realtime_fraction: Option<f64>,
        /// Write the trajectory CSV and metrics JSON here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Include per-muscle activation, excitation and tension columns.
        #[arg(long)]
        log_activations: bool,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Run a scenario × seed manifest and print the summary.
    Suite {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Tune planning-cost weights against the scenario's true cost.
    Tune {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Time planner calls at several worker counts.
    Bench {
        #[arg(long)]
        scenario: String,
        /// Worker counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        workers: Vec<usize>,
        /// Extra sample counts to time at the first worker count.
        #[arg(long, value_delimiter = ',')]
        samples: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        plans: usize,
    },
}

fn parent(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn print_json<T: serde::Serialize>(v: &T) -> posture_mpc::Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(posture_mpc::Error::Output(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> posture_mpc::Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            no_instant,
            constant_gain,
            pd,
            vanilla_mppi,
            realtime_fraction,
            log,
            log_activations,
            workers,
        } => {
            let mut cfg = ScenarioConfig::load(&scenario)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s)?;
            }
            cfg.ablation.no_instant |= no_instant;
            cfg.ablation.constant_gain |= constant_gain;
            cfg.ablation.pd_mode |= pd;
            cfg.ablation.vanilla_mppi |= vanilla_mppi;
            if let Some(f) = realtime_fraction {
                cfg.realtime_fraction = f;
            }
            if let Some(dir) = log {
                cfg.log.dir = Some(dir);
            }
            cfg.log.activations |= log_activations;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if cfg.ablation.constant_gain {
                let (matched, mean) = posture_mpc::harness::matched_constant_gains(&cfg)?;
                eprintln!("constant gain matched to mean morphology gain {mean:.1} N/m");
                cfg = matched;
            }
            print_json(&run_episode(&cfg)?.metrics)
        }
        Command::Suite { manifest } => {
            let m = SuiteManifest::from_file(&manifest)?;
            let summary = run_suite(&m, parent(&manifest))?;
            for row in &summary.rows {
                let cost = &row.metrics["cumulative_cost"];
                let dist = &row.metrics["forward_distance"];
                eprintln!(
                    "{:<24} n={:<3} success {:.2}  cost {:.1} ± {:.1}  distance {:.3} ± {:.3}",
                    row.label,
                    row.seeds.len(),
                    row.success_rate,
                    cost.mean,
                    cost.stderr,
                    dist.mean,
                    dist.stderr
                );
            }
            print_json(&summary)
        }
        Command::Tune { manifest } => {
            let m = TuneManifest::from_file(&manifest)?;
            let out = run_manifest(&m, parent(&manifest), |i, r| {
                eprintln!("[{:>3}] J = {:.4} ({:.1} s) θ = {:?}", i + 1, r.objective, r.wall_time, r.theta);
            })?;
            if let Some(p) = &out.preset_path {
                eprintln!("tuned preset: {}", p.display());
            }
            print_json(&serde_json::json!({
                "best_theta": out.result.best_theta,
                "best_objective": out.result.best_objective,
                "best_so_far": out.result.best_so_far,
                "history": out.history_path,
                "preset": out.preset_path,
            }))
        }
        Command::Bench {
            scenario,
            workers,
            samples,
            plans,
        } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            print_json(&bench_planner(&cfg, &workers, &samples, plans)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
