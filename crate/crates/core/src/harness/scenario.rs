//! Scenario documents: which model and task to run, for how long, with which
//! planner, controller, perturbations and logging.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bundled;
use crate::costs::CostSpec;
use crate::dynamics::{ActuatorFailure, ExternalWrench, JointKind, ModelSpec, Perturbation, SimState, TerrainDoc};
use crate::error::{Error, Result};
use crate::lowlevel::{ControlTiming, GainConfig, GainMode};
use crate::planner::{PlannerConfig, VanillaConfig};

/// Environment variable holding the default number of planner workers.
pub const WORKERS_ENV: &str = "POSTURE_MPC_WORKERS";

/// Worker count from [`WORKERS_ENV`], falling back to 1.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n >= 1)
        .unwrap_or(1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// All samples drawn around the running mean.
    pub no_instant: bool,
    /// Same gain on every muscle, matched to the morphology run's mean gain.
    pub constant_gain: bool,
    pub pd_mode: bool,
    /// Plan raw control sequences instead of target postures.
    pub vanilla_mppi: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogOptions {
    pub dir: Option<PathBuf>,
    /// Also log one activation column per muscle.
    pub activations: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Coord {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InitialDoc {
    /// Joint name → coordinate(s), overriding the model's reference posture.
    q: BTreeMap<String, Coord>,
    qdot: BTreeMap<String, Coord>,
    /// Forward lean (rad) about the ankles with feet kept flat.
    lean: f64,
    /// Uniform initial activation.
    activation: f64,
    /// Standard deviation of Gaussian noise added to the masked joints.
    noise: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WrenchDoc {
    start: f64,
    duration: f64,
    link: String,
    #[serde(default)]
    force: [f64; 2],
    #[serde(default)]
    torque: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FailureDoc {
    time: f64,
    #[serde(default)]
    muscles: Vec<String>,
    /// Fail `round(fraction · |group|)` muscles (at least one) of this group,
    /// in model order.
    group: Option<String>,
    #[serde(default = "one")]
    fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PerturbationDoc {
    wrenches: Vec<WrenchDoc>,
    failures: Vec<FailureDoc>,
}

fn default_duration() -> f64 {
    10.0
}

fn default_replan() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default)]
    name: String,
    model: String,
    task: String,
    true_task: Option<String>,
    #[serde(default = "default_duration")]
    duration: f64,
    #[serde(default)]
    realtime_fraction: f64,
    #[serde(default = "default_replan")]
    replan_every: usize,
    plan_budget: Option<f64>,
    #[serde(default)]
    seed: u64,
    workers: Option<usize>,
    #[serde(default)]
    timing: ControlTiming,
    #[serde(default)]
    planner: PlannerConfig,
    #[serde(default)]
    gains: GainConfig,
    #[serde(default)]
    vanilla: VanillaConfig,
    #[serde(default)]
    ablation: Ablation,
    terrain: Option<TerrainDoc>,
    #[serde(default)]
    initial: InitialDoc,
    #[serde(default)]
    perturbation: PerturbationDoc,
    #[serde(default)]
    log: LogOptions,
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: Arc<ModelSpec>,
    /// Cost the planner optimizes.
    pub task: CostSpec,
    /// Cost the episode is scored with.
    pub true_cost: CostSpec,
    /// Episode length (s).
    pub duration: f64,
    /// Planner pacing; 0 runs lockstep.
    pub realtime_fraction: f64,
    /// Control steps between plans.
    pub replan_every: usize,
    /// Wall-clock budget per plan in paced mode (s); defaults to the planner horizon.
    pub plan_budget: f64,
    pub seed: u64,
    pub workers: usize,
    pub timing: ControlTiming,
    pub planner: PlannerConfig,
    pub gains: GainConfig,
    pub vanilla: VanillaConfig,
    pub ablation: Ablation,
    pub perturbation: Perturbation,
    pub initial: SimState,
    pub log: LogOptions,
    initial_doc: InitialDoc,
}

fn resolve_path(base: Option<&Path>, name: &str) -> PathBuf {
    let p = Path::new(name);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

fn load_model_ref(base: Option<&Path>, name: &str) -> Result<ModelSpec> {
    match bundled::model_text(name) {
        Some(text) => ModelSpec::from_toml_named(name, text),
        None => ModelSpec::from_file(resolve_path(base, name)),
    }
}

fn load_preset_ref(base: Option<&Path>, name: &str) -> Result<CostSpec> {
    match bundled::preset_text(name) {
        Some(text) => CostSpec::from_toml_named(name, text),
        None => CostSpec::from_file(resolve_path(base, name)),
    }
}

fn set_coords(model: &ModelSpec, target: &mut [f64], map: &BTreeMap<String, Coord>, what: &str) -> Result<()> {
    for (name, value) in map {
        let j = model
            .joint_by_name(name)
            .ok_or_else(|| Error::validation(format!("initial {what}: unknown joint `{name}`")))?;
        let dofs = model.joint_dofs(j);
        let values = match value {
            Coord::Scalar(v) => vec![*v],
            Coord::Vector(v) => v.clone(),
        };
        if values.len() != dofs.len() {
            return Err(Error::validation(format!(
                "initial {what}: joint `{name}` has {} coordinates, got {}",
                dofs.len(),
                values.len()
            )));
        }
        for (d, v) in dofs.zip(values) {
            target[d] = v;
        }
    }
    Ok(())
}

fn build_initial(model: &ModelSpec, doc: &InitialDoc, seed: u64) -> Result<SimState> {
    let mut state = SimState::rest(model);
    set_coords(model, &mut state.q, &doc.q, "q")?;
    set_coords(model, &mut state.qdot, &doc.qdot, "qdot")?;
    if doc.noise > 0.0 {
        let normal = Normal::new(0.0, doc.noise).map_err(|e| Error::validation(format!("initial noise: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for &d in &model.posture_mask {
            state.q[d] += normal.sample(&mut rng);
        }
    }
    if !(0.0..=1.0).contains(&doc.activation) {
        return Err(Error::validation("initial activation must lie in [0, 1]"));
    }
    state.act.fill(doc.activation);
    model.clamp_q(&mut state.q);
    if model.joints[0].kind == JointKind::PlanarFree {
        if let Some(foot) = model.frame("foot_left").map(|f| f.body) {
            if doc.lean != 0.0 {
                for side in ["ankle_l", "ankle_r"] {
                    if let Some(j) = model.joint_by_name(side) {
                        let d = model.joints[j].first_dof;
                        state.q[d] += doc.lean * model.joints[j].axis_sign;
                    }
                }
            }
            state.q = model.level_body_and_ground(&state.q, foot);
        } else {
            state.q = model.grounded(&state.q);
        }
    }
    state.validate(model)?;
    Ok(state)
}

fn build_perturbation(model: &ModelSpec, doc: &PerturbationDoc) -> Result<Perturbation> {
    let mut wrenches = Vec::new();
    for w in &doc.wrenches {
        let body = model
            .body_by_name(&w.link)
            .ok_or_else(|| Error::validation(format!("wrench on unknown link `{}`", w.link)))?;
        wrenches.push(ExternalWrench {
            start: w.start,
            duration: w.duration,
            body,
            force: Vector2::new(w.force[0], w.force[1]),
            torque: w.torque,
        });
    }
    let mut failures = Vec::new();
    for f in &doc.failures {
        let mut muscles = Vec::new();
        for name in &f.muscles {
            muscles.push(
                model
                    .muscle_by_name(name)
                    .ok_or_else(|| Error::validation(format!("failure of unknown muscle `{name}`")))?,
            );
        }
        if let Some(group) = &f.group {
            let members = model.muscle_group(group);
            if members.is_empty() {
                return Err(Error::validation(format!("failure group `{group}` has no muscles")));
            }
            if !(f.fraction > 0.0 && f.fraction <= 1.0) {
                return Err(Error::validation("failure fraction must lie in (0, 1]"));
            }
            let count = ((f.fraction * members.len() as f64).round() as usize).clamp(1, members.len());
            muscles.extend(members.into_iter().take(count));
        }
        muscles.sort_unstable();
        muscles.dedup();
        failures.push(ActuatorFailure { time: f.time, muscles });
    }
    Perturbation::new(wrenches, failures)
}

impl ScenarioConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_named(&path.display().to_string(), &text, path.parent())
    }

    /// A bundled scenario name or a path to a scenario file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match bundled::scenario_text(name_or_path) {
            Some(text) if !Path::new(name_or_path).exists() => Self::from_toml_named(name_or_path, text, None),
            _ => Self::from_file(name_or_path),
        }
    }

    pub fn from_toml_named(source_name: &str, text: &str, base: Option<&Path>) -> Result<Self> {
        let doc: ScenarioDoc = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        let mut model = load_model_ref(base, &doc.model)?;
        if let Some(t) = &doc.terrain {
            model.terrain = t.build()?;
        }
        let task = load_preset_ref(base, &doc.task)?.bind(&model)?;
        let true_cost = match &doc.true_task {
            Some(t) => load_preset_ref(base, t)?.bind(&model)?,
            None => task.clone(),
        };
        let initial = build_initial(&model, &doc.initial, doc.seed)?;
        let perturbation = build_perturbation(&model, &doc.perturbation)?;
        let mut planner = doc.planner;
        planner.seed = doc.seed;
        let cfg = ScenarioConfig {
            name: if doc.name.is_empty() { source_name.to_string() } else { doc.name },
            model: Arc::new(model),
            task,
            true_cost,
            duration: doc.duration,
            realtime_fraction: doc.realtime_fraction,
            replan_every: doc.replan_every,
            plan_budget: doc.plan_budget.unwrap_or(planner.horizon),
            seed: doc.seed,
            workers: doc.workers.unwrap_or_else(default_workers),
            timing: doc.timing,
            planner,
            gains: doc.gains,
            vanilla: doc.vanilla,
            ablation: doc.ablation,
            perturbation,
            initial,
            log: doc.log,
            initial_doc: doc.initial,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::validation(format!("duration must be positive, got {}", self.duration)));
        }
        if !(0.0..=1.0).contains(&self.realtime_fraction) {
            return Err(Error::validation(format!(
                "realtime_fraction must lie in [0, 1], got {}",
                self.realtime_fraction
            )));
        }
        if self.replan_every == 0 {
            return Err(Error::validation("replan_every must be at least 1"));
        }
        if !(self.plan_budget > 0.0) {
            return Err(Error::validation("plan_budget must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::validation("workers must be at least 1"));
        }
        self.timing.validate()?;
        self.gains.validate()?;
        self.effective_planner().validate()
    }

    /// Re-seed the planner and any seeded initial-state noise.
    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        let mut out = self.clone();
        out.seed = seed;
        out.planner.seed = seed;
        out.initial = build_initial(&self.model, &self.initial_doc, seed)?;
        Ok(out)
    }

    /// Planner settings after applying ablation switches.
    pub fn effective_planner(&self) -> PlannerConfig {
        let mut p = self.planner.clone();
        if self.ablation.no_instant {
            p.n_instant = 0;
        }
        p
    }

    /// Controller settings after applying ablation switches. Constant mode
    /// keeps whatever `constant_scale` the config carries; use
    /// [`super::matched_constant_gains`] to match it to a morphology run.
    pub fn effective_gains(&self) -> GainConfig {
        let mut g = self.gains.clone();
        if self.ablation.constant_gain {
            g.mode = GainMode::Constant;
        } else if self.ablation.pd_mode {
            g.mode = GainMode::ProportionalDerivative;
        }
        g
    }

    pub fn control_steps(&self) -> usize {
        (self.duration / self.timing.control_dt()).round() as usize
    }
}
