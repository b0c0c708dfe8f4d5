//! C ABI for posture-mpc.
//!
//! Every function returns a [`PmStatus`]. On failure the message is kept in
//! a thread-local slot readable with [`pm_last_error`]. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.
//! Panics never cross the boundary; they surface as `PM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use posture_mpc::dynamics::{Perturbation, SimState};
use posture_mpc::harness::{run_episode, EpisodeMetrics, ScenarioConfig};
use posture_mpc::lowlevel::{act_with, extract_posture, GainConfig, TargetPosture};
use posture_mpc::planner::{Planner, RolloutContext};
use posture_mpc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Io = 5,
    Diverged = 6,
    Dimension = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Ablation bits for [`pm_scenario_set_ablation`].
pub const PM_ABLATION_NO_INSTANT: u32 = 1;
pub const PM_ABLATION_CONSTANT_GAIN: u32 = 2;
pub const PM_ABLATION_PD: u32 = 4;
pub const PM_ABLATION_VANILLA_MPPI: u32 = 8;

/// Episode summary. Optional times are negative when absent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PmEpisodeMetrics {
    pub cumulative_cost: f64,
    pub forward_distance: f64,
    pub time_upright: f64,
    pub fall_time: f64,
    pub energy: f64,
    pub plans: u64,
    pub mean_plan_latency: f64,
    pub max_plan_latency: f64,
    pub mean_gain: f64,
    pub final_upright: bool,
    pub diverged: bool,
}

impl From<&EpisodeMetrics> for PmEpisodeMetrics {
    fn from(m: &EpisodeMetrics) -> Self {
        PmEpisodeMetrics {
            cumulative_cost: m.cumulative_cost,
            forward_distance: m.forward_distance,
            time_upright: m.time_upright,
            fall_time: m.fall_time.unwrap_or(-1.0),
            energy: m.energy,
            plans: m.plans,
            mean_plan_latency: m.mean_plan_latency,
            max_plan_latency: m.max_plan_latency,
            mean_gain: m.mean_gain,
            final_upright: m.final_upright,
            diverged: m.diverged,
        }
    }
}

/// A resolved scenario.
pub struct PmScenario {
    cfg: ScenarioConfig,
}

/// A posture planner plus low-level controller bound to one scenario, for
/// driving an external simulation.
pub struct PmController {
    cfg: ScenarioConfig,
    gains: GainConfig,
    failures: Perturbation,
    planner: Planner,
    target: TargetPosture,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(PmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => PmStatus::Parse,
            Error::Validation(_) | Error::UnknownFrame(_) | Error::NegativeWeight { .. } => PmStatus::Validation,
            Error::Dimension { .. } => PmStatus::Dimension,
            Error::Diverged { .. } => PmStatus::Diverged,
            Error::Io { .. } | Error::Output(_) => PmStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: PmStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PmStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (PmStatus::Ok, String::new()),
        Ok(Err(Failure(s, m))) => (s, m),
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (PmStatus::Panic, format!("panic: {m}"))
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(PmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(PmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(PmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(PmStatus::NullPointer, format!("{what} is null")));
    }
    if len != expected {
        return Err(fail(PmStatus::Dimension, format!("{what}: expected {expected} values, got {len}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(PmStatus::NullPointer, format!("{what} is null")));
    }
    if len < expected {
        return Err(fail(
            PmStatus::BufferTooSmall,
            format!("{what}: need {expected} values, buffer holds {len}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Copy the calling thread's last error message into `buf` (NUL
/// terminated). Returns the message length in bytes excluding the NUL,
/// whether or not it fit; 0 when there is no message.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Load a bundled scenario by name or a scenario file by path.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_load(name: *const c_char, out: *mut *mut PmScenario) -> PmStatus {
    guard(|| {
        let out = handle_mut(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ScenarioConfig::load(str_arg(name, "name")?)?;
        *out = Box::into_raw(Box::new(PmScenario { cfg }));
        Ok(())
    })
}

/// Parse a scenario from TOML text. Model and task names must be bundled.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_from_toml(text: *const c_char, out: *mut *mut PmScenario) -> PmStatus {
    guard(|| {
        let out = handle_mut(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ScenarioConfig::from_toml_named("<ffi>", str_arg(text, "text")?, None)?;
        *out = Box::into_raw(Box::new(PmScenario { cfg }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_free(scenario: *mut PmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_set_seed(scenario: *mut PmScenario, seed: u64) -> PmStatus {
    guard(|| {
        let s = handle_mut(scenario, "scenario")?;
        s.cfg = s.cfg.with_seed(seed)?;
        Ok(())
    })
}

/// Replace the ablation switches with `flags` (`PM_ABLATION_*` bits).
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_set_ablation(scenario: *mut PmScenario, flags: u32) -> PmStatus {
    guard(|| {
        let s = handle_mut(scenario, "scenario")?;
        let known = PM_ABLATION_NO_INSTANT | PM_ABLATION_CONSTANT_GAIN | PM_ABLATION_PD | PM_ABLATION_VANILLA_MPPI;
        if flags & !known != 0 {
            return Err(fail(PmStatus::InvalidArgument, format!("unknown ablation bits {:#x}", flags & !known)));
        }
        let a = &mut s.cfg.ablation;
        a.no_instant = flags & PM_ABLATION_NO_INSTANT != 0;
        a.constant_gain = flags & PM_ABLATION_CONSTANT_GAIN != 0;
        a.pd_mode = flags & PM_ABLATION_PD != 0;
        a.vanilla_mppi = flags & PM_ABLATION_VANILLA_MPPI != 0;
        s.cfg.validate()?;
        Ok(())
    })
}

/// Override the episode length in seconds.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_set_duration(scenario: *mut PmScenario, seconds: f64) -> PmStatus {
    guard(|| {
        let s = handle_mut(scenario, "scenario")?;
        let old = s.cfg.duration;
        s.cfg.duration = seconds;
        if let Err(e) = s.cfg.validate() {
            s.cfg.duration = old;
            return Err(e.into());
        }
        Ok(())
    })
}

/// Coordinate, muscle and target-posture counts of the scenario's model.
///
/// # Safety
/// `scenario` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_dims(
    scenario: *const PmScenario,
    nq: *mut usize,
    nu: *mut usize,
    nz: *mut usize,
) -> PmStatus {
    guard(|| {
        let m = &handle(scenario, "scenario")?.cfg.model;
        *handle_mut(nq, "nq")? = m.nq();
        *handle_mut(nu, "nu")? = m.nu();
        *handle_mut(nz, "nz")? = m.nz();
        Ok(())
    })
}

/// Run a full lockstep episode.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_run_episode(scenario: *const PmScenario, out: *mut PmEpisodeMetrics) -> PmStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let out = handle_mut(out, "out")?;
        *out = (&run_episode(&s.cfg)?.metrics).into();
        Ok(())
    })
}

/// A controller for the scenario, starting from its initial state.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pm_controller_new(scenario: *const PmScenario, out: *mut *mut PmController) -> PmStatus {
    guard(|| {
        let out = handle_mut(out, "out")?;
        *out = ptr::null_mut();
        let cfg = handle(scenario, "scenario")?.cfg.clone();
        if cfg.ablation.vanilla_mppi {
            return Err(fail(PmStatus::InvalidArgument, "the controller handle plans target postures only"));
        }
        let planner = Planner::new(&cfg.model, &cfg.initial, cfg.effective_planner(), cfg.workers)?;
        let target = extract_posture(&cfg.model, &cfg.initial);
        *out = Box::into_raw(Box::new(PmController {
            gains: cfg.effective_gains(),
            failures: cfg.perturbation.failures_only(),
            planner,
            target,
            cfg,
        }));
        Ok(())
    })
}

/// # Safety
/// `controller` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_controller_free(controller: *mut PmController) {
    if !controller.is_null() {
        drop(Box::from_raw(controller));
    }
}

unsafe fn read_state(
    model: &posture_mpc::dynamics::ModelSpec,
    q: *const f64,
    nq: usize,
    qdot: *const f64,
    act: *const f64,
    nu: usize,
    time: f64,
) -> Result<SimState, Failure> {
    let state = SimState {
        q: slice(q, nq, model.nq(), "q")?.to_vec(),
        qdot: slice(qdot, nq, model.nq(), "qdot")?.to_vec(),
        act: slice(act, nu, model.nu(), "act")?.to_vec(),
        time,
    };
    state.validate(model)?;
    Ok(state)
}

/// Plan from the given state; the new target posture is written to `z_out`
/// and used by later [`pm_controller_act`] calls.
///
/// # Safety
/// `controller` must be a live handle; `q`/`qdot` hold `nq` values, `act`
/// holds `nu`, and `z_out` has room for `z_len ≥ nz`.
#[no_mangle]
pub unsafe extern "C" fn pm_controller_plan(
    controller: *mut PmController,
    q: *const f64,
    qdot: *const f64,
    nq: usize,
    act: *const f64,
    nu: usize,
    time: f64,
    z_out: *mut f64,
    z_len: usize,
) -> PmStatus {
    guard(|| {
        let c = handle_mut(controller, "controller")?;
        let state = read_state(&c.cfg.model, q, nq, qdot, act, nu, time)?;
        let z_out = slice_mut(z_out, z_len, c.cfg.model.nz(), "z_out")?;
        let ctx = RolloutContext {
            model: &c.cfg.model,
            cost: &c.cfg.task,
            gains: &c.gains,
            perturbation: &c.failures,
            timing: c.cfg.timing,
            horizon: c.cfg.planner.horizon,
        };
        let out = c.planner.plan(&ctx, &state, None);
        z_out[..out.z_star.z.len()].copy_from_slice(&out.z_star.z);
        c.target = out.z_star;
        Ok(())
    })
}

/// Muscle excitations that track the current target posture from the
/// given state, written to `u_out`.
///
/// # Safety
/// As for [`pm_controller_plan`], with `u_out` holding `u_len ≥ nu`.
#[no_mangle]
pub unsafe extern "C" fn pm_controller_act(
    controller: *const PmController,
    q: *const f64,
    qdot: *const f64,
    nq: usize,
    act: *const f64,
    nu: usize,
    time: f64,
    u_out: *mut f64,
    u_len: usize,
) -> PmStatus {
    guard(|| {
        let c = handle(controller, "controller")?;
        let model = &c.cfg.model;
        let state = read_state(model, q, nq, qdot, act, nu, time)?;
        let u_out = slice_mut(u_out, u_len, model.nu(), "u_out")?;
        let out = act_with(model, &state, &c.target, &c.gains, c.cfg.timing.control_dt(), &c.failures);
        u_out[..out.u.len()].copy_from_slice(&out.u);
        Ok(())
    })
}

/// Copy the scenario's initial state out.
///
/// # Safety
/// `scenario` must be a live handle; `q_out`/`qdot_out` have room for `nq`
/// values and `act_out` for `nu`.
#[no_mangle]
pub unsafe extern "C" fn pm_scenario_initial_state(
    scenario: *const PmScenario,
    q_out: *mut f64,
    qdot_out: *mut f64,
    nq: usize,
    act_out: *mut f64,
    nu: usize,
) -> PmStatus {
    guard(|| {
        let s = handle(scenario, "scenario")?;
        let init = &s.cfg.initial;
        slice_mut(q_out, nq, init.q.len(), "q_out")?[..init.q.len()].copy_from_slice(&init.q);
        slice_mut(qdot_out, nq, init.qdot.len(), "qdot_out")?[..init.qdot.len()].copy_from_slice(&init.qdot);
        slice_mut(act_out, nu, init.act.len(), "act_out")?[..init.act.len()].copy_from_slice(&init.act);
        Ok(())
    })
}
