//! Morphology-aware proportional muscle controller.
//!
//! A target posture `z*` for the masked joints becomes target muscle lengths;
//! per-muscle gains scale with how much each muscle's length depends on the
//! current posture error, the resulting pull-only tensions are converted to
//! target activations, and the activation dynamics are inverted in closed
//! form to get the excitation that reaches them in one control interval.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{muscle_force, muscle_geometry, muscle_lengths, ModelSpec, MuscleGeometry, MuscleSpec, Perturbation, SimState};
use crate::error::{Error, Result};

/// Relative threshold on the force gain below which a muscle is treated as
/// unable to produce active force (`T_k < EPS_GAIN · f_max`).
pub const EPS_GAIN: f64 = 1e-6;
/// Floor of the inversion denominator, relative to the control interval.
pub const EPS_DENOM: f64 = 1e-3;

/// Simulation step and how many steps each control is held for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlTiming {
    pub dt: f64,
    pub substeps: usize,
}

impl Default for ControlTiming {
    fn default() -> Self {
        ControlTiming { dt: 0.002, substeps: 2 }
    }
}

impl ControlTiming {
    /// Control interval `Δt_c = dt · substeps`.
    pub fn control_dt(&self) -> f64 {
        self.dt * self.substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.substeps == 0 {
            return Err(Error::validation(format!(
                "dt must be positive and substeps at least 1, got dt = {} substeps = {}",
                self.dt, self.substeps
            )));
        }
        Ok(())
    }
}

/// Target values for the masked joints, in posture-mask order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPosture {
    pub z: Vec<f64>,
}

impl TargetPosture {
    /// Clamp `z` into the masked joints' limits.
    pub fn new(model: &ModelSpec, mut z: Vec<f64>) -> Result<Self> {
        if z.len() != model.nz() {
            return Err(Error::Dimension {
                what: "target posture",
                expected: model.nz(),
                got: z.len(),
            });
        }
        clamp_to_mask(model, &mut z);
        Ok(TargetPosture { z })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

pub(crate) fn clamp_to_mask(model: &ModelSpec, z: &mut [f64]) {
    for (v, &d) in z.iter_mut().zip(&model.posture_mask) {
        *v = v.clamp(model.q_lower()[d], model.q_upper()[d]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    #[default]
    Morphology,
    /// Same gain `k̄ · constant_scale` on every muscle.
    Constant,
    /// Morphology gains plus a lengthening-velocity damping tension.
    ProportionalDerivative,
}

/// How per-joint contributions are combined into one gain per muscle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainAggregation {
    /// `Σ_i |J_m[:, i] Δz_i|`
    #[default]
    PerJoint,
    /// `|Σ_i J_m[:, i] Δz_i|`
    AbsOfSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainConfig {
    /// Global gain scale (N/m per m·rad of weighted posture error).
    pub k_bar: f64,
    /// Gain floor (N/m).
    pub k_min: f64,
    pub mode: GainMode,
    pub aggregation: GainAggregation,
    /// Constant mode uses `K = k_bar · constant_scale` for every muscle.
    pub constant_scale: f64,
    /// PD mode damping gain as a fraction of the proportional gain.
    pub damping_ratio: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        GainConfig {
            k_bar: 2.0e6,
            k_min: 1.0,
            mode: GainMode::Morphology,
            aggregation: GainAggregation::PerJoint,
            constant_scale: 5.0e-3,
            damping_ratio: 0.1,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_bar > 0.0 && self.k_bar.is_finite()) {
            return Err(Error::validation(format!("k_bar must be positive, got {}", self.k_bar)));
        }
        if !(self.k_min >= 0.0 && self.k_min.is_finite()) {
            return Err(Error::validation(format!("k_min must be non-negative, got {}", self.k_min)));
        }
        if !(self.constant_scale >= 0.0 && self.damping_ratio >= 0.0) {
            return Err(Error::validation("constant_scale and damping_ratio must be non-negative"));
        }
        Ok(())
    }

    /// Constant-gain config whose gain equals `mean_gain`.
    pub fn matched_constant(&self, mean_gain: f64) -> Self {
        GainConfig {
            mode: GainMode::Constant,
            constant_scale: mean_gain / self.k_bar,
            ..self.clone()
        }
    }
}

/// The masked joint coordinates of the current state.
pub fn extract_posture(model: &ModelSpec, state: &SimState) -> TargetPosture {
    TargetPosture {
        z: model.posture_mask.iter().map(|&d| state.q[d]).collect(),
    }
}

/// Muscle lengths at the current posture with the masked joints moved to `z*`.
pub fn target_lengths(model: &ModelSpec, state: &SimState, z_star: &TargetPosture) -> Vec<f64> {
    let mut q = state.q.clone();
    for (&d, &z) in model.posture_mask.iter().zip(&z_star.z) {
        q[d] = z;
    }
    muscle_lengths(model, &q)
}

/// Per-muscle proportional gains.
pub fn morphology_gains(
    moment_arms: &DMatrix<f64>,
    mask: &[usize],
    z_star: &[f64],
    z_now: &[f64],
    cfg: &GainConfig,
) -> Vec<f64> {
    let nu = moment_arms.nrows();
    if cfg.mode == GainMode::Constant {
        return vec![(cfg.k_bar * cfg.constant_scale).max(cfg.k_min); nu];
    }
    (0..nu)
        .map(|m| {
            let terms = mask
                .iter()
                .zip(z_star.iter().zip(z_now))
                .map(|(&d, (zs, zn))| moment_arms[(m, d)] * (zs - zn));
            let s = match cfg.aggregation {
                GainAggregation::PerJoint => terms.map(f64::abs).sum::<f64>(),
                GainAggregation::AbsOfSum => terms.sum::<f64>().abs(),
            };
            (cfg.k_bar * s).max(cfg.k_min)
        })
        .collect()
}

/// Pull-only proportional tensions `T* = max(0, K ⊙ (l - l*))`.
pub fn p_force(gains: &[f64], l_star: &[f64], l: &[f64]) -> Vec<f64> {
    gains
        .iter()
        .zip(l_star.iter().zip(l))
        .map(|(k, (ls, l))| (k * (l - ls)).max(0.0))
        .collect()
}

/// Degenerate cases met while inverting the activation dynamics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionDiagnostics {
    /// Muscles whose force gain was below `EPS_GAIN · f_max`.
    pub gain_degenerate: u64,
    /// Inversions whose denominator hit the `EPS_DENOM · Δt_c` floor.
    pub denominator_floored: u64,
}

impl InversionDiagnostics {
    pub fn merge(&mut self, o: &InversionDiagnostics) {
        self.gain_degenerate += o.gain_degenerate;
        self.denominator_floored += o.denominator_floored;
    }
}

/// Target activation reaching `T*`, then the excitation that moves the
/// activation from `a` to it in one explicit step of `dt_control`.
pub fn control_inversion(
    t_star: f64,
    a: f64,
    gain: f64,
    bias: f64,
    spec: &MuscleSpec,
    dt_control: f64,
    diag: &mut InversionDiagnostics,
) -> f64 {
    let a_star = if gain < EPS_GAIN * spec.f_max {
        diag.gain_degenerate += 1;
        0.0
    } else {
        ((t_star - bias) / gain).clamp(0.0, 1.0)
    };
    let da = a_star - a;
    let mut denom = dt_control - spec.tau1 * da;
    let floor = EPS_DENOM * dt_control;
    if denom < floor {
        diag.denominator_floored += 1;
        denom = floor;
    }
    (a + spec.tau2 * da / denom).clamp(0.0, 1.0)
}

/// Controller output for one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: Vec<f64>,
    pub gains: Vec<f64>,
    pub target_tensions: Vec<f64>,
    pub diagnostics: InversionDiagnostics,
}

/// `π_MP(u | s, z*)` with no failed muscles.
pub fn act(model: &ModelSpec, state: &SimState, z_star: &TargetPosture, cfg: &GainConfig, dt_control: f64) -> ControlOutput {
    act_with(model, state, z_star, cfg, dt_control, &Perturbation::none())
}

/// `π_MP(u | s, z*)`; muscles failed at `state.time` get zero control.
pub fn act_with(
    model: &ModelSpec,
    state: &SimState,
    z_star: &TargetPosture,
    cfg: &GainConfig,
    dt_control: f64,
    perturbation: &Perturbation,
) -> ControlOutput {
    let geometry = muscle_geometry(model, &state.q, &state.qdot);
    act_with_geometry(model, state, &geometry, z_star, cfg, dt_control, perturbation)
}

/// [`act_with`] given the muscle geometry at `state`.
pub(crate) fn act_with_geometry(
    model: &ModelSpec,
    state: &SimState,
    geometry: &MuscleGeometry,
    z_star: &TargetPosture,
    cfg: &GainConfig,
    dt_control: f64,
    perturbation: &Perturbation,
) -> ControlOutput {
    let l_star = target_lengths(model, state, z_star);
    let z_now = extract_posture(model, state);
    let gains = morphology_gains(&geometry.moment_arms, &model.posture_mask, &z_star.z, &z_now.z, cfg);
    let mut target = p_force(&gains, &l_star, &geometry.lengths);
    if cfg.mode == GainMode::ProportionalDerivative {
        for (t, (k, v)) in target.iter_mut().zip(gains.iter().zip(&geometry.velocities)) {
            *t += cfg.damping_ratio * k * v.max(0.0);
        }
    }
    let failed = perturbation.failed_mask(state.time, model.nu());
    let mut diagnostics = InversionDiagnostics::default();
    let u = model
        .muscles
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            if failed[i] {
                return 0.0;
            }
            let f = muscle_force(spec, geometry.lengths[i], geometry.velocities[i], state.act[i]);
            control_inversion(target[i], state.act[i], f.gain, f.bias, spec, dt_control, &mut diagnostics)
        })
        .collect();
    ControlOutput {
        u,
        gains,
        target_tensions: target,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::activation_step;
    use crate::dynamics::Attachment;
    use nalgebra::Vector2;

    fn spec() -> MuscleSpec {
        MuscleSpec::new(
            "m",
            vec![
                Attachment {
                    body: None,
                    pos: Vector2::zeros(),
                },
                Attachment {
                    body: Some(0),
                    pos: Vector2::new(0.0, 1.0),
                },
            ],
            100.0,
            1.0,
        )
    }

    #[test]
    fn inversion_fixed_point() {
        let s = spec();
        let mut d = InversionDiagnostics::default();
        // a* = (T* - bias) / gain = 0.4
        let u = control_inversion(40.0 + 2.0, 0.4, 100.0, 2.0, &s, 0.004, &mut d);
        assert!((u - 0.4).abs() < 1e-15);
        assert_eq!(d, InversionDiagnostics::default());
    }

    #[test]
    fn inversion_lands_on_target() {
        let s = spec();
        let mut d = InversionDiagnostics::default();
        let (a, a_star, dt) = (0.3, 0.35, 0.004);
        let u = control_inversion(100.0 * a_star, a, 100.0, 0.0, &s, dt, &mut d);
        assert!(u > 0.0 && u < 1.0);
        assert!((activation_step(a, u, &s, dt) - a_star).abs() < 1e-12);
    }

    #[test]
    fn inversion_saturates() {
        let s = spec();
        let mut d = InversionDiagnostics::default();
        assert_eq!(control_inversion(1e6, 0.0, 100.0, 0.0, &s, 0.004, &mut d), 1.0);
        assert_eq!(control_inversion(0.0, 0.0, 1e-9, 0.0, &s, 0.004, &mut d), 0.0);
        assert_eq!(d.gain_degenerate, 1);
    }

    #[test]
    fn gains_direct_formula() {
        let jm = DMatrix::from_row_slice(1, 1, &[-0.05]);
        let cfg = GainConfig {
            k_bar: 100.0,
            k_min: 0.0,
            ..GainConfig::default()
        };
        let k = morphology_gains(&jm, &[0], &[0.1], &[0.0], &cfg);
        assert!((k[0] - 10.0 * 0.05).abs() < 1e-15);
        let k = morphology_gains(&jm, &[0], &[0.2], &[0.2], &GainConfig { k_min: 1.0, ..cfg });
        assert_eq!(k, vec![1.0]);
    }

    #[test]
    fn aggregation_modes_differ_on_opposing_joints() {
        let jm = DMatrix::from_row_slice(1, 2, &[0.05, 0.05]);
        let per = GainConfig {
            k_bar: 1.0,
            k_min: 0.0,
            ..GainConfig::default()
        };
        let sum = GainConfig {
            aggregation: GainAggregation::AbsOfSum,
            ..per.clone()
        };
        let z_star = [0.1, -0.1];
        assert!((morphology_gains(&jm, &[0, 1], &z_star, &[0.0, 0.0], &per)[0] - 0.01).abs() < 1e-15);
        assert_eq!(morphology_gains(&jm, &[0, 1], &z_star, &[0.0, 0.0], &sum)[0], 0.0);
    }

    #[test]
    fn p_force_is_pull_only() {
        assert_eq!(p_force(&[10.0], &[1.0], &[1.0]), vec![0.0]);
        assert_eq!(p_force(&[10.0], &[1.1], &[1.0]), vec![0.0]);
        assert!((p_force(&[10.0], &[1.0], &[1.02])[0] - 0.2).abs() < 1e-12);
    }
}
