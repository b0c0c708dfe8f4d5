//! Hill-type muscle force curves and first-order activation dynamics.
//!
//! Forces are reported as tension `T ≥ 0` (pulling). The signed actuator force
//! of the equations of motion is `-T`, so the generalized muscle torque is
//! `-J_mᵀ T`.

use super::model::{ActivationModel, MuscleSpec};

/// Active force-length curve, normalized so `FL(1) = 1`.
pub fn force_length(l_norm: f64) -> f64 {
    let d = l_norm - 1.0;
    (-d * d / 0.45).exp()
}

/// Passive force-length curve: zero at or below optimal length, exponential
/// beyond, capped at 1.5.
pub fn force_passive(l_norm: f64) -> f64 {
    if l_norm <= 1.0 {
        return 0.0;
    }
    let e5 = 5.0f64.exp() - 1.0;
    (0.15 * ((10.0 * (l_norm - 1.0)).exp() - 1.0) / e5).min(1.5)
}

/// Force-velocity curve; positive normalized velocity means lengthening.
pub fn force_velocity(v_norm: f64) -> f64 {
    (1.0 + v_norm).clamp(0.0, 1.5)
}

/// Muscle tension and its affine decomposition `T = gain·a + bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleForce {
    pub tension: f64,
    pub gain: f64,
    pub bias: f64,
}

pub fn muscle_force(spec: &MuscleSpec, length: f64, velocity: f64, activation: f64) -> MuscleForce {
    let l_norm = length / spec.l_opt;
    let v_norm = velocity / spec.v_max;
    let gain = spec.f_max * force_length(l_norm) * force_velocity(v_norm);
    let bias = spec.f_max * force_passive(l_norm);
    MuscleForce {
        tension: gain * activation + bias,
        gain,
        bias,
    }
}

/// Quintic smoothstep on `[0, 1]`.
fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// Width of the `u - a` band over which the smoothed model blends from the
/// deactivation to the activation time constant.
pub const SMOOTHING_WIDTH: f64 = 0.1;

/// Time derivative of activation.
pub fn activation_rate(spec: &MuscleSpec, model: ActivationModel, activation: f64, control: f64) -> f64 {
    let du = control - activation;
    match model {
        ActivationModel::FirstOrder => du / (du * spec.tau1 + spec.tau2),
        ActivationModel::Smoothed => {
            let a = activation.clamp(0.0, 1.0);
            let t_act = spec.tau_act * (0.5 + 1.5 * a);
            let t_deact = spec.tau_deact / (0.5 + 1.5 * a);
            let blend = smoothstep(0.5 * (du / SMOOTHING_WIDTH + 1.0));
            du / (t_deact + (t_act - t_deact) * blend)
        }
    }
}

/// One explicit-Euler activation step, clamped to `[0, 1]`.
pub fn activation_step(activation: f64, control: f64, spec: &MuscleSpec, dt: f64) -> f64 {
    activation_step_with(ActivationModel::FirstOrder, activation, control, spec, dt)
}

pub fn activation_step_with(model: ActivationModel, activation: f64, control: f64, spec: &MuscleSpec, dt: f64) -> f64 {
    (activation + dt * activation_rate(spec, model, activation, control)).clamp(0.0, 1.0)
}
