//! Simulation state and the semi-implicit Euler stepper.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::contact::contact_forces;
use super::geometry::{muscle_geometry_at, MuscleGeometry};
use super::kinematics::{angle_jacobian, point_jacobian, BodyPoses};
use super::model::{ModelSpec, LIMIT_STIFFNESS};
use super::muscle::{activation_step_with, muscle_force};
use super::perturbation::Perturbation;
use super::rigid::{bias_forces, mass_matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub act: Vec<f64>,
    pub time: f64,
}

impl SimState {
    /// Reference posture at rest with all muscles relaxed.
    pub fn rest(model: &ModelSpec) -> Self {
        SimState {
            q: model.reference_q.clone(),
            qdot: vec![0.0; model.nq()],
            act: vec![0.0; model.nu()],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).chain(&self.act).all(|v| v.is_finite()) && self.time.is_finite()
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let check = |what, got: usize, expected| {
            if got == expected {
                Ok(())
            } else {
                Err(Error::Dimension { what, expected, got })
            }
        };
        check("q", self.q.len(), model.nq())?;
        check("qdot", self.qdot.len(), model.nq())?;
        check("act", self.act.len(), model.nu())
    }
}

/// Mass matrix, bias and generalized external forces at one state.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub mass_matrix: DMatrix<f64>,
    /// Coriolis + gravity + joint damping.
    pub bias: DVector<f64>,
    /// Penalty contact forces mapped to generalized coordinates.
    pub contact_force: DVector<f64>,
    /// Scheduled external wrenches mapped to generalized coordinates.
    pub external_force: DVector<f64>,
    /// One-sided joint-limit penalty torques.
    pub limit_force: DVector<f64>,
}

pub fn compute_dynamics_terms(
    model: &ModelSpec,
    q: &[f64],
    qdot: &[f64],
    perturbation: &Perturbation,
    t: f64,
) -> DynamicsTerms {
    let poses = BodyPoses::compute(model, q, qdot);
    dynamics_terms_at(model, &poses, q, qdot, perturbation, t)
}

fn dynamics_terms_at(
    model: &ModelSpec,
    poses: &BodyPoses,
    q: &[f64],
    qdot: &[f64],
    perturbation: &Perturbation,
    t: f64,
) -> DynamicsTerms {
    let nq = model.nq();
    let mut bias = bias_forces(model, poses, qdot);
    for joint in &model.joints {
        for d in joint.first_dof..joint.first_dof + joint.kind.dofs() {
            bias[d] += joint.damping * qdot[d];
        }
    }

    let mut external_force = DVector::zeros(nq);
    let mut jac = vec![Vector2::zeros(); nq];
    let mut ang = vec![0.0; nq];
    for w in perturbation.active_wrenches(t) {
        let c = poses.com(model, w.body);
        point_jacobian(model, poses, Some(w.body), &c, &mut jac);
        angle_jacobian(model, w.body, &mut ang);
        for d in 0..nq {
            external_force[d] += jac[d].dot(&w.force) + ang[d] * w.torque;
        }
    }

    let limit_force = DVector::from_iterator(
        nq,
        (0..nq).map(|d| {
            let (lo, hi) = (model.q_lower()[d], model.q_upper()[d]);
            if q[d] > hi {
                -LIMIT_STIFFNESS * (q[d] - hi).powi(2)
            } else if q[d] < lo {
                LIMIT_STIFFNESS * (lo - q[d]).powi(2)
            } else {
                0.0
            }
        }),
    );

    DynamicsTerms {
        mass_matrix: mass_matrix(model, poses),
        bias,
        contact_force: contact_forces(model, poses),
        external_force,
        limit_force,
    }
}

/// Everything computed on the way to `q̈` for one state and activation vector.
#[derive(Debug, Clone)]
pub struct ForwardDynamics {
    pub qddot: DVector<f64>,
    pub tensions: Vec<f64>,
    pub geometry: MuscleGeometry,
    pub terms: DynamicsTerms,
}

/// `q̈ = M⁻¹(-J_mᵀT - c + f_c + τ_ext + τ_limit)` with tensions from
/// `state.act`; failed muscles produce no tension.
pub fn forward_dynamics(model: &ModelSpec, state: &SimState, perturbation: &Perturbation) -> Result<ForwardDynamics> {
    forward_dynamics_at(model, state, PoseGeometry::compute(model, &state.q, &state.qdot), perturbation)
}

/// Body poses and muscle geometry of one `(q, q̇)`, computed once and shared
/// by the controller and the step taken from that configuration.
#[derive(Debug, Clone)]
pub(crate) struct PoseGeometry {
    pub poses: BodyPoses,
    pub geometry: MuscleGeometry,
}

impl PoseGeometry {
    pub fn compute(model: &ModelSpec, q: &[f64], qdot: &[f64]) -> Self {
        let poses = BodyPoses::compute(model, q, qdot);
        let geometry = muscle_geometry_at(model, &poses, qdot);
        PoseGeometry { poses, geometry }
    }
}

fn forward_dynamics_at(
    model: &ModelSpec,
    state: &SimState,
    at: PoseGeometry,
    perturbation: &Perturbation,
) -> Result<ForwardDynamics> {
    let PoseGeometry { poses, geometry } = at;
    let failed = perturbation.failed_mask(state.time, model.nu());
    let tensions: Vec<f64> = model
        .muscles
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if failed[i] {
                0.0
            } else {
                muscle_force(m, geometry.lengths[i], geometry.velocities[i], state.act[i]).tension
            }
        })
        .collect();
    let terms = dynamics_terms_at(model, &poses, &state.q, &state.qdot, perturbation, state.time);
    let t = DVector::from_column_slice(&tensions);
    let rhs = -(geometry.moment_arms.transpose() * t) - &terms.bias
        + &terms.contact_force
        + &terms.external_force
        + &terms.limit_force;
    let chol = terms.mass_matrix.clone().cholesky().ok_or_else(|| diverged(state, 0.0))?;
    let qddot = chol.solve(&rhs);
    Ok(ForwardDynamics {
        qddot,
        tensions,
        geometry,
        terms,
    })
}

fn diverged(state: &SimState, dt: f64) -> Error {
    let step = if dt > 0.0 { (state.time / dt).round() as u64 } else { 0 };
    Error::Diverged {
        step,
        time: state.time,
    }
}

/// Advance one step of `dt`: activations first, then tensions from the new
/// activations, then semi-implicit Euler on `(q, q̇)` with limit clamping.
pub fn forward_step(
    model: &ModelSpec,
    state: &SimState,
    u: &[f64],
    perturbation: &Perturbation,
    dt: f64,
) -> Result<SimState> {
    forward_step_at(model, state, None, u, perturbation, dt)
}

/// [`forward_step`] reusing `at`, which must belong to `(state.q, state.qdot)`.
pub(crate) fn forward_step_at(
    model: &ModelSpec,
    state: &SimState,
    at: Option<PoseGeometry>,
    u: &[f64],
    perturbation: &Perturbation,
    dt: f64,
) -> Result<SimState> {
    if u.len() != model.nu() {
        return Err(Error::Dimension {
            what: "controls",
            expected: model.nu(),
            got: u.len(),
        });
    }
    let failed = perturbation.failed_mask(state.time, model.nu());
    let act: Vec<f64> = model
        .muscles
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let ui = if failed[i] || !u[i].is_finite() { 0.0 } else { u[i].clamp(0.0, 1.0) };
            activation_step_with(model.activation_model, state.act[i], ui, m, dt)
        })
        .collect();
    let mid = SimState {
        q: state.q.clone(),
        qdot: state.qdot.clone(),
        act,
        time: state.time,
    };
    let at = at.unwrap_or_else(|| PoseGeometry::compute(model, &mid.q, &mid.qdot));
    let fd = forward_dynamics_at(model, &mid, at, perturbation).map_err(|_| diverged(state, dt))?;

    let mut next = mid;
    let mut hit = Vec::new();
    for d in 0..model.nq() {
        next.qdot[d] += fd.qddot[d] * dt;
        next.q[d] += next.qdot[d] * dt;
        let (lo, hi) = (model.q_lower()[d], model.q_upper()[d]);
        if next.q[d] > hi {
            next.q[d] = hi;
            hit.push((d, 1.0));
        } else if next.q[d] < lo {
            next.q[d] = lo;
            hit.push((d, -1.0));
        }
    }
    if !hit.is_empty() {
        stop_at_limits(&fd.terms.mass_matrix, &hit, &mut next.qdot);
    }
    next.time = state.time + dt;
    if !next.is_finite() {
        return Err(diverged(&next, dt));
    }
    Ok(next)
}

/// Remove the outward velocity of joints sitting on a limit with an
/// inelastic generalized impulse `Δq̇ = M⁻¹ e_d λ`. Zeroing the component
/// directly could add kinetic energy through the inertial coupling.
fn stop_at_limits(mass_matrix: &DMatrix<f64>, hit: &[(usize, f64)], qdot: &mut [f64]) {
    let Some(chol) = mass_matrix.clone().cholesky() else {
        for &(d, side) in hit {
            if qdot[d] * side > 0.0 {
                qdot[d] = 0.0;
            }
        }
        return;
    };
    let n = qdot.len();
    let columns: Vec<DVector<f64>> = hit
        .iter()
        .map(|&(d, _)| {
            let mut e = DVector::zeros(n);
            e[d] = 1.0;
            chol.solve(&e)
        })
        .collect();
    for _ in 0..3 {
        for (&(d, side), col) in hit.iter().zip(&columns) {
            if qdot[d] * side > 0.0 {
                let scale = qdot[d] / col[d];
                for (v, c) in qdot.iter_mut().zip(col.iter()) {
                    *v -= scale * c;
                }
                qdot[d] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn shared_geometry_step_matches_plain_step() {
        let model = bundled::model("biped").unwrap();
        let mut state = SimState::rest(&model);
        state.q = model.grounded(&state.q);
        state.qdot.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * (i as f64).sin());
        let u: Vec<f64> = (0..model.nu()).map(|i| (i % 3) as f64 / 3.0).collect();
        let none = Perturbation::none();
        let at = PoseGeometry::compute(&model, &state.q, &state.qdot);
        let shared = forward_step_at(&model, &state, Some(at), &u, &none, 0.002).unwrap();
        assert_eq!(shared, forward_step(&model, &state, &u, &none, 0.002).unwrap());
    }
}
