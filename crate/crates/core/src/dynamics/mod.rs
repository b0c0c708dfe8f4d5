//! Planar musculoskeletal dynamics: rigid-body tree, Hill-type muscles,
//! penalty contact and scheduled perturbations.
//!
//! All functions are pure in `(model, state, controls, perturbation, dt)`;
//! models are immutable after loading and can be shared across threads.

mod contact;
mod geometry;
mod kinematics;
mod model;
mod muscle;
mod perturbation;
mod rigid;
mod step;
mod terrain;

pub use contact::{contact_forces, in_contact};
pub use geometry::{muscle_geometry, muscle_lengths, MuscleGeometry};
pub use kinematics::{angle_jacobian, center_of_mass, frame_kinematics, frame_state, point_jacobian, BodyPoses, FrameState};
pub use model::{
    ActivationModel, Attachment, ContactParams, Frame, Joint, JointKind, Link, ModelSpec, MuscleSpec,
    DEFAULT_TAU_ACT, DEFAULT_TAU_DEACT, FORMAT_VERSION, LIMIT_STIFFNESS, RESERVED_FRAMES,
};
pub use muscle::{
    activation_rate, activation_step, activation_step_with, force_length, force_passive, force_velocity,
    muscle_force, MuscleForce,
};
pub use perturbation::{ActuatorFailure, ExternalWrench, Perturbation};
pub use rigid::{bias_forces, mass_matrix, mechanical_energy};
pub(crate) use step::{forward_step_at, PoseGeometry};
pub use step::{compute_dynamics_terms, forward_dynamics, forward_step, DynamicsTerms, ForwardDynamics, SimState};
pub use terrain::{Terrain, TerrainDoc};

/// Parse and validate a model description document.
pub fn load_model(spec_text: &str) -> crate::Result<ModelSpec> {
    ModelSpec::from_toml_str(spec_text)
}
