//! Muscle path lengths, velocities and moment arms.

use nalgebra::{DMatrix, Vector2};

use super::kinematics::{perp, BodyPoses};
use super::model::{Attachment, JointKind, ModelSpec};

/// Muscle lengths `l`, velocities `l̇` and moment arms `J_m = ∂l/∂q` (`nu × nq`).
#[derive(Debug, Clone)]
pub struct MuscleGeometry {
    pub lengths: Vec<f64>,
    pub velocities: Vec<f64>,
    pub moment_arms: DMatrix<f64>,
}

pub(crate) fn path_length(poses: &BodyPoses, via: &[Attachment]) -> f64 {
    via.windows(2)
        .map(|w| (poses.attachment(&w[1]) - poses.attachment(&w[0])).norm())
        .sum()
}

/// Polyline lengths through every muscle's via points, without derivatives.
pub fn muscle_lengths(model: &ModelSpec, q: &[f64]) -> Vec<f64> {
    let poses = BodyPoses::compute(model, q, &vec![0.0; model.nq()]);
    model
        .muscles
        .iter()
        .map(|m| path_length(&poses, &m.via_points))
        .collect()
}

pub fn muscle_geometry(model: &ModelSpec, q: &[f64], qdot: &[f64]) -> MuscleGeometry {
    let poses = BodyPoses::compute(model, q, qdot);
    muscle_geometry_at(model, &poses, qdot)
}

pub(crate) fn muscle_geometry_at(model: &ModelSpec, poses: &BodyPoses, qdot: &[f64]) -> MuscleGeometry {
    let nq = model.nq();
    let nu = model.nu();
    let mut lengths = Vec::with_capacity(nu);
    let mut velocities = Vec::with_capacity(nu);
    let mut moment_arms = DMatrix::zeros(nu, nq);
    let mut row = vec![0.0; nq];

    for (i, muscle) in model.muscles.iter().enumerate() {
        row.fill(0.0);
        let mut length = 0.0;
        let mut prev = poses.attachment(&muscle.via_points[0]);
        for w in muscle.via_points.windows(2) {
            let next = poses.attachment(&w[1]);
            let seg = next - prev;
            let len = seg.norm();
            length += len;
            let dir = seg / len;
            // Joints shared by both ends move the segment rigidly and add nothing.
            let shared = shared_prefix(model, w[0].body, w[1].body);
            add_projected_jacobian(model, poses, w[1].body, shared, &next, &dir, &mut row);
            add_projected_jacobian(model, poses, w[0].body, shared, &prev, &(-dir), &mut row);
            prev = next;
        }
        lengths.push(length);
        velocities.push(row.iter().zip(qdot).map(|(j, v)| j * v).sum());
        for (d, j) in row.iter().enumerate() {
            moment_arms[(i, d)] = *j;
        }
    }
    MuscleGeometry {
        lengths,
        velocities,
        moment_arms,
    }
}

fn shared_prefix(model: &ModelSpec, a: Option<usize>, b: Option<usize>) -> usize {
    match (a, b) {
        (Some(a), Some(b)) => model.chain(a).iter().zip(model.chain(b)).take_while(|(x, y)| x == y).count(),
        _ => 0,
    }
}

/// `row += dirᵀ ∂p/∂q` for the world point `p` fixed to `body`, skipping
/// the first `skip` joints of its chain.
fn add_projected_jacobian(
    model: &ModelSpec,
    poses: &BodyPoses,
    body: Option<usize>,
    skip: usize,
    p: &Vector2<f64>,
    dir: &Vector2<f64>,
    row: &mut [f64],
) {
    let Some(body) = body else { return };
    for &b in &model.chain(body)[skip..] {
        let joint = &model.joints[b];
        let d = joint.first_dof;
        let lever = perp(p - poses.origin[b]) * joint.axis_sign;
        match joint.kind {
            JointKind::Revolute => row[d] += dir.dot(&lever),
            JointKind::PlanarFree => {
                row[d] += dir.x;
                row[d + 1] += dir.y;
                row[d + 2] += dir.dot(&lever);
            }
        }
    }
}
