//! Forward kinematics, point Jacobians and named-frame queries.

use nalgebra::Vector2;

use super::model::{Attachment, JointKind, ModelSpec};
use crate::error::{Error, Result};

/// `ẑ × v` for an in-plane vector.
#[inline]
pub fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

#[inline]
pub fn rotate(angle: f64, v: &Vector2<f64>) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// World pose and velocity of every body origin at one `(q, q̇)`.
#[derive(Debug, Clone)]
pub struct BodyPoses {
    pub origin: Vec<Vector2<f64>>,
    pub angle: Vec<f64>,
    pub velocity: Vec<Vector2<f64>>,
    pub omega: Vec<f64>,
    /// `(sin, cos)` of each body angle.
    pub sin_cos: Vec<(f64, f64)>,
}

impl BodyPoses {
    pub fn compute(model: &ModelSpec, q: &[f64], qdot: &[f64]) -> Self {
        let nb = model.nbodies();
        let mut origin = Vec::with_capacity(nb);
        let mut angle = Vec::with_capacity(nb);
        let mut velocity = Vec::with_capacity(nb);
        let mut omega = Vec::with_capacity(nb);
        let mut sin_cos: Vec<(f64, f64)> = Vec::with_capacity(nb);
        for joint in &model.joints {
            let d = joint.first_dof;
            match joint.kind {
                JointKind::PlanarFree => {
                    origin.push(joint.anchor + Vector2::new(q[d], q[d + 1]));
                    angle.push(joint.offset + joint.axis_sign * q[d + 2]);
                    sin_cos.push(angle[angle.len() - 1].sin_cos());
                    velocity.push(Vector2::new(qdot[d], qdot[d + 1]));
                    omega.push(joint.axis_sign * qdot[d + 2]);
                }
                JointKind::Revolute => {
                    let (p, th, (s, c), v, w) = match joint.parent {
                        None => (Vector2::zeros(), 0.0, (0.0, 1.0), Vector2::zeros(), 0.0),
                        Some(pb) => (origin[pb], angle[pb], sin_cos[pb], velocity[pb], omega[pb]),
                    };
                    let a = joint.anchor;
                    let r = Vector2::new(c * a.x - s * a.y, s * a.x + c * a.y);
                    origin.push(p + r);
                    angle.push(th + joint.offset + joint.axis_sign * q[d]);
                    sin_cos.push(angle[angle.len() - 1].sin_cos());
                    velocity.push(v + w * perp(r));
                    omega.push(w + joint.axis_sign * qdot[d]);
                }
            }
        }
        BodyPoses {
            origin,
            angle,
            velocity,
            omega,
            sin_cos,
        }
    }

    /// World position of a body-local point.
    #[inline]
    pub fn point(&self, body: usize, local: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.sin_cos[body];
        self.origin[body] + Vector2::new(c * local.x - s * local.y, s * local.x + c * local.y)
    }

    #[inline]
    pub fn attachment(&self, a: &Attachment) -> Vector2<f64> {
        match a.body {
            Some(b) => self.point(b, &a.pos),
            None => a.pos,
        }
    }

    /// World velocity of the material point currently at `world` on `body`.
    #[inline]
    pub fn point_velocity(&self, body: usize, world: &Vector2<f64>) -> Vector2<f64> {
        self.velocity[body] + self.omega[body] * perp(world - self.origin[body])
    }

    pub fn com(&self, model: &ModelSpec, body: usize) -> Vector2<f64> {
        self.point(body, &model.links[body].com)
    }
}

/// Fill `out` (length `nq`) with `∂p/∂q` for the world point `world` fixed to `body`.
pub fn point_jacobian(
    model: &ModelSpec,
    poses: &BodyPoses,
    body: Option<usize>,
    world: &Vector2<f64>,
    out: &mut [Vector2<f64>],
) {
    out.iter_mut().for_each(|c| *c = Vector2::zeros());
    let Some(body) = body else { return };
    for &b in model.chain(body) {
        let joint = &model.joints[b];
        let d = joint.first_dof;
        let lever = perp(world - poses.origin[b]) * joint.axis_sign;
        match joint.kind {
            JointKind::Revolute => out[d] = lever,
            JointKind::PlanarFree => {
                out[d] = Vector2::new(1.0, 0.0);
                out[d + 1] = Vector2::new(0.0, 1.0);
                out[d + 2] = lever;
            }
        }
    }
}

/// `∂θ_body/∂q` for the world angle of `body`.
pub fn angle_jacobian(model: &ModelSpec, body: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|c| *c = 0.0);
    for &b in model.chain(body) {
        let joint = &model.joints[b];
        let rot = match joint.kind {
            JointKind::Revolute => joint.first_dof,
            JointKind::PlanarFree => joint.first_dof + 2,
        };
        out[rot] = joint.axis_sign;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    /// Unit up vector of the frame in world coordinates.
    pub up: Vector2<f64>,
}

/// Whole-body center of mass and its velocity.
pub fn center_of_mass(model: &ModelSpec, poses: &BodyPoses) -> (Vector2<f64>, Vector2<f64>) {
    let mut p = Vector2::zeros();
    let mut v = Vector2::zeros();
    let mut m = 0.0;
    for (b, link) in model.links.iter().enumerate() {
        let c = poses.com(model, b);
        p += link.mass * c;
        v += link.mass * poses.point_velocity(b, &c);
        m += link.mass;
    }
    (p / m, v / m)
}

pub fn frame_state(model: &ModelSpec, poses: &BodyPoses, frame: usize) -> FrameState {
    let f = &model.frames[frame];
    let position = poses.point(f.body, &f.pos);
    FrameState {
        position,
        velocity: poses.point_velocity(f.body, &position),
        up: rotate(poses.angle[f.body] + f.angle, &Vector2::new(0.0, 1.0)),
    }
}

/// World pose and velocity of a named frame; `"com"` gives the whole-body
/// center of mass with the world up vector.
pub fn frame_kinematics(model: &ModelSpec, q: &[f64], qdot: &[f64], frame_name: &str) -> Result<FrameState> {
    if q.len() != model.nq() {
        return Err(Error::Dimension {
            what: "q",
            expected: model.nq(),
            got: q.len(),
        });
    }
    if qdot.len() != model.nq() {
        return Err(Error::Dimension {
            what: "qdot",
            expected: model.nq(),
            got: qdot.len(),
        });
    }
    let poses = BodyPoses::compute(model, q, qdot);
    if frame_name == "com" {
        let (position, velocity) = center_of_mass(model, &poses);
        return Ok(FrameState {
            position,
            velocity,
            up: Vector2::new(0.0, 1.0),
        });
    }
    let id = model
        .frame_id(frame_name)
        .ok_or_else(|| Error::UnknownFrame(frame_name.to_string()))?;
    Ok(frame_state(model, &poses, id))
}
