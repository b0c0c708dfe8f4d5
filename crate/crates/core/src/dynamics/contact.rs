//! Penalty ground contact between contact frames and the terrain profile.

use nalgebra::{DVector, Vector2};

use super::kinematics::{point_jacobian, BodyPoses};
use super::model::ModelSpec;

/// Generalized contact forces `J_cᵀ f_c` summed over all penetrating frames.
pub fn contact_forces(model: &ModelSpec, poses: &BodyPoses) -> DVector<f64> {
    let nq = model.nq();
    let mut out = DVector::zeros(nq);
    let mut jac = vec![Vector2::zeros(); nq];
    let params = &model.contact;
    for frame in model.contact_frames() {
        let p = poses.point(frame.body, &frame.pos);
        let [nx, ny] = model.terrain.normal(p.x);
        let depth = (model.terrain.height(p.x) - p.y) * ny;
        if depth <= 0.0 {
            continue;
        }
        let normal = Vector2::new(nx, ny);
        let tangent = Vector2::new(ny, -nx);
        let v = poses.point_velocity(frame.body, &p);
        let vn = v.dot(&normal);
        let fn_ = params.stiffness * depth + params.damping * (-vn).max(0.0);
        let limit = params.friction * fn_;
        let ft = (-params.tangential_damping * v.dot(&tangent)).clamp(-limit, limit);
        let f = normal * fn_ + tangent * ft;
        point_jacobian(model, poses, Some(frame.body), &p, &mut jac);
        for d in 0..nq {
            out[d] += jac[d].dot(&f);
        }
    }
    out
}

/// Whether any contact frame currently penetrates the terrain.
pub fn in_contact(model: &ModelSpec, poses: &BodyPoses) -> bool {
    model.contact_frames().any(|f| {
        let p = poses.point(f.body, &f.pos);
        p.y < model.terrain.height(p.x)
    })
}
