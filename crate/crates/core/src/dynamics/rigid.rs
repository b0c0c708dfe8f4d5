//! Planar rigid-body dynamics in world-origin spatial coordinates.
//!
//! Motion vectors are `(ω, vx, vy)` with the linear part taken at the world
//! origin; force vectors are `(n, fx, fy)` with the moment about the origin.
//! Expressing every body in the same frame makes composite inertias plain
//! sums, which keeps the composite-rigid-body pass short.

use nalgebra::{DMatrix, DVector, Vector2};

use super::kinematics::BodyPoses;
use super::model::{JointKind, ModelSpec};

pub type Spatial = [f64; 3];

/// Planar spatial inertia about the world origin: mass, first moment `m·c`
/// and rotational inertia about the origin.
#[derive(Debug, Clone, Copy, Default)]
struct Inertia {
    mass: f64,
    moment: Vector2<f64>,
    rot: f64,
}

impl Inertia {
    fn of_body(mass: f64, inertia_com: f64, com: Vector2<f64>) -> Self {
        Inertia {
            mass,
            moment: mass * com,
            rot: inertia_com + mass * com.norm_squared(),
        }
    }

    fn add(&mut self, o: &Inertia) {
        self.mass += o.mass;
        self.moment += o.moment;
        self.rot += o.rot;
    }

    fn apply(&self, v: &Spatial) -> Spatial {
        let (hx, hy) = (self.moment.x, self.moment.y);
        [
            self.rot * v[0] - hy * v[1] + hx * v[2],
            -hy * v[0] + self.mass * v[1],
            hx * v[0] + self.mass * v[2],
        ]
    }
}

#[inline]
fn dot(a: &Spatial, b: &Spatial) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn add_scaled(a: &mut Spatial, b: &Spatial, s: f64) {
    a[0] += s * b[0];
    a[1] += s * b[1];
    a[2] += s * b[2];
}

/// Motion cross product `m1 × m2`.
#[inline]
fn cross_motion(m1: &Spatial, m2: &Spatial) -> Spatial {
    [0.0, -m1[0] * m2[2] + m2[0] * m1[2], m1[0] * m2[1] - m2[0] * m1[1]]
}

/// Force cross product `m ×* f`.
#[inline]
fn cross_force(m: &Spatial, f: &Spatial) -> Spatial {
    [m[1] * f[2] - m[2] * f[1], -m[0] * f[2], m[0] * f[1]]
}

/// Motion subspace column of every coordinate at the current posture.
fn motion_subspace(model: &ModelSpec, poses: &BodyPoses) -> Vec<Spatial> {
    let mut s = vec![[0.0; 3]; model.nq()];
    for (b, joint) in model.joints.iter().enumerate() {
        let p = poses.origin[b];
        let rot = [joint.axis_sign, joint.axis_sign * p.y, -joint.axis_sign * p.x];
        match joint.kind {
            JointKind::Revolute => s[joint.first_dof] = rot,
            JointKind::PlanarFree => {
                s[joint.first_dof] = [0.0, 1.0, 0.0];
                s[joint.first_dof + 1] = [0.0, 0.0, 1.0];
                s[joint.first_dof + 2] = rot;
            }
        }
    }
    s
}

fn body_inertias(model: &ModelSpec, poses: &BodyPoses) -> Vec<Inertia> {
    model
        .links
        .iter()
        .enumerate()
        .map(|(b, l)| Inertia::of_body(l.mass, l.inertia, poses.com(model, b)))
        .collect()
}

/// Joint-space inertia matrix by composite-rigid-body accumulation.
pub fn mass_matrix(model: &ModelSpec, poses: &BodyPoses) -> DMatrix<f64> {
    let nq = model.nq();
    let s = motion_subspace(model, poses);
    let mut composite = body_inertias(model, poses);
    for b in (0..model.nbodies()).rev() {
        if let Some(p) = model.joints[b].parent {
            let c = composite[b];
            composite[p].add(&c);
        }
    }
    let mut m = DMatrix::zeros(nq, nq);
    for j in 0..nq {
        let b = model.dof_body(j);
        let f = composite[b].apply(&s[j]);
        for &k in model.chain(b) {
            for i in model.joint_dofs(k) {
                let v = dot(&s[i], &f);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

/// Coriolis, centrifugal and gravity forces by recursive Newton-Euler with
/// zero joint acceleration. Joint damping is not included.
pub fn bias_forces(model: &ModelSpec, poses: &BodyPoses, qdot: &[f64]) -> DVector<f64> {
    let nb = model.nbodies();
    let s = motion_subspace(model, poses);
    let inertias = body_inertias(model, poses);
    let gravity_accel: Spatial = [0.0, 0.0, model.gravity];
    let mut vel = vec![[0.0; 3]; nb];
    let mut acc = vec![[0.0; 3]; nb];
    let mut force = vec![[0.0; 3]; nb];
    for b in 0..nb {
        let (mut v, mut a) = match model.joints[b].parent {
            None => ([0.0; 3], gravity_accel),
            Some(p) => (vel[p], acc[p]),
        };
        for d in model.joint_dofs(b) {
            let sdot = cross_motion(&v, &s[d]);
            add_scaled(&mut a, &sdot, qdot[d]);
            add_scaled(&mut v, &s[d], qdot[d]);
        }
        let iv = inertias[b].apply(&v);
        let mut f = inertias[b].apply(&a);
        let gyro = cross_force(&v, &iv);
        add_scaled(&mut f, &gyro, 1.0);
        vel[b] = v;
        acc[b] = a;
        force[b] = f;
    }
    let mut tau = DVector::zeros(model.nq());
    for b in (0..nb).rev() {
        for d in model.joint_dofs(b) {
            tau[d] = dot(&s[d], &force[b]);
        }
        if let Some(p) = model.joints[b].parent {
            let f = force[b];
            add_scaled(&mut force[p], &f, 1.0);
        }
    }
    tau
}

/// Kinetic and gravitational potential energy.
pub fn mechanical_energy(model: &ModelSpec, q: &[f64], qdot: &[f64]) -> (f64, f64) {
    let poses = BodyPoses::compute(model, q, qdot);
    let m = mass_matrix(model, &poses);
    let v = DVector::from_column_slice(qdot);
    let kinetic = 0.5 * v.dot(&(&m * &v));
    let potential = model
        .links
        .iter()
        .enumerate()
        .map(|(b, l)| l.mass * model.gravity * poses.com(model, b).y)
        .sum();
    (kinetic, potential)
}
