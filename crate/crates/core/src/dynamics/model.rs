//! Model description documents and the validated [`ModelSpec`].
//!
//! A model is a planar tree of rigid links. Every link is attached to its
//! parent (or to the world) by exactly one joint, and the joint order in the
//! document fixes the layout of the generalized coordinates `q`. Links are
//! stored internally in joint order, so "body `i`" always means the link
//! moved by joint `i`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::Vector2;
use serde::Deserialize;

use super::terrain::{Terrain, TerrainDoc};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Frame names with a fixed meaning for cost terms.
pub const RESERVED_FRAMES: [&str; 5] = ["head", "pelvis", "foot_left", "foot_right", "com"];

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub mass: f64,
    /// Rotational inertia about the center of mass (kg·m²).
    pub inertia: f64,
    pub length: f64,
    /// Center of mass in link-local coordinates. The link extends along local +y.
    pub com: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    /// Three coordinates (x, y, rotation) relative to the world. Root only.
    PlanarFree,
}

impl JointKind {
    pub fn dofs(self) -> usize {
        match self {
            JointKind::Revolute => 1,
            JointKind::PlanarFree => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Parent body, `None` for the world.
    pub parent: Option<usize>,
    /// Joint location in parent-local coordinates (world coordinates for a root).
    pub anchor: Vector2<f64>,
    /// Rotation of the child frame relative to the parent at `q = 0`.
    pub offset: f64,
    pub axis_sign: f64,
    /// One `(lower, upper)` pair per coordinate.
    pub limits: Vec<(f64, f64)>,
    pub damping: f64,
    /// Index of this joint's first coordinate in `q`.
    pub first_dof: usize,
}

/// A point fixed to a body, or to the world when `body` is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub body: Option<usize>,
    pub pos: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuscleSpec {
    pub name: String,
    pub via_points: Vec<Attachment>,
    pub f_max: f64,
    pub l_opt: f64,
    pub v_max: f64,
    pub tau_act: f64,
    pub tau_deact: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub groups: Vec<String>,
}

impl MuscleSpec {
    /// Muscle with the default activation time constants mapped onto `(tau1, tau2)`.
    pub fn new(name: impl Into<String>, via_points: Vec<Attachment>, f_max: f64, l_opt: f64) -> Self {
        let (tau_act, tau_deact) = (DEFAULT_TAU_ACT, DEFAULT_TAU_DEACT);
        MuscleSpec {
            name: name.into(),
            via_points,
            f_max,
            l_opt,
            v_max: 10.0 * l_opt,
            tau_act,
            tau_deact,
            tau1: tau_act - tau_deact,
            tau2: tau_deact,
            groups: Vec::new(),
        }
    }
}

pub const DEFAULT_TAU_ACT: f64 = 0.010;
pub const DEFAULT_TAU_DEACT: f64 = 0.040;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub body: usize,
    pub pos: Vector2<f64>,
    /// Rotation of the frame's up vector relative to the body's local +y.
    pub angle: f64,
    /// Participates in penalty ground contact.
    pub contact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    /// Viscous tangential coefficient, saturated by the friction cone.
    pub tangential_damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 2e4,
            damping: 200.0,
            friction: 1.0,
            tangential_damping: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationModel {
    /// `da/dt = (u - a) / ((u - a) tau1 + tau2)`; exactly invertible per step.
    #[default]
    FirstOrder,
    /// Activation-dependent time constant with a smooth switch between
    /// activation and deactivation.
    Smoothed,
}

/// Joint-limit penalty stiffness (N·m/rad²), applied quadratically beyond a limit.
pub const LIMIT_STIFFNESS: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub muscles: Vec<MuscleSpec>,
    pub frames: Vec<Frame>,
    pub posture_mask: Vec<usize>,
    pub gravity: f64,
    pub terrain: Terrain,
    pub contact: ContactParams,
    pub activation_model: ActivationModel,
    /// Reference posture, used for `l_opt` defaults and as the initial state.
    pub reference_q: Vec<f64>,
    nq: usize,
    dof_body: Vec<usize>,
    chains: Vec<Vec<usize>>,
    q_lower: Vec<f64>,
    q_upper: Vec<f64>,
    frame_index: HashMap<String, usize>,
}

impl ModelSpec {
    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn nu(&self) -> usize {
        self.muscles.len()
    }

    pub fn nz(&self) -> usize {
        self.posture_mask.len()
    }

    pub fn nbodies(&self) -> usize {
        self.links.len()
    }

    /// Body that owns coordinate `dof`.
    pub fn dof_body(&self, dof: usize) -> usize {
        self.dof_body[dof]
    }

    /// Bodies from the root down to `body`, inclusive.
    pub fn chain(&self, body: usize) -> &[usize] {
        &self.chains[body]
    }

    pub fn q_lower(&self) -> &[f64] {
        &self.q_lower
    }

    pub fn q_upper(&self) -> &[f64] {
        &self.q_upper
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn frame(&self, name: &str) -> Option<&Frame> {
        self.frame_index.get(name).map(|&i| &self.frames[i])
    }

    pub fn frame_id(&self, name: &str) -> Option<usize> {
        self.frame_index.get(name).copied()
    }

    pub fn has_feet(&self) -> bool {
        self.frame_index.contains_key("foot_left") && self.frame_index.contains_key("foot_right")
    }

    pub fn joint_by_name(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn body_by_name(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn muscle_by_name(&self, name: &str) -> Option<usize> {
        self.muscles.iter().position(|m| m.name == name)
    }

    /// Indices of muscles tagged with `group`, in model order.
    pub fn muscle_group(&self, group: &str) -> Vec<usize> {
        self.muscles
            .iter()
            .enumerate()
            .filter(|(_, m)| m.groups.iter().any(|g| g == group))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn contact_frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(|f| f.contact)
    }

    /// Clamp every coordinate of `q` into its joint limits.
    pub fn clamp_q(&self, q: &mut [f64]) {
        for (i, v) in q.iter_mut().enumerate() {
            *v = v.clamp(self.q_lower[i], self.q_upper[i]);
        }
    }

    /// Coordinate range `[start, end)` of joint `j`.
    pub fn joint_dofs(&self, j: usize) -> std::ops::Range<usize> {
        let joint = &self.joints[j];
        joint.first_dof..joint.first_dof + joint.kind.dofs()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_named("<model>", text)
    }

    pub fn from_toml_named(source_name: &str, text: &str) -> Result<Self> {
        let doc: ModelDoc = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        doc.build()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_named(&path.display().to_string(), &text)
    }

    /// Reference posture with the root translated so the lowest contact
    /// frame rests exactly on the terrain (free-base models only).
    pub fn grounded(&self, q: &[f64]) -> Vec<f64> {
        let mut q = q.to_vec();
        if self.joints[0].kind != JointKind::PlanarFree {
            return q;
        }
        let poses = super::kinematics::BodyPoses::compute(self, &q, &vec![0.0; self.nq]);
        let clearance = self
            .contact_frames()
            .map(|f| {
                let p = poses.point(f.body, &f.pos);
                p.y - self.terrain.height(p.x)
            })
            .fold(f64::INFINITY, f64::min);
        if clearance.is_finite() {
            q[1] -= clearance;
        }
        q
    }

    /// Rotate the free base so that `body` has zero world angle, then ground.
    pub fn level_body_and_ground(&self, q: &[f64], body: usize) -> Vec<f64> {
        let mut q = q.to_vec();
        if self.joints[0].kind != JointKind::PlanarFree {
            return q;
        }
        let poses = super::kinematics::BodyPoses::compute(self, &q, &vec![0.0; self.nq]);
        let angle = poses.angle[body];
        let wrapped = (angle + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
            - std::f64::consts::PI;
        q[2] -= wrapped / self.joints[0].axis_sign;
        self.grounded(&q)
    }
}

// ---------------------------------------------------------------------------
// Document form
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    name: String,
    #[serde(default = "default_gravity")]
    gravity: f64,
    #[serde(default)]
    activation_model: ActivationModel,
    #[serde(default)]
    contact: ContactParams,
    #[serde(default)]
    terrain: TerrainDoc,
    links: Vec<LinkDoc>,
    joints: Vec<JointDoc>,
    #[serde(default)]
    muscles: Vec<MuscleDoc>,
    #[serde(default)]
    frames: Vec<FrameDoc>,
    posture_mask: Vec<String>,
    #[serde(default)]
    reference: BTreeMap<String, CoordValue>,
    #[serde(default)]
    ground_reference: bool,
}

fn default_gravity() -> f64 {
    9.81
}

fn default_sign() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    name: String,
    mass: f64,
    inertia: f64,
    length: f64,
    com: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LimitsDoc {
    Single([f64; 2]),
    Multi(Vec<[f64; 2]>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CoordValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    name: String,
    child: String,
    parent: Option<String>,
    #[serde(rename = "type")]
    kind: JointKind,
    anchor: Option<[f64; 2]>,
    #[serde(default)]
    offset: f64,
    #[serde(default = "default_sign")]
    axis_sign: f64,
    limits: Option<LimitsDoc>,
    #[serde(default)]
    damping: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViaDoc {
    link: String,
    pos: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MuscleDoc {
    name: String,
    path: Vec<ViaDoc>,
    f_max: f64,
    l_opt: Option<f64>,
    v_max: Option<f64>,
    tau_act: Option<f64>,
    tau_deact: Option<f64>,
    tau1: Option<f64>,
    tau2: Option<f64>,
    #[serde(default)]
    groups: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    name: String,
    link: String,
    pos: [f64; 2],
    #[serde(default)]
    angle: f64,
    #[serde(default)]
    contact: bool,
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must be strictly positive, got {v}")))
    }
}

impl ModelDoc {
    fn build(self) -> Result<ModelSpec> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::validation(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.links.is_empty() {
            return Err(Error::validation("model has no links"));
        }
        if !self.gravity.is_finite() {
            return Err(Error::validation("gravity must be finite"));
        }

        let mut link_docs: HashMap<&str, &LinkDoc> = HashMap::new();
        for l in &self.links {
            if link_docs.insert(l.name.as_str(), l).is_some() {
                return Err(Error::validation(format!("duplicate link `{}`", l.name)));
            }
            if l.name == "world" {
                return Err(Error::validation("`world` is a reserved link name"));
            }
            positive(&format!("link `{}` mass", l.name), l.mass)?;
            positive(&format!("link `{}` inertia", l.name), l.inertia)?;
            positive(&format!("link `{}` length", l.name), l.length)?;
        }

        // Bodies are laid out in joint order.
        let mut body_of_link: HashMap<&str, usize> = HashMap::new();
        for (i, j) in self.joints.iter().enumerate() {
            if !link_docs.contains_key(j.child.as_str()) {
                return Err(Error::validation(format!(
                    "joint `{}` references missing link `{}`",
                    j.name, j.child
                )));
            }
            if body_of_link.insert(j.child.as_str(), i).is_some() {
                return Err(Error::validation(format!("link `{}` has more than one joint", j.child)));
            }
        }
        if let Some(l) = self.links.iter().find(|l| !body_of_link.contains_key(l.name.as_str())) {
            return Err(Error::validation(format!(
                "link `{}` has no joint; joint tree is not connected",
                l.name
            )));
        }

        let mut links = Vec::with_capacity(self.joints.len());
        let mut joints = Vec::with_capacity(self.joints.len());
        let mut nq = 0;
        let mut roots = 0;
        for (i, jd) in self.joints.iter().enumerate() {
            let ld = link_docs[jd.child.as_str()];
            links.push(Link {
                name: ld.name.clone(),
                mass: ld.mass,
                inertia: ld.inertia,
                length: ld.length,
                com: ld.com.map_or(Vector2::new(0.0, 0.5 * ld.length), Vector2::from),
            });

            let parent = match &jd.parent {
                None => None,
                Some(p) if p == "world" => None,
                Some(p) => {
                    let pb = *body_of_link.get(p.as_str()).ok_or_else(|| {
                        Error::validation(format!("joint `{}` references missing parent link `{p}`", jd.name))
                    })?;
                    if pb >= i {
                        return Err(Error::validation(format!(
                            "joint `{}`: parent `{p}` must be declared before its child (cycle or misordered tree)",
                            jd.name
                        )));
                    }
                    Some(pb)
                }
            };
            if parent.is_none() {
                roots += 1;
            }
            if jd.kind == JointKind::PlanarFree && parent.is_some() {
                return Err(Error::validation(format!(
                    "joint `{}`: planar_free joints must attach to the world",
                    jd.name
                )));
            }
            if jd.axis_sign != 1.0 && jd.axis_sign != -1.0 {
                return Err(Error::validation(format!("joint `{}`: axis_sign must be ±1", jd.name)));
            }
            if !(jd.damping.is_finite() && jd.damping >= 0.0) {
                return Err(Error::validation(format!("joint `{}`: damping must be ≥ 0", jd.name)));
            }

            let dofs = jd.kind.dofs();
            let limits = match (&jd.limits, jd.kind) {
                (None, JointKind::Revolute) => vec![(-std::f64::consts::PI, std::f64::consts::PI)],
                (None, JointKind::PlanarFree) => vec![(-1e3, 1e3), (-1e3, 1e3), (-1e3, 1e3)],
                (Some(LimitsDoc::Single(l)), _) => vec![(l[0], l[1]); 1],
                (Some(LimitsDoc::Multi(v)), _) => v.iter().map(|l| (l[0], l[1])).collect(),
            };
            if limits.len() != dofs {
                return Err(Error::validation(format!(
                    "joint `{}`: expected {dofs} limit pair(s), got {}",
                    jd.name,
                    limits.len()
                )));
            }
            if let Some(&(lo, hi)) = limits.iter().find(|(lo, hi)| !(lo < hi)) {
                return Err(Error::validation(format!(
                    "joint `{}`: limits must satisfy lower < upper, got [{lo}, {hi}]",
                    jd.name
                )));
            }

            let anchor = match (jd.anchor, parent) {
                (Some(a), _) => Vector2::from(a),
                (None, Some(pb)) => Vector2::new(0.0, links[pb].length),
                (None, None) => Vector2::zeros(),
            };
            joints.push(Joint {
                name: jd.name.clone(),
                kind: jd.kind,
                parent,
                anchor,
                offset: jd.offset,
                axis_sign: jd.axis_sign,
                limits,
                damping: jd.damping,
                first_dof: nq,
            });
            nq += dofs;
        }
        if roots != 1 {
            return Err(Error::validation(format!("joint tree must have exactly one root, found {roots}")));
        }
        let mut names = std::collections::HashSet::new();
        if let Some(j) = joints.iter().find(|j| !names.insert(j.name.as_str())) {
            return Err(Error::validation(format!("duplicate joint `{}`", j.name)));
        }

        let resolve_body = |name: &str, ctx: &str| -> Result<Option<usize>> {
            if name == "world" {
                return Ok(None);
            }
            body_of_link
                .get(name)
                .copied()
                .map(Some)
                .ok_or_else(|| Error::validation(format!("{ctx} references missing link `{name}`")))
        };

        let mut frames = Vec::new();
        let mut frame_index = HashMap::new();
        for fd in &self.frames {
            if fd.name == "com" {
                return Err(Error::validation("`com` is computed, not declared"));
            }
            let body = resolve_body(&fd.link, &format!("frame `{}`", fd.name))?
                .ok_or_else(|| Error::validation(format!("frame `{}` cannot be attached to the world", fd.name)))?;
            if frame_index.insert(fd.name.clone(), frames.len()).is_some() {
                return Err(Error::validation(format!("duplicate frame `{}`", fd.name)));
            }
            frames.push(Frame {
                name: fd.name.clone(),
                body,
                pos: Vector2::from(fd.pos),
                angle: fd.angle,
                contact: fd.contact,
            });
        }

        let mut muscle_docs = Vec::new();
        for md in &self.muscles {
            if md.path.len() < 2 {
                return Err(Error::validation(format!("muscle `{}` needs at least 2 via points", md.name)));
            }
            let mut via = Vec::new();
            for v in &md.path {
                via.push(Attachment {
                    body: resolve_body(&v.link, &format!("muscle `{}`", md.name))?,
                    pos: Vector2::from(v.pos),
                });
            }
            positive(&format!("muscle `{}` f_max", md.name), md.f_max)?;
            muscle_docs.push((md, via));
        }

        let mut dof_body = Vec::with_capacity(nq);
        for (b, j) in joints.iter().enumerate() {
            dof_body.extend(std::iter::repeat_n(b, j.kind.dofs()));
        }
        let chains = (0..joints.len())
            .map(|b| {
                let mut chain = vec![b];
                let mut cur = joints[b].parent;
                while let Some(p) = cur {
                    chain.push(p);
                    cur = joints[p].parent;
                }
                chain.reverse();
                chain
            })
            .collect();
        let (q_lower, q_upper): (Vec<f64>, Vec<f64>) =
            joints.iter().flat_map(|j| j.limits.iter().copied()).unzip();

        let mut posture_mask = Vec::new();
        for name in &self.posture_mask {
            let j = joints
                .iter()
                .position(|j| &j.name == name)
                .ok_or_else(|| Error::validation(format!("posture_mask references missing joint `{name}`")))?;
            let r = joints[j].first_dof..joints[j].first_dof + joints[j].kind.dofs();
            for d in r {
                if posture_mask.contains(&d) {
                    return Err(Error::validation(format!("posture_mask lists joint `{name}` twice")));
                }
                posture_mask.push(d);
            }
        }
        if posture_mask.is_empty() {
            return Err(Error::validation("posture_mask is empty"));
        }

        let mut reference_q = vec![0.0; nq];
        for (name, value) in &self.reference {
            let j = joints
                .iter()
                .position(|j| &j.name == name)
                .ok_or_else(|| Error::validation(format!("reference posture names missing joint `{name}`")))?;
            let values = match value {
                CoordValue::Scalar(v) => vec![*v],
                CoordValue::Vector(v) => v.clone(),
            };
            if values.len() != joints[j].kind.dofs() {
                return Err(Error::Dimension {
                    what: "reference posture entry",
                    expected: joints[j].kind.dofs(),
                    got: values.len(),
                });
            }
            reference_q[joints[j].first_dof..joints[j].first_dof + values.len()].copy_from_slice(&values);
        }

        let terrain = self.terrain.build()?;

        let mut model = ModelSpec {
            name: self.name,
            links,
            joints,
            muscles: Vec::new(),
            frames,
            posture_mask,
            gravity: self.gravity,
            terrain,
            contact: self.contact,
            activation_model: self.activation_model,
            reference_q,
            nq,
            dof_body,
            chains,
            q_lower,
            q_upper,
            frame_index,
        };
        let mut reference = model.reference_q.clone();
        model.clamp_q(&mut reference);
        model.reference_q = reference;
        if self.ground_reference {
            model.reference_q = model.grounded(&model.reference_q);
        }

        // Path lengths at the reference posture supply the `l_opt` default.
        let poses = super::kinematics::BodyPoses::compute(&model, &model.reference_q, &vec![0.0; nq]);
        let mut muscles = Vec::new();
        for (md, via) in muscle_docs {
            let rest_length = super::geometry::path_length(&poses, &via);
            positive(&format!("muscle `{}` path length at reference posture", md.name), rest_length)?;
            let l_opt = md.l_opt.unwrap_or(rest_length);
            positive(&format!("muscle `{}` l_opt", md.name), l_opt)?;
            let v_max = md.v_max.unwrap_or(10.0 * l_opt);
            positive(&format!("muscle `{}` v_max", md.name), v_max)?;
            let tau_act = md.tau_act.unwrap_or(DEFAULT_TAU_ACT);
            let tau_deact = md.tau_deact.unwrap_or(DEFAULT_TAU_DEACT);
            positive(&format!("muscle `{}` tau_act", md.name), tau_act)?;
            positive(&format!("muscle `{}` tau_deact", md.name), tau_deact)?;
            let tau1 = md.tau1.unwrap_or(tau_act - tau_deact);
            let tau2 = md.tau2.unwrap_or(tau_deact);
            positive(&format!("muscle `{}` tau2", md.name), tau2)?;
            if tau1.abs() >= tau2 {
                return Err(Error::validation(format!(
                    "muscle `{}`: |tau1| must be below tau2 so the activation time constant stays positive",
                    md.name
                )));
            }
            muscles.push(MuscleSpec {
                name: md.name.clone(),
                via_points: via,
                f_max: md.f_max,
                l_opt,
                v_max,
                tau_act,
                tau_deact,
                tau1,
                tau2,
                groups: md.groups.clone(),
            });
        }
        let mut names = std::collections::HashSet::new();
        if let Some(m) = muscles.iter().find(|m| !names.insert(m.name.as_str())) {
            return Err(Error::validation(format!("duplicate muscle `{}`", m.name)));
        }
        model.muscles = muscles;
        Ok(model)
    }
}
