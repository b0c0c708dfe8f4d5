//! Weighted task costs over planar models.
//!
//! A [`CostSpec`] is an ordered list of terms, each with a non-negative
//! weight. The weight vector `θ` (term order) is what the cost tuner
//! searches over; term kinds and their parameters stay fixed.

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{center_of_mass, frame_state, BodyPoses, FrameState, ModelSpec, SimState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TermKind {
    /// `|y_head - mean(y_feet) - target|`; `target` defaults to the model's
    /// standing height at its reference posture.
    Height {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<f64>,
    },
    /// Alignment of pelvis, head and (weighted 0.1) feet up vectors with world up.
    Upright,
    /// Horizontal distance between the center of mass and the mean foot position.
    Balance,
    /// `|v_com,x - target|`
    ForwardVelocity { target: f64 },
    /// `‖q̇‖₂` over all coordinates.
    JointVelocity,
    /// `‖q_mask - reference‖₂` over the posture-mask joints; `reference`
    /// defaults to zero.
    JointPosition {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<Vec<f64>>,
    },
    /// `|min(y_forward_foot - terrain(x) - step_height, 0)|`, active while the
    /// forward foot lies within `window` metres before `start` (always when
    /// `start` is unset).
    Clearance {
        step_height: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<f64>,
        #[serde(default = "default_window")]
        window: f64,
    },
}

fn default_window() -> f64 {
    0.3
}

impl TermKind {
    pub fn label(&self) -> &'static str {
        match self {
            TermKind::Height { .. } => "height",
            TermKind::Upright => "upright",
            TermKind::Balance => "balance",
            TermKind::ForwardVelocity { .. } => "forward_velocity",
            TermKind::JointVelocity => "joint_velocity",
            TermKind::JointPosition { .. } => "joint_position",
            TermKind::Clearance { .. } => "clearance",
        }
    }

    fn needs_feet(&self) -> bool {
        matches!(
            self,
            TermKind::Height { .. } | TermKind::Balance | TermKind::Clearance { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    pub weight: f64,
    #[serde(flatten)]
    pub kind: TermKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default)]
    pub name: String,
    pub terms: Vec<CostTerm>,
}

impl CostSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_named("<cost preset>", text)
    }

    pub fn from_toml_named(source_name: &str, text: &str) -> Result<Self> {
        let spec: CostSpec = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        spec.validate_weights()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_named(&path.display().to_string(), &text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Output(e.to_string()))
    }

    fn validate_weights(&self) -> Result<()> {
        for (index, t) in self.terms.iter().enumerate() {
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(Error::NegativeWeight { index, value: t.weight });
            }
        }
        Ok(())
    }

    /// Check the spec against `model` and fill model-dependent defaults.
    pub fn bind(mut self, model: &ModelSpec) -> Result<Self> {
        self.validate_weights()?;
        for t in &mut self.terms {
            if t.kind.needs_feet() && !model.has_feet() {
                return Err(Error::UnknownFrame(format!(
                    "foot_left/foot_right (needed by the {} term)",
                    t.kind.label()
                )));
            }
            if matches!(t.kind, TermKind::Height { .. } | TermKind::Upright) {
                for name in ["head", "pelvis"] {
                    if model.frame_id(name).is_none() {
                        return Err(Error::UnknownFrame(format!("{name} (needed by the {} term)", t.kind.label())));
                    }
                }
            }
            match &mut t.kind {
                TermKind::Height { target } if target.is_none() => *target = Some(standing_height(model)),
                TermKind::JointPosition { reference: Some(r) } if r.len() != model.nz() => {
                    return Err(Error::Dimension {
                        what: "joint_position reference",
                        expected: model.nz(),
                        got: r.len(),
                    });
                }
                _ => {}
            }
        }
        Ok(self)
    }

    pub fn theta(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.terms.len() {
            return Err(Error::Dimension {
                what: "theta",
                expected: self.terms.len(),
                got: theta.len(),
            });
        }
        if let Some((index, &value)) = theta.iter().enumerate().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::NegativeWeight { index, value });
        }
        let mut out = self.clone();
        for (t, &w) in out.terms.iter_mut().zip(theta) {
            t.weight = w;
        }
        Ok(out)
    }

    pub fn labels(&self) -> Vec<&'static str> {
        self.terms.iter().map(|t| t.kind.label()).collect()
    }
}

pub fn theta_get(spec: &CostSpec) -> Vec<f64> {
    spec.theta()
}

pub fn theta_set(spec: &CostSpec, theta: &[f64]) -> Result<CostSpec> {
    spec.with_theta(theta)
}

/// Head height above the mean foot height at the model's reference posture.
pub fn standing_height(model: &ModelSpec) -> f64 {
    let state = SimState::rest(model);
    let ctx = CostContext::new(model, &state);
    match (ctx.head, ctx.feet) {
        (Some(h), Some([l, r])) => h.position.y - 0.5 * (l.position.y + r.position.y),
        _ => 0.0,
    }
}

/// Frame kinematics of one state, computed once and shared by every term.
#[derive(Debug, Clone)]
pub struct CostContext<'a> {
    pub state: &'a SimState,
    pub head: Option<FrameState>,
    pub pelvis: Option<FrameState>,
    pub feet: Option<[FrameState; 2]>,
    pub com: Vector2<f64>,
    pub com_velocity: Vector2<f64>,
}

impl<'a> CostContext<'a> {
    pub fn new(model: &ModelSpec, state: &'a SimState) -> Self {
        let poses = BodyPoses::compute(model, &state.q, &state.qdot);
        let get = |name: &str| model.frame_id(name).map(|id| frame_state(model, &poses, id));
        let feet = match (get("foot_left"), get("foot_right")) {
            (Some(l), Some(r)) => Some([l, r]),
            _ => None,
        };
        let (com, com_velocity) = center_of_mass(model, &poses);
        CostContext {
            state,
            head: get("head"),
            pelvis: get("pelvis"),
            feet,
            com,
            com_velocity,
        }
    }

    fn feet_mean(&self) -> Vector2<f64> {
        self.feet
            .map(|[l, r]| 0.5 * (l.position + r.position))
            .unwrap_or_else(Vector2::zeros)
    }
}

/// Unweighted value of one term.
pub fn term_value(kind: &TermKind, model: &ModelSpec, ctx: &CostContext) -> f64 {
    let up = Vector2::new(0.0, 1.0);
    let tilt = |f: &Option<FrameState>| f.map_or(0.0, |f| 1.0 - up.dot(&f.up));
    match kind {
        TermKind::Height { target } => {
            let target = target.unwrap_or_else(|| standing_height(model));
            let head = ctx.head.map_or(0.0, |h| h.position.y);
            (head - ctx.feet_mean().y - target).abs()
        }
        TermKind::Upright => {
            let mut c = tilt(&ctx.pelvis) + tilt(&ctx.head);
            if let Some([l, r]) = ctx.feet {
                c += 0.1 * (1.0 - up.dot(&l.up)) + 0.1 * (1.0 - up.dot(&r.up));
            }
            c.abs()
        }
        TermKind::Balance => (ctx.com.x - ctx.feet_mean().x).abs(),
        TermKind::ForwardVelocity { target } => (ctx.com_velocity.x - target).abs(),
        TermKind::JointVelocity => ctx.state.qdot.iter().map(|v| v * v).sum::<f64>().sqrt(),
        TermKind::JointPosition { reference } => model
            .posture_mask
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let r = reference.as_ref().map_or(0.0, |r| r[i]);
                (ctx.state.q[d] - r).powi(2)
            })
            .sum::<f64>()
            .sqrt(),
        TermKind::Clearance {
            step_height,
            start,
            window,
        } => {
            let Some([l, r]) = ctx.feet else { return 0.0 };
            let fwd = if l.position.x >= r.position.x { l } else { r };
            if let Some(s) = start {
                if !(fwd.position.x >= s - window && fwd.position.x <= *s) {
                    return 0.0;
                }
            }
            let lift = fwd.position.y - model.terrain.height(fwd.position.x);
            (lift - step_height).min(0.0).abs()
        }
    }
}

/// Unweighted term values in spec order.
pub fn evaluate_terms(spec: &CostSpec, model: &ModelSpec, state: &SimState) -> Vec<f64> {
    let ctx = CostContext::new(model, state);
    spec.terms.iter().map(|t| term_value(&t.kind, model, &ctx)).collect()
}

/// `Σ_j θ_j · term_j(s)`. None of the planar terms depend on the control.
pub fn evaluate(spec: &CostSpec, model: &ModelSpec, state: &SimState, _u: &[f64]) -> f64 {
    let ctx = CostContext::new(model, state);
    spec.terms
        .iter()
        .filter(|t| t.weight != 0.0)
        .map(|t| t.weight * term_value(&t.kind, model, &ctx))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trip() {
        let text = r#"
name = "t"
[[terms]]
kind = "height"
weight = 100.0
[[terms]]
kind = "forward_velocity"
weight = 10.0
target = 1.0
"#;
        let spec = CostSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.theta(), vec![100.0, 10.0]);
        let back = CostSpec::from_toml_str(&spec.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn negative_weight_rejected() {
        let spec = CostSpec {
            name: String::new(),
            terms: vec![CostTerm {
                weight: 1.0,
                kind: TermKind::Upright,
            }],
        };
        assert!(matches!(spec.with_theta(&[-1.0]), Err(Error::NegativeWeight { index: 0, .. })));
        assert!(matches!(spec.with_theta(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn unknown_kind_is_parse_error() {
        let text = "[[terms]]\nkind = \"feet_cross\"\nweight = 1.0\n";
        assert!(matches!(CostSpec::from_toml_str(text), Err(Error::Parse { .. })));
    }
}
