//! Scheduled external wrenches and actuator failures.

use nalgebra::Vector2;

use crate::error::{Error, Result};

/// A force and torque applied at a body's center of mass over `[start, start + duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalWrench {
    pub start: f64,
    pub duration: f64,
    pub body: usize,
    pub force: Vector2<f64>,
    pub torque: f64,
}

impl ExternalWrench {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

/// From `time` on, the listed muscles produce no control and no force.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorFailure {
    pub time: f64,
    pub muscles: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perturbation {
    wrenches: Vec<ExternalWrench>,
    failures: Vec<ActuatorFailure>,
}

impl Perturbation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(wrenches: Vec<ExternalWrench>, failures: Vec<ActuatorFailure>) -> Result<Self> {
        if wrenches.windows(2).any(|w| w[0].start > w[1].start) {
            return Err(Error::validation("external wrenches must be sorted by start time"));
        }
        if failures.windows(2).any(|w| w[0].time > w[1].time) {
            return Err(Error::validation("actuator failures must be sorted by time"));
        }
        if let Some(w) = wrenches.iter().find(|w| !(w.duration > 0.0)) {
            return Err(Error::validation(format!("wrench at t = {} has non-positive duration", w.start)));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &failures {
            for &m in &f.muscles {
                if !seen.insert(m) {
                    return Err(Error::validation(format!("muscle {m} fails more than once")));
                }
            }
        }
        Ok(Perturbation { wrenches, failures })
    }

    pub fn wrenches(&self) -> &[ExternalWrench] {
        &self.wrenches
    }

    pub fn failures(&self) -> &[ActuatorFailure] {
        &self.failures
    }

    /// Same failures, no wrenches. Planner rollouts see model changes but
    /// cannot anticipate pushes.
    pub fn failures_only(&self) -> Self {
        Perturbation {
            wrenches: Vec::new(),
            failures: self.failures.clone(),
        }
    }

    pub fn active_wrenches(&self, t: f64) -> impl Iterator<Item = &ExternalWrench> {
        self.wrenches.iter().filter(move |w| w.active(t))
    }

    pub fn has_failures_by(&self, t: f64) -> bool {
        self.failures.first().is_some_and(|f| f.time <= t)
    }

    /// Per-muscle failed flags at time `t`.
    pub fn failed_mask(&self, t: f64, nu: usize) -> Vec<bool> {
        let mut mask = vec![false; nu];
        for f in self.failures.iter().take_while(|f| f.time <= t) {
            for &m in &f.muscles {
                if m < nu {
                    mask[m] = true;
                }
            }
        }
        mask
    }

    pub fn is_failed(&self, muscle: usize, t: f64) -> bool {
        self.failures
            .iter()
            .take_while(|f| f.time <= t)
            .any(|f| f.muscles.contains(&muscle))
    }
}
