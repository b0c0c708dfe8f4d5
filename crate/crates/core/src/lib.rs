//! Hierarchical sampling-based posture control for over-actuated,
//! muscle-driven planar articulated systems.
//!
//! A high-level MPPI planner searches over target postures of the major
//! joints; a morphology-aware proportional controller turns each target
//! posture into muscle excitations by inverting the activation dynamics.
//! Everything runs on the bundled planar dynamics engine in [`dynamics`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "mimalloc")]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod bundled;
pub mod costs;
pub mod dynamics;
mod error;
pub mod harness;
pub mod lowlevel;
pub mod optimizer;
pub mod planner;

pub use error::{Error, Result};
