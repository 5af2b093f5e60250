//! Hierarchical curiosity-driven learning of compound actions.
//!
//! An agent picks goals and learning strategies by competence progress,
//! stores every episode, builds task hierarchies from its own successes and
//! composes long action sequences through them.

pub mod affordance;
pub mod domain;
pub mod envs;
pub mod error;
pub mod hierarchy;
pub mod interest;
pub mod memory;
pub mod models;
pub mod runner;
pub mod strategies;
pub mod teachers;

pub use error::{Error, Result};
