//! Adversarial safety testing for driving policies.
//!
//! A deterministic lane-based traffic simulator with three road layouts, a
//! small double-precision neural engine, four under-test defender policies and
//! a multi-agent clipped policy-gradient trainer for attacker vehicles whose
//! reward arbitrates accident responsibility. The [`harness`] module ties these
//! together into training, evaluation, ablation, trace replay and rendering.

pub mod defender;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod marl;
pub mod nn;
pub mod npc;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
