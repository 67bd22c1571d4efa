//! Offline belief-state planning for an autonomous life-detection instrument
//! suite.
//!
//! The pipeline: a Bayesian network over biosignature measurements
//! ([`bayesnet`], instantiated in [`lds_model`]) supplies the observation
//! model of a tabular POMDP ([`pomdp`]); a point-based solver ([`solver`])
//! turns it into an alpha-vector policy; [`sim`] evaluates that policy and the
//! scripted threshold baseline ([`baseline`]) in seeded Monte Carlo rollouts.

pub mod baseline;
pub mod bayesnet;
pub mod lds_model;
pub mod pomdp;
pub mod sim;
pub mod solver;
