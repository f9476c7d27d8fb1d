//! Risk-averse online planning for POMDPs under the iterated CVaR (ICVaR)
//! dynamic risk measure.
//!
//! Costs are minimized throughout and CVaR is taken over the upper tail.
//!
//! - [`cvar`]: empirical CVaR and its concentration radii.
//! - [`bounds`]: finite-sample error bounds and the tree-search exploration bonus.
//! - [`model`]: generative POMDP interface and particle beliefs.
//! - [`sparse`]: exact-recursion policy evaluation and sparse sampling.
//! - [`mcts`]: ICVaR-PFT-DPW and ICVaR-POMCPOW.
//! - [`env`]: LaserTag, LightDark and the TinyChain oracle fixture.
//! - [`validation`]: empirical coverage of the error bounds.
//! - [`harness`]: episodes, evaluation and result files.

// `!(x > 0.0)` style checks reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cvar;
pub mod env;
pub mod error;
pub mod harness;
pub mod mcts;
pub mod model;
pub mod sparse;
pub mod validation;

pub use bounds::HorizonParams;
pub use cvar::{empirical_cvar, ConfidenceParams, RiskLevel, SampleSet};
pub use error::{IcvarError, Result};
pub use mcts::{Backup, Budget, MctsConfig, PftDpw, PlanOutcome, Pomcpow};
pub use model::{substream, ActionSpace, GenerativeModel, ParticleBelief, SimRng, Transition};
pub use sparse::EvalConfig;
