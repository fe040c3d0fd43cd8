//! Causal MDPs and optimistic value-iteration learners.
//!
//! - [`mdp`]: ground-truth models, exact planning, rollout, regret.
//! - [`causal`]: C-UCBVI over (state, parent-value) pairs.
//! - [`factored`]: CF-UCBVI plus the UCBVI and F-UCBVI baselines.
//! - [`linear`]: causal linear MDPs and an LSVI-UCB learner on composed features.
//! - [`envgen`]: the seeded synthetic intervention environment family.
//! - [`harness`]: experiment configs, seeded runs, aggregation and output files.

pub mod causal;
pub mod envgen;
pub mod error;
pub mod factored;
pub mod harness;
pub mod learner;
pub mod linear;
pub mod mdp;
pub mod random;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
pub use learner::Learner;
