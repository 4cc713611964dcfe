//! Tabular discounted MDPs and the machinery around optimistic PAC
//! exploration with Bernstein confidence sets.
//!
//! * [`mdp`] holds exact policy evaluation, value iteration, occupancy
//!   weights, local variances, higher value moments and the two-support
//!   transform.
//! * [`confidence`] holds the Hoeffding/Bernstein radii.
//! * [`ucrl`] is the learning agent: constants, knownness, confidence-set
//!   planning and the episode/delay/update loop.
//! * [`lowerbound`] builds the hard instance, action weights, phases and
//!   the bandit reduction.
//! * [`harness`] runs experiments, counts mistakes and writes traces.

pub mod confidence;
pub mod error;
pub mod harness;
pub mod lowerbound;
pub mod mdp;
pub mod ucrl;

pub use error::{Error, Result};
pub use mdp::{
    Action, State, StationaryPolicy, TabularMdp, Transition, TwoSupportTransition, ValueVector,
};
