//! The optimistic learner: constants, confidence-set planning and the
//! act/delay/update loop.

mod agent;
mod constants;
mod model;

pub use agent::{AgentState, EpisodeLog, Phase, StepRecord, UpdateTrigger};
pub use constants::{derive_constants, knownness, z_set, UcrlConstants};
pub use model::{
    extended_value_iteration, extended_value_iteration_over, feasible_interval,
    model_membership_check, ModelClass, OptimisticPlan, VisitCounts,
};
