//! Gait clock, observation and reward, the baseline controller and the
//! learned-policy runtime.

mod observation;
mod phase;
mod policy;
mod raibert;
mod reward;
pub mod weights;

pub use observation::{build_observation, Command, Observation, MAX_COMMAND_SPEED, OBS_DIM, PERIOD_RANGE};
pub use phase::PhaseClock;
pub use policy::{Activation, PolicyArchitecture, PolicyNetwork, PolicyOutput, PolicyRuntime, ACTOR_BLOCKS};
pub use raibert::RaibertController;
pub use reward::{phase_match, reward, reward_lower_bound, reward_upper_bound, RewardBreakdown};
