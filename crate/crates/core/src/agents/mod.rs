//! Learning backends and the shared exploration policy.

mod dqn;
mod policy;
mod replay;
mod tabular;

pub use dqn::{DqnConfig, DqnModel, Gradient};
pub use policy::{argmax, select_action, EpsilonSchedule};
pub use replay::{Experience, ReplayMemory};
pub use tabular::{tabular_update, QTable};
