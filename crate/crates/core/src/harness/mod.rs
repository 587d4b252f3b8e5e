pub mod config;
pub mod output;
pub mod placement;
pub mod rng;
pub mod runner;

pub use config::{Algorithm, Backend, RunConfig, Scenario};
pub use runner::{evaluate, run_evaluate, run_sweep, run_train, sweep, train, train_and_evaluate, Agent, Evaluation, RunResult};
