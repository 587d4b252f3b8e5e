//! The two MDP environments behind one contract.

mod son;
mod volte;

pub use son::{son_action_fault, son_fault_action, SonEnv, SonParams, SECTORS_PER_SITE};
pub use volte::{volte_action, VolteEnv, VolteParams};

use crate::error::Result;
use crate::events::Contribution;
use crate::radio::{linear_to_db, neighbor_down_sinr_lower_bound, RadioConfig};

pub const N_STATES: usize = 3;
pub const N_ACTIONS: usize = 5;

/// One step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub tti: u32,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
    pub event_id: u8,
    /// Change in effective SINR caused by the sampled event, dB.
    pub event_delta_db: f64,
    /// Change in effective SINR caused by the action, dB.
    pub action_delta_db: f64,
    /// Effective SINR (VoLTE) or active alarm count (SON) after the step.
    pub observable: f64,
}

pub trait Environment {
    fn n_states(&self) -> usize {
        N_STATES
    }
    fn n_actions(&self) -> usize {
        N_ACTIONS
    }
    fn horizon(&self) -> u32;
    fn tti(&self) -> u32;
    fn state(&self) -> usize;
    fn is_done(&self) -> bool;

    /// Starts a new episode whose randomness derives from `seed`.
    fn reset(&mut self, seed: u64) -> Result<usize>;
    fn step(&mut self, action: usize) -> Result<Transition>;

    fn per_ue_sinr_db(&self) -> Vec<f64>;
    fn gamma_eff_db(&self) -> f64;
    /// Agent input vector.
    fn observation(&self) -> Vec<f64>;
    fn observation_len(&self) -> usize;
    fn observable(&self) -> f64;
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Physical per-UE link: serving power and each interferer's power, mW.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct UeLink {
    pub serving_mw: f64,
    pub interferers_mw: Vec<f64>,
}

impl UeLink {
    pub fn sinr_linear(&self, noise_mw: f64) -> f64 {
        self.serving_mw / (noise_mw + self.interferers_mw.iter().sum::<f64>())
    }
}

/// Per-UE SINR gain from silencing interferer `down`. Also checks the
/// worst-case bound against the realized value.
pub(crate) fn neighbor_down_contribution(
    links: &[UeLink],
    down: usize,
    noise_mw: f64,
    radio: &RadioConfig,
) -> Result<Contribution> {
    let mut gains = Vec::with_capacity(links.len());
    for link in links {
        let total: f64 = noise_mw + link.interferers_mw.iter().sum::<f64>();
        let remaining = total - link.interferers_mw[down];
        let n_cells = link.interferers_mw.len() + 1;
        let bound = neighbor_down_sinr_lower_bound(link.serving_mw, noise_mw, n_cells, radio)?;
        debug_assert!(bound.sinr_linear <= link.serving_mw / remaining * (1.0 + 1e-12));
        gains.push(linear_to_db(total / remaining));
    }
    Ok(Contribution::PerUe(gains))
}
