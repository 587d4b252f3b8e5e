//! Comparison policies: fixed power and foresight max-SINR for power
//! control; random and first-in-first-out clearing for fault management.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{son_fault_action, Environment, VolteEnv};
use crate::error::{Error, Result};
use crate::events::{EnvKind, FaultRegister};
use crate::radio::{linear_to_db, RadioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Fpa,
    MaxSinr,
    RandomClear,
    FifoClear,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [Self::Fpa, Self::MaxSinr, Self::RandomClear, Self::FifoClear];

    pub fn env_kind(self) -> EnvKind {
        match self {
            Self::Fpa | Self::MaxSinr => EnvKind::Indoor,
            Self::RandomClear | Self::FifoClear => EnvKind::Outdoor,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fpa => "fpa",
            Self::MaxSinr => "maxsinr",
            Self::RandomClear => "random",
            Self::FifoClear => "fifo",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline '{s}'")))
    }
}

/// Equal split of the maximum base-station power over all PRBs.
pub fn fpa_tx_power_dbm(config: &RadioConfig, n_prb_ue: u32) -> Result<f64> {
    if n_prb_ue == 0 || n_prb_ue > config.n_prb {
        return Err(Error::invalid(format!(
            "n_prb_ue must lie in [1, {}], got {n_prb_ue}",
            config.n_prb
        )));
    }
    Ok(config.max_bs_power_dbm - linear_to_db(f64::from(config.n_prb))
        + linear_to_db(f64::from(n_prb_ue)))
}

/// Power that covers the largest foreseen rise of `trace` above its first
/// sample: `p0 + max(0, max_t trace[t] − trace[0])`.
pub fn max_sinr_power(trace_db: &[f64], p0_dbm: f64) -> Result<f64> {
    let first = *trace_db
        .first()
        .ok_or_else(|| Error::invalid("max-SINR needs a non-empty trace"))?;
    let xi = trace_db.iter().map(|&g| g - first).fold(0.0, f64::max);
    Ok(p0_dbm + xi)
}

/// Per-UE powers for the episode seeded by `seed`. Replays the episode at
/// fixed power and sizes each UE's power against its worst shortfall from
/// the target over the whole horizon.
pub fn max_sinr_plan(env: &VolteEnv, seed: u64) -> Result<Vec<f64>> {
    let trace = env.fixed_power_sinr_trace(seed)?;
    let target = env.params().gamma_target_db;
    let p0 = env.radio().initial_tx_power_dbm;
    let n_ue = trace[0].len();
    (0..n_ue)
        .map(|i| {
            let demand: Vec<f64> = std::iter::once(0.0)
                .chain(trace.iter().map(|row| (target - row[i]).max(0.0)))
                .collect();
            max_sinr_power(&demand, p0)
        })
        .collect()
}

/// Resets `env` on `seed` and applies the max-SINR plan.
pub fn max_sinr_reset(env: &mut VolteEnv, seed: u64) -> Result<usize> {
    let plan = max_sinr_plan(env, seed)?;
    let s = env.reset(seed)?;
    env.override_power(plan)?;
    Ok(s)
}

/// Clears a uniformly chosen active fault; no-op when none is active.
pub fn random_clear<R: Rng + ?Sized>(register: &FaultRegister, rng: &mut R) -> Result<usize> {
    let active = register.active_faults();
    if active.is_empty() {
        return Ok(0);
    }
    son_fault_action(active[rng.random_range(0..active.len())])
}

/// Arrival-ordered queue of faults awaiting clearance.
#[derive(Debug, Clone, Default)]
pub struct FifoClear {
    queue: VecDeque<u8>,
    seen: usize,
}

impl FifoClear {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn queue(&self) -> &VecDeque<u8> {
        &self.queue
    }

    /// Enqueues arrivals appended since the last call. `arrivals` is the
    /// environment's full arrival log for the current episode.
    pub fn observe(&mut self, arrivals: &[u8]) -> Result<()> {
        if arrivals.len() < self.seen {
            return Err(Error::invalid("arrival log shrank; reset the queue between episodes"));
        }
        self.queue.extend(&arrivals[self.seen..]);
        self.seen = arrivals.len();
        Ok(())
    }

    /// Action clearing the oldest still-active fault.
    pub fn next_action(&mut self, register: &FaultRegister) -> Result<usize> {
        while let Some(&f) = self.queue.front() {
            if register.is_active(f) {
                break;
            }
            self.queue.pop_front();
        }
        for f in register.active_faults() {
            if !self.queue.contains(&f) {
                return Err(Error::invalid(format!("fault {f} is active but was never queued")));
            }
        }
        match self.queue.front() {
            None => Ok(0),
            Some(&f) => son_fault_action(f),
        }
    }
}

/// [`FifoClear::observe`] then [`FifoClear::next_action`].
pub fn fifo_clear(fifo: &mut FifoClear, register: &FaultRegister, arrivals: &[u8]) -> Result<usize> {
    fifo.observe(arrivals)?;
    fifo.next_action(register)
}
