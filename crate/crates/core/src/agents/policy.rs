use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub epsilon: f64,
    pub decay: f64,
    pub floor: f64,
}

impl EpsilonSchedule {
    pub fn new(epsilon: f64, decay: f64, floor: f64) -> Result<Self> {
        let s = Self {
            epsilon,
            decay,
            floor,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.floor) || !(self.floor..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "need 0 <= epsilon_min <= epsilon <= 1, got {} and {}",
                self.floor, self.epsilon
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        Ok(())
    }

    /// `ε ← max(ε·d, ε_min)`.
    pub fn decay(&mut self) {
        self.epsilon = (self.epsilon * self.decay).max(self.floor);
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> Result<usize> {
    if row.is_empty() {
        return Err(Error::invalid("argmax of an empty row"));
    }
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    Ok(best)
}

/// ε-greedy choice. The schedule is decayed once, before the draw.
pub fn select_action<R: Rng + ?Sized>(
    q_row: &[f64],
    schedule: &mut EpsilonSchedule,
    rng: &mut R,
) -> Result<usize> {
    if q_row.is_empty() {
        return Err(Error::invalid("cannot select from an empty action row"));
    }
    schedule.decay();
    let r: f64 = rng.random();
    if r < schedule.epsilon {
        Ok(rng.random_range(0..q_row.len()))
    } else {
        argmax(q_row)
    }
}
