//! Fully connected Q-network trained with adaptive moments.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Once;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::replay::{Experience, ReplayMemory};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "# celltune dqn checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
}

impl Default for DqnConfig {
    /// Step size 0.2 is aggressive for Adam; see [`DqnConfig::conservative`].
    fn default() -> Self {
        Self {
            hidden: 24,
            learning_rate: 0.2,
            discount: 0.995,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 32,
            replay_capacity: 10_000,
        }
    }
}

impl DqnConfig {
    pub fn conservative() -> Self {
        Self {
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.replay_capacity <= self.batch_size {
            return Err(Error::Config(
                "need hidden >= 1 and replay_capacity > batch_size >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(
                "need learning_rate > 0 and discount in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.adam_epsilon > 0.0)
        {
            return Err(Error::Config("need beta1, beta2 in [0, 1) and adam_epsilon > 0".into()));
        }
        static WARN: Once = Once::new();
        if self.learning_rate > 0.05 {
            WARN.call_once(|| log::warn!(
                "DQN learning rate {} is large for adaptive moments; 1e-3 is the usual choice",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out x n_in`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }
}

/// Flat gradient in parameter order: for each layer, weights then biases.
pub type Gradient = Vec<f64>;

/// `input → H → ReLU → H → ReLU → outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnModel {
    cfg: DqnConfig,
    seed: u64,
    layers: Vec<Dense>,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl DqnModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(n_in: usize, n_out: usize, cfg: DqnConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(n_in, n_out, cfg, seed, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.random_range(-limit..=limit)
        })
    }

    pub fn zeros(n_in: usize, n_out: usize, cfg: DqnConfig) -> Result<Self> {
        Self::build(n_in, n_out, cfg, 0, |_, _| 0.0)
    }

    fn build(
        n_in: usize,
        n_out: usize,
        cfg: DqnConfig,
        seed: u64,
        mut init: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if n_in == 0 || n_out == 0 {
            return Err(Error::invalid("network needs at least one input and one output"));
        }
        let sizes = [n_in, cfg.hidden, cfg.hidden, n_out];
        let layers: Vec<Dense> = sizes
            .windows(2)
            .map(|w| Dense {
                n_in: w[0],
                n_out: w[1],
                w: (0..w[0] * w[1]).map(|_| init(w[0], w[1])).collect(),
                b: vec![0.0; w[1]],
            })
            .collect();
        let n = layers.iter().map(Dense::n_params).sum();
        Ok(Self {
            cfg,
            seed,
            layers,
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn n_params(&self) -> usize {
        self.m.len()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Shape {
                expected: self.n_params(),
                actual: p.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for x in l.w.iter_mut().chain(l.b.iter_mut()) {
                *x = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Pre-activations of every layer for input `x`.
    fn trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Shape {
                expected: self.n_inputs(),
                actual: x.len(),
            });
        }
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let z = l.apply(&h);
            if i + 1 < self.layers.len() {
                h = z.iter().map(|&v| v.max(0.0)).collect();
            }
            zs.push(z);
        }
        Ok(zs)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.pop().expect("three layers"))
    }

    /// Regression targets: `r` for terminal transitions, otherwise
    /// `r + γ max_a′ Q(s′, a′)` under the current weights.
    pub fn targets(&self, batch: &[&Experience]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|e| {
                if e.terminal {
                    Ok(e.reward)
                } else {
                    let q = self.forward(&e.next_obs)?;
                    Ok(e.reward + self.cfg.discount * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                }
            })
            .collect()
    }

    /// Mean squared TD error over the batch and its gradient. Targets are
    /// constants; only `Q(s_j, a_j)` carries gradient.
    pub fn loss_and_grad(&self, batch: &[&Experience], targets: &[f64]) -> Result<(f64, Gradient)> {
        if batch.is_empty() || batch.len() != targets.len() {
            return Err(Error::Shape {
                expected: batch.len(),
                actual: targets.len(),
            });
        }
        let nb = batch.len() as f64;
        let mut grad = vec![0.0; self.n_params()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.n_params();
                Some(o)
            })
            .collect();
        let mut loss = 0.0;
        for (e, &y) in batch.iter().zip(targets) {
            if e.action >= self.n_outputs() {
                return Err(Error::invalid(format!("action {} outside network outputs", e.action)));
            }
            let zs = self.trace(&e.obs)?;
            let q = zs[zs.len() - 1][e.action];
            loss += (y - q).powi(2) / nb;

            let mut delta = vec![0.0; self.n_outputs()];
            delta[e.action] = -2.0 * (y - q) / nb;
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let input: Vec<f64> = if li == 0 {
                    e.obs.clone()
                } else {
                    zs[li - 1].iter().map(|&v| v.max(0.0)).collect()
                };
                let off = offsets[li];
                for o in 0..l.n_out {
                    if delta[o] == 0.0 {
                        continue;
                    }
                    for i in 0..l.n_in {
                        grad[off + o * l.n_in + i] += delta[o] * input[i];
                    }
                    grad[off + l.w.len() + o] += delta[o];
                }
                if li > 0 {
                    let prev_z = &zs[li - 1];
                    delta = (0..l.n_in)
                        .map(|i| {
                            if prev_z[i] <= 0.0 {
                                return 0.0;
                            }
                            (0..l.n_out).map(|o| l.w[o * l.n_in + i] * delta[o]).sum()
                        })
                        .collect();
                }
            }
        }
        Ok((loss, grad))
    }

    fn adam(&mut self, grad: &[f64]) -> Result<()> {
        self.steps += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - c.beta2.powi(self.steps as i32);
        let mut p = self.params();
        for k in 0..p.len() {
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * grad[k];
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
            p[k] -= c.learning_rate * (self.m[k] / bc1) / ((self.v[k] / bc2).sqrt() + c.adam_epsilon);
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("DQN update produced non-finite weights"));
        }
        self.set_params(&p)
    }

    /// One optimizer step on an explicit batch; returns the pre-update loss.
    pub fn fit_batch(&mut self, batch: &[&Experience]) -> Result<f64> {
        let y = self.targets(batch)?;
        self.fit_targets(batch, &y)
    }

    /// One optimizer step toward fixed `targets`, e.g. ones computed from
    /// an earlier snapshot of the weights.
    pub fn fit_targets(&mut self, batch: &[&Experience], targets: &[f64]) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(batch, targets)?;
        self.adam(&grad)?;
        Ok(loss)
    }

    /// Samples a batch from `memory` and takes one optimizer step.
    pub fn train_step<R: Rng + ?Sized>(&mut self, memory: &ReplayMemory, rng: &mut R) -> Result<f64> {
        let batch = memory.sample(rng)?;
        self.fit_batch(&batch)
    }

    /// Text checkpoint: a `key value` header, then one line per weight
    /// array in row-major order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let c = &self.cfg;
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
        let sizes: Vec<String> = std::iter::once(self.n_inputs())
            .chain(self.layers.iter().map(|l| l.n_out))
            .map(|n| n.to_string())
            .collect();
        let _ = writeln!(s, "sizes {}", sizes.join(" "));
        let _ = writeln!(s, "seed {}", self.seed);
        for (k, v) in [
            ("learning_rate", c.learning_rate),
            ("discount", c.discount),
            ("beta1", c.beta1),
            ("beta2", c.beta2),
            ("adam_epsilon", c.adam_epsilon),
        ] {
            let _ = writeln!(s, "{k} {v}");
        }
        let _ = writeln!(s, "batch_size {}", c.batch_size);
        let _ = writeln!(s, "replay_capacity {}", c.replay_capacity);
        for (i, l) in self.layers.iter().enumerate() {
            for (tag, vals) in [("w", &l.w), ("b", &l.b)] {
                let vals: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "layer{i}.{tag} {}", vals.join(" "));
            }
        }
        std::fs::write(path, s).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header line"));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines {
            let (k, v) = line.split_once(' ').ok_or_else(|| bad("malformed line"))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| bad(&format!("missing {k}")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        let sizes: Vec<usize> = get("sizes")?
            .split(' ')
            .map(|t| t.parse().map_err(|_| bad("bad sizes")))
            .collect::<Result<_>>()?;
        if sizes.len() != 4 || sizes[1] != sizes[2] {
            return Err(bad("expected sizes: inputs hidden hidden outputs"));
        }
        let cfg = DqnConfig {
            hidden: sizes[1],
            learning_rate: num("learning_rate")?,
            discount: num("discount")?,
            beta1: num("beta1")?,
            beta2: num("beta2")?,
            adam_epsilon: num("adam_epsilon")?,
            batch_size: int("batch_size")?,
            replay_capacity: int("replay_capacity")?,
        };
        let seed = get("seed")?.parse().map_err(|_| bad("bad seed"))?;
        let mut model = Self::zeros(sizes[0], sizes[3], cfg)?;
        model.seed = seed;
        for (i, l) in model.layers.iter_mut().enumerate() {
            for (tag, dst) in [("w", &mut l.w), ("b", &mut l.b)] {
                let vals: Vec<f64> = get(&format!("layer{i}.{tag}"))?
                    .split(' ')
                    .map(|t| t.parse().map_err(|_| bad("bad weight")))
                    .collect::<Result<_>>()?;
                if vals.len() != dst.len() {
                    return Err(Error::Shape {
                        expected: dst.len(),
                        actual: vals.len(),
                    });
                }
                *dst = vals;
            }
        }
        Ok(model)
    }
}
