use std::path::Path;

use crate::error::{Error, Result};

/// State-action value table, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    pub learning_rate: f64,
    pub discount: f64,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, learning_rate: f64, discount: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("Q-table needs at least one state and one action"));
        }
        if !(learning_rate > 0.0 && learning_rate < 1.0) {
            return Err(Error::invalid(format!("learning rate must lie in (0, 1), got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid(format!("discount must lie in [0, 1), got {discount}")));
        }
        Ok(Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            learning_rate,
            discount,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::invalid(format!(
                "(s, a) = ({s}, {a}) outside {}x{} table",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Writes `state,a0,..,a{n-1}` CSV.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["state".to_string()];
        header.extend((0..self.n_actions).map(|a| format!("a{a}")));
        w.write_record(&header).map_err(csv_err)?;
        for s in 0..self.n_states {
            let mut rec = vec![s.to_string()];
            rec.extend(self.row(s).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load_csv(path: &Path, learning_rate: f64, discount: f64) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        let n_actions = header.len().saturating_sub(1);
        if header.get(0) != Some("state")
            || n_actions == 0
            || header.iter().skip(1).enumerate().any(|(a, h)| h != format!("a{a}"))
        {
            return Err(Error::Checkpoint(format!("{}: bad Q-table header", path.display())));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |f: &str| {
                f.parse::<f64>()
                    .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
            };
            if rec.get(0).map(str::parse::<usize>) != Some(Ok(i)) {
                return Err(Error::Checkpoint(format!("{}: row {i} out of order", path.display())));
            }
            rows.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?);
        }
        let mut t = Self::new(rows.len(), n_actions, learning_rate, discount)?;
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Shape {
                    expected: n_actions,
                    actual: row.len(),
                });
            }
            t.values[s * n_actions..(s + 1) * n_actions].copy_from_slice(&row);
        }
        Ok(t)
    }
}

/// `Q(s,a) ← (1−α)Q(s,a) + α[r + γ·max_a′ Q(s′,a′)]`.
pub fn tabular_update(table: &mut QTable, s: usize, a: usize, r: f64, s_next: usize) -> Result<f64> {
    table.check(s, a)?;
    table.check(s_next, 0)?;
    let best_next = table.row(s_next).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let alpha = table.learning_rate;
    let v = (1.0 - alpha) * table.get(s, a) + alpha * (r + table.discount * best_next);
    table.set(s, a, v);
    Ok(v)
}
