//! Performance measures computed from episode traces: retainability, voice
//! quality, spectral efficiency and throughput statistics.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::radio::db_to_linear;

/// Fraction of samples strictly above `gamma_min_db`.
pub fn retainability(samples_db: &[f64], gamma_min_db: f64) -> Result<f64> {
    let mut c = RetainabilityCounter::default();
    c.extend(samples_db, gamma_min_db);
    c.value()
}

/// Pools retainability over many episodes of varying length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetainabilityCounter {
    pub retained: u64,
    pub total: u64,
}

impl RetainabilityCounter {
    pub fn extend(&mut self, samples_db: &[f64], gamma_min_db: f64) {
        self.total += samples_db.len() as u64;
        self.retained += samples_db.iter().filter(|&&s| s > gamma_min_db).count() as u64;
    }

    pub fn merge(&mut self, other: &Self) {
        self.retained += other.retained;
        self.total += other.total;
    }

    pub fn value(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::invalid("retainability of an empty trace"));
        }
        Ok(self.retained as f64 / self.total as f64)
    }
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// QPSK symbol error `2Q(√γ) - Q(√γ)^2`.
pub fn qpsk_symbol_error(sinr_linear: f64) -> Result<f64> {
    if !(sinr_linear > 0.0) || sinr_linear.is_nan() {
        return Err(Error::invalid(format!("SINR must be positive, got {sinr_linear}")));
    }
    let q = q_function(sinr_linear.sqrt());
    Ok(2.0 * q - q * q)
}

pub fn qpsk_packet_error_rate(sinr_linear: f64, symbols_per_packet: u32) -> Result<f64> {
    PacketErrorModel {
        symbols_per_packet,
        coding_gain_db: 0.0,
    }
    .packet_error_rate(sinr_linear)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketErrorModel {
    pub symbols_per_packet: u32,
    pub coding_gain_db: f64,
}

impl Default for PacketErrorModel {
    fn default() -> Self {
        Self {
            symbols_per_packet: 1,
            coding_gain_db: 0.0,
        }
    }
}

impl PacketErrorModel {
    pub fn validate(&self) -> Result<()> {
        if self.symbols_per_packet < 1 || !self.coding_gain_db.is_finite() {
            return Err(Error::Config(
                "symbols_per_packet must be >= 1 and coding_gain_db finite".into(),
            ));
        }
        Ok(())
    }

    pub fn packet_error_rate(&self, sinr_linear: f64) -> Result<f64> {
        if self.symbols_per_packet < 1 {
            return Err(Error::invalid("symbols_per_packet must be >= 1"));
        }
        let ps = qpsk_symbol_error(sinr_linear * db_to_linear(self.coding_gain_db))?;
        Ok(1.0 - (1.0 - ps).powi(self.symbols_per_packet as i32))
    }
}

/// Piecewise-linear map from effective loss to MOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosTable {
    /// `(effective_loss, mos)` knots, loss strictly increasing.
    pub points: Vec<(f64, f64)>,
}

impl Default for MosTable {
    fn default() -> Self {
        Self {
            points: vec![
                (0.0, 4.2),
                (0.05, 3.6),
                (0.1, 3.1),
                (0.2, 2.3),
                (0.3, 1.8),
                (0.5, 1.0),
            ],
        }
    }
}

impl MosTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let t = Self { points };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("MOS table is empty".into()));
        }
        for &(x, y) in &self.points {
            if !(0.0..=1.0).contains(&x) || !(1.0..=4.5).contains(&y) {
                return Err(Error::Config(format!(
                    "MOS knot ({x}, {y}) outside [0,1] x [1,4.5]"
                )));
            }
        }
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 > w[0].1 {
                return Err(Error::Config(
                    "MOS table must have increasing loss and non-increasing score".into(),
                ));
            }
        }
        Ok(())
    }

    /// Reads a two-column CSV with header `effective_loss,mos`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["effective_loss", "mos"] {
            return Err(Error::Config(format!(
                "{}: expected header effective_loss,mos",
                path.display()
            )));
        }
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let (x, y): (f64, f64) = row.map_err(csv_err)?;
            points.push((x, y));
        }
        Self::new(points)
    }

    pub fn eval(&self, effective_loss: f64) -> f64 {
        let pts = &self.points;
        if effective_loss <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if effective_loss <= x1 {
                return y0 + (y1 - y0) * (effective_loss - x0) / (x1 - x0);
            }
        }
        pts[pts.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosModel {
    pub activity_factor: f64,
    pub bitrate_kbps: f64,
    /// Optional CSV replacing the built-in table; empty means built-in.
    pub table_path: String,
    #[serde(skip)]
    pub table: MosTable,
}

impl Default for MosModel {
    fn default() -> Self {
        Self {
            activity_factor: 0.7,
            bitrate_kbps: 23.85,
            table_path: String::new(),
            table: MosTable::default(),
        }
    }
}

impl MosModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.activity_factor > 0.0 && self.activity_factor <= 1.0) {
            return Err(Error::Config("activity_factor must lie in (0, 1]".into()));
        }
        if !(self.bitrate_kbps > 0.0) {
            return Err(Error::Config("bitrate_kbps must be positive".into()));
        }
        self.table.validate()
    }

    /// Loads `table_path` if set.
    pub fn load_table(&mut self) -> Result<()> {
        if !self.table_path.is_empty() {
            self.table = MosTable::from_csv(Path::new(&self.table_path))?;
        }
        Ok(())
    }

    pub fn mos(&self, per: f64) -> Result<f64> {
        mos(per, self.activity_factor, self.bitrate_kbps, &self.table)
    }
}

/// Score for packet error rate `per` at the given voice activity factor.
/// The built-in table is defined for a single codec rate, so `bitrate_kbps`
/// is only range-checked.
pub fn mos(per: f64, activity_factor: f64, bitrate_kbps: f64, table: &MosTable) -> Result<f64> {
    if !(0.0..=1.0).contains(&per) {
        return Err(Error::invalid(format!("PER must lie in [0, 1], got {per}")));
    }
    if !(activity_factor > 0.0 && activity_factor <= 1.0) || !(bitrate_kbps > 0.0) {
        return Err(Error::invalid("activity factor must lie in (0,1], bitrate > 0"));
    }
    Ok(table.eval(per * activity_factor))
}

/// Power split maximizing `Σ log2(1 + p_k g_k / n0)` under `Σ p_k = power`.
pub fn waterfill(gains: &[f64], power: f64, noise: f64) -> Result<Vec<f64>> {
    if gains.is_empty() {
        return Err(Error::invalid("no subchannels to waterfill"));
    }
    if !(power > 0.0) || !(noise > 0.0) || !power.is_finite() {
        return Err(Error::invalid("power budget and noise must be positive"));
    }
    if gains.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::invalid("subchannel gains must be positive and finite"));
    }
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let floors: Vec<f64> = order.iter().map(|&i| noise / gains[i]).collect();

    let mut active = floors.len();
    let mut level;
    loop {
        level = (power + floors[..active].iter().sum::<f64>()) / active as f64;
        if level > floors[active - 1] || active == 1 {
            break;
        }
        active -= 1;
    }
    let mut p = vec![0.0; gains.len()];
    for (rank, &i) in order.iter().enumerate().take(active) {
        p[i] = level - floors[rank];
    }
    Ok(p)
}

pub fn sum_rate_bits(gains: &[f64], powers: &[f64], noise: f64) -> f64 {
    gains
        .iter()
        .zip(powers)
        .map(|(g, p)| (1.0 + p * g / noise).log2())
        .sum()
}

/// Post-zero-forcing stream gains `1 / [(G)^-1]_kk` with `G` the smaller
/// Gram matrix of `h` (`n_rx x n_tx`). Streams that make `G` singular are
/// dropped, weakest first.
pub fn zf_subchannel_gains(h: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(Error::invalid("empty channel matrix"));
    }
    // Streams live along the smaller dimension.
    let streams_are_rows = h.nrows() <= h.ncols();
    let mut keep: Vec<usize> = (0..h.nrows().min(h.ncols())).collect();
    let scale = h.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    while !keep.is_empty() {
        let sub = if streams_are_rows {
            h.select_rows(&keep)
        } else {
            h.select_columns(&keep)
        };
        let gram = if streams_are_rows {
            &sub * sub.adjoint()
        } else {
            sub.adjoint() * &sub
        };
        if let Some(inv) = gram.clone().try_inverse() {
            let gains: Vec<f64> = (0..keep.len()).map(|k| 1.0 / inv[(k, k)].re).collect();
            if gains.iter().all(|&g| g.is_finite() && g > 1e-12 * scale) {
                return Ok(gains);
            }
        }
        let weakest = (0..keep.len())
            .min_by(|&a, &b| gram[(a, a)].re.total_cmp(&gram[(b, b)].re))
            .expect("non-empty");
        keep.remove(weakest);
    }
    Err(Error::invalid("channel matrix has no usable subchannel"))
}

/// Bits per channel use with ZF equalization and waterfilling, capped at
/// `log2 modulation_order`.
pub fn spectral_efficiency(
    h: &DMatrix<Complex64>,
    tx_power: f64,
    noise: f64,
    modulation_order: u32,
) -> Result<f64> {
    if modulation_order < 2 {
        return Err(Error::invalid("modulation order must be >= 2"));
    }
    let gains = zf_subchannel_gains(h)?;
    let p = waterfill(&gains, tx_power, noise)?;
    Ok(sum_rate_bits(&gains, &p, noise).min(f64::from(modulation_order).log2()))
}

/// Linear-interpolation percentile (order statistic at rank `p (n-1)`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub peak: f64,
    pub avg: f64,
    pub edge: f64,
}

/// 95th percentile, mean and 5th percentile.
pub fn throughput_percentiles(samples: &[f64]) -> Result<Percentiles> {
    if samples.is_empty() {
        return Err(Error::invalid("no throughput samples"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Percentiles {
        peak: percentile(&s, 0.95),
        avg: s.iter().sum::<f64>() / s.len() as f64,
        edge: percentile(&s, 0.05),
    })
}

/// Throughput in Mbps for one UE given its spectral efficiency, bandwidth
/// share and packet error rate.
pub fn ue_throughput_mbps(se_bits: f64, bandwidth_share_hz: f64, per: f64) -> f64 {
    se_bits * bandwidth_share_hz * (1.0 - per) / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub retainability: f64,
    pub mos: f64,
    pub avg_cell_throughput_mbps: f64,
    pub ue_throughput_peak_mbps: f64,
    pub ue_throughput_avg_mbps: f64,
    pub ue_throughput_edge_mbps: f64,
    pub avg_spectral_efficiency_bits_per_cu: f64,
}
