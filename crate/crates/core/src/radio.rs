//! Link budget, propagation, antenna and SINR building blocks shared by the
//! indoor and outdoor environments.
//!
//! Everything here is a pure function of its arguments. Powers are carried in
//! dBm at the API edges and converted to milliwatts for summation.

use std::f64::consts::PI;
use std::sync::Once;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Frequency range over which the indoor log-distance model is declared valid.
pub const INDOOR_FREQ_RANGE_MHZ: (f64, f64) = (800.0, 6000.0);
/// Frequency range of the published COST231-Hata fit.
pub const COST231_FREQ_RANGE_MHZ: (f64, f64) = (1500.0, 2000.0);

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    linear_to_db(mw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationEnv {
    Indoor,
    Outdoor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub max_bs_power_dbm: f64,
    pub initial_tx_power_dbm: f64,
    pub tx_antenna_gain_dbi: f64,
    pub ue_antenna_gain_dbi: f64,
    pub misc_loss_db: f64,
    pub noise_density_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub n_prb: u32,
    pub carrier_freq_mhz: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub n_tx_antennas: u32,
    pub n_rx_antennas: u32,
    /// Exponent of the indoor log-distance model.
    pub path_loss_exponent: f64,
}

impl RadioConfig {
    /// Indoor VoLTE cluster defaults.
    pub fn indoor() -> Self {
        Self {
            max_bs_power_dbm: 33.0,
            initial_tx_power_dbm: 13.0,
            tx_antenna_gain_dbi: 4.0,
            ue_antenna_gain_dbi: -1.0,
            misc_loss_db: 0.0,
            noise_density_dbm_per_hz: -174.0,
            bandwidth_hz: 20e6,
            n_prb: 100,
            carrier_freq_mhz: 2600.0,
            bs_height_m: 10.0,
            ue_height_m: 1.5,
            n_tx_antennas: 2,
            n_rx_antennas: 2,
            path_loss_exponent: 1.8,
        }
    }

    /// Outdoor macro cluster defaults. Electrical tilt is folded into
    /// `misc_loss_db`.
    pub fn outdoor() -> Self {
        Self {
            max_bs_power_dbm: 46.0,
            initial_tx_power_dbm: 46.0,
            tx_antenna_gain_dbi: 15.0,
            ue_antenna_gain_dbi: 0.0,
            misc_loss_db: 0.0,
            noise_density_dbm_per_hz: -174.0,
            bandwidth_hz: 10e6,
            n_prb: 50,
            carrier_freq_mhz: 2100.0,
            bs_height_m: 25.0,
            ue_height_m: 1.5,
            n_tx_antennas: 4,
            n_rx_antennas: 2,
            path_loss_exponent: 1.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.max_bs_power_dbm,
            self.initial_tx_power_dbm,
            self.tx_antenna_gain_dbi,
            self.ue_antenna_gain_dbi,
            self.misc_loss_db,
            self.noise_density_dbm_per_hz,
            self.bandwidth_hz,
            self.carrier_freq_mhz,
            self.bs_height_m,
            self.ue_height_m,
            self.path_loss_exponent,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("radio parameters must be finite".into()));
        }
        if self.max_bs_power_dbm < self.initial_tx_power_dbm {
            return Err(Error::Config(format!(
                "max_bs_power_dbm ({}) must be >= initial_tx_power_dbm ({})",
                self.max_bs_power_dbm, self.initial_tx_power_dbm
            )));
        }
        if self.n_prb < 1 {
            return Err(Error::Config("n_prb must be >= 1".into()));
        }
        if self.n_rx_antennas < 1 || self.n_tx_antennas < self.n_rx_antennas {
            return Err(Error::Config(
                "antenna counts must satisfy n_tx >= n_rx >= 1".into(),
            ));
        }
        if self.bandwidth_hz <= 0.0 || self.carrier_freq_mhz <= 0.0 {
            return Err(Error::Config(
                "bandwidth and carrier frequency must be positive".into(),
            ));
        }
        if self.bs_height_m <= 0.0 || self.ue_height_m <= 0.0 || self.path_loss_exponent <= 0.0 {
            return Err(Error::Config(
                "heights and path loss exponent must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Thermal noise over `n_prb_ue` resource blocks, in mW.
    pub fn noise_mw(&self, n_prb_ue: u32) -> f64 {
        let hz = self.bandwidth_hz * f64::from(n_prb_ue) / f64::from(self.n_prb);
        dbm_to_mw(self.noise_density_dbm_per_hz + linear_to_db(hz))
    }

    /// Per-PRB cap on the power any one interferer can contribute, in mW.
    pub fn prb_power_cap_mw(&self) -> f64 {
        dbm_to_mw(self.max_bs_power_dbm) / f64::from(self.n_prb)
    }

    pub fn max_bs_power_mw(&self) -> f64 {
        dbm_to_mw(self.max_bs_power_dbm)
    }
}

static INDOOR_FREQ_WARN: Once = Once::new();
static COST231_FREQ_WARN: Once = Once::new();

fn clamp_frequency(freq_mhz: f64, range: (f64, f64), model: &str, once: &Once) -> f64 {
    if freq_mhz < range.0 || freq_mhz > range.1 {
        once.call_once(|| {
            log::warn!(
                "{model}: carrier {freq_mhz} MHz is outside the model's validity range \
                 [{}, {}] MHz; clamping",
                range.0,
                range.1
            )
        });
    }
    freq_mhz.clamp(range.0, range.1)
}

/// Free-space loss at 1 m.
pub fn free_space_intercept_db(freq_mhz: f64) -> f64 {
    20.0 * (4.0 * PI * freq_mhz * 1e6 / SPEED_OF_LIGHT_M_S).log10()
}

/// COST231-Hata for large urban areas (3 dB metropolitan correction).
fn cost231_hata_urban_db(distance_m: f64, freq_mhz: f64, bs_height_m: f64, ue_height_m: f64) -> f64 {
    let log_f = freq_mhz.log10();
    let log_hb = bs_height_m.log10();
    let mobile_correction = 3.2 * (11.75 * ue_height_m).log10().powi(2) - 4.97;
    let metropolitan_db = 3.0;
    46.3 + 33.9 * log_f - 13.82 * log_hb - mobile_correction
        + (44.9 - 6.55 * log_hb) * (distance_m / 1000.0).log10()
        + metropolitan_db
}

/// Path loss in dB. Distances below 1 m are clamped to 1 m.
pub fn path_loss_db(env: PropagationEnv, distance_m: f64, config: &RadioConfig) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::invalid(format!(
            "distance must be positive and finite, got {distance_m}"
        )));
    }
    if !(config.carrier_freq_mhz > 0.0) {
        return Err(Error::invalid("carrier frequency must be positive"));
    }
    let d = distance_m.max(1.0);
    let pl = match env {
        PropagationEnv::Indoor => {
            let f = clamp_frequency(
                config.carrier_freq_mhz,
                INDOOR_FREQ_RANGE_MHZ,
                "indoor log-distance",
                &INDOOR_FREQ_WARN,
            );
            free_space_intercept_db(f) + 10.0 * config.path_loss_exponent * d.log10()
        }
        PropagationEnv::Outdoor => {
            let f = clamp_frequency(
                config.carrier_freq_mhz,
                COST231_FREQ_RANGE_MHZ,
                "COST231-Hata",
                &COST231_FREQ_WARN,
            );
            cost231_hata_urban_db(d, f, config.bs_height_m, config.ue_height_m)
        }
    };
    Ok(pl)
}

/// Forward link budget: `P_TX + G_TX - L_m - L_p + G_UE`.
pub fn received_power_dbm(tx_power_dbm: f64, path_loss_db: f64, config: &RadioConfig) -> Result<f64> {
    let inputs = [
        tx_power_dbm,
        path_loss_db,
        config.tx_antenna_gain_dbi,
        config.misc_loss_db,
        config.ue_antenna_gain_dbi,
    ];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("link budget terms must be finite"));
    }
    Ok(tx_power_dbm + config.tx_antenna_gain_dbi - config.misc_loss_db - path_loss_db
        + config.ue_antenna_gain_dbi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrSample {
    pub ue_index: usize,
    pub tti: u32,
    pub sinr_linear: f64,
    pub sinr_db: f64,
}

impl SinrSample {
    pub fn from_linear(ue_index: usize, tti: u32, sinr_linear: f64) -> Result<Self> {
        if !(sinr_linear > 0.0) || !sinr_linear.is_finite() {
            return Err(Error::invalid(format!(
                "SINR must be positive and finite, got {sinr_linear}"
            )));
        }
        Ok(Self {
            ue_index,
            tti,
            sinr_linear,
            sinr_db: linear_to_db(sinr_linear),
        })
    }

    pub fn from_db(ue_index: usize, tti: u32, sinr_db: f64) -> Result<Self> {
        if !sinr_db.is_finite() {
            return Err(Error::invalid("SINR in dB must be finite"));
        }
        Ok(Self {
            ue_index,
            tti,
            sinr_linear: db_to_linear(sinr_db),
            sinr_db,
        })
    }

    pub fn at_tti(mut self, tti: u32) -> Self {
        self.tti = tti;
        self
    }
}

/// Downlink SINR with inter-cell interference treated as noise.
pub fn sinr(
    ue_index: usize,
    serving_rx_power_mw: f64,
    interferer_rx_powers_mw: &[f64],
    noise_mw: f64,
) -> Result<SinrSample> {
    if !(noise_mw > 0.0) {
        return Err(Error::invalid(format!("noise power must be positive, got {noise_mw}")));
    }
    if interferer_rx_powers_mw.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::invalid("interferer powers must be non-negative"));
    }
    let ici: f64 = interferer_rx_powers_mw.iter().sum();
    SinrSample::from_linear(ue_index, 0, serving_rx_power_mw / (noise_mw + ici))
}

/// Caps one interferer's received power at the per-PRB bound.
pub fn clamp_interferer_mw(rx_power_mw: f64, config: &RadioConfig) -> f64 {
    rx_power_mw.min(config.prb_power_cap_mw())
}

/// dB of the mean of the linear SINRs.
pub fn effective_sinr_db(samples: &[SinrSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("effective SINR of an empty sample set"));
    }
    Ok(effective_sinr_db_from_linear(
        samples.iter().map(|s| s.sinr_linear),
    ))
}

pub(crate) fn effective_sinr_db_from_linear(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    linear_to_db(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaPattern {
    pub theta_3db_deg: f64,
    pub max_attenuation_db: f64,
    pub boresight_deg: f64,
}

impl Default for AntennaPattern {
    fn default() -> Self {
        Self {
            theta_3db_deg: 65.0,
            max_attenuation_db: 20.0,
            boresight_deg: 0.0,
        }
    }
}

impl AntennaPattern {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_3db_deg > 0.0) || !(self.max_attenuation_db > 0.0) {
            return Err(Error::Config(
                "antenna pattern needs theta_3db_deg > 0 and max_attenuation_db > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Horizontal antenna gain relative to boresight, `-min(12 (θ/θ3dB)^2, A_m)`.
pub fn azimuth_gain_db(pattern: &AntennaPattern, theta_deg: f64) -> Result<f64> {
    pattern.validate().map_err(|e| Error::invalid(e.to_string()))?;
    if !(-180.0..=180.0).contains(&theta_deg) {
        return Err(Error::invalid(format!(
            "azimuth angle {theta_deg} is outside [-180, 180] degrees"
        )));
    }
    let ratio = theta_deg / pattern.theta_3db_deg;
    Ok(-(12.0 * ratio * ratio).min(pattern.max_attenuation_db))
}

/// Gain change when the pointing angle moves from the pattern's nominal
/// angle to `theta_deg`.
pub fn azimuth_delta_db(pattern: &AntennaPattern, theta_deg: f64) -> Result<f64> {
    Ok(azimuth_gain_db(pattern, theta_deg)? - azimuth_gain_db(pattern, pattern.boresight_deg)?)
}

/// Wraps an angle into (-180, 180].
pub fn wrap_angle_deg(theta_deg: f64) -> f64 {
    let mut a = theta_deg % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

/// Change in return loss when the VSWR moves from `v0` to `v`.
pub fn vswr_delta_loss_db(v0: f64, v: f64) -> Result<f64> {
    if !(v0 > 1.0) || !(v > 1.0) || !v0.is_finite() || !v.is_finite() {
        return Err(Error::invalid(format!(
            "VSWR values must be finite and > 1, got v0 = {v0}, v = {v}"
        )));
    }
    let ratio = ((v0 + 1.0) / (v0 - 1.0)).abs() * ((v - 1.0) / (v + 1.0)).abs();
    Ok(10.0 * (ratio * ratio).log10())
}

/// Conservative SINR once one neighbor is down: every remaining interferer
/// is charged at full base-station power.
pub fn neighbor_down_sinr_lower_bound(
    serving_rx_power_mw: f64,
    noise_mw: f64,
    n_cells: usize,
    config: &RadioConfig,
) -> Result<SinrSample> {
    if n_cells < 2 {
        return Err(Error::invalid(format!(
            "cluster must have at least 2 cells, got {n_cells}"
        )));
    }
    if !(noise_mw > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    let worst_ici = (n_cells - 2) as f64 * config.max_bs_power_mw();
    SinrSample::from_linear(0, 0, serving_rx_power_mw / (noise_mw + worst_ici))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    IndoorSquare,
    OutdoorHex,
}

/// Static cluster geometry. The serving base station sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub layout: Layout,
    pub cell_size_m: f64,
    pub serving_position: [f64; 2],
    pub neighbor_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
}

impl Topology {
    /// One base station per square room of side `room_m`, four neighbors on
    /// the cardinal axes.
    pub fn indoor_square(room_m: f64) -> Result<Self> {
        if !(room_m > 0.0) {
            return Err(Error::invalid("room size must be positive"));
        }
        Ok(Self {
            layout: Layout::IndoorSquare,
            cell_size_m: room_m,
            serving_position: [0.0, 0.0],
            neighbor_positions: vec![[room_m, 0.0], [0.0, room_m], [-room_m, 0.0], [0.0, -room_m]],
            ue_positions: Vec::new(),
        })
    }

    /// Seven-site hexagonal cluster with the given inter-site distance.
    pub fn hex(inter_site_m: f64) -> Result<Self> {
        if !(inter_site_m > 0.0) {
            return Err(Error::invalid("inter-site distance must be positive"));
        }
        let neighbor_positions = (0..6)
            .map(|k| {
                let a = (30.0 + 60.0 * k as f64).to_radians();
                [inter_site_m * a.cos(), inter_site_m * a.sin()]
            })
            .collect();
        Ok(Self {
            layout: Layout::OutdoorHex,
            cell_size_m: inter_site_m,
            serving_position: [0.0, 0.0],
            neighbor_positions,
            ue_positions: Vec::new(),
        })
    }

    pub fn n_cells(&self) -> usize {
        1 + self.neighbor_positions.len()
    }
}

pub fn distance_m(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
