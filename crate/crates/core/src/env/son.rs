//! Outdoor SON fault management.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{neighbor_down_contribution, one_hot, Environment, Transition, UeLink, N_STATES};
use crate::error::{Error, Result};
use crate::events::{
    clearing_event, event, event_sinr_delta_db, fault_kind, n_faults, sample_event, Contribution,
    EnvKind, EventConfig, EventContext, FaultKind, FaultState, NetworkEvent,
};
use crate::harness::placement::place_users_sector;
use crate::harness::rng::{stream, Stream};
use crate::radio::{
    azimuth_gain_db, clamp_interferer_mw, db_to_linear, dbm_to_mw, distance_m,
    effective_sinr_db_from_linear, linear_to_db, path_loss_db, received_power_dbm,
    wrap_angle_deg, AntennaPattern, PropagationEnv, RadioConfig, Topology,
};

pub const SECTORS_PER_SITE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SonParams {
    pub inter_site_m: f64,
    pub q: usize,
    pub ue_min_range_m: f64,
    pub shadowing_sigma_db: f64,
    pub horizon: u32,
    pub r_max: f64,
    /// Faults injected at reset; 0 leaves the register empty and relies on
    /// background arrivals.
    pub initial_faults: usize,
    pub antenna: AntennaPattern,
}

impl Default for SonParams {
    fn default() -> Self {
        Self {
            inter_site_m: 200.0,
            q: 10,
            ue_min_range_m: 10.0,
            shadowing_sigma_db: 8.0,
            horizon: 10,
            r_max: 10.0,
            initial_faults: 1,
            antenna: AntennaPattern::default(),
        }
    }
}

impl SonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inter_site_m > 0.0) || self.q == 0 {
            return Err(Error::Config("inter_site_m and q must be positive".into()));
        }
        if !(self.ue_min_range_m > 0.0) || self.ue_min_range_m >= self.cell_radius_m() {
            return Err(Error::Config(
                "ue_min_range_m must be positive and below the cell radius".into(),
            ));
        }
        if !(self.shadowing_sigma_db >= 0.0) || self.horizon < 1 || !(self.r_max > 1.0) {
            return Err(Error::Config(
                "need shadowing_sigma_db >= 0, horizon >= 1 and r_max > 1".into(),
            ));
        }
        if self.initial_faults > n_faults(EnvKind::Outdoor) {
            return Err(Error::Config(format!(
                "initial_faults must be at most {}",
                n_faults(EnvKind::Outdoor)
            )));
        }
        self.antenna.validate()
    }

    pub fn cell_radius_m(&self) -> f64 {
        self.inter_site_m / 3f64.sqrt()
    }
}

/// Fault id an action clears, or `None` for the no-op.
pub fn son_action_fault(action: usize) -> Result<Option<u8>> {
    match action {
        0 => Ok(None),
        1 => Ok(Some(2)),
        2 => Ok(Some(3)),
        3 => Ok(Some(4)),
        4 => Ok(Some(1)),
        _ => Err(Error::invalid(format!("action {action} outside 0..5"))),
    }
}

/// Action that clears `fault_id`.
pub fn son_fault_action(fault_id: u8) -> Result<usize> {
    (1..5)
        .find(|&a| son_action_fault(a).ok().flatten() == Some(fault_id))
        .ok_or_else(|| Error::invalid(format!("no action clears fault {fault_id}")))
}

#[derive(Debug, Clone)]
pub struct SonEnv {
    radio: RadioConfig,
    events: EventConfig,
    params: SonParams,
    topology: Topology,
    /// `(site position, boresight)` of every base station; index 0 serves.
    stations: Vec<([f64; 2], f64)>,
    links: Vec<UeLink>,
    noise_mw: f64,
    base_db: Vec<f64>,
    faults: FaultState,
    /// Fault ids in arrival order, for FIFO clearing.
    arrivals: Vec<u8>,
    t: u32,
    state: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl SonEnv {
    pub fn new(radio: RadioConfig, events: EventConfig, params: SonParams) -> Result<Self> {
        radio.validate()?;
        events.validate(EnvKind::Outdoor)?;
        params.validate()?;
        let topology = Topology::hex(params.inter_site_m)?;
        let sites: Vec<[f64; 2]> = std::iter::once(topology.serving_position)
            .chain(topology.neighbor_positions.iter().copied())
            .collect();
        let stations = sites
            .iter()
            .flat_map(|&s| (0..SECTORS_PER_SITE).map(move |k| (s, 360.0 * k as f64 / SECTORS_PER_SITE as f64)))
            .collect();
        let noise_mw = radio.noise_mw(radio.n_prb);
        let mut env = Self {
            radio,
            events,
            params,
            topology,
            stations,
            links: Vec::new(),
            noise_mw,
            base_db: Vec::new(),
            faults: FaultState::new(EnvKind::Outdoor, 0),
            arrivals: Vec::new(),
            t: 0,
            state: 0,
            done: true,
            rng: stream(0, Stream::Events),
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn with_defaults() -> Result<Self> {
        Self::new(RadioConfig::outdoor(), EventConfig::outdoor(), SonParams::default())
    }

    pub fn params(&self) -> &SonParams {
        &self.params
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.radio
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn n_ues(&self) -> usize {
        self.base_db.len()
    }

    pub fn faults(&self) -> &FaultState {
        &self.faults
    }

    /// Fault ids in the order they were raised, including ones since cleared.
    pub fn arrivals(&self) -> &[u8] {
        &self.arrivals
    }

    /// Forces `fault_id` active, drawing its contribution as a background
    /// arrival would.
    pub fn inject_fault(&mut self, fault_id: u8) -> Result<()> {
        let ev = event(EnvKind::Outdoor, fault_id)?;
        if ev.is_clearing || fault_id == 0 {
            return Err(Error::invalid(format!("event {fault_id} is not a fault")));
        }
        self.apply_event(&ev)?;
        Ok(())
    }

    fn ue_sinr_db(&self, ue: usize) -> f64 {
        self.base_db[ue] + self.faults.offset_db(ue)
    }

    fn realize(&mut self, kind: FaultKind) -> Result<Contribution> {
        match kind {
            FaultKind::FeederLoss => Ok(self.events.feeder_contribution()),
            FaultKind::RankLoss => Ok(self.events.rank_loss_contribution()),
            FaultKind::AzimuthChange => {
                let theta = self.events.draw_azimuth(&mut self.rng);
                self.events.azimuth_contribution(&self.params.antenna, theta)
            }
            FaultKind::NeighborDown => {
                let down = self.rng.random_range(0..self.stations.len() - 1);
                neighbor_down_contribution(&self.links, down, self.noise_mw, &self.radio)
            }
            FaultKind::VswrAlarm => Err(Error::invalid("VSWR alarms are indoor faults")),
        }
    }

    /// Prices and applies one event; returns the change in effective SINR.
    fn apply_event(&mut self, ev: &NetworkEvent) -> Result<f64> {
        let realized = match (ev.event_id, ev.paired_fault_id) {
            (f, None) if f != 0 && !self.faults.register().is_active(f) => {
                Some(self.realize(fault_kind(EnvKind::Outdoor, f)?)?)
            }
            _ => None,
        };
        let current = self.per_ue_sinr_db();
        let delta = event_sinr_delta_db(
            ev,
            &EventContext {
                per_ue_sinr_db: &current,
                state: &self.faults,
                realized: realized.as_ref(),
            },
        )?;
        if realized.is_some() {
            self.arrivals.push(ev.event_id);
        }
        self.faults.apply(ev, |_| {
            realized.clone().ok_or_else(|| Error::invalid("fault was not realized"))
        })?;
        Ok(delta)
    }

    fn build_links(&mut self, ues: &[[f64; 2]], shadow_db: &[Vec<f64>]) -> Result<()> {
        let n_sites = self.stations.len() / SECTORS_PER_SITE;
        let mut links = Vec::with_capacity(ues.len());
        for (i, &ue) in ues.iter().enumerate() {
            let mut rx = Vec::with_capacity(self.stations.len());
            for (b, &(site, boresight)) in self.stations.iter().enumerate() {
                let d = distance_m(site, ue).max(1.0);
                let bearing = (ue[1] - site[1]).atan2(ue[0] - site[0]).to_degrees();
                let gain = azimuth_gain_db(&self.params.antenna, wrap_angle_deg(bearing - boresight))?;
                let pl = path_loss_db(PropagationEnv::Outdoor, d, &self.radio)?;
                let p = received_power_dbm(self.radio.max_bs_power_dbm, pl, &self.radio)? + gain
                    - shadow_db[i][b / SECTORS_PER_SITE];
                rx.push(dbm_to_mw(p));
            }
            debug_assert_eq!(rx.len(), n_sites * SECTORS_PER_SITE);
            let serving_mw = rx[0];
            let interferers_mw = rx[1..].iter().map(|&p| clamp_interferer_mw(p, &self.radio)).collect();
            links.push(UeLink {
                serving_mw,
                interferers_mw,
            });
        }
        self.links = links;
        Ok(())
    }
}

impl Environment for SonEnv {
    fn horizon(&self) -> u32 {
        self.params.horizon
    }

    fn tti(&self) -> u32 {
        self.t
    }

    fn state(&self) -> usize {
        self.state
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn reset(&mut self, seed: u64) -> Result<usize> {
        let mut placement = stream(seed, Stream::Placement);
        let half_width = 180.0 / SECTORS_PER_SITE as f64;
        let ues = place_users_sector(
            self.params.q,
            self.stations[0].1,
            half_width,
            self.params.ue_min_range_m,
            self.params.cell_radius_m(),
            &mut placement,
        )?;
        let n_sites = self.stations.len() / SECTORS_PER_SITE;
        let shadow = Normal::new(0.0, self.params.shadowing_sigma_db)
            .map_err(|e| Error::Config(e.to_string()))?;
        let shadow_db: Vec<Vec<f64>> = (0..ues.len())
            .map(|_| (0..n_sites).map(|_| shadow.sample(&mut placement)).collect())
            .collect();
        self.build_links(&ues, &shadow_db)?;
        self.topology.ue_positions = ues;
        self.base_db = self
            .links
            .iter()
            .map(|l| linear_to_db(l.sinr_linear(self.noise_mw)))
            .collect();
        self.faults = FaultState::new(EnvKind::Outdoor, self.base_db.len());
        self.arrivals.clear();
        self.rng = stream(seed, Stream::Events);
        for _ in 0..self.params.initial_faults {
            let inactive: Vec<u8> = (1..=n_faults(EnvKind::Outdoor) as u8)
                .filter(|&f| !self.faults.register().is_active(f))
                .collect();
            let f = inactive[self.rng.random_range(0..inactive.len())];
            self.inject_fault(f)?;
        }
        self.t = 0;
        self.state = 0;
        self.done = false;
        Ok(self.state)
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        let target = son_action_fault(action)?;
        if self.done {
            return Err(Error::EpisodeOver);
        }
        self.t += 1;
        let before = self.faults.register().popcount();
        let mut action_delta_db = 0.0;
        if let Some(f) = target {
            if self.faults.register().is_active(f) {
                action_delta_db = self.apply_event(&clearing_event(EnvKind::Outdoor, f)?)?;
            }
        }
        let ev = sample_event(EnvKind::Outdoor, &self.events.rates, self.faults.register(), &mut self.rng);
        let event_delta_db = self.apply_event(&ev)?;
        let after = self.faults.register().popcount();

        let (reward, state) = if after == 0 {
            (self.params.r_max, 2)
        } else if after < before {
            (1.0, 2)
        } else {
            (-1.0, 1)
        };
        self.state = state;
        self.done = after == 0 || self.t >= self.params.horizon;
        Ok(Transition {
            tti: self.t,
            state,
            action,
            reward,
            terminal: self.done,
            event_id: ev.event_id,
            event_delta_db,
            action_delta_db,
            observable: after as f64,
        })
    }

    fn per_ue_sinr_db(&self) -> Vec<f64> {
        (0..self.n_ues()).map(|i| self.ue_sinr_db(i)).collect()
    }

    fn gamma_eff_db(&self) -> f64 {
        effective_sinr_db_from_linear((0..self.n_ues()).map(|i| db_to_linear(self.ue_sinr_db(i))))
    }

    /// One-hot state followed by the fault register bits.
    fn observation(&self) -> Vec<f64> {
        let mut v = one_hot(self.state, N_STATES);
        v.extend(self.faults.register().bits().iter().map(|&b| if b { 1.0 } else { 0.0 }));
        v
    }

    fn observation_len(&self) -> usize {
        N_STATES + n_faults(EnvKind::Outdoor)
    }

    fn observable(&self) -> f64 {
        self.faults.register().popcount() as f64
    }
}
