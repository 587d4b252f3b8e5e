//! Indoor VoLTE closed-loop power control.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{neighbor_down_contribution, one_hot, Environment, Transition, UeLink, N_STATES};
use crate::error::{Error, Result};
use crate::events::{
    event_sinr_delta_db, sample_event, Contribution, EnvKind, EventConfig, EventContext,
    FaultKind, FaultState,
};
use crate::harness::placement::place_users_indoor;
use crate::harness::rng::{stream, Stream};
use crate::radio::{
    clamp_interferer_mw, db_to_linear, dbm_to_mw, distance_m, effective_sinr_db_from_linear,
    path_loss_db, received_power_dbm, PropagationEnv, RadioConfig, Topology,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolteParams {
    pub room_m: f64,
    pub ppp_intensity: f64,
    pub max_ues: usize,
    pub n_prb_ue: u32,
    pub neighbor_tx_power_dbm: f64,
    pub gamma_init_db: f64,
    pub gamma_target_db: f64,
    pub horizon: u32,
    pub scheduler_period: u32,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for VolteParams {
    fn default() -> Self {
        Self {
            room_m: 10.0,
            ppp_intensity: 0.5,
            max_ues: 10,
            n_prb_ue: 1,
            neighbor_tx_power_dbm: 13.0,
            gamma_init_db: 4.0,
            gamma_target_db: 6.0,
            horizon: 20,
            scheduler_period: 20,
            r_min: -10.0,
            r_max: 10.0,
        }
    }
}

impl VolteParams {
    pub fn validate(&self, radio: &RadioConfig) -> Result<()> {
        if !(self.room_m > 0.0) || !(self.ppp_intensity > 0.0) || self.max_ues == 0 {
            return Err(Error::Config(
                "room_m, ppp_intensity and max_ues must be positive".into(),
            ));
        }
        if self.n_prb_ue < 1 || self.n_prb_ue > radio.n_prb {
            return Err(Error::Config(format!(
                "n_prb_ue must lie in [1, {}], got {}",
                radio.n_prb, self.n_prb_ue
            )));
        }
        if self.horizon < 1 || self.scheduler_period < 1 {
            return Err(Error::Config("horizon and scheduler_period must be >= 1".into()));
        }
        if !(self.r_min < 0.0 && self.r_max > 0.0) {
            return Err(Error::Config("need r_min < 0 < r_max".into()));
        }
        if !(self.gamma_target_db > self.gamma_init_db) {
            return Err(Error::Config("gamma_target_db must exceed gamma_init_db".into()));
        }
        Ok(())
    }
}

/// `(κ, PC)` for an action id.
pub fn volte_action(action: usize) -> Result<(u32, i32)> {
    match action {
        0 => Ok((0, 0)),
        1 => Ok((3, -1)),
        2 => Ok((1, -1)),
        3 => Ok((1, 1)),
        4 => Ok((3, 1)),
        _ => Err(Error::invalid(format!("action {action} outside 0..5"))),
    }
}

#[derive(Debug, Clone)]
pub struct VolteEnv {
    radio: RadioConfig,
    events: EventConfig,
    params: VolteParams,
    topology: Topology,
    links: Vec<UeLink>,
    noise_mw: f64,
    /// Per-UE SINR at the initial power, after calibration.
    base_db: Vec<f64>,
    power_dbm: Vec<f64>,
    power_capped: bool,
    stop_at_target: bool,
    faults: FaultState,
    gamma_hist: Vec<f64>,
    cursor: usize,
    t: u32,
    state: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl VolteEnv {
    pub fn new(radio: RadioConfig, events: EventConfig, params: VolteParams) -> Result<Self> {
        radio.validate()?;
        events.validate(EnvKind::Indoor)?;
        params.validate(&radio)?;
        let topology = Topology::indoor_square(params.room_m)?;
        let noise_mw = radio.noise_mw(params.n_prb_ue);
        let mut env = Self {
            radio,
            events,
            params,
            topology,
            links: Vec::new(),
            noise_mw,
            base_db: Vec::new(),
            power_dbm: Vec::new(),
            power_capped: true,
            stop_at_target: true,
            faults: FaultState::new(EnvKind::Indoor, 0),
            gamma_hist: Vec::new(),
            cursor: 0,
            t: 0,
            state: 0,
            done: true,
            rng: stream(0, Stream::Events),
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn with_defaults() -> Result<Self> {
        Self::new(RadioConfig::indoor(), EventConfig::indoor(), VolteParams::default())
    }

    pub fn params(&self) -> &VolteParams {
        &self.params
    }

    pub fn radio(&self) -> &RadioConfig {
        &self.radio
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_ues(&self) -> usize {
        self.base_db.len()
    }

    pub fn tx_power_dbm(&self) -> &[f64] {
        &self.power_dbm
    }

    pub fn faults(&self) -> &FaultState {
        &self.faults
    }

    pub fn gamma_history(&self) -> &[f64] {
        &self.gamma_hist
    }

    /// Replaces every UE's transmit power and lifts the `P_BS^max` cap for
    /// the rest of the episode. Used by the foresight baseline.
    pub fn override_power(&mut self, power_dbm: Vec<f64>) -> Result<()> {
        if power_dbm.len() != self.n_ues() {
            return Err(Error::Shape {
                expected: self.n_ues(),
                actual: power_dbm.len(),
            });
        }
        if power_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("override powers must be finite"));
        }
        self.power_dbm = power_dbm;
        self.power_capped = false;
        let g = self.compute_gamma();
        *self.gamma_hist.last_mut().expect("reset pushes γ̄[0]") = g;
        Ok(())
    }

    /// Per-UE SINR trajectory `[t][ue]`, `t = 0..=τ`, if no power command
    /// were ever issued on the episode seeded by `seed`.
    pub fn fixed_power_sinr_trace(&self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut replay = self.clone();
        replay.stop_at_target = false;
        replay.reset(seed)?;
        let mut trace = vec![replay.per_ue_sinr_db()];
        while !replay.done {
            replay.step(0)?;
            trace.push(replay.per_ue_sinr_db());
        }
        Ok(trace)
    }

    fn ue_sinr_db(&self, ue: usize) -> f64 {
        self.base_db[ue] + (self.power_dbm[ue] - self.radio.initial_tx_power_dbm)
            + self.faults.offset_db(ue)
    }

    fn compute_gamma(&self) -> f64 {
        effective_sinr_db_from_linear((0..self.n_ues()).map(|i| db_to_linear(self.ue_sinr_db(i))))
    }

    fn link_for(&self, ue: [f64; 2]) -> Result<UeLink> {
        let rx = |pos: [f64; 2], p: f64| -> Result<f64> {
            let pl = path_loss_db(PropagationEnv::Indoor, distance_m(pos, ue), &self.radio)?;
            Ok(dbm_to_mw(received_power_dbm(p, pl, &self.radio)?))
        };
        let serving_mw = rx(self.topology.serving_position, self.radio.initial_tx_power_dbm)?;
        let interferers_mw = self
            .topology
            .neighbor_positions
            .iter()
            .map(|&pos| Ok(clamp_interferer_mw(rx(pos, self.params.neighbor_tx_power_dbm)?, &self.radio)))
            .collect::<Result<Vec<_>>>()?;
        Ok(UeLink {
            serving_mw,
            interferers_mw,
        })
    }

    fn realize(&mut self, kind: FaultKind) -> Result<Contribution> {
        match kind {
            FaultKind::FeederLoss => Ok(self.events.feeder_contribution()),
            FaultKind::VswrAlarm => {
                let v = self.events.draw_vswr(&mut self.rng);
                self.events.vswr_contribution(v)
            }
            FaultKind::NeighborDown => {
                let down = self.rng.random_range(0..self.topology.neighbor_positions.len());
                neighbor_down_contribution(&self.links, down, self.noise_mw, &self.radio)
            }
            other => Err(Error::invalid(format!("{other:?} is not an indoor fault"))),
        }
    }
}

impl Environment for VolteEnv {
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
        let ues = place_users_indoor(
            self.params.ppp_intensity,
            self.params.room_m,
            self.params.max_ues,
            &mut placement,
        )?;
        self.links = ues.iter().map(|&u| self.link_for(u)).collect::<Result<_>>()?;
        self.topology.ue_positions = ues;
        let physical: Vec<f64> = self.links.iter().map(|l| l.sinr_linear(self.noise_mw)).collect();
        // Shift every UE equally so the cluster starts at the configured γ̄.
        let calib = self.params.gamma_init_db
            - effective_sinr_db_from_linear(physical.iter().copied());
        self.base_db = physical.iter().map(|&s| 10.0 * s.log10() + calib).collect();
        self.power_dbm = vec![self.radio.initial_tx_power_dbm; self.base_db.len()];
        self.power_capped = true;
        self.faults = FaultState::new(EnvKind::Indoor, self.base_db.len());
        self.rng = stream(seed, Stream::Events);
        self.cursor = 0;
        self.t = 0;
        self.state = 0;
        self.done = false;
        self.gamma_hist = vec![self.compute_gamma()];
        Ok(self.state)
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        let (kappa, pc) = volte_action(action)?;
        if self.done {
            return Err(Error::EpisodeOver);
        }
        self.t += 1;
        let gamma_prev = *self.gamma_hist.last().expect("non-empty");

        let mut clamped = false;
        if pc != 0 {
            let ue = self.cursor;
            let wanted = self.power_dbm[ue] + f64::from(kappa) * f64::from(pc);
            if self.power_capped && wanted > self.radio.max_bs_power_dbm {
                clamped = true;
                self.power_dbm[ue] = self.radio.max_bs_power_dbm;
            } else {
                self.power_dbm[ue] = wanted;
            }
        }
        self.cursor = (self.cursor + 1) % self.n_ues();
        let gamma_mid = self.compute_gamma();

        let event = sample_event(EnvKind::Indoor, &self.events.rates, self.faults.register(), &mut self.rng);
        let realized = match (event.event_id, event.paired_fault_id) {
            (f, None) if f != 0 && !self.faults.register().is_active(f) => {
                Some(self.realize(crate::events::fault_kind(EnvKind::Indoor, f)?)?)
            }
            _ => None,
        };
        let current: Vec<f64> = (0..self.n_ues()).map(|i| self.ue_sinr_db(i)).collect();
        let event_delta_db = event_sinr_delta_db(
            &event,
            &EventContext {
                per_ue_sinr_db: &current,
                state: &self.faults,
                realized: realized.as_ref(),
            },
        )?;
        self.faults.apply(&event, |_| {
            realized.clone().ok_or_else(|| Error::invalid("fault was not realized"))
        })?;

        let gamma = self.compute_gamma();
        self.gamma_hist.push(gamma);
        if self.power_capped {
            assert!(self.power_dbm.iter().all(|&p| p <= self.radio.max_bs_power_dbm));
        }

        let p = &self.params;
        let t = self.t;
        let lag = self.gamma_hist[t.saturating_sub(p.scheduler_period) as usize];
        let reached = gamma >= p.gamma_target_db;
        let stalled = t >= p.scheduler_period
            && t < p.horizon / 2
            && gamma <= self.gamma_hist[(t - p.scheduler_period) as usize];
        let reward = if reached {
            p.r_max
        } else if clamped || stalled {
            p.r_min
        } else if gamma > lag + 1e-9 {
            1.0
        } else if gamma < lag - 1e-9 {
            -1.0
        } else {
            0.0
        };
        self.state = match pc {
            0 => 0,
            1 => 1,
            _ => 2,
        };
        self.done = (reached && self.stop_at_target) || t >= p.horizon;
        Ok(Transition {
            tti: t,
            state: self.state,
            action,
            reward,
            terminal: self.done,
            event_id: event.event_id,
            event_delta_db,
            action_delta_db: gamma_mid - gamma_prev,
            observable: gamma,
        })
    }

    fn per_ue_sinr_db(&self) -> Vec<f64> {
        (0..self.n_ues()).map(|i| self.ue_sinr_db(i)).collect()
    }

    fn gamma_eff_db(&self) -> f64 {
        *self.gamma_hist.last().expect("non-empty")
    }

    fn observation(&self) -> Vec<f64> {
        one_hot(self.state, N_STATES)
    }

    fn observation_len(&self) -> usize {
        N_STATES
    }

    fn observable(&self) -> f64 {
        self.gamma_eff_db()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventRates;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn quiet() -> VolteEnv {
        let mut ev = EventConfig::indoor();
        ev.rates = EventRates { p_fault: 0.0, p_clear: 0.0 };
        VolteEnv::new(RadioConfig::indoor(), ev, VolteParams::default()).unwrap()
    }

    #[test]
    fn reset_starts_at_configured_operating_point() {
        let mut env = VolteEnv::with_defaults().unwrap();
        for seed in 0..20 {
            assert_eq!(env.reset(seed).unwrap(), 0);
            assert_abs_diff_eq!(env.gamma_eff_db(), 4.0, epsilon = 1e-12);
            assert!(env.tx_power_dbm().iter().all(|&p| p == 13.0));
            assert_eq!(env.n_ues(), 10);
            assert_eq!(env.tti(), 0);
        }
    }

    #[test]
    fn noop_in_quiet_cluster() {
        let mut env = quiet();
        env.reset(3).unwrap();
        let tr = env.step(0).unwrap();
        assert_eq!(tr.state, 0);
        assert_eq!(tr.reward, 0.0);
        assert_eq!(tr.event_id, 0);
        assert_abs_diff_eq!(tr.observable, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn power_clamps_at_maximum() {
        let mut env = quiet();
        env.reset(4).unwrap();
        let mut p = env.tx_power_dbm().to_vec();
        p[0] = 32.0;
        env.power_dbm = p;
        env.cursor = 0;
        let tr = env.step(4).unwrap();
        assert_eq!(env.tx_power_dbm()[0], 33.0);
        assert_eq!(tr.state, 1);
    }

    #[test]
    fn reaching_target_pays_and_terminates() {
        let mut env = quiet();
        env.reset(5).unwrap();
        let mut last = None;
        for _ in 0..20 {
            let tr = env.step(4).unwrap();
            let done = tr.terminal;
            last = Some(tr);
            if done {
                break;
            }
        }
        let tr = last.unwrap();
        assert!(tr.observable >= 6.0);
        assert_eq!(tr.reward, 10.0);
        assert!(tr.terminal);
        assert!(matches!(env.step(0), Err(Error::EpisodeOver)));
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = quiet();
        assert!(env.step(5).is_err());
    }

    #[test]
    fn equal_seeds_equal_traces() {
        let run = |seed| {
            let mut env = VolteEnv::with_defaults().unwrap();
            env.reset(seed).unwrap();
            let mut out = Vec::new();
            let mut a = 0;
            while !env.is_done() {
                out.push(env.step(a % 5).unwrap());
                a += 1;
            }
            out
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn override_lifts_cap() {
        let mut env = quiet();
        env.reset(6).unwrap();
        env.override_power(vec![40.0; env.n_ues()]).unwrap();
        assert_abs_diff_eq!(env.gamma_eff_db(), 4.0 + 27.0, epsilon = 1e-9);
        assert!(env.override_power(vec![1.0]).is_err());
    }

    #[test]
    fn fixed_power_trace_covers_horizon() {
        let env = VolteEnv::with_defaults().unwrap();
        let tr = env.fixed_power_sinr_trace(9).unwrap();
        assert_eq!(tr.len(), 21);
        assert!(tr.iter().all(|row| row.len() == env.n_ues()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn state_labels_follow_actions(seed in any::<u64>(), actions in proptest::collection::vec(0usize..5, 1..20)) {
            let mut env = VolteEnv::with_defaults().unwrap();
            env.reset(seed).unwrap();
            for a in actions {
                if env.is_done() { break; }
                let tr = env.step(a).unwrap();
                let expected = match a { 0 => 0, 3 | 4 => 1, _ => 2 };
                prop_assert_eq!(tr.state, expected);
                prop_assert!(env.tx_power_dbm().iter().all(|&p| p <= 33.0));
            }
        }

        #[test]
        fn gamma_accounting_telescopes(seed in any::<u64>(), actions in proptest::collection::vec(0usize..5, 20)) {
            let mut env = VolteEnv::with_defaults().unwrap();
            env.reset(seed).unwrap();
            let g0 = env.gamma_eff_db();
            let mut sum = 0.0;
            for a in actions {
                if env.is_done() { break; }
                let tr = env.step(a).unwrap();
                sum += tr.action_delta_db + tr.event_delta_db;
            }
            prop_assert!((env.gamma_eff_db() - (g0 + sum)).abs() <= 1e-9);
        }
    }
}
