//! Network event catalogs, occurrence sampling, the fault register and the
//! per-fault SINR contribution ledger.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{
    azimuth_delta_db, effective_sinr_db_from_linear, db_to_linear, vswr_delta_loss_db,
    AntennaPattern, PropagationEnv,
};

pub type EnvKind = PropagationEnv;

/// What a fault does to the link, independent of its catalog id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    FeederLoss,
    NeighborDown,
    VswrAlarm,
    AzimuthChange,
    RankLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkEvent {
    pub env_kind: EnvKind,
    pub event_id: u8,
    pub description: &'static str,
    pub is_clearing: bool,
    pub paired_fault_id: Option<u8>,
}

const fn ev(
    env_kind: EnvKind,
    event_id: u8,
    description: &'static str,
    paired_fault_id: Option<u8>,
) -> NetworkEvent {
    NetworkEvent {
        env_kind,
        event_id,
        description,
        is_clearing: paired_fault_id.is_some(),
        paired_fault_id,
    }
}

static INDOOR_CATALOG: [NetworkEvent; 7] = [
    ev(EnvKind::Indoor, 0, "Cluster is normal.", None),
    ev(EnvKind::Indoor, 1, "Feeder fault alarm (3 dB loss of signal).", None),
    ev(EnvKind::Indoor, 2, "Neighboring base station down.", None),
    ev(EnvKind::Indoor, 3, "VSWR out of range alarm.", None),
    ev(EnvKind::Indoor, 4, "Feeder fault alarm cleared.", Some(1)),
    ev(EnvKind::Indoor, 5, "Neighboring base station up again.", Some(2)),
    ev(EnvKind::Indoor, 6, "VSWR back in range.", Some(3)),
];

static OUTDOOR_CATALOG: [NetworkEvent; 9] = [
    ev(EnvKind::Outdoor, 0, "Cluster is normal.", None),
    ev(EnvKind::Outdoor, 1, "Changed antenna azimuth clockwise.", None),
    ev(EnvKind::Outdoor, 2, "Neighboring base station is down.", None),
    ev(EnvKind::Outdoor, 3, "Transmit diversity failed.", None),
    ev(EnvKind::Outdoor, 4, "Feeder fault alarm (6 dB loss of signal).", None),
    ev(EnvKind::Outdoor, 5, "Reset antenna azimuth.", Some(1)),
    ev(EnvKind::Outdoor, 6, "Neighboring base station is up again.", Some(2)),
    ev(EnvKind::Outdoor, 7, "Transmit diversity is normal.", Some(3)),
    ev(EnvKind::Outdoor, 8, "Feeder fault alarm cleared.", Some(4)),
];

pub fn catalog(kind: EnvKind) -> &'static [NetworkEvent] {
    match kind {
        EnvKind::Indoor => &INDOOR_CATALOG,
        EnvKind::Outdoor => &OUTDOOR_CATALOG,
    }
}

pub fn event(kind: EnvKind, event_id: u8) -> Result<NetworkEvent> {
    catalog(kind)
        .get(usize::from(event_id))
        .copied()
        .ok_or_else(|| Error::invalid(format!("unknown {kind:?} event id {event_id}")))
}

pub fn normal_event(kind: EnvKind) -> NetworkEvent {
    catalog(kind)[0]
}

/// Number of fault slots (and of clearing events) in a catalog.
pub fn n_faults(kind: EnvKind) -> usize {
    (catalog(kind).len() - 1) / 2
}

pub fn fault_kind(kind: EnvKind, fault_id: u8) -> Result<FaultKind> {
    use FaultKind::*;
    match (kind, fault_id) {
        (EnvKind::Indoor, 1) => Ok(FeederLoss),
        (EnvKind::Indoor, 2) => Ok(NeighborDown),
        (EnvKind::Indoor, 3) => Ok(VswrAlarm),
        (EnvKind::Outdoor, 1) => Ok(AzimuthChange),
        (EnvKind::Outdoor, 2) => Ok(NeighborDown),
        (EnvKind::Outdoor, 3) => Ok(RankLoss),
        (EnvKind::Outdoor, 4) => Ok(FeederLoss),
        _ => Err(Error::invalid(format!("{kind:?} catalog has no fault {fault_id}"))),
    }
}

/// The clearing event that reverses `fault_id`.
pub fn clearing_event(kind: EnvKind, fault_id: u8) -> Result<NetworkEvent> {
    catalog(kind)
        .iter()
        .find(|e| e.paired_fault_id == Some(fault_id))
        .copied()
        .ok_or_else(|| Error::invalid(format!("{kind:?} catalog has no fault {fault_id}")))
}

/// Per-event occurrence probabilities. Every fault event has probability
/// `p_fault`, every clearing event `p_clear`; "normal" takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRates {
    pub p_fault: f64,
    pub p_clear: f64,
}

impl EventRates {
    pub fn indoor() -> Self {
        Self {
            p_fault: 1.0 / 11.0,
            p_clear: 1.0 / 11.0,
        }
    }

    /// Outdoor clears happen only through agent actions by default.
    pub fn outdoor() -> Self {
        Self {
            p_fault: 1.0 / 9.0,
            p_clear: 0.0,
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Indoor => Self::indoor(),
            EnvKind::Outdoor => Self::outdoor(),
        }
    }

    pub fn p_normal(&self, kind: EnvKind) -> f64 {
        let n = n_faults(kind) as f64;
        1.0 - n * self.p_fault - n * self.p_clear
    }

    pub fn validate(&self, kind: EnvKind) -> Result<()> {
        for (name, p) in [("p_fault", self.p_fault), ("p_clear", self.p_clear)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        if self.p_normal(kind) < -1e-12 {
            return Err(Error::Config(format!(
                "event probabilities sum above 1 (p_normal = {})",
                self.p_normal(kind)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FaultRegister {
    bits: Vec<bool>,
}

impl FaultRegister {
    pub fn new(n_slots: usize) -> Self {
        Self {
            bits: vec![false; n_slots],
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        Self::new(n_faults(kind))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.popcount() == 0
    }

    pub fn is_active(&self, fault_id: u8) -> bool {
        fault_id >= 1 && self.bits.get(usize::from(fault_id) - 1).copied().unwrap_or(false)
    }

    /// Fault ids with their bit set, ascending.
    pub fn active_faults(&self) -> Vec<u8> {
        (1..=self.bits.len() as u8).filter(|&f| self.is_active(f)).collect()
    }

    fn slot(&self, fault_id: u8) -> Result<usize> {
        let i = usize::from(fault_id).wrapping_sub(1);
        if i < self.bits.len() {
            Ok(i)
        } else {
            Err(Error::invalid(format!(
                "fault id {fault_id} outside register of {} slots",
                self.bits.len()
            )))
        }
    }

    pub(crate) fn set(&mut self, fault_id: u8) -> Result<()> {
        let i = self.slot(fault_id)?;
        self.bits[i] = true;
        Ok(())
    }

    pub(crate) fn unset(&mut self, fault_id: u8) -> Result<()> {
        let i = self.slot(fault_id)?;
        if !self.bits[i] {
            return Err(Error::InactiveFault {
                fault_id: usize::from(fault_id),
            });
        }
        self.bits[i] = false;
        Ok(())
    }
}

/// Draws one event. Clearing events whose fault is inactive fold into
/// "normal". A fault that is already active stays eligible (a re-alarm).
pub fn sample_event<R: Rng + ?Sized>(
    kind: EnvKind,
    rates: &EventRates,
    register: &FaultRegister,
    rng: &mut R,
) -> NetworkEvent {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for e in &catalog(kind)[1..] {
        cum += if e.is_clearing { rates.p_clear } else { rates.p_fault };
        if u < cum {
            return match e.paired_fault_id {
                Some(f) if !register.is_active(f) => normal_event(kind),
                _ => *e,
            };
        }
    }
    normal_event(kind)
}

/// Returns the register after `event`.
pub fn apply_event(register: &FaultRegister, event: &NetworkEvent) -> Result<FaultRegister> {
    let mut next = register.clone();
    match (event.event_id, event.paired_fault_id) {
        (0, _) => {}
        (_, Some(f)) => next.unset(f)?,
        (id, None) => next.set(id)?,
    }
    Ok(next)
}

/// A fault's effect on per-UE SINR, in dB.
#[derive(Debug, Clone, PartialEq)]
pub enum Contribution {
    Uniform(f64),
    PerUe(Vec<f64>),
}

impl Contribution {
    pub fn zero() -> Self {
        Contribution::Uniform(0.0)
    }

    pub fn at(&self, ue: usize) -> f64 {
        match self {
            Contribution::Uniform(d) => *d,
            Contribution::PerUe(v) => v[ue],
        }
    }

    pub fn negated(&self) -> Self {
        match self {
            Contribution::Uniform(d) => Contribution::Uniform(-d),
            Contribution::PerUe(v) => Contribution::PerUe(v.iter().map(|d| -d).collect()),
        }
    }

    fn check_len(&self, n_ue: usize) -> Result<()> {
        match self {
            Contribution::PerUe(v) if v.len() != n_ue => Err(Error::Shape {
                expected: n_ue,
                actual: v.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Fault-specific tunables and the contributions they produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub rates: EventRates,
    pub feeder_loss_db: f64,
    pub vswr_nominal: f64,
    pub vswr_max: f64,
    pub azimuth_max_deg: f64,
    pub rank_full: u32,
    pub rank_reduced: u32,
}

impl EventConfig {
    pub fn indoor() -> Self {
        Self {
            rates: EventRates::indoor(),
            feeder_loss_db: 3.0,
            vswr_nominal: 1.5,
            vswr_max: 3.0,
            azimuth_max_deg: 30.0,
            rank_full: 2,
            rank_reduced: 1,
        }
    }

    pub fn outdoor() -> Self {
        Self {
            rates: EventRates::outdoor(),
            feeder_loss_db: 6.0,
            vswr_nominal: 1.5,
            vswr_max: 3.0,
            azimuth_max_deg: 30.0,
            rank_full: 4,
            rank_reduced: 2,
        }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Indoor => Self::indoor(),
            EnvKind::Outdoor => Self::outdoor(),
        }
    }

    pub fn validate(&self, kind: EnvKind) -> Result<()> {
        self.rates.validate(kind)?;
        if !(self.feeder_loss_db >= 0.0) {
            return Err(Error::Config("feeder_loss_db must be >= 0".into()));
        }
        if !(self.vswr_nominal > 1.0) || !(self.vswr_max > self.vswr_nominal) {
            return Err(Error::Config(
                "VSWR range must satisfy 1 < vswr_nominal < vswr_max".into(),
            ));
        }
        if !(self.azimuth_max_deg > 0.0 && self.azimuth_max_deg <= 180.0) {
            return Err(Error::Config("azimuth_max_deg must lie in (0, 180]".into()));
        }
        if self.rank_reduced < 1 || self.rank_full < self.rank_reduced {
            return Err(Error::Config(
                "ranks must satisfy rank_full >= rank_reduced >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn feeder_contribution(&self) -> Contribution {
        Contribution::Uniform(-self.feeder_loss_db)
    }

    pub fn vswr_contribution(&self, v: f64) -> Result<Contribution> {
        Ok(Contribution::Uniform(-vswr_delta_loss_db(self.vswr_nominal, v)?.abs()))
    }

    /// Draws v uniformly from (vswr_nominal, vswr_max].
    pub fn draw_vswr<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.vswr_max - u * (self.vswr_max - self.vswr_nominal)
    }

    pub fn azimuth_contribution(&self, pattern: &AntennaPattern, theta_deg: f64) -> Result<Contribution> {
        Ok(Contribution::Uniform(azimuth_delta_db(pattern, theta_deg)?))
    }

    pub fn draw_azimuth<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(-self.azimuth_max_deg..self.azimuth_max_deg)
    }

    pub fn rank_loss_contribution(&self) -> Contribution {
        Contribution::Uniform(
            -10.0 * (f64::from(self.rank_full) / f64::from(self.rank_reduced)).log10(),
        )
    }
}

/// Fault register plus the realized contribution of every active fault.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultState {
    kind: EnvKind,
    register: FaultRegister,
    stored: Vec<Option<Contribution>>,
    n_ue: usize,
}

impl FaultState {
    pub fn new(kind: EnvKind, n_ue: usize) -> Self {
        Self {
            kind,
            register: FaultRegister::for_kind(kind),
            stored: vec![None; n_faults(kind)],
            n_ue,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn register(&self) -> &FaultRegister {
        &self.register
    }

    pub fn stored(&self, fault_id: u8) -> Option<&Contribution> {
        self.stored.get(usize::from(fault_id).wrapping_sub(1))?.as_ref()
    }

    /// Sum of active contributions for one UE, accumulated in slot order.
    pub fn offset_db(&self, ue: usize) -> f64 {
        self.stored.iter().flatten().map(|c| c.at(ue)).sum()
    }

    /// Applies `event`, calling `realize` only for a fault that is not yet
    /// active. Returns the change in per-UE offset the event caused.
    pub fn apply(
        &mut self,
        event: &NetworkEvent,
        realize: impl FnOnce(FaultKind) -> Result<Contribution>,
    ) -> Result<Contribution> {
        if event.env_kind != self.kind {
            return Err(Error::invalid("event belongs to a different catalog"));
        }
        match (event.event_id, event.paired_fault_id) {
            (0, _) => Ok(Contribution::zero()),
            (_, Some(f)) => self.clear(f),
            (f, None) => {
                if self.register.is_active(f) {
                    return Ok(Contribution::zero());
                }
                let c = realize(fault_kind(self.kind, f)?)?;
                c.check_len(self.n_ue)?;
                self.register.set(f)?;
                self.stored[usize::from(f) - 1] = Some(c.clone());
                Ok(c)
            }
        }
    }

    /// Clears an active fault, returning the exact negation of its stored
    /// contribution.
    pub fn clear(&mut self, fault_id: u8) -> Result<Contribution> {
        self.register.unset(fault_id)?;
        let c = self.stored[usize::from(fault_id) - 1]
            .take()
            .expect("active fault always has a stored contribution");
        Ok(c.negated())
    }
}

/// Inputs needed to price one event against the current per-UE SINRs.
pub struct EventContext<'a> {
    pub per_ue_sinr_db: &'a [f64],
    pub state: &'a FaultState,
    /// Contribution a new fault would realize; unused for other events.
    pub realized: Option<&'a Contribution>,
}

/// Change in effective SINR that `event` causes, in dB.
pub fn event_sinr_delta_db(event: &NetworkEvent, ctx: &EventContext<'_>) -> Result<f64> {
    if ctx.per_ue_sinr_db.is_empty() {
        return Err(Error::invalid("no UEs to evaluate the event against"));
    }
    let catalog_len = catalog(event.env_kind).len();
    if usize::from(event.event_id) >= catalog_len {
        return Err(Error::invalid(format!("unknown event id {}", event.event_id)));
    }
    let delta = match (event.event_id, event.paired_fault_id) {
        (0, _) => return Ok(0.0),
        (_, Some(f)) => ctx
            .state
            .stored(f)
            .ok_or(Error::InactiveFault {
                fault_id: usize::from(f),
            })?
            .negated(),
        (f, None) => {
            if ctx.state.register().is_active(f) {
                return Ok(0.0);
            }
            ctx.realized
                .ok_or_else(|| Error::invalid(format!("fault {f} needs a realized contribution")))?
                .clone()
        }
    };
    delta.check_len(ctx.per_ue_sinr_db.len())?;
    let before = effective_sinr_db_from_linear(ctx.per_ue_sinr_db.iter().map(|&s| db_to_linear(s)));
    let after = effective_sinr_db_from_linear(
        ctx.per_ue_sinr_db
            .iter()
            .enumerate()
            .map(|(i, &s)| db_to_linear(s + delta.at(i))),
    );
    Ok(after - before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_active(kind: EnvKind) -> FaultRegister {
        let mut r = FaultRegister::for_kind(kind);
        for f in 1..=n_faults(kind) as u8 {
            r.set(f).unwrap();
        }
        r
    }

    #[test]
    fn catalogs_are_well_formed() {
        for kind in [EnvKind::Indoor, EnvKind::Outdoor] {
            let cat = catalog(kind);
            assert_eq!(cat[0].event_id, 0);
            for (i, e) in cat.iter().enumerate() {
                assert_eq!(usize::from(e.event_id), i);
                if let Some(f) = e.paired_fault_id {
                    assert!(!cat[usize::from(f)].is_clearing);
                    assert!(fault_kind(kind, f).is_ok());
                }
            }
        }
        assert_eq!(catalog(EnvKind::Indoor).len(), 7);
        assert_eq!(catalog(EnvKind::Outdoor).len(), 9);
        assert!(event(EnvKind::Indoor, 7).is_err());
    }

    #[test]
    fn default_rates() {
        assert_abs_diff_eq!(EventRates::indoor().p_normal(EnvKind::Indoor), 5.0 / 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(EventRates::outdoor().p_normal(EnvKind::Outdoor), 5.0 / 9.0, epsilon = 1e-15);
        assert!(EventRates { p_fault: 0.3, p_clear: 0.1 }.validate(EnvKind::Indoor).is_err());
    }

    #[test]
    fn empty_register_never_yields_clears() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reg = FaultRegister::for_kind(EnvKind::Indoor);
        let mut seen = [0usize; 7];
        for _ in 0..100_000 {
            seen[usize::from(sample_event(EnvKind::Indoor, &EventRates::indoor(), &reg, &mut rng).event_id)] += 1;
        }
        assert_eq!(&seen[4..], &[0, 0, 0]);
        assert!(seen[..4].iter().all(|&c| c > 0));
    }

    #[test]
    fn zero_rates_always_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rates = EventRates { p_fault: 0.0, p_clear: 0.0 };
        let reg = all_active(EnvKind::Outdoor);
        for _ in 0..10_000 {
            assert_eq!(sample_event(EnvKind::Outdoor, &rates, &reg, &mut rng).event_id, 0);
        }
    }

    #[test]
    fn register_examples() {
        let kind = EnvKind::Indoor;
        let r0 = FaultRegister::for_kind(kind);
        let r1 = apply_event(&r0, &event(kind, 1).unwrap()).unwrap();
        assert_eq!(r1.popcount(), 1);
        let r2 = apply_event(&r1, &event(kind, 4).unwrap()).unwrap();
        assert_eq!(r2, r0);
        assert_eq!(apply_event(&r1, &event(kind, 0).unwrap()).unwrap(), r1);
        let mut r = r0.clone();
        for id in 1..=3 {
            r = apply_event(&r, &event(kind, id).unwrap()).unwrap();
        }
        assert_eq!(r.popcount(), 3);
        assert!(matches!(
            apply_event(&r0, &event(kind, 5).unwrap()),
            Err(Error::InactiveFault { fault_id: 2 })
        ));
    }

    #[test]
    fn delta_examples() {
        let sinrs = [4.0, 1.0, 9.5];
        let kind = EnvKind::Indoor;
        let state = FaultState::new(kind, 3);
        let cfg = EventConfig::indoor();
        let feeder = cfg.feeder_contribution();
        let ctx = EventContext { per_ue_sinr_db: &sinrs, state: &state, realized: Some(&feeder) };
        assert_abs_diff_eq!(event_sinr_delta_db(&event(kind, 1).unwrap(), &ctx).unwrap(), -3.0, epsilon = 1e-12);

        let vswr = cfg.vswr_contribution(2.0).unwrap();
        let ctx = EventContext { per_ue_sinr_db: &sinrs, state: &state, realized: Some(&vswr) };
        assert_abs_diff_eq!(event_sinr_delta_db(&event(kind, 3).unwrap(), &ctx).unwrap(), -4.436975, epsilon = 1e-6);

        let out = EventConfig::outdoor();
        let ostate = FaultState::new(EnvKind::Outdoor, 3);
        let f = out.feeder_contribution();
        let ctx = EventContext { per_ue_sinr_db: &sinrs, state: &ostate, realized: Some(&f) };
        assert_abs_diff_eq!(
            event_sinr_delta_db(&event(EnvKind::Outdoor, 4).unwrap(), &ctx).unwrap(),
            -6.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(out.rank_loss_contribution().at(0), -3.0103, epsilon = 1e-4);

        // clearing an inactive fault is an error
        let ctx = EventContext { per_ue_sinr_db: &sinrs, state: &state, realized: None };
        assert!(event_sinr_delta_db(&event(kind, 4).unwrap(), &ctx).is_err());
    }

    #[test]
    fn vswr_draw_range() {
        let cfg = EventConfig::indoor();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let v = cfg.draw_vswr(&mut rng);
            assert!(v > 1.5 && v <= 3.0);
            assert!(cfg.vswr_contribution(v).unwrap().at(0) <= 0.0);
        }
    }

    #[test]
    fn realarm_contributes_nothing() {
        let kind = EnvKind::Indoor;
        let mut st = FaultState::new(kind, 2);
        let e = event(kind, 1).unwrap();
        st.apply(&e, |_| Ok(Contribution::Uniform(-3.0))).unwrap();
        let again = st.apply(&e, |_| panic!("must not realize twice")).unwrap();
        assert_eq!(again, Contribution::zero());
        assert_eq!(st.offset_db(1), -3.0);
    }

    #[test]
    fn sampler_rates_with_all_faults_active() {
        let kind = EnvKind::Indoor;
        let reg = all_active(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mut counts = [0usize; 7];
        for _ in 0..n {
            counts[usize::from(sample_event(kind, &EventRates::indoor(), &reg, &mut rng).event_id)] += 1;
        }
        let p = 1.0 / 11.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in &counts[1..] {
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sigma + 1.0, "{counts:?}");
        }
    }

    fn arb_contribution(n_ue: usize) -> impl Strategy<Value = Contribution> {
        prop_oneof![
            (-20.0f64..20.0).prop_map(Contribution::Uniform),
            proptest::collection::vec(-20.0f64..20.0, n_ue).prop_map(Contribution::PerUe),
        ]
    }

    proptest! {
        #[test]
        fn fault_then_clear_is_reversible(
            sinrs in proptest::collection::vec(-10.0f64..30.0, 4),
            c in arb_contribution(4),
            outdoor in any::<bool>(),
            f in 1u8..=3,
        ) {
            let kind = if outdoor { EnvKind::Outdoor } else { EnvKind::Indoor };
            let mut st = FaultState::new(kind, 4);
            let before = st.register().clone();
            let offsets0: Vec<f64> = (0..4).map(|i| st.offset_db(i)).collect();
            let fault = event(kind, f).unwrap();
            let d1 = {
                let ctx = EventContext { per_ue_sinr_db: &sinrs, state: &st, realized: Some(&c) };
                event_sinr_delta_db(&fault, &ctx).unwrap()
            };
            st.apply(&fault, |_| Ok(c.clone())).unwrap();
            let mid: Vec<f64> = sinrs.iter().enumerate().map(|(i, s)| s + st.offset_db(i)).collect();
            let clear = clearing_event(kind, f).unwrap();
            let d2 = {
                let ctx = EventContext { per_ue_sinr_db: &mid, state: &st, realized: None };
                event_sinr_delta_db(&clear, &ctx).unwrap()
            };
            st.apply(&clear, |_| unreachable!()).unwrap();
            prop_assert!((d1 + d2).abs() <= 1e-9);
            prop_assert_eq!(st.register(), &before);
            for (i, &o) in offsets0.iter().enumerate() {
                prop_assert_eq!(st.offset_db(i), o);
            }
        }

        #[test]
        fn ledger_accounting_telescopes(
            base in proptest::collection::vec(-5.0f64..25.0, 1..6),
            seed in any::<u64>(),
            steps in 1usize..60,
        ) {
            let kind = EnvKind::Indoor;
            let n = base.len();
            let cfg = EventConfig::indoor();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = FaultState::new(kind, n);
            let gamma = |st: &FaultState| effective_sinr_db_from_linear(
                (0..n).map(|i| db_to_linear(base[i] + st.offset_db(i))));
            let g0 = gamma(&st);
            let mut sum = 0.0;
            for _ in 0..steps {
                let e = sample_event(kind, &cfg.rates, st.register(), &mut rng);
                let realized = match e.paired_fault_id {
                    None if e.event_id != 0 => Some(match fault_kind(kind, e.event_id).unwrap() {
                        FaultKind::VswrAlarm => cfg.vswr_contribution(cfg.draw_vswr(&mut rng)).unwrap(),
                        FaultKind::NeighborDown => Contribution::PerUe((0..n).map(|_| rng.random_range(0.0..5.0)).collect()),
                        _ => cfg.feeder_contribution(),
                    }),
                    _ => None,
                };
                let cur: Vec<f64> = (0..n).map(|i| base[i] + st.offset_db(i)).collect();
                let d = event_sinr_delta_db(&e, &EventContext { per_ue_sinr_db: &cur, state: &st, realized: realized.as_ref() }).unwrap();
                sum += d;
                st.apply(&e, |_| Ok(realized.clone().unwrap())).unwrap();
            }
            prop_assert!((gamma(&st) - (g0 + sum)).abs() <= 1e-9);
        }
    }
}
