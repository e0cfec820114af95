//! Fixed-timestep simulation engine.
//!
//! Each step runs, in order: mobility, train broadcast, direct receptions at
//! every RSU and OBU, RSU relay emissions evaluated at every OBU, warning
//! state updates, and finally the packet-fate record for the step's
//! broadcast.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::antenna::AntennaPattern;
use crate::channel::{
    evaluate_link, path_loss_db, ChannelError, LinkBudget, LinkDraws, LinkEnd, LinkStream, RadioConfig,
};
use crate::geo::{GeoPoint, Polyline};
use crate::protocol::{warning_active, ObuState, RsuState, TrainState, WarningMessage};

use super::log::{PacketFate, Provenance, ReceiverInfo, Reception, Role, SimLog, TracePoint, WarningChange};
use super::scenario::Scenario;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("step of {got} ms does not match the scenario timestep of {expected} ms")]
    Timestep { expected: u64, got: u64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Something observable that happened during a step.
#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Broadcast { seq: u64, t_ms: u64 },
    Received { receiver: String, seq: u64, via_relay: bool },
    Relayed { rsu: String, seq: u64 },
    WarningChanged { unit: String, active: bool },
    TrainStopped { t_ms: u64 },
}

#[derive(Debug, Clone)]
struct Mover {
    arclength: f64,
    speed: f64,
    position: GeoPoint,
    heading: f64,
}

impl Mover {
    fn new(path: &Polyline, arclength: f64, speed: f64) -> Self {
        let (position, heading) = path.point_at_arclength(arclength).expect("validated arclength");
        Mover { arclength, speed, position, heading }
    }

    /// Returns true when the mover has just been pinned at the path's end.
    fn advance(&mut self, path: &Polyline, dt_ms: u64) -> bool {
        let len = path.length();
        let mut stopped = false;
        if self.speed > 0.0 {
            self.arclength += self.speed * dt_ms as f64 / 1000.0;
            if self.arclength >= len {
                self.arclength = len;
                self.speed = 0.0;
                stopped = true;
            }
        }
        let (p, h) = path.point_at_arclength(self.arclength).expect("clamped arclength");
        self.position = p;
        self.heading = h;
        stopped
    }
}

struct ObuSim {
    state: ObuState,
    mover: Mover,
    road: usize,
    antenna: AntennaPattern,
    mount_offset: f64,
    active: bool,
}

impl ObuSim {
    fn link_end(&self) -> LinkEnd {
        LinkEnd {
            position: self.mover.position,
            pattern: self.antenna.oriented(self.mover.heading + self.mount_offset),
        }
    }
}

struct PendingRelay {
    release_ms: u64,
    rsu: usize,
    msg: WarningMessage,
    fate_index: usize,
}

/// Mutable simulation state for one scenario.
pub struct World<'a> {
    scenario: &'a Scenario,
    now_ms: u64,
    train: TrainState,
    train_mover: Mover,
    rsus: Vec<RsuState>,
    obus: Vec<ObuSim>,
    fates: Vec<PacketFate>,
    pending: Vec<PendingRelay>,
    traces: BTreeMap<String, Vec<TracePoint>>,
    warnings: BTreeMap<String, Vec<WarningChange>>,
}

impl<'a> World<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let cfg = scenario.config();
        let mut train = TrainState::new(cfg.train.id.clone(), cfg.train.initial_arclength_m, cfg.train.speed_mps);
        train.warning_active = warning_active(train.arclength, cfg.crossing_arclength_m, cfg.clear_margin_m);
        let train_mover = Mover::new(scenario.track(), cfg.train.initial_arclength_m, cfg.train.speed_mps);
        let rsus = scenario
            .rsus()
            .iter()
            .map(|r| RsuState::new(r.id.clone(), r.position, r.relay_enabled))
            .collect();
        let obus = cfg
            .obus
            .iter()
            .map(|o| ObuSim {
                state: ObuState::new(o.id.clone(), o.hold_time_ms),
                mover: Mover::new(&scenario.roads()[o.road], o.initial_arclength_m, o.speed_mps),
                road: o.road,
                antenna: o.antenna,
                mount_offset: o.mount_offset_deg,
                active: false,
            })
            .collect();

        let mut world = World {
            scenario,
            now_ms: 0,
            train,
            train_mover,
            rsus,
            obus,
            fates: Vec::new(),
            pending: Vec::new(),
            traces: BTreeMap::new(),
            warnings: BTreeMap::new(),
        };
        world.record_traces();
        let train_id = world.train.train_id.clone();
        let train_active = world.train.warning_active;
        world.warnings.entry(train_id).or_default().push(WarningChange { t_ms: 0, active: train_active });
        for o in &world.obus {
            world.warnings.entry(o.state.id.clone()).or_default().push(WarningChange { t_ms: 0, active: false });
        }
        world
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn train(&self) -> &TrainState {
        &self.train
    }

    pub fn train_position(&self) -> GeoPoint {
        self.train_mover.position
    }

    pub fn fates(&self) -> &[PacketFate] {
        &self.fates
    }

    pub fn obu_warning(&self, id: &str) -> Option<bool> {
        self.obus.iter().find(|o| o.state.id == id).map(|o| o.active)
    }

    fn record_traces(&mut self) {
        let t = self.now_ms;
        self.traces
            .entry(self.train.train_id.clone())
            .or_default()
            .push(TracePoint { t_ms: t, position: self.train_mover.position });
        for o in &self.obus {
            self.traces
                .entry(o.state.id.clone())
                .or_default()
                .push(TracePoint { t_ms: t, position: o.mover.position });
        }
    }

    fn train_end(&self) -> LinkEnd {
        let cfg = &self.scenario.config().train;
        LinkEnd {
            position: self.train_mover.position,
            pattern: cfg.antenna.oriented(self.train_mover.heading + cfg.mount_offset_deg),
        }
    }

    fn rsu_end(&self, i: usize) -> LinkEnd {
        let unit = &self.scenario.rsus()[i];
        LinkEnd { position: unit.position, pattern: unit.antenna }
    }

    fn evaluate(
        &self,
        radio: &RadioConfig,
        tx: &LinkEnd,
        rx: &LinkEnd,
        seq: u64,
        key: &str,
        stream: LinkStream,
    ) -> Result<(bool, LinkBudget), SimError> {
        let cfg = self.scenario.config();
        let draws = LinkDraws::for_link(cfg.seed, seq, key, stream);
        let budget = match evaluate_link(radio, tx, rx, &cfg.path_loss, Some(draws.shadow_z)) {
            Ok(b) => b,
            // co-located units: evaluate at the reference distance with peak gains
            Err(ChannelError::DegenerateGeometry) => {
                let pl = path_loss_db(&cfg.path_loss, 0.0, radio.frequency_hz, Some(draws.shadow_z))?;
                let (gt, gr) = (tx.pattern.peak_gain_dbi(), rx.pattern.peak_gain_dbi());
                LinkBudget {
                    distance_m: 0.0,
                    tx_gain_dbi: gt,
                    rx_gain_dbi: gr,
                    path_loss_db: pl,
                    prx_dbm: radio.tx_power() + gt + gr - pl,
                }
            }
            Err(e) => return Err(e.into()),
        };
        let sens = cfg.sensitivity.sensitivity(&radio.mcs)?;
        Ok((cfg.reception.decide(budget.prx_dbm, sens, draws.uniform), budget))
    }

    /// Advances the world by one timestep.
    pub fn step(&mut self, dt_ms: u64) -> Result<Vec<SimEvent>, SimError> {
        let cfg = self.scenario.config();
        if dt_ms != cfg.timestep_ms {
            return Err(SimError::Timestep { expected: cfg.timestep_ms, got: dt_ms });
        }
        let mut events = Vec::new();

        // mobility
        self.now_ms += dt_ms;
        let now = self.now_ms;
        if self.train_mover.advance(self.scenario.track(), dt_ms) {
            events.push(SimEvent::TrainStopped { t_ms: now });
        }
        self.train.arclength = self.train_mover.arclength;
        self.train.speed_mps = self.train_mover.speed;
        self.train.warning_active =
            warning_active(self.train.arclength, cfg.crossing_arclength_m, cfg.clear_margin_m);
        for o in &mut self.obus {
            o.mover.advance(&self.scenario.roads()[o.road], dt_ms);
        }
        self.record_traces();

        // broadcast
        let msg = self.train.next_broadcast(
            now,
            cfg.broadcast_period_ms,
            self.train_mover.position,
            self.train_mover.heading,
        );

        // direct receptions
        let mut fate = None;
        let mut new_relays: Vec<(usize, WarningMessage)> = Vec::new();
        if let Some(msg) = &msg {
            events.push(SimEvent::Broadcast { seq: msg.seq, t_ms: now });
            let tx = self.train_end();
            let radio = &cfg.train.radio;
            let mut receptions = BTreeMap::new();
            for i in 0..self.rsus.len() {
                let rx = self.rsu_end(i);
                let id = self.rsus[i].id.clone();
                let (ok, budget) = self.evaluate(radio, &tx, &rx, msg.seq, &id, LinkStream::Direct)?;
                receptions.insert(id.clone(), direct_reception(ok, &budget));
                if ok {
                    events.push(SimEvent::Received { receiver: id, seq: msg.seq, via_relay: false });
                    if let Some(copy) = self.rsus[i].ingest(msg) {
                        new_relays.push((i, copy));
                    }
                }
            }
            for j in 0..self.obus.len() {
                let rx = self.obus[j].link_end();
                let id = self.obus[j].state.id.clone();
                let (ok, budget) = self.evaluate(radio, &tx, &rx, msg.seq, &id, LinkStream::Direct)?;
                receptions.insert(id.clone(), direct_reception(ok, &budget));
                if ok {
                    self.obus[j].state.ingest(msg, now);
                    events.push(SimEvent::Received { receiver: id, seq: msg.seq, via_relay: false });
                }
            }
            fate = Some(PacketFate { seq: msg.seq, tx_time_ms: now, tx_position: msg.position, receptions });
        }

        // relay emissions: delayed copies now due, then this step's zero-delay copies
        let next_index = self.fates.len();
        let mut due: Vec<PendingRelay> = Vec::new();
        let mut waiting = Vec::new();
        for p in self.pending.drain(..) {
            if p.release_ms <= now {
                due.push(p);
            } else {
                waiting.push(p);
            }
        }
        self.pending = waiting;
        for (rsu, copy) in new_relays {
            events.push(SimEvent::Relayed { rsu: self.rsus[rsu].id.clone(), seq: copy.seq });
            let delay = self.scenario.rsus()[rsu].relay_delay_ms;
            let pending = PendingRelay { release_ms: now + delay, rsu, msg: copy, fate_index: next_index };
            if delay == 0 {
                due.push(pending);
            } else {
                self.pending.push(pending);
            }
        }
        for p in due {
            let unit = &self.scenario.rsus()[p.rsu];
            let tx = self.rsu_end(p.rsu);
            for j in 0..self.obus.len() {
                let rx = self.obus[j].link_end();
                let obu_id = self.obus[j].state.id.clone();
                let key = format!("{}>{}", unit.id, obu_id);
                let (ok, _) = self.evaluate(&unit.radio, &tx, &rx, p.msg.seq, &key, LinkStream::Relay)?;
                if !ok {
                    continue;
                }
                self.obus[j].state.ingest(&p.msg, now);
                let target = if p.fate_index == next_index { fate.as_mut() } else { self.fates.get_mut(p.fate_index) };
                if let Some(r) = target.and_then(|f| f.receptions.get_mut(&obu_id)) {
                    if !r.received {
                        r.received = true;
                        r.via_relay = true;
                        events.push(SimEvent::Received { receiver: obu_id, seq: p.msg.seq, via_relay: true });
                    }
                }
            }
        }

        // warning states
        let train_id = self.train.train_id.clone();
        let train_active = self.train.warning_active;
        push_change(&mut self.warnings, &train_id, now, train_active, &mut events);
        for o in &mut self.obus {
            o.active = o.state.warning_active(now);
            push_change(&mut self.warnings, &o.state.id, now, o.active, &mut events);
        }

        if let Some(f) = fate {
            self.fates.push(f);
        }
        Ok(events)
    }

    pub fn into_log(self) -> SimLog {
        let cfg = self.scenario.config();
        let mut receivers: Vec<ReceiverInfo> = self
            .scenario
            .rsus()
            .iter()
            .map(|r| ReceiverInfo { id: r.id.clone(), role: Role::Rsu, marker: Some(r.position) })
            .collect();
        for o in &cfg.obus {
            let marker = self.traces.get(&o.id).and_then(|t| t.first()).map(|p| p.position);
            receivers.push(ReceiverInfo { id: o.id.clone(), role: Role::Obu, marker });
        }
        SimLog {
            scenario_hash: self.scenario.hash(),
            provenance: Provenance::Simulated,
            receivers,
            fates: self.fates,
            traces: self.traces,
            warnings: self.warnings,
        }
    }
}

fn direct_reception(ok: bool, budget: &LinkBudget) -> Reception {
    Reception {
        received: ok,
        prx_dbm: Some(budget.prx_dbm),
        via_relay: false,
        distance_m: Some(budget.distance_m),
    }
}

fn push_change(
    warnings: &mut BTreeMap<String, Vec<WarningChange>>,
    id: &str,
    t_ms: u64,
    active: bool,
    events: &mut Vec<SimEvent>,
) {
    let timeline = warnings.entry(id.to_string()).or_default();
    if timeline.last().map(|c| c.active) != Some(active) {
        timeline.push(WarningChange { t_ms, active });
        events.push(SimEvent::WarningChanged { unit: id.to_string(), active });
    }
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> SimLog {
    let mut world = World::new(scenario);
    let dt = scenario.config().timestep_ms;
    for _ in 0..scenario.step_count() {
        world.step(dt).expect("validated scenario steps without error");
    }
    world.into_log()
}

