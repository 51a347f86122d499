//! The synchronous-round world: node slots, per-directed-link omission
//! processes, script execution and metrics. A message sent at the
//! beginning of round `r` is either received by the end of `r` or never.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

use crate::adversary::{AdversaryKind, AdversaryNode};
use crate::crypto::{Backend, KeyPair, KeyRegistry};
use crate::event::{CrashCase, Event, EventLog};
use crate::membership::TrustedPool;
use crate::net::{Link, LossModel};
use crate::protocol::{LifeCycle, Node, NodeConfig, NodeEvent};
use crate::types::{
    DigestKey, InstanceKey, ProcessId, ProtocolMessage, Round, SystemParams, Value,
};

#[derive(Debug, Clone)]
pub struct BroadcastScript {
    pub sender: ProcessId,
    pub round: Round,
    pub value: Value,
}

#[derive(Debug, Clone, Copy)]
pub struct JoinScript {
    pub id: ProcessId,
    pub round: Round,
}

#[derive(Debug, Clone, Copy)]
pub struct LeaveScript {
    pub id: ProcessId,
    pub round: Round,
}

#[derive(Debug, Clone, Copy)]
pub struct ForceDeadScript {
    pub id: ProcessId,
    pub round: Round,
}

#[derive(Debug, Clone)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub targets: Vec<ProcessId>,
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub params: SystemParams,
    pub loss: LossModel,
    pub seed: u64,
    pub horizon: u64,
    pub backend: Backend,
    pub adversary: Option<AdversaryConfig>,
    pub broadcasts: Vec<BroadcastScript>,
    pub joins: Vec<JoinScript>,
    pub leaves: Vec<LeaveScript>,
    pub force_dead: Vec<ForceDeadScript>,
    pub ledger_piggyback: bool,
    /// Retain the full event log. Monte-Carlo runs switch this off and keep
    /// only counters.
    pub retain_log: bool,
}

impl WorldConfig {
    pub fn new(params: SystemParams, loss: LossModel, seed: u64, horizon: u64) -> WorldConfig {
        WorldConfig {
            params,
            loss,
            seed,
            horizon,
            backend: Backend::Sim,
            adversary: None,
            broadcasts: Vec::new(),
            joins: Vec::new(),
            leaves: Vec::new(),
            force_dead: Vec::new(),
            ledger_piggyback: false,
            retain_log: true,
        }
    }
}

/// What actually happened during a run, independent of the event log.
#[derive(Debug, Default, Clone)]
pub struct GroundTruth {
    pub byzantine: BTreeSet<ProcessId>,
    pub self_crashed: BTreeMap<ProcessId, (Round, CrashCase)>,
    pub forced_dead: BTreeMap<ProcessId, Round>,
    pub revived: BTreeMap<ProcessId, Round>,
    pub joined: BTreeMap<ProcessId, Round>,
    pub left: BTreeMap<ProcessId, Round>,
    pub broadcasts: Vec<BroadcastRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub declarations: Vec<(ProcessId, ProcessId, Round)>,
}

#[derive(Debug, Clone)]
pub struct BroadcastRecord {
    pub instance: InstanceKey,
    pub value: Value,
    pub byzantine_sender: bool,
}

#[derive(Debug, Clone)]
pub struct DeliveryRecord {
    pub node: ProcessId,
    pub instance: InstanceKey,
    pub round: Round,
    pub digest: DigestKey,
    pub value: Value,
}

#[derive(Debug, Default, Clone)]
pub struct Metrics {
    cur_tx: BTreeMap<ProcessId, u64>,
    cur_rx: BTreeMap<ProcessId, u64>,
    broadcast_traffic: bool,
    /// Peak per-round bits sent/received per node, over rounds carrying
    /// broadcast traffic (echo/deliver phases); pure heartbeat rounds are
    /// not part of a broadcast's cost.
    pub peak_tx_bits: BTreeMap<ProcessId, u64>,
    pub peak_rx_bits: BTreeMap<ProcessId, u64>,
    pub total_tx_bytes: u64,
    pub total_rx_bytes: u64,
    /// Worst per-node per-round processing time (handling plus signing).
    pub d_max: Duration,
}

impl Metrics {
    fn note_tx(&mut self, node: ProcessId, bytes: usize, kind: crate::types::MessageKind) {
        *self.cur_tx.entry(node).or_default() += bytes as u64;
        self.total_tx_bytes += bytes as u64;
        if !matches!(kind, crate::types::MessageKind::Hb) {
            self.broadcast_traffic = true;
        }
    }

    fn note_rx(&mut self, node: ProcessId, bytes: usize) {
        *self.cur_rx.entry(node).or_default() += bytes as u64;
        self.total_rx_bytes += bytes as u64;
    }

    fn finish_round(&mut self) {
        let fold = self.broadcast_traffic;
        self.broadcast_traffic = false;
        for (node, bytes) in std::mem::take(&mut self.cur_tx) {
            if fold {
                let bits = bytes * 8;
                let peak = self.peak_tx_bits.entry(node).or_default();
                *peak = (*peak).max(bits);
            }
        }
        for (node, bytes) in std::mem::take(&mut self.cur_rx) {
            if fold {
                let bits = bytes * 8;
                let peak = self.peak_rx_bits.entry(node).or_default();
                *peak = (*peak).max(bits);
            }
        }
    }

    pub fn peak_tx_bits_max(&self) -> u64 {
        self.peak_tx_bits.values().copied().max().unwrap_or(0)
    }

    pub fn peak_rx_bits_max(&self) -> u64 {
        self.peak_rx_bits.values().copied().max().unwrap_or(0)
    }
}

enum Slot {
    Honest(Box<Node>),
    Byzantine(Box<AdversaryNode>),
}

pub struct World {
    cfg: WorldConfig,
    round: Round,
    slots: BTreeMap<ProcessId, Slot>,
    links: HashMap<(ProcessId, ProcessId), Link>,
    log: EventLog,
    metrics: Metrics,
    truth: GroundTruth,
}

impl World {
    pub fn new(cfg: WorldConfig) -> World {
        let n = cfg.params.n();
        let byz: BTreeSet<ProcessId> = cfg
            .adversary
            .as_ref()
            .map(|a| a.targets.iter().copied().collect())
            .unwrap_or_default();
        assert!(
            byz.len() <= cfg.params.f(),
            "adversary count {} exceeds f = {}",
            byz.len(),
            cfg.params.f()
        );

        // Deterministic keys for everyone, joiners included, and one shared
        // registry snapshot per node.
        let mut all_ids: Vec<ProcessId> = (0..n as u64).map(ProcessId).collect();
        for j in &cfg.joins {
            if !all_ids.contains(&j.id) {
                all_ids.push(j.id);
            }
        }
        let mut registry = KeyRegistry::new(cfg.backend);
        let mut keys: BTreeMap<ProcessId, KeyPair> = BTreeMap::new();
        for &id in &all_ids {
            let mut seed = [0u8; 32];
            seed[..8].copy_from_slice(&cfg.seed.to_le_bytes());
            seed[8..16].copy_from_slice(&id.0.to_le_bytes());
            let kp = KeyPair::from_seed(cfg.backend, id, &seed);
            registry.add(id, kp.public());
            keys.insert(id, kp);
        }

        let initial: Vec<ProcessId> = (0..n as u64).map(ProcessId).collect();
        let pool = TrustedPool::new(initial.clone());
        let joins: BTreeMap<ProcessId, Round> = cfg.joins.iter().map(|j| (j.id, j.round)).collect();

        let mut slots = BTreeMap::new();
        for &id in &all_ids {
            let node_cfg = NodeConfig {
                id,
                params: cfg.params,
                roster: initial.clone(),
                pool: pool.clone(),
                ledger_piggyback: cfg.ledger_piggyback,
                join_round: joins.get(&id).copied(),
                world_seed: cfg.seed,
            };
            let kp = keys.remove(&id).expect("generated above");
            let slot = if byz.contains(&id) {
                let kind = cfg.adversary.as_ref().expect("byz non-empty").kind.clone();
                Slot::Byzantine(Box::new(AdversaryNode::new(
                    kind,
                    node_cfg,
                    kp,
                    registry.clone(),
                )))
            } else {
                Slot::Honest(Box::new(Node::new(node_cfg, kp, registry.clone())))
            };
            slots.insert(id, slot);
        }

        let mut links = HashMap::new();
        for &a in &all_ids {
            for &b in &all_ids {
                if a != b {
                    links.insert((a, b), Link::new(cfg.seed, a, b, cfg.loss));
                }
            }
        }

        World {
            truth: GroundTruth {
                byzantine: byz,
                ..GroundTruth::default()
            },
            cfg,
            round: Round(0),
            slots,
            links,
            log: EventLog::new(),
            metrics: Metrics::default(),
        }
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn params(&self) -> &SystemParams {
        &self.cfg.params
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn node(&self, id: ProcessId) -> Option<&Node> {
        match self.slots.get(&id) {
            Some(Slot::Honest(n)) => Some(n),
            _ => None,
        }
    }

    pub fn honest_ids(&self) -> Vec<ProcessId> {
        self.slots
            .iter()
            .filter(|(_, s)| matches!(s, Slot::Honest(_)))
            .map(|(id, _)| *id)
            .collect()
    }

    /// Run to the configured horizon.
    pub fn run(&mut self) {
        while self.round.0 < self.cfg.horizon {
            self.step();
        }
    }

    /// Advance one synchronous round: scripts, link transitions, sends,
    /// omissions, receipts, end-of-round checks.
    pub fn step(&mut self) {
        let r = self.round.next();
        self.round = r;

        self.apply_scripts(r);

        for link in self.links.values_mut() {
            link.begin_round();
        }

        // Sends happen at the beginning of the round, based on state fixed
        // at the end of the previous one.
        let mut inflight: Vec<(ProcessId, ProtocolMessage)> = Vec::new();
        let ids: Vec<ProcessId> = self.slots.keys().copied().collect();
        let mut busy: BTreeMap<ProcessId, Duration> = BTreeMap::new();
        for &id in &ids {
            let started = Instant::now();
            let out = match self.slots.get_mut(&id).expect("slot") {
                Slot::Honest(n) => n.collect_outbound(r),
                Slot::Byzantine(a) => a.collect_outbound(r),
            };
            *busy.entry(id).or_default() += started.elapsed();
            for a in out {
                let bytes = a.msg.wire_size();
                self.metrics.note_tx(id, bytes, a.msg.kind());
                if self.cfg.retain_log {
                    self.log.push(
                        r,
                        id,
                        Event::Send {
                            to: a.to,
                            kind: a.msg.kind(),
                            instance: a.msg.body.instance(),
                            signers: a.msg.signer_count(),
                            bytes,
                        },
                    );
                }
                let delivered = self
                    .links
                    .get_mut(&(id, a.to))
                    .map(|l| l.transmit())
                    .unwrap_or(false);
                if delivered {
                    inflight.push((a.to, a.msg));
                }
            }
        }

        // Receipts, in deterministic sender order.
        for (to, msg) in inflight {
            let bytes = msg.wire_size();
            self.metrics.note_rx(to, bytes);
            if self.cfg.retain_log {
                self.log.push(
                    r,
                    to,
                    Event::Recv {
                        from: msg.from,
                        kind: msg.kind(),
                        instance: msg.body.instance(),
                        signers: msg.signer_count(),
                        bytes,
                    },
                );
            }
            let started = Instant::now();
            match self.slots.get_mut(&to).expect("slot") {
                Slot::Honest(n) => n.receive(r, &msg),
                Slot::Byzantine(a) => a.receive(r, &msg),
            }
            *busy.entry(to).or_default() += started.elapsed();
        }

        for &id in &ids {
            let started = Instant::now();
            match self.slots.get_mut(&id).expect("slot") {
                Slot::Honest(n) => n.end_round(r),
                Slot::Byzantine(a) => a.end_round(r),
            }
            *busy.entry(id).or_default() += started.elapsed();
        }

        self.drain_events(r);
        for (_, d) in busy {
            if d > self.metrics.d_max {
                self.metrics.d_max = d;
            }
        }
        self.metrics.finish_round();
    }

    fn apply_scripts(&mut self, r: Round) {
        let broadcasts: Vec<BroadcastScript> = self
            .cfg
            .broadcasts
            .iter()
            .filter(|b| b.round == r)
            .cloned()
            .collect();
        for b in broadcasts {
            let byz = self.truth.byzantine.contains(&b.sender);
            match self.slots.get_mut(&b.sender) {
                Some(Slot::Honest(n)) => n.start_broadcast(r, b.value.clone()),
                Some(Slot::Byzantine(a)) => a.start_broadcast(r, b.value.clone()),
                None => continue,
            }
            if byz {
                // Honest nodes report their own broadcast events; for a
                // Byzantine sender the script is the only record.
                self.truth.broadcasts.push(BroadcastRecord {
                    instance: InstanceKey {
                        sender: b.sender,
                        origin_round: r,
                    },
                    value: b.value,
                    byzantine_sender: true,
                });
            }
        }
        let leaves: Vec<LeaveScript> = self
            .cfg
            .leaves
            .iter()
            .filter(|l| l.round == r)
            .copied()
            .collect();
        for l in leaves {
            if let Some(Slot::Honest(n)) = self.slots.get_mut(&l.id) {
                n.start_leave(r);
            }
        }
        let forced: Vec<ForceDeadScript> = self
            .cfg
            .force_dead
            .iter()
            .filter(|f| f.round == r)
            .copied()
            .collect();
        for f in forced {
            if let Some(Slot::Honest(n)) = self.slots.get_mut(&f.id) {
                n.force_dead();
                self.truth.forced_dead.insert(f.id, r);
                if self.cfg.retain_log {
                    self.log.push(r, f.id, Event::ForcedDead);
                }
            }
        }
    }

    fn drain_events(&mut self, r: Round) {
        let ids: Vec<ProcessId> = self.slots.keys().copied().collect();
        for id in ids {
            let events = match self.slots.get_mut(&id).expect("slot") {
                Slot::Honest(n) => n.take_events(),
                Slot::Byzantine(_) => Vec::new(),
            };
            for ev in events {
                match ev {
                    NodeEvent::Broadcast { instance, value } => {
                        if !self.truth.broadcasts.iter().any(|b| b.instance == instance) {
                            self.truth.broadcasts.push(BroadcastRecord {
                                instance,
                                value,
                                byzantine_sender: false,
                            });
                        }
                        if self.cfg.retain_log {
                            self.log.push(r, id, Event::Broadcast { instance });
                        }
                    }
                    NodeEvent::Deliver {
                        instance,
                        digest,
                        value,
                    } => {
                        self.truth.deliveries.push(DeliveryRecord {
                            node: id,
                            instance,
                            round: r,
                            digest,
                            value,
                        });
                        if self.cfg.retain_log {
                            self.log.push(
                                r,
                                id,
                                Event::Deliver {
                                    instance,
                                    value_digest: digest.short_hex(),
                                },
                            );
                        }
                    }
                    NodeEvent::SelfCrash { case } => {
                        self.truth.self_crashed.entry(id).or_insert((r, case));
                        if self.cfg.retain_log {
                            self.log.push(r, id, Event::SelfCrash { case });
                        }
                    }
                    NodeEvent::Revive { instance } => {
                        self.truth.revived.insert(id, r);
                        if self.cfg.retain_log {
                            self.log.push(r, id, Event::Revive { instance });
                        }
                    }
                    NodeEvent::JoinAlive => {
                        self.truth.joined.insert(id, r);
                        if self.cfg.retain_log {
                            self.log.push(r, id, Event::JoinAlive);
                        }
                    }
                    NodeEvent::LeaveDead => {
                        self.truth.left.insert(id, r);
                        if self.cfg.retain_log {
                            self.log.push(r, id, Event::LeaveDead);
                        }
                    }
                    NodeEvent::DeclareCrashed { target } => {
                        self.truth.declarations.push((id, target, r));
                        if self.cfg.retain_log {
                            self.log.push(r, id, Event::DeclareCrashed { target });
                        }
                    }
                }
            }
        }
    }

    /// Non-Byzantine processes that stayed correct through the whole run:
    /// never self-crashed, never forced dead, never left. Processes that
    /// joined mid-run count from their join round.
    pub fn correct_through_run(&self) -> Vec<ProcessId> {
        self.slots
            .iter()
            .filter(|(id, slot)| {
                matches!(slot, Slot::Honest(_))
                    && !self.truth.byzantine.contains(id)
                    && !self.truth.self_crashed.contains_key(id)
                    && !self.truth.forced_dead.contains_key(id)
                    && !self.truth.left.contains_key(id)
                    && match self.node(**id) {
                        Some(n) => n.lifecycle() == LifeCycle::Alive,
                        None => false,
                    }
            })
            .map(|(id, _)| *id)
            .collect()
    }
}
