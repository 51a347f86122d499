use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::crypto::{KeyPair, KeyRegistry};
use crate::event::CrashCase;
use crate::membership::{detect_crashed, Control, LastSeenLedger, TrustedPool};
use crate::net::node_rng;
use crate::protocol::state::{
    DeliverTracker, EchoTracker, HbState, InstanceState, RoundSets, TrackedHb,
};
use crate::protocol::{Addressed, LifeCycle};
use crate::types::{
    join_digest, join_hb_digest, BroadcastPayload, DigestKey, HbEntry, InstanceKey, MessageBody,
    ProcessId, ProtocolMessage, Round, SignatureBytes, SignatureSet, SystemParams, Value,
};

/// Observable state transitions, drained by the simulator each round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeEvent {
    Broadcast {
        instance: InstanceKey,
        value: Value,
    },
    Deliver {
        instance: InstanceKey,
        digest: DigestKey,
        value: Value,
    },
    SelfCrash {
        case: CrashCase,
    },
    Revive {
        instance: InstanceKey,
    },
    JoinAlive,
    LeaveDead,
    DeclareCrashed {
        target: ProcessId,
    },
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: ProcessId,
    pub params: SystemParams,
    /// Processes known at start (the trusted pool in dynamic worlds).
    pub roster: Vec<ProcessId>,
    pub pool: TrustedPool,
    /// Attach the last-seen ledger to outbound messages and run crash
    /// detection on received ledgers.
    pub ledger_piggyback: bool,
    /// When set, the node starts in the pending state and requests to join
    /// at the given round.
    pub join_round: Option<Round>,
    pub world_seed: u64,
}

/// State of an in-flight join request at the joining node.
#[derive(Debug, Clone)]
struct JoinerState {
    key: Vec<u8>,
    request_round: Round,
    deadline: Round,
    n_claim: u64,
    roster_claim: Vec<ProcessId>,
    sigs: SignatureSet,
    next_retry: Option<Round>,
}

/// State of a pool member currently serving one joiner.
#[derive(Debug, Clone)]
struct PoolService {
    joiner: ProcessId,
    key: Vec<u8>,
    join_round: Round,
    deadline: Round,
    n_claim: u64,
    roster_claim: Vec<ProcessId>,
    sigs: SignatureSet,
    /// Received the join heartbeat directly, so emission is not gated on
    /// the forward threshold.
    direct: bool,
}

pub struct Node {
    id: ProcessId,
    params: SystemParams,
    keys: KeyPair,
    registry: KeyRegistry,
    lifecycle: LifeCycle,
    /// Known processes, self included. Join/leave deliveries mutate it.
    roster: BTreeSet<ProcessId>,
    n_view: usize,
    /// Processes this node has declared crashed; their messages are
    /// ignored and the live quorum shrinks accordingly.
    detected: BTreeSet<ProcessId>,
    /// Round this node last (re)initialized: world start, join or revival.
    alive_epoch: Round,
    /// Round of the last piggyback/standalone mode switch. The echoed-back
    /// feed behind Case 4 changes vehicle at these switches, so its grace
    /// window restarts there.
    mode_epoch: Round,
    instances: BTreeMap<InstanceKey, InstanceState>,
    hb: HbState,
    heard_from: RoundSets,
    own_echoed: RoundSets,
    verified: HashMap<(ProcessId, DigestKey), SignatureBytes>,
    ledger_enabled: bool,
    ledger: LastSeenLedger,
    peer_ledgers: BTreeMap<ProcessId, LastSeenLedger>,
    pool: TrustedPool,
    joiner: Option<JoinerState>,
    service: Option<PoolService>,
    pending_leave: Option<InstanceKey>,
    /// Left the system by delivering its own leave broadcast; such a node
    /// never revives (it would have to join again).
    left: bool,
    rng: ChaCha8Rng,
    events: Vec<NodeEvent>,
}

impl Node {
    pub fn new(cfg: NodeConfig, keys: KeyPair, registry: KeyRegistry) -> Node {
        let mut roster: BTreeSet<ProcessId> = cfg.roster.iter().copied().collect();
        roster.insert(cfg.id);
        let n_view = roster.len();
        let (lifecycle, joiner) = match cfg.join_round {
            None => (LifeCycle::Alive, None),
            Some(round) => (
                LifeCycle::Pending,
                Some(JoinerState {
                    key: keys.public().to_vec(),
                    request_round: round,
                    deadline: Round(round.0 + 1 + cfg.params.window()),
                    n_claim: cfg.pool.size() as u64,
                    roster_claim: cfg.pool.members().to_vec(),
                    sigs: SignatureSet::new(),
                    next_retry: None,
                }),
            ),
        };
        // A pending joiner is not part of anyone's roster yet, including
        // its own view of n.
        let n_view = if joiner.is_some() {
            cfg.pool.size()
        } else {
            n_view
        };
        Node {
            id: cfg.id,
            params: cfg.params,
            keys,
            registry,
            lifecycle,
            roster,
            n_view,
            detected: BTreeSet::new(),
            alive_epoch: Round(0),
            mode_epoch: Round(0),
            instances: BTreeMap::new(),
            hb: HbState::new(Round(0)),
            heard_from: RoundSets::default(),
            own_echoed: RoundSets::default(),
            verified: HashMap::new(),
            ledger_enabled: cfg.ledger_piggyback,
            ledger: LastSeenLedger::new(),
            peer_ledgers: BTreeMap::new(),
            pool: cfg.pool,
            joiner,
            service: None,
            pending_leave: None,
            left: false,
            rng: node_rng(cfg.world_seed, cfg.id),
            events: Vec::new(),
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn lifecycle(&self) -> LifeCycle {
        self.lifecycle
    }

    pub fn n_view(&self) -> usize {
        self.n_view
    }

    /// Byzantine bound under the current membership view.
    pub fn f_view(&self) -> usize {
        let slack = self.params.rep().min(self.n_view.saturating_sub(1));
        (self.n_view - slack - 1) / 3
    }

    /// Plain Byzantine quorum `2f + 1`, the validity threshold.
    pub fn base_quorum(&self) -> usize {
        2 * self.f_view() + 1
    }

    /// Quorum protocol thresholds use: starts at `2f + 1 + rep` and shrinks
    /// by one per detected self-crash, never below `2f + 1`.
    pub fn live_quorum(&self) -> usize {
        let base = self.base_quorum();
        base.max(base + self.params.rep() - self.detected.len().min(self.params.rep()))
    }

    pub fn detected(&self) -> &BTreeSet<ProcessId> {
        &self.detected
    }

    pub fn roster(&self) -> &BTreeSet<ProcessId> {
        &self.roster
    }

    pub fn instance(&self, key: &InstanceKey) -> Option<&InstanceState> {
        self.instances.get(key)
    }

    pub fn instances(&self) -> impl Iterator<Item = (&InstanceKey, &InstanceState)> {
        self.instances.iter()
    }

    pub fn delivered_value(&self, key: &InstanceKey) -> Option<&Value> {
        self.instances
            .get(key)
            .and_then(|i| i.deliver.as_ref())
            .map(|d| &d.payload.value)
    }

    pub fn ledger(&self) -> &LastSeenLedger {
        &self.ledger
    }

    pub fn take_events(&mut self) -> Vec<NodeEvent> {
        std::mem::take(&mut self.events)
    }

    fn window(&self) -> u64 {
        self.params.window()
    }

    fn sign(&self, digest: &DigestKey) -> SignatureBytes {
        self.keys.sign(digest)
    }

    fn verify_cached(
        &mut self,
        signer: ProcessId,
        digest: &DigestKey,
        sig: &SignatureBytes,
    ) -> bool {
        if let Some(known) = self.verified.get(&(signer, *digest)) {
            if known == sig {
                return true;
            }
        }
        if self.registry.verify(signer, digest, sig) {
            self.verified.insert((signer, *digest), sig.clone());
            true
        } else {
            false
        }
    }

    fn verify_set_cached(&mut self, digest: &DigestKey, sigs: &SignatureSet) -> SignatureSet {
        let mut valid = SignatureSet::new();
        for (signer, sig) in sigs.iter() {
            if self.verify_cached(signer, digest, sig) {
                valid.insert(signer, sig.clone());
            }
        }
        valid
    }

    /// Record signers of an inbound signature set that carries this node's
    /// own signature: everyone in such a set has demonstrably seen a
    /// payload this node signed.
    fn note_own_echoes(&mut self, round: Round, set: &SignatureSet) {
        if set.contains(self.id) {
            self.own_echoed.note_all(round, set.signers());
        }
    }

    // ------------------------------------------------------------------
    // User operations
    // ------------------------------------------------------------------

    /// Issue a broadcast at round `round`. Emission starts the same round,
    /// so the simulator applies scripts before collecting outboxes.
    pub fn start_broadcast(&mut self, round: Round, value: Value) {
        if self.lifecycle != LifeCycle::Alive {
            return;
        }
        let payload = BroadcastPayload::new(self.id, round, value);
        let key = payload.instance();
        if self.instances.contains_key(&key) {
            return;
        }
        let digest = payload.digest();
        let origin_sig = self.sign(&digest);
        let mut inst = InstanceState::new();
        inst.exclude_origin_from_quorum = is_join_broadcast(&payload);
        inst.note_origin_sig(&payload, origin_sig.clone());
        inst.store.record_one(digest, self.id, origin_sig);
        inst.committed = Some(digest);
        inst.broadcast_role = true;
        inst.echo = Some(EchoTracker {
            digest,
            window_start: round,
            active: true,
        });
        self.instances.insert(key, inst);
        self.events.push(NodeEvent::Broadcast {
            instance: key,
            value: payload.value.clone(),
        });
    }

    /// Broadcast a leave request; the node stays alive until it delivers
    /// its own leave message.
    pub fn start_leave(&mut self, round: Round) {
        if self.lifecycle != LifeCycle::Alive || self.pending_leave.is_some() {
            return;
        }
        let value = Control::Leave {
            id: self.id,
            key: self.keys.public().to_vec(),
        }
        .encode();
        self.pending_leave = Some(InstanceKey {
            sender: self.id,
            origin_round: round,
        });
        self.start_broadcast(round, value);
    }

    /// Force the node into the dead state (test/scenario hook).
    pub fn force_dead(&mut self) {
        self.lifecycle = LifeCycle::Dead;
    }

    // ------------------------------------------------------------------
    // Outbound
    // ------------------------------------------------------------------

    pub fn collect_outbound(&mut self, round: Round) -> Vec<Addressed> {
        match self.lifecycle {
            LifeCycle::Dead => Vec::new(),
            LifeCycle::Pending => self.collect_pending_outbound(round),
            LifeCycle::Alive => self.collect_alive_outbound(round),
        }
    }

    fn peers(&self) -> Vec<ProcessId> {
        self.roster
            .iter()
            .copied()
            .filter(|p| *p != self.id && !self.detected.contains(p))
            .collect()
    }

    fn collect_alive_outbound(&mut self, round: Round) -> Vec<Addressed> {
        let peers = self.peers();
        let q = self.live_quorum();
        let mut out: Vec<Addressed> = Vec::new();

        let keys: Vec<InstanceKey> = self.instances.keys().copied().collect();
        for key in keys {
            let inst = &self.instances[&key];
            // Broadcast / Echo emission while the echo window is open.
            if let Some(echo) = &inst.echo {
                if echo.active && !inst.delivered() && round >= echo.window_start {
                    let digest = echo.digest;
                    let payload = inst.payloads[&digest].clone();
                    let origin_sig = inst.origin_sigs[&digest].clone();
                    if inst.broadcast_role {
                        for &to in &peers {
                            out.push(Addressed {
                                to,
                                msg: ProtocolMessage::new(
                                    self.id,
                                    MessageBody::Broadcast {
                                        payload: payload.clone(),
                                        origin_sig: origin_sig.clone(),
                                    },
                                ),
                            });
                        }
                    } else {
                        let mut agg = inst.store.aggregate(&digest).cloned().unwrap_or_default();
                        agg.remove(key.sender); // carried in origin_sig
                        for &to in &peers {
                            let sigs = agg.pruned(q, &[to, self.id]);
                            out.push(Addressed {
                                to,
                                msg: ProtocolMessage::new(
                                    self.id,
                                    MessageBody::Echo {
                                        payload: payload.clone(),
                                        origin_sig: origin_sig.clone(),
                                        sigs,
                                    },
                                ),
                            });
                        }
                    }
                }
            }
            // Deliver emission inside the post-delivery window. Once the
            // stored attestations alone form a quorum they make the message
            // valid and the echo proof is omitted; until then the proof
            // rides and the attestation set travels minimal (it only feeds
            // incremental accumulation at the receivers). A join-broadcast
            // originator's entries never count, so they ride on top of the
            // quorum instead of displacing countable entries.
            if let Some(del) = &inst.deliver {
                if round > del.deliver_round && round <= del.send_until {
                    let payload = del.payload.clone();
                    let excluded = inst.exclude_origin_from_quorum.then_some(key.sender);
                    let countable = del.deliver_sigs.len()
                        - matches!(excluded, Some(o) if del.deliver_sigs.contains(o)) as usize;
                    let skip_proof = countable >= q;
                    for &to in &peers {
                        let (echo_proof, deliver_sigs) = if skip_proof {
                            (
                                SignatureSet::new(),
                                prune_for_wire(&del.deliver_sigs, q, &[to, self.id], excluded),
                            )
                        } else {
                            (
                                prune_for_wire(&del.echo_proof, q, &[to, self.id], excluded),
                                prune_for_wire(&del.deliver_sigs, 2, &[self.id, to], excluded),
                            )
                        };
                        out.push(Addressed {
                            to,
                            msg: ProtocolMessage::new(
                                self.id,
                                MessageBody::Deliver {
                                    payload: payload.clone(),
                                    echo_proof,
                                    deliver_sigs,
                                },
                            ),
                        });
                    }
                }
            }
        }

        // Join certificates while serving a joiner.
        if let Some(svc) = &self.service {
            if round <= svc.deadline
                && (svc.direct || svc.sigs.len() >= self.pool.forward_threshold())
            {
                let mut targets: Vec<ProcessId> = self
                    .pool
                    .members()
                    .iter()
                    .copied()
                    .filter(|p| *p != self.id)
                    .collect();
                if !targets.contains(&svc.joiner) {
                    targets.push(svc.joiner);
                }
                for to in targets {
                    out.push(Addressed {
                        to,
                        msg: ProtocolMessage::new(
                            self.id,
                            MessageBody::Join {
                                joiner: svc.joiner,
                                key: svc.key.clone(),
                                round: svc.join_round,
                                n: svc.n_claim,
                                roster: svc.roster_claim.clone(),
                                sigs: svc.sigs.clone(),
                            },
                        ),
                    });
                }
            }
        }

        let busy = !out.is_empty();
        if busy {
            // Piggyback mode: the own heartbeat rides on every protocol
            // message; standalone re-echoes are suspended.
            if self.hb.standalone_since.take().is_some() {
                self.mode_epoch = round;
            }
            let own = self.own_hb_entry(round);
            for a in &mut out {
                a.msg.piggyback_hb = Some(own.clone());
            }
        } else {
            // Standalone proof-of-life. Returning from a busy phase starts
            // a fresh epoch with a full grace window.
            if self.hb.standalone_since.is_none() {
                self.hb.standalone_since = Some(round);
                self.mode_epoch = round;
            }
            let own = self.own_hb_entry(round);
            for &to in &peers {
                let mut entries = vec![own.clone()];
                for (&origin, tracked) in &self.hb.tracked {
                    if round <= tracked.expires {
                        entries.push(HbEntry {
                            origin,
                            round: tracked.round,
                            sigs: tracked.sigs.pruned(q, &[to, self.id]),
                        });
                    }
                }
                out.push(Addressed {
                    to,
                    msg: ProtocolMessage::new(self.id, MessageBody::Hb { entries }),
                });
            }
        }

        if self.ledger_enabled {
            let horizon = round.back(2 * self.window());
            let entries = self.ledger.to_entries(horizon);
            for a in &mut out {
                a.msg.ledger = entries.clone();
            }
        }
        out
    }

    fn own_hb_entry(&mut self, round: Round) -> HbEntry {
        let digest = crate::types::heartbeat_digest(self.id, round);
        let sig = self.sign(&digest);
        if self.ledger_enabled {
            self.ledger.update(self.id, round, sig.clone());
        }
        HbEntry {
            origin: self.id,
            round,
            sigs: SignatureSet::singleton(self.id, sig),
        }
    }

    fn collect_pending_outbound(&mut self, round: Round) -> Vec<Addressed> {
        let Some(js) = &mut self.joiner else {
            return Vec::new();
        };
        // Retry with a fresh round stamp after a random backoff.
        if round > js.deadline {
            match js.next_retry {
                None => {
                    let backoff = self.rng.gen_range(1..=2 * self.params.window());
                    js.next_retry = Some(Round(round.0 + backoff));
                }
                Some(retry) if round >= retry => {
                    js.request_round = round;
                    js.deadline = Round(round.0 + 1 + self.params.window());
                    js.sigs = SignatureSet::new();
                    js.next_retry = None;
                }
                Some(_) => {}
            }
        }
        let js = self.joiner.as_ref().expect("checked above");
        if round <= js.request_round || round > js.deadline {
            return Vec::new();
        }
        let digest = join_hb_digest(self.id, &js.key, js.request_round);
        let sig = self.sign(&digest);
        let body = MessageBody::JoinHb {
            joiner: self.id,
            key: js.key.clone(),
            round: js.request_round,
            sig,
        };
        self.pool
            .members()
            .iter()
            .copied()
            .filter(|p| *p != self.id)
            .map(|to| Addressed {
                to,
                msg: ProtocolMessage::new(self.id, body.clone()),
            })
            .collect()
    }

    // ------------------------------------------------------------------
    // Inbound
    // ------------------------------------------------------------------

    pub fn receive(&mut self, round: Round, msg: &ProtocolMessage) {
        if msg.from == self.id || self.detected.contains(&msg.from) {
            return;
        }
        match self.lifecycle {
            LifeCycle::Dead => {
                self.absorb_while_dead(msg);
                return;
            }
            LifeCycle::Pending => {
                self.receive_pending(round, msg);
                return;
            }
            LifeCycle::Alive => {}
        }

        let mut accepted = match &msg.body {
            MessageBody::Hb { entries } => {
                let mut any = false;
                for e in entries {
                    any |= self.handle_hb_entry(round, e);
                }
                any
            }
            MessageBody::Broadcast {
                payload,
                origin_sig,
            } => self.handle_broadcast(round, payload, origin_sig),
            MessageBody::Echo {
                payload,
                origin_sig,
                sigs,
            } => self.handle_echo(round, msg.from, payload, origin_sig, sigs),
            MessageBody::Deliver {
                payload,
                echo_proof,
                deliver_sigs,
            } => self.handle_deliver(round, msg.from, payload, echo_proof, deliver_sigs),
            MessageBody::JoinHb {
                joiner,
                key,
                round: join_round,
                sig,
            } => self.handle_join_hb(round, *joiner, key, *join_round, sig),
            MessageBody::Join {
                joiner,
                key,
                round: join_round,
                n,
                roster,
                sigs,
            } => self.handle_join(round, *joiner, key, *join_round, *n, roster, sigs),
        };

        if let Some(hb) = &msg.piggyback_hb {
            accepted |= self.handle_hb_entry(round, hb);
        }
        if accepted {
            self.heard_from.note(round, msg.from);
            if self.ledger_enabled && !msg.ledger.is_empty() {
                self.ledger.merge_entries(&msg.ledger, &self.registry);
                let mut view = LastSeenLedger::new();
                view.merge_entries(&msg.ledger, &self.registry);
                self.peer_ledgers.insert(msg.from, view);
            }
        }
    }

    fn handle_hb_entry(&mut self, round: Round, entry: &HbEntry) -> bool {
        let digest = entry.digest();
        let verified = self.verify_set_cached(&digest, &entry.sigs);
        if verified.is_empty() {
            return false;
        }
        // The origin's own signature doubles as a last-seen proof.
        if self.ledger_enabled {
            if let Some(sig) = verified.get(entry.origin) {
                self.ledger.update(entry.origin, entry.round, sig.clone());
            }
        }
        self.note_own_echoes(round, &verified);
        if entry.origin == self.id {
            self.hb
                .own_returns
                .entry(entry.round)
                .or_default()
                .extend(verified.signers());
        } else if entry.round.0 + self.window() > round.0 {
            // Track for re-echo in rounds (now, origin round + window].
            let own_sig = self.sign(&digest);
            let expires = Round(entry.round.0 + self.window());
            match self.hb.tracked.get_mut(&entry.origin) {
                Some(t) if t.round == entry.round => {
                    t.sigs.union(&verified);
                    t.sigs.insert(self.id, own_sig);
                }
                Some(t) if t.round > entry.round => {}
                _ => {
                    let mut sigs = verified.clone();
                    sigs.insert(self.id, own_sig);
                    self.hb.tracked.insert(
                        entry.origin,
                        TrackedHb {
                            round: entry.round,
                            sigs,
                            expires,
                        },
                    );
                }
            }
        }
        true
    }

    fn handle_broadcast(
        &mut self,
        round: Round,
        payload: &BroadcastPayload,
        origin_sig: &SignatureBytes,
    ) -> bool {
        let digest = payload.digest();
        if !self.verify_cached(payload.sender, &digest, origin_sig) {
            return false;
        }
        let key = payload.instance();
        let own_sig = self.sign(&digest);
        let inst = self.instances.entry(key).or_default();
        inst.exclude_origin_from_quorum |= is_join_broadcast(payload);
        inst.note_origin_sig(payload, origin_sig.clone());
        inst.store
            .record_one(digest, payload.sender, origin_sig.clone());
        if inst.committed.is_none() && !inst.delivered() {
            // First receipt: commit to the first heard value, append our
            // signature, start echoing next round.
            inst.committed = Some(digest);
            inst.store.record_one(digest, self.id, own_sig);
            inst.echo = Some(EchoTracker {
                digest,
                window_start: round.next(),
                active: true,
            });
            self.maybe_deliver_on_quorum(key, round);
        }
        true
    }

    fn handle_echo(
        &mut self,
        round: Round,
        from: ProcessId,
        payload: &BroadcastPayload,
        origin_sig: &SignatureBytes,
        sigs: &SignatureSet,
    ) -> bool {
        let digest = payload.digest();
        if !self.verify_cached(payload.sender, &digest, origin_sig) {
            return false;
        }
        let mut verified = self.verify_set_cached(&digest, sigs);
        verified.insert(payload.sender, origin_sig.clone());
        self.note_own_echoes(round, &verified);

        let key = payload.instance();
        let own_sig = self.sign(&digest);
        let inst = self.instances.entry(key).or_default();
        inst.exclude_origin_from_quorum |= is_join_broadcast(payload);
        inst.note_origin_sig(payload, origin_sig.clone());
        inst.store.record(from, digest, &verified);

        match inst.committed {
            None if !inst.delivered() => {
                // Not sending any echo for this instance yet: commit, sign
                // and either deliver on an immediate quorum or start
                // echoing next round.
                inst.committed = Some(digest);
                inst.store.record_one(digest, self.id, own_sig);
                inst.echo = Some(EchoTracker {
                    digest,
                    window_start: round.next(),
                    active: true,
                });
            }
            Some(committed) if committed == digest => {
                // Echoing the same value: the aggregate grew, emissions
                // pick it up automatically.
            }
            _ => {
                // Echoing a different value (or already delivered another
                // one): signatures were recorded as evidence above and lie
                // detection ran in note_origin_sig; our own signature stays
                // on the value we committed to.
            }
        }
        self.maybe_deliver_on_quorum(key, round);
        true
    }

    fn handle_deliver(
        &mut self,
        round: Round,
        from: ProcessId,
        payload: &BroadcastPayload,
        echo_proof: &SignatureSet,
        deliver_sigs: &SignatureSet,
    ) -> bool {
        let digest = payload.digest();
        let attest_digest = payload.deliver_digest();
        let ve = self.verify_set_cached(&digest, echo_proof);
        let vd = self.verify_set_cached(&attest_digest, deliver_sigs);
        let exclude = is_join_broadcast(payload);
        let bq = self.base_quorum();
        let ve_count = ve.len() - (exclude && ve.contains(payload.sender)) as usize;
        let vd_count = vd.len() - (exclude && vd.contains(payload.sender)) as usize;
        // A deliver message is valid with a full echo-signature quorum on
        // the value, or with a quorum of deliver attestations.
        if ve_count < bq && vd_count < bq {
            return false;
        }
        self.note_own_echoes(round, &ve);
        self.note_own_echoes(round, &vd);

        let key = payload.instance();
        let inst = self.instances.entry(key).or_default();
        inst.exclude_origin_from_quorum |= exclude;
        if let Some(sig) = ve.get(payload.sender) {
            inst.note_origin_sig(payload, sig.clone());
        }
        inst.store.record(from, digest, &ve);

        if inst.delivered() {
            let del = inst.deliver.as_mut().expect("delivered");
            del.r_deliver.extend(vd.signers());
            del.deliver_sigs.union(&vd);
        } else {
            let proof = if ve_count >= bq {
                ve.clone()
            } else {
                inst.store.aggregate(&digest).cloned().unwrap_or(ve.clone())
            };
            self.finish_delivery(key, payload.clone(), proof, vd, round, 2 * self.window());
        }
        true
    }

    /// Check the committed value of an instance against the live quorum
    /// and deliver on the first crossing.
    fn maybe_deliver_on_quorum(&mut self, key: InstanceKey, round: Round) {
        let q = self.live_quorum();
        let Some(inst) = self.instances.get(&key) else {
            return;
        };
        if inst.delivered() {
            return;
        }
        let Some(digest) = inst.committed else { return };
        if inst.quorum_count(key.sender, &digest) < q {
            return;
        }
        let payload = inst.payloads[&digest].clone();
        let proof = inst.store.aggregate(&digest).cloned().unwrap_or_default();
        self.finish_delivery(
            key,
            payload,
            proof,
            SignatureSet::new(),
            round,
            2 * self.window(),
        );
    }

    /// Deliver exactly once: stop echoes, start the deliver-send window,
    /// and apply any membership control the value carries.
    fn finish_delivery(
        &mut self,
        key: InstanceKey,
        payload: BroadcastPayload,
        echo_proof: SignatureSet,
        deliver_sigs: SignatureSet,
        round: Round,
        send_window: u64,
    ) {
        let digest = payload.digest();
        let attest = self.sign(&payload.deliver_digest());
        let inst = self.instances.entry(key).or_default();
        if inst.delivered() {
            return;
        }
        if let Some(echo) = &mut inst.echo {
            echo.active = false;
        }
        let mut sigs = deliver_sigs;
        sigs.insert(self.id, attest);
        sigs.union(&inst.absorbed_attests);
        let mut r_deliver: BTreeSet<ProcessId> = sigs.signers().collect();
        r_deliver.insert(self.id);
        inst.deliver = Some(DeliverTracker {
            digest,
            payload: payload.clone(),
            deliver_round: round,
            r_deliver,
            deliver_sigs: sigs,
            echo_proof,
            send_until: Round(round.0 + 1 + send_window),
        });
        self.events.push(NodeEvent::Deliver {
            instance: key,
            digest,
            value: payload.value.clone(),
        });

        if self.pending_leave == Some(key) {
            self.lifecycle = LifeCycle::Dead;
            self.left = true;
            self.events.push(NodeEvent::LeaveDead);
            return;
        }
        match Control::decode(&payload.value) {
            Some(Control::Join { id, key: public }) if id == key.sender && id != self.id => {
                if self.roster.insert(id) {
                    self.n_view += 1;
                }
                self.registry.add(id, &public);
            }
            Some(Control::Leave { id, .. })
                if id == key.sender && id != self.id && self.roster.remove(&id) =>
            {
                self.n_view -= 1;
            }
            _ => {}
        }
    }

    /// Dead nodes keep listening: verified signatures still accumulate so
    /// the node can later revive on quorum evidence, but nothing is signed
    /// or emitted.
    fn absorb_while_dead(&mut self, msg: &ProtocolMessage) {
        match &msg.body {
            MessageBody::Broadcast {
                payload,
                origin_sig,
            } => {
                let digest = payload.digest();
                if self.verify_cached(payload.sender, &digest, origin_sig) {
                    let key = payload.instance();
                    let inst = self.instances.entry(key).or_default();
                    inst.note_origin_sig(payload, origin_sig.clone());
                    inst.store
                        .record_one(digest, payload.sender, origin_sig.clone());
                }
            }
            MessageBody::Echo {
                payload,
                origin_sig,
                sigs,
            } => {
                let digest = payload.digest();
                if self.verify_cached(payload.sender, &digest, origin_sig) {
                    let mut verified = self.verify_set_cached(&digest, sigs);
                    verified.insert(payload.sender, origin_sig.clone());
                    let key = payload.instance();
                    let inst = self.instances.entry(key).or_default();
                    inst.note_origin_sig(payload, origin_sig.clone());
                    inst.store.record(msg.from, digest, &verified);
                }
            }
            MessageBody::Deliver {
                payload,
                echo_proof,
                deliver_sigs,
            } => {
                let digest = payload.digest();
                let ve = self.verify_set_cached(&digest, echo_proof);
                let vd = self.verify_set_cached(&payload.deliver_digest(), deliver_sigs);
                if !ve.is_empty() || !vd.is_empty() {
                    let key = payload.instance();
                    let inst = self.instances.entry(key).or_default();
                    if let Some(sig) = ve.get(payload.sender) {
                        inst.note_origin_sig(payload, sig.clone());
                    }
                    inst.payloads
                        .entry(digest)
                        .or_insert_with(|| payload.clone());
                    inst.store.record(msg.from, digest, &ve);
                    inst.absorbed_attests.union(&vd);
                }
            }
            _ => {}
        }
    }

    // ------------------------------------------------------------------
    // Join flow
    // ------------------------------------------------------------------

    fn handle_join_hb(
        &mut self,
        round: Round,
        joiner: ProcessId,
        key: &[u8],
        join_round: Round,
        sig: &SignatureBytes,
    ) -> bool {
        if !self.pool.contains(self.id) || self.roster.contains(&joiner) {
            return false;
        }
        // Respect the announced window and serve one joiner at a time.
        if round <= join_round || round.0 > join_round.0 + 1 + self.window() {
            return false;
        }
        if let Some(svc) = &self.service {
            if svc.joiner != joiner || svc.join_round != join_round {
                return false;
            }
        }
        let digest = join_hb_digest(joiner, key, join_round);
        let mut probe = KeyRegistry::new(self.registry.backend());
        if !probe.add(joiner, key) || !probe.verify(joiner, &digest, sig) {
            return false;
        }
        if self.service.is_none() {
            let roster_claim: Vec<ProcessId> = self.roster.iter().copied().collect();
            let n_claim = self.n_view as u64;
            let cert_digest = join_digest(joiner, key, join_round, n_claim, &roster_claim);
            let own = self.sign(&cert_digest);
            self.service = Some(PoolService {
                joiner,
                key: key.to_vec(),
                join_round,
                deadline: Round(join_round.0 + 1 + self.window()),
                n_claim,
                roster_claim,
                sigs: SignatureSet::singleton(self.id, own),
                direct: true,
            });
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn handle_join(
        &mut self,
        _round: Round,
        joiner: ProcessId,
        key: &[u8],
        join_round: Round,
        n: u64,
        roster: &[ProcessId],
        sigs: &SignatureSet,
    ) -> bool {
        if !self.pool.contains(self.id) || self.roster.contains(&joiner) {
            return false;
        }
        // The certificate must describe the same system we know.
        if n != self.n_view as u64 || !self.roster.iter().copied().eq(roster.iter().copied()) {
            return false;
        }
        if let Some(svc) = &self.service {
            if svc.joiner != joiner || svc.join_round != join_round {
                return false;
            }
        }
        let digest = join_digest(joiner, key, join_round, n, roster);
        let verified = self.verify_set_cached(&digest, sigs);
        if verified.is_empty() {
            return false;
        }
        let own = self.sign(&digest);
        match &mut self.service {
            Some(svc) => {
                svc.sigs.union(&verified);
                svc.sigs.insert(self.id, own);
            }
            None => {
                let mut acc = verified.clone();
                acc.insert(self.id, own);
                self.service = Some(PoolService {
                    joiner,
                    key: key.to_vec(),
                    join_round,
                    deadline: Round(join_round.0 + 1 + self.window()),
                    n_claim: n,
                    roster_claim: roster.to_vec(),
                    sigs: acc,
                    direct: false,
                });
            }
        }
        true
    }

    fn receive_pending(&mut self, round: Round, msg: &ProtocolMessage) {
        let MessageBody::Join {
            joiner,
            key,
            round: join_round,
            n,
            roster,
            sigs,
        } = &msg.body
        else {
            return;
        };
        let Some(js) = &self.joiner else { return };
        if *joiner != self.id
            || *join_round != js.request_round
            || *key != js.key
            || *n != js.n_claim
            || roster != &js.roster_claim
            || round > js.deadline
        {
            return;
        }
        let digest = join_digest(self.id, key, *join_round, *n, roster);
        let verified = self.verify_set_cached(&digest, sigs);
        let js = self.joiner.as_mut().expect("pending");
        js.sigs.union(&verified);
        if js.sigs.len() >= self.pool.join_threshold() {
            // Enough pool signatures: transition to the alive state and
            // announce ourselves with a join broadcast.
            let key_bytes = js.key.clone();
            self.joiner = None;
            self.lifecycle = LifeCycle::Alive;
            self.alive_epoch = round;
            self.hb = HbState::new(round);
            self.n_view += 1;
            self.events.push(NodeEvent::JoinAlive);
            let value = Control::Join {
                id: self.id,
                key: key_bytes,
            }
            .encode();
            self.start_broadcast(round, value);
        }
    }

    // ------------------------------------------------------------------
    // End-of-round checks
    // ------------------------------------------------------------------

    pub fn end_round(&mut self, round: Round) {
        match self.lifecycle {
            LifeCycle::Alive => {
                if self.ledger_enabled {
                    self.run_crash_detection(round);
                }
                if self.lifecycle != LifeCycle::Alive {
                    return;
                }
                if let Some(case) = self.check_self_crash(round) {
                    self.lifecycle = LifeCycle::Dead;
                    self.events.push(NodeEvent::SelfCrash { case });
                } else if let Some(case) = self.heartbeat_crash(round) {
                    self.lifecycle = LifeCycle::Dead;
                    self.events.push(NodeEvent::SelfCrash { case });
                }
                self.prune(round);
            }
            LifeCycle::Dead => self.revival_check(round),
            LifeCycle::Pending => {}
        }
        if let Some(svc) = &self.service {
            if round > svc.deadline {
                self.service = None;
            }
        }
    }

    fn run_crash_detection(&mut self, round: Round) {
        // A freshly (re)initialized node holds stale ledgers; give it a
        // full window to refresh them before it may declare anyone.
        if round.0 < self.alive_epoch.0 + self.window() {
            return;
        }
        let quorum = self.base_quorum();
        let candidates: Vec<ProcessId> = self
            .roster
            .iter()
            .copied()
            .filter(|p| *p != self.id && !self.detected.contains(p))
            .collect();
        let mut ledgers: Vec<&LastSeenLedger> = vec![&self.ledger];
        ledgers.extend(self.peer_ledgers.values());
        let newly = detect_crashed(
            candidates.into_iter(),
            &ledgers,
            round,
            self.window(),
            quorum,
        );
        for target in newly {
            self.detected.insert(target);
            self.events.push(NodeEvent::DeclareCrashed { target });
        }
    }

    /// Definition-7 style self-crash evaluation, cases in order; the first
    /// satisfied case wins.
    pub fn check_self_crash(&self, round: Round) -> Option<CrashCase> {
        let q = self.live_quorum();
        let window = self.window();

        // Case 1: echo quorum not reached a full window after the echo
        // window opened, unless a lie was discovered. Trackers from before
        // the current alive epoch already had their reckoning.
        for (key, inst) in &self.instances {
            let Some(echo) = &inst.echo else { continue };
            if !echo.active || inst.delivered() || echo.window_start < self.alive_epoch {
                continue;
            }
            if round.0 < echo.window_start.0 + window {
                continue;
            }
            let any_quorum = inst
                .store
                .digests()
                .any(|d| inst.quorum_count(key.sender, d) >= q);
            if !any_quorum && inst.lie.is_none() {
                return Some(CrashCase::EchoQuorum);
            }
        }

        // Case 2: deliver attestations below quorum a full window after
        // delivering; deliveries from before the current alive epoch are
        // settled history.
        for (key, inst) in &self.instances {
            let Some(del) = &inst.deliver else { continue };
            if del.deliver_round < self.alive_epoch || round.0 < del.deliver_round.0 + window {
                continue;
            }
            let mut count = del.r_deliver.len();
            if inst.exclude_origin_from_quorum && del.r_deliver.contains(&key.sender) {
                count -= 1;
            }
            if count < q {
                return Some(CrashCase::DeliverQuorum);
            }
        }

        // Cases 3 and 4 need a full window inside the current alive epoch;
        // Case 4 additionally needs one inside the current heartbeat mode,
        // since its echoed-back feed switches vehicle with the mode.
        if round.0 >= self.alive_epoch.0 + window {
            let lo = Round(round.0 + 1 - window);
            // Case 3: heard from too few distinct processes (self included).
            if self.heard_from.distinct_in(lo, round) + 1 < q {
                return Some(CrashCase::Silence);
            }
            // Case 4: own messages not seen signed by enough processes.
            if round.0 >= self.mode_epoch.0 + window && self.own_echoed.distinct_in(lo, round) < q {
                return Some(CrashCase::NotEchoed);
            }
        }
        None
    }

    /// Proof-of-life liveness check for `round`, per its window
    /// `[round - 1 - window, round - 1]` over own-heartbeat origin rounds.
    /// Unconditionally ok until a full window fits inside the current
    /// standalone epoch.
    pub fn check_heartbeat_liveness(&self, round: Round) -> Option<CrashCase> {
        let epoch = self.hb.standalone_since?;
        let window = self.window();
        if round.0 <= epoch.0 + window {
            return None;
        }
        let lo = Round(round.0.saturating_sub(1 + window));
        let hi = Round(round.0 - 1);
        if self.hb.returns_in(self.id, lo, hi) < self.live_quorum() {
            Some(CrashCase::HbRule)
        } else {
            None
        }
    }

    fn heartbeat_crash(&self, round: Round) -> Option<CrashCase> {
        // End of round r is the decision point for round r + 1.
        self.check_heartbeat_liveness(round.next())
    }

    /// A dead node revives when some value shows a full quorum of echo
    /// signatures and the broadcast is older than two windows. Evidence
    /// that predates the death is no witness that the network works now,
    /// and a process that left the system must join instead.
    fn revival_check(&mut self, round: Round) {
        if self.left || round.0 <= 2 * self.window() {
            return;
        }
        let cutoff = Round(round.0 - 2 * self.window());
        let mut found: Option<(InstanceKey, DigestKey)> = None;
        for (key, inst) in &self.instances {
            if key.origin_round >= cutoff {
                continue;
            }
            for d in inst.store.digests() {
                if inst.quorum_count(key.sender, d) >= self.base_quorum() {
                    found = Some((*key, *d));
                    break;
                }
            }
            if found.is_some() {
                break;
            }
        }
        let Some((key, digest)) = found else { return };

        self.lifecycle = LifeCycle::Alive;
        self.alive_epoch = round;
        self.hb = HbState::new(round);
        self.heard_from = RoundSets::default();
        self.own_echoed = RoundSets::default();
        self.events.push(NodeEvent::Revive { instance: key });

        let window = self.window();
        let inst = self.instances.get_mut(&key).expect("found above");
        if let Some(del) = &mut inst.deliver {
            // Already delivered before dying: refresh the send window.
            del.deliver_round = round;
            del.send_until = Round(round.0 + 1 + window);
        } else {
            let payload = inst.payloads[&digest].clone();
            let proof = inst.store.aggregate(&digest).cloned().unwrap_or_default();
            self.finish_delivery(
                key,
                payload,
                proof,
                SignatureSet::new(),
                round,
                self.window(),
            );
        }
    }

    fn prune(&mut self, round: Round) {
        let horizon = round.back(2 * self.window() + 2);
        self.heard_from.prune(horizon);
        self.own_echoed.prune(horizon);
        self.hb.prune(horizon);
    }
}

fn is_join_broadcast(payload: &BroadcastPayload) -> bool {
    matches!(Control::decode(&payload.value), Some(Control::Join { id, .. }) if id == payload.sender)
}

/// Prune a set for emission to `limit` countable entries. An excluded
/// origin's entry does not count toward quorums, so when present it is
/// kept in addition to the limit rather than displacing a countable one.
fn prune_for_wire(
    set: &SignatureSet,
    limit: usize,
    preferred: &[ProcessId],
    excluded: Option<ProcessId>,
) -> SignatureSet {
    match excluded {
        Some(origin) if set.contains(origin) => {
            let mut rest = set.clone();
            let origin_sig = rest.remove(origin).expect("checked above");
            let mut out = rest.pruned(limit, preferred);
            out.insert(origin, origin_sig);
            out
        }
        _ => set.pruned(limit, preferred),
    }
}
