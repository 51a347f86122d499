//! Byzantine strategies. A strategy replaces the honest state machine for
//! up to `f` designated processes. Links stay authenticated, so no strategy
//! can forge another process's signature; adversaries only sign with their
//! own key and replay signature entries they legitimately received.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::crypto::{KeyPair, KeyRegistry};
use crate::net::node_rng;
use crate::protocol::{Addressed, Node, NodeConfig};
use crate::types::{
    BroadcastPayload, DigestKey, HbEntry, MessageBody, ProcessId, ProtocolMessage, Round,
    SignatureSet, Value,
};

/// Strategy selector, config key `adversary.kind`.
#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryKind {
    /// Never sends anything.
    Silent,
    /// Signs one value toward `split_a` and a different value toward the
    /// complement for its own broadcasts. With `suppress_forwarding` it
    /// never relays echo aggregates, stressing the non-Case-1 crash rules.
    Equivocate {
        split_a: Vec<ProcessId>,
        suppress_forwarding: bool,
    },
    /// Participates but never appends or forwards other processes'
    /// signatures.
    WithholdSignatures,
    /// Emits syntactically valid messages with arbitrary payloads under
    /// its own key.
    RandomNoise,
}

impl AdversaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryKind::Silent => "silent",
            AdversaryKind::Equivocate { .. } => "equivocate",
            AdversaryKind::WithholdSignatures => "withhold",
            AdversaryKind::RandomNoise => "random_noise",
        }
    }
}

struct EquivocationState {
    payload_a: BroadcastPayload,
    payload_b: BroadcastPayload,
    split_a: Vec<ProcessId>,
    agg_a: SignatureSet,
    agg_b: SignatureSet,
    until: Round,
}

pub struct AdversaryNode {
    id: ProcessId,
    kind: AdversaryKind,
    keys: KeyPair,
    registry: KeyRegistry,
    peers: Vec<ProcessId>,
    window: u64,
    /// Honest shadow driving the withhold strategy.
    inner: Node,
    equiv: Option<EquivocationState>,
    rng: ChaCha8Rng,
    noise_instance: Option<(BroadcastPayload, Round)>,
}

impl AdversaryNode {
    pub fn new(kind: AdversaryKind, cfg: NodeConfig, keys: KeyPair, registry: KeyRegistry) -> Self {
        let id = cfg.id;
        let peers: Vec<ProcessId> = cfg.roster.iter().copied().filter(|p| *p != id).collect();
        let window = cfg.params.window();
        let rng = node_rng(cfg.world_seed, id);
        let inner = Node::new(cfg, keys.clone(), registry.clone());
        AdversaryNode {
            id,
            kind,
            keys,
            registry,
            peers,
            window,
            inner,
            equiv: None,
            rng,
            noise_instance: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn kind(&self) -> &AdversaryKind {
        &self.kind
    }

    pub fn start_broadcast(&mut self, round: Round, value: Value) {
        match &self.kind {
            AdversaryKind::Silent => {}
            AdversaryKind::WithholdSignatures | AdversaryKind::RandomNoise => {
                self.inner.start_broadcast(round, value);
            }
            AdversaryKind::Equivocate {
                split_a,
                suppress_forwarding: _,
            } => {
                // Sign two different values for the same instance.
                let mut alt = value.as_slice().to_vec();
                alt.push(0x21);
                let payload_a = BroadcastPayload::new(self.id, round, value);
                let payload_b = BroadcastPayload::new(self.id, round, Value::new(alt));
                let split_a = if split_a.is_empty() {
                    // Default split: every other peer hears value A.
                    self.peers.iter().copied().step_by(2).collect()
                } else {
                    split_a.clone()
                };
                self.equiv = Some(EquivocationState {
                    payload_a,
                    payload_b,
                    split_a,
                    agg_a: SignatureSet::new(),
                    agg_b: SignatureSet::new(),
                    until: Round(round.0 + 3 * self.window),
                });
            }
        }
    }

    pub fn receive(&mut self, round: Round, msg: &ProtocolMessage) {
        match &self.kind {
            AdversaryKind::WithholdSignatures => self.inner.receive(round, msg),
            AdversaryKind::Equivocate { .. } => {
                let Some(eq) = &mut self.equiv else { return };
                if let MessageBody::Echo { payload, sigs, .. } = &msg.body {
                    // Collect echo signatures per value for cross-forwarding.
                    let digest = payload.digest();
                    let target = if digest == eq.payload_a.digest() {
                        Some(&mut eq.agg_a)
                    } else if digest == eq.payload_b.digest() {
                        Some(&mut eq.agg_b)
                    } else {
                        None
                    };
                    if let Some(agg) = target {
                        let mut checked = SignatureSet::new();
                        for (signer, sig) in sigs.iter() {
                            if self.registry.verify(signer, &digest, sig) {
                                checked.insert(signer, sig.clone());
                            }
                        }
                        agg.union(&checked);
                    }
                }
            }
            AdversaryKind::Silent | AdversaryKind::RandomNoise => {}
        }
    }

    pub fn collect_outbound(&mut self, round: Round) -> Vec<Addressed> {
        match self.kind.clone() {
            AdversaryKind::Silent => Vec::new(),
            AdversaryKind::WithholdSignatures => {
                let mut out = self.inner.collect_outbound(round);
                for a in &mut out {
                    strip_foreign_signatures(self.id, &mut a.msg);
                }
                out
            }
            AdversaryKind::Equivocate {
                suppress_forwarding,
                ..
            } => self.equivocation_outbound(round, suppress_forwarding),
            AdversaryKind::RandomNoise => self.noise_outbound(round),
        }
    }

    pub fn end_round(&mut self, round: Round) {
        if matches!(self.kind, AdversaryKind::WithholdSignatures) {
            // Keep the shadow's windows moving; a Byzantine node never
            // crashes itself, so any transition it decides on is ignored.
            let _ = self.inner.check_self_crash(round);
        }
        let _ = round;
    }

    fn equivocation_outbound(&mut self, round: Round, suppress_forwarding: bool) -> Vec<Addressed> {
        let Some(eq) = &self.equiv else {
            return Vec::new();
        };
        if round > eq.until || round < eq.payload_a.origin_round {
            return Vec::new();
        }
        let sig_a = self.keys.sign(&eq.payload_a.digest());
        let sig_b = self.keys.sign(&eq.payload_b.digest());
        let mut out = Vec::new();
        for &to in &self.peers {
            let (payload, origin_sig) = if eq.split_a.contains(&to) {
                (eq.payload_a.clone(), sig_a.clone())
            } else {
                (eq.payload_b.clone(), sig_b.clone())
            };
            out.push(Addressed {
                to,
                msg: ProtocolMessage::new(
                    self.id,
                    MessageBody::Broadcast {
                        payload,
                        origin_sig,
                    },
                ),
            });
            if !suppress_forwarding {
                // Relay whichever aggregate grew, to everyone: the lie is
                // public anyway once correct nodes echo both values.
                for (payload, origin_sig, agg) in [
                    (&eq.payload_a, &sig_a, &eq.agg_a),
                    (&eq.payload_b, &sig_b, &eq.agg_b),
                ] {
                    if !agg.is_empty() {
                        out.push(Addressed {
                            to,
                            msg: ProtocolMessage::new(
                                self.id,
                                MessageBody::Echo {
                                    payload: payload.clone(),
                                    origin_sig: origin_sig.clone(),
                                    sigs: agg.clone(),
                                },
                            ),
                        });
                    }
                }
            }
        }
        out
    }

    fn noise_outbound(&mut self, round: Round) -> Vec<Addressed> {
        // A fresh junk broadcast instance once per window, garbage-round
        // heartbeats otherwise. Everything verifies under our own key.
        let refresh = match &self.noise_instance {
            None => true,
            Some((payload, _)) => round.0 >= payload.origin_round.0 + self.window,
        };
        if refresh {
            let value: [u8; 8] = self.rng.gen();
            let payload = BroadcastPayload::new(self.id, round, Value::new(value.to_vec()));
            self.noise_instance = Some((payload, round));
        }
        let (payload, _) = self.noise_instance.as_ref().expect("set above").clone();
        let origin_sig = self.keys.sign(&payload.digest());
        let mut out = Vec::new();
        for &to in &self.peers {
            if self.rng.gen_bool(0.5) {
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
            } else {
                let skew = self.rng.gen_range(0..=self.window);
                let hb_round = Round(round.0.saturating_sub(skew));
                let digest = crate::types::heartbeat_digest(self.id, hb_round);
                let entry = HbEntry {
                    origin: self.id,
                    round: hb_round,
                    sigs: SignatureSet::singleton(self.id, self.keys.sign(&digest)),
                };
                out.push(Addressed {
                    to,
                    msg: ProtocolMessage::new(
                        self.id,
                        MessageBody::Hb {
                            entries: vec![entry],
                        },
                    ),
                });
            }
        }
        out
    }
}

/// Drop every signature entry not produced by the adversary itself.
fn strip_foreign_signatures(own: ProcessId, msg: &mut ProtocolMessage) {
    let keep_own = |sigs: &SignatureSet| -> SignatureSet {
        match sigs.get(own) {
            Some(sig) => SignatureSet::singleton(own, sig.clone()),
            None => SignatureSet::new(),
        }
    };
    match &mut msg.body {
        MessageBody::Echo { sigs, .. } => *sigs = keep_own(sigs),
        MessageBody::Deliver {
            echo_proof,
            deliver_sigs,
            ..
        } => {
            *echo_proof = keep_own(echo_proof);
            *deliver_sigs = keep_own(deliver_sigs);
        }
        MessageBody::Hb { entries } => {
            entries.retain(|e| e.origin == own);
            for e in entries {
                *e = HbEntry {
                    origin: e.origin,
                    round: e.round,
                    sigs: keep_own(&e.sigs),
                };
            }
        }
        MessageBody::Join { sigs, .. } => *sigs = keep_own(sigs),
        MessageBody::Broadcast { .. } | MessageBody::JoinHb { .. } => {}
    }
    if let Some(hb) = &mut msg.piggyback_hb {
        hb.sigs = keep_own(&hb.sigs);
    }
}

/// Every signer appearing in an adversary's outbound messages, used by the
/// harness to assert that no foreign signature was fabricated.
pub fn outbound_signers(msg: &ProtocolMessage) -> Vec<(ProcessId, DigestKey)> {
    let mut out = Vec::new();
    match &msg.body {
        MessageBody::Hb { entries } => {
            for e in entries {
                let d = e.digest();
                out.extend(e.sigs.signers().map(|s| (s, d)));
            }
        }
        MessageBody::Broadcast { payload, .. } => out.push((payload.sender, payload.digest())),
        MessageBody::Echo { payload, sigs, .. } => {
            let d = payload.digest();
            out.push((payload.sender, d));
            out.extend(sigs.signers().map(|s| (s, d)));
        }
        MessageBody::Deliver {
            payload,
            echo_proof,
            deliver_sigs,
        } => {
            let d = payload.digest();
            let dd = payload.deliver_digest();
            out.extend(echo_proof.signers().map(|s| (s, d)));
            out.extend(deliver_sigs.signers().map(|s| (s, dd)));
        }
        MessageBody::JoinHb {
            joiner, key, round, ..
        } => {
            out.push((*joiner, crate::types::join_hb_digest(*joiner, key, *round)));
        }
        MessageBody::Join {
            joiner,
            key,
            round,
            n,
            roster,
            sigs,
        } => {
            let d = crate::types::join_digest(*joiner, key, *round, *n, roster);
            out.extend(sigs.signers().map(|s| (s, d)));
        }
    }
    if let Some(hb) = &msg.piggyback_hb {
        let d = hb.digest();
        out.extend(hb.sigs.signers().map(|s| (s, d)));
    }
    out
}
