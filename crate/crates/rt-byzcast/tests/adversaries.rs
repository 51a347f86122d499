//! Adversary containment: whatever the strategy does, its outbox never
//! carries a verifying signature of a non-Byzantine process that the
//! adversary did not legitimately receive first.

use std::collections::BTreeSet;

use rt_byzcast::adversary::{outbound_signers, AdversaryKind, AdversaryNode};
use rt_byzcast::crypto::{Backend, KeyPair, KeyRegistry};
use rt_byzcast::membership::TrustedPool;
use rt_byzcast::protocol::NodeConfig;
use rt_byzcast::types::{
    BroadcastPayload, DigestKey, MessageBody, ProcessId, ProtocolMessage, Round, SignatureSet,
    SystemParams, Value,
};

struct Rig {
    keys: Vec<KeyPair>,
    registry: KeyRegistry,
    params: SystemParams,
}

impl Rig {
    fn new(n: usize) -> Rig {
        let params = SystemParams::basic(n, 5).unwrap();
        let mut registry = KeyRegistry::new(Backend::Sim);
        let keys: Vec<KeyPair> = (0..n as u64)
            .map(|i| KeyPair::from_seed(Backend::Sim, ProcessId(i), &[i as u8 + 3; 32]))
            .collect();
        for k in &keys {
            registry.add(k.owner(), k.public());
        }
        Rig {
            keys,
            registry,
            params,
        }
    }

    fn adversary(&self, id: u64, kind: AdversaryKind) -> AdversaryNode {
        let cfg = NodeConfig {
            id: ProcessId(id),
            params: self.params,
            roster: (0..self.params.n() as u64).map(ProcessId).collect(),
            pool: TrustedPool::new((0..self.params.n() as u64).map(ProcessId).collect()),
            ledger_piggyback: false,
            join_round: None,
            world_seed: 9,
        };
        AdversaryNode::new(
            kind,
            cfg,
            self.keys[id as usize].clone(),
            self.registry.clone(),
        )
    }

    fn echo_from(&self, from: u64, payload: &BroadcastPayload, signers: &[u64]) -> ProtocolMessage {
        let origin_sig = self.keys[payload.sender.0 as usize].sign(&payload.digest());
        let sigs: SignatureSet = signers
            .iter()
            .map(|&s| (ProcessId(s), self.keys[s as usize].sign(&payload.digest())))
            .collect();
        ProtocolMessage::new(
            ProcessId(from),
            MessageBody::Echo {
                payload: payload.clone(),
                origin_sig,
                sigs,
            },
        )
    }
}

/// Every signer appearing anywhere in a message, paired with its digest.
fn received_signers(msg: &ProtocolMessage) -> Vec<(ProcessId, DigestKey)> {
    outbound_signers(msg)
}

#[test]
fn adversaries_never_fabricate_foreign_signatures() {
    let rig = Rig::new(7);
    let me = ProcessId(0);
    let kinds = [
        AdversaryKind::Silent,
        AdversaryKind::WithholdSignatures,
        AdversaryKind::RandomNoise,
        AdversaryKind::Equivocate {
            split_a: vec![ProcessId(1), ProcessId(2)],
            suppress_forwarding: false,
        },
        AdversaryKind::Equivocate {
            split_a: vec![],
            suppress_forwarding: true,
        },
    ];
    for kind in kinds {
        let name = kind.name();
        let mut adv = rig.adversary(0, kind);
        let mut seen: BTreeSet<(ProcessId, DigestKey)> = BTreeSet::new();

        adv.start_broadcast(Round(2), Value::new(b"own".to_vec()));
        let foreign = BroadcastPayload::new(ProcessId(3), Round(2), Value::new(b"other".to_vec()));
        for r in 2..15u64 {
            // Feed some legitimate traffic and track what was received.
            let inbound = rig.echo_from(1, &foreign, &[1, 2]);
            for pair in received_signers(&inbound) {
                seen.insert(pair);
            }
            adv.receive(Round(r), &inbound);

            for a in adv.collect_outbound(Round(r)) {
                for (signer, digest) in outbound_signers(&a.msg) {
                    assert!(
                        signer == me || seen.contains(&(signer, digest)),
                        "{name}: fabricated signature of {signer} on {digest:?}"
                    );
                }
            }
            adv.end_round(Round(r));
        }
    }
}

#[test]
fn withholder_strips_every_foreign_aggregate_entry() {
    let rig = Rig::new(7);
    let mut adv = rig.adversary(0, AdversaryKind::WithholdSignatures);
    let payload = BroadcastPayload::new(ProcessId(3), Round(2), Value::new(b"v".to_vec()));
    adv.receive(Round(2), &rig.echo_from(1, &payload, &[1, 2, 3, 4]));
    for r in 3..6u64 {
        for a in adv.collect_outbound(Round(r)) {
            match &a.msg.body {
                MessageBody::Echo { payload, sigs, .. } => {
                    // The embedded originator signature stays (the payload
                    // is unusable without it); the aggregate is own-only.
                    assert_eq!(payload.sender, ProcessId(3));
                    for (signer, _) in sigs.iter() {
                        assert_eq!(signer, ProcessId(0), "round {r}: foreign entry kept");
                    }
                }
                MessageBody::Hb { entries } => {
                    for e in entries {
                        assert_eq!(e.origin, ProcessId(0), "withholder never relays heartbeats");
                        for (signer, _) in e.sigs.iter() {
                            assert_eq!(signer, ProcessId(0));
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

#[test]
fn equivocator_shows_different_values_to_the_two_subsets() {
    let rig = Rig::new(4);
    let split = vec![ProcessId(1)];
    let mut adv = rig.adversary(
        0,
        AdversaryKind::Equivocate {
            split_a: split.clone(),
            suppress_forwarding: true,
        },
    );
    adv.start_broadcast(Round(2), Value::new(b"v".to_vec()));

    let out = adv.collect_outbound(Round(2));
    let mut digest_a = None;
    let mut digest_b = None;
    for a in &out {
        if let MessageBody::Broadcast { payload, .. } = &a.msg.body {
            if split.contains(&a.to) {
                digest_a = Some(payload.digest());
            } else {
                digest_b = Some(payload.digest());
            }
        }
    }
    let (da, db) = (digest_a.unwrap(), digest_b.unwrap());
    assert_ne!(da, db, "the two subsets hear different values");
}
