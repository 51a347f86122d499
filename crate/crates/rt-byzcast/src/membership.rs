//! Membership machinery: the time-stamp ledger used to detect self-crashed
//! processes and shrink quorums, the trusted pool anchoring dynamic joins,
//! and the control payloads that join/leave broadcasts carry.

use std::collections::BTreeMap;

use crate::crypto::KeyRegistry;
use crate::types::{heartbeat_digest, LedgerEntry, ProcessId, Round, SignatureBytes, Value};

/// Last-seen round stamps, one per process, each backed by that process's
/// own signature over a heartbeat carrying the stamped round. Stamps only
/// increase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LastSeenLedger {
    stamps: BTreeMap<ProcessId, (Round, SignatureBytes)>,
}

impl LastSeenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a proven stamp; keeps the largest round per process.
    pub fn update(&mut self, id: ProcessId, round: Round, proof: SignatureBytes) {
        match self.stamps.get(&id) {
            Some((existing, _)) if *existing >= round => {}
            _ => {
                self.stamps.insert(id, (round, proof));
            }
        }
    }

    pub fn stamp(&self, id: ProcessId) -> Option<Round> {
        self.stamps.get(&id).map(|(r, _)| *r)
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    /// Pointwise max over entries whose proof verifies; invalid entries are
    /// dropped. `merge_entries` is the wire-side variant used for inbound
    /// piggybacked ledgers.
    pub fn merge_entries(&mut self, entries: &[LedgerEntry], registry: &KeyRegistry) {
        for e in entries {
            let digest = heartbeat_digest(e.id, e.round);
            if registry.verify(e.id, &digest, &e.sig) {
                self.update(e.id, e.round, e.sig.clone());
            }
        }
    }

    pub fn merge(&mut self, other: &LastSeenLedger, registry: &KeyRegistry) {
        for (id, (round, sig)) in &other.stamps {
            let digest = heartbeat_digest(*id, *round);
            if registry.verify(*id, &digest, sig) {
                self.update(*id, *round, sig.clone());
            }
        }
    }

    /// Wire form, pruned to stamps fresher than `horizon` to bound size.
    pub fn to_entries(&self, horizon: Round) -> Vec<LedgerEntry> {
        self.stamps
            .iter()
            .filter(|(_, (round, _))| *round >= horizon)
            .map(|(id, (round, sig))| LedgerEntry {
                id: *id,
                round: *round,
                sig: sig.clone(),
            })
            .collect()
    }
}

/// Decide which processes a node should newly declare crashed: `target` is
/// declared when at least `quorum` of the given ledgers (the node's own
/// merged view counts as one) stamp it strictly before `round - window`.
/// A missing stamp counts as stale.
pub fn detect_crashed(
    candidates: impl Iterator<Item = ProcessId>,
    ledgers: &[&LastSeenLedger],
    round: Round,
    window: u64,
    quorum: usize,
) -> Vec<ProcessId> {
    if round.0 <= window {
        return Vec::new();
    }
    let cutoff = Round(round.0 - window);
    let mut out = Vec::new();
    for target in candidates {
        let stale = ledgers
            .iter()
            .filter(|l| l.stamp(target).is_none_or(|s| s < cutoff))
            .count();
        if stale >= quorum {
            out.push(target);
        }
    }
    out
}

/// The statically known processes that anchor dynamic joins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustedPool {
    members: Vec<ProcessId>,
}

impl TrustedPool {
    pub fn new(mut members: Vec<ProcessId>) -> TrustedPool {
        members.sort_unstable();
        members.dedup();
        TrustedPool { members }
    }

    pub fn members(&self) -> &[ProcessId] {
        &self.members
    }

    pub fn contains(&self, id: ProcessId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Byzantine bound inside the pool: `floor((x - 1) / 3)`.
    pub fn byz_bound(&self) -> usize {
        (self.members.len() - 1) / 3
    }

    /// Signatures a pool member waits for before forwarding a join
    /// certificate.
    pub fn forward_threshold(&self) -> usize {
        self.byz_bound() + 1
    }

    /// Signatures the joiner needs to transition to the alive state.
    pub fn join_threshold(&self) -> usize {
        2 * self.byz_bound() + 1
    }
}

/// Control payloads carried as broadcast values by the membership flows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    Join { id: ProcessId, key: Vec<u8> },
    Leave { id: ProcessId, key: Vec<u8> },
}

const CONTROL_JOIN: u8 = 0x4a;
const CONTROL_LEAVE: u8 = 0x4c;

impl Control {
    pub fn encode(&self) -> Value {
        let (tag, id, key) = match self {
            Control::Join { id, key } => (CONTROL_JOIN, id, key),
            Control::Leave { id, key } => (CONTROL_LEAVE, id, key),
        };
        let mut bytes = Vec::with_capacity(13 + key.len());
        bytes.push(tag);
        bytes.extend_from_slice(&id.0.to_be_bytes());
        bytes.extend_from_slice(&(key.len() as u32).to_be_bytes());
        bytes.extend_from_slice(key);
        Value::new(bytes)
    }

    pub fn decode(value: &Value) -> Option<Control> {
        let b = value.as_slice();
        if b.len() < 13 {
            return None;
        }
        let id = ProcessId(u64::from_be_bytes(b[1..9].try_into().ok()?));
        let key_len = u32::from_be_bytes(b[9..13].try_into().ok()?) as usize;
        if b.len() != 13 + key_len {
            return None;
        }
        let key = b[13..].to_vec();
        match b[0] {
            CONTROL_JOIN => Some(Control::Join { id, key }),
            CONTROL_LEAVE => Some(Control::Leave { id, key }),
            _ => None,
        }
    }
}
