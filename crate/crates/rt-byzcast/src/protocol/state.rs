//! Per-node bookkeeping: the message store with its per-echoer cells and
//! flat per-value aggregates, the echo/deliver/heartbeat trackers, and the
//! sliding-window activity feeds behind the self-crash rules.

use std::collections::{BTreeMap, BTreeSet};

use crate::types::{BroadcastPayload, DigestKey, ProcessId, Round, SignatureBytes, SignatureSet};

/// Signature store for one broadcast instance.
///
/// `cells` mirrors the two-dimensional layout `Msg[originator][echoer]`:
/// which signers each echoer has shown us for each value. `flat` is the
/// union across the echoer dimension per value digest and is what quorum
/// counting and re-emission use. Both only grow.
#[derive(Debug, Clone, Default)]
pub struct MsgStore {
    cells: BTreeMap<ProcessId, BTreeMap<DigestKey, BTreeSet<ProcessId>>>,
    flat: BTreeMap<DigestKey, SignatureSet>,
}

impl MsgStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record verified signatures for `digest` as seen from `echoer`.
    /// Returns the updated flat aggregate size.
    pub fn record(&mut self, echoer: ProcessId, digest: DigestKey, sigs: &SignatureSet) -> usize {
        let cell = self
            .cells
            .entry(echoer)
            .or_default()
            .entry(digest)
            .or_default();
        cell.extend(sigs.signers());
        let flat = self.flat.entry(digest).or_default();
        flat.union(sigs);
        flat.len()
    }

    /// Add one verified signature to the flat aggregate (the node's own, or
    /// an embedded originator signature).
    pub fn record_one(
        &mut self,
        digest: DigestKey,
        signer: ProcessId,
        sig: SignatureBytes,
    ) -> usize {
        let flat = self.flat.entry(digest).or_default();
        flat.insert(signer, sig);
        flat.len()
    }

    /// Union across the echoer dimension for one value.
    pub fn aggregate(&self, digest: &DigestKey) -> Option<&SignatureSet> {
        self.flat.get(digest)
    }

    pub fn aggregate_len(&self, digest: &DigestKey) -> usize {
        self.flat.get(digest).map_or(0, |s| s.len())
    }

    pub fn cell(&self, echoer: ProcessId, digest: &DigestKey) -> Option<&BTreeSet<ProcessId>> {
        self.cells.get(&echoer).and_then(|m| m.get(digest))
    }

    pub fn digests(&self) -> impl Iterator<Item = &DigestKey> {
        self.flat.keys()
    }

    pub fn flat_sets(&self) -> impl Iterator<Item = (&DigestKey, &SignatureSet)> {
        self.flat.iter()
    }
}

/// Cryptographic evidence that the originator signed two different values
/// for the same instance. Exempts the holder from self-crash Case 1 only.
#[derive(Debug, Clone)]
pub struct LieEvidence {
    pub first: (BroadcastPayload, SignatureBytes),
    pub second: (BroadcastPayload, SignatureBytes),
}

/// Tracks the value this node echoes for one instance.
#[derive(Debug, Clone)]
pub struct EchoTracker {
    /// Digest of the echoed value (the first heard one).
    pub digest: DigestKey,
    /// Round the echo window opened; Case 1 fires a full window later.
    pub window_start: Round,
    /// Cleared when the instance is delivered ("stop sending any echo").
    pub active: bool,
}

/// Tracks a delivered instance and the deliver-attestation quorum.
#[derive(Debug, Clone)]
pub struct DeliverTracker {
    pub digest: DigestKey,
    pub payload: BroadcastPayload,
    pub deliver_round: Round,
    /// Distinct processes whose deliver attestations we verified, self
    /// included. Case 2 needs a quorum of these within a window.
    pub r_deliver: BTreeSet<ProcessId>,
    /// Verified attestation signatures over the deliver digest.
    pub deliver_sigs: SignatureSet,
    /// Echo-quorum proof frozen at delivery (may be below quorum when the
    /// instance was adopted from an attestation-only message).
    pub echo_proof: SignatureSet,
    /// Deliver messages are emitted for rounds `(deliver_round, send_until]`.
    pub send_until: Round,
}

/// Everything one node knows about one broadcast instance.
#[derive(Debug, Clone)]
pub struct InstanceState {
    /// Per-value payloads, keyed by digest, as first seen.
    pub payloads: BTreeMap<DigestKey, BroadcastPayload>,
    /// Verified originator signature per value.
    pub origin_sigs: BTreeMap<DigestKey, SignatureBytes>,
    pub store: MsgStore,
    /// The single value this node has committed its signature to.
    pub committed: Option<DigestKey>,
    /// Set when this node is the broadcast originator.
    pub broadcast_role: bool,
    pub echo: Option<EchoTracker>,
    pub deliver: Option<DeliverTracker>,
    pub lie: Option<LieEvidence>,
    /// Verified deliver attestations seen before this node delivered
    /// (notably while dead); they seed the deliver tracker.
    pub absorbed_attests: SignatureSet,
    /// The originator's signature does not count toward quorums (join
    /// broadcasts of a process joining the system).
    pub exclude_origin_from_quorum: bool,
}

impl InstanceState {
    pub fn new() -> Self {
        InstanceState {
            payloads: BTreeMap::new(),
            origin_sigs: BTreeMap::new(),
            store: MsgStore::new(),
            committed: None,
            broadcast_role: false,
            echo: None,
            deliver: None,
            lie: None,
            absorbed_attests: SignatureSet::new(),
            exclude_origin_from_quorum: false,
        }
    }

    pub fn delivered(&self) -> bool {
        self.deliver.is_some()
    }

    /// Effective signer count toward the quorum for `digest`.
    pub fn quorum_count(&self, origin: ProcessId, digest: &DigestKey) -> usize {
        let len = self.store.aggregate_len(digest);
        if self.exclude_origin_from_quorum
            && self
                .store
                .aggregate(digest)
                .is_some_and(|s| s.contains(origin))
        {
            len - 1
        } else {
            len
        }
    }

    /// Record a verified originator signature for a value and detect lies:
    /// two originator-signed payloads with the same instance key but
    /// different digests.
    pub fn note_origin_sig(&mut self, payload: &BroadcastPayload, sig: SignatureBytes) {
        let digest = payload.digest();
        self.payloads
            .entry(digest)
            .or_insert_with(|| payload.clone());
        self.origin_sigs.entry(digest).or_insert(sig);
        if self.lie.is_none() && self.origin_sigs.len() >= 2 {
            let mut it = self.origin_sigs.iter();
            let (d1, s1) = it.next().expect("len >= 2");
            let (d2, s2) = it.next().expect("len >= 2");
            self.lie = Some(LieEvidence {
                first: (self.payloads[d1].clone(), s1.clone()),
                second: (self.payloads[d2].clone(), s2.clone()),
            });
        }
    }
}

impl Default for InstanceState {
    fn default() -> Self {
        Self::new()
    }
}

/// Proof-of-life state. Heartbeat liveness is evaluated per epoch: the
/// epoch restarts whenever the node returns to standalone heartbeats after
/// a broadcast/deliver phase, and the check only applies once a full
/// window fits inside the epoch.
#[derive(Debug, Clone)]
pub struct HbState {
    /// Epoch start of the current standalone proof-of-life execution;
    /// `None` while heartbeats ride piggybacked on protocol messages.
    pub standalone_since: Option<Round>,
    /// Per own-heartbeat origin round: distinct processes whose signature
    /// came back on that heartbeat (directly or indirectly), self included.
    pub own_returns: BTreeMap<Round, BTreeSet<ProcessId>>,
    /// Latest tracked heartbeat per foreign origin, re-echoed while fresh.
    pub tracked: BTreeMap<ProcessId, TrackedHb>,
}

#[derive(Debug, Clone)]
pub struct TrackedHb {
    pub round: Round,
    pub sigs: SignatureSet,
    /// Last round this instance is re-echoed: origin round + window.
    pub expires: Round,
}

impl HbState {
    pub fn new(epoch: Round) -> Self {
        HbState {
            standalone_since: Some(epoch),
            own_returns: BTreeMap::new(),
            tracked: BTreeMap::new(),
        }
    }

    /// Distinct signers observed on own heartbeats originated in
    /// `[lo, hi]`, self included.
    pub fn returns_in(&self, me: ProcessId, lo: Round, hi: Round) -> usize {
        let mut signers: BTreeSet<ProcessId> = BTreeSet::new();
        signers.insert(me);
        for (_, set) in self.own_returns.range(lo..=hi) {
            signers.extend(set.iter().copied());
        }
        signers.len()
    }

    pub fn prune(&mut self, horizon: Round) {
        self.own_returns.retain(|r, _| *r >= horizon);
        self.tracked.retain(|_, t| t.expires >= horizon);
    }
}

/// Round-indexed sets with a sliding-window view, used for the
/// "heard from" (Case 3) and "own messages echoed" (Case 4) feeds.
#[derive(Debug, Clone, Default)]
pub struct RoundSets {
    by_round: BTreeMap<Round, BTreeSet<ProcessId>>,
}

impl RoundSets {
    pub fn note(&mut self, round: Round, id: ProcessId) {
        self.by_round.entry(round).or_default().insert(id);
    }

    pub fn note_all(&mut self, round: Round, ids: impl IntoIterator<Item = ProcessId>) {
        self.by_round.entry(round).or_default().extend(ids);
    }

    /// Distinct ids over `[lo, hi]`.
    pub fn distinct_in(&self, lo: Round, hi: Round) -> usize {
        let mut ids: BTreeSet<ProcessId> = BTreeSet::new();
        for (_, set) in self.by_round.range(lo..=hi) {
            ids.extend(set.iter().copied());
        }
        ids.len()
    }

    pub fn prune(&mut self, horizon: Round) {
        self.by_round.retain(|r, _| *r >= horizon);
    }
}
