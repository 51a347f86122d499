//! Deterministic per-world event log. Every observable — sends, receipts,
//! deliveries, life-cycle transitions, membership changes — is a row, and
//! all metrics are derived from these rows (or from the same counters when
//! a run keeps only aggregates).

use std::io::{self, Write};

use crate::types::{InstanceKey, MessageKind, ProcessId, Round};

/// Why a node crashed itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashCase {
    /// Proof-of-life rule: too few signers on own heartbeats in the window.
    HbRule,
    /// Case 1: echo quorum not met a full window after echoing started.
    EchoQuorum,
    /// Case 2: deliver quorum not met a full window after delivering.
    DeliverQuorum,
    /// Case 3: heard from too few distinct processes in the trailing window.
    Silence,
    /// Case 4: own messages not echoed by enough processes in the window.
    NotEchoed,
}

impl std::fmt::Display for CrashCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CrashCase::HbRule => "hb_rule",
            CrashCase::EchoQuorum => "case1_echo_quorum",
            CrashCase::DeliverQuorum => "case2_deliver_quorum",
            CrashCase::Silence => "case3_silence",
            CrashCase::NotEchoed => "case4_not_echoed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Send {
        to: ProcessId,
        kind: MessageKind,
        instance: Option<InstanceKey>,
        signers: usize,
        bytes: usize,
    },
    Recv {
        from: ProcessId,
        kind: MessageKind,
        instance: Option<InstanceKey>,
        signers: usize,
        bytes: usize,
    },
    Dropped {
        to: ProcessId,
        kind: MessageKind,
        bytes: usize,
    },
    Broadcast {
        instance: InstanceKey,
    },
    Deliver {
        instance: InstanceKey,
        value_digest: String,
    },
    SelfCrash {
        case: CrashCase,
    },
    ForcedDead,
    Revive {
        instance: InstanceKey,
    },
    JoinAlive,
    LeaveDead,
    DeclareCrashed {
        target: ProcessId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub round: Round,
    pub node: ProcessId,
    pub event: Event,
}

#[derive(Debug, Default, Clone)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, round: Round, node: ProcessId, event: Event) {
        self.records.push(EventRecord { round, node, event });
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// CSV columns: round,node,event,kind,peer,origin,origin_round,signers,bytes,detail
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "round,node,event,kind,peer,origin,origin_round,signers,bytes,detail"
        )?;
        for rec in &self.records {
            let (event, kind, peer, instance, signers, bytes, detail) = match &rec.event {
                Event::Send {
                    to,
                    kind,
                    instance,
                    signers,
                    bytes,
                } => (
                    "send",
                    Some(*kind),
                    Some(*to),
                    *instance,
                    *signers,
                    *bytes,
                    String::new(),
                ),
                Event::Recv {
                    from,
                    kind,
                    instance,
                    signers,
                    bytes,
                } => (
                    "recv",
                    Some(*kind),
                    Some(*from),
                    *instance,
                    *signers,
                    *bytes,
                    String::new(),
                ),
                Event::Dropped { to, kind, bytes } => (
                    "dropped",
                    Some(*kind),
                    Some(*to),
                    None,
                    0,
                    *bytes,
                    String::new(),
                ),
                Event::Broadcast { instance } => (
                    "broadcast",
                    None,
                    None,
                    Some(*instance),
                    0,
                    0,
                    String::new(),
                ),
                Event::Deliver {
                    instance,
                    value_digest,
                } => (
                    "deliver",
                    None,
                    None,
                    Some(*instance),
                    0,
                    0,
                    value_digest.clone(),
                ),
                Event::SelfCrash { case } => {
                    ("self_crash", None, None, None, 0, 0, case.to_string())
                }
                Event::ForcedDead => ("forced_dead", None, None, None, 0, 0, String::new()),
                Event::Revive { instance } => {
                    ("revive", None, None, Some(*instance), 0, 0, String::new())
                }
                Event::JoinAlive => ("join_alive", None, None, None, 0, 0, String::new()),
                Event::LeaveDead => ("leave_dead", None, None, None, 0, 0, String::new()),
                Event::DeclareCrashed { target } => (
                    "declare_crashed",
                    None,
                    Some(*target),
                    None,
                    0,
                    0,
                    String::new(),
                ),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                rec.round.0,
                rec.node.0,
                event,
                kind.map(|k| k.to_string()).unwrap_or_default(),
                peer.map(|p| p.0.to_string()).unwrap_or_default(),
                instance.map(|i| i.sender.0.to_string()).unwrap_or_default(),
                instance
                    .map(|i| i.origin_round.0.to_string())
                    .unwrap_or_default(),
                signers,
                bytes,
                detail,
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}
