//! The per-process broadcast state machine: proof-of-life heartbeats,
//! broadcast/echo/deliver handling with signature aggregation over the
//! sliding window, the four self-crash rules, dead-state revival, and the
//! dynamic join/leave flows.

mod node;
mod state;

pub use node::{Node, NodeConfig, NodeEvent};
pub use state::{DeliverTracker, EchoTracker, HbState, InstanceState, LieEvidence, MsgStore};

use crate::types::{ProcessId, ProtocolMessage};

/// Life-cycle state of a non-Byzantine process. Dead nodes emit nothing
/// but keep processing inbound messages; Pending only arises while joining
/// a dynamic system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifeCycle {
    Alive,
    Dead,
    Pending,
}

impl std::fmt::Display for LifeCycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LifeCycle::Alive => "alive",
            LifeCycle::Dead => "dead",
            LifeCycle::Pending => "pending",
        })
    }
}

/// One outbound message with its destination.
#[derive(Debug, Clone)]
pub struct Addressed {
    pub to: ProcessId,
    pub msg: ProtocolMessage,
}
