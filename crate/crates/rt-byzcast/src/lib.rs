//! Real-time Byzantine reliable broadcast over lossy synchronous rounds,
//! with a deterministic network simulator and a Monte-Carlo experiment
//! harness.
//!
//! The protocol diffuses signed messages and aggregates the observed
//! signatures over a sliding window of `R` rounds. A process that cannot
//! reach a Byzantine quorum of `2f + 1` signers inside its window crashes
//! itself, which is what turns unbounded omission uncertainty into a hard
//! `3R`-round delivery bound for the processes that stay alive. Dead
//! processes keep listening and can revive on quorum evidence; dynamic
//! membership runs through a trusted pool.
//!
//! # Crate layout
//!
//! - [`types`]: identities, rounds, payloads, signature sets, the message
//!   envelope and the canonical digest encodings.
//! - [`crypto`]: the signature backends (`sim` keyed-hash and
//!   `ecdsa-p256`) behind one registry interface.
//! - [`protocol`]: the per-process state machine — proof-of-life, echo and
//!   deliver handling, the four self-crash rules, revival.
//! - [`membership`]: last-seen ledgers, crash detection with quorum
//!   shrinking, the trusted pool and join/leave control payloads.
//! - [`net`]: Bernoulli and Gilbert-Elliot link models on independent RNG
//!   sub-streams.
//! - [`world`]: the synchronous-round simulator tying it all together.
//! - [`monitor`]: run-level checks of the five broadcast properties.
//! - [`experiments`]: reliability, window-size, shutdown-probability,
//!   latency and bandwidth studies, each emitting a plot-ready CSV.
//! - [`config`]: TOML scenario and experiment grid descriptions.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --example basic_broadcast      # happy-path delivery, n = 4
//! cargo run --example lossy_self_crash     # heavy loss and self-crash rules
//! cargo run --example equivocation         # Byzantine sender, agreement preserved
//! cargo run --example revival              # dead node rejoins on quorum evidence
//! cargo run --example join_leave           # trusted-pool join and a leave broadcast
//! cargo run --example crash_detection      # ledger-based crash declarations
//! cargo run --example gilbert_elliott      # burst-loss channel statistics
//! cargo run --example reliability_grid     # Monte-Carlo self-crash probabilities
//! cargo run --example window_estimation    # smallest safe window per system size
//! cargo run --example shutdown_probability # analytic system-shutdown formulas
//! cargo run --example bandwidth            # peak per-node traffic accounting
//! cargo run --example latency              # 3*R*d_max end-to-end bound
//! ```
//!
//! The `rt-byzcast` binary drives the same library from scenario and
//! experiment files: `rt-byzcast run scenario.toml` and
//! `rt-byzcast experiment grid.toml --out results/`.

pub mod adversary;
pub mod config;
pub mod crypto;
pub mod event;
pub mod experiments;
pub mod membership;
pub mod monitor;
pub mod net;
pub mod protocol;
pub mod types;
pub mod world;

pub use types::{
    BroadcastPayload, DigestKey, InstanceKey, ProcessId, ProtocolMessage, Round, SignatureSet,
    SystemParams, Value,
};
