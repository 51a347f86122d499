//! Per-directed-link omission processes: independent Bernoulli losses and
//! the two-state Gilbert-Elliot chain for correlated bursts.
//!
//! Every link owns an independent RNG sub-stream derived from the world
//! seed by a counter-based split (same seed, stream id keyed on the link's
//! endpoint pair), so adding a node never perturbs existing links' draws
//! and worlds are reproducible and parallelizable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::ProcessId;

/// Loss process parameters for one directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossModel {
    /// Every transmission lost independently with probability `p_loss`.
    Bernoulli { p_loss: f64 },
    /// Two-state chain: `beta` = P(good -> bad), `alpha` = P(bad -> good).
    /// Transmissions in the bad state are omitted. The chain transitions at
    /// the beginning of every round.
    GilbertElliot {
        alpha: f64,
        beta: f64,
        start_bad: bool,
    },
}

impl LossModel {
    pub fn lossless() -> LossModel {
        LossModel::Bernoulli { p_loss: 0.0 }
    }

    /// Long-run loss rate of the model.
    pub fn stationary_loss(&self) -> f64 {
        match *self {
            LossModel::Bernoulli { p_loss } => p_loss,
            LossModel::GilbertElliot { alpha, beta, .. } => ge_stationary_loss(alpha, beta),
        }
    }
}

/// Long-run fraction of bad rounds of a Gilbert-Elliot chain: `beta / (alpha + beta)`.
pub fn ge_stationary_loss(alpha: f64, beta: f64) -> f64 {
    beta / (alpha + beta)
}

/// Probability that a bad burst lasts exactly `len` rounds once started:
/// geometric with recovery probability `alpha`.
pub fn burst_length_pmf(alpha: f64, len: u64) -> f64 {
    assert!(len >= 1, "burst length starts at 1");
    alpha * (1.0 - alpha).powi(len as i32 - 1)
}

/// Positive-correlation (bursty) condition on GE parameters.
pub fn ge_is_bursty(alpha: f64, beta: f64) -> bool {
    (1.0 - beta) > alpha
}

/// RNG sub-stream id for the directed link `from -> to`.
fn link_stream(from: ProcessId, to: ProcessId) -> u64 {
    (from.0 << 32) | (to.0 & 0xffff_ffff)
}

/// RNG sub-stream id for node-local randomness (adversary noise, join
/// retry backoff). Kept disjoint from every link stream.
pub fn node_stream(id: ProcessId) -> u64 {
    (1u64 << 63) | id.0
}

pub fn node_rng(world_seed: u64, id: ProcessId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
    rng.set_stream(node_stream(id));
    rng
}

/// State of one directed link.
#[derive(Debug, Clone)]
pub struct Link {
    model: LossModel,
    bad: bool,
    rng: ChaCha8Rng,
}

impl Link {
    pub fn new(world_seed: u64, from: ProcessId, to: ProcessId, model: LossModel) -> Link {
        let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
        rng.set_stream(link_stream(from, to));
        let bad = matches!(
            model,
            LossModel::GilbertElliot {
                start_bad: true,
                ..
            }
        );
        Link { model, bad, rng }
    }

    /// Advance the chain state at the beginning of a round. No-op for
    /// Bernoulli links.
    pub fn begin_round(&mut self) {
        if let LossModel::GilbertElliot { alpha, beta, .. } = self.model {
            let draw: f64 = self.rng.gen();
            self.bad = if self.bad { draw >= alpha } else { draw < beta };
        }
    }

    pub fn is_bad(&self) -> bool {
        self.bad
    }

    /// Whether a message sent this round arrives. Call once per message.
    pub fn transmit(&mut self) -> bool {
        match self.model {
            LossModel::Bernoulli { p_loss } => {
                if p_loss <= 0.0 {
                    true
                } else if p_loss >= 1.0 {
                    false
                } else {
                    self.rng.gen::<f64>() >= p_loss
                }
            }
            LossModel::GilbertElliot { .. } => !self.bad,
        }
    }
}
