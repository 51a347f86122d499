//! Fast signature-diffusion kernel behind the reliability and window-size
//! studies.
//!
//! One instance models the measurement the reliability experiments make: a
//! correct process broadcasts, every correct process that knows the value
//! re-sends its aggregated signature set to everyone each round, links
//! omit independently (or per a Gilbert-Elliot chain), and after `R`
//! rounds the instance fails if any correct process is missing any of the
//! `|C|` correct signatures. Byzantine processes withhold signatures, so
//! they contribute nothing and only the correct-to-correct links matter.
//!
//! Signature sets are bitmasks; a cell of the experiment grid is fully
//! determined by `(seed, window, repetition)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::net::LossModel;

pub const MAX_CORRECT: usize = 256;
const WORDS: usize = MAX_CORRECT / 64;

/// Signature set over up to 256 process indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mask([u64; WORDS]);

impl Mask {
    pub fn empty() -> Mask {
        Mask([0; WORDS])
    }

    pub fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn union(&mut self, other: &Mask) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a |= b;
        }
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|w| *w == 0)
    }
}

/// SplitMix64-style seed derivation so grid cells and repetitions draw
/// from independent streams of one master seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        state ^= p
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(state << 6);
        state = state.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state ^= state >> 27;
        state = state.wrapping_mul(0x94d0_49bb_1331_11eb);
        state ^= state >> 31;
    }
    state
}

/// Reusable buffers for one worker thread.
pub struct Workspace {
    masks: Vec<Mask>,
    fresh: Vec<Mask>,
    ge_bad: Vec<bool>,
}

impl Workspace {
    pub fn new() -> Workspace {
        Workspace {
            masks: Vec::new(),
            fresh: Vec::new(),
            ge_bad: Vec::new(),
        }
    }
}

impl Default for Workspace {
    fn default() -> Self {
        Self::new()
    }
}

/// Run one instance: `correct` processes (index 0 broadcasts at round 1),
/// `window` rounds of diffusion. Returns `true` when every correct process
/// ends up holding all `correct` signatures.
pub fn run_instance(
    correct: usize,
    loss: &LossModel,
    window: u64,
    rng: &mut ChaCha8Rng,
    ws: &mut Workspace,
) -> bool {
    assert!((1..=MAX_CORRECT).contains(&correct));
    let c = correct;

    ws.masks.clear();
    ws.masks.resize(c, Mask::empty());
    ws.masks[0].set(0);

    let (ge, alpha, beta) = match *loss {
        LossModel::Bernoulli { .. } => (false, 0.0, 0.0),
        LossModel::GilbertElliot {
            alpha,
            beta,
            start_bad,
        } => {
            ws.ge_bad.clear();
            ws.ge_bad.resize(c * c, start_bad);
            (true, alpha, beta)
        }
    };
    let p_loss = match *loss {
        LossModel::Bernoulli { p_loss } => p_loss,
        LossModel::GilbertElliot { .. } => 0.0,
    };

    for _ in 0..window {
        if ge {
            // All chains advance at the beginning of the round.
            for state in ws.ge_bad.iter_mut() {
                let draw: f64 = rng.gen();
                *state = if *state { draw >= alpha } else { draw < beta };
            }
        }
        ws.fresh.clear();
        ws.fresh.extend_from_slice(&ws.masks);
        for i in 0..c {
            if ws.masks[i].is_empty() {
                continue;
            }
            for j in 0..c {
                if i == j {
                    continue;
                }
                let through = if ge {
                    !ws.ge_bad[i * c + j]
                } else if p_loss <= 0.0 {
                    true
                } else {
                    rng.gen::<f64>() >= p_loss
                };
                if through {
                    let mut m = ws.masks[i];
                    // Receiving the value means signing it.
                    m.set(j);
                    ws.fresh[j].union(&m);
                }
            }
        }
        std::mem::swap(&mut ws.masks, &mut ws.fresh);

        if !ge && ws.masks.iter().all(|m| m.count() == c) {
            // Sets only grow; success is already decided.
            return true;
        }
    }
    ws.masks.iter().all(|m| m.count() == c)
}
