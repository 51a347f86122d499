//! Monte-Carlo harness and analytic formulas: reliability of the
//! self-crash mechanism, system-shutdown probability, window-size
//! estimation, latency and bandwidth.
//!
//! Grids are embarrassingly parallel over repetitions; every repetition
//! draws from a seed derived from the master seed and its own coordinates,
//! so results are independent of scheduling and reruns are byte-identical.

pub mod kernel;

use std::io::{self, Write};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversary::AdversaryKind;
use crate::crypto::Backend;
use crate::net::LossModel;
use crate::types::{ParamError, ProcessId, Round, SystemParams, Value};
use crate::world::{AdversaryConfig, BroadcastScript, World, WorldConfig};
use kernel::{mix_seed, run_instance, Workspace};

/// Loss parameterization of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossGrid {
    Bernoulli { p_loss: f64 },
    GilbertElliot { alpha: f64, beta: f64 },
}

impl LossGrid {
    pub fn to_model(self) -> LossModel {
        match self {
            LossGrid::Bernoulli { p_loss } => LossModel::Bernoulli { p_loss },
            // Links start in the good state.
            LossGrid::GilbertElliot { alpha, beta } => LossModel::GilbertElliot {
                alpha,
                beta,
                start_bad: false,
            },
        }
    }

    fn csv_fields(&self) -> (String, String, String, String) {
        match self {
            LossGrid::Bernoulli { p_loss } => (
                "bernoulli".into(),
                format!("{p_loss}"),
                String::new(),
                String::new(),
            ),
            LossGrid::GilbertElliot { alpha, beta } => (
                "gilbert-elliot".into(),
                String::new(),
                format!("{alpha}"),
                format!("{beta}"),
            ),
        }
    }
}

// ---------------------------------------------------------------------
// Reliability
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReliabilityGrid {
    /// Correct-process counts |C|.
    pub correct: Vec<usize>,
    pub loss: Vec<LossGrid>,
    pub windows: Vec<u64>,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ReliabilityRow {
    pub correct: usize,
    pub loss: LossGrid,
    pub window: u64,
    pub reps: u64,
    /// Fraction of instances in which some correct process missed the full
    /// signature set within the window (and would thus crash itself).
    pub crash_fraction: f64,
}

/// Count failed instances for one cell, in parallel over repetitions.
pub fn crash_fraction(correct: usize, loss: LossGrid, window: u64, reps: u64, seed: u64) -> f64 {
    let model = loss.to_model();
    let cell = mix_seed(&[seed, correct as u64, window, loss_tag(&loss)]);
    let failures: u64 = (0..reps)
        .into_par_iter()
        .map_init(Workspace::new, |ws, rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cell, rep]));
            (!run_instance(correct, &model, window, &mut rng, ws)) as u64
        })
        .sum();
    failures as f64 / reps as f64
}

fn loss_tag(loss: &LossGrid) -> u64 {
    match loss {
        LossGrid::Bernoulli { p_loss } => p_loss.to_bits(),
        LossGrid::GilbertElliot { alpha, beta } => alpha.to_bits() ^ beta.to_bits().rotate_left(32),
    }
}

pub fn run_reliability(grid: &ReliabilityGrid) -> Vec<ReliabilityRow> {
    let mut rows = Vec::new();
    for &c in &grid.correct {
        for &loss in &grid.loss {
            for &window in &grid.windows {
                rows.push(ReliabilityRow {
                    correct: c,
                    loss,
                    window,
                    reps: grid.reps,
                    crash_fraction: crash_fraction(c, loss, window, grid.reps, grid.seed),
                });
            }
        }
    }
    rows
}

pub fn write_reliability_csv<W: Write>(rows: &[ReliabilityRow], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "correct,model,p_loss,alpha,beta,window,reps,crash_fraction"
    )?;
    for r in rows {
        let (model, p, a, b) = r.loss.csv_fields();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.correct, model, p, a, b, r.window, r.reps, r.crash_fraction
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// System-shutdown probability
// ---------------------------------------------------------------------

/// Probability that a system of `n = 3f + 1` processes shuts down when each
/// correct process independently crashes itself with probability `p_crash`:
/// one self-crash suffices, so `1 - (1 - p)^(2f + 1)`.
pub fn sys_shutdown_basic(p_crash: f64, f: usize) -> f64 {
    assert!((0.0..=1.0).contains(&p_crash));
    1.0 - (1.0 - p_crash).powi(2 * f as i32 + 1)
}

/// Over-provisioned variant for `n = 3f + 3`: the system survives one
/// self-crash, so it shuts down only when two or more of the `n - f`
/// non-Byzantine processes crash themselves.
pub fn sys_shutdown_overprovisioned(p_crash: f64, n: usize, f: usize) -> Result<f64, ParamError> {
    assert!((0.0..=1.0).contains(&p_crash));
    if n != 3 * f + 3 {
        return Err(ParamError::NotOverProvisioned { n, f });
    }
    let m = (n - f) as i32;
    let survive: f64 = (0..=1)
        .map(|k| binomial(m as u64, k as u64) * p_crash.powi(k) * (1.0 - p_crash).powi(m - k))
        .sum();
    Ok(1.0 - survive)
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[derive(Debug, Clone)]
pub struct ShutdownGrid {
    pub p_crash: Vec<f64>,
    pub f: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ShutdownRow {
    pub p_crash: f64,
    pub f: usize,
    pub basic: f64,
    pub overprovisioned: f64,
}

pub fn run_shutdown(grid: &ShutdownGrid) -> Vec<ShutdownRow> {
    let mut rows = Vec::new();
    for &p in &grid.p_crash {
        for &f in &grid.f {
            rows.push(ShutdownRow {
                p_crash: p,
                f,
                basic: sys_shutdown_basic(p, f),
                overprovisioned: sys_shutdown_overprovisioned(p, 3 * f + 3, f)
                    .expect("n = 3f + 3 by construction"),
            });
        }
    }
    rows
}

pub fn write_shutdown_csv<W: Write>(rows: &[ShutdownRow], mut w: W) -> io::Result<()> {
    writeln!(w, "p_crash,f,basic,overprovisioned")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.p_crash, r.f, r.basic, r.overprovisioned)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Window estimation
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct WindowGrid {
    /// Total system sizes; the worst case posture makes all `f` of them
    /// Byzantine signature-withholders, leaving `n - f` correct.
    pub nodes: Vec<usize>,
    pub loss: Vec<LossGrid>,
    pub reps: u64,
    pub seed: u64,
    pub max_window: u64,
}

#[derive(Debug, Clone)]
pub struct WindowRow {
    pub nodes: usize,
    pub loss: LossGrid,
    pub reps: u64,
    /// Smallest window with zero failures over all repetitions, or
    /// `None` if `max_window` was not enough.
    pub window: Option<u64>,
}

/// Linear search from `window = 1` upward for the smallest window at which
/// no instance fails. The zero-failure predicate is noisy, so no binary
/// search; repetitions for a given window stop at the first failure.
pub fn estimate_window(
    nodes: usize,
    loss: LossGrid,
    reps: u64,
    seed: u64,
    max_window: u64,
) -> Option<u64> {
    let f = (nodes - 1) / 3;
    let correct = nodes - f;
    let model = loss.to_model();
    for window in 1..=max_window {
        let cell = mix_seed(&[seed, nodes as u64, window, loss_tag(&loss)]);
        let all_ok = (0..reps)
            .into_par_iter()
            .map_init(Workspace::new, |ws, rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cell, rep]));
                run_instance(correct, &model, window, &mut rng, ws)
            })
            .all(|ok| ok);
        if all_ok {
            return Some(window);
        }
    }
    None
}

pub fn run_window(grid: &WindowGrid) -> Vec<WindowRow> {
    let mut rows = Vec::new();
    for &nodes in &grid.nodes {
        for &loss in &grid.loss {
            rows.push(WindowRow {
                nodes,
                loss,
                reps: grid.reps,
                window: estimate_window(nodes, loss, grid.reps, grid.seed, grid.max_window),
            });
        }
    }
    rows
}

pub fn write_window_csv<W: Write>(rows: &[WindowRow], mut w: W) -> io::Result<()> {
    writeln!(w, "nodes,model,p_loss,alpha,beta,reps,window")?;
    for r in rows {
        let (model, p, a, b) = r.loss.csv_fields();
        let window = r.window.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.nodes, model, p, a, b, r.reps, window
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LatencyGrid {
    pub nodes: Vec<usize>,
    pub loss: Vec<LossGrid>,
    /// Repetitions for the embedded window estimation.
    pub window_reps: u64,
    pub max_window: u64,
    pub seed: u64,
    pub backend: Backend,
    pub payload_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct LatencyRow {
    pub nodes: usize,
    pub loss: LossGrid,
    pub window: u64,
    /// Worst observed per-node per-round processing time.
    pub d_max: Duration,
    /// `3 * R * d_max`, the end-to-end bound the protocol guarantees.
    pub total: Duration,
}

/// Build the worst-case posture world: all `f` nodes Byzantine
/// signature-withholders, one broadcast at round 1 from the first correct
/// process.
fn posture_world(
    nodes: usize,
    loss: LossGrid,
    window: u64,
    seed: u64,
    backend: Backend,
    payload_bytes: usize,
    horizon: u64,
) -> World {
    let params = SystemParams::basic(nodes, window).expect("grid parameters are valid");
    let f = params.f();
    let mut cfg = WorldConfig::new(params, loss.to_model(), seed, horizon);
    cfg.backend = backend;
    cfg.retain_log = false;
    if f > 0 {
        cfg.adversary = Some(AdversaryConfig {
            kind: AdversaryKind::WithholdSignatures,
            targets: (0..f as u64).map(ProcessId).collect(),
        });
    }
    cfg.broadcasts.push(BroadcastScript {
        sender: ProcessId(f as u64),
        round: Round(1),
        value: Value::new(vec![0xab; payload_bytes]),
    });
    World::new(cfg)
}

pub fn run_latency(grid: &LatencyGrid) -> Vec<LatencyRow> {
    let mut rows = Vec::new();
    for &nodes in &grid.nodes {
        for &loss in &grid.loss {
            let window = estimate_window(nodes, loss, grid.window_reps, grid.seed, grid.max_window)
                .unwrap_or(grid.max_window);
            let horizon = 3 * window + 2;
            let mut world = posture_world(
                nodes,
                loss,
                window,
                mix_seed(&[grid.seed, nodes as u64, loss_tag(&loss)]),
                grid.backend,
                grid.payload_bytes,
                horizon,
            );
            world.run();
            let d_max = world.metrics().d_max;
            rows.push(LatencyRow {
                nodes,
                loss,
                window,
                d_max,
                total: d_max * (3 * window) as u32,
            });
        }
    }
    rows
}

pub fn write_latency_csv<W: Write>(rows: &[LatencyRow], mut w: W) -> io::Result<()> {
    writeln!(w, "nodes,model,p_loss,alpha,beta,window,d_max_us,total_ms")?;
    for r in rows {
        let (model, p, a, b) = r.loss.csv_fields();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{:.3}",
            r.nodes,
            model,
            p,
            a,
            b,
            r.window,
            r.d_max.as_micros(),
            r.total.as_secs_f64() * 1e3
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Bandwidth
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BandwidthGrid {
    pub nodes: Vec<usize>,
    pub loss: Vec<LossGrid>,
    /// Broadcast payload sizes in bits (the studies use 128 and 10^6).
    pub payload_bits: Vec<u64>,
    pub window: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BandwidthRow {
    pub nodes: usize,
    pub loss: LossGrid,
    pub payload_bits: u64,
    /// Peak over nodes and rounds of bits sent (resp. received) per node
    /// per round during the broadcast.
    pub peak_tx_bits: u64,
    pub peak_rx_bits: u64,
}

pub fn run_bandwidth(grid: &BandwidthGrid) -> Vec<BandwidthRow> {
    let mut rows = Vec::new();
    for &nodes in &grid.nodes {
        for &loss in &grid.loss {
            for &bits in &grid.payload_bits {
                // The measurement window covers the broadcast life cycle:
                // echo phase plus the full deliver-send window.
                let horizon = 3 * grid.window + 2;
                let mut world = posture_world(
                    nodes,
                    loss,
                    grid.window,
                    mix_seed(&[grid.seed, nodes as u64, bits, loss_tag(&loss)]),
                    Backend::Sim,
                    (bits as usize).div_ceil(8),
                    horizon,
                );
                world.run();
                rows.push(BandwidthRow {
                    nodes,
                    loss,
                    payload_bits: bits,
                    peak_tx_bits: world.metrics().peak_tx_bits_max(),
                    peak_rx_bits: world.metrics().peak_rx_bits_max(),
                });
            }
        }
    }
    rows
}

pub fn write_bandwidth_csv<W: Write>(rows: &[BandwidthRow], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "nodes,model,p_loss,alpha,beta,payload_bits,peak_tx_bits,peak_rx_bits"
    )?;
    for r in rows {
        let (model, p, a, b) = r.loss.csv_fields();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.nodes, model, p, a, b, r.payload_bits, r.peak_tx_bits, r.peak_rx_bits
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shutdown_basic_edge_values() {
        assert_eq!(sys_shutdown_basic(0.0, 1), 0.0);
        assert_eq!(sys_shutdown_basic(1.0, 1), 1.0);
        // Direct expansion of 1 - (1 - p)^3: 3p - 3p^2 + p^3.
        let p: f64 = 1e-6;
        let expected = 3.0 * p - 3.0 * p * p + p * p * p;
        assert!((sys_shutdown_basic(p, 1) - expected).abs() < 1e-15);
        assert!((sys_shutdown_basic(p, 1) - 2.999_997e-6).abs() < 1e-11);
    }

    #[test]
    fn shutdown_overprovisioned_hand_value() {
        // f = 1, n = 6, p = 0.5: 1 - (C(5,0) + C(5,1)) / 32 = 0.8125.
        let got = sys_shutdown_overprovisioned(0.5, 6, 1).unwrap();
        assert_eq!(got, 0.8125);
        assert_eq!(sys_shutdown_overprovisioned(0.0, 6, 1).unwrap(), 0.0);
        assert!(sys_shutdown_overprovisioned(0.5, 7, 1).is_err());
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 1), 5.0);
        assert_eq!(binomial(6, 3), 20.0);
    }

    #[test]
    fn lossless_cells_never_crash() {
        let frac = crash_fraction(8, LossGrid::Bernoulli { p_loss: 0.0 }, 2, 100, 7);
        assert_eq!(frac, 0.0);
    }

    #[test]
    fn heavy_loss_small_window_always_crashes() {
        // |C| = 5, p = 0.9, R = 5: near-certain failure.
        let frac = crash_fraction(5, LossGrid::Bernoulli { p_loss: 0.9 }, 5, 2_000, 3);
        assert!(frac > 0.95, "crash fraction {frac}");
    }

    #[test]
    fn zero_loss_window_estimate_is_two() {
        // One round out, one round back.
        let w = estimate_window(10, LossGrid::Bernoulli { p_loss: 0.0 }, 100, 1, 10);
        assert_eq!(w, Some(2));
    }

    #[test]
    fn crash_fraction_is_deterministic_in_the_seed() {
        let run = || crash_fraction(6, LossGrid::Bernoulli { p_loss: 0.7 }, 4, 2_000, 99);
        assert_eq!(run(), run());
    }
}
