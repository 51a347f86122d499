//! Correlated loss channels: simulate Gilbert-Elliot links and compare the
//! empirical stationary loss and burst-length distribution against the
//! analytic values beta / (alpha + beta) and alpha (1 - alpha)^(L - 1).
//!
//! Run with: cargo run --example gilbert_elliott

use rt_byzcast::net::{burst_length_pmf, ge_is_bursty, ge_stationary_loss, Link, LossModel};
use rt_byzcast::types::ProcessId;

fn main() {
    let rounds = 1_000_000u64;
    for (alpha, beta) in [(0.3f64, 0.4f64), (0.5, 0.01), (0.1, 0.7)] {
        let model = LossModel::GilbertElliot {
            alpha,
            beta,
            start_bad: false,
        };
        let mut link = Link::new(99, ProcessId(0), ProcessId(1), model);

        let mut bad = 0u64;
        let mut bursts: Vec<u64> = Vec::new();
        let mut current = 0u64;
        for _ in 0..rounds {
            link.begin_round();
            if link.is_bad() {
                bad += 1;
                current += 1;
            } else if current > 0 {
                bursts.push(current);
                current = 0;
            }
        }

        println!(
            "alpha = {alpha}, beta = {beta}  (bursty condition (1-beta) > alpha: {})",
            ge_is_bursty(alpha, beta)
        );
        println!(
            "  stationary loss: empirical {:.5} vs analytic {:.5}",
            bad as f64 / rounds as f64,
            ge_stationary_loss(alpha, beta)
        );
        println!("  burst length   empirical  analytic");
        let total = bursts.len() as f64;
        for len in 1..=5u64 {
            let observed = bursts.iter().filter(|b| **b == len).count() as f64 / total;
            println!(
                "  L = {len}          {observed:.4}     {:.4}",
                burst_length_pmf(alpha, len)
            );
        }
        println!();
    }
}
