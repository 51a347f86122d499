//! How large must the window be? Starting from R = 1, grow R until no
//! instance fails across all repetitions, under the worst-case posture
//! where all f processes are Byzantine signature-withholders. Bigger
//! systems need smaller windows: diffusion has more paths.
//!
//! Run with: cargo run --release --example window_estimation

use rt_byzcast::experiments::{estimate_window, LossGrid};

fn main() {
    let reps = 20_000u64;
    println!("worst-case posture: all f = floor((n-1)/3) nodes withhold signatures");
    println!("smallest R with zero failures over {reps} repetitions:\n");
    println!("nodes   50% loss   90% loss");
    for nodes in [10usize, 50, 100, 200] {
        let w50 = estimate_window(nodes, LossGrid::Bernoulli { p_loss: 0.5 }, reps, 424242, 64);
        let w90 = estimate_window(
            nodes,
            LossGrid::Bernoulli { p_loss: 0.9 },
            reps,
            424242,
            128,
        );
        println!(
            "{nodes:5}   {:8}   {:8}",
            w50.map(|w| w.to_string()).unwrap_or_else(|| "-".into()),
            w90.map(|w| w.to_string()).unwrap_or_else(|| "-".into()),
        );
    }
    println!("\nthe latency bound is 3 R rounds, so these windows translate");
    println!("directly into the worst-case delivery deadline.");
}
