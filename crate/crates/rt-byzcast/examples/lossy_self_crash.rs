//! The self-crash side of the protocol: under heavy loss a process that
//! cannot gather a quorum within its window kills itself instead of
//! violating timeliness. This sweeps the loss rate upward and shows
//! which rule fired.
//!
//! Run with: cargo run --example lossy_self_crash

use rt_byzcast::net::LossModel;
use rt_byzcast::types::{ProcessId, Round, SystemParams, Value};
use rt_byzcast::world::{BroadcastScript, World, WorldConfig};

fn main() {
    let params = SystemParams::basic(7, 5).expect("valid parameters");
    println!(
        "n = {}, f = {}, R = {}\n",
        params.n(),
        params.f(),
        params.window()
    );

    for p_loss in [0.0, 0.3, 0.6, 0.8, 0.95] {
        let mut crashes = 0usize;
        let mut deliveries = 0usize;
        let mut cases: Vec<String> = Vec::new();
        let runs = 40;
        for seed in 0..runs {
            let mut cfg = WorldConfig::new(params, LossModel::Bernoulli { p_loss }, seed, 30);
            cfg.retain_log = false;
            cfg.broadcasts.push(BroadcastScript {
                sender: ProcessId(0),
                round: Round(2),
                value: Value::new(b"under fire".to_vec()),
            });
            let mut world = World::new(cfg);
            world.run();
            crashes += world.truth().self_crashed.len();
            deliveries += world.truth().deliveries.len();
            for (_, case) in world.truth().self_crashed.values() {
                cases.push(case.to_string());
            }
        }
        cases.sort();
        cases.dedup();
        println!(
            "p_loss = {p_loss:4}: {deliveries:3} deliveries, {crashes:3} self-crashes over {runs} runs {}",
            if cases.is_empty() { String::new() } else { format!("(rules: {})", cases.join(", ")) }
        );
    }

    println!("\nhigher loss trades liveness for safety: crashed processes stay silent");
    println!("instead of delivering late, so the survivors' 3R bound holds.");
}
