//! Happy path: four processes on a lossless network, one broadcast,
//! everyone delivers well inside the 3R bound.
//!
//! Run with: cargo run --example basic_broadcast

use rt_byzcast::monitor;
use rt_byzcast::net::LossModel;
use rt_byzcast::types::{ProcessId, Round, SystemParams, Value};
use rt_byzcast::world::{BroadcastScript, World, WorldConfig};

fn main() {
    let params = SystemParams::basic(4, 5).expect("valid parameters");
    println!(
        "n = {}, f = {}, quorum = {}, window R = {}",
        params.n(),
        params.f(),
        params.initial_quorum(),
        params.window()
    );

    let mut cfg = WorldConfig::new(params, LossModel::lossless(), 7, 30);
    cfg.broadcasts.push(BroadcastScript {
        sender: ProcessId(0),
        round: Round(2),
        value: Value::new(b"hello, quorum".to_vec()),
    });

    let mut world = World::new(cfg);
    world.run();

    println!(
        "\ndeliveries (bound: origin 2 + 3R = {}):",
        2 + params.latency_bound()
    );
    for d in &world.truth().deliveries {
        println!(
            "  {} delivered {} at {} ({:?})",
            d.node,
            d.instance,
            d.round,
            String::from_utf8_lossy(d.value.as_slice())
        );
    }

    let violations = monitor::check_all(&world);
    println!("\nproperty monitors: {} violations", violations.len());
    assert!(violations.is_empty());
}
