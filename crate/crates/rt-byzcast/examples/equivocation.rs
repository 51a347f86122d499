//! A Byzantine sender signs two different values for the same broadcast
//! instance and shows each to half the system. Correct processes either
//! converge on a single value or discover the lie; agreement never breaks.
//!
//! Run with: cargo run --example equivocation

use rt_byzcast::adversary::AdversaryKind;
use rt_byzcast::monitor;
use rt_byzcast::net::LossModel;
use rt_byzcast::types::{InstanceKey, ProcessId, Round, SystemParams, Value};
use rt_byzcast::world::{AdversaryConfig, BroadcastScript, World, WorldConfig};

fn main() {
    let params = SystemParams::basic(4, 5).expect("valid parameters");
    let instance = InstanceKey {
        sender: ProcessId(0),
        origin_round: Round(2),
    };

    for split in [vec![ProcessId(1)], vec![ProcessId(1), ProcessId(2)]] {
        println!("split hearing value A: {split:?}");
        let mut cfg = WorldConfig::new(params, LossModel::lossless(), 3, 30);
        cfg.adversary = Some(AdversaryConfig {
            kind: AdversaryKind::Equivocate {
                split_a: split,
                suppress_forwarding: false,
            },
            targets: vec![ProcessId(0)],
        });
        cfg.broadcasts.push(BroadcastScript {
            sender: ProcessId(0),
            round: Round(2),
            value: Value::new(b"first story".to_vec()),
        });
        let mut world = World::new(cfg);
        world.run();

        for d in world
            .truth()
            .deliveries
            .iter()
            .filter(|d| d.instance == instance)
        {
            println!(
                "  {} delivered value digest #{} at {}",
                d.node,
                d.digest.short_hex(),
                d.round
            );
        }
        for id in world.honest_ids() {
            let node = world.node(id).unwrap();
            if let Some(inst) = node.instance(&instance) {
                if inst.lie.is_some() {
                    println!("  {} holds cryptographic lie evidence", id);
                }
            }
        }
        let violations = monitor::check_all(&world);
        println!("  monitors: {} violations\n", violations.len());
        assert!(violations.is_empty());
    }
}
