//! Over-provisioning plus self-crash detection: with n = 3f + rep + 1 the
//! quorum starts at 2f + 1 + rep and shrinks by one per crash the
//! time-stamp ledgers expose, never below 2f + 1. The system survives rep
//! simultaneous self-crashes.
//!
//! Run with: cargo run --example crash_detection

use rt_byzcast::net::LossModel;
use rt_byzcast::types::{ProcessId, Round, SystemParams};
use rt_byzcast::world::{ForceDeadScript, World, WorldConfig};

fn main() {
    // f = 1, rep = 2: n = 6, quorum walks 5 -> 4 -> 3.
    let params = SystemParams::new(6, 2, 5, 1).expect("valid parameters");
    println!(
        "n = {}, rep = {}, f = {}, initial quorum = {}",
        params.n(),
        params.rep(),
        params.f(),
        params.initial_quorum()
    );

    let mut cfg = WorldConfig::new(params, LossModel::lossless(), 17, 45);
    cfg.ledger_piggyback = true;
    cfg.force_dead.push(ForceDeadScript {
        id: ProcessId(5),
        round: Round(3),
    });
    cfg.force_dead.push(ForceDeadScript {
        id: ProcessId(4),
        round: Round(18),
    });
    let mut world = World::new(cfg);

    let mut last = params.initial_quorum();
    println!("\nround  quorum@p0  detected");
    while world.round().0 < 45 {
        world.step();
        let node = world.node(ProcessId(0)).unwrap();
        let q = node.live_quorum();
        if q != last {
            println!(
                "{:5}  {:9}  {:?}",
                world.round().0,
                q,
                node.detected().iter().map(|p| p.0).collect::<Vec<_>>()
            );
            last = q;
        }
    }

    println!("\ndeclarations (who, target, round):");
    for (who, target, round) in &world.truth().declarations {
        println!("  {who} declared {target} at {round}");
    }
    let survivors = world
        .correct_through_run()
        .iter()
        .map(|p| p.0)
        .collect::<Vec<_>>();
    println!("\nsurvivors despite two self-crashes: {survivors:?}");
    assert_eq!(world.node(ProcessId(0)).unwrap().live_quorum(), 3);
}
