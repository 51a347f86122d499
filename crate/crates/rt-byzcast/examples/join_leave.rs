//! Dynamic membership: a pending process collects enough trusted-pool
//! signatures to turn alive and announces itself with a join broadcast;
//! later a member leaves and every view shrinks.
//!
//! Run with: cargo run --example join_leave

use rt_byzcast::event::Event;
use rt_byzcast::net::LossModel;
use rt_byzcast::types::{ProcessId, Round, SystemParams};
use rt_byzcast::world::{JoinScript, LeaveScript, World, WorldConfig};

fn main() {
    let params = SystemParams::basic(4, 5).expect("valid parameters");
    println!("trusted pool: p0..p3 (x = 4, pool byzantine bound 1)");
    println!("join threshold: 2 * floor((x-1)/3) + 1 = 3 pool signatures\n");

    let mut cfg = WorldConfig::new(params, LossModel::lossless(), 29, 50);
    cfg.joins.push(JoinScript {
        id: ProcessId(4),
        round: Round(3),
    });
    cfg.leaves.push(LeaveScript {
        id: ProcessId(1),
        round: Round(20),
    });
    let mut world = World::new(cfg);
    world.run();

    for rec in world.log().records() {
        match &rec.event {
            Event::JoinAlive => println!("{}  {} turns alive (join)", rec.round, rec.node),
            Event::LeaveDead => println!(
                "{}  {} leaves after delivering its own leave",
                rec.round, rec.node
            ),
            Event::Deliver { instance, .. }
                if instance.sender == ProcessId(4) || instance.sender == ProcessId(1) =>
            {
                println!(
                    "{}  {} delivers membership broadcast {}",
                    rec.round, rec.node, instance
                )
            }
            _ => {}
        }
    }

    println!();
    for id in [0u64, 2, 3, 4] {
        let node = world.node(ProcessId(id)).unwrap();
        println!(
            "{}: n = {}, roster = {:?}",
            node.id(),
            node.n_view(),
            node.roster().iter().map(|p| p.0).collect::<Vec<_>>()
        );
    }
}
