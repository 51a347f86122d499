//! Dead-state revival: a process forced into the dead state keeps
//! listening, and once some value shows a full signature quorum and the
//! broadcast is older than two windows, it delivers, returns to the alive
//! state and re-diffuses the deliver message.
//!
//! Run with: cargo run --example revival

use rt_byzcast::event::Event;
use rt_byzcast::net::LossModel;
use rt_byzcast::protocol::LifeCycle;
use rt_byzcast::types::{ProcessId, Round, SystemParams, Value};
use rt_byzcast::world::{BroadcastScript, ForceDeadScript, World, WorldConfig};

fn main() {
    let params = SystemParams::basic(4, 5).expect("valid parameters");
    let window = params.window();

    let mut cfg = WorldConfig::new(params, LossModel::lossless(), 13, 40);
    cfg.force_dead.push(ForceDeadScript {
        id: ProcessId(3),
        round: Round(1),
    });
    cfg.broadcasts.push(BroadcastScript {
        sender: ProcessId(0),
        round: Round(3),
        value: Value::new(b"worth waking up for".to_vec()),
    });
    let mut world = World::new(cfg);
    world.run();

    println!("p3 forced dead at round 1; broadcast issued at round 3");
    println!(
        "revival needs quorum evidence and round - 2R > 3, i.e. round > {}",
        3 + 2 * window
    );
    println!();
    for rec in world.log().records() {
        match &rec.event {
            Event::ForcedDead => println!("{}  {} forced dead", rec.round, rec.node),
            Event::Revive { instance } => {
                println!(
                    "{}  {} revives on instance {}",
                    rec.round, rec.node, instance
                )
            }
            Event::Deliver { instance, .. } if rec.node == ProcessId(3) => {
                println!("{}  {} delivers {}", rec.round, rec.node, instance)
            }
            _ => {}
        }
    }
    assert_eq!(
        world.node(ProcessId(3)).unwrap().lifecycle(),
        LifeCycle::Alive
    );
    println!("\np3 is alive again and under the usual self-crash rules.");
}
