//! Run-level monitors for the five broadcast properties — validity,
//! no-duplication, integrity, agreement, timeliness — plus the structural
//! invariants (dead silence, signature monotonicity at quorum level).
//!
//! A process is correct with respect to a run when it is non-Byzantine and
//! never transitioned to the dead state during the run (self-crash, forced
//! crash or leave). Properties quantify over correct processes only; a
//! process that joined mid-run is exempt from instances broadcast before
//! its join round.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::types::{InstanceKey, ProcessId};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Property {
    Validity,
    NoDuplication,
    Integrity,
    Agreement,
    Timeliness,
    DeadSilence,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::Validity => "validity",
            Property::NoDuplication => "no_duplication",
            Property::Integrity => "integrity",
            Property::Agreement => "agreement",
            Property::Timeliness => "timeliness",
            Property::DeadSilence => "dead_silence",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub property: Property,
    pub node: Option<ProcessId>,
    pub instance: Option<InstanceKey>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.property)?;
        if let Some(n) = self.node {
            write!(f, " at {n}")?;
        }
        if let Some(i) = self.instance {
            write!(f, " instance {i}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Evaluate every monitor over a finished run.
pub fn check_all(world: &World) -> Vec<Violation> {
    let mut v = Vec::new();
    let truth = world.truth();
    let window = world.params().window();
    let bound = 3 * window;
    let horizon = world.round();

    let correct: BTreeSet<ProcessId> = world.correct_through_run().into_iter().collect();
    let joined = &truth.joined;
    let exempt = |node: ProcessId, instance: &InstanceKey| -> bool {
        matches!(joined.get(&node), Some(join_round) if instance.origin_round < *join_round)
    };

    // Index deliveries per (node, instance).
    let mut per_node: BTreeMap<(ProcessId, InstanceKey), Vec<&crate::world::DeliveryRecord>> =
        BTreeMap::new();
    for d in &truth.deliveries {
        per_node.entry((d.node, d.instance)).or_default().push(d);
    }

    // No-duplication: at most one delivery per instance per node, for every
    // non-Byzantine node (dead or alive).
    for ((node, instance), recs) in &per_node {
        if truth.byzantine.contains(node) {
            continue;
        }
        if recs.len() > 1 {
            v.push(Violation {
                property: Property::NoDuplication,
                node: Some(*node),
                instance: Some(*instance),
                detail: format!("{} deliver events", recs.len()),
            });
        }
    }

    for b in &truth.broadcasts {
        let sender_correct = correct.contains(&b.instance.sender) && !b.byzantine_sender;

        // Validity: a correct broadcaster implies some correct process
        // delivers, provided the horizon leaves room for the bound.
        if sender_correct && horizon.0 >= b.instance.origin_round.0 + bound {
            let delivered_somewhere = correct
                .iter()
                .any(|node| per_node.contains_key(&(*node, b.instance)));
            if !delivered_somewhere {
                v.push(Violation {
                    property: Property::Validity,
                    node: None,
                    instance: Some(b.instance),
                    detail: "no correct process delivered".into(),
                });
            }
        }

        // Integrity + Timeliness over correct deliverers.
        for node in &correct {
            let Some(recs) = per_node.get(&(*node, b.instance)) else {
                continue;
            };
            for rec in recs {
                if sender_correct && rec.value != b.value {
                    v.push(Violation {
                        property: Property::Integrity,
                        node: Some(*node),
                        instance: Some(b.instance),
                        detail: "delivered value was never broadcast by its correct sender".into(),
                    });
                }
                if sender_correct && rec.round.0 > b.instance.origin_round.0 + bound {
                    v.push(Violation {
                        property: Property::Timeliness,
                        node: Some(*node),
                        instance: Some(b.instance),
                        detail: format!(
                            "delivered at {} > origin {} + {bound}",
                            rec.round, b.instance.origin_round
                        ),
                    });
                }
            }
        }
    }

    // Integrity, second half: a correct process never delivers an
    // instance its (correct) sender never broadcast.
    let broadcast_instances: BTreeSet<InstanceKey> =
        truth.broadcasts.iter().map(|b| b.instance).collect();
    for d in &truth.deliveries {
        if correct.contains(&d.node)
            && correct.contains(&d.instance.sender)
            && !broadcast_instances.contains(&d.instance)
        {
            v.push(Violation {
                property: Property::Integrity,
                node: Some(d.node),
                instance: Some(d.instance),
                detail: "delivered an instance its correct sender never broadcast".into(),
            });
        }
    }

    // Agreement: if any correct process delivered an instance, every
    // correct process must deliver it (given a full bound of slack before
    // the horizon), and all correct deliveries must carry the same value.
    let mut instances: BTreeSet<InstanceKey> = BTreeSet::new();
    for d in &truth.deliveries {
        instances.insert(d.instance);
    }
    for instance in instances {
        let deliverers: Vec<ProcessId> = correct
            .iter()
            .copied()
            .filter(|n| per_node.contains_key(&(*n, instance)))
            .collect();
        if deliverers.is_empty() {
            continue;
        }
        let reference = per_node[&(deliverers[0], instance)][0];
        for node in &correct {
            if exempt(*node, &instance) {
                continue;
            }
            match per_node.get(&(*node, instance)) {
                None => {
                    let first_round = per_node[&(deliverers[0], instance)][0].round;
                    if horizon.0 >= first_round.0 + bound {
                        v.push(Violation {
                            property: Property::Agreement,
                            node: Some(*node),
                            instance: Some(instance),
                            detail: "correct process never delivered".into(),
                        });
                    }
                }
                Some(recs) => {
                    for rec in recs {
                        if rec.digest != reference.digest {
                            v.push(Violation {
                                property: Property::Agreement,
                                node: Some(*node),
                                instance: Some(instance),
                                detail: "correct processes delivered different values".into(),
                            });
                        }
                    }
                }
            }
        }
    }

    // Dead silence: no sends by a node after it went dead (until revival).
    v.extend(check_dead_silence(world));
    v
}

/// Scan the event log for sends while the sender was dead. The log is
/// chronological and, within a round, sends precede the round's life-cycle
/// transitions, so a state walk flags exactly the sends of dead rounds
/// even across repeated death/revival cycles.
fn check_dead_silence(world: &World) -> Vec<Violation> {
    use crate::event::Event;
    let mut dead: BTreeSet<ProcessId> = BTreeSet::new();
    let mut out = Vec::new();
    for rec in world.log().records() {
        match &rec.event {
            Event::SelfCrash { .. } | Event::ForcedDead | Event::LeaveDead => {
                dead.insert(rec.node);
            }
            Event::Revive { .. } | Event::JoinAlive => {
                dead.remove(&rec.node);
            }
            Event::Send { .. } if dead.contains(&rec.node) => {
                out.push(Violation {
                    property: Property::DeadSilence,
                    node: Some(rec.node),
                    instance: None,
                    detail: format!("send at {} while dead", rec.round),
                });
            }
            _ => {}
        }
    }
    out
}
