//! System-shutdown probability. In a bare n = 3f + 1 system a single
//! correct self-crash can cascade into shutdown; with n = 3f + 3 the
//! system survives one. The two closed forms, tabulated.
//!
//! Run with: cargo run --example shutdown_probability

use rt_byzcast::experiments::{sys_shutdown_basic, sys_shutdown_overprovisioned};

fn main() {
    println!("f = 1 (n = 4 basic, n = 6 over-provisioned)\n");
    println!(
        "{:>10}  {:>14}  {:>16}",
        "p_crash", "basic", "over-provisioned"
    );
    for p in [1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.5] {
        println!(
            "{:>10e}  {:>14.6e}  {:>16.6e}",
            p,
            sys_shutdown_basic(p, 1),
            sys_shutdown_overprovisioned(p, 6, 1).unwrap()
        );
    }

    println!("\nhand check: f = 1, n = 6, p = 0.5 -> 1 - 6/32 = 0.8125");
    assert_eq!(sys_shutdown_overprovisioned(0.5, 6, 1).unwrap(), 0.8125);

    println!("\nthe over-provisioned design squares the exponent of the small-p");
    println!("behavior: one crash is survivable, so only pairs matter.");
}
