//! Timestep and curriculum corruption rates, including the reversed and
//! composed variants.
//!
//! cargo run --example curriculum_schedule

use astmask::schedule::Schedule;

fn main() {
    let linear = Schedule::linear(1000);
    let ramp = Schedule::cosine(0.05, 0.6, 10_000);
    let decay = Schedule {
        reverse: true,
        ..ramp.clone()
    };
    let composed = Schedule {
        compose: true,
        ..ramp.clone()
    };

    println!("{:>6} {:>8}", "t", "linear");
    for t in [1, 250, 500, 750, 1000] {
        println!("{t:>6} {:>8.4}", linear.epsilon_at_timestep(t).expect("valid t"));
    }
    println!();
    println!(
        "{:>6} {:>8} {:>8} {:>14}",
        "step", "ramp", "reverse", "ramp × t/T=0.5"
    );
    for step in (0..=10_000).step_by(1000) {
        println!(
            "{step:>6} {:>8.4} {:>8.4} {:>14.4}",
            ramp.epsilon(1, Some(step)).expect("valid step"),
            decay.epsilon(1, Some(step)).expect("valid step"),
            composed.epsilon(500, Some(step)).expect("valid step"),
        );
    }
}
