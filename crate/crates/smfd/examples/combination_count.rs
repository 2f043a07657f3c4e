//! Exact combination counting for the degradation pipeline, with the
//! brute-force enumeration cross-check on a reduced configuration.

use num_bigint::BigUint;
use smfd::degrade::{combinations_per_layer, count_plans, count_plans_brute_force, CountConfig};

fn main() {
    let config = CountConfig::default();
    let per_layer = combinations_per_layer(&config);
    println!("per-layer blur combinations: {per_layer}");

    let mut power = BigUint::from(1u32);
    let mut total = BigUint::from(0u32);
    for layers in 1..=config.max_layers {
        power *= &per_layer;
        total += &power;
        println!("  {layers} layer(s): {power}");
    }
    println!("all blur combinations: {total}");
    println!(
        "with {} scale steps x {} noise steps: {}",
        config.scale_steps,
        config.noise_steps,
        count_plans(&config)
    );

    let reduced = CountConfig {
        kernel_choices: 2,
        direction_choices: 2,
        max_layers: 2,
        scale_steps: 3,
        noise_steps: 2,
    };
    let closed = count_plans(&reduced);
    let enumerated = count_plans_brute_force(&reduced);
    println!("reduced config: closed form {closed}, enumeration {enumerated}");
    assert_eq!(closed, enumerated);
}
