//! Tabulates the SCAD penalty and its proximal map next to soft thresholding.
//!
//! cargo run --example prox_curves -- [lambda] [rho] [weight]

use regionscad::penalty::{scad_prox, scad_value, soft_threshold, ScadParams};

fn main() -> regionscad::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let lambda = args.first().copied().unwrap_or(2.0);
    let rho = args.get(1).copied().unwrap_or(1.0);
    let weight = args.get(2).copied().unwrap_or(1.0);
    let params = ScadParams::new(lambda, 3.7)?;

    println!("{:>8} {:>10} {:>10} {:>10}", "z", "scad(z)", "prox(z)", "soft(z)");
    for k in -24..=24 {
        let z = k as f64 * 0.5;
        println!(
            "{z:>8.2} {:>10.4} {:>10.4} {:>10.4}",
            scad_value(z, params),
            scad_prox(z, rho, weight, params)?,
            soft_threshold(z, weight * lambda / rho)
        );
    }
    Ok(())
}
