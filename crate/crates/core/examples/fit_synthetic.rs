//! Simulates the three-region benchmark and fits SCAD2TV to it.
//!
//! cargo run --example fit_synthetic -- [sigma] [lambda]

use regionscad::metrics::selection_rate;
use regionscad::solver::fit;
use regionscad::synth::{generate, SynthConfig};
use regionscad::SolverConfig;

fn main() -> regionscad::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let sigma = args.next().unwrap_or(0.1);
    let lambda = args.next().unwrap_or(0.5);

    let synth = SynthConfig {
        rows: 32,
        cols: 32,
        sigma,
        ..SynthConfig::default()
    };
    let (data, truth) = generate(&synth)?;
    let config = SolverConfig {
        lambda,
        ..SolverConfig::default()
    };
    let result = fit(&data, &config)?;

    println!(
        "{} subjects on {}, converged = {} after {} iterations",
        data.n(),
        data.shape(),
        result.converged,
        result.iterations
    );
    for (l, (t, e)) in truth.images().iter().zip(result.beta_sparse.images()).enumerate() {
        println!(
            "beta_{l}: selection rate {:.4}, {} true / {} estimated nonzero pixels",
            selection_rate(t, e)?,
            t.count_nonzero(),
            e.count_nonzero()
        );
    }
    // Coarse picture of the intercept estimate.
    let b0 = result.beta_sparse.image(0);
    for r in (0..b0.shape().rows()).step_by(2) {
        let line: String = (0..b0.shape().cols())
            .map(|c| if b0.get(r, c) != 0.0 { '#' } else { '.' })
            .collect();
        println!("{line}");
    }
    Ok(())
}
