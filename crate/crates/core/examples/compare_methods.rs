//! Fits SCAD2TV, TV-l1 and GraphNet to one dataset and compares support
//! recovery and in-sample error.
//!
//! cargo run --example compare_methods -- [sigma] [lambda]

use regionscad::metrics::{prediction_mse, selection_rate};
use regionscad::solver::{fit, predict};
use regionscad::synth::{generate, SynthConfig};
use regionscad::{PenaltyKind, SolverConfig};

fn main() -> regionscad::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let sigma = args.next().unwrap_or(0.1);
    let lambda = args.next().unwrap_or(0.5);
    let (data, truth) = generate(&SynthConfig {
        rows: 32,
        cols: 32,
        sigma,
        seed: 1,
        ..SynthConfig::default()
    })?;

    println!("{:<10} {:>8} {:>8} {:>8} {:>9} {:>6}", "method", "SR b0", "SR b1", "SR b2", "MSE", "iters");
    for kind in PenaltyKind::ALL {
        let config = SolverConfig {
            lambda,
            ..SolverConfig::default()
        }
        .with_penalty(kind);
        let r = fit(&data, &config)?;
        let sr = truth
            .images()
            .iter()
            .zip(r.beta_sparse.images())
            .map(|(t, e)| selection_rate(t, e))
            .collect::<regionscad::Result<Vec<_>>>()?;
        let mse = prediction_mse(&predict(&r.beta_sparse, data.covariates())?, data.responses())?;
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>9.5} {:>6}",
            kind.name(),
            sr[0],
            sr[1],
            sr[2],
            mse,
            r.iterations
        );
    }
    Ok(())
}
