//! Replicated simulation study over two noise levels.
//!
//! cargo run --release --example benchmark -- [replicates] [size] [lambda]

use regionscad::metrics::run_benchmark;
use regionscad::synth::SynthConfig;
use regionscad::{PenaltyKind, SolverConfig};

fn main() -> regionscad::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let replicates = args.first().map_or(10, |a| a.parse().expect("replicates"));
    let size = args.get(1).map_or(32, |a| a.parse().expect("size"));
    let lambda = args.get(2).map_or(0.5, |a| a.parse().expect("lambda"));
    let solvers: Vec<SolverConfig> = PenaltyKind::ALL
        .iter()
        .map(|k| SolverConfig {
            lambda,
            ..SolverConfig::default()
        }
        .with_penalty(*k))
        .collect();

    println!("{:>5} {:<10} {:>8} {:>8} {:>8} {:>8}", "sigma", "method", "SR b0", "SR b1", "SR b2", "MSE");
    for sigma in [0.1, 1.0] {
        let synth = SynthConfig {
            rows: size,
            cols: size,
            sigma,
            ..SynthConfig::default()
        };
        let report = run_benchmark(&synth, &solvers, replicates)?;
        for m in &report.methods {
            let sr = &m.mean_selection_rate;
            println!(
                "{sigma:>5} {:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                m.method.name(),
                sr[0],
                sr[1],
                sr[2],
                m.mean_mse
            );
        }
    }
    Ok(())
}
