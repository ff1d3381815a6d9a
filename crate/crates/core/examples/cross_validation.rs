//! K-fold held-out prediction error of the three penalties.
//!
//! cargo run --example cross_validation -- [folds] [lambda]

use regionscad::metrics::run_cv;
use regionscad::synth::{generate, SynthConfig};
use regionscad::{PenaltyKind, SolverConfig};

fn main() -> regionscad::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let folds = args.first().map_or(5, |a| a.parse().expect("folds"));
    let lambda = args.get(1).map_or(0.5, |a| a.parse().expect("lambda"));
    let (data, _) = generate(&SynthConfig {
        rows: 24,
        cols: 24,
        n: 60,
        sigma: 0.5,
        ..SynthConfig::default()
    })?;
    let solvers: Vec<SolverConfig> = PenaltyKind::ALL
        .iter()
        .map(|k| SolverConfig {
            lambda,
            ..SolverConfig::default()
        }
        .with_penalty(*k))
        .collect();
    let report = run_cv(&data, &solvers, folds, 0)?;
    for m in &report.methods {
        let folds: Vec<String> = m.fold_mse.iter().map(|v| format!("{v:.4}")).collect();
        println!("{:<10} mean {:.4}  folds [{}]", m.method.name(), m.mean_mse, folds.join(", "));
    }
    Ok(())
}
