//! Fits a 48x48 problem whole and in overlapping tiles, for several halos.
//!
//! cargo run --example tiled_fit -- [tile] [workers]

use std::time::Instant;

use regionscad::dnc::{fit_tiled_with_workers, make_tiling};
use regionscad::metrics::prediction_mse;
use regionscad::solver::{fit, predict};
use regionscad::synth::{generate, SynthConfig};
use regionscad::SolverConfig;

fn main() -> regionscad::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let tile = args.next().unwrap_or(16);
    let workers = args.next().unwrap_or(4);
    let (data, _) = generate(&SynthConfig {
        rows: 48,
        cols: 48,
        sigma: 0.1,
        ..SynthConfig::default()
    })?;
    let config = SolverConfig {
        lambda: 0.5,
        ..SolverConfig::default()
    };
    let mse = |f: &regionscad::CoefficientField| -> regionscad::Result<f64> {
        prediction_mse(&predict(f, data.covariates())?, data.responses())
    };

    let t = Instant::now();
    let batch = fit(&data, &config)?;
    println!("batch: MSE {:.5}, {:.2} s", mse(&batch.beta_sparse)?, t.elapsed().as_secs_f64());
    let reference = batch.beta_sparse.to_vec();

    for halo in [1, 2, 4] {
        let tiling = make_tiling(data.shape(), (tile, tile), halo)?;
        let t = Instant::now();
        let r = fit_tiled_with_workers(&data, &config, &tiling, workers)?;
        let differ = r
            .beta_sparse
            .to_vec()
            .iter()
            .zip(&reference)
            .filter(|(a, b)| (*a - *b).abs() > 1e-3)
            .count();
        println!(
            "{} tiles, halo {halo}: MSE {:.5}, {differ} entries differ from batch, {:.2} s",
            tiling.tiles.len(),
            mse(&r.beta_sparse)?,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
