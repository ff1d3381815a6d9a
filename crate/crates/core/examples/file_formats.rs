//! Writes a dataset and a fit to disk, reads them back, and drives the
//! command line on the same files.
//!
//! cargo run --example file_formats -- [dir]

use std::path::PathBuf;

use regionscad::cli::cli_main;
use regionscad::io::{self, FitRecord};
use regionscad::solver::fit;
use regionscad::synth::{generate, SynthConfig};
use regionscad::SolverConfig;

fn main() -> regionscad::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("regionscad-demo"));
    let (data, truth) = generate(&SynthConfig {
        rows: 16,
        cols: 16,
        n: 20,
        sigma: 0.1,
        ..SynthConfig::default()
    })?;
    let data_dir = dir.join("data");
    io::write_dataset(&data, &data_dir)?;
    io::write_field(&data_dir.join(io::TRUTH_FILE), &truth)?;
    let back = io::read_dataset(&data_dir)?;
    println!("round trip exact: {}", back.responses() == data.responses() && back.covariates() == data.covariates());

    let tensor = io::read_tensor(&data_dir.join(io::RESPONSES_FILE))?;
    println!("responses.iosr dims {:?}, {} values", tensor.dims(), tensor.data().len());

    let config = SolverConfig {
        lambda: 0.5,
        ..SolverConfig::default()
    };
    let result = fit(&data, &config)?;
    let fit_dir = dir.join("fit");
    io::write_fit(&fit_dir, &result, &FitRecord::new(&result, &data, config, None))?;
    let record: FitRecord = io::read_json(&fit_dir.join(io::FIT_RECORD_FILE))?;
    println!("fit.json: {} iterations, converged = {}", record.iterations, record.converged);

    // The same fit through the command line, tiled.
    let out = dir.join("fit-cli");
    let code = cli_main([
        "regionscad",
        "fit",
        "--data",
        data_dir.to_str().unwrap(),
        "--lambda",
        "0.5",
        "--tile",
        "8x8",
        "--halo",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    println!("regionscad fit exited with {code}; outputs in {}", out.display());
    Ok(())
}
