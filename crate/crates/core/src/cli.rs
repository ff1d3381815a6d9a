//! The `regionscad` command line.
//!
//! Settings are resolved from built-in defaults, then an optional TOML run
//! configuration (`--config`), then command-line flags. The resolved
//! configuration is echoed to stderr as TOML before any work starts.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dnc::{fit_tiled, make_tiling};
use crate::error::{Error, Result};
use crate::io::{self, FitRecord, RunConfigFile, TilingConfig};
use crate::metrics::{prediction_mse, roi_ttest, run_benchmark, run_cv, selection_rate};
use crate::solver::{fit, predict};
use crate::synth::generate;
use crate::types::{CoefficientField, Image, PenaltyKind, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad value)
  3  unreadable, unwritable or malformed file
  4  invalid input (shapes, parameters)
  5  numerical failure (divergence, factorization)";

#[derive(Debug, Parser)]
#[command(name = "regionscad", version, about = "Image-on-scalar regression with region-selecting penalties", after_help = EXIT_CODES)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for tiles, replicates and folds.
    #[arg(long, global = true, env = "REGIONSCAD_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it with its true coefficients.
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Fit one penalty to a dataset directory.
    Fit {
        /// Dataset directory with covariates.csv and responses.iosr.
        #[arg(long)]
        data: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// scad2tv, tvl1 or graphnet [default: scad2tv].
        #[arg(long)]
        method: Option<PenaltyKind>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Core tile size, e.g. 16x16; fits the whole grid when absent.
        #[arg(long, value_parser = parse_tile)]
        tile: Option<(usize, usize)>,
        /// Halo width around each tile core.
        #[arg(long)]
        halo: Option<usize>,
    },
    /// Predict response images from coefficients and covariates.
    Predict {
        /// Coefficient tensor (p x rows x cols).
        #[arg(long)]
        beta: PathBuf,
        /// Headerless covariate CSV.
        #[arg(long)]
        covariates: PathBuf,
        /// Output tensor (n x rows x cols).
        #[arg(long)]
        out: PathBuf,
    },
    /// Selection rates, prediction error and an optional ROI t-test.
    Evaluate {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// True coefficient tensor; enables selection rates.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Precomputed predictions; otherwise predicted from the sparse estimate.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Run Welch t-tests inside the region selected by `--roi-coef`.
        #[arg(long)]
        roi_test: bool,
        /// Coefficient whose nonzero pixels form the region.
        #[arg(long, default_value_t = 1)]
        roi_coef: usize,
        /// Two-valued covariate column that splits subjects into groups.
        #[arg(long, default_value_t = 1)]
        group_covariate: usize,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// JSON report path; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Replicated simulation comparing the configured methods.
    Benchmark {
        #[arg(long)]
        replicates: Option<usize>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<PenaltyKind>>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// JSON report path; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// K-fold cross-validated prediction error of the configured methods.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        /// Seed of the fold assignment.
        #[arg(long, default_value_t = 0)]
        fold_seed: u64,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<PenaltyKind>>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Number of subjects.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    field_variance: Option<f64>,
    #[arg(long)]
    field_length_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Penalty level [default: 5].
    #[arg(long)]
    lambda: Option<f64>,
    /// Gradient weight in [0, 1] [default: 0.5].
    #[arg(long)]
    gamma: Option<f64>,
    /// ADMM penalty parameter [default: 1].
    #[arg(long)]
    rho: Option<f64>,
    /// SCAD shape parameter [default: 3.7].
    #[arg(long)]
    a: Option<f64>,
    /// Absolute stopping tolerance [default: 1e-4].
    #[arg(long)]
    eps_abs: Option<f64>,
    /// Relative stopping tolerance [default: 1e-3].
    #[arg(long)]
    eps_rel: Option<f64>,
    /// Iteration cap [default: 2000].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Seed of the beta initialization.
    #[arg(long)]
    solver_seed: Option<u64>,
}

fn parse_tile(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let r = r.trim().parse().map_err(|_| format!("bad tile rows in {s:?}"))?;
    let c = c.trim().parse().map_err(|_| format!("bad tile cols in {s:?}"))?;
    Ok((r, c))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SynthArgs {
    fn apply(self, cfg: &mut RunConfigFile) {
        let s = &mut cfg.synth;
        set(&mut s.rows, self.rows);
        set(&mut s.cols, self.cols);
        set(&mut s.n, self.n);
        set(&mut s.sigma, self.sigma);
        if self.field_variance.is_some() {
            s.field_variance = self.field_variance;
        }
        set(&mut s.field_length_scale, self.field_length_scale);
        set(&mut s.seed, self.seed);
    }
}

impl SolverArgs {
    fn apply(self, cfg: &mut RunConfigFile) {
        let s = &mut cfg.solver;
        set(&mut s.lambda, self.lambda);
        set(&mut s.gamma, self.gamma);
        set(&mut s.rho, self.rho);
        set(&mut s.a, self.a);
        set(&mut s.eps_abs, self.eps_abs);
        set(&mut s.eps_rel, self.eps_rel);
        set(&mut s.max_iter, self.max_iter);
        set(&mut s.seed, self.solver_seed);
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        Error::InvalidShape { .. }
        | Error::LengthMismatch { .. }
        | Error::ShapeMismatch(_)
        | Error::NonFinite { .. }
        | Error::InvalidParameter { .. } => EXIT_INPUT,
        Error::Factorization(_) | Error::Diverged { .. } | Error::Internal(_) => EXIT_NUMERICAL,
        Error::Tile { source, .. } => exit_code(source),
    }
}

/// Runs the command line on `argv` (program name first) and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfigFile::read(path)?,
        None => RunConfigFile::default(),
    };
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    let command = resolve(cli.command, &mut cfg)?;
    eprintln!("# resolved configuration\n{}", cfg.to_toml()?);
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(|| execute(command, &cfg)),
        None => execute(command, &cfg),
    }
}

/// The command with its configuration folded into `cfg`.
enum Resolved {
    Simulate,
    Fit { data: PathBuf },
    Predict { beta: PathBuf, covariates: PathBuf, out: PathBuf },
    Evaluate(EvaluateArgs),
    Benchmark,
    Cv { data: PathBuf, fold_seed: u64 },
}

struct EvaluateArgs {
    data: PathBuf,
    fit: PathBuf,
    truth: Option<PathBuf>,
    predictions: Option<PathBuf>,
    roi: Option<(usize, usize, f64)>,
    report: Option<PathBuf>,
}

fn resolve(command: Command, cfg: &mut RunConfigFile) -> Result<Resolved> {
    Ok(match command {
        Command::Simulate { out, synth } => {
            synth.apply(cfg);
            set_dir(cfg, out)?;
            Resolved::Simulate
        }
        Command::Fit {
            data,
            out,
            method,
            solver,
            tile,
            halo,
        } => {
            solver.apply(cfg);
            set(&mut cfg.solver.penalty, method);
            if let Some((tile_rows, tile_cols)) = tile {
                cfg.tiling = Some(TilingConfig {
                    tile_rows,
                    tile_cols,
                    halo: cfg.tiling.map_or(1, |t| t.halo),
                });
            }
            if let Some(h) = halo {
                match cfg.tiling.as_mut() {
                    Some(t) => t.halo = h,
                    None => return Err(Error::invalid("halo", "given without a tile size")),
                }
            }
            set_dir(cfg, out)?;
            Resolved::Fit { data }
        }
        Command::Predict { beta, covariates, out } => Resolved::Predict { beta, covariates, out },
        Command::Evaluate {
            data,
            fit,
            truth,
            predictions,
            roi_test,
            roi_coef,
            group_covariate,
            level,
            report,
        } => Resolved::Evaluate(EvaluateArgs {
            data,
            fit,
            truth,
            predictions,
            roi: roi_test.then_some((roi_coef, group_covariate, level)),
            report: report.or_else(|| cfg.output.report.clone()),
        }),
        Command::Benchmark {
            replicates,
            methods,
            synth,
            solver,
            report,
        } => {
            synth.apply(cfg);
            solver.apply(cfg);
            set(&mut cfg.replicates, replicates);
            set(&mut cfg.methods, methods);
            if report.is_some() {
                cfg.output.report = report;
            }
            Resolved::Benchmark
        }
        Command::Cv {
            data,
            folds,
            fold_seed,
            methods,
            solver,
            report,
        } => {
            solver.apply(cfg);
            set(&mut cfg.folds, folds);
            set(&mut cfg.methods, methods);
            if report.is_some() {
                cfg.output.report = report;
            }
            Resolved::Cv { data, fold_seed }
        }
    })
}

fn set_dir(cfg: &mut RunConfigFile, out: Option<PathBuf>) -> Result<()> {
    if out.is_some() {
        cfg.output.dir = out;
    }
    if cfg.output.dir.is_none() {
        return Err(Error::invalid("out", "no output directory (use --out or [output] dir)"));
    }
    Ok(())
}

fn solvers(cfg: &RunConfigFile) -> Result<Vec<SolverConfig>> {
    if cfg.methods.is_empty() {
        return Err(Error::invalid("methods", "empty method list"));
    }
    Ok(cfg.methods.iter().map(|m| cfg.solver.with_penalty(*m)).collect())
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => io::write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn execute(command: Resolved, cfg: &RunConfigFile) -> Result<()> {
    match command {
        Resolved::Simulate => {
            let dir = cfg.output.dir.as_deref().expect("resolved");
            let (dataset, truth) = generate(&cfg.synth)?;
            io::write_dataset(&dataset, dir)?;
            io::write_field(&dir.join(io::TRUTH_FILE), &truth)
        }
        Resolved::Fit { data } => {
            let dir = cfg.output.dir.as_deref().expect("resolved");
            let dataset = io::read_dataset(&data)?;
            let result = match cfg.tiling {
                Some(t) => fit_tiled(&dataset, &cfg.solver, &make_tiling(dataset.shape(), (t.tile_rows, t.tile_cols), t.halo)?)?,
                None => fit(&dataset, &cfg.solver)?,
            };
            if result.ridge > 0.0 {
                eprintln!("warning: normal matrix was singular; added a ridge of {:e}", result.ridge);
            }
            if !result.converged {
                eprintln!("warning: stopped at max_iter = {} before converging", cfg.solver.max_iter);
            }
            let record = FitRecord::new(&result, &dataset, cfg.solver, cfg.tiling);
            io::write_fit(dir, &result, &record)
        }
        Resolved::Predict { beta, covariates, out } => {
            let field = io::read_field(&beta)?;
            let covariates = io::read_covariates(&covariates)?;
            io::write_images(&out, &predict(&field, &covariates)?)
        }
        Resolved::Evaluate(args) => emit_json(&evaluate(&args)?, args.report.as_deref()),
        Resolved::Benchmark => {
            let report = run_benchmark(&cfg.synth, &solvers(cfg)?, cfg.replicates)?;
            emit_json(&report, cfg.output.report.as_deref())
        }
        Resolved::Cv { data, fold_seed } => {
            let dataset = io::read_dataset(&data)?;
            let report = run_cv(&dataset, &solvers(cfg)?, cfg.folds, fold_seed)?;
            emit_json(&report, cfg.output.report.as_deref())
        }
    }
}

#[derive(Debug, Serialize)]
struct Evaluation {
    mse: f64,
    selection_rates: Option<Vec<f64>>,
    roi_test: Option<RoiSummary>,
}

#[derive(Debug, Serialize)]
struct RoiSummary {
    coefficient: usize,
    group_covariate: usize,
    level: f64,
    group_sizes: [usize; 2],
    roi_pixels: usize,
    fraction_significant_inside: f64,
    fraction_significant_outside: Option<f64>,
}

fn evaluate(args: &EvaluateArgs) -> Result<Evaluation> {
    let dataset = io::read_dataset(&args.data)?;
    let estimate = io::read_field(&args.fit.join(io::BETA_SPARSE_FILE))?;
    let predictions = match &args.predictions {
        Some(p) => io::read_images(p)?,
        None => predict(&estimate, dataset.covariates())?,
    };
    let mse = prediction_mse(&predictions, dataset.responses())?;
    let selection_rates = match &args.truth {
        Some(path) => Some(coefficient_rates(&io::read_field(path)?, &estimate)?),
        None => None,
    };
    let roi_test = match args.roi {
        Some((coef, column, level)) => Some(roi_summary(&dataset, &estimate, coef, column, level)?),
        None => None,
    };
    Ok(Evaluation {
        mse,
        selection_rates,
        roi_test,
    })
}

fn coefficient_rates(truth: &CoefficientField, estimate: &CoefficientField) -> Result<Vec<f64>> {
    if truth.p() != estimate.p() {
        return Err(Error::ShapeMismatch(format!(
            "truth has {} coefficients, estimate has {}",
            truth.p(),
            estimate.p()
        )));
    }
    truth
        .images()
        .iter()
        .zip(estimate.images())
        .map(|(t, e)| selection_rate(t, e))
        .collect()
}

fn roi_summary(
    dataset: &crate::types::Dataset,
    estimate: &CoefficientField,
    coef: usize,
    column: usize,
    level: f64,
) -> Result<RoiSummary> {
    if coef >= estimate.p() || column >= dataset.p() {
        return Err(Error::invalid(
            "roi",
            format!("coefficient {coef} / covariate {column} out of range for p = {}", dataset.p()),
        ));
    }
    let mut levels: Vec<f64> = dataset.covariates().iter().map(|x| x[column]).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let [low, high] = levels[..] else {
        return Err(Error::invalid(
            "group_covariate",
            format!("covariate {column} takes {} distinct values, need 2", levels.len()),
        ));
    };
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (x, y) in dataset.covariates().iter().zip(dataset.responses()) {
        if x[column] == high {
            a.push(y.clone());
        } else {
            debug_assert_eq!(x[column], low);
            b.push(y.clone());
        }
    }
    let roi = estimate.image(coef);
    let inside = roi_ttest(&a, &b, roi, level)?;
    let complement = Image::from_fn(roi.shape(), |r, c| if roi.get(r, c) == 0.0 { 1.0 } else { 0.0 })?;
    let outside = if complement.count_nonzero() > 0 {
        Some(roi_ttest(&a, &b, &complement, level)?.fraction_significant)
    } else {
        None
    };
    Ok(RoiSummary {
        coefficient: coef,
        group_covariate: column,
        level,
        group_sizes: [a.len(), b.len()],
        roi_pixels: inside.roi_pixels,
        fraction_significant_inside: inside.fraction_significant,
        fraction_significant_outside: outside,
    })
}
