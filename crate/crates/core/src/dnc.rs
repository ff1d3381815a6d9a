//! Divide and conquer over overlapping tiles.
//!
//! The grid is cut into disjoint core rectangles. Each core is padded by a
//! halo on every side that stays inside the grid, the padded sub-problem is
//! fitted independently, and only the core of its estimate is kept.

use std::ops::Range;

use rayon::prelude::*;

use crate::diffops::DiffOperator;
use crate::error::{Error, Result};
use crate::solver;
use crate::types::{CoefficientField, Dataset, FitResult, GridShape, SolverConfig, TileSummary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub index: usize,
    pub core_rows: Range<usize>,
    pub core_cols: Range<usize>,
    pub padded_rows: Range<usize>,
    pub padded_cols: Range<usize>,
}

impl Tile {
    pub fn padded_shape(&self) -> (usize, usize) {
        (self.padded_rows.len(), self.padded_cols.len())
    }

    pub fn core_shape(&self) -> (usize, usize) {
        (self.core_rows.len(), self.core_cols.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tiling {
    pub shape: GridShape,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub halo: usize,
    pub tiles: Vec<Tile>,
}

/// Row-major tiles of `tile.0 x tile.1` pixels; the last row and column of
/// tiles take the remainders.
pub fn make_tiling(shape: GridShape, tile: (usize, usize), halo: usize) -> Result<Tiling> {
    let (br, bc) = tile;
    if br == 0 || br > shape.rows() || bc == 0 || bc > shape.cols() {
        return Err(Error::invalid("tile", format!("{br}x{bc} does not fit in {shape}")));
    }
    if halo == 0 {
        return Err(Error::invalid("halo", "must be at least 1"));
    }
    let cuts = |n: usize, b: usize| -> Vec<Range<usize>> { (0..n).step_by(b).map(|s| s..(s + b).min(n)).collect() };
    let pad = |r: &Range<usize>, n: usize| r.start.saturating_sub(halo)..(r.end + halo).min(n);
    let mut tiles = Vec::new();
    for rows in cuts(shape.rows(), br) {
        for cols in cuts(shape.cols(), bc) {
            let tile = Tile {
                index: tiles.len(),
                padded_rows: pad(&rows, shape.rows()),
                padded_cols: pad(&cols, shape.cols()),
                core_rows: rows.clone(),
                core_cols: cols,
            };
            let (pr, pc) = tile.padded_shape();
            if pr < 2 || pc < 2 {
                return Err(Error::invalid("tile", format!("padded tile {} is {pr}x{pc}", tile.index)));
            }
            tiles.push(tile);
        }
    }
    Ok(Tiling {
        shape,
        tile_rows: br,
        tile_cols: bc,
        halo,
        tiles,
    })
}

/// Seed of the fit for tile `index`.
pub fn tile_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Fits every tile on the global rayon pool.
pub fn fit_tiled(dataset: &Dataset, config: &SolverConfig, tiling: &Tiling) -> Result<FitResult> {
    run_tiles(dataset, config, tiling)
}

/// Fits every tile on a dedicated pool of `workers` threads.
pub fn fit_tiled_with_workers(
    dataset: &Dataset,
    config: &SolverConfig,
    tiling: &Tiling,
    workers: usize,
) -> Result<FitResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| run_tiles(dataset, config, tiling))
}

fn run_tiles(dataset: &Dataset, config: &SolverConfig, tiling: &Tiling) -> Result<FitResult> {
    if dataset.shape() != tiling.shape {
        return Err(Error::ShapeMismatch(format!(
            "dataset is {}, tiling is {}",
            dataset.shape(),
            tiling.shape
        )));
    }
    config.validate()?;
    let fits: Vec<Result<FitResult>> = tiling
        .tiles
        .par_iter()
        .map(|tile| {
            let sub = dataset.crop(tile.padded_rows.clone(), tile.padded_cols.clone())?;
            let cfg = SolverConfig {
                seed: tile_seed(config.seed, tile.index),
                ..*config
            };
            solver::fit(&sub, &cfg)
        })
        .collect();

    let shape = tiling.shape;
    let p = dataset.p();
    let npix = shape.len();
    let mut beta = vec![0.0; p * npix];
    let mut beta_sparse = vec![0.0; p * npix];
    let mut out = FitResult {
        beta: CoefficientField::zeros(shape, p),
        alpha: Vec::new(),
        beta_sparse: CoefficientField::zeros(shape, p),
        iterations: 0,
        primal_residuals: Vec::new(),
        dual_residuals: Vec::new(),
        objective_trace: Vec::new(),
        solve_residuals: Vec::new(),
        converged: true,
        ridge: 0.0,
        tiles: Vec::with_capacity(tiling.tiles.len()),
    };
    let mut single_alpha = None;
    for (tile, fit) in tiling.tiles.iter().zip(fits) {
        let fit = fit.map_err(|e| Error::Tile {
            index: tile.index,
            source: Box::new(e),
        })?;
        let sub_cols = tile.padded_cols.len();
        for l in 0..p {
            let src_b = fit.beta.image(l).values();
            let src_s = fit.beta_sparse.image(l).values();
            for r in tile.core_rows.clone() {
                let lr = r - tile.padded_rows.start;
                for c in tile.core_cols.clone() {
                    let lc = c - tile.padded_cols.start;
                    let dst = l * npix + shape.index(r, c);
                    beta[dst] = src_b[lr * sub_cols + lc];
                    beta_sparse[dst] = src_s[lr * sub_cols + lc];
                }
            }
        }
        single_alpha = Some(fit.alpha);
        out.iterations += fit.iterations;
        out.primal_residuals.extend(fit.primal_residuals);
        out.dual_residuals.extend(fit.dual_residuals);
        out.objective_trace.extend(fit.objective_trace);
        out.solve_residuals.extend(fit.solve_residuals);
        out.converged &= fit.converged;
        out.ridge = out.ridge.max(fit.ridge);
        out.tiles.push(TileSummary {
            index: tile.index,
            seed: tile_seed(config.seed, tile.index),
            iterations: fit.iterations,
            converged: fit.converged,
        });
    }
    out.beta = CoefficientField::from_vec(&beta, shape, p)?;
    out.beta_sparse = CoefficientField::from_vec(&beta_sparse, shape, p)?;
    out.alpha = match single_alpha {
        // One tile covers the grid: its split variable is the global one.
        Some(alpha) if tiling.tiles.len() == 1 => alpha,
        _ => DiffOperator::for_penalty(config.penalty, shape, p, config.gamma)?.apply(&beta_sparse)?,
    };
    Ok(out)
}
