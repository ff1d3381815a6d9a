//! Selection rate, prediction error, pixelwise two-sample tests, and the
//! replicated benchmark and cross-validation harnesses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::solver::{fit, predict};
use crate::synth::{generate, SynthConfig};
use crate::types::{Dataset, Image, PenaltyKind, SolverConfig};

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Fraction of pixels whose zero / nonzero status agrees.
pub fn selection_rate(truth: &Image, estimate: &Image) -> Result<f64> {
    same_shape(truth, estimate)?;
    let agree = truth
        .values()
        .iter()
        .zip(estimate.values())
        .filter(|(t, e)| (**t == 0.0) == (**e == 0.0))
        .count();
    Ok(agree as f64 / truth.values().len() as f64)
}

/// `(1 / (n |S|)) Σ_i ||Ŷ_i - Y_i||²`.
pub fn prediction_mse(predicted: &[Image], observed: &[Image]) -> Result<f64> {
    if predicted.len() != observed.len() || predicted.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} observations",
            predicted.len(),
            observed.len()
        )));
    }
    let mut total = 0.0;
    for (a, b) in predicted.iter().zip(observed) {
        same_shape(a, b)?;
        total += a.values().iter().zip(b.values()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    Ok(total / (predicted.len() * predicted[0].shape().len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiTest {
    /// Share of ROI pixels with `p < level`.
    pub fraction_significant: f64,
    /// Two-sided Welch p-values; 1 outside the ROI and where both groups
    /// are constant and equal.
    pub p_values: Image,
    pub roi_pixels: usize,
}

/// Welch two-sample t-test at every pixel where `roi_mask` is nonzero.
pub fn roi_ttest(group_a: &[Image], group_b: &[Image], roi_mask: &Image, level: f64) -> Result<RoiTest> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::invalid(
            "groups",
            format!("need at least 2 images per group, got {} and {}", group_a.len(), group_b.len()),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", format!("{level} is outside (0, 1)")));
    }
    for im in group_a.iter().chain(group_b) {
        same_shape(im, roi_mask)?;
    }
    let roi_pixels = roi_mask.count_nonzero();
    if roi_pixels == 0 {
        return Err(Error::invalid("roi_mask", "the mask selects no pixel"));
    }
    let moments = |group: &[Image], s: usize| {
        let n = group.len() as f64;
        let mean = group.iter().map(|im| im.values()[s]).sum::<f64>() / n;
        let var = group.iter().map(|im| (im.values()[s] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var, n)
    };
    let mut p_values = vec![1.0; roi_mask.values().len()];
    let mut significant = 0usize;
    for (s, m) in roi_mask.values().iter().enumerate() {
        if *m == 0.0 {
            continue;
        }
        let (ma, va, na) = moments(group_a, s);
        let (mb, vb, nb) = moments(group_b, s);
        let (sa, sb) = (va / na, vb / nb);
        let se2 = sa + sb;
        let p = if se2 == 0.0 {
            if ma == mb {
                1.0
            } else {
                0.0
            }
        } else {
            let t = (ma - mb) / se2.sqrt();
            let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
            let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Internal(e.to_string()))?;
            (2.0 * dist.sf(t.abs())).min(1.0)
        };
        p_values[s] = p;
        if p < level {
            significant += 1;
        }
    }
    Ok(RoiTest {
        fraction_significant: significant as f64 / roi_pixels as f64,
        p_values: Image::new(roi_mask.shape(), p_values)?,
        roi_pixels,
    })
}

/// One method's fit on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: PenaltyKind,
    pub selection_rates: Vec<f64>,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: PenaltyKind,
    /// Mean selection rate per coefficient.
    pub mean_selection_rate: Vec<f64>,
    pub mean_mse: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub replicates: usize,
    pub synth: SynthConfig,
    pub solvers: Vec<SolverConfig>,
    pub methods: Vec<MethodSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl BenchmarkReport {
    pub fn method(&self, kind: PenaltyKind) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == kind)
    }
}

/// Seed of replicate `r`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generates `replicates` datasets and fits every configured method to each.
///
/// Failed fits are recorded in `failed` and left out of the means.
pub fn run_benchmark(synth: &SynthConfig, solvers: &[SolverConfig], replicates: usize) -> Result<BenchmarkReport> {
    if replicates == 0 {
        return Err(Error::invalid("replicates", "must be positive"));
    }
    if solvers.is_empty() {
        return Err(Error::invalid("solvers", "no method configured"));
    }
    synth.validate()?;
    let per_replicate: Vec<Result<Vec<Option<ReplicateRecord>>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let cfg = SynthConfig {
                seed: replicate_seed(synth.seed, r),
                ..synth.clone()
            };
            let (dataset, truth) = generate(&cfg)?;
            solvers
                .iter()
                .map(|solver| {
                    let sc = SolverConfig {
                        seed: replicate_seed(solver.seed, r),
                        ..*solver
                    };
                    let Ok(result) = fit(&dataset, &sc) else {
                        return Ok(None);
                    };
                    let selection_rates = truth
                        .images()
                        .iter()
                        .zip(result.beta_sparse.images())
                        .map(|(t, e)| selection_rate(t, e))
                        .collect::<Result<Vec<_>>>()?;
                    let preds = predict(&result.beta_sparse, dataset.covariates())?;
                    Ok(Some(ReplicateRecord {
                        replicate: r,
                        method: solver.penalty,
                        selection_rates,
                        mse: prediction_mse(&preds, dataset.responses())?,
                        iterations: result.iterations,
                        converged: result.converged,
                    }))
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut failed = vec![0usize; solvers.len()];
    for rep in per_replicate {
        for (m, rec) in rep?.into_iter().enumerate() {
            match rec {
                Some(rec) => records.push(rec),
                None => failed[m] += 1,
            }
        }
    }
    let methods = solvers
        .iter()
        .zip(&failed)
        .map(|(solver, &failed)| {
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == solver.penalty).collect();
            let k = mine.len().max(1) as f64;
            let p = mine.first().map_or(0, |r| r.selection_rates.len());
            let mean_selection_rate = (0..p)
                .map(|l| mine.iter().map(|r| r.selection_rates[l]).sum::<f64>() / k)
                .collect();
            MethodSummary {
                method: solver.penalty,
                mean_selection_rate,
                mean_mse: mine.iter().map(|r| r.mse).sum::<f64>() / k,
                completed: mine.len(),
                failed,
            }
        })
        .collect();
    Ok(BenchmarkReport {
        replicates,
        synth: synth.clone(),
        solvers: solvers.to_vec(),
        methods,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvMethod {
    pub method: PenaltyKind,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    /// Subject indices held out in each fold.
    pub fold_indices: Vec<Vec<usize>>,
    pub methods: Vec<CvMethod>,
}

/// Shuffles subjects with `seed`, then cuts them into `folds` contiguous
/// blocks whose sizes differ by at most one.
pub fn cv_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::invalid("folds", format!("{folds} folds for {n} subjects")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// K-fold held-out prediction MSE for each configured method.
pub fn run_cv(dataset: &Dataset, solvers: &[SolverConfig], folds: usize, seed: u64) -> Result<CvReport> {
    let fold_indices = cv_folds(dataset.n(), folds, seed)?;
    let methods = solvers
        .iter()
        .map(|solver| {
            let fold_mse = fold_indices
                .par_iter()
                .enumerate()
                .map(|(k, held)| {
                    let train: Vec<usize> = fold_indices
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .flat_map(|(_, f)| f.iter().copied())
                        .collect();
                    let result = fit(&dataset.select(&train)?, solver)?;
                    let test = dataset.select(held)?;
                    let preds = predict(&result.beta_sparse, test.covariates())?;
                    prediction_mse(&preds, test.responses())
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean_mse = fold_mse.iter().sum::<f64>() / fold_mse.len() as f64;
            Ok(CvMethod {
                method: solver.penalty,
                fold_mse,
                mean_mse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport {
        folds,
        seed,
        fold_indices,
        methods,
    })
}
