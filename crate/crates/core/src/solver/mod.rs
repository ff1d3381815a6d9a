//! ADMM solver for the penalized image-on-scalar least-squares problem.
//!
//! The problem `min (1/n) Σ ||Y_i - X_iᵀβ||² + pen(β)` is split as
//! `α = Dβ`. Each iteration thresholds `Dβ - η/ρ` row by row, solves the
//! ridge-type normal system for `β` with a factor computed once per fit, and
//! takes a dual ascent step on `η`.

mod admm;
mod system;

pub use admm::{fit, Admm, AdmmState, StepReport};
pub use system::{assemble, NormalSystem, FALLBACK_RIDGE};

use crate::diffops::{DiffOperator, RowKind};
use crate::error::{Error, Result};
use crate::penalty::penalty_value;
use crate::types::{CoefficientField, Dataset, Image, SolverConfig};

/// Mean predictions `Ŷ_i(s) = Σ_l x_il β_l(s)`.
pub fn predict(field: &CoefficientField, covariates: &[Vec<f64>]) -> Result<Vec<Image>> {
    let shape = field.shape();
    covariates
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if x.len() != field.p() {
                return Err(Error::ShapeMismatch(format!(
                    "covariate row {i} has length {}, field has p={}",
                    x.len(),
                    field.p()
                )));
            }
            let mut values = vec![0.0; shape.len()];
            for (xl, im) in x.iter().zip(field.images()) {
                for (v, b) in values.iter_mut().zip(im.values()) {
                    *v += xl * b;
                }
            }
            Image::new(shape, values)
        })
        .collect()
}

/// Recovers coefficient images from the split variable: each pixel is the
/// mean of the value rows that reference it.
pub fn extract_sparse_beta(alpha: &[f64], op: &DiffOperator) -> Result<CoefficientField> {
    if alpha.len() != op.n_rows() {
        return Err(Error::LengthMismatch {
            expected: op.n_rows(),
            actual: alpha.len(),
        });
    }
    let mut sum = vec![0.0; op.n_cols()];
    let mut count = vec![0u32; op.n_cols()];
    for ((a, row), kind) in alpha.iter().zip(op.rows()).zip(op.row_kinds()) {
        if *kind == RowKind::Value {
            sum[row.plus] += a;
            count[row.plus] += 1;
        }
    }
    let mut values = Vec::with_capacity(sum.len());
    for (j, (s, c)) in sum.into_iter().zip(count).enumerate() {
        if c == 0 {
            return Err(Error::Internal(format!("coefficient entry {j} has no value row")));
        }
        values.push(s / c as f64);
    }
    CoefficientField::from_vec(&values, op.shape(), op.p())
}

/// The objective `(1/n) Σ ||Y_i - X_iᵀβ||² + pen(β)` evaluated directly.
pub fn objective(dataset: &Dataset, field: &CoefficientField, config: &SolverConfig) -> Result<f64> {
    let op = DiffOperator::for_penalty(config.penalty, dataset.shape(), dataset.p(), config.gamma)?;
    let preds = predict(field, dataset.covariates())?;
    let mut data = 0.0;
    for (yhat, y) in preds.iter().zip(dataset.responses()) {
        data += yhat
            .values()
            .iter()
            .zip(y.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(data / dataset.n() as f64 + penalty_value(field, config, &op)?)
}

#[cfg(test)]
mod tests;
