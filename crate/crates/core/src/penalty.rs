//! SCAD penalty, its exact scalar proximal map, and the penalty values the
//! solver reports.

use crate::diffops::{gradient, DiffOperator, RowKind};
use crate::error::{Error, Result};
use crate::types::{CoefficientField, PenaltyKind, SolverConfig};

/// Parameters of the SCAD penalty `rho_lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScadParams {
    pub lambda: f64,
    pub a: f64,
}

impl Default for ScadParams {
    fn default() -> Self {
        Self { lambda: 5.0, a: 3.7 }
    }
}

impl ScadParams {
    /// `lambda = 0` is accepted and turns the penalty off.
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("{lambda} is not >= 0")));
        }
        if !(a > 2.0 && a.is_finite()) {
            return Err(Error::invalid("a", format!("{a} is not > 2")));
        }
        Ok(Self { lambda, a })
    }

    pub fn from_config(config: &SolverConfig) -> Result<Self> {
        Self::new(config.lambda, config.a)
    }
}

/// `rho'_lambda(t)` for `t >= 0`.
pub fn scad_derivative(t: f64, params: ScadParams) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::invalid("t", format!("{t} is negative")));
    }
    let ScadParams { lambda, a } = params;
    Ok(if t <= lambda {
        lambda
    } else {
        (a * lambda - t).max(0.0) / (a - 1.0)
    })
}

/// `rho_lambda(|t|)`.
pub fn scad_value(t: f64, params: ScadParams) -> f64 {
    let ScadParams { lambda, a } = params;
    let t = t.abs();
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        lambda * lambda * (a + 1.0) / 2.0
    }
}

pub fn soft_threshold(z: f64, threshold: f64) -> f64 {
    let m = z.abs() - threshold;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

/// Global minimizer of `(quad_weight / 2)(z - θ)² + pen_weight · rho_lambda(|θ|)`.
///
/// With `κ = pen_weight / quad_weight < a - 1` the objective is strictly
/// convex and the three-piece closed form applies. Otherwise the candidate
/// stationary points and breakpoints of each region are compared directly;
/// ties go to the smaller `|θ|`.
pub fn scad_prox(z: f64, quad_weight: f64, pen_weight: f64, params: ScadParams) -> Result<f64> {
    if !(quad_weight > 0.0) {
        return Err(Error::invalid("rho", format!("{quad_weight} is not > 0")));
    }
    if pen_weight < 0.0 {
        return Err(Error::invalid("w", format!("{pen_weight} is negative")));
    }
    Ok(scad_prox_unchecked(z, quad_weight, pen_weight, params))
}

#[inline]
pub(crate) fn scad_prox_unchecked(z: f64, quad_weight: f64, pen_weight: f64, params: ScadParams) -> f64 {
    let ScadParams { lambda, a } = params;
    if pen_weight == 0.0 || lambda == 0.0 {
        return z;
    }
    let kappa = pen_weight / quad_weight;
    let abs = z.abs();
    if kappa < a - 1.0 {
        if abs <= (1.0 + kappa) * lambda {
            soft_threshold(z, kappa * lambda)
        } else if abs <= a * lambda {
            (((a - 1.0) * abs - kappa * a * lambda) / (a - 1.0 - kappa)).copysign(z)
        } else {
            z
        }
    } else {
        scad_prox_enumerate(z, kappa, params)
    }
}

fn scad_prox_enumerate(z: f64, kappa: f64, params: ScadParams) -> f64 {
    let ScadParams { lambda, a } = params;
    let abs = z.abs();
    let objective = |t: f64| 0.5 * (abs - t) * (abs - t) + kappa * scad_value(t, params);
    let mut candidates = vec![0.0, lambda, a * lambda];
    candidates.push((abs - kappa * lambda).clamp(0.0, lambda));
    let denom = a - 1.0 - kappa;
    if denom != 0.0 {
        let t = ((a - 1.0) * abs - kappa * a * lambda) / denom;
        if t > lambda && t <= a * lambda {
            candidates.push(t);
        }
    }
    if abs > a * lambda {
        candidates.push(abs);
    }
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut best = (objective(candidates[0]), candidates[0]);
    for &t in &candidates[1..] {
        let f = objective(t);
        if f < best.0 {
            best = (f, t);
        }
    }
    best.1.copysign(z)
}

/// Entrywise proximal step of the alpha update, respecting the row weights.
///
/// SCAD2TV applies [`scad_prox`] with each row's weight; TV-ℓ1 soft-thresholds
/// at `lambda * w / rho`; GraphNet soft-thresholds value rows only and passes
/// gradient rows through, since its gradient term is handled in the smooth
/// part of the objective.
pub fn threshold_rows(z: &[f64], op: &DiffOperator, config: &SolverConfig) -> Result<Vec<f64>> {
    if z.len() != op.n_rows() {
        return Err(Error::LengthMismatch {
            expected: op.n_rows(),
            actual: z.len(),
        });
    }
    let params = ScadParams::from_config(config)?;
    if !(config.rho > 0.0) {
        return Err(Error::invalid("rho", format!("{} is not > 0", config.rho)));
    }
    let mut out = z.to_vec();
    threshold_rows_in_place(&mut out, op, config, params);
    Ok(out)
}

pub(crate) fn threshold_rows_in_place(
    z: &mut [f64],
    op: &DiffOperator,
    config: &SolverConfig,
    params: ScadParams,
) {
    let rho = config.rho;
    let weights = op.row_weights();
    match config.penalty {
        PenaltyKind::Scad2tv => {
            for (v, &w) in z.iter_mut().zip(weights) {
                *v = scad_prox_unchecked(*v, rho, w, params);
            }
        }
        PenaltyKind::Tvl1 => {
            for (v, &w) in z.iter_mut().zip(weights) {
                *v = soft_threshold(*v, params.lambda * w / rho);
            }
        }
        PenaltyKind::Graphnet => {
            for ((v, &w), kind) in z.iter_mut().zip(weights).zip(op.row_kinds()) {
                if *kind == RowKind::Value {
                    *v = soft_threshold(*v, params.lambda * w / rho);
                }
            }
        }
    }
}

/// Penalty part of the objective for `field`.
///
/// SCAD2TV sums `w_r · rho_lambda(|(Dβ)_r|)` over the rows of `op`; TV-ℓ1 and
/// GraphNet are evaluated from their definitions on each coefficient image.
pub fn penalty_value(field: &CoefficientField, config: &SolverConfig, op: &DiffOperator) -> Result<f64> {
    if field.shape() != op.shape() || field.p() != op.p() {
        return Err(Error::ShapeMismatch(format!(
            "field is {} with p={}, operator is {} with p={}",
            field.shape(),
            field.p(),
            op.shape(),
            op.p()
        )));
    }
    let params = ScadParams::from_config(config)?;
    Ok(match config.penalty {
        PenaltyKind::Scad2tv => scad2tv_value(&op.apply(&field.to_vec())?, op, params),
        PenaltyKind::Tvl1 | PenaltyKind::Graphnet => {
            separable_value(field, config.penalty, config.lambda, config.gamma)
        }
    })
}

pub(crate) fn scad2tv_value(d_beta: &[f64], op: &DiffOperator, params: ScadParams) -> f64 {
    d_beta
        .iter()
        .zip(op.row_weights())
        .filter(|(_, w)| **w != 0.0)
        .map(|(v, w)| w * scad_value(*v, params))
        .sum()
}

pub(crate) fn separable_value(field: &CoefficientField, kind: PenaltyKind, lambda: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    for im in field.images() {
        let g = gradient(im);
        let smooth = match kind {
            PenaltyKind::Graphnet => g.squared_l2_norm(),
            _ => g.l1_norm(),
        };
        let l1: f64 = im.values().iter().map(|v| v.abs()).sum();
        total += lambda * (gamma * smooth + (1.0 - gamma) * l1);
    }
    total
}
