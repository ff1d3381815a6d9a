//! Grid, image, dataset and configuration types shared by every module.
//!
//! Images are stored row-major: pixel `(j, k)` (1-indexed row and column)
//! lives at offset `(j - 1) * cols + (k - 1)`. Coefficient fields are
//! vectorized coefficient-major, so coefficient `l` occupies the block
//! `l * rows * cols .. (l + 1) * rows * cols`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    rows: usize,
    cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidShape { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of pixels.
    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage offset of the 0-indexed pixel `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// A real-valued image on a [`GridShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: GridShape,
    values: Vec<f64>,
}

impl Image {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for r in 0..shape.rows() {
            for c in 0..shape.cols() {
                values.push(f(r, c));
            }
        }
        Self::new(shape, values)
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the 0-indexed pixel `(row, col)`.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.shape.index(row, col)]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Copies the sub-rectangle `rows x cols` (half-open ranges).
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Image> {
        let shape = GridShape::new(rows.len(), cols.len())?;
        let mut values = Vec::with_capacity(shape.len());
        for r in rows {
            let start = self.shape.index(r, cols.start);
            values.extend_from_slice(&self.values[start..start + cols.len()]);
        }
        Ok(Image { shape, values })
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Row-major vectorization of an image.
pub fn vectorize(image: &Image) -> Vec<f64> {
    image.values.clone()
}

/// Inverse of [`vectorize`].
pub fn devectorize(vec: &[f64], shape: GridShape) -> Result<Image> {
    Image::new(shape, vec.to_vec())
}

/// The coefficient images `beta_1 .. beta_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    shape: GridShape,
    images: Vec<Image>,
}

impl CoefficientField {
    pub fn new(images: Vec<Image>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::invalid("p", "a coefficient field needs at least one image"))?;
        let shape = first.shape();
        if let Some(bad) = images.iter().find(|im| im.shape() != shape) {
            return Err(Error::ShapeMismatch(format!(
                "coefficient image {} differs from {}",
                bad.shape(),
                shape
            )));
        }
        Ok(Self { shape, images })
    }

    pub fn zeros(shape: GridShape, p: usize) -> Self {
        Self {
            shape,
            images: vec![Image::zeros(shape); p.max(1)],
        }
    }

    /// Builds a field from its coefficient-major vectorization.
    pub fn from_vec(vec: &[f64], shape: GridShape, p: usize) -> Result<Self> {
        if vec.len() != p * shape.len() {
            return Err(Error::LengthMismatch {
                expected: p * shape.len(),
                actual: vec.len(),
            });
        }
        let images = vec
            .chunks(shape.len())
            .map(|chunk| Image::new(shape, chunk.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(images)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.p() * self.shape.len());
        for im in &self.images {
            out.extend_from_slice(im.values());
        }
        out
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn image(&self, l: usize) -> &Image {
        &self.images[l]
    }
}

/// `n` pairs of covariate vectors and response images sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: GridShape,
    p: usize,
    covariates: Vec<Vec<f64>>,
    responses: Vec<Image>,
}

impl Dataset {
    pub fn new(covariates: Vec<Vec<f64>>, responses: Vec<Image>) -> Result<Self> {
        if covariates.is_empty() {
            return Err(Error::invalid("n", "a dataset needs at least one subject"));
        }
        if covariates.len() != responses.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} covariate rows but {} response images",
                covariates.len(),
                responses.len()
            )));
        }
        let p = covariates[0].len();
        if p == 0 {
            return Err(Error::invalid("p", "covariate vectors must be non-empty"));
        }
        for (i, x) in covariates.iter().enumerate() {
            if x.len() != p {
                return Err(Error::ShapeMismatch(format!(
                    "covariate row {i} has length {}, expected {p}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("covariates", format!("row {i} is not finite")));
            }
        }
        let shape = responses[0].shape();
        if let Some(i) = responses.iter().position(|y| y.shape() != shape) {
            return Err(Error::ShapeMismatch(format!(
                "response {i} is {}, expected {shape}",
                responses[i].shape()
            )));
        }
        Ok(Self {
            shape,
            p,
            covariates,
            responses,
        })
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.covariates.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn responses(&self) -> &[Image] {
        &self.responses
    }

    /// `G = (1/n) sum_i x_i x_i^T`, row-major `p x p`.
    pub fn gram(&self) -> Vec<f64> {
        let p = self.p;
        let mut g = vec![0.0; p * p];
        for x in &self.covariates {
            for a in 0..p {
                for b in 0..p {
                    g[a * p + b] += x[a] * x[b];
                }
            }
        }
        let n = self.n() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    /// Restricts every response image to a sub-rectangle.
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Dataset> {
        let responses = self
            .responses
            .iter()
            .map(|y| y.crop(rows.clone(), cols.clone()))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.covariates.clone(), responses)
    }

    /// Subset of subjects, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            indices.iter().map(|&i| self.covariates[i].clone()).collect(),
            indices.iter().map(|&i| self.responses[i].clone()).collect(),
        )
    }
}

/// Which penalty the solver minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Scad2tv,
    Tvl1,
    Graphnet,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 3] = [PenaltyKind::Scad2tv, PenaltyKind::Tvl1, PenaltyKind::Graphnet];

    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Scad2tv => "scad2tv",
            PenaltyKind::Tvl1 => "tvl1",
            PenaltyKind::Graphnet => "graphnet",
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "scad2tv" => Ok(PenaltyKind::Scad2tv),
            "tvl1" => Ok(PenaltyKind::Tvl1),
            "graphnet" => Ok(PenaltyKind::Graphnet),
            other => Err(Error::invalid("method", format!("unknown penalty `{other}`"))),
        }
    }
}

/// Hyperparameters of one ADMM fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Penalty level.
    pub lambda: f64,
    /// Weight of the gradient terms; `1 - gamma` weights the value terms.
    pub gamma: f64,
    /// Augmented-Lagrangian weight.
    pub rho: f64,
    /// SCAD shape parameter.
    pub a: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub penalty: PenaltyKind,
    /// Seed for the uniform initialization of beta.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 5.0,
            gamma: 0.5,
            rho: 1.0,
            a: 3.7,
            eps_abs: 1e-4,
            eps_rel: 1e-3,
            max_iter: 2000,
            penalty: PenaltyKind::Scad2tv,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_penalty(mut self, penalty: PenaltyKind) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // lambda = 0 is allowed: it switches the penalty off.
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("{} is not >= 0", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma", format!("{} is outside [0, 1]", self.gamma)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho", format!("{} is not > 0", self.rho)));
        }
        if !(self.a > 2.0 && self.a.is_finite()) {
            return Err(Error::invalid("a", format!("{} is not > 2", self.a)));
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(Error::invalid("eps", "tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be positive"));
        }
        Ok(())
    }
}

/// Per-tile bookkeeping of a divide-and-conquer fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSummary {
    pub index: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
}

/// Output of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// The beta iterate (generally dense).
    pub beta: CoefficientField,
    /// The split variable over the operator rows (sparse).
    pub alpha: Vec<f64>,
    /// Coefficients recovered from `alpha`.
    pub beta_sparse: CoefficientField,
    pub iterations: usize,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub objective_trace: Vec<f64>,
    /// Relative residual of the beta linear solve, per iteration.
    pub solve_residuals: Vec<f64>,
    pub converged: bool,
    /// Diagonal shift added when the normal matrix failed to factor; the
    /// largest over tiles.
    pub ridge: f64,
    /// Empty for a batch fit.
    pub tiles: Vec<TileSummary>,
}
