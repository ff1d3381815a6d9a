//! Synthetic benchmark data: piecewise-constant coefficient images, uniform
//! covariates, a smooth Gaussian random field and white noise per subject.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CoefficientField, Dataset, GridShape, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub n: usize,
    /// Standard deviation of the white noise.
    pub sigma: f64,
    /// Marginal variance of the spatial field; `None` means `sigma²`.
    pub field_variance: Option<f64>,
    /// Length scale of the squared-exponential kernel, in pixels.
    pub field_length_scale: f64,
    pub seed: u64,
    /// Custom truth; the default shapes are used when absent.
    #[serde(skip)]
    pub truth: Option<CoefficientField>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            n: 100,
            sigma: 1.0,
            field_variance: None,
            field_length_scale: 8.0,
            seed: 0,
            truth: None,
        }
    }
}

impl SynthConfig {
    pub fn shape(&self) -> Result<GridShape> {
        GridShape::new(self.rows, self.cols)
    }

    pub fn effective_field_variance(&self) -> f64 {
        self.field_variance.unwrap_or(self.sigma * self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("{} is not > 0", self.sigma)));
        }
        if !(self.effective_field_variance() >= 0.0) {
            return Err(Error::invalid("field_variance", "must be >= 0"));
        }
        if !(self.field_length_scale > 0.0) {
            return Err(Error::invalid("field_length_scale", "must be > 0"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        if let Some(t) = &self.truth {
            if t.shape() != self.shape()? {
                return Err(Error::ShapeMismatch(format!("truth is {}, grid is {}", t.shape(), self.shape()?)));
            }
        }
        Ok(())
    }
}

/// Three piecewise-constant images on a zero background: a square of value
/// 2 in the upper-left quadrant, a centred disk of value 3, and a centred
/// cross of value -2.
pub fn default_truth(shape: GridShape) -> Result<CoefficientField> {
    let (nr, nc) = (shape.rows(), shape.cols());
    if nr < 16 || nc < 16 {
        return Err(Error::invalid("shape", format!("default truth needs at least 16x16, got {shape}")));
    }
    let m = nr.min(nc);

    let side = m / 4;
    let r0 = (nr / 2 - side) / 2;
    let c0 = (nc / 2 - side) / 2;
    let square = Image::from_fn(shape, |r, c| {
        if (r0..r0 + side).contains(&r) && (c0..c0 + side).contains(&c) {
            2.0
        } else {
            0.0
        }
    })?;

    let radius = (m / 6) as f64;
    let (cr, cc) = ((nr as f64 - 1.0) / 2.0, (nc as f64 - 1.0) / 2.0);
    let disk = Image::from_fn(shape, |r, c| {
        let (dr, dc) = (r as f64 - cr, c as f64 - cc);
        if dr * dr + dc * dc <= radius * radius {
            3.0
        } else {
            0.0
        }
    })?;

    // Bars of width m/8 through the centre, spanning the middle half.
    let width = (m / 8).max(1);
    let vr = (nr - width) / 2..(nr - width) / 2 + width;
    let vc = (nc - width) / 2..(nc - width) / 2 + width;
    let span_r = nr / 4..nr - nr / 4;
    let span_c = nc / 4..nc - nc / 4;
    let cross = Image::from_fn(shape, |r, c| {
        let horizontal = vr.contains(&r) && span_c.contains(&c);
        let vertical = vc.contains(&c) && span_r.contains(&r);
        if horizontal || vertical {
            -2.0
        } else {
            0.0
        }
    })?;

    CoefficientField::new(vec![square, disk, cross])
}

/// Exact sampler for a zero-mean field with covariance
/// `variance · exp(-d² / (2 ℓ²))`.
///
/// The kernel factors over the two axes, so the pixel covariance is
/// `C_rows ⊗ C_cols` and a sample is `A Z Bᵀ` with `A = C_rows^{1/2}`,
/// `B = C_cols^{1/2}` and white `Z`.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    shape: GridShape,
    row_root: DMatrix<f64>,
    col_root: DMatrix<f64>,
    scale: f64,
}

impl FieldSampler {
    pub fn new(shape: GridShape, variance: f64, length_scale: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::invalid("variance", format!("{variance} is negative")));
        }
        if !(length_scale > 0.0) {
            return Err(Error::invalid("length_scale", format!("{length_scale} is not > 0")));
        }
        Ok(Self {
            shape,
            row_root: kernel_root(shape.rows(), length_scale),
            col_root: kernel_root(shape.cols(), length_scale),
            scale: variance.sqrt(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Image {
        let (nr, nc) = (self.shape.rows(), self.shape.cols());
        if self.scale == 0.0 {
            return Image::zeros(self.shape);
        }
        let z = DMatrix::<f64>::from_fn(nr, nc, |_, _| StandardNormal.sample(rng));
        let field = &self.row_root * z * self.col_root.transpose() * self.scale;
        Image::from_fn(self.shape, |r, c| field[(r, c)]).expect("finite field")
    }
}

/// Symmetric square root of the 1D squared-exponential Gram matrix; the
/// tiny negative eigenvalues from rounding are clipped to zero.
fn kernel_root(n: usize, length_scale: f64) -> DMatrix<f64> {
    let k = DMatrix::<f64>::from_fn(n, n, |i, j| {
        let d = i as f64 - j as f64;
        (-d * d / (2.0 * length_scale * length_scale)).exp()
    });
    let eig = SymmetricEigen::new(k);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

pub fn gaussian_random_field(shape: GridShape, variance: f64, length_scale: f64, seed: u64) -> Result<Image> {
    let sampler = FieldSampler::new(shape, variance, length_scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample(&mut rng))
}

/// A generated dataset together with the pieces that produced it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub truth: CoefficientField,
    /// Spatial field per subject.
    pub fields: Vec<Image>,
    /// White noise per subject.
    pub noise: Vec<Image>,
}

/// Draws `n` subjects with `x_i = (1, U(0,2), ..., U(0,2))` and
/// `Y_i = Σ_l x_il β_l + η_i + ε_i`.
pub fn generate_with_components(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let shape = config.shape()?;
    let truth = match &config.truth {
        Some(t) => t.clone(),
        None => default_truth(shape)?,
    };
    let p = truth.p();
    let sampler = FieldSampler::new(shape, config.effective_field_variance(), config.field_length_scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut covariates = Vec::with_capacity(config.n);
    let mut responses = Vec::with_capacity(config.n);
    let mut fields = Vec::with_capacity(config.n);
    let mut noise = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let mut x = Vec::with_capacity(p);
        x.push(1.0);
        for _ in 1..p {
            x.push(rng.random_range(0.0..2.0));
        }
        let eta = sampler.sample(&mut rng);
        let eps: Vec<f64> = (0..shape.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.sigma * z
            })
            .collect();
        let mut y = vec![0.0; shape.len()];
        for (xl, b) in x.iter().zip(truth.images()) {
            for (v, bv) in y.iter_mut().zip(b.values()) {
                *v += xl * bv;
            }
        }
        for ((v, e), n) in y.iter_mut().zip(eta.values()).zip(&eps) {
            *v += e + n;
        }
        covariates.push(x);
        responses.push(Image::new(shape, y)?);
        fields.push(eta);
        noise.push(Image::new(shape, eps)?);
    }
    Ok(Synthetic {
        dataset: Dataset::new(covariates, responses)?,
        truth,
        fields,
        noise,
    })
}

pub fn generate(config: &SynthConfig) -> Result<(Dataset, CoefficientField)> {
    let s = generate_with_components(config)?;
    Ok((s.dataset, s.truth))
}
