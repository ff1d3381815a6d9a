use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};

use crate::diffops::{DiffOperator, Layout, SparseMatrix};
use crate::error::{Error, Result};
use crate::types::{Dataset, PenaltyKind, SolverConfig};

/// Ridge added when the normal matrix fails to factor.
pub const FALLBACK_RIDGE: f64 = 1e-10;

/// The beta-update linear system, assembled and factored once per fit.
///
/// `M = (2/n)(G ⊗ I) + rho DᵀD`, plus `2 lambda gamma (∇ᵀ∇ ⊗ I)` for GraphNet,
/// where `G = (1/n) Σ x_i x_iᵀ`. `rhs_base` stacks `(2/n) Σ_i x_il Y_i` over
/// the coefficients.
pub struct NormalSystem {
    matrix: SparseMatrix,
    factor: Llt<usize, f64>,
    rhs_base: Vec<f64>,
    ridge: f64,
    covariate_gram: Vec<f64>,
    response_energy: f64,
    p: usize,
    npix: usize,
}

impl std::fmt::Debug for NormalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NormalSystem")
            .field("size", &self.matrix.nrows())
            .field("nnz", &self.matrix.nnz())
            .field("ridge", &self.ridge)
            .finish()
    }
}

/// Builds and factors the normal system for `dataset` under `op`.
pub fn assemble(dataset: &Dataset, op: &DiffOperator, config: &SolverConfig) -> Result<NormalSystem> {
    if dataset.shape() != op.shape() || dataset.p() != op.p() {
        return Err(Error::ShapeMismatch(format!(
            "dataset is {} with p={}, operator is {} with p={}",
            dataset.shape(),
            dataset.p(),
            op.shape(),
            op.p()
        )));
    }
    let p = dataset.p();
    let npix = dataset.shape().len();
    let n = dataset.n() as f64;
    let size = p * npix;

    let g = dataset.gram();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(size * (p + 8));
    for a in 0..p {
        for b in 0..p {
            let v = 2.0 * g[a * p + b];
            if v != 0.0 {
                for s in 0..npix {
                    triplets.push((a * npix + s, b * npix + s, v));
                }
            }
        }
    }
    triplets.extend(op.gram().iter().map(|(r, c, v)| (r, c, config.rho * v)));
    if config.penalty == PenaltyKind::Graphnet && config.lambda * config.gamma != 0.0 {
        let grad = DiffOperator::build(Layout::Separable, op.shape(), p, op.gamma())?;
        let scale = 2.0 * config.lambda * config.gamma;
        triplets.extend(grad.gradient_gram().iter().map(|(r, c, v)| (r, c, scale * v)));
    }
    let matrix = SparseMatrix::from_triplets(size, size, triplets);

    let (factor, ridge) = match factorize(&matrix, 0.0) {
        Ok(f) => (f, 0.0),
        Err(_) => (factorize(&matrix, FALLBACK_RIDGE)?, FALLBACK_RIDGE),
    };

    let mut rhs_base = vec![0.0; size];
    let mut response_energy = 0.0;
    for (x, y) in dataset.covariates().iter().zip(dataset.responses()) {
        let yv = y.values();
        response_energy += yv.iter().map(|v| v * v).sum::<f64>();
        for (l, &xl) in x.iter().enumerate() {
            if xl == 0.0 {
                continue;
            }
            let block = &mut rhs_base[l * npix..(l + 1) * npix];
            for (b, v) in block.iter_mut().zip(yv) {
                *b += xl * v;
            }
        }
    }
    rhs_base.iter_mut().for_each(|v| *v *= 2.0 / n);

    Ok(NormalSystem {
        matrix,
        factor,
        rhs_base,
        ridge,
        covariate_gram: g,
        response_energy: response_energy / n,
        p,
        npix,
    })
}

fn factorize(matrix: &SparseMatrix, ridge: f64) -> Result<Llt<usize, f64>> {
    let n = matrix.nrows();
    let mut trips: Vec<Triplet<usize, usize, f64>> = matrix
        .iter()
        .filter(|(r, c, _)| r >= c)
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    if ridge != 0.0 {
        trips.extend((0..n).map(|i| Triplet::new(i, i, ridge)));
    }
    let lower = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    lower
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Factorization(format!("{e:?}")))
}

impl NormalSystem {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn rhs_base(&self) -> &[f64] {
        &self.rhs_base
    }

    /// Diagonal shift applied because the plain matrix failed to factor.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves `(M + ridge I) x = rhs` with the cached factor.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
        let x = self.factor.solve(&b);
        (0..rhs.len()).map(|i| x[i]).collect()
    }

    /// `||(M + ridge I) x - rhs||_2 / (1 + ||rhs||_2)`.
    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mx = self.matrix.matvec(x);
        let mut num = 0.0;
        for ((m, xi), b) in mx.iter().zip(x).zip(rhs) {
            let r = m + self.ridge * xi - b;
            num += r * r;
        }
        let den: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        num.sqrt() / (1.0 + den)
    }

    /// The least-squares term `(1/n) Σ ||Y_i - X_iᵀβ||²` from the cached moments.
    pub fn data_term(&self, beta: &[f64]) -> f64 {
        let (p, npix) = (self.p, self.npix);
        let linear: f64 = beta.iter().zip(&self.rhs_base).map(|(b, r)| b * r).sum();
        let mut quad = 0.0;
        for a in 0..p {
            let ba = &beta[a * npix..(a + 1) * npix];
            for b in a..p {
                let g = self.covariate_gram[a * p + b];
                if g == 0.0 {
                    continue;
                }
                let bb = &beta[b * npix..(b + 1) * npix];
                let dot: f64 = ba.iter().zip(bb).map(|(u, v)| u * v).sum();
                quad += if a == b { g * dot } else { 2.0 * g * dot };
            }
        }
        (self.response_energy - linear + quad).max(0.0)
    }
}
