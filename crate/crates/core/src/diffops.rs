//! Discrete gradient, anisotropic TV, and the sparse penalty operator `D`.
//!
//! `D` maps the coefficient-major vector of all `p` coefficient images to the
//! coordinates the penalty acts on. Every row has either two nonzeros
//! (`+1` at a neighbour, `-1` at the pixel: a forward difference) or one
//! nonzero (`+1`: a pixel value). The penalty weights are stored per row and
//! never folded into the `±1` entries.

use crate::error::{Error, Result};
use crate::types::{GridShape, Image, PenaltyKind};

/// Forward differences with zeroed boundary components.
///
/// `down[s]` is `beta[j+1,k] - beta[j,k]` (zero on the last row) and
/// `right[s]` is `beta[j,k+1] - beta[j,k]` (zero on the last column).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub shape: GridShape,
    pub down: Vec<f64>,
    pub right: Vec<f64>,
}

impl GradientField {
    /// The pair `(∇β)_{jk}` at the 0-indexed pixel.
    pub fn at(&self, row: usize, col: usize) -> (f64, f64) {
        let s = self.shape.index(row, col);
        (self.down[s], self.right[s])
    }

    pub fn l1_norm(&self) -> f64 {
        self.down.iter().chain(&self.right).map(|v| v.abs()).sum()
    }

    pub fn squared_l2_norm(&self) -> f64 {
        self.down.iter().chain(&self.right).map(|v| v * v).sum()
    }
}

pub fn gradient(image: &Image) -> GradientField {
    let shape = image.shape();
    let (nr, nc) = (shape.rows(), shape.cols());
    let v = image.values();
    let mut down = vec![0.0; shape.len()];
    let mut right = vec![0.0; shape.len()];
    for r in 0..nr {
        for c in 0..nc {
            let s = r * nc + c;
            if r + 1 < nr {
                down[s] = v[s + nc] - v[s];
            }
            if c + 1 < nc {
                right[s] = v[s + 1] - v[s];
            }
        }
    }
    GradientField { shape, down, right }
}

/// Anisotropic total variation `sum_{jk} ||(∇β)_{jk}||_1`.
pub fn tv_norm(image: &Image) -> f64 {
    gradient(image).l1_norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Gradient,
    Value,
}

/// How rows are laid out over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// One group per pixel: up to two differences plus the values of the
    /// pixel and its lower and right neighbours.
    Grouped,
    /// Each difference once, each pixel value once.
    Separable,
    /// Pixel values only (`D = I`).
    ValuesOnly,
}

/// One row of `D`: `+1` at `plus`, `-1` at `minus` when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpRow {
    pub plus: usize,
    pub minus: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffOperator {
    shape: GridShape,
    p: usize,
    gamma: f64,
    layout: Layout,
    rows: Vec<OpRow>,
    kinds: Vec<RowKind>,
    weights: Vec<f64>,
}

/// The grouped operator whose rows enumerate every pixel's
/// `(differences, neighbourhood values)` group.
pub fn build_diff_operator(shape: GridShape, p: usize, gamma: f64) -> Result<DiffOperator> {
    DiffOperator::build(Layout::Grouped, shape, p, gamma)
}

impl DiffOperator {
    /// The operator a given penalty is split over.
    pub fn for_penalty(kind: PenaltyKind, shape: GridShape, p: usize, gamma: f64) -> Result<Self> {
        let layout = match kind {
            PenaltyKind::Scad2tv => Layout::Grouped,
            PenaltyKind::Tvl1 => Layout::Separable,
            PenaltyKind::Graphnet => Layout::ValuesOnly,
        };
        Self::build(layout, shape, p, gamma)
    }

    pub fn build(layout: Layout, shape: GridShape, p: usize, gamma: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("p", "need at least one coefficient"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid("gamma", format!("{gamma} is outside [0, 1]")));
        }
        let mut op = DiffOperator {
            shape,
            p,
            gamma,
            layout,
            rows: Vec::new(),
            kinds: Vec::new(),
            weights: Vec::new(),
        };
        let (nr, nc) = (shape.rows(), shape.cols());
        let npix = shape.len();
        for l in 0..p {
            let base = l * npix;
            for r in 0..nr {
                for c in 0..nc {
                    let s = base + r * nc + c;
                    let has_down = r + 1 < nr;
                    let has_right = c + 1 < nc;
                    match layout {
                        Layout::Grouped => {
                            if !has_down && !has_right {
                                continue;
                            }
                            if has_down {
                                op.push_gradient(s + nc, s);
                            }
                            if has_right {
                                op.push_gradient(s + 1, s);
                            }
                            op.push_value(s);
                            if has_down {
                                op.push_value(s + nc);
                            }
                            if has_right {
                                op.push_value(s + 1);
                            }
                        }
                        Layout::Separable => {
                            if has_down {
                                op.push_gradient(s + nc, s);
                            }
                            if has_right {
                                op.push_gradient(s + 1, s);
                            }
                            op.push_value(s);
                        }
                        Layout::ValuesOnly => op.push_value(s),
                    }
                }
            }
        }
        Ok(op)
    }

    fn push_gradient(&mut self, plus: usize, minus: usize) {
        self.rows.push(OpRow {
            plus,
            minus: Some(minus),
        });
        self.kinds.push(RowKind::Gradient);
        self.weights.push(self.gamma);
    }

    fn push_value(&mut self, at: usize) {
        self.rows.push(OpRow { plus: at, minus: None });
        self.kinds.push(RowKind::Value);
        self.weights.push(1.0 - self.gamma);
    }

    #[inline]
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Length of the coefficient vector, `p * rows * cols`.
    #[inline]
    pub fn n_cols(&self) -> usize {
        self.p * self.shape.len()
    }

    pub fn rows(&self) -> &[OpRow] {
        &self.rows
    }

    pub fn row_kinds(&self) -> &[RowKind] {
        &self.kinds
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Closed-form row count of the grouped layout.
    pub fn grouped_row_count(shape: GridShape, p: usize) -> usize {
        let (r, c) = (shape.rows() - 1, shape.cols() - 1);
        p * (5 * r * c + 3 * r + 3 * c)
    }

    pub fn apply(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_cols(), beta.len())?;
        let mut out = vec![0.0; self.n_rows()];
        self.apply_into(beta, &mut out);
        Ok(out)
    }

    pub fn apply_adjoint(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_rows(), alpha.len())?;
        let mut out = vec![0.0; self.n_cols()];
        self.apply_adjoint_into(alpha, &mut out);
        Ok(out)
    }

    /// `out = D beta`; lengths are the caller's responsibility.
    pub(crate) fn apply_into(&self, beta: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = match row.minus {
                Some(m) => beta[row.plus] - beta[m],
                None => beta[row.plus],
            };
        }
    }

    /// `out = D^T alpha`; lengths are the caller's responsibility.
    pub(crate) fn apply_adjoint_into(&self, alpha: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (a, row) in alpha.iter().zip(&self.rows) {
            out[row.plus] += a;
            if let Some(m) = row.minus {
                out[m] -= a;
            }
        }
    }

    /// `D^T D` as a symmetric sparse matrix.
    pub fn gram(&self) -> SparseMatrix {
        self.gram_of(|_| true)
    }

    /// `∇^T ∇` over the gradient rows only, for every coefficient block.
    pub fn gradient_gram(&self) -> SparseMatrix {
        self.gram_of(|k| k == RowKind::Gradient)
    }

    fn gram_of(&self, keep: impl Fn(RowKind) -> bool) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.n_rows() * 4);
        for (row, kind) in self.rows.iter().zip(&self.kinds) {
            if !keep(*kind) {
                continue;
            }
            match row.minus {
                Some(m) => {
                    triplets.push((row.plus, row.plus, 1.0));
                    triplets.push((m, m, 1.0));
                    triplets.push((row.plus, m, -1.0));
                    triplets.push((m, row.plus, -1.0));
                }
                None => triplets.push((row.plus, row.plus, 1.0)),
            }
        }
        SparseMatrix::from_triplets(self.n_cols(), self.n_cols(), triplets)
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Compressed sparse row matrix with sorted, deduplicated columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.indptr[row]..self.indptr[row + 1];
        match self.indices[span.clone()].binary_search(&col) {
            Ok(k) => self.data[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` over stored entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.data[k]))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.matvec_into(x, &mut out);
        out
    }

    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            dense[r][c] += v;
        }
        dense
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::vectorize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(r: usize, c: usize) -> GridShape {
        GridShape::new(r, c).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dense_d(op: &DiffOperator) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; op.n_cols()]; op.n_rows()];
        for (i, row) in op.rows().iter().enumerate() {
            d[i][row.plus] += 1.0;
            if let Some(m) = row.minus {
                d[i][m] -= 1.0;
            }
        }
        d
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let im = Image::from_fn(shape(4, 5), |_, _| 3.5).unwrap();
        let g = gradient(&im);
        assert!(g.down.iter().chain(&g.right).all(|v| *v == 0.0));
        assert_eq!(tv_norm(&im), 0.0);
    }

    #[test]
    fn gradient_two_by_two_case_table() {
        let im = Image::new(shape(2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = gradient(&im);
        assert_eq!(g.at(0, 0), (2.0, 1.0));
        assert_eq!(g.at(0, 1), (2.0, 0.0));
        assert_eq!(g.at(1, 0), (0.0, 1.0));
        assert_eq!(g.at(1, 1), (0.0, 0.0));
        assert_eq!(tv_norm(&im), 6.0);
    }

    #[test]
    fn gradient_of_vertical_step() {
        let c = 2.5;
        let im = Image::from_fn(shape(6, 6), |_, col| if col >= 3 { c } else { 0.0 }).unwrap();
        let g = gradient(&im);
        for r in 0..6 {
            for col in 0..6 {
                let (d, rt) = g.at(r, col);
                assert_eq!(d, 0.0);
                assert_eq!(rt, if col == 2 { c } else { 0.0 });
            }
        }
    }

    #[test]
    fn single_interior_pixel_has_tv_four_v() {
        let v = -1.75;
        let im = Image::from_fn(shape(9, 9), |r, c| if (r, c) == (4, 4) { v } else { 0.0 }).unwrap();
        assert_eq!(tv_norm(&im), 4.0 * v.abs());
    }

    #[test]
    fn row_counts() {
        let op = build_diff_operator(GridShape::square(3).unwrap(), 1, 0.5).unwrap();
        assert_eq!(op.n_rows(), 32);
        assert_eq!(op.n_cols(), 9);
        let op = build_diff_operator(GridShape::square(2).unwrap(), 1, 0.5).unwrap();
        assert_eq!(op.n_rows(), 11);
        for n in 2..=16 {
            for p in 1..=3 {
                let op = build_diff_operator(GridShape::square(n).unwrap(), p, 0.3).unwrap();
                assert_eq!(op.n_rows(), p * (5 * (n - 1) * (n - 1) + 6 * (n - 1)));
            }
        }
        for (r, c) in [(2, 7), (5, 3), (10, 4)] {
            let op = build_diff_operator(shape(r, c), 2, 0.3).unwrap();
            assert_eq!(op.n_rows(), DiffOperator::grouped_row_count(shape(r, c), 2));
            assert_eq!(op.n_rows(), 2 * (5 * (r - 1) * (c - 1) + 3 * (r - 1) + 3 * (c - 1)));
        }
    }

    #[test]
    fn two_by_two_groups_enumerate_five_three_three() {
        let op = build_diff_operator(shape(2, 2), 1, 0.5).unwrap();
        use RowKind::*;
        let expected_kinds = [
            Gradient, Gradient, Value, Value, Value, // (1,1)
            Gradient, Value, Value, // (1,2)
            Gradient, Value, Value, // (2,1)
        ];
        assert_eq!(op.row_kinds(), expected_kinds);
        let rows = op.rows();
        assert_eq!(rows[0], OpRow { plus: 2, minus: Some(0) });
        assert_eq!(rows[1], OpRow { plus: 1, minus: Some(0) });
        assert_eq!(rows[5], OpRow { plus: 3, minus: Some(1) });
        assert_eq!(rows[8], OpRow { plus: 3, minus: Some(2) });
        assert!(op.row_weights().iter().all(|w| *w == 0.5));
    }

    #[test]
    fn row_structure_invariants() {
        let op = build_diff_operator(shape(5, 4), 2, 0.3).unwrap();
        let mut covered = vec![false; op.n_cols()];
        for ((row, kind), w) in op.rows().iter().zip(op.row_kinds()).zip(op.row_weights()) {
            match kind {
                RowKind::Gradient => {
                    assert!(row.minus.is_some());
                    assert_eq!(*w, 0.3);
                }
                RowKind::Value => {
                    assert!(row.minus.is_none());
                    assert!((*w - 0.7).abs() < 1e-15);
                    covered[row.plus] = true;
                }
            }
        }
        assert!(covered.iter().all(|c| *c), "every pixel appears in a value row");
    }

    #[test]
    fn apply_constant_on_three_by_three() {
        let op = build_diff_operator(GridShape::square(3).unwrap(), 1, 0.5).unwrap();
        let d = op.apply(&[1.25; 9]).unwrap();
        for (v, kind) in d.iter().zip(op.row_kinds()) {
            match kind {
                RowKind::Gradient => assert_eq!(*v, 0.0),
                RowKind::Value => assert_eq!(*v, 1.25),
            }
        }
        assert!(op.apply(&[0.0; 9]).unwrap().iter().all(|v| *v == 0.0));
        assert!(op.apply(&[0.0; 8]).is_err());
        assert!(op.apply_adjoint(&[0.0; 31]).is_err());
    }

    #[test]
    fn gradient_rows_sum_to_tv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for layout in [Layout::Grouped, Layout::Separable] {
            let sh = shape(6, 7);
            let op = DiffOperator::build(layout, sh, 2, 0.5).unwrap();
            let beta = random_vec(&mut rng, op.n_cols());
            let d = op.apply(&beta).unwrap();
            for l in 0..2 {
                let im = Image::new(sh, beta[l * sh.len()..(l + 1) * sh.len()].to_vec()).unwrap();
                let lo = l * op.n_rows() / 2;
                let hi = (l + 1) * op.n_rows() / 2;
                let tv: f64 = (lo..hi)
                    .filter(|&i| op.row_kinds()[i] == RowKind::Gradient)
                    .map(|i| d[i].abs())
                    .sum();
                assert!((tv - tv_norm(&im)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_and_adjoint_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=4 {
            for layout in [Layout::Grouped, Layout::Separable, Layout::ValuesOnly] {
                let op = DiffOperator::build(layout, GridShape::square(n).unwrap(), 2, 0.4).unwrap();
                let dense = dense_d(&op);
                let x = random_vec(&mut rng, op.n_cols());
                let y = random_vec(&mut rng, op.n_rows());
                let dx = op.apply(&x).unwrap();
                let dty = op.apply_adjoint(&y).unwrap();
                for i in 0..op.n_rows() {
                    let want: f64 = (0..op.n_cols()).map(|j| dense[i][j] * x[j]).sum();
                    assert!((dx[i] - want).abs() < 1e-14);
                }
                for j in 0..op.n_cols() {
                    let want: f64 = (0..op.n_rows()).map(|i| dense[i][j] * y[i]).sum();
                    assert!((dty[j] - want).abs() < 1e-13);
                }
                let lhs: f64 = dx.iter().zip(&y).map(|(a, b)| a * b).sum();
                let rhs: f64 = x.iter().zip(&dty).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_matches_dense_and_operator_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=4 {
            let op = build_diff_operator(GridShape::square(n).unwrap(), 2, 0.5).unwrap();
            let d = dense_d(&op);
            let g = op.gram();
            let npix = n * n;
            for a in 0..op.n_cols() {
                for b in 0..op.n_cols() {
                    let want: f64 = (0..op.n_rows()).map(|i| d[i][a] * d[i][b]).sum();
                    assert_eq!(g.get(a, b), want);
                    if a / npix != b / npix {
                        assert_eq!(g.get(a, b), 0.0, "coefficient blocks must not couple");
                    }
                }
            }
            let x = random_vec(&mut rng, op.n_cols());
            let gx = g.matvec(&x);
            let dtdx = op.apply_adjoint(&op.apply(&x).unwrap()).unwrap();
            for (u, v) in gx.iter().zip(&dtdx) {
                assert!((u - v).abs() < 1e-12);
            }
            let quad: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
            let dx = op.apply(&x).unwrap();
            let norm2: f64 = dx.iter().map(|v| v * v).sum();
            assert!((quad - norm2).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_gram_diagonal() {
        // (1,1): two differences and its own value.
        // (1,2), (2,1): one difference and one value in group (1,1), plus
        // one difference and one value in their own group.
        // (2,2): two differences and two values from the neighbours' groups.
        let op = build_diff_operator(shape(2, 2), 1, 0.5).unwrap();
        let g = op.gram();
        let d = dense_d(&op);
        let diag: Vec<f64> = (0..4).map(|j| d.iter().map(|r| r[j] * r[j]).sum()).collect();
        assert_eq!(diag, vec![3.0, 4.0, 4.0, 4.0]);
        for (j, want) in diag.iter().enumerate() {
            assert_eq!(g.get(j, j), *want);
        }
    }

    #[test]
    fn layouts_for_penalties() {
        let sh = shape(4, 3);
        let sep = DiffOperator::for_penalty(PenaltyKind::Tvl1, sh, 1, 0.5).unwrap();
        assert_eq!(sep.n_rows(), 3 * 3 + 4 * 2 + 12);
        let id = DiffOperator::for_penalty(PenaltyKind::Graphnet, sh, 2, 0.5).unwrap();
        assert_eq!(id.n_rows(), 24);
        let x: Vec<f64> = (0..24).map(|i| i as f64).collect();
        assert_eq!(id.apply(&x).unwrap(), x);
        let im = Image::from_fn(sh, |r, c| (r * c) as f64).unwrap();
        assert_eq!(sep.apply(&vectorize(&im)).unwrap().len(), sep.n_rows());
    }

    #[test]
    fn invalid_gamma_rejected() {
        assert!(build_diff_operator(shape(3, 3), 1, 1.5).is_err());
        assert!(build_diff_operator(shape(3, 3), 0, 0.5).is_err());
    }
}
