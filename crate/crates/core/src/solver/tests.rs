use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffops::{build_diff_operator, RowKind};
use crate::penalty::{scad_value, ScadParams};
use crate::types::{GridShape, PenaltyKind};

fn random_dataset(shape: GridShape, p: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let covariates: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut x = vec![1.0];
            x.extend((1..p).map(|_| rng.random_range(0.0..2.0)));
            x
        })
        .collect();
    let responses = (0..n)
        .map(|_| Image::from_fn(shape, |_, _| rng.random_range(-2.0..2.0)).unwrap())
        .collect();
    Dataset::new(covariates, responses).unwrap()
}

fn dense_d(op: &DiffOperator) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(op.n_rows(), op.n_cols());
    for (i, row) in op.rows().iter().enumerate() {
        d[(i, row.plus)] += 1.0;
        if let Some(m) = row.minus {
            d[(i, m)] -= 1.0;
        }
    }
    d
}

/// `X_i = x_iᵀ ⊗ I_S`, the extended design of one subject.
fn extended_design(x: &[f64], npix: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(npix, x.len() * npix);
    for (l, xl) in x.iter().enumerate() {
        for s in 0..npix {
            m[(s, l * npix + s)] = *xl;
        }
    }
    m
}

#[test]
fn assemble_matches_dense_construction() {
    for p in [1, 2] {
        let shape = GridShape::square(2).unwrap();
        let ds = random_dataset(shape, p, 3, 17 + p as u64);
        let config = SolverConfig {
            rho: 1.3,
            ..SolverConfig::default()
        };
        let op = build_diff_operator(shape, p, config.gamma).unwrap();
        let sys = assemble(&ds, &op, &config).unwrap();
        let npix = shape.len();
        let n = ds.n() as f64;
        let d = dense_d(&op);
        let mut m = d.transpose() * &d * config.rho;
        let mut rhs = DVector::zeros(p * npix);
        for (x, y) in ds.covariates().iter().zip(ds.responses()) {
            let xi = extended_design(x, npix);
            m += xi.transpose() * &xi * (2.0 / n);
            rhs += xi.transpose() * DVector::from_column_slice(y.values()) * (2.0 / n);
        }
        for a in 0..p * npix {
            for b in 0..p * npix {
                assert!((sys.matrix().get(a, b) - m[(a, b)]).abs() < 1e-12);
            }
            assert!((sys.rhs_base()[a] - rhs[a]).abs() < 1e-12);
        }
        assert_eq!(sys.ridge(), 0.0);
    }
}

#[test]
fn coefficients_couple_only_through_the_covariate_gram() {
    let shape = GridShape::new(3, 4).unwrap();
    let ds = random_dataset(shape, 3, 6, 2);
    let op = build_diff_operator(shape, 3, 0.5).unwrap();
    let sys = assemble(&ds, &op, &SolverConfig::default()).unwrap();
    let npix = shape.len();
    for (r, c, v) in sys.matrix().iter() {
        if r / npix != c / npix {
            assert_eq!(r % npix, c % npix);
            let (a, b) = (r / npix, c / npix);
            assert!((v - 2.0 * ds.gram()[a * 3 + b]).abs() < 1e-12);
        }
    }
}

#[test]
fn vanishing_rho_gives_the_mean_image() {
    let shape = GridShape::new(4, 3).unwrap();
    let ds = random_dataset(shape, 1, 7, 4);
    let config = SolverConfig {
        rho: 1e-9,
        ..SolverConfig::default()
    };
    let op = build_diff_operator(shape, 1, 0.5).unwrap();
    let sys = assemble(&ds, &op, &config).unwrap();
    let beta = sys.solve(sys.rhs_base());
    for (s, b) in beta.iter().enumerate() {
        let mean: f64 = ds.responses().iter().map(|y| y.values()[s]).sum::<f64>() / 7.0;
        assert!((b - mean).abs() < 1e-6);
    }
}

#[test]
fn factor_reproduces_the_matrix() {
    let shape = GridShape::new(6, 5).unwrap();
    let ds = random_dataset(shape, 3, 10, 8);
    for kind in PenaltyKind::ALL {
        let config = SolverConfig::default().with_penalty(kind);
        let op = DiffOperator::for_penalty(kind, shape, 3, 0.5).unwrap();
        let sys = assemble(&ds, &op, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..sys.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = sys.solve(&v);
        assert!(sys.relative_residual(&x, &v) < 1e-8);
    }
}

#[test]
fn rank_deficient_covariates_still_factor() {
    // Duplicate covariate columns make G singular; DᵀD keeps M definite.
    let shape = GridShape::square(3).unwrap();
    let responses = vec![Image::zeros(shape); 4];
    let ds = Dataset::new(vec![vec![1.0, 1.0]; 4], responses).unwrap();
    let config = SolverConfig {
        gamma: 1.0,
        ..SolverConfig::default()
    };
    let op = build_diff_operator(shape, 2, 1.0).unwrap();
    let sys = assemble(&ds, &op, &config).unwrap();
    let x = sys.solve(&[1.0; 18]);
    assert!(sys.relative_residual(&x, &[1.0; 18]) < 1e-8);
}

#[test]
fn lambda_zero_recovers_noiseless_truth() {
    let shape = GridShape::new(5, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let truth = CoefficientField::new(
        (0..2)
            .map(|_| Image::from_fn(shape, |_, _| rng.random_range(-3.0..3.0)).unwrap())
            .collect(),
    )
    .unwrap();
    let covariates: Vec<Vec<f64>> = (0..15).map(|_| vec![1.0, rng.random_range(0.0..2.0)]).collect();
    let responses = predict(&truth, &covariates).unwrap();
    let ds = Dataset::new(covariates, responses).unwrap();
    for kind in PenaltyKind::ALL {
        let config = SolverConfig {
            lambda: 0.0,
            eps_abs: 1e-12,
            eps_rel: 1e-12,
            max_iter: 5000,
            penalty: kind,
            ..SolverConfig::default()
        };
        let r = fit(&ds, &config).unwrap();
        for (a, b) in r.beta.to_vec().iter().zip(truth.to_vec()) {
            assert!((a - b).abs() < 1e-6, "{kind}: {a} vs {b}");
        }
    }
}

#[test]
fn zero_responses_are_a_fixed_point() {
    let shape = GridShape::new(4, 4).unwrap();
    let ds = Dataset::new(vec![vec![1.0, 0.5]; 5], vec![Image::zeros(shape); 5]).unwrap();
    for kind in PenaltyKind::ALL {
        let r = fit(&ds, &SolverConfig::default().with_penalty(kind)).unwrap();
        assert!(r.converged);
        assert!(r.alpha.iter().all(|v| *v == 0.0), "{kind}");
        assert!(r.beta_sparse.to_vec().iter().all(|v| *v == 0.0));
        assert!(r.beta.to_vec().iter().all(|v| v.abs() < 1e-3));
    }
}

#[test]
fn admm_steps_are_exact() {
    let shape = GridShape::new(6, 6).unwrap();
    let ds = random_dataset(shape, 2, 8, 31);
    let config = SolverConfig {
        lambda: 0.4,
        ..SolverConfig::default()
    };
    let mut admm = Admm::new(&ds, &config).unwrap();
    let mut state = admm.initial_state(3);
    let params = ScadParams::new(config.lambda, config.a).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..15 {
        let d = admm.operator().apply(&state.beta).unwrap();
        let z: Vec<f64> = d.iter().zip(&state.eta).map(|(d, e)| d - e / config.rho).collect();
        let report = admm.step(&mut state).unwrap();
        assert!(report.solve_residual <= 1e-8);
        for _ in 0..100 {
            let r = rng.random_range(0..z.len());
            let w = admm.operator().row_weights()[r];
            let f = |t: f64| 0.5 * config.rho * (z[r] - t).powi(2) + w * scad_value(t, params);
            let best = (-40_000..=40_000)
                .map(|k| f(z[r] + k as f64 * 2.5e-4))
                .chain([f(0.0)])
                .fold(f64::INFINITY, f64::min);
            assert!(f(state.alpha[r]) <= best + 1e-10);
        }
    }
}

#[test]
fn trace_objective_matches_direct_evaluation() {
    let shape = GridShape::new(5, 4).unwrap();
    let ds = random_dataset(shape, 2, 6, 5);
    for kind in PenaltyKind::ALL {
        let config = SolverConfig {
            lambda: 0.7,
            max_iter: 7,
            penalty: kind,
            ..SolverConfig::default()
        };
        let r = fit(&ds, &config).unwrap();
        let direct = objective(&ds, &r.beta, &config).unwrap();
        let traced = *r.objective_trace.last().unwrap();
        assert!((direct - traced).abs() < 1e-9 * (1.0 + direct), "{kind}");
        assert_eq!(r.iterations, 7);
        assert!(!r.converged);
        assert_eq!(r.primal_residuals.len(), 7);
        assert_eq!(r.dual_residuals.len(), 7);
    }
}

#[test]
fn fits_are_deterministic() {
    let shape = GridShape::new(6, 5).unwrap();
    let ds = random_dataset(shape, 2, 6, 9);
    let config = SolverConfig {
        lambda: 0.5,
        seed: 77,
        ..SolverConfig::default()
    };
    let a = fit(&ds, &config).unwrap();
    let b = fit(&ds, &config).unwrap();
    assert_eq!(a, b);
    let c = fit(&ds, &SolverConfig { seed: 78, ..config }).unwrap();
    assert_ne!(a.objective_trace, c.objective_trace);
}

#[test]
fn converged_fit_is_feasible() {
    let shape = GridShape::new(8, 8).unwrap();
    let ds = random_dataset(shape, 2, 10, 12);
    let config = SolverConfig {
        lambda: 0.5,
        ..SolverConfig::default()
    };
    let r = fit(&ds, &config).unwrap();
    assert!(r.converged);
    let op = DiffOperator::for_penalty(config.penalty, shape, 2, config.gamma).unwrap();
    let d = op.apply(&r.beta.to_vec()).unwrap();
    let resid: f64 = r.alpha.iter().zip(&d).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let eps = (op.n_rows() as f64).sqrt() * config.eps_abs
        + config.eps_rel
            * r.alpha.iter().map(|v| v * v).sum::<f64>().sqrt().max(d.iter().map(|v| v * v).sum::<f64>().sqrt());
    assert!(resid <= eps);
    assert_eq!(resid, *r.primal_residuals.last().unwrap());
}

#[test]
fn predict_examples() {
    let shape = GridShape::new(3, 4).unwrap();
    let zero = CoefficientField::zeros(shape, 2);
    for y in predict(&zero, &[vec![1.0, 2.0], vec![0.3, -1.0]]).unwrap() {
        assert!(y.values().iter().all(|v| *v == 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let b0 = Image::from_fn(shape, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    let b1 = Image::from_fn(shape, |_, _| rng.random_range(-1.0..1.0)).unwrap();
    let single = CoefficientField::new(vec![b0.clone()]).unwrap();
    assert_eq!(predict(&single, &[vec![1.0]]).unwrap()[0], b0);
    let field = CoefficientField::new(vec![b0.clone(), b1.clone()]).unwrap();
    let y = &predict(&field, &[vec![1.0, 2.0]]).unwrap()[0];
    for (r, c) in [(0, 0), (1, 3), (2, 1)] {
        assert_eq!(y.get(r, c), b0.get(r, c) + 2.0 * b1.get(r, c));
    }
    assert!(predict(&field, &[vec![1.0]]).is_err());
}

#[test]
fn sparse_extraction() {
    let shape = GridShape::new(4, 5).unwrap();
    let op = build_diff_operator(shape, 2, 0.5).unwrap();
    let zero = extract_sparse_beta(&vec![0.0; op.n_rows()], &op).unwrap();
    assert!(zero.to_vec().iter().all(|v| *v == 0.0));
    let alpha = op.apply(&vec![-1.75; op.n_cols()]).unwrap();
    let back = extract_sparse_beta(&alpha, &op).unwrap();
    assert!(back.to_vec().iter().all(|v| *v == -1.75));
    // Entries only in gradient rows do not leak into the values.
    let grad_only: Vec<f64> = op
        .row_kinds()
        .iter()
        .map(|k| if *k == RowKind::Gradient { 3.0 } else { 0.0 })
        .collect();
    assert!(extract_sparse_beta(&grad_only, &op).unwrap().to_vec().iter().all(|v| *v == 0.0));
    assert!(extract_sparse_beta(&alpha[1..], &op).is_err());
}
