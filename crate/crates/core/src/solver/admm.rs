use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::system::{assemble, NormalSystem};
use super::extract_sparse_beta;
use crate::diffops::DiffOperator;
use crate::error::{Error, Result};
use crate::penalty::{scad2tv_value, separable_value, threshold_rows_in_place, ScadParams};
use crate::types::{CoefficientField, Dataset, FitResult, PenaltyKind, SolverConfig};

/// Iterates of one ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eta: Vec<f64>,
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// What one iteration produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub objective: f64,
    pub solve_residual: f64,
}

impl StepReport {
    pub fn converged(&self) -> bool {
        self.primal_residual <= self.eps_primal && self.dual_residual <= self.eps_dual
    }
}

/// A dataset bound to its operator and factored normal system.
#[derive(Debug)]
pub struct Admm {
    config: SolverConfig,
    params: ScadParams,
    op: DiffOperator,
    system: NormalSystem,
    shape: crate::types::GridShape,
    // scratch
    d_beta: Vec<f64>,
    rhs: Vec<f64>,
    tmp_cols: Vec<f64>,
    alpha_prev: Vec<f64>,
}

impl Admm {
    pub fn new(dataset: &Dataset, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let op = DiffOperator::for_penalty(config.penalty, dataset.shape(), dataset.p(), config.gamma)?;
        let system = assemble(dataset, &op, config)?;
        let params = ScadParams::from_config(config)?;
        Ok(Self {
            config: *config,
            params,
            d_beta: vec![0.0; op.n_rows()],
            rhs: vec![0.0; op.n_cols()],
            tmp_cols: vec![0.0; op.n_cols()],
            alpha_prev: vec![0.0; op.n_rows()],
            op,
            system,
            shape: dataset.shape(),
        })
    }

    pub fn operator(&self) -> &DiffOperator {
        &self.op
    }

    pub fn system(&self) -> &NormalSystem {
        &self.system
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// `beta ~ U(0,1)` i.i.d. from `seed`, `alpha = D beta`, `eta = 0`.
    pub fn initial_state(&self, seed: u64) -> AdmmState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta: Vec<f64> = (0..self.op.n_cols()).map(|_| rng.random::<f64>()).collect();
        let mut alpha = vec![0.0; self.op.n_rows()];
        self.op.apply_into(&beta, &mut alpha);
        AdmmState {
            beta,
            alpha,
            eta: vec![0.0; self.op.n_rows()],
            iteration: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
        }
    }

    /// Full objective: least squares plus penalty, at a coefficient vector.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        let data = self.system.data_term(beta);
        let pen = match self.config.penalty {
            PenaltyKind::Scad2tv => {
                let d = self.op.apply(beta).expect("length checked by caller");
                scad2tv_value(&d, &self.op, self.params)
            }
            kind => {
                let field = CoefficientField::from_vec(beta, self.shape, self.op.p()).expect("consistent length");
                separable_value(&field, kind, self.config.lambda, self.config.gamma)
            }
        };
        data + pen
    }

    /// One iteration in the order alpha, beta, eta.
    pub fn step(&mut self, state: &mut AdmmState) -> Result<StepReport> {
        let rho = self.config.rho;
        self.alpha_prev.copy_from_slice(&state.alpha);

        // alpha = prox(D beta - eta / rho)
        self.op.apply_into(&state.beta, &mut self.d_beta);
        for ((a, d), e) in state.alpha.iter_mut().zip(&self.d_beta).zip(&state.eta) {
            *a = d - e / rho;
        }
        threshold_rows_in_place(&mut state.alpha, &self.op, &self.config, self.params);

        // beta = M^{-1} (rhs_base + D^T eta + rho D^T alpha)
        for ((t, e), a) in self.d_beta.iter_mut().zip(&state.eta).zip(&state.alpha) {
            *t = e + rho * a;
        }
        self.op.apply_adjoint_into(&self.d_beta, &mut self.rhs);
        for (r, b) in self.rhs.iter_mut().zip(self.system.rhs_base()) {
            *r += b;
        }
        state.beta = self.system.solve(&self.rhs);
        let solve_residual = self.system.relative_residual(&state.beta, &self.rhs);

        // eta += rho (alpha - D beta); r = alpha - D beta
        self.op.apply_into(&state.beta, &mut self.d_beta);
        let mut r2 = 0.0;
        for ((e, a), d) in state.eta.iter_mut().zip(&state.alpha).zip(&self.d_beta) {
            let r = a - d;
            r2 += r * r;
            *e += rho * r;
        }

        // s = rho D^T (alpha - alpha_prev)
        for (p, a) in self.alpha_prev.iter_mut().zip(&state.alpha) {
            *p = a - *p;
        }
        self.op.apply_adjoint_into(&self.alpha_prev, &mut self.tmp_cols);
        let s2: f64 = self.tmp_cols.iter().map(|v| v * v).sum::<f64>() * rho * rho;

        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.op.apply_adjoint_into(&state.eta, &mut self.tmp_cols);
        let eps_primal = (self.op.n_rows() as f64).sqrt() * self.config.eps_abs
            + self.config.eps_rel * norm(&state.alpha).max(norm(&self.d_beta));
        let eps_dual =
            (self.op.n_cols() as f64).sqrt() * self.config.eps_abs + self.config.eps_rel * norm(&self.tmp_cols);

        state.iteration += 1;
        state.primal_residual = r2.sqrt();
        state.dual_residual = s2.sqrt();
        let objective = self.objective(&state.beta);
        Ok(StepReport {
            primal_residual: state.primal_residual,
            dual_residual: state.dual_residual,
            eps_primal,
            eps_dual,
            objective,
            solve_residual,
        })
    }

    /// Runs to convergence or `max_iter` from the seeded initial state.
    pub fn run(&mut self, seed: u64) -> Result<FitResult> {
        let mut state = self.initial_state(seed);
        let mut primal = Vec::new();
        let mut dual = Vec::new();
        let mut objective = Vec::new();
        let mut solves = Vec::new();
        let mut converged = false;
        while state.iteration < self.config.max_iter {
            let report = self.step(&mut state)?;
            primal.push(report.primal_residual);
            dual.push(report.dual_residual);
            objective.push(report.objective);
            solves.push(report.solve_residual);
            let finite = report.primal_residual.is_finite()
                && report.dual_residual.is_finite()
                && report.objective.is_finite();
            if !finite || state.beta.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    iteration: state.iteration,
                    primal_residuals: primal,
                    dual_residuals: dual,
                });
            }
            if report.converged() {
                converged = true;
                break;
            }
        }
        let p = self.op.p();
        Ok(FitResult {
            beta: CoefficientField::from_vec(&state.beta, self.shape, p)?,
            beta_sparse: extract_sparse_beta(&state.alpha, &self.op)?,
            alpha: state.alpha,
            iterations: state.iteration,
            primal_residuals: primal,
            dual_residuals: dual,
            objective_trace: objective,
            solve_residuals: solves,
            converged,
            ridge: self.system.ridge(),
            tiles: Vec::new(),
        })
    }
}

/// Fits the image-on-scalar model with ADMM.
pub fn fit(dataset: &Dataset, config: &SolverConfig) -> Result<FitResult> {
    Admm::new(dataset, config)?.run(config.seed)
}
