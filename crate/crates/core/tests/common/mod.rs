//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use regionscad::{Dataset, GridShape, Image};

pub fn scad(t: f64, lambda: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        lambda * lambda * (a + 1.0) / 2.0
    }
}

/// Minimizer of `ρ/2 (z - θ)² + w SCAD(θ)`.
///
/// Scans a grid over `[-5aλ, 5aλ]` with step 1e-4, adds the stationary point
/// of each quadratic piece clipped to that piece and the piece boundaries,
/// then polishes the best point by golden-section search.
pub fn prox_oracle(z: f64, rho: f64, w: f64, lambda: f64, a: f64) -> f64 {
    let f = |t: f64| 0.5 * rho * (z - t).powi(2) + w * scad(t, lambda, a);
    let bound = 5.0 * a * lambda;
    let steps = (2.0 * bound / 1e-4).round() as i64;
    let mut best = (f(0.0), 0.0);
    for k in 0..=steps {
        let t = -bound + k as f64 * 1e-4;
        let v = f(t);
        if v < best.0 {
            best = (v, t);
        }
    }
    let mut candidates = vec![0.0, z, lambda, -lambda, a * lambda, -a * lambda];
    for sign in [1.0, -1.0] {
        // |t| <= λ: ρ(t - z) + wλ·sign = 0
        candidates.push((z - sign * w * lambda / rho).clamp(-lambda, lambda));
        // λ < |t| <= aλ: ρ(t - z) + w(aλ·sign - t)/(a - 1) = 0
        let denom = rho - w / (a - 1.0);
        if denom != 0.0 {
            let t = (rho * z - w * a * lambda * sign / (a - 1.0)) / denom;
            candidates.push(sign * (sign * t).clamp(lambda, a * lambda));
        }
    }
    for t in candidates {
        let v = f(t);
        if v < best.0 || (v == best.0 && t.abs() < best.1.abs()) {
            best = (v, t);
        }
    }
    let (mut lo, mut hi) = (best.1 - 1e-4, best.1 + 1e-4);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let polished = 0.5 * (lo + hi);
    // Accept the polish only when it is lower beyond rounding.
    if f(polished) < best.0 - 1e-12 * (1.0 + best.0.abs()) {
        best.1 = polished;
    }
    best.1
}

/// A 2x2, single-coefficient instance: pixels are 0 or `level`, responses
/// add Gaussian noise.
pub fn tiny_instance(seed: u64, n: usize, level: f64, sigma: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = GridShape::square(2).unwrap();
    let truth: Vec<f64> = (0..4).map(|_| if rng.random_bool(0.5) { level } else { 0.0 }).collect();
    let noise = Normal::new(0.0, sigma).unwrap();
    let responses = (0..n)
        .map(|_| Image::new(shape, truth.iter().map(|b| b + noise.sample(&mut rng)).collect()).unwrap())
        .collect();
    Dataset::new(vec![vec![1.0]; n], responses).unwrap()
}

fn data_term(ds: &Dataset, b: &[f64]) -> f64 {
    ds.responses()
        .iter()
        .map(|y| y.values().iter().zip(b).map(|(y, b)| (y - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / ds.n() as f64
}

/// Least squares plus the region penalty on a 2x2 grid, pixels row-major
/// `[b11, b12, b21, b22]`, written out group by group.
pub fn scad2tv_objective_2x2(ds: &Dataset, b: &[f64], lambda: f64, gamma: f64, a: f64) -> f64 {
    let s = |t: f64| scad(t, lambda, a);
    let grad = s(b[2] - b[0]) + s(b[1] - b[0]) + s(b[3] - b[1]) + s(b[3] - b[2]);
    let vals = s(b[0]) + s(b[2]) + s(b[1]) + s(b[1]) + s(b[3]) + s(b[2]) + s(b[3]);
    data_term(ds, b) + gamma * grad + (1.0 - gamma) * vals
}

/// Least squares plus `λ(γ TV + (1 - γ) ℓ1)` on a 2x2 grid.
pub fn tvl1_objective_2x2(ds: &Dataset, b: &[f64], lambda: f64, gamma: f64) -> f64 {
    let tv = (b[2] - b[0]).abs() + (b[1] - b[0]).abs() + (b[3] - b[1]).abs() + (b[3] - b[2]).abs();
    let l1: f64 = b.iter().map(|v| v.abs()).sum();
    data_term(ds, b) + lambda * (gamma * tv + (1.0 - gamma) * l1)
}

struct Cost<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Cost<F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok((self.0)(p))
    }
}

/// Best value over `starts` Nelder-Mead runs from uniform points in
/// `[-range, range]^dim`, each restarted once from its own optimum.
pub fn nelder_mead_best(f: impl Fn(&[f64]) -> f64, dim: usize, starts: usize, range: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = Cost(f);
    let run = |x0: Vec<f64>, scale: f64, cost: &Cost<_>| -> (f64, Vec<f64>) {
        let mut simplex = vec![x0.clone()];
        for d in 0..dim {
            let mut v = x0.clone();
            v[d] += scale;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).unwrap();
        let res = Executor::new(Cost(&cost.0), solver)
            .configure(|s| s.max_iters(4000))
            .run()
            .unwrap();
        let st = res.state();
        (st.best_cost, st.best_param.clone().unwrap())
    };
    let mut best = f64::INFINITY;
    for _ in 0..starts {
        let x0: Vec<f64> = (0..dim).map(|_| rng.random_range(-range..range)).collect();
        let (v, x) = run(x0, 0.5, &cost);
        let (v2, _) = run(x, 0.05, &cost);
        best = best.min(v).min(v2);
    }
    best
}

/// Subgradient descent with steps `c / sqrt(k + 1)`; returns the best value
/// seen.
pub fn subgradient_best(f: impl Fn(&[f64]) -> f64, subgrad: impl Fn(&[f64]) -> Vec<f64>, x0: Vec<f64>, iters: usize, c: f64) -> f64 {
    let mut x = x0;
    let mut best = f(&x);
    for k in 0..iters {
        let g = subgrad(&x);
        let step = c / ((k + 1) as f64).sqrt();
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        best = best.min(f(&x));
    }
    best
}

/// A subgradient of [`tvl1_objective_2x2`].
pub fn tvl1_subgradient_2x2(ds: &Dataset, b: &[f64], lambda: f64, gamma: f64) -> Vec<f64> {
    let n = ds.n() as f64;
    let mut g = vec![0.0; 4];
    for y in ds.responses() {
        for (s, gs) in g.iter_mut().enumerate() {
            *gs -= 2.0 * (y.values()[s] - b[s]) / n;
        }
    }
    for (i, j) in [(2, 0), (1, 0), (3, 1), (3, 2)] {
        let sg = (b[i] - b[j]).signum() * lambda * gamma;
        g[i] += sg;
        g[j] -= sg;
    }
    for (gs, bs) in g.iter_mut().zip(b) {
        *gs += bs.signum() * lambda * (1.0 - gamma);
    }
    g
}
