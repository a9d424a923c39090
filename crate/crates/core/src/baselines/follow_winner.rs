//! Follow-the-winner strategies: EG, UP, ONS.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::backtest::{DecisionContext, Strategy};
use crate::error::Result;
use crate::portfolio::{dot, uniform_risky};

use super::simplex::project_simplex;

/// Exponentiated gradient (Helmbold et al.). Weights are kept in the log
/// domain so long runs cannot underflow; with `η = 0` the log-weights stay
/// exactly zero and the output is bitwise the uniform CRP.
#[derive(Clone, Debug)]
pub struct Eg {
    eta: f64,
    log_w: Vec<f64>,
}

impl Eg {
    pub fn new(eta: f64) -> Self {
        Self { eta, log_w: Vec::new() }
    }

    fn weights(&self) -> Vec<f64> {
        let max = self.log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.log_w.iter().map(|&l| (l - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }
}

impl Strategy for Eg {
    fn name(&self) -> String {
        "eg".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if self.log_w.is_empty() {
            // uniform over risky: cash starts (and stays) at weight zero
            self.log_w = vec![0.0; ctx.n_assets()];
            self.log_w[0] = f64::NEG_INFINITY;
            return Ok(self.weights());
        }
        let b = self.weights();
        if let Some(x) = ctx.history.last() {
            let bx = dot(&b, x);
            for (l, xi) in self.log_w.iter_mut().zip(x.iter()) {
                *l += self.eta * xi / bx;
            }
        }
        Ok(self.weights())
    }
}

/// Cover's universal portfolio, approximated by a wealth-weighted average of
/// `samples` CRPs drawn from Dirichlet(1) over all assets.
#[derive(Clone, Debug)]
pub struct Up {
    samples: usize,
    seed: u64,
    portfolios: Vec<Vec<f64>>,
    wealth: Vec<f64>,
}

impl Up {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples: samples.max(1), seed, portfolios: Vec::new(), wealth: Vec::new() }
    }

    fn init(&mut self, d: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
        self.portfolios = (0..self.samples)
            .map(|_| {
                let g: Vec<f64> = (0..d).map(|_| gamma.sample(&mut rng)).collect();
                let s: f64 = g.iter().sum();
                g.into_iter().map(|v| v / s).collect()
            })
            .collect();
        self.wealth = vec![1.0; self.samples];
    }

    fn mixture(&self) -> Vec<f64> {
        let d = self.portfolios[0].len();
        let mut out = vec![0.0; d];
        let total: f64 = self.wealth.iter().sum();
        for (p, w) in self.portfolios.iter().zip(&self.wealth) {
            for (o, pi) in out.iter_mut().zip(p) {
                *o += w * pi;
            }
        }
        for o in &mut out {
            *o /= total;
        }
        out
    }
}

impl Strategy for Up {
    fn name(&self) -> String {
        "up".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        if self.portfolios.is_empty() {
            self.init(ctx.n_assets());
            return Ok(self.mixture());
        }
        if let Some(x) = ctx.history.last() {
            let mut max: f64 = 0.0;
            for (p, w) in self.portfolios.iter().zip(self.wealth.iter_mut()) {
                *w *= dot(p, x);
                max = max.max(*w);
            }
            // rescale to keep the weights representable
            for w in &mut self.wealth {
                *w /= max;
            }
        }
        Ok(self.mixture())
    }
}

/// Online Newton step (Agarwal et al. 2006).
#[derive(Clone, Debug)]
pub struct Ons {
    eta: f64,
    beta: f64,
    delta: f64,
    a: DMatrix<f64>,
    b: DVector<f64>,
    p: Vec<f64>,
}

impl Ons {
    pub fn new(eta: f64, beta: f64, delta: f64) -> Self {
        Self { eta, beta, delta, a: DMatrix::zeros(0, 0), b: DVector::zeros(0), p: Vec::new() }
    }
}

impl Strategy for Ons {
    fn name(&self) -> String {
        "ons".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>> {
        let d = ctx.n_assets();
        if self.p.is_empty() {
            self.a = DMatrix::identity(d, d);
            self.b = DVector::zeros(d);
            self.p = uniform_risky(d);
            return Ok(self.p.clone());
        }
        if let Some(x) = ctx.history.last() {
            let px = dot(&self.p, x);
            let grad = DVector::from_iterator(d, x.iter().map(|v| v / px));
            self.a += &grad * grad.transpose();
            self.b += grad * (1.0 + 1.0 / self.beta);
            let y = self.delta * solve_spd(&self.a, &self.b);
            let q = project_in_norm(y.as_slice(), &self.a);
            self.p = q.iter().map(|v| (1.0 - self.eta) * v + self.eta / d as f64).collect();
        }
        Ok(self.p.clone())
    }
}

/// `A⁻¹ b` for symmetric positive definite `A`, adding a growing ridge if the
/// factorization fails.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut ridge = 0.0;
    loop {
        let m = if ridge > 0.0 { a + DMatrix::identity(a.nrows(), a.ncols()) * ridge } else { a.clone() };
        if let Some(ch) = m.cholesky() {
            return ch.solve(b);
        }
        ridge = if ridge == 0.0 { 1e-10 } else { ridge * 10.0 };
    }
}

/// `argmin_{p ∈ Δ} (p - y)ᵀ A (p - y)` by accelerated projected gradient.
pub fn project_in_norm(y: &[f64], a: &DMatrix<f64>) -> Vec<f64> {
    let d = y.len();
    let y = DVector::from_column_slice(y);
    let lmax = a.symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lmax;
    let mut p = DVector::from_vec(project_simplex(y.as_slice()));
    let mut z = p.clone();
    let mut t = 1.0_f64;
    for _ in 0..10_000 {
        let grad = a * (&z - &y);
        let next = DVector::from_vec(project_simplex((&z - grad * step).as_slice()));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &p) * ((t - 1.0) / t_next);
        let moved = (&next - &p).abs().sum();
        p = next;
        t = t_next;
        if moved < 1e-12 {
            break;
        }
    }
    debug_assert_eq!(p.len(), d);
    p.iter().copied().collect()
}
