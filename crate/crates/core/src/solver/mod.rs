//! Per-class smoothing subproblem
//!
//! ```text
//! min_u  β/2 ‖û_S - u‖² + α/2 uᵀ L_S u + α uᵀ L_3 ū + ‖A_S u + H‖₁
//! ```
//!
//! solved by the accelerated primal-dual method: a dual projection onto the
//! unit ℓ∞ ball, a primal step that is an SPD linear solve (conjugate
//! gradient), and an extrapolation whose weight follows the strong-convexity
//! schedule `θ = 1/√(1 + βτ)`, `τ ← θτ`, `σ ← σ/θ`.

pub mod cg;
mod prox;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DataSplit, GradientOp, LaplacianSplit};
use crate::sparse::CsrMatrix;

pub use prox::{prox_f_star, prox_g, ProxG};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    /// Weight of the Dirichlet (Laplacian) term.
    pub alpha: f64,
    /// Weight of the fidelity term; also the strong-convexity modulus.
    pub beta: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// How the initial step sizes are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StepRule {
    /// `τ₀ = σ₀ = 0.99 / (N √(k-1))`, from the worst-case operator norm bound.
    Theorem,
    /// `τ₀ = σ₀ = 0.99 / ‖A_S‖` with the norm estimated by power iteration.
    Power { iters: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when `‖x⁺ - x‖ / max(1, ‖x‖)` drops to this value.
    pub rel_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub step: StepRule,
    /// Use the exact test block `L_S + L_1` instead of `L_S`.
    pub exact_laplacian_block: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 300,
            rel_tol: 1e-6,
            cg_tol: 1e-8,
            cg_max_iters: 200,
            step: StepRule::Power { iters: 100 },
            exact_laplacian_block: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.rel_tol >= 0.0 && self.cg_tol >= 0.0) {
            return Err(Error::invalid("tolerances must be non-negative"));
        }
        if self.cg_max_iters == 0 {
            return Err(Error::invalid("cg_max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Initial `(τ₀, σ₀)`.
///
/// `op_norm` is only read in power mode; `n` and `k` only in theorem mode.
pub fn step_size_init(op_norm: f64, rule: StepRule, n: usize, k: usize) -> (f64, f64) {
    let norm = match rule {
        StepRule::Theorem => n as f64 * ((k.max(2) - 1) as f64).sqrt(),
        StepRule::Power { .. } => op_norm,
    };
    let step = if norm > 0.0 { 0.99 / norm } else { 1.0 };
    (step, step)
}

/// One step of the acceleration schedule, returning `(θ, τ⁺, σ⁺)`.
pub fn acceleration_update(tau: f64, sigma: f64, beta: f64) -> (f64, f64, f64) {
    let theta = 1.0 / (1.0 + beta * tau).sqrt();
    (theta, theta * tau, sigma / theta)
}

/// Diagnostics for one primal-dual iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterRecord {
    pub class: usize,
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
    pub tau: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative primal change of the last iteration.
    pub last_change: f64,
    pub cg_iterations: usize,
    pub tau0: f64,
    pub sigma0: f64,
}

/// Objective of the per-class subproblem.
#[allow(clippy::too_many_arguments)]
pub fn objective_value(
    u_s: &[f64],
    params: ModelParams,
    quad: &CsrMatrix,
    l3: &CsrMatrix,
    grad: &GradientOp,
    u_hat_s: &[f64],
    u_bar: &[f64],
    class: usize,
) -> f64 {
    let fidelity: f64 = u_s
        .iter()
        .zip(u_hat_s)
        .map(|(u, h)| (u - h) * (u - h))
        .sum();
    let l3_ubar = l3.mul_vec(u_bar);
    let coupling: f64 = u_s.iter().zip(&l3_ubar).map(|(u, c)| u * c).sum();
    let tv: f64 = grad.apply_with_offset(u_s, class).iter().map(|v| v.abs()).sum();
    0.5 * params.beta * fidelity + 0.5 * params.alpha * quad.quadratic_form(u_s) + params.alpha * coupling + tv
}

/// Shared, read-only state for the `K` per-class subproblems of one split.
#[derive(Clone, Debug)]
pub struct Smoother<'a> {
    grad: &'a GradientOp,
    l3: &'a CsrMatrix,
    quad: CsrMatrix,
    train_indicators: Vec<Vec<f64>>,
    op_norm: f64,
    n: usize,
    k: usize,
}

impl<'a> Smoother<'a> {
    pub fn new(
        lap: &'a LaplacianSplit,
        grad: &'a GradientOp,
        split: &DataSplit,
        n: usize,
        k: usize,
        cfg: &SolverConfig,
    ) -> Self {
        let op_norm = match cfg.step {
            StepRule::Power { iters } => grad.operator_norm_estimate(iters, 0),
            StepRule::Theorem => grad.norm_bound(),
        };
        Smoother {
            grad,
            l3: lap.l3(),
            quad: lap.quadratic_block(cfg.exact_laplacian_block),
            train_indicators: (0..split.num_classes()).map(|c| split.train_indicator(c)).collect(),
            op_norm,
            n,
            k,
        }
    }

    pub fn num_test(&self) -> usize {
        self.grad.num_test()
    }

    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn quadratic_block(&self) -> &CsrMatrix {
        &self.quad
    }

    pub fn objective(&self, class: usize, u_s: &[f64], u_hat_s: &[f64], params: ModelParams) -> f64 {
        objective_value(
            u_s,
            params,
            &self.quad,
            self.l3,
            self.grad,
            u_hat_s,
            &self.train_indicators[class],
            class,
        )
    }

    /// Runs the primal-dual iteration for one class, starting from `start`
    /// (defaults to `û_S`). `observer` receives one record per iteration.
    pub fn solve(
        &self,
        class: usize,
        u_hat_s: &[f64],
        params: ModelParams,
        cfg: &SolverConfig,
        start: Option<&[f64]>,
        mut observer: Option<&mut dyn FnMut(&IterRecord)>,
    ) -> Result<SolveReport> {
        params.validate()?;
        cfg.validate()?;
        let ns = self.num_test();
        if u_hat_s.len() != ns {
            return Err(Error::invalid(format!(
                "initial labeling has {} test entries, expected {ns}",
                u_hat_s.len()
            )));
        }
        let m = self.grad.dual_len();
        let h = self.grad.offset(class);
        let prox = ProxG::new(&self.quad, self.l3, u_hat_s, &self.train_indicators[class], params);

        let (tau0, sigma0) = step_size_init(self.op_norm, cfg.step, self.n, self.k);
        let (mut tau, mut sigma) = (tau0, sigma0);

        let mut x: Vec<f64> = match start {
            Some(s) if s.len() == ns => s.to_vec(),
            Some(s) => {
                return Err(Error::invalid(format!("start vector has {} entries, expected {ns}", s.len())))
            }
            None => u_hat_s.to_vec(),
        };
        let mut z = x.clone();
        let mut p = vec![0.0; m];
        let mut az = vec![0.0; m];
        let mut atp = vec![0.0; ns];
        let mut v = vec![0.0; ns];
        let mut x_next = x.clone();

        let mut iterations = 0;
        let mut converged = ns == 0;
        let mut last_change = 0.0;
        let mut cg_iterations = 0;

        while !converged && iterations < cfg.max_iters {
            // dual ascent + projection onto the unit ℓ∞ ball
            self.grad.apply_into(&z, &mut az);
            for e in 0..m {
                p[e] = (p[e] + sigma * (az[e] + h[e])).clamp(-1.0, 1.0);
            }
            // primal descent + quadratic prox
            self.grad.adjoint_into(&p, &mut atp);
            for i in 0..ns {
                v[i] = x[i] - tau * atp[i];
            }
            x_next.copy_from_slice(&x);
            cg_iterations += prox.solve_into(&v, tau, cfg.cg_tol, cfg.cg_max_iters, &mut x_next)?.iterations;

            let (theta, tau_next, sigma_next) = acceleration_update(tau, sigma, params.beta);
            let mut diff2 = 0.0;
            let mut norm2 = 0.0;
            for i in 0..ns {
                let d = x_next[i] - x[i];
                diff2 += d * d;
                norm2 += x[i] * x[i];
                z[i] = x_next[i] + theta * d;
            }
            last_change = diff2.sqrt() / norm2.sqrt().max(1.0);
            std::mem::swap(&mut x, &mut x_next);
            tau = tau_next;
            sigma = sigma_next;
            iterations += 1;
            converged = last_change <= cfg.rel_tol;

            if let Some(obs) = observer.as_mut() {
                obs(&IterRecord {
                    class,
                    iter: iterations,
                    objective: self.objective(class, &x, u_hat_s, params),
                    residual: last_change,
                    tau,
                    sigma,
                });
            }
        }

        Ok(SolveReport {
            solution: x,
            iterations,
            converged,
            last_change,
            cg_iterations,
            tau0,
            sigma0,
        })
    }
}
