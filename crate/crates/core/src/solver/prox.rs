use super::cg::{pcg, CgOutcome};
use super::ModelParams;
use crate::error::Result;
use crate::sparse::CsrMatrix;

/// Resolvent of the dual term: the entrywise projection of `x̃ + σH` onto
/// `[-1, 1]`.
pub fn prox_f_star(x_tilde: &[f64], sigma: f64, h: &[f64]) -> Vec<f64> {
    assert_eq!(x_tilde.len(), h.len());
    x_tilde
        .iter()
        .zip(h)
        .map(|(x, h)| (x + sigma * h).clamp(-1.0, 1.0))
        .collect()
}

/// Resolvent of the quadratic primal term for one class, i.e. the solution of
///
/// ```text
/// (α Q + β I + I/τ) u = β û + x/τ - α L_3 ū
/// ```
///
/// where `Q` is the test-block Laplacian.
#[derive(Clone, Debug)]
pub struct ProxG<'a> {
    quad: &'a CsrMatrix,
    alpha: f64,
    beta: f64,
    quad_diag: Vec<f64>,
    rhs_base: Vec<f64>,
}

impl<'a> ProxG<'a> {
    pub fn new(quad: &'a CsrMatrix, l3: &CsrMatrix, u_hat_s: &[f64], u_bar: &[f64], params: ModelParams) -> Self {
        let coupling = l3.mul_vec(u_bar);
        let rhs_base = u_hat_s
            .iter()
            .zip(&coupling)
            .map(|(h, c)| params.beta * h - params.alpha * c)
            .collect();
        ProxG {
            quad,
            alpha: params.alpha,
            beta: params.beta,
            quad_diag: quad.diagonal(),
            rhs_base,
        }
    }

    /// Solves for `u`, using the incoming contents of `out` as the CG start.
    pub fn solve_into(&self, x: &[f64], tau: f64, tol: f64, max_iters: usize, out: &mut [f64]) -> Result<CgOutcome> {
        let shift = self.beta + 1.0 / tau;
        let rhs: Vec<f64> = self
            .rhs_base
            .iter()
            .zip(x)
            .map(|(b, xi)| b + xi / tau)
            .collect();
        let diag: Vec<f64> = self.quad_diag.iter().map(|d| self.alpha * d + shift).collect();
        let alpha = self.alpha;
        let quad = self.quad;
        pcg(
            |v, o| {
                quad.mul_vec_into(v, o);
                for (oi, vi) in o.iter_mut().zip(v) {
                    *oi = alpha * *oi + shift * vi;
                }
            },
            &diag,
            &rhs,
            out,
            tol,
            max_iters,
        )
    }
}

/// One-shot form of [`ProxG`], starting CG from `x`.
#[allow(clippy::too_many_arguments)]
pub fn prox_g(
    x: &[f64],
    tau: f64,
    params: ModelParams,
    quad: &CsrMatrix,
    l3: &CsrMatrix,
    u_hat_s: &[f64],
    u_bar: &[f64],
    cg_tol: f64,
    cg_max_iters: usize,
) -> Result<Vec<f64>> {
    let prox = ProxG::new(quad, l3, u_hat_s, u_bar, params);
    let mut out = x.to_vec();
    prox.solve_into(x, tau, cg_tol, cg_max_iters, &mut out)?;
    Ok(out)
}
