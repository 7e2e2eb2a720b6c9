//! Finite-difference verification of the gradient and Hessian blocks, and a
//! damped Newton solver for the inner problem over `w`.

use nalgebra::{DMatrix, DVector};

use super::MinimaxObjective;
use crate::error::Result;
use crate::rng::StreamKey;

/// `max|a − b| / max(max|b|, 1e-8)`: error relative to the scale of the
/// reference block, so near-zero entries do not dominate.
pub fn block_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "blocks of different size");
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1e-8);
    diff / scale
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdReport {
    pub grad_gamma: f64,
    pub grad_w: f64,
    pub h_ww: f64,
    pub h_wgamma: f64,
}

impl FdReport {
    pub fn passes(&self, grad_tol: f64, hess_tol: f64) -> bool {
        self.grad_gamma <= grad_tol && self.grad_w <= grad_tol && self.h_ww <= hess_tol && self.h_wgamma <= hess_tol
    }

    /// `(block name, error)` pairs in a fixed order.
    pub fn blocks(&self) -> [(&'static str, f64); 4] {
        [
            ("grad_gamma", self.grad_gamma),
            ("grad_w", self.grad_w),
            ("hessian_ww", self.h_ww),
            ("hessian_wgamma", self.h_wgamma),
        ]
    }
}

const GRAD_STEP: f64 = 1e-5;
const HESS_STEP: f64 = 1e-4;

fn bump(x: &DVector<f64>, i: usize, h: f64) -> DVector<f64> {
    let mut y = x.clone();
    y[i] += h;
    y
}

/// Compares the analytic blocks with central differences: gradients from
/// the value (step 1e-5), Hessians from the `w`-gradient (step 1e-4).
/// Meaningful only for deterministic objectives.
pub fn finite_difference_check<O: MinimaxObjective + ?Sized>(
    obj: &O,
    gamma: &DVector<f64>,
    w: &DVector<f64>,
    key: StreamKey,
) -> Result<FdReport> {
    let grads = obj.gradients(gamma, w, key)?;
    let hess = obj.hessians(gamma, w, key)?;
    let (m, l) = (obj.dim_gamma(), obj.dim_w());

    let mut fd_gamma = DVector::zeros(m);
    for i in 0..m {
        let up = obj.value(&bump(gamma, i, GRAD_STEP), w, key)?;
        let down = obj.value(&bump(gamma, i, -GRAD_STEP), w, key)?;
        fd_gamma[i] = (up - down) / (2.0 * GRAD_STEP);
    }
    let mut fd_w = DVector::zeros(l);
    let mut fd_ww = DMatrix::zeros(l, l);
    for i in 0..l {
        let up = obj.value(gamma, &bump(w, i, GRAD_STEP), key)?;
        let down = obj.value(gamma, &bump(w, i, -GRAD_STEP), key)?;
        fd_w[i] = (up - down) / (2.0 * GRAD_STEP);
        let gu = obj.gradients(gamma, &bump(w, i, HESS_STEP), key)?.grad_w;
        let gd = obj.gradients(gamma, &bump(w, i, -HESS_STEP), key)?.grad_w;
        fd_ww.set_column(i, &((gu - gd) / (2.0 * HESS_STEP)));
    }
    let mut fd_wg = DMatrix::zeros(l, m);
    for i in 0..m {
        let gu = obj.gradients(&bump(gamma, i, HESS_STEP), w, key)?.grad_w;
        let gd = obj.gradients(&bump(gamma, i, -HESS_STEP), w, key)?.grad_w;
        fd_wg.set_column(i, &((gu - gd) / (2.0 * HESS_STEP)));
    }
    Ok(FdReport {
        grad_gamma: block_relative_error(grads.grad_gamma.as_slice(), fd_gamma.as_slice()),
        grad_w: block_relative_error(grads.grad_w.as_slice(), fd_w.as_slice()),
        h_ww: block_relative_error(hess.h_ww.as_slice(), fd_ww.as_slice()),
        h_wgamma: block_relative_error(hess.h_wgamma.as_slice(), fd_wg.as_slice()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerOptions {
    pub max_iter: usize,
    /// Stop once `‖∇_w f‖` falls below this.
    pub tol: f64,
    /// Minimize over `w` instead (maximin orientation).
    pub minimize: bool,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-10,
            minimize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub w: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Optimizes `w ↦ f(γ, w)` with Newton steps where the Hessian has the
/// right curvature and gradient steps otherwise, each with backtracking.
pub fn maximize_inner<O: MinimaxObjective + ?Sized>(
    obj: &O,
    gamma: &DVector<f64>,
    w0: &DVector<f64>,
    opts: InnerOptions,
    key: StreamKey,
) -> Result<InnerResult> {
    let s = if opts.minimize { -1.0 } else { 1.0 };
    let mut w = w0.clone();
    let mut value = obj.value(gamma, &w, key)?;
    for it in 0..opts.max_iter {
        let g = obj.gradients(gamma, &w, key)?.grad_w * s;
        let gn = g.norm();
        if gn < opts.tol {
            return Ok(InnerResult {
                w,
                value,
                grad_norm: gn,
                iterations: it,
            });
        }
        let neg_h = obj.hessians(gamma, &w, key)?.h_ww * (-s);
        let dir = match neg_h.cholesky() {
            Some(c) => c.solve(&g),
            None => g.clone(),
        };
        let slope = g.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-12 {
            let cand = &w + &dir * t;
            let v = obj.value(gamma, &cand, key)?;
            if s * v >= s * value + 1e-4 * t * slope {
                w = cand;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // near the optimum the value stops resolving the step; fall back
            // to accepting the full step if it shrinks the gradient
            let cand = &w + &dir;
            let gc = obj.gradients(gamma, &cand, key)?.grad_w.norm();
            if gc >= gn {
                return Ok(InnerResult {
                    w,
                    value,
                    grad_norm: gn,
                    iterations: it,
                });
            }
            value = obj.value(gamma, &cand, key)?;
            w = cand;
        }
    }
    let gn = obj.gradients(gamma, &w, key)?.grad_w.norm();
    Ok(InnerResult {
        w,
        value,
        grad_norm: gn,
        iterations: opts.max_iter,
    })
}
