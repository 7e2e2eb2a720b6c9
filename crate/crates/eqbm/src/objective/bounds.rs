//! Right-hand sides of the gradient and Hessian norm bounds, with all
//! function norms taken as maxima over the finite alphabet and every
//! generator of unit spectral norm.

use crate::critic::Critic;
use crate::error::Result;
use crate::model::HamiltonianFamily;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientBounds {
    pub gamma_sq: f64,
    pub w_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianBounds {
    pub ww_sq: f64,
    pub wgamma_sq: f64,
}

fn sup(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖∇_γf‖² ≤ 4‖e^T‖²(J+K)` and `‖∇_wf‖² ≤ (‖e^T‖+1)² Σ_ℓ ‖∂_ℓT‖²`.
/// The quadratic penalty of a regularized linear critic enters as
/// `(√B + λ‖w‖)²` on the `w` bound.
pub fn bound_gradient(family: &HamiltonianFamily, critic: &Critic) -> GradientBounds {
    let table = critic.exp_table();
    let e_sup = sup(table.exp.iter().copied());
    let grads = critic.grads();
    let sum_grad_sq: f64 = (0..critic.num_params())
        .map(|l| sup(grads.iter().map(|g| g[l])).powi(2))
        .sum();
    let w_plain = (e_sup + 1.0).powi(2) * sum_grad_sq;
    let shift = critic.lambda() * critic.params().norm();
    GradientBounds {
        gamma_sq: 4.0 * e_sup * e_sup * family.num_params() as f64,
        w_sq: (w_plain.sqrt() + shift).powi(2),
    }
}

/// `‖H_ww‖² ≤ Σ_{ℓm} (‖∂²_{ℓm}T‖(1+‖e^T‖) + ‖e^T‖‖∂_ℓT‖‖∂_mT‖)²` and
/// `‖H_wγ‖² ≤ 4 Σ_ℓ ‖e^T ∂_ℓT‖² (J+K)`. A quadratic penalty shifts the
/// first to `(√B + λ)²`.
pub fn bound_hessian(family: &HamiltonianFamily, critic: &Critic) -> Result<HessianBounds> {
    let table = critic.exp_table();
    let e_sup = sup(table.exp.iter().copied());
    let grads = critic.grads();
    let l_dim = critic.num_params();
    let grad_sup: Vec<f64> = (0..l_dim).map(|l| sup(grads.iter().map(|g| g[l]))).collect();
    let weighted_sup: Vec<f64> = (0..l_dim)
        .map(|l| sup(grads.iter().zip(&table.exp).map(|(g, e)| e * g[l])))
        .collect();
    let second_sup = if critic.is_linear() {
        None
    } else {
        let hs = (0..critic.outcomes()).map(|z| critic.hessian(z)).collect::<Result<Vec<_>>>()?;
        Some(nalgebra::DMatrix::from_fn(l_dim, l_dim, |l, m| sup(hs.iter().map(|h| h[(l, m)]))))
    };
    let mut ww = 0.0;
    for l in 0..l_dim {
        for m in 0..l_dim {
            let second = second_sup.as_ref().map_or(0.0, |s| s[(l, m)]);
            ww += (second * (1.0 + e_sup) + e_sup * grad_sup[l] * grad_sup[m]).powi(2);
        }
    }
    let ww = (ww.sqrt() + critic.lambda()).powi(2);
    let sum_weighted: f64 = weighted_sup.iter().map(|v| v * v).sum();
    Ok(HessianBounds {
        ww_sq: ww,
        wgamma_sq: 4.0 * sum_weighted * family.num_params() as f64,
    })
}
