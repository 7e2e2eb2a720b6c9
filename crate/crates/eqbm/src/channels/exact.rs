//! Dense evaluation of the channels Φ_θ, Ψ_φ and of the exact partial
//! derivatives of `Tr[O ω_{θ,φ}]`.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::tent::tent_spectral_weight;
use super::Observable;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigendecompose, ComplexMatrix, HermitianEig, C64};
use crate::model::{Distribution, HamiltonianFamily, ModelSnapshot, Povm};

const IMAG_RESIDUE_TOL: f64 = 1e-8;
// gaps closer than this share one quadrature
const GAP_QUANTUM: f64 = 1e-12;

/// `ĥ(λ_m − λ_n)` for every eigenvalue pair, one quadrature per distinct gap.
pub fn tent_weight_table(eig: &HermitianEig) -> DMatrix<f64> {
    let l = eig.eigenvalues();
    let d = l.len();
    let mut cache: HashMap<i64, f64> = HashMap::new();
    DMatrix::from_fn(d, d, |m, n| {
        let key = ((l[m] - l[n]).abs() / GAP_QUANTUM).round() as i64;
        if key == 0 {
            return 1.0;
        }
        *cache
            .entry(key)
            .or_insert_with(|| tent_spectral_weight(key as f64 * GAP_QUANTUM))
    })
}

fn apply_in_eigenbasis<F: Fn(usize, usize) -> C64>(eig: &HermitianEig, x: &ComplexMatrix, w: F) -> ComplexMatrix {
    let y = eig.to_eigenbasis(x);
    let d = y.dim();
    let scaled = DMatrix::from_fn(d, d, |m, n| y.get(m, n) * w(m, n));
    eig.from_eigenbasis(&ComplexMatrix::from_inner(scaled))
}

pub(crate) fn phi_with_table(eig: &HermitianEig, table: &DMatrix<f64>, x: &ComplexMatrix) -> ComplexMatrix {
    apply_in_eigenbasis(eig, x, |m, n| C64::new(table[(m, n)], 0.0))
}

fn check_dims(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: a.dim(),
        });
    }
    Ok(())
}

/// `Φ(X) = ∫ p(t) e^{-iGt} X e^{iGt} dt`.
pub fn phi_channel_exact(x: &ComplexMatrix, g: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_dims(x, g)?;
    let eig = hermitian_eigendecompose(g)?;
    Ok(phi_with_table(&eig, &tent_weight_table(&eig), x))
}

/// `k(Δ) = ∫_0^1 e^{-iΔt} dt = (1 − e^{-iΔ})/(iΔ)`, evaluated as
/// `e^{-iΔ/2} sin(Δ/2)/(Δ/2)` to avoid cancellation at small gaps.
pub fn psi_kernel(gap: f64) -> C64 {
    let half = 0.5 * gap;
    let sinc = if half.abs() < 1e-4 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    C64::from_polar(sinc, -half)
}

pub(crate) fn psi_in_eigenbasis(eig: &HermitianEig, x: &ComplexMatrix) -> ComplexMatrix {
    let l = eig.eigenvalues();
    apply_in_eigenbasis(eig, x, |m, n| psi_kernel(l[m] - l[n]))
}

/// `Ψ(X) = ∫_0^1 e^{-iHt} X e^{iHt} dt`.
pub fn psi_channel_exact(x: &ComplexMatrix, h: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_dims(x, h)?;
    let eig = hermitian_eigendecompose(h)?;
    Ok(psi_in_eigenbasis(&eig, x))
}

/// Channel images of every generator at one parameter point: `Φ_θ(G_j)`,
/// `Ψ_φ(H_k)` and `⟨G_j⟩_ρ`.
#[derive(Clone, Debug)]
pub struct ChannelTerms {
    pub phi_g: Vec<ComplexMatrix>,
    pub psi_h: Vec<ComplexMatrix>,
    pub g_means: Vec<f64>,
}

impl ChannelTerms {
    pub fn new(family: &HamiltonianFamily, snap: &ModelSnapshot) -> Self {
        let table = tent_weight_table(&snap.g_eig);
        let phi_g = (0..family.num_g())
            .map(|j| phi_with_table(&snap.g_eig, &table, family.g_matrix(j)))
            .collect();
        let psi_h = match &snap.h_eig {
            Some(h_eig) => (0..family.num_h())
                .map(|k| psi_in_eigenbasis(h_eig, family.h_matrix(k)))
                .collect(),
            None => Vec::new(),
        };
        let g_means = (0..family.num_g())
            .map(|j| snap.rho.expectation(family.g_matrix(j)))
            .collect();
        Self { phi_g, psi_h, g_means }
    }
}

/// Derivatives of the Born probabilities: `J[(z, m)] = ∂_{γ_m} q_γ(z)` with
/// γ = (θ, φ). Any payoff's gradient is then `Jᵀ g`.
pub fn born_jacobian(snap: &ModelSnapshot, terms: &ChannelTerms, povm: &Povm, q: &Distribution) -> Result<DMatrix<f64>> {
    let nz = povm.len();
    let nj = terms.phi_g.len();
    let mut jac = DMatrix::zeros(nz, nj + terms.psi_h.len());
    let u = &snap.evolution;
    let rho = snap.rho.matrix();
    for (j, phi) in terms.phi_g.iter().enumerate() {
        // -Re Tr[U†Λ U Φ ρ] = -Re Tr[Λ (U Φ ρ U†)]
        let x = &(&(u * phi) * rho) * &u.adjoint();
        for (z, tr) in povm.traces_against(&x).into_iter().enumerate() {
            jac[(z, j)] = -tr.re + q.prob(z) * terms.g_means[j];
        }
    }
    let omega = snap.omega.matrix();
    for (k, psi) in terms.psi_h.iter().enumerate() {
        // -i Tr[ω[Λ, Ψ]] = -i Tr[Λ (Ψω − ωΨ)]
        let y = &(psi * omega) - &(omega * psi);
        for (z, tr) in povm.traces_against(&y).into_iter().enumerate() {
            let v = C64::new(0.0, -1.0) * tr;
            if v.im.abs() > IMAG_RESIDUE_TOL {
                return Err(Error::Numerical(format!(
                    "imaginary residue {:e} in evolution derivative",
                    v.im
                )));
            }
            jac[(z, nj + k)] = v.re;
        }
    }
    Ok(jac)
}

fn index_check(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::Index { what, index, len });
    }
    Ok(())
}

/// `∂_{θ_j} Tr[O ω]` = `−½⟨{e^{iH}Oe^{−iH}, Φ_θ(G_j)}⟩_ρ + ⟨O⟩_ω ⟨G_j⟩_ρ`.
pub fn exact_partial_theta(obs: &Observable, family: &HamiltonianFamily, gamma: &[f64], j: usize) -> Result<f64> {
    index_check("thermal generator", j, family.num_g())?;
    let snap = ModelSnapshot::from_gamma(family, gamma)?;
    let phi = phi_with_table(&snap.g_eig, &tent_weight_table(&snap.g_eig), family.g_matrix(j));
    let o = obs.operator();
    let u = &snap.evolution;
    let heis = &(&u.adjoint() * &o) * u;
    let anti = snap.rho.expectation(&heis.anticommutator(&phi));
    Ok(-0.5 * anti + snap.omega.expectation(&o) * snap.rho.expectation(family.g_matrix(j)))
}

/// `∂_{φ_k} Tr[O ω]` = `−i⟨[O, Ψ_φ(H_k)]⟩_ω`.
pub fn exact_partial_phi(obs: &Observable, family: &HamiltonianFamily, gamma: &[f64], k: usize) -> Result<f64> {
    index_check("evolution generator", k, family.num_h())?;
    let snap = ModelSnapshot::from_gamma(family, gamma)?;
    let h_eig = snap.h_eig.as_ref().expect("family has evolution terms");
    let psi = psi_in_eigenbasis(h_eig, family.h_matrix(k));
    let comm = obs.operator().commutator(&psi);
    let v = C64::new(0.0, -1.0) * snap.omega.matrix().trace_product(&comm);
    if v.im.abs() > IMAG_RESIDUE_TOL {
        return Err(Error::Numerical(format!(
            "imaginary residue {:e} in evolution derivative",
            v.im
        )));
    }
    Ok(v.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_hermitian;
    use crate::linalg::ONE;
    use crate::model::{HamiltonianFamily, ParamVector, PauliString};
    use crate::random::{random_family, random_povm};
    use crate::quadrature::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sigma(s: &str) -> ComplexMatrix {
        s.parse::<PauliString>().unwrap().to_matrix()
    }

    fn expectation_at(obs: &Observable, family: &HamiltonianFamily, gamma: &[f64]) -> f64 {
        ModelSnapshot::from_gamma(family, gamma)
            .unwrap()
            .omega
            .expectation(&obs.operator())
    }

    fn central_difference(obs: &Observable, family: &HamiltonianFamily, gamma: &[f64], m: usize) -> f64 {
        let h = 1e-5;
        let mut plus = gamma.to_vec();
        let mut minus = gamma.to_vec();
        plus[m] += h;
        minus[m] -= h;
        (expectation_at(obs, family, &plus) - expectation_at(obs, family, &minus)) / (2.0 * h)
    }

    #[test]
    fn phi_commuting_is_identity_map() {
        let g = sigma("ZI").scale(0.7);
        let x = sigma("ZZ");
        assert!(phi_channel_exact(&x, &g).unwrap().max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn phi_on_sigma_x() {
        let theta = 0.8;
        let out = phi_channel_exact(&sigma("X"), &sigma("Z").scale(theta)).unwrap();
        let w = (theta).tanh() / theta; // ĥ(2θ)
        assert!(out.max_abs_diff(&sigma("X").scale(w)) < 1e-9);
    }

    #[test]
    fn phi_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 4, 8] {
            let g = random_hermitian(&mut rng, d);
            let x = random_hermitian(&mut rng, d);
            let out = phi_channel_exact(&x, &g).unwrap();
            assert!((out.trace() - x.trace()).norm() < 1e-10);
            assert!(out.is_hermitian(1e-12));
        }
    }

    #[test]
    fn psi_kernel_values() {
        assert_eq!(psi_kernel(0.0), ONE);
        assert!((psi_kernel(PI).norm() - 2.0 / PI).abs() < 1e-15);
        assert!((psi_kernel(PI) - C64::new(0.0, -2.0 / PI)).norm() < 1e-15);
        for gap in [0.3, -1.7, 5.0, 40.0] {
            let direct = (ONE - C64::new(0.0, -gap).exp()) / C64::new(0.0, gap);
            assert!((psi_kernel(gap) - direct).norm() < 1e-15);
        }
        // continuity across the series switch
        let (a, b) = (psi_kernel(1.999_999e-4), psi_kernel(2.000_001e-4));
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn psi_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let h = random_hermitian(&mut rng, 4);
            let x = random_hermitian(&mut rng, 4);
            let got = psi_channel_exact(&x, &h).unwrap();
            let eig = hermitian_eigendecompose(&h).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    let entry = |t: f64, re: bool| {
                        let u = crate::model::evolution_unitary(&eig, t);
                        let v = (&(&u * &x) * &u.adjoint()).get(r, c);
                        if re {
                            v.re
                        } else {
                            v.im
                        }
                    };
                    let re = integrate(|t| entry(t, true), &[0.0, 0.5, 1.0], 1e-12, 200).value;
                    let im = integrate(|t| entry(t, false), &[0.0, 0.5, 1.0], 1e-12, 200).value;
                    assert!((got.get(r, c) - C64::new(re, im)).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn partial_theta_single_qubit() {
        let family = HamiltonianFamily::from_letters(&["Z"], &[]).unwrap();
        let povm = Povm::computational(1);
        let obs = Observable::new(vec![1.0, -1.0], &povm).unwrap();
        let d = exact_partial_theta(&obs, &family, &[1.0], 0).unwrap();
        assert!((d + 1.0 / 1f64.cosh().powi(2)).abs() < 1e-12);
        let ones = Observable::new(vec![1.0, 1.0], &povm).unwrap();
        assert!(exact_partial_theta(&ones, &family, &[1.0], 0).unwrap().abs() < 1e-12);
        assert!(matches!(
            exact_partial_theta(&obs, &family, &[1.0], 1),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn partial_phi_single_qubit() {
        let family = HamiltonianFamily::from_letters(&["Z"], &["X"]).unwrap();
        let povm = Povm::computational(1);
        let obs = Observable::new(vec![1.0, -1.0], &povm).unwrap();
        for (theta, phi) in [(0.7, 0.3), (-1.2, 1.1)] {
            let gamma = [theta, phi];
            let d = exact_partial_phi(&obs, &family, &gamma, 0).unwrap();
            assert!((d - central_difference(&obs, &family, &gamma, 1)).abs() < 1e-8);
            // ⟨Z⟩_ω = −tanh θ cos 2φ
            assert!((d - 2.0 * theta.tanh() * (2.0 * phi).sin()).abs() < 1e-12);
        }
        // evolution commuting with the observable
        let fam = HamiltonianFamily::from_letters(&["X"], &["Z"]).unwrap();
        assert!(exact_partial_phi(&obs, &fam, &[0.4, 0.9], 0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for inst in 0..20 {
            let n = 1 + inst % 3;
            let (nj, nk) = (rng.random_range(1..=3), rng.random_range(0..=3));
            let family = random_family(&mut rng, n, nj, nk);
            let povm = if inst % 2 == 0 {
                Povm::computational(n)
            } else {
                random_povm(&mut rng, 1 << n, 3)
            };
            let g: Vec<f64> = (0..povm.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let obs = Observable::new(g, &povm).unwrap();
            let gamma: Vec<f64> = (0..family.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scale = (0..gamma.len())
                .map(|m| central_difference(&obs, &family, &gamma, m).abs())
                .fold(1e-3, f64::max);
            for m in 0..gamma.len() {
                let exact = if m < family.num_g() {
                    exact_partial_theta(&obs, &family, &gamma, m).unwrap()
                } else {
                    exact_partial_phi(&obs, &family, &gamma, m - family.num_g()).unwrap()
                };
                let fd = central_difference(&obs, &family, &gamma, m);
                assert!((exact - fd).abs() / scale < 1e-6, "instance {inst}, param {m}: {exact} vs {fd}");
            }
        }
    }

    #[test]
    fn jacobian_agrees_with_partials() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let family = random_family(&mut rng, 2, 3, 2);
        let povm = random_povm(&mut rng, 4, 5);
        let gamma: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = ParamVector::from_gamma(&family, &gamma).unwrap();
        let snap = ModelSnapshot::new(&family, &params).unwrap();
        let terms = ChannelTerms::new(&family, &snap);
        let q = snap.born(&povm).unwrap();
        let jac = born_jacobian(&snap, &terms, &povm, &q).unwrap();
        let g: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let obs = Observable::new(g.clone(), &povm).unwrap();
        for m in 0..5 {
            let via_jac: f64 = (0..5).map(|z| g[z] * jac[(z, m)]).sum();
            let direct = if m < 3 {
                exact_partial_theta(&obs, &family, &gamma, m).unwrap()
            } else {
                exact_partial_phi(&obs, &family, &gamma, m - 3).unwrap()
            };
            assert!((via_jac - direct).abs() < 1e-12);
            // probabilities stay normalized along every direction
            assert!(jac.column(m).sum().abs() < 1e-12);
        }
    }
}
