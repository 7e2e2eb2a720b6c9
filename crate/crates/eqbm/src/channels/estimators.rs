//! Shot-level emulation of the gradient estimators. Every shot draws from
//! its own counter-indexed substream, and per-shot values are summed in shot
//! order, so a result depends only on the stream key.

use rand::Rng;

use super::circuits::{hadamard_test_joint, HadamardKind};
use super::tent::{default_tent_sampler, TentSampler};
use super::Observable;
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::linalg::{ComplexMatrix, HermitianEig, C64};
use crate::model::{HamiltonianFamily, ModelSnapshot};
use crate::rng::StreamKey;

/// Fixed output sign of the anticommutator estimator: the real-part
/// Hadamard test has parity mean `+½⟨{O', W}⟩ = −μ`.
pub const ANTICOMMUTATOR_SIGN: f64 = -1.0;
/// Fixed output sign of the commutator estimator: the imaginary-part test
/// already has parity mean `ν`, so no extra factor is applied.
pub const COMMUTATOR_SIGN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    Anticommutator,
    Commutator,
    Product,
}

fn check_accuracy(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Argument(format!("accuracy {epsilon} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!("failure probability {delta} outside (0, 1)")));
    }
    Ok(())
}

/// Hoeffding sample size for the requested accuracy and confidence.
pub fn shots_required(epsilon: f64, delta: f64, g_norm: f64, which: EstimatorKind) -> Result<u64> {
    check_accuracy(epsilon, delta)?;
    if !(g_norm > 0.0 && g_norm.is_finite()) {
        return Err(Error::Argument(format!("payoff norm {g_norm} must be positive")));
    }
    let base = g_norm * g_norm / (epsilon * epsilon) * (2.0 / delta).ln();
    let n = match which {
        EstimatorKind::Anticommutator => 0.5 * base,
        // per-shot range 2‖g‖
        EstimatorKind::Commutator | EstimatorKind::Product => 2.0 * base,
    };
    Ok((n.ceil() as u64).max(1))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotPlan {
    pub epsilon: f64,
    pub delta: f64,
    pub shots: u64,
}

impl ShotPlan {
    pub fn new(epsilon: f64, delta: f64, shots: u64) -> Result<Self> {
        check_accuracy(epsilon, delta)?;
        if shots == 0 {
            return Err(Error::Argument("shot count must be positive".into()));
        }
        Ok(Self { epsilon, delta, shots })
    }

    /// The smallest plan meeting the bound.
    pub fn planned(epsilon: f64, delta: f64, g_norm: f64, which: EstimatorKind) -> Result<Self> {
        let shots = shots_required(epsilon, delta, g_norm, which)?;
        Self::new(epsilon, delta, shots)
    }

    pub fn check(&self, g_norm: f64, which: EstimatorKind) -> Result<()> {
        let required = shots_required(self.epsilon, self.delta, g_norm, which)?;
        if self.shots < required {
            return Err(Error::ShotPlan {
                required,
                given: self.shots,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorOutcome {
    pub mean: f64,
    pub shots: u64,
    pub per_shot_values: Option<Vec<f64>>,
}

impl EstimatorOutcome {
    fn from_values(values: Vec<f64>) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            mean,
            shots: values.len() as u64,
            per_shot_values: Some(values),
        }
    }
}

fn run_shots<F>(n: u64, key: StreamKey, shot: F) -> Result<EstimatorOutcome>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<f64> + Sync + Send,
{
    let values = try_map_indexed(n as usize, |i| shot(&mut key.shot_rng(i as u64)))?;
    Ok(EstimatorOutcome::from_values(values))
}

/// `e^{-iAt} X e^{iAt}` from the eigendecomposition of `A`.
fn rotate(eig: &HermitianEig, x_eb: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let l = eig.eigenvalues();
    let d = l.len();
    let m = nalgebra::DMatrix::from_fn(d, d, |a, b| {
        x_eb.get(a, b) * C64::from_polar(1.0, -(l[a] - l[b]) * t)
    });
    eig.from_eigenbasis(&ComplexMatrix::from_inner(m))
}

fn index_check(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::Index { what, index, len });
    }
    Ok(())
}

/// Estimates `μ = −½⟨{e^{iH}Oe^{−iH}, Φ_θ(G_j)}⟩_ρ`.
pub fn estimate_anticommutator_term(
    obs: &Observable,
    family: &HamiltonianFamily,
    gamma: &[f64],
    j: usize,
    plan: &ShotPlan,
    key: StreamKey,
) -> Result<EstimatorOutcome> {
    let snap = ModelSnapshot::from_gamma(family, gamma)?;
    anticommutator_with(obs, family, &snap, j, plan, default_tent_sampler(), key)
}

pub(crate) fn anticommutator_with(
    obs: &Observable,
    family: &HamiltonianFamily,
    snap: &ModelSnapshot,
    j: usize,
    plan: &ShotPlan,
    sampler: &TentSampler,
    key: StreamKey,
) -> Result<EstimatorOutcome> {
    index_check("thermal generator", j, family.num_g())?;
    plan.check(obs.norm(), EstimatorKind::Anticommutator)?;
    let gj_eb = snap.g_eig.to_eigenbasis(family.g_matrix(j));
    let g = obs.payoff();
    run_shots(plan.shots, key, |rng| {
        let t = sampler.sample(rng);
        let w = rotate(&snap.g_eig, &gj_eb, t);
        let joint = hadamard_test_joint(HadamardKind::RealPart, &w, &snap.rho, &snap.evolution, obs.povm())?;
        let (r, z) = joint.sample(rng);
        Ok(ANTICOMMUTATOR_SIGN * parity(r) * g[z])
    })
}

fn parity(bit: usize) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Estimates `ν = −(i/2)⟨[O, Ψ_φ(H_k)]⟩_ω`, half the evolution derivative.
pub fn estimate_commutator_term(
    obs: &Observable,
    family: &HamiltonianFamily,
    gamma: &[f64],
    k: usize,
    plan: &ShotPlan,
    key: StreamKey,
) -> Result<EstimatorOutcome> {
    let snap = ModelSnapshot::from_gamma(family, gamma)?;
    commutator_with(obs, family, &snap, k, plan, key)
}

pub(crate) fn commutator_with(
    obs: &Observable,
    family: &HamiltonianFamily,
    snap: &ModelSnapshot,
    k: usize,
    plan: &ShotPlan,
    key: StreamKey,
) -> Result<EstimatorOutcome> {
    index_check("evolution generator", k, family.num_h())?;
    plan.check(obs.norm(), EstimatorKind::Commutator)?;
    let h_eig = snap.h_eig.as_ref().expect("family has evolution terms");
    let hk_eb = h_eig.to_eigenbasis(family.h_matrix(k));
    let id = ComplexMatrix::identity(family.dim());
    let g = obs.payoff();
    run_shots(plan.shots, key, |rng| {
        let t: f64 = rng.random();
        let w = rotate(h_eig, &hk_eb, t);
        let joint = hadamard_test_joint(HadamardKind::ImagPart, &w, &snap.omega, &id, obs.povm())?;
        let (s, z) = joint.sample(rng);
        Ok(COMMUTATOR_SIGN * parity(s) * g[z])
    })
}

/// Estimates `⟨O⟩_ω ⟨G_j⟩_ρ` from independent preparations of ω and ρ.
pub fn estimate_product_term(
    obs: &Observable,
    family: &HamiltonianFamily,
    gamma: &[f64],
    j: usize,
    n: u64,
    key: StreamKey,
) -> Result<EstimatorOutcome> {
    let snap = ModelSnapshot::from_gamma(family, gamma)?;
    product_with(obs, family, &snap, j, n, key)
}

pub(crate) fn product_with(
    obs: &Observable,
    family: &HamiltonianFamily,
    snap: &ModelSnapshot,
    j: usize,
    n: u64,
    key: StreamKey,
) -> Result<EstimatorOutcome> {
    index_check("thermal generator", j, family.num_g())?;
    if n == 0 {
        return Err(Error::Argument("shot count must be positive".into()));
    }
    let q = snap.born(obs.povm())?;
    // Pauli generators have spectrum {±1}: P(+1) = Tr[ρ (I + G_j)/2]
    let p_plus = (0.5 * (1.0 + snap.rho.expectation(family.g_matrix(j)))).clamp(0.0, 1.0);
    let g = obs.payoff();
    run_shots(n, key, |rng| {
        let z = q.sample(rng);
        let lambda = if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 };
        Ok(g[z] * lambda)
    })
}

#[cfg(test)]
mod tests {
    use super::super::exact::{exact_partial_phi, exact_partial_theta, phi_channel_exact, psi_channel_exact};
    use super::*;
    use crate::model::{GeneratorKind, Povm};
    use crate::random::random_povm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact_mu(obs: &Observable, family: &HamiltonianFamily, gamma: &[f64], j: usize) -> f64 {
        let snap = ModelSnapshot::from_gamma(family, gamma).unwrap();
        let g = family.build_generator(&snap.params.theta, GeneratorKind::G).unwrap();
        let phi = phi_channel_exact(family.g_matrix(j), &g).unwrap();
        let u = &snap.evolution;
        let heis = &(&u.adjoint() * &obs.operator()) * u;
        -0.5 * snap.rho.expectation(&heis.anticommutator(&phi))
    }

    fn exact_nu(obs: &Observable, family: &HamiltonianFamily, gamma: &[f64], k: usize) -> f64 {
        let snap = ModelSnapshot::from_gamma(family, gamma).unwrap();
        let h = family.build_generator(&snap.params.phi, GeneratorKind::H).unwrap();
        let psi = psi_channel_exact(family.h_matrix(k), &h).unwrap();
        (C64::new(0.0, -0.5) * snap.omega.matrix().trace_product(&obs.operator().commutator(&psi))).re
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn shot_counts() {
        assert_eq!(shots_required(0.1, 0.05, 1.0, EstimatorKind::Anticommutator).unwrap(), 185);
        assert_eq!(shots_required(0.1, 0.05, 1.0, EstimatorKind::Commutator).unwrap(), 738);
        assert_eq!(shots_required(0.1, 0.05, 1.0, EstimatorKind::Product).unwrap(), 738);
        let a = shots_required(0.05, 0.05, 1.0, EstimatorKind::Anticommutator).unwrap();
        let b = shots_required(0.1, 0.05, 1.0, EstimatorKind::Anticommutator).unwrap();
        assert!((a as f64 / b as f64 - 4.0).abs() < 0.05);
        assert!(shots_required(0.0, 0.05, 1.0, EstimatorKind::Product).is_err());
        assert!(shots_required(0.1, 1.0, 1.0, EstimatorKind::Product).is_err());
    }

    #[test]
    fn undersized_plan_rejected() {
        let family = HamiltonianFamily::from_letters(&["Z"], &[]).unwrap();
        let povm = Povm::computational(1);
        let obs = Observable::new(vec![1.0, -1.0], &povm).unwrap();
        let plan = ShotPlan::new(0.1, 0.05, 100).unwrap();
        assert_eq!(
            estimate_anticommutator_term(&obs, &family, &[1.0], 0, &plan, StreamKey::new(0)),
            Err(Error::ShotPlan { required: 185, given: 100 })
        );
    }

    #[test]
    fn commuting_case_is_exact() {
        let family = HamiltonianFamily::from_letters(&["Z"], &[]).unwrap();
        let povm = Povm::computational(1);
        let obs = Observable::new(vec![1.0, -1.0], &povm).unwrap();
        let plan = ShotPlan::new(0.1, 0.05, 10_000).unwrap();
        let out = estimate_anticommutator_term(&obs, &family, &[1.0], 0, &plan, StreamKey::new(1)).unwrap();
        // W = σ_Z commutes with everything here, so every shot yields −1
        assert_eq!(out.mean, -1.0);
        let vals = out.per_shot_values.unwrap();
        assert_eq!(vals.len(), 10_000);
    }

    #[test]
    fn identity_observable_gives_zero_mu() {
        let family = HamiltonianFamily::from_letters(&["Z", "X"], &[]).unwrap();
        let povm = Povm::computational(1);
        let obs = Observable::new(vec![1.0, 1.0], &povm).unwrap();
        let gamma = [0.9, 0.0];
        assert!(exact_mu(&obs, &family, &gamma, 1).abs() < 1e-14);
        let plan = ShotPlan::planned(0.05, 0.01, 1.0, EstimatorKind::Anticommutator).unwrap();
        let out = estimate_anticommutator_term(&obs, &family, &gamma, 1, &plan, StreamKey::new(2)).unwrap();
        assert!(out.mean.abs() < 0.05);
    }

    #[test]
    fn reproducible_and_order_preserving() {
        let family = HamiltonianFamily::from_letters(&["ZI", "XX"], &["YZ"]).unwrap();
        let povm = Povm::computational(2);
        let obs = Observable::new(vec![0.5, -1.0, 0.2, 0.9], &povm).unwrap();
        let gamma = [0.3, -0.6, 0.8];
        let plan = ShotPlan::planned(0.2, 0.1, 1.0, EstimatorKind::Commutator).unwrap();
        let a = estimate_commutator_term(&obs, &family, &gamma, 0, &plan, StreamKey::new(5)).unwrap();
        let b = estimate_commutator_term(&obs, &family, &gamma, 0, &plan, StreamKey::new(5)).unwrap();
        assert_eq!(a, b);
        let single = rayon_single_thread(|| {
            estimate_commutator_term(&obs, &family, &gamma, 0, &plan, StreamKey::new(5)).unwrap()
        });
        assert_eq!(a, single);
    }

    #[cfg(feature = "parallel")]
    fn rayon_single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
    }

    #[cfg(not(feature = "parallel"))]
    fn rayon_single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
        f()
    }

    #[test]
    fn unbiased_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let family = HamiltonianFamily::from_letters(&["ZI", "XY", "IX"], &["YY", "ZX"]).unwrap();
        let povm = random_povm(&mut rng, 4, 4);
        let obs = Observable::new(vec![1.0, -0.4, 0.7, -1.0], &povm).unwrap();
        let gamma: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let snap = ModelSnapshot::from_gamma(&family, &gamma).unwrap();
        let root = StreamKey::new(77);
        let runs = 200;

        let plan1 = ShotPlan::planned(0.25, 0.1, obs.norm(), EstimatorKind::Anticommutator).unwrap();
        let mu = exact_mu(&obs, &family, &gamma, 1);
        let xs: Vec<f64> = (0..runs)
            .map(|r| anticommutator_with(&obs, &family, &snap, 1, &plan1, default_tent_sampler(), root.child(r)).unwrap().mean)
            .collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - mu).abs() < 4.0 * se, "mu {mu}, got {m} ± {se}");

        let plan2 = ShotPlan::planned(0.25, 0.1, obs.norm(), EstimatorKind::Commutator).unwrap();
        let nu = exact_nu(&obs, &family, &gamma, 1);
        let ys: Vec<f64> = (0..runs)
            .map(|r| commutator_with(&obs, &family, &snap, 1, &plan2, root.child(1000 + r)).unwrap().mean)
            .collect();
        let (m, se) = mean_and_se(&ys);
        assert!((m - nu).abs() < 4.0 * se, "nu {nu}, got {m} ± {se}");

        let exact_phi = exact_partial_phi(&obs, &family, &gamma, 1).unwrap();
        assert!((exact_phi - 2.0 * nu).abs() < 1e-12);
        let product = snap.omega.expectation(&obs.operator()) * snap.rho.expectation(family.g_matrix(1));
        assert!((exact_partial_theta(&obs, &family, &gamma, 1).unwrap() - (mu + product)).abs() < 1e-12);
    }

    #[test]
    fn product_term_converges() {
        let family = HamiltonianFamily::from_letters(&["Z", "X"], &["Y"]).unwrap();
        let povm = Povm::computational(1);
        let gamma = [0.8, 0.3, 0.4];
        let snap = ModelSnapshot::from_gamma(&family, &gamma).unwrap();
        let n = 100_000;
        let obs = Observable::new(vec![0.3, -0.9], &povm).unwrap();
        for j in 0..2 {
            let exact = snap.omega.expectation(&obs.operator()) * snap.rho.expectation(family.g_matrix(j));
            let out = estimate_product_term(&obs, &family, &gamma, j, n, StreamKey::new(j as u64)).unwrap();
            let (m, se) = mean_and_se(out.per_shot_values.as_ref().unwrap());
            assert_eq!(m, out.mean);
            assert!((m - exact).abs() < 3.0 * se.max(1e-3), "{m} vs {exact}");
        }
        // identity payoff returns ⟨G_j⟩
        let ones = Observable::new(vec![1.0, 1.0], &povm).unwrap();
        let out = estimate_product_term(&ones, &family, &gamma, 0, n, StreamKey::new(9)).unwrap();
        assert!((out.mean - snap.rho.expectation(family.g_matrix(0))).abs() < 0.01);
        // σ_X on a σ_Z-thermal state has zero mean
        let zfam = HamiltonianFamily::from_letters(&["Z", "X"], &[]).unwrap();
        let out = estimate_product_term(&ones, &zfam, &[1.0, 0.0], 1, n, StreamKey::new(10)).unwrap();
        assert!(out.mean.abs() < 0.01);
    }

    #[test]
    fn hoeffding_calibration() {
        // |μ| large enough that the tighter first-estimator bound still holds in practice
        let family = HamiltonianFamily::from_letters(&["Z", "X"], &["Y"]).unwrap();
        let povm = Povm::computational(1);
        let obs = Observable::new(vec![1.0, -1.0], &povm).unwrap();
        let gamma = [1.2, 0.3, 0.1];
        let snap = ModelSnapshot::from_gamma(&family, &gamma).unwrap();
        let mu = exact_mu(&obs, &family, &gamma, 0);
        let plan = ShotPlan::planned(0.1, 0.05, 1.0, EstimatorKind::Anticommutator).unwrap();
        let root = StreamKey::new(404);
        let fails = (0..400)
            .filter(|&r| {
                let x = anticommutator_with(&obs, &family, &snap, 0, &plan, default_tent_sampler(), root.child(r)).unwrap();
                (x.mean - mu).abs() > 0.1
            })
            .count();
        assert!(fails as f64 / 400.0 <= 0.10, "{fails} failures, mu {mu}");
    }
}
