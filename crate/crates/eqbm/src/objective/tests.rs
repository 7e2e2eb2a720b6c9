use super::*;
use crate::critic::{FeatureMap, LinearCritic, MlpCritic};
use crate::model::renyi_quasi_entropy;
use crate::random::{random_distribution, random_family, random_povm, random_vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KEY: StreamKey = StreamKey::new(7);

fn exact(divergence: Divergence, p: Distribution) -> ObjectiveConfig {
    ObjectiveConfig {
        divergence,
        mode: Mode::Exact,
        target: Target::Table(p),
    }
}

struct Instance {
    family: HamiltonianFamily,
    povm: Povm,
    p: Distribution,
    gamma: DVector<f64>,
}

fn instance(rng: &mut ChaCha8Rng, max_qubits: usize) -> Instance {
    let n = rng.random_range(1..=max_qubits);
    let (j, k) = (rng.random_range(1..=3), rng.random_range(0..=2));
    let family = random_family(rng, n, j, k);
    let outcomes = rng.random_range(2..=4);
    let povm = random_povm(rng, 1 << n, outcomes);
    let p = random_distribution(rng, outcomes);
    let gamma = random_vector(rng, j + k, 1.0);
    Instance { family, povm, p, gamma }
}

fn mlp(outcomes: usize, seed: u64) -> Critic {
    Critic::Mlp(MlpCritic::new(FeatureMap::one_hot(outcomes), &[5], seed).unwrap())
}

fn tabular(outcomes: usize, lambda: f64) -> Critic {
    Critic::Linear(LinearCritic::tabular(outcomes, lambda).unwrap())
}

fn build(inst: &Instance, critic: Critic, divergence: Divergence) -> BornObjective {
    BornObjective::new(inst.family.clone(), inst.povm.clone(), critic, exact(divergence, inst.p.clone())).unwrap()
}

#[test]
fn zero_critic_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let inst = instance(&mut rng, 2);
        let m = inst.povm.len();
        let w = DVector::zeros(m);
        let dv = build(&inst, tabular(m, 0.0), Divergence::Dv);
        assert!(dv.value(&inst.gamma, &w, KEY).unwrap().abs() < 1e-14);
        // O_w = I: no dependence on γ
        let g = dv.gradients(&inst.gamma, &w, KEY).unwrap();
        assert!(g.grad_gamma.amax() < 1e-12);
        for alpha in [0.5, 2.0, 3.5] {
            let r = build(&inst, tabular(m, 0.0), Divergence::Renyi { alpha });
            assert!((r.value(&inst.gamma, &w, KEY).unwrap() - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn optimal_critics_attain_divergences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let inst = instance(&mut rng, 2);
        let m = inst.povm.len();
        let dv = build(&inst, tabular(m, 0.0), Divergence::Dv);
        let q = dv.born(&inst.gamma).unwrap();
        let log_ratio = DVector::from_fn(m, |z, _| (inst.p.prob(z) / q.prob(z)).ln());
        let d = relative_entropy(&inst.p, &q);
        assert!((dv.value(&inst.gamma, &log_ratio, KEY).unwrap() - d).abs() < 1e-10);
        assert!(dv.gradients(&inst.gamma, &log_ratio, KEY).unwrap().grad_w.amax() < 1e-12);
        for alpha in [0.5, 2.0] {
            let r = build(&inst, tabular(m, 0.0), Divergence::Renyi { alpha });
            let t_star = &log_ratio * alpha;
            let v = r.value(&inst.gamma, &t_star, KEY).unwrap();
            assert!((v - renyi_quasi_entropy(&inst.p, &q, alpha)).abs() < 1e-10);
            assert!(r.gradients(&inst.gamma, &t_star, KEY).unwrap().grad_w.amax() < 1e-12);
        }
    }
}

#[test]
fn lower_bound_and_regularization_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..10 {
        let inst = instance(&mut rng, 2);
        let m = inst.povm.len();
        let d = relative_entropy(&inst.p, &build(&inst, tabular(m, 0.0), Divergence::Dv).born(&inst.gamma).unwrap());
        let net = build(&inst, mlp(m, trial), Divergence::Dv);
        let w = random_vector(&mut rng, net.dim_w(), 2.0);
        assert!(net.value(&inst.gamma, &w, KEY).unwrap() <= d + 1e-10);

        let w = random_vector(&mut rng, m, 2.0);
        let plain = build(&inst, tabular(m, 0.0), Divergence::Dv).value(&inst.gamma, &w, KEY).unwrap();
        let reg = build(&inst, tabular(m, 0.7), Divergence::Dv).value(&inst.gamma, &w, KEY).unwrap();
        assert!(reg < plain);
        assert!((plain - reg - 0.35 * w.norm_squared()).abs() < 1e-12);
    }
}

#[test]
fn renyi_gamma_gradient_is_rescaled_dv_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..5 {
        let inst = instance(&mut rng, 2);
        let m = inst.povm.len();
        let dv = build(&inst, mlp(m, trial), Divergence::Dv);
        let w = random_vector(&mut rng, dv.dim_w(), 1.0);
        let base = dv.gradients(&inst.gamma, &w, KEY).unwrap().grad_gamma;
        for alpha in [0.5, 2.0] {
            let r = build(&inst, mlp(m, trial), Divergence::Renyi { alpha });
            let g = r.gradients(&inst.gamma, &w, KEY).unwrap().grad_gamma;
            // DV carries −∂⟨O_w⟩, Rényi (1−α)∂⟨O_w⟩
            assert_eq!(g, &base * (alpha - 1.0));
        }
    }
}

#[test]
fn tabular_hessian_at_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = instance(&mut rng, 2);
    let m = inst.povm.len();
    let lambda = 0.3;
    let obj = build(&inst, tabular(m, lambda), Divergence::Dv);
    let q = obj.born(&inst.gamma).unwrap();
    let h = obj.hessians(&inst.gamma, &DVector::zeros(m), KEY).unwrap();
    let want = DMatrix::from_fn(m, m, |a, b| if a == b { -q.prob(a) - lambda } else { 0.0 });
    assert!((&h.h_ww - want).amax() < 1e-15);
    let max_eig = h.h_ww.symmetric_eigenvalues().max();
    assert!(max_eig <= -lambda + 1e-8);

    // one-hot at w = 0: H_wγ[ℓ] = ∂_γ(−q(ℓ))
    let jac = {
        let snap = ModelSnapshot::from_gamma(&inst.family, inst.gamma.as_slice()).unwrap();
        let terms = ChannelTerms::new(&inst.family, &snap);
        born_jacobian(&snap, &terms, &inst.povm, &q).unwrap()
    };
    assert!((&h.h_wgamma + &jac).amax() < 1e-14);
}

#[test]
fn commuting_family_has_no_phi_columns() {
    let family = HamiltonianFamily::from_letters(&["ZI", "IZ", "ZZ"], &["ZI", "ZZ"]).unwrap();
    let povm = Povm::computational(2);
    let p = Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let obj = BornObjective::new(family, povm, mlp(4, 0), exact(Divergence::Dv, p)).unwrap();
    let gamma = DVector::from_vec(vec![0.3, -0.5, 0.2, 1.1, -0.7]);
    let w = obj.critic_template().params().clone();
    let g = obj.gradients(&gamma, &w, KEY).unwrap();
    let h = obj.hessians(&gamma, &w, KEY).unwrap();
    assert!(g.grad_gamma.rows(3, 2).amax() < 1e-12);
    assert!(h.h_wgamma.columns(3, 2).amax() < 1e-12);
}

#[test]
fn blocks_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let divergences = [
        Divergence::Dv,
        Divergence::Renyi { alpha: 0.5 },
        Divergence::Renyi { alpha: 2.0 },
    ];
    for trial in 0..12 {
        let inst = instance(&mut rng, 2);
        let m = inst.povm.len();
        let divergence = divergences[trial % 3];
        let critic = match trial % 4 {
            0 => tabular(m, 0.0),
            1 if divergence == Divergence::Dv => tabular(m, 0.4),
            _ => mlp(m, trial as u64),
        };
        let obj = build(&inst, critic, divergence);
        let w = random_vector(&mut rng, obj.dim_w(), 0.8);
        let report = finite_difference_check(&obj, &inst.gamma, &w, KEY).unwrap();
        assert!(report.passes(1e-5, 1e-3), "trial {trial}: {report:?}");
    }
}

#[test]
fn gradient_bounds_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // w = 0, J = 2, K = 1: 4·1·3
    let family = HamiltonianFamily::from_letters(&["Z", "X"], &["Y"]).unwrap();
    assert_eq!(bound_gradient(&family, &tabular(2, 0.0)).gamma_sq, 12.0);
    for trial in 0..20 {
        let inst = instance(&mut rng, 2);
        let m = inst.povm.len();
        let critic = if trial % 2 == 0 { tabular(m, 0.5 * (trial % 4) as f64) } else { mlp(m, trial) };
        let obj = build(&inst, critic, Divergence::Dv);
        let w = random_vector(&mut rng, obj.dim_w(), 1.5);
        let at = obj.critic_at(&w).unwrap();
        let g = obj.gradients(&inst.gamma, &w, KEY).unwrap();
        let h = obj.hessians(&inst.gamma, &w, KEY).unwrap();
        let gb = bound_gradient(&inst.family, &at);
        let hb = bound_hessian(&inst.family, &at).unwrap();
        assert!(g.grad_gamma.norm_squared() <= gb.gamma_sq);
        assert!(g.grad_w.norm_squared() <= gb.w_sq);
        assert!(h.h_ww.clone().svd(false, false).singular_values.max().powi(2) <= hb.ww_sq);
        assert!(h.h_wgamma.clone().svd(false, false).singular_values.max().powi(2) <= hb.wgamma_sq);
    }
}

#[test]
fn inner_maximization_recovers_divergences() {
    // p = (1, 0) against the θ = 1 σ_Z model: D = ln(1 + e²)
    let family = HamiltonianFamily::from_letters(&["Z"], &[]).unwrap();
    let p = Distribution::point_mass(2, 0);
    let obj = BornObjective::new(family, Povm::computational(1), tabular(2, 0.0), exact(Divergence::Dv, p)).unwrap();
    let gamma = DVector::from_vec(vec![1.0]);
    let r = maximize_inner(&obj, &gamma, &DVector::zeros(2), InnerOptions::default(), KEY).unwrap();
    let want = (1.0 + 1f64.exp().powi(2)).ln();
    assert!((r.value - want).abs() < 1e-6, "{} vs {want}", r.value);

    // Rényi maximin at p = q: Q_α(p‖p) = 1
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = instance(&mut rng, 2);
    let m = inst.povm.len();
    let q = build(&inst, tabular(m, 0.0), Divergence::Dv).born(&inst.gamma).unwrap();
    for alpha in [0.5, 2.0] {
        let obj = BornObjective::new(
            inst.family.clone(),
            inst.povm.clone(),
            tabular(m, 0.0),
            exact(Divergence::Renyi { alpha }, q.clone()),
        )
        .unwrap();
        let opts = InnerOptions {
            minimize: !Divergence::Renyi { alpha }.is_minimax(),
            ..InnerOptions::default()
        };
        let w0 = random_vector(&mut rng, m, 0.5);
        let r = maximize_inner(&obj, &inst.gamma, &w0, opts, KEY).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "alpha {alpha}: {}", r.value);
    }
}

#[test]
fn construction_is_validated() {
    let family = HamiltonianFamily::from_letters(&["Z"], &["X"]).unwrap();
    let povm = Povm::computational(1);
    let p = Distribution::uniform(2);
    let make = |critic: Critic, divergence| {
        BornObjective::new(family.clone(), povm.clone(), critic, exact(divergence, p.clone()))
    };
    assert!(make(tabular(2, 0.0), Divergence::Renyi { alpha: 1.0 }).is_err());
    assert!(make(tabular(2, 0.0), Divergence::Renyi { alpha: -0.5 }).is_err());
    assert!(make(tabular(2, 0.1), Divergence::Renyi { alpha: 2.0 }).is_err());
    assert!(make(tabular(3, 0.0), Divergence::Dv).is_err());
    assert!(make(tabular(2, 0.1), Divergence::Dv).is_ok());
    let bad_target = ObjectiveConfig {
        target: Target::Table(Distribution::uniform(3)),
        ..exact(Divergence::Dv, p.clone())
    };
    assert!(BornObjective::new(family.clone(), povm.clone(), tabular(2, 0.0), bad_target).is_err());
    let samples = ObjectiveConfig {
        target: Target::Samples(vec![0, 0, 1, 0]),
        ..exact(Divergence::Dv, p.clone())
    };
    let obj = BornObjective::new(family, povm, tabular(2, 0.0), samples).unwrap();
    assert_eq!(obj.target_distribution().probs(), &[0.75, 0.25]);
}

fn shot_objective(epsilon: f64) -> BornObjective {
    let family = HamiltonianFamily::from_letters(&["Z", "X"], &["Y"]).unwrap();
    let p = Distribution::new(vec![0.7, 0.3]).unwrap();
    let config = ObjectiveConfig {
        divergence: Divergence::Dv,
        mode: Mode::Shots { epsilon, delta: 0.05 },
        target: Target::Table(p),
    };
    BornObjective::new(family, Povm::computational(1), tabular(2, 0.0), config).unwrap()
}

#[test]
fn shot_mode_is_deterministic_and_counts_shots() {
    let obj = shot_objective(0.2);
    let gamma = DVector::from_vec(vec![0.6, -0.4, 0.3]);
    let w = DVector::from_vec(vec![0.5, -0.2]);
    let a = obj.gradients(&gamma, &w, KEY).unwrap();
    let used = obj.shots_used();
    assert!(used > 0);
    let b = obj.gradients(&gamma, &w, KEY).unwrap();
    assert_eq!(a, b);
    assert_eq!(obj.shots_used(), 2 * used);
    assert_ne!(a, obj.gradients(&gamma, &w, StreamKey::new(8)).unwrap());
}

#[test]
fn shot_mode_converges_to_exact() {
    let gamma = DVector::from_vec(vec![0.6, -0.4, 0.3]);
    let w = DVector::from_vec(vec![0.5, -0.2]);
    let exact_obj = {
        let o = shot_objective(0.1);
        BornObjective::new(
            o.family().clone(),
            o.povm().clone(),
            o.critic_template().clone(),
            exact(Divergence::Dv, o.target_distribution().clone()),
        )
        .unwrap()
    };
    let want = exact_obj.gradients(&gamma, &w, KEY).unwrap();
    let want_v = exact_obj.value(&gamma, &w, KEY).unwrap();
    // RMS error over independent keys at ε and ε/2 (4× the shots)
    let rms = |eps: f64| {
        let obj = shot_objective(eps);
        let runs = 40;
        let (mut e_g, mut e_v) = (0.0, 0.0);
        for r in 0..runs {
            let key = StreamKey::new(100 + r);
            let g = obj.gradients(&gamma, &w, key).unwrap();
            e_g += (&g.grad_gamma - &want.grad_gamma).norm_squared() + (&g.grad_w - &want.grad_w).norm_squared();
            e_v += (obj.value(&gamma, &w, key).unwrap() - want_v).powi(2);
        }
        ((e_g / runs as f64).sqrt(), (e_v / runs as f64).sqrt())
    };
    let (g1, v1) = rms(0.2);
    let (g2, v2) = rms(0.1);
    // each of the five components is within ε with high probability
    assert!(g1 < 0.2 * 5f64.sqrt() && v1 < 0.2, "{g1} {v1}");
    // halving within statistical noise
    let ratio_g = g1 / g2;
    let ratio_v = v1 / v2;
    assert!((1.4..2.9).contains(&ratio_g), "gradient error ratio {ratio_g}");
    assert!((1.4..2.9).contains(&ratio_v), "value error ratio {ratio_v}");
}
