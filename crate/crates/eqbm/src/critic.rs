//! Critic functions `T_w : Z → R`: a small tanh network and a model linear
//! in a fixed feature map.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channels::Observable;
use crate::error::{Error, Result};
use crate::model::Povm;

/// Outputs are clamped to `±CLAMP` before exponentiation.
pub const CLAMP: f64 = 30.0;
const HESSIAN_STEP: f64 = 1e-4;
pub const DEFAULT_HIDDEN: usize = 16;
const INIT_RANGE: f64 = 0.5;

/// Per-outcome input vectors `ζ(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    rows: Vec<DVector<f64>>,
}

impl FeatureMap {
    pub fn one_hot(outcomes: usize) -> Self {
        let rows = (0..outcomes)
            .map(|z| {
                let mut v = DVector::zeros(outcomes);
                v[z] = 1.0;
                v
            })
            .collect();
        Self { rows }
    }

    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width == 0 {
            return Err(Error::Argument("feature map needs at least one outcome and one feature".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Length {
                what: "feature vector",
                expected: width,
                found: bad.len(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Argument("feature values must be finite".into()));
        }
        Ok(Self {
            rows: rows.into_iter().map(DVector::from_vec).collect(),
        })
    }

    pub fn outcomes(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, z: usize) -> &DVector<f64> {
        &self.rows[z]
    }

    /// `max_z |ζ_ℓ(z)|` for each coordinate ℓ.
    pub fn sup_norms(&self) -> Vec<f64> {
        (0..self.width())
            .map(|l| self.rows.iter().fold(0.0f64, |m, r| m.max(r[l].abs())))
            .collect()
    }
}

/// `T_w(z) = wᵀζ(z)`, with an optional quadratic penalty strength `λ`
/// applied by the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCritic {
    w: DVector<f64>,
    features: FeatureMap,
    lambda: f64,
}

impl LinearCritic {
    pub fn new(features: FeatureMap, w: DVector<f64>, lambda: f64) -> Result<Self> {
        if w.len() != features.width() {
            return Err(Error::Length {
                what: "linear critic weights",
                expected: features.width(),
                found: w.len(),
            });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Argument(format!("regularization {lambda} must be nonnegative")));
        }
        Ok(Self { w, features, lambda })
    }

    /// One-hot features: `T_w(z) = w_z`, a universal critic on `Z`.
    pub fn tabular(outcomes: usize, lambda: f64) -> Result<Self> {
        Self::new(FeatureMap::one_hot(outcomes), DVector::zeros(outcomes), lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }
}

/// Fully connected network with tanh hidden layers and a scalar linear
/// output. Parameters are stored layer by layer: weights row-major, then
/// biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpCritic {
    layer_sizes: Vec<usize>,
    params: DVector<f64>,
    features: FeatureMap,
}

fn mlp_param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpCritic {
    /// Random initialization, uniform in `[-0.5, 0.5]`.
    pub fn new(features: FeatureMap, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![features.width()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DVector::from_fn(mlp_param_count(&sizes), |_, _| rng.random_range(-INIT_RANGE..=INIT_RANGE));
        Self::from_params(features, sizes, params)
    }

    pub fn from_params(features: FeatureMap, layer_sizes: Vec<usize>, params: DVector<f64>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Argument(format!("invalid layer sizes {layer_sizes:?}")));
        }
        if layer_sizes[0] != features.width() || *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Argument(format!(
                "layer sizes {layer_sizes:?} must start at the feature width {} and end at 1",
                features.width()
            )));
        }
        let expected = mlp_param_count(&layer_sizes);
        if params.len() != expected {
            return Err(Error::Length {
                what: "network parameters",
                expected,
                found: params.len(),
            });
        }
        Ok(Self {
            layer_sizes,
            params,
            features,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    fn layer_views(&self) -> Vec<(DMatrix<f64>, DVector<f64>, usize)> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let weights = DMatrix::from_row_slice(n_out, n_in, &self.params.as_slice()[offset..offset + n_out * n_in]);
                let bias = DVector::from_column_slice(&self.params.as_slice()[offset + n_out * n_in..offset + n_out * n_in + n_out]);
                let start = offset;
                offset += n_out * n_in + n_out;
                (weights, bias, start)
            })
            .collect()
    }

    fn forward(&self, z: usize) -> Vec<DVector<f64>> {
        let layers = self.layer_views();
        let last = layers.len() - 1;
        let mut acts = vec![self.features.row(z).clone()];
        for (i, (w, b, _)) in layers.iter().enumerate() {
            let pre = w * acts.last().unwrap() + b;
            acts.push(if i < last { pre.map(f64::tanh) } else { pre });
        }
        acts
    }

    fn value(&self, z: usize) -> f64 {
        self.forward(z).last().unwrap()[0]
    }

    /// Backpropagation through the stored activations.
    fn grad(&self, z: usize) -> DVector<f64> {
        let layers = self.layer_views();
        let acts = self.forward(z);
        let mut grad = DVector::zeros(self.params.len());
        let mut delta = DVector::from_element(1, 1.0);
        for i in (0..layers.len()).rev() {
            let (w, _, start) = &layers[i];
            let input = &acts[i];
            let (n_out, n_in) = w.shape();
            for r in 0..n_out {
                for c in 0..n_in {
                    grad[start + r * n_in + c] = delta[r] * input[c];
                }
                grad[start + n_out * n_in + r] = delta[r];
            }
            if i > 0 {
                // hidden activations are tanh: derivative 1 − a²
                let back = w.transpose() * &delta;
                delta = back.zip_map(input, |g, a| g * (1.0 - a * a));
            }
        }
        grad
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Critic {
    Mlp(MlpCritic),
    Linear(LinearCritic),
}

/// Exponentiated critic outputs over the whole alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpTable {
    /// Clamped values `T_w(z)`.
    pub values: Vec<f64>,
    pub exp: Vec<f64>,
    /// Number of outcomes whose output hit the clamp.
    pub clamped: usize,
}

impl Critic {
    pub fn outcomes(&self) -> usize {
        self.features().outcomes()
    }

    pub fn features(&self) -> &FeatureMap {
        match self {
            Critic::Mlp(m) => &m.features,
            Critic::Linear(l) => &l.features,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    pub fn params(&self) -> &DVector<f64> {
        match self {
            Critic::Mlp(m) => &m.params,
            Critic::Linear(l) => &l.w,
        }
    }

    pub fn with_params(&self, params: DVector<f64>) -> Result<Self> {
        if params.len() != self.num_params() {
            return Err(Error::Length {
                what: "critic parameters",
                expected: self.num_params(),
                found: params.len(),
            });
        }
        let mut out = self.clone();
        match &mut out {
            Critic::Mlp(m) => m.params = params,
            Critic::Linear(l) => l.w = params,
        }
        Ok(out)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Critic::Linear(_))
    }

    /// Regularization strength; always zero for networks.
    pub fn lambda(&self) -> f64 {
        match self {
            Critic::Mlp(_) => 0.0,
            Critic::Linear(l) => l.lambda,
        }
    }

    fn check(&self, z: usize) -> Result<()> {
        if z >= self.outcomes() {
            return Err(Error::Index {
                what: "outcome",
                index: z,
                len: self.outcomes(),
            });
        }
        Ok(())
    }

    pub fn value(&self, z: usize) -> Result<f64> {
        self.check(z)?;
        Ok(match self {
            Critic::Mlp(m) => m.value(z),
            Critic::Linear(l) => l.w.dot(l.features.row(z)),
        })
    }

    pub fn grad(&self, z: usize) -> Result<DVector<f64>> {
        self.check(z)?;
        Ok(match self {
            Critic::Mlp(m) => m.grad(z),
            Critic::Linear(l) => l.features.row(z).clone(),
        })
    }

    /// `∇²_w T_w(z)`: zero for the linear model, central differences of the
    /// analytic gradient (symmetrized) for networks.
    pub fn hessian(&self, z: usize) -> Result<DMatrix<f64>> {
        self.check(z)?;
        let n = self.num_params();
        match self {
            Critic::Linear(_) => Ok(DMatrix::zeros(n, n)),
            Critic::Mlp(m) => {
                let mut h = DMatrix::zeros(n, n);
                let mut probe = m.clone();
                for k in 0..n {
                    let base = m.params[k];
                    probe.params[k] = base + HESSIAN_STEP;
                    let plus = probe.grad(z);
                    probe.params[k] = base - HESSIAN_STEP;
                    let minus = probe.grad(z);
                    probe.params[k] = base;
                    h.set_column(k, &((plus - minus) / (2.0 * HESSIAN_STEP)));
                }
                Ok((&h + h.transpose()) * 0.5)
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.outcomes()).map(|z| self.value(z).expect("in range")).collect()
    }

    pub fn grads(&self) -> Vec<DVector<f64>> {
        (0..self.outcomes()).map(|z| self.grad(z).expect("in range")).collect()
    }

    pub fn exp_table(&self) -> ExpTable {
        let mut clamped = 0;
        let values: Vec<f64> = self
            .values()
            .into_iter()
            .map(|t| {
                if t.abs() > CLAMP || t.is_nan() {
                    clamped += 1;
                    if t.is_nan() {
                        0.0
                    } else {
                        t.clamp(-CLAMP, CLAMP)
                    }
                } else {
                    t
                }
            })
            .collect();
        let exp = values.iter().map(|t| t.exp()).collect();
        ExpTable { values, exp, clamped }
    }
}

fn check_povm(critic: &Critic, povm: &Povm) -> Result<()> {
    if critic.outcomes() != povm.len() {
        return Err(Error::Length {
            what: "critic alphabet",
            expected: povm.len(),
            found: critic.outcomes(),
        });
    }
    Ok(())
}

/// `O_w = Σ_z e^{T_w(z)} Λ_z`.
pub fn observable_o_w<'a>(critic: &Critic, povm: &'a Povm) -> Result<Observable<'a>> {
    check_povm(critic, povm)?;
    Observable::new(critic.exp_table().exp, povm)
}

/// `P_{w_ℓ} = Σ_z e^{T_w(z)} ∂_{w_ℓ}T_w(z) Λ_z`.
pub fn observable_p_wl<'a>(critic: &Critic, povm: &'a Povm, l: usize) -> Result<Observable<'a>> {
    check_povm(critic, povm)?;
    if l >= critic.num_params() {
        return Err(Error::Index {
            what: "critic parameter",
            index: l,
            len: critic.num_params(),
        });
    }
    let exp = critic.exp_table().exp;
    let payoff = (0..critic.outcomes())
        .map(|z| Ok(exp[z] * critic.grad(z)?[l]))
        .collect::<Result<Vec<_>>>()?;
    Observable::new(payoff, povm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexMatrix;
    use proptest::prelude::*;

    fn random_mlp(seed: u64, outcomes: usize, hidden: &[usize]) -> Critic {
        Critic::Mlp(MlpCritic::new(FeatureMap::one_hot(outcomes), hidden, seed).unwrap())
    }

    fn fd_grad(c: &Critic, z: usize) -> DVector<f64> {
        let h = 1e-6;
        let p = c.params().clone();
        DVector::from_fn(p.len(), |k, _| {
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += h;
            b[k] -= h;
            (c.with_params(a).unwrap().value(z).unwrap() - c.with_params(b).unwrap().value(z).unwrap()) / (2.0 * h)
        })
    }

    fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).amax() / b.amax().max(1e-8)
    }

    #[test]
    fn linear_basics() {
        let c = Critic::Linear(LinearCritic::tabular(2, 0.0).unwrap());
        assert_eq!(c.values(), vec![0.0, 0.0]);
        let c = c.with_params(DVector::from_vec(vec![1.5, -2.0])).unwrap();
        assert_eq!(c.values(), vec![1.5, -2.0]);
        assert_eq!(c.grad(1).unwrap(), DVector::from_vec(vec![0.0, 1.0]));
        assert_eq!(c.hessian(0).unwrap(), DMatrix::zeros(2, 2));
        assert!(matches!(c.value(2), Err(Error::Index { .. })));
    }

    #[test]
    fn zero_output_layer_gives_zero() {
        let features = FeatureMap::one_hot(3);
        let sizes = vec![3, 4, 1];
        let n = mlp_param_count(&sizes);
        let mut params = DVector::from_element(n, 0.3);
        // output layer: 4 weights + 1 bias at the end
        for k in n - 5..n {
            params[k] = 0.0;
        }
        let c = Critic::Mlp(MlpCritic::from_params(features, sizes, params).unwrap());
        assert_eq!(c.values(), vec![0.0; 3]);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let c = random_mlp(seed, 4, &[5, 3]);
            for z in 0..4 {
                let g = c.grad(z).unwrap();
                assert!(rel(&g, &fd_grad(&c, z)) < 1e-6, "seed {seed} z {z}");
            }
        }
    }

    #[test]
    fn output_scaling_scales_output_gradient() {
        let c = random_mlp(3, 3, &[6]);
        let n = c.num_params();
        let mut scaled = c.params().clone();
        // output weights (6) and bias (1) occupy the tail
        for k in n - 7..n {
            scaled[k] *= 2.5;
        }
        let s = c.with_params(scaled).unwrap();
        for z in 0..3 {
            let (g, gs) = (c.grad(z).unwrap(), s.grad(z).unwrap());
            // output-layer gradient block is the hidden activation: unchanged
            for k in n - 7..n {
                assert!((g[k] - gs[k]).abs() < 1e-15);
            }
            // earlier blocks scale with the output weights
            for k in 0..n - 7 {
                assert!((gs[k] - 2.5 * g[k]).abs() < 1e-12);
            }
            assert!((s.value(z).unwrap() - 2.5 * c.value(z).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_hessian_checks() {
        for seed in 0..20 {
            let c = random_mlp(100 + seed, 3, &[4]);
            let z = (seed % 3) as usize;
            let h = c.hessian(z).unwrap();
            assert!((&h - h.transpose()).amax() <= 1e-6 * h.amax().max(1e-8));
            let v = DVector::from_fn(c.num_params(), |k, _| ((k * 7 + 3) % 5) as f64 - 2.0);
            let eps = 1e-5;
            let plus = c.with_params(c.params() + &v * eps).unwrap().grad(z).unwrap();
            let minus = c.with_params(c.params() - &v * eps).unwrap().grad(z).unwrap();
            let fd = (plus - minus) / (2.0 * eps);
            assert!(rel(&(&h * &v), &fd) < 1e-4, "seed {seed}");
        }
    }

    #[test]
    fn observables() {
        let povm = Povm::computational(1);
        let c = Critic::Linear(LinearCritic::tabular(2, 0.0).unwrap());
        let o = observable_o_w(&c, &povm).unwrap();
        assert!(o.operator().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        for l in 0..2 {
            let p = observable_p_wl(&c, &povm, l).unwrap();
            assert!(p.operator().max_abs_diff(povm.effect(l)) < 1e-15);
        }
        assert!(observable_p_wl(&c, &povm, 2).is_err());
        let c = c.with_params(DVector::from_vec(vec![2f64.ln(), 0.0])).unwrap();
        let o = observable_o_w(&c, &povm).unwrap();
        let want = ComplexMatrix::from_real_diagonal(&[2.0, 1.0]);
        assert!(o.operator().max_abs_diff(&want) < 1e-15);
        assert!((o.norm() - 2.0).abs() < 1e-15);

        let mlp = random_mlp(7, 2, &[3]);
        for l in 0..mlp.num_params() {
            let p = observable_p_wl(&mlp, &povm, l).unwrap();
            for z in 0..2 {
                let want = mlp.value(z).unwrap().exp() * fd_grad(&mlp, z)[l];
                assert!((p.payoff()[z] - want).abs() < 1e-6 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn clamp_counts_runaway_outputs() {
        let c = Critic::Linear(LinearCritic::tabular(3, 0.0).unwrap())
            .with_params(DVector::from_vec(vec![40.0, -50.0, 1.0]))
            .unwrap();
        let t = c.exp_table();
        assert_eq!(t.clamped, 2);
        assert_eq!(t.values, vec![30.0, -30.0, 1.0]);
    }

    #[test]
    fn construction_errors() {
        assert!(FeatureMap::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(LinearCritic::new(FeatureMap::one_hot(2), DVector::zeros(3), 0.0).is_err());
        assert!(LinearCritic::tabular(2, -1.0).is_err());
        let f = FeatureMap::one_hot(2);
        assert!(MlpCritic::from_params(f.clone(), vec![2, 1], DVector::zeros(2)).is_err());
        assert!(MlpCritic::from_params(f, vec![3, 1], DVector::zeros(4)).is_err());
    }

    proptest! {
        #[test]
        fn linear_superposition(
            w1 in prop::collection::vec(-3.0f64..3.0, 3),
            w2 in prop::collection::vec(-3.0f64..3.0, 3),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let features = FeatureMap::new(vec![vec![1.0, 0.5, -2.0], vec![0.0, 1.0, 3.0]]).unwrap();
            let mk = |w: Vec<f64>| Critic::Linear(LinearCritic::new(features.clone(), DVector::from_vec(w), 0.0).unwrap());
            let (c1, c2) = (mk(w1.clone()), mk(w2.clone()));
            let mix = mk(w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect());
            for z in 0..2 {
                let lhs = mix.value(z).unwrap();
                let rhs = a * c1.value(z).unwrap() + b * c2.value(z).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }

        #[test]
        fn tabular_reproduces_any_table(table in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            let c = Critic::Linear(LinearCritic::tabular(table.len(), 0.0).unwrap())
                .with_params(DVector::from_vec(table.clone()))
                .unwrap();
            prop_assert_eq!(c.values(), table);
        }
    }
}
