//! The high-peak tent density `p(t) = (2/π) ln coth(π|t|/2)`, its
//! inverse-CDF sampler and its Fourier transform.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Cutoff beyond which the remaining mass (about `(4/π²)e^{-π t}`) is negligible.
pub const DEFAULT_T_MAX: f64 = 12.0;
pub const DEFAULT_RESOLUTION: usize = 20_000;
const MIN_RESOLUTION: usize = 10_000;
const MIN_T_MAX: f64 = 10.0;
const SPECTRAL_TOL: f64 = 1e-10;
// innermost log-grid point; mass on [0, T_INNER] is ~2e-11
const T_INNER: f64 = 1e-12;

/// `p` at `|t| > 0` without the singularity check. `ln coth x` is written as
/// `ln(1+e^{-2x}) - ln(1-e^{-2x})`, with the second log evaluated on
/// whichever side keeps full precision.
fn density_abs(t: f64) -> f64 {
    let e = (-PI * t).exp();
    let log_one_minus = if e < 0.5 {
        (-e).ln_1p()
    } else {
        (-(-PI * t).exp_m1()).ln()
    };
    (2.0 / PI) * (e.ln_1p() - log_one_minus)
}

pub fn tent_density(t: f64) -> Result<f64> {
    if t == 0.0 {
        return Err(Error::TentSingularity);
    }
    Ok(density_abs(t.abs()))
}

/// Tabulated CDF on `[0, t_max]` for inverse-transform sampling of `|t|`.
#[derive(Clone, Debug)]
pub struct TentSampler {
    ts: Vec<f64>,
    cdf: Vec<f64>,
    t_max: f64,
}

impl TentSampler {
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ts.iter().copied().zip(self.cdf.iter().copied())
    }

    /// Piecewise-linear CDF of the signed variable.
    pub fn cdf(&self, t: f64) -> f64 {
        let a = t.abs();
        let half = if a >= self.t_max {
            *self.cdf.last().unwrap() - 0.5
        } else {
            let i = self.ts.partition_point(|&x| x <= a) - 1;
            let w = (a - self.ts[i]) / (self.ts[i + 1] - self.ts[i]);
            self.cdf[i] + w * (self.cdf[i + 1] - self.cdf[i]) - 0.5
        };
        if t >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let negative: bool = rng.random();
        let u: f64 = rng.random();
        let target = 0.5 + 0.5 * u;
        let last = self.cdf.len() - 1;
        let t = if target >= self.cdf[last] {
            self.t_max
        } else {
            let i = self.cdf.partition_point(|&c| c <= target).saturating_sub(1);
            let span = self.cdf[i + 1] - self.cdf[i];
            if span > 0.0 {
                self.ts[i] + (target - self.cdf[i]) / span * (self.ts[i + 1] - self.ts[i])
            } else {
                self.ts[i]
            }
        };
        if negative {
            -t
        } else {
            t
        }
    }
}

/// Builds the table: half the points log-spaced on `[1e-12, 1]`, the rest
/// uniform on `[1, t_max]`, plus the origin.
pub fn build_tent_sampler(resolution: usize, t_max: f64) -> Result<TentSampler> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::Argument(format!(
            "tent sampler resolution {resolution} below {MIN_RESOLUTION}"
        )));
    }
    if !t_max.is_finite() || t_max < MIN_T_MAX {
        return Err(Error::Argument(format!("tent sampler cutoff {t_max} below {MIN_T_MAX}")));
    }
    let n_log = resolution / 2;
    let n_lin = resolution - n_log;
    let mut ts = Vec::with_capacity(resolution + 1);
    ts.push(0.0);
    let (l0, l1) = (T_INNER.ln(), 0.0f64);
    for i in 0..n_log {
        ts.push((l0 + (l1 - l0) * i as f64 / n_log as f64).exp());
    }
    for i in 0..=n_lin {
        ts.push(1.0 + (t_max - 1.0) * i as f64 / n_lin as f64);
    }
    let mut cdf = Vec::with_capacity(ts.len());
    let mut acc = 0.5;
    cdf.push(acc);
    for w in ts.windows(2) {
        acc += integrate(density_abs, &[w[0], w[1]], 1e-17, 64).value;
        cdf.push(acc);
    }
    if acc < 1.0 - 1e-8 {
        return Err(Error::Numerical(format!("tent CDF reaches only {acc} at {t_max}")));
    }
    Ok(TentSampler { ts, cdf, t_max })
}

/// Process-wide sampler at the default resolution and cutoff.
pub fn default_tent_sampler() -> &'static TentSampler {
    static SAMPLER: OnceLock<TentSampler> = OnceLock::new();
    SAMPLER.get_or_init(|| {
        build_tent_sampler(DEFAULT_RESOLUTION, DEFAULT_T_MAX).expect("default tent grid is valid")
    })
}

pub fn sample_tent<R: Rng + ?Sized>(sampler: &TentSampler, rng: &mut R) -> f64 {
    sampler.sample(rng)
}

/// `ĥ(Δ) = ∫ p(t) cos(Δt) dt`, by adaptive quadrature on `[0, 12]`.
pub fn tent_spectral_weight(gap: f64) -> f64 {
    if gap == 0.0 {
        return 1.0;
    }
    spectral_weight_with(gap, SPECTRAL_TOL, DEFAULT_T_MAX)
}

pub(crate) fn spectral_weight_with(gap: f64, tol: f64, t_max: f64) -> f64 {
    let gap = gap.abs();
    // panels no wider than half a period so the oscillation is resolved from the start
    let width = (PI / gap).min(0.5);
    let n = (t_max / width).ceil() as usize;
    let breaks: Vec<f64> = (0..=n).map(|i| (i as f64 * width).min(t_max)).collect();
    let r = integrate(|t| density_abs(t) * (gap * t).cos(), &breaks, 0.5 * tol, 20_000);
    2.0 * r.value
}
