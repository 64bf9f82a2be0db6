//! Distributions of the dimensionless eigenvalue shifts `λ_j` and the
//! characteristic functions of their pairwise differences.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::C64;

/// Normal distribution with density `exp[-(λ-λ0)²/(2σ²)] / (σ√2π)`.
/// `width` is the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianScalar {
    center: f64,
    width: f64,
}

impl GaussianScalar {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::param("center", format!("must be finite, got {center}")));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::param("sigma", format!("must be positive and finite, got {width}")));
        }
        Ok(Self { center, width })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn variance(&self) -> f64 {
        self.width * self.width
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.center + self.width * z
    }
}

/// Joint distribution of `(λ_1, …, λ_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    /// One scalar drives every level: `λ_j = w_j · x`.
    SharedScalar { dist: GaussianScalar, weights: Vec<f64> },
    /// Independent per-level variables.
    Independent { dists: Vec<GaussianScalar> },
}

impl NoiseModel {
    pub fn shared(dist: GaussianScalar, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::param("weights", "need at least one level"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::param("weights", format!("must be finite, got {w}")));
        }
        Ok(Self::SharedScalar { dist, weights })
    }

    pub fn independent(dists: Vec<GaussianScalar>) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::param("dists", "need at least one level"));
        }
        Ok(Self::Independent { dists })
    }

    pub fn iid(d: usize, dist: GaussianScalar) -> Result<Self> {
        Self::independent(vec![dist; d])
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::SharedScalar { weights, .. } => weights.len(),
            Self::Independent { dists } => dists.len(),
        }
    }

    pub fn is_iid(&self) -> bool {
        match self {
            Self::SharedScalar { .. } => false,
            Self::Independent { dists } => dists.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// One joint realization written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::SharedScalar { dist, weights } => {
                let x = dist.sample(rng);
                for (o, w) in out.iter_mut().zip(weights) {
                    *o = w * x;
                }
            }
            Self::Independent { dists } => {
                for (o, dist) in out.iter_mut().zip(dists) {
                    *o = dist.sample(rng);
                }
            }
        }
    }

    pub fn sample_shifts<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }

    /// `⟨λ_j⟩`.
    pub fn mean_shifts(&self) -> Vec<f64> {
        match self {
            Self::SharedScalar { dist, weights } => weights.iter().map(|w| w * dist.center()).collect(),
            Self::Independent { dists } => dists.iter().map(|d| d.center()).collect(),
        }
    }

    /// `Cov(λ_j, λ_k)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        match self {
            Self::SharedScalar { dist, weights } => {
                DMatrix::from_fn(d, d, |j, k| weights[j] * weights[k] * dist.variance())
            }
            Self::Independent { dists } => {
                DMatrix::from_fn(d, d, |j, k| if j == k { dists[j].variance() } else { 0.0 })
            }
        }
    }

    /// Mean of `Δ_jk = λ_j - λ_k`.
    pub fn pair_mean(&self, j: usize, k: usize) -> f64 {
        let m = self.mean_shifts();
        m[j] - m[k]
    }

    /// Variance of `Δ_jk`.
    pub fn pair_variance(&self, j: usize, k: usize) -> f64 {
        match self {
            Self::SharedScalar { dist, weights } => (weights[j] - weights[k]).powi(2) * dist.variance(),
            Self::Independent { dists } => {
                if j == k {
                    0.0
                } else {
                    dists[j].variance() + dists[k].variance()
                }
            }
        }
    }

    fn check_pair(&self, j: usize, k: usize) -> Result<()> {
        let d = self.dim();
        for idx in [j, k] {
            if idx >= d {
                return Err(Error::IndexOutOfRange { index: idx, dim: d });
            }
        }
        if j == k {
            return Err(Error::RepeatedIndex(vec![j, k]));
        }
        Ok(())
    }

    /// Characteristic function `φ*_jk(t) = E[e^{-itΔ_jk}]` of the pair.
    pub fn charfn_pair(&self, j: usize, k: usize) -> Result<GaussianCharFn> {
        self.check_pair(j, k)?;
        Ok(GaussianCharFn { mean: self.pair_mean(j, k), variance: self.pair_variance(j, k) })
    }
}

/// A characteristic function of an eigenvalue difference, `t ↦ φ*(t)`.
pub trait CharFn {
    fn value(&self, t: f64) -> C64;
    fn derivative(&self, t: f64) -> C64;

    /// `Re[φ̇*/φ*] = d/dt ln|φ*|`.
    fn log_derivative_re(&self, t: f64) -> f64 {
        (self.derivative(t) / self.value(t)).re
    }
}

/// `exp(-iμt - vt²/2)` for a normal difference with mean `μ`, variance `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCharFn {
    pub mean: f64,
    pub variance: f64,
}

impl CharFn for GaussianCharFn {
    fn value(&self, t: f64) -> C64 {
        C64::new(-0.5 * self.variance * t * t, -self.mean * t).exp()
    }

    fn derivative(&self, t: f64) -> C64 {
        C64::new(-self.variance * t, -self.mean) * self.value(t)
    }

    // Closed form; the quotient underflows once |φ| < 1e-300.
    fn log_derivative_re(&self, t: f64) -> f64 {
        -self.variance * t
    }
}

/// Independent stream `index` of the master seed. Realization `i` draws the
/// same numbers regardless of which worker evaluates it.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
