//! Time-dependent decoherence rates: the zeroth-order dephasing rate `Υ`,
//! the population-coupling rate `γ` and the coherence-transfer rate `Γ`.
//!
//! Closed forms assume symmetric (here Gaussian) difference distributions.
//! [`GammaMode::Exact`] evaluates the defining ensemble averages in closed
//! form for Gaussian noise, and [`DefinitionEstimator`] samples them.

use errorfunctions::ComplexErrorFunctions;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{stream_rng, CharFn, GaussianCharFn, NoiseModel};
use crate::quantum::{C64, I};

/// How the oscillatory prefactor of `γ` is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    /// `[1 - φ̄_jk(t)] · Re Υ_jk / (Ē_j - Ē_k)`.
    #[default]
    Full,
    /// The fast-decaying `φ̄_jk` contribution is dropped.
    Envelope,
    /// Defining averages of `γ` and `Γ` evaluated exactly for Gaussian
    /// noise, without the large-time approximation. `Γ` is then complex and
    /// non-zero even for i.i.d. noise; it grows like `e^{(v_rk - v_jk)t²/2}`,
    /// so long runs become stiff.
    Exact,
}

/// Noise-free energies plus noise statistics; everything the closed-form
/// rates need.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eps: Vec<f64>,
    noise: NoiseModel,
    mean_shift: Vec<f64>,
    mean_energy: Vec<f64>,
    pair_variance: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl SpectralData {
    pub fn new(eps: Vec<f64>, noise: NoiseModel) -> Result<Self> {
        if eps.len() != noise.dim() {
            return Err(Error::DimensionMismatch { expected: eps.len(), actual: noise.dim() });
        }
        if let Some(e) = eps.iter().find(|e| !e.is_finite()) {
            return Err(Error::param("eps", format!("energies must be finite, got {e}")));
        }
        let mean_shift = noise.mean_shifts();
        let mean_energy = eps.iter().zip(&mean_shift).map(|(e, l)| e + l).collect();
        let d = eps.len();
        let pair_variance = DMatrix::from_fn(d, d, |j, k| noise.pair_variance(j, k));
        let covariance = noise.covariance();
        Ok(Self { eps, noise, mean_shift, mean_energy, pair_variance, covariance })
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// `⟨λ⟩_j`.
    pub fn mean_shifts(&self) -> &[f64] {
        &self.mean_shift
    }

    /// `⟨E_j⟩ = ε_j + ⟨λ⟩_j`.
    pub fn mean_energies(&self) -> &[f64] {
        &self.mean_energy
    }

    /// `⟨E_j⟩ - ⟨E_k⟩`.
    pub fn splitting(&self, j: usize, k: usize) -> f64 {
        self.mean_energy[j] - self.mean_energy[k]
    }

    /// Variance of `λ_j - λ_k`.
    pub fn pair_variance(&self, j: usize, k: usize) -> f64 {
        self.pair_variance[(j, k)]
    }

    /// `Cov(λ_j - λ_k, λ_r - λ_j)`.
    pub fn transfer_covariance(&self, j: usize, k: usize, r: usize) -> f64 {
        transfer_covariance(&self.covariance, j, k, r)
    }

    pub fn charfn(&self, j: usize, k: usize) -> Result<GaussianCharFn> {
        self.noise.charfn_pair(j, k)
    }

    /// `φ̄_jk(t) = e^{-it(ε_j-ε_k)} φ*_jk(t)`.
    pub fn phi_bar(&self, j: usize, k: usize, t: f64) -> C64 {
        if j == k {
            return C64::new(1.0, 0.0);
        }
        let phi = GaussianCharFn { mean: self.mean_shift[j] - self.mean_shift[k], variance: self.pair_variance(j, k) };
        C64::new(0.0, -(self.eps[j] - self.eps[k]) * t).exp() * phi.value(t)
    }

    fn check_index(&self, idx: &[usize]) -> Result<()> {
        let d = self.dim();
        if let Some(&i) = idx.iter().find(|&&i| i >= d) {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        for (a, x) in idx.iter().enumerate() {
            if idx[a + 1..].contains(x) {
                return Err(Error::RepeatedIndex(idx.to_vec()));
            }
        }
        Ok(())
    }

    fn re_upsilon(&self, j: usize, k: usize, t: f64) -> f64 {
        if j == k {
            0.0
        } else {
            -self.pair_variance(j, k) * t
        }
    }
}

fn transfer_covariance(c: &DMatrix<f64>, j: usize, k: usize, r: usize) -> f64 {
    c[(j, r)] - c[(j, j)] - c[(k, r)] + c[(k, j)]
}

/// `(e^x - 1)/x` and `(e^x(x - 1) + 1)/x²`, stable near zero.
fn exp_ratios(x: C64) -> (C64, C64) {
    if x.norm() < 1e-2 {
        let e1 = 1.0 + x * (1.0 / 2.0 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)));
        let e2 = 0.5 + x * (1.0 / 3.0 + x * (1.0 / 8.0 + x * (1.0 / 30.0 + x / 144.0)));
        (e1, e2)
    } else {
        let ex = x.exp();
        ((ex - 1.0) / x, (ex * (x - 1.0) + 1.0) / (x * x))
    }
}

/// `(∫_0^t e^{P(s)} ds, ∫_0^t s e^{P(s)} ds)` with `P(s) = p0 + bs - vs²/2`,
/// `v ≥ 0`. The erfcx branches keep every exponential bounded by the
/// integrand's own size.
fn gaussian_moments(p0: C64, b: C64, v: f64, t: f64) -> (C64, C64) {
    if v * t * t < 1e-12 {
        let (e1, e2) = exp_ratios(b * t);
        let e0 = p0.exp();
        return (e0 * t * e1, e0 * t * t * e2);
    }
    let a = (0.5 * v).sqrt();
    let centre = b / v;
    let u0 = -centre * a;
    let u1 = (t - centre) * a;
    let e0 = p0.exp();
    let et = (p0 + b * t - 0.5 * v * t * t).exp();
    let scale = std::f64::consts::PI.sqrt() / (2.0 * a);
    let i0 = if centre.re <= 0.0 {
        (e0 * u0.erfcx() - et * u1.erfcx()) * scale
    } else if centre.re >= t {
        (et * (-u1).erfcx() - e0 * (-u0).erfcx()) * scale
    } else {
        let peak = (p0 + b * b / (2.0 * v)).exp();
        (peak * 2.0 - e0 * (-u0).erfcx() - et * u1.erfcx()) * scale
    };
    let i1 = (b * i0 - (et - e0)) / v;
    (i0, i1)
}

fn exact_gamma_small(splitting: f64, variance: f64, t: f64) -> C64 {
    let b = C64::new(0.0, -splitting);
    let (integral, _) = gaussian_moments(C64::new(0.0, 0.0), b, variance, t);
    let phi = C64::new(-0.5 * variance * t * t, -splitting * t).exp();
    let ups = C64::new(-variance * t, -splitting);
    I * (1.0 - phi + ups * integral)
}

/// `Γ_jkrj = i c ∫_0^t s E[φ_jk(t) φ_rj(s)] ds / φ̄_rk(t)` with
/// `c = Cov(W_jk, W_rj)`; the division is folded into the exponent.
#[allow(clippy::too_many_arguments)]
fn exact_gamma_big(w_jk: f64, v_jk: f64, w_rk: f64, v_rk: f64, w_rj: f64, v_rj: f64, c: f64, t: f64) -> C64 {
    if c == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let p0 = C64::new(0.5 * (v_rk - v_jk) * t * t, (w_rk - w_jk) * t);
    let b = C64::new(-c * t, -w_rj);
    let (_, first) = gaussian_moments(p0, b, v_rj, t);
    I * c * first
}

/// `Υ_jk(t) = -i(⟨E_j⟩ - ⟨E_k⟩) + Re[φ̇*_jk/φ*_jk]`; zero on the diagonal.
pub fn upsilon(sd: &SpectralData, j: usize, k: usize, t: f64) -> Result<C64> {
    sd.check_index(&[j])?;
    sd.check_index(&[k])?;
    if j == k {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(C64::new(sd.re_upsilon(j, k, t), -sd.splitting(j, k)))
}

/// `γ_jk(t)` in the closed form for symmetric noise.
pub fn gamma_small(sd: &SpectralData, j: usize, k: usize, t: f64, mode: GammaMode) -> Result<C64> {
    sd.check_index(&[j, k])?;
    let w = sd.splitting(j, k);
    if w == 0.0 {
        return Err(Error::DegenerateEnergies { j, k });
    }
    let envelope = sd.re_upsilon(j, k, t) / w;
    Ok(match mode {
        GammaMode::Envelope => C64::new(envelope, 0.0),
        GammaMode::Full => (C64::new(1.0, 0.0) - sd.phi_bar(j, k, t)) * envelope,
        GammaMode::Exact => exact_gamma_small(w, sd.pair_variance(j, k), t),
    })
}

/// `Γ_jkrj(t)` from its defining average, exact for Gaussian noise.
pub fn gamma_big_exact(sd: &SpectralData, j: usize, k: usize, r: usize, t: f64) -> Result<C64> {
    sd.check_index(&[j, k, r])?;
    Ok(exact_gamma_big(
        sd.splitting(j, k),
        sd.pair_variance(j, k),
        sd.splitting(r, k),
        sd.pair_variance(r, k),
        sd.splitting(r, j),
        sd.pair_variance(r, j),
        sd.transfer_covariance(j, k, r),
        t,
    ))
}

/// `Γ_jkrj(t) = [Re Υ_jk - Re Υ_rk] / (⟨E_j⟩ - ⟨E_k⟩)`; real-valued.
pub fn gamma_big(sd: &SpectralData, j: usize, k: usize, r: usize, t: f64) -> Result<C64> {
    sd.check_index(&[j, k, r])?;
    let num = sd.re_upsilon(j, k, t) - sd.re_upsilon(r, k, t);
    let w = sd.splitting(j, k);
    if w == 0.0 {
        if sd.pair_variance(j, k) == sd.pair_variance(r, k) {
            return Ok(C64::new(0.0, 0.0));
        }
        return Err(Error::DegenerateEnergies { j, k });
    }
    Ok(C64::new(num / w, 0.0))
}

/// The partner rate `Γ_kjjr` entering the Hermitian-conjugate term, built
/// from its own index pattern: `[Re Υ_kj - Re Υ_kr] / (⟨E_k⟩ - ⟨E_j⟩)`.
pub fn gamma_big_partner(sd: &SpectralData, k: usize, j: usize, r: usize, t: f64) -> Result<C64> {
    sd.check_index(&[j, k, r])?;
    let num = sd.re_upsilon(k, j, t) - sd.re_upsilon(k, r, t);
    let w = sd.splitting(k, j);
    if w == 0.0 {
        if sd.pair_variance(k, j) == sd.pair_variance(k, r) {
            return Ok(C64::new(0.0, 0.0));
        }
        return Err(Error::DegenerateEnergies { j: k, k: j });
    }
    Ok(C64::new(num / w, 0.0))
}

/// Which exponent to use in the two-level `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitExponent {
    /// `e^{-iλ0 t - σ²t²/2}`, as the characteristic function dictates.
    Derived,
    /// `e^{-iλ0 - σ²t²/2}`: the phase without its factor `t`.
    PhaseWithoutTime,
}

/// Two-level `γ(t) = -(σ²t/λ0)(1 - e^{…})`.
pub fn qubit_gamma(lambda0: f64, sigma: f64, t: f64, exponent: QubitExponent) -> C64 {
    let phase = match exponent {
        QubitExponent::Derived => lambda0 * t,
        QubitExponent::PhaseWithoutTime => lambda0,
    };
    let e = C64::new(-0.5 * sigma * sigma * t * t, -phase).exp();
    (C64::new(1.0, 0.0) - e) * (-sigma * sigma * t / lambda0)
}

/// Precomputed pair data for fast bulk rate evaluation inside the generator.
#[derive(Debug, Clone)]
pub struct RateTable {
    d: usize,
    mode: GammaMode,
    splitting: DMatrix<f64>,
    eps_diff: DMatrix<f64>,
    shift_diff: DMatrix<f64>,
    variance: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl RateTable {
    pub fn new(sd: &SpectralData, mode: GammaMode) -> Self {
        let d = sd.dim();
        Self {
            d,
            mode,
            splitting: DMatrix::from_fn(d, d, |j, k| sd.splitting(j, k)),
            eps_diff: DMatrix::from_fn(d, d, |j, k| sd.eps[j] - sd.eps[k]),
            shift_diff: DMatrix::from_fn(d, d, |j, k| sd.mean_shift[j] - sd.mean_shift[k]),
            variance: sd.pair_variance.clone(),
            covariance: sd.covariance.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> GammaMode {
        self.mode
    }

    pub fn splitting(&self, j: usize, k: usize) -> f64 {
        self.splitting[(j, k)]
    }

    pub fn pair_variance(&self, j: usize, k: usize) -> f64 {
        self.variance[(j, k)]
    }

    pub fn upsilon(&self, j: usize, k: usize, t: f64) -> C64 {
        if j == k {
            return C64::new(0.0, 0.0);
        }
        C64::new(-self.variance[(j, k)] * t, -self.splitting[(j, k)])
    }

    fn phi_bar(&self, j: usize, k: usize, t: f64) -> C64 {
        let v = self.variance[(j, k)];
        let phase = (self.eps_diff[(j, k)] + self.shift_diff[(j, k)]) * t;
        C64::new(-0.5 * v * t * t, -phase).exp()
    }

    /// `γ_jk(t)`; zero for degenerate pairs, which the generator rejects
    /// whenever they are coupled.
    pub fn gamma_small(&self, j: usize, k: usize, t: f64) -> C64 {
        let w = self.splitting[(j, k)];
        if j == k || w == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let envelope = -self.variance[(j, k)] * t / w;
        match self.mode {
            GammaMode::Envelope => C64::new(envelope, 0.0),
            GammaMode::Full => (C64::new(1.0, 0.0) - self.phi_bar(j, k, t)) * envelope,
            GammaMode::Exact => exact_gamma_small(w, self.variance[(j, k)], t),
        }
    }

    /// `Γ_jkrj(t)` for pairwise distinct indices, zero otherwise.
    pub fn gamma_big(&self, j: usize, k: usize, r: usize, t: f64) -> C64 {
        let w = self.splitting[(j, k)];
        if j == k || r == k || r == j {
            return C64::new(0.0, 0.0);
        }
        if self.mode == GammaMode::Exact {
            let c = transfer_covariance(&self.covariance, j, k, r);
            let var = &self.variance;
            return exact_gamma_big(
                w,
                var[(j, k)],
                self.splitting[(r, k)],
                var[(r, k)],
                self.splitting[(r, j)],
                var[(r, j)],
                c,
                t,
            );
        }
        if w == 0.0 {
            return C64::new(0.0, 0.0);
        }
        C64::new((self.variance[(r, k)] - self.variance[(j, k)]) * t / w, 0.0)
    }

    /// Coefficient of `V_jr ρ_rk` in `dρ_jk/dt` beyond the commutator:
    /// `γ_jk` when `r = k`, `Γ_jkrj` otherwise.
    pub fn transfer(&self, j: usize, k: usize, r: usize, t: f64) -> C64 {
        if j == k || r == j {
            C64::new(0.0, 0.0)
        } else if r == k {
            self.gamma_small(j, k, t)
        } else {
            self.gamma_big(j, k, r, t)
        }
    }
}

/// Monte Carlo estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: C64,
    pub stderr: f64,
}

/// `∫_0^t e^{iωs} ds`, stable as `ω → 0`.
fn phase_integral(omega: f64, t: f64) -> C64 {
    let x = omega * t;
    if x.abs() < 1e-5 {
        C64::new(t * (1.0 - x * x / 6.0), t * x / 2.0)
    } else {
        (C64::new(0.0, x).exp() - 1.0) / (I * omega)
    }
}

/// Evaluates the defining ensemble averages of the rates from sampled
/// energies `E_j = ε_j + λ_j`.
#[derive(Debug, Clone)]
pub struct DefinitionEstimator {
    eps: Vec<f64>,
    noise: NoiseModel,
    samples: usize,
    batches: usize,
    seed: u64,
}

/// Per-batch sample sums used by the rate estimators.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    phi_jk: C64,
    dphi_jk: C64,
    int_jk: C64,
    a: C64,
    da: C64,
    b: C64,
    db: C64,
    phi_rk: C64,
    phi_kr: C64,
    phi_kj: C64,
    dphi_kj: C64,
}

impl Moments {
    fn scale(mut self, s: f64) -> Self {
        for z in [
            &mut self.phi_jk,
            &mut self.dphi_jk,
            &mut self.int_jk,
            &mut self.a,
            &mut self.da,
            &mut self.b,
            &mut self.db,
            &mut self.phi_rk,
            &mut self.phi_kr,
            &mut self.phi_kj,
            &mut self.dphi_kj,
        ] {
            *z *= s;
        }
        self
    }
}

impl DefinitionEstimator {
    pub fn new(eps: Vec<f64>, noise: NoiseModel, samples: usize, seed: u64) -> Result<Self> {
        if eps.len() != noise.dim() {
            return Err(Error::DimensionMismatch { expected: eps.len(), actual: noise.dim() });
        }
        if samples < 64 {
            return Err(Error::param("samples", "need at least 64 samples for batch errors"));
        }
        Ok(Self { eps, noise, samples, batches: 32, seed })
    }

    fn batch_moments(&self, j: usize, k: usize, r: Option<usize>, t: f64) -> Vec<Moments> {
        let per = self.samples / self.batches;
        let mut rng = stream_rng(self.seed, 0);
        let mut lam = vec![0.0; self.eps.len()];
        let mut out = Vec::with_capacity(self.batches);
        for _ in 0..self.batches {
            let mut m = Moments::default();
            for _ in 0..per {
                self.noise.sample_into(&mut rng, &mut lam);
                let e = |a: usize| self.eps[a] + lam[a];
                let w_jk = e(j) - e(k);
                let phi_jk = C64::new(0.0, -w_jk * t).exp();
                m.phi_jk += phi_jk;
                m.dphi_jk += -I * w_jk * phi_jk;
                m.int_jk += phase_integral(-w_jk, t);
                m.phi_kj += phi_jk.conj();
                m.dphi_kj += I * w_jk * phi_jk.conj();
                if let Some(r) = r {
                    let w_jr = e(j) - e(r);
                    let w_rk = e(r) - e(k);
                    let phi_rk = C64::new(0.0, -w_rk * t).exp();
                    // A = φ_jk(t) ∫ φ_rj, B = φ_kj(t) ∫ φ_jr = conj(A)
                    let a = phi_jk * phase_integral(w_jr, t);
                    let da = -I * w_jk * a + phi_rk;
                    m.a += a;
                    m.da += da;
                    m.b += a.conj();
                    m.db += da.conj();
                    m.phi_rk += phi_rk;
                    m.phi_kr += phi_rk.conj();
                }
            }
            out.push(m.scale(1.0 / per as f64));
        }
        out
    }

    fn reduce(batches: &[Moments], f: impl Fn(&Moments) -> C64) -> Estimate {
        let n = batches.len() as f64;
        let mut total = Moments::default();
        for b in batches {
            total.phi_jk += b.phi_jk;
            total.dphi_jk += b.dphi_jk;
            total.int_jk += b.int_jk;
            total.a += b.a;
            total.da += b.da;
            total.b += b.b;
            total.db += b.db;
            total.phi_rk += b.phi_rk;
            total.phi_kr += b.phi_kr;
            total.phi_kj += b.phi_kj;
            total.dphi_kj += b.dphi_kj;
        }
        let value = f(&total.scale(1.0 / n));
        let vals: Vec<C64> = batches.iter().map(&f).collect();
        let mean = vals.iter().sum::<C64>() / n;
        let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        Estimate { value, stderr: (var / n).sqrt() }
    }

    pub fn upsilon(&self, j: usize, k: usize, t: f64) -> Estimate {
        let b = self.batch_moments(j, k, None, t);
        Self::reduce(&b, |m| m.dphi_jk / m.phi_jk)
    }

    /// `γ_jk = i(1 - φ̄_jk + Υ_jk ∫_0^t φ̄_jk)`.
    pub fn gamma_small(&self, j: usize, k: usize, t: f64) -> Estimate {
        let b = self.batch_moments(j, k, None, t);
        Self::reduce(&b, |m| I * (1.0 - m.phi_jk + m.dphi_jk / m.phi_jk * m.int_jk))
    }

    /// `Γ_jkrj` from its definition.
    pub fn gamma_big(&self, j: usize, k: usize, r: usize, t: f64) -> Estimate {
        let b = self.batch_moments(j, k, Some(r), t);
        Self::reduce(&b, |m| {
            let ups = m.dphi_jk / m.phi_jk;
            -I * ((m.da - ups * m.a) / m.phi_rk - 1.0)
        })
    }

    /// `Γ_kjjr` from its definition, sharing the samples of
    /// [`Self::gamma_big`] with the same `(j, k, r)`.
    pub fn gamma_big_partner(&self, j: usize, k: usize, r: usize, t: f64) -> Estimate {
        let b = self.batch_moments(j, k, Some(r), t);
        Self::reduce(&b, |m| {
            let ups = m.dphi_kj / m.phi_kj;
            -I * ((m.db - ups * m.b) / m.phi_kr - 1.0)
        })
    }
}
