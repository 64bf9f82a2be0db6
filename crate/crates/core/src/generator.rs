//! First-order perturbative master equation for the ensemble-averaged state:
//! right-hand side, integration, short-time limit and asymptotic projection.

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::HamiltonianEnsemble;
use crate::error::{Error, Result};
use crate::ode::{self, Stepper};
use crate::quantum::{
    commutator, eigh, hermiticity_frobenius, symmetrize, CMatrix, DensityMatrix, HermitianOperator,
    SuperoperatorMatrix, C64, I,
};
use crate::rates::{GammaMode, RateTable};

/// Largest dimension for which the dense d²×d² superoperator is built.
pub const MAX_SUPEROPERATOR_DIM: usize = 12;

/// Relative gap below which `H̄` counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Output sample times plus the stepping strategy between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    pub stepper: Stepper,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, stepper: Stepper) -> Result<Self> {
        ode::check_times(&times)?;
        if times[0] != 0.0 {
            return Err(Error::param("times", "grid must start at t = 0"));
        }
        stepper.validate()?;
        Ok(Self { times, stepper })
    }

    /// `0, dt, 2dt, …, t_max`.
    pub fn uniform(t_max: f64, dt: f64, stepper: Stepper) -> Result<Self> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::param("t_max", format!("must be positive, got {t_max}")));
        }
        if !(dt > 0.0) || dt > t_max {
            return Err(Error::param("dt", format!("must lie in (0, t_max], got {dt}")));
        }
        let n = (t_max / dt).round() as usize;
        if ((n as f64) * dt - t_max).abs() > 1e-9 * t_max {
            return Err(Error::param("dt", format!("{dt} does not divide t_max = {t_max}")));
        }
        Self::new((0..=n).map(|i| i as f64 * dt).collect(), stepper)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_max(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// States on a time grid with run diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Smallest eigenvalue seen over all samples; negative values flag the
    /// non-positivity of the first-order generator.
    pub positivity_floor: f64,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub stats: ode::Stats,
}

impl Trajectory {
    pub fn element(&self, j: usize, k: usize) -> Vec<C64> {
        self.states.iter().map(|s| s.get(j, k)).collect()
    }

    pub fn coherence(&self) -> Vec<f64> {
        self.states.iter().map(DensityMatrix::total_coherence).collect()
    }

    pub fn purity(&self) -> Vec<f64> {
        self.states.iter().map(DensityMatrix::purity).collect()
    }

    pub fn last(&self) -> &DensityMatrix {
        &self.states[self.states.len() - 1]
    }
}

#[derive(Debug, Clone)]
pub struct PerturbativeGenerator {
    d: usize,
    alpha: f64,
    v: CMatrix,
    rates: RateTable,
    /// `(r, V_jr)` for every `r ≠ j` with a non-zero coupling.
    neighbours: Vec<Vec<(usize, C64)>>,
}

impl PerturbativeGenerator {
    pub fn new(ensemble: &HamiltonianEnsemble, mode: GammaMode) -> Result<Self> {
        let d = ensemble.dim();
        let sd = ensemble.spectral();
        let v = ensemble.perturbation().matrix().clone();
        let rates = RateTable::new(sd, mode);
        let neighbours: Vec<Vec<(usize, C64)>> = (0..d)
            .map(|j| (0..d).filter(|&r| r != j && v[(j, r)].norm() != 0.0).map(|r| (r, v[(j, r)])).collect())
            .collect();

        if ensemble.alpha() > 0.0 {
            for j in 0..d {
                for &(r, _) in &neighbours[j] {
                    if sd.splitting(j, r) == 0.0 {
                        return Err(Error::DegenerateEnergies { j, k: r });
                    }
                    // Γ_jkrj needs a finite 1/(Ē_j - Ē_k) unless its numerator vanishes.
                    for k in (0..d).filter(|&k| k != j && k != r) {
                        if sd.splitting(j, k) == 0.0 && sd.pair_variance(r, k) != sd.pair_variance(j, k) {
                            return Err(Error::DegenerateEnergies { j, k });
                        }
                    }
                }
            }
            if let Some(gap) = ensemble.min_coupled_gap() {
                let coupling = ensemble.alpha() * ensemble.max_coupling();
                if coupling >= gap {
                    warn!(
                        "perturbation α·max|V| = {coupling:.3} is not small against the smallest coupled gap {gap:.3}"
                    );
                }
            }
        }
        Ok(Self { d, alpha: ensemble.alpha(), v, rates, neighbours })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    /// `dρ̄/dt` at time `t`.
    pub fn rhs(&self, t: f64, rho: &CMatrix) -> CMatrix {
        let d = self.d;
        let mut out = CMatrix::zeros(d, d);
        for j in 0..d {
            for k in 0..d {
                out[(j, k)] = self.rates.upsilon(j, k, t) * rho[(j, k)];
            }
        }
        if self.alpha == 0.0 {
            return out;
        }
        let comm = commutator(&self.v, rho);
        let a = C64::new(self.alpha, 0.0);
        // coefficient of V_jr ρ_rk, precomputed per (j, k)
        let gamma = DMatrix::from_fn(d, d, |j, k| self.rates.gamma_small(j, k, t));
        for j in 0..d {
            for k in 0..d {
                let mut acc = -I * comm[(j, k)];
                if j != k {
                    // α Σ_r T_jkr V_jr ρ_rk
                    for &(r, vjr) in &self.neighbours[j] {
                        let c = if r == k { gamma[(j, k)] } else { self.rates.gamma_big(j, k, r, t) };
                        acc += c * vjr * rho[(r, k)];
                    }
                    // α Σ_r conj(T_kjr) V_rk ρ_jr
                    for &(r, vkr) in &self.neighbours[k] {
                        let c = if r == j { gamma[(k, j)] } else { self.rates.gamma_big(k, j, r, t) };
                        acc += c.conj() * vkr.conj() * rho[(j, r)];
                    }
                }
                out[(j, k)] += a * acc;
            }
        }
        out
    }

    /// Dense generator matrix `Q(t)`, for validation at small `d`.
    pub fn superoperator(&self, t: f64) -> Result<SuperoperatorMatrix> {
        if self.d > MAX_SUPEROPERATOR_DIM {
            return Err(Error::TooLarge { dim: self.d, max: MAX_SUPEROPERATOR_DIM });
        }
        Ok(SuperoperatorMatrix::from_linear_map(self.d, |m| self.rhs(t, m)))
    }

    pub fn integrate(&self, rho0: &DensityMatrix, grid: &TimeGrid) -> Result<Trajectory> {
        if rho0.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, actual: rho0.dim() });
        }
        let (mats, stats) =
            ode::integrate(|t, y| self.rhs(t, y), rho0.matrix(), grid.times(), grid.stepper, symmetrize)?;
        debug!("integrated {} samples: {:?}", mats.len(), stats);
        let mut positivity_floor = f64::INFINITY;
        let mut max_trace_error = 0.0f64;
        let mut max_hermiticity_error = 0.0f64;
        let mut states = Vec::with_capacity(mats.len());
        for m in mats {
            let tr = m.trace();
            max_trace_error = max_trace_error.max((tr - 1.0).norm());
            max_hermiticity_error = max_hermiticity_error.max(hermiticity_frobenius(&m));
            positivity_floor = positivity_floor.min(eigh(&m)?.values[0]);
            states.push(DensityMatrix::from_matrix_unchecked(m));
        }
        if positivity_floor < -1e-9 {
            debug!("perturbative state left the positive cone: min eigenvalue {positivity_floor:.3e}");
        }
        Ok(Trajectory {
            times: grid.times().to_vec(),
            states,
            positivity_floor,
            max_trace_error,
            max_hermiticity_error,
            stats,
        })
    }
}

/// Leading-order generator for `t → 0`:
/// `-i[H̄, ρ] + t (2 Cov_jk - Cov_jj - Cov_kk) ρ_jk`, with `Cov` the
/// covariance of the energies.
pub fn short_time_rhs(h_bar: &HermitianOperator, covariance: &DMatrix<f64>, t: f64, rho: &CMatrix) -> Result<CMatrix> {
    let d = h_bar.dim();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: covariance.nrows() });
    }
    if rho.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: rho.nrows() });
    }
    let mut out = commutator(h_bar.matrix(), rho).map(|z| -I * z);
    for j in 0..d {
        for k in 0..d {
            let c = 2.0 * covariance[(j, k)] - covariance[(j, j)] - covariance[(k, k)];
            out[(j, k)] += rho[(j, k)] * (c * t);
        }
    }
    Ok(out)
}

/// `Σ_n |n⟩⟨n|ρ0|n⟩⟨n|` over the eigenbasis of `H̄`.
pub fn asymptotic_state(h_bar: &HermitianOperator, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    if h_bar.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch { expected: h_bar.dim(), actual: rho0.dim() });
    }
    let eig = h_bar.eigh()?;
    let scale = eig.values.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let gap = eig.min_gap();
    if gap <= DEGENERACY_TOL * scale {
        return Err(Error::DegenerateSpectrum { gap });
    }
    if gap < 1e-6 * scale {
        warn!("mean Hamiltonian is nearly degenerate (gap {gap:.3e})");
    }
    let u = &eig.vectors;
    let rotated = u.adjoint() * rho0.matrix() * u;
    let diag = CMatrix::from_diagonal(&rotated.diagonal().map(|z| C64::new(z.re, 0.0)));
    let mut out = u * diag * u.adjoint();
    symmetrize(&mut out);
    Ok(DensityMatrix::from_matrix_unchecked(out))
}
