//! Random Hamiltonian ensembles `H_λ = diag(ε + λ) + αV` with noise-free `V`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::quantum::{HermitianOperator, C64};
use crate::rates::SpectralData;

/// Tolerance for the zero-diagonal requirement on `V`.
const DIAGONAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HamiltonianEnsemble {
    spectral: SpectralData,
    v: HermitianOperator,
    alpha: f64,
}

impl HamiltonianEnsemble {
    pub fn new(spectral: SpectralData, v: HermitianOperator, alpha: f64) -> Result<Self> {
        if v.dim() != spectral.dim() {
            return Err(Error::DimensionMismatch { expected: spectral.dim(), actual: v.dim() });
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::param("alpha", format!("must be finite and non-negative, got {alpha}")));
        }
        for j in 0..v.dim() {
            let value = v.matrix()[(j, j)].norm();
            if value > DIAGONAL_TOL {
                return Err(Error::DiagonalPerturbation { index: j, value });
            }
        }
        Ok(Self { spectral, v, alpha })
    }

    pub fn dim(&self) -> usize {
        self.spectral.dim()
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn perturbation(&self) -> &HermitianOperator {
        &self.v
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// True when `H_λ` is real symmetric for every realization.
    pub fn is_real(&self) -> bool {
        self.v.is_real()
    }

    /// `H_λ` for the given shift vector.
    pub fn hamiltonian(&self, shifts: &[f64]) -> Result<HermitianOperator> {
        if shifts.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: shifts.len() });
        }
        let mut m = self.v.matrix().map(|z| z * self.alpha);
        for (j, (e, l)) in self.spectral.eps().iter().zip(shifts).enumerate() {
            m[(j, j)] = C64::new(e + l, 0.0);
        }
        HermitianOperator::new(m)
    }

    /// Real part of `H_λ` written into `out`; valid when [`Self::is_real`].
    pub fn real_hamiltonian_into(&self, shifts: &[f64], out: &mut DMatrix<f64>) {
        let d = self.dim();
        let v = self.v.matrix();
        for j in 0..d {
            for k in 0..d {
                out[(j, k)] = self.alpha * v[(j, k)].re;
            }
            out[(j, j)] = self.spectral.eps()[j] + shifts[j];
        }
    }

    pub fn sample_hamiltonian<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HermitianOperator> {
        let shifts = self.spectral.noise().sample_shifts(rng);
        self.hamiltonian(&shifts)
    }

    /// `H̄ = diag(⟨E⟩) + αV`.
    pub fn mean_hamiltonian(&self) -> HermitianOperator {
        let mut m = self.v.matrix().map(|z| z * self.alpha);
        for (j, e) in self.spectral.mean_energies().iter().enumerate() {
            m[(j, j)] = C64::new(*e, 0.0);
        }
        HermitianOperator::new(m).expect("mean Hamiltonian is Hermitian by construction")
    }

    /// `Cov(E_j, E_k)`; equals the noise covariance since `ε` is fixed.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.spectral.noise().covariance()
    }

    /// Smallest `|⟨E_j⟩ - ⟨E_k⟩|` over pairs with `V_jk ≠ 0`.
    pub fn min_coupled_gap(&self) -> Option<f64> {
        let d = self.dim();
        let mut gap: Option<f64> = None;
        for j in 0..d {
            for k in (j + 1)..d {
                if self.v.matrix()[(j, k)].norm() != 0.0 {
                    let g = self.spectral.splitting(j, k).abs();
                    gap = Some(gap.map_or(g, |x| x.min(g)));
                }
            }
        }
        gap
    }

    pub fn max_coupling(&self) -> f64 {
        self.v.matrix().iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}
