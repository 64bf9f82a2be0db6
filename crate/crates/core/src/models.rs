//! The three model systems: a noisy qubit, a tilted lattice with on-site
//! disorder, and a two-mode Bose–Hubbard double well with interaction noise.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::HamiltonianEnsemble;
use crate::error::{Error, Result};
use crate::noise::{GaussianScalar, NoiseModel};
use crate::quantum::{CVector, DensityMatrix, HermitianOperator, C64};
use crate::rates::{GammaMode, SpectralData};

/// Everything the generator and the Monte Carlo oracle consume.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub name: String,
    pub ensemble: HamiltonianEnsemble,
    pub rho0: DensityMatrix,
    /// The `γ` treatment matching the model's reference figure.
    pub gamma_mode: GammaMode,
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::param(name, format!("must be positive and finite, got {x}")));
    }
    Ok(())
}

fn finite(name: &'static str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::param(name, format!("must be finite, got {x}")));
    }
    Ok(())
}

/// `H_λ = (λ/2) σ_z + α σ_x`, `λ ~ N(λ0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitModel {
    pub lambda0: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl QubitModel {
    pub fn build(&self) -> Result<ModelBundle> {
        finite("lambda0", self.lambda0)?;
        positive("sigma", self.sigma)?;
        if self.lambda0 == 0.0 {
            return Err(Error::param("lambda0", "levels are degenerate on average"));
        }
        if self.lambda0.abs() < self.sigma + self.alpha {
            warn!(
                "qubit outside the non-degenerate regime: |λ0| = {} < σ + α = {}",
                self.lambda0.abs(),
                self.sigma + self.alpha
            );
        }
        let noise = NoiseModel::shared(GaussianScalar::new(self.lambda0, self.sigma)?, vec![0.5, -0.5])?;
        let sd = SpectralData::new(vec![0.0, 0.0], noise)?;
        let v = HermitianOperator::from_real(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))?;
        let ensemble = HamiltonianEnsemble::new(sd, v, self.alpha)?;
        let rho0 = DensityMatrix::pure(&CVector::from_element(2, C64::new(1.0, 0.0)))?;
        Ok(ModelBundle { name: "qubit".into(), ensemble, rho0, gamma_mode: GammaMode::Full })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "x")]
pub enum Coupling {
    None,
    NearestNeighbour,
    /// `V_jk = 1/|j - k|^x` for all `j ≠ k`.
    PowerLaw(f64),
}

impl Coupling {
    pub fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        if let Coupling::PowerLaw(x) = *self {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::param("x", format!("power-law exponent must be finite and >= 0, got {x}")));
            }
        }
        Ok(DMatrix::from_fn(d, d, |j, k| {
            let dist = j.abs_diff(k);
            match *self {
                _ if dist == 0 => 0.0,
                Coupling::None => 0.0,
                Coupling::NearestNeighbour => f64::from(dist == 1),
                Coupling::PowerLaw(x) => (dist as f64).powf(-x),
            }
        }))
    }

    pub fn label(&self) -> String {
        match self {
            Coupling::None => "none".into(),
            Coupling::NearestNeighbour => "nn".into(),
            Coupling::PowerLaw(x) => format!("x{x}"),
        }
    }
}

/// `H_λ = Σ_j (jT + λ_j)|j⟩⟨j| + αV` with i.i.d. `λ_j ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub d: usize,
    pub tilt: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub coupling: Coupling,
}

impl LatticeModel {
    pub fn build(&self) -> Result<ModelBundle> {
        if self.d < 2 {
            return Err(Error::param("d", format!("lattice needs at least 2 sites, got {}", self.d)));
        }
        finite("tilt", self.tilt)?;
        if self.tilt == 0.0 {
            return Err(Error::param("tilt", "must be non-zero"));
        }
        positive("sigma", self.sigma)?;
        if self.tilt.abs() <= 3.0 * self.sigma {
            warn!("tilt {} is not large against σ = {}", self.tilt, self.sigma);
        }
        let noise = NoiseModel::iid(self.d, GaussianScalar::new(0.0, self.sigma)?)?;
        let eps = (1..=self.d).map(|j| j as f64 * self.tilt).collect();
        let sd = SpectralData::new(eps, noise)?;
        let v = HermitianOperator::from_real(&self.coupling.matrix(self.d)?)?;
        let ensemble = HamiltonianEnsemble::new(sd, v, self.alpha)?;
        Ok(ModelBundle {
            name: format!("lattice_{}", self.coupling.label()),
            ensemble,
            rho0: gaussian_initial_state(self.d)?,
            gamma_mode: GammaMode::Envelope,
        })
    }
}

/// Pure state with amplitudes `∝ exp[-(j - (d+1)/2)² / (2d)]`, `j = 1…d`.
pub fn gaussian_initial_state(d: usize) -> Result<DensityMatrix> {
    if d < 2 {
        return Err(Error::param("d", format!("need d >= 2, got {d}")));
    }
    let center = (d as f64 + 1.0) / 2.0;
    let psi = CVector::from_fn(d, |i, _| {
        let x = (i + 1) as f64 - center;
        C64::new((-x * x / (2.0 * d as f64)).exp(), 0.0)
    });
    DensityMatrix::pure(&psi)
}

/// Two-mode Bose–Hubbard double well with `N` bosons, interaction noise
/// `U = U0 + δU`, `δU ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoseHubbardModel {
    pub n: usize,
    pub hopping: f64,
    pub u0: f64,
    pub tilt: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl BoseHubbardModel {
    /// `β_m = m(m-1)/2 + (N-m)(N-m-1)/2`, `m = 0…N`.
    pub fn beta(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..=self.n)
            .map(|m| {
                let m = m as f64;
                0.5 * m * (m - 1.0) + 0.5 * (n - m) * (n - m - 1.0)
            })
            .collect()
    }

    /// `χ_m = 2m - N`.
    pub fn chi(&self) -> Vec<f64> {
        (0..=self.n).map(|m| 2.0 * m as f64 - self.n as f64).collect()
    }

    /// Noise-free energies `β_m U0 + χ_m T`.
    pub fn energies(&self) -> Vec<f64> {
        self.beta().iter().zip(self.chi()).map(|(b, c)| b * self.u0 + c * self.tilt).collect()
    }

    /// Hopping in the ordering `|N-m, m⟩`: `V_{m,m+1} = -J √((N-m)(m+1))`.
    pub fn hopping_matrix(&self) -> DMatrix<f64> {
        let d = self.n + 1;
        DMatrix::from_fn(d, d, |a, b| {
            let (lo, hi) = (a.min(b), a.max(b));
            if hi == lo + 1 {
                -self.hopping * (((self.n - lo) * (lo + 1)) as f64).sqrt()
            } else {
                0.0
            }
        })
    }

    pub fn build(&self) -> Result<ModelBundle> {
        if self.n < 1 {
            return Err(Error::param("n", "need at least one boson"));
        }
        finite("hopping", self.hopping)?;
        finite("u0", self.u0)?;
        finite("tilt", self.tilt)?;
        positive("sigma", self.sigma)?;
        if self.alpha * self.hopping.abs() >= (self.u0 + self.tilt).abs() {
            return Err(Error::param(
                "alpha",
                format!(
                    "need α·|J| < |U0 + T|, got {} >= {}",
                    self.alpha * self.hopping.abs(),
                    (self.u0 + self.tilt).abs()
                ),
            ));
        }
        if self.tilt.abs() <= 3.0 * self.sigma {
            warn!("tilt {} is not large against σ = {}", self.tilt, self.sigma);
        }
        let noise = NoiseModel::shared(GaussianScalar::new(0.0, self.sigma)?, self.beta())?;
        let sd = SpectralData::new(self.energies(), noise)?;
        let v = HermitianOperator::from_real(&self.hopping_matrix())?;
        let ensemble = HamiltonianEnsemble::new(sd, v, self.alpha)?;
        let d = self.n + 1;
        let rho0 = DensityMatrix::pure(&CVector::from_element(d, C64::new(1.0, 0.0)))?;
        Ok(ModelBundle { name: "bose_hubbard".into(), ensemble, rho0, gamma_mode: GammaMode::Envelope })
    }
}
