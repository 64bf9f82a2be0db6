//! Numerical checks of the derivation at small `d`: Monte Carlo estimates of
//! the averaged dynamical matrix, its Neumann-series inverse, the generator
//! `Q = Ḟ F⁻¹`, and the pure-dephasing solution of the qubit.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::ensemble::HamiltonianEnsemble;
use crate::error::{Error, Result};
use crate::models::QubitModel;
use crate::noise::stream_rng;
use crate::quantum::{eigh, CMatrix, DensityMatrix, LiouvilleIndex, SuperoperatorMatrix, C64};
use crate::rates::SpectralData;

/// Largest `d` accepted by the dense validation routines.
pub const MAX_VALIDATION_DIM: usize = 4;

/// Condition number above which `F̄` is treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

/// Batch-mean Monte Carlo estimate of `F̄(t)` on a time grid.
#[derive(Debug, Clone)]
pub struct DynamicalMatrixEstimate {
    pub times: Vec<f64>,
    pub mean: Vec<SuperoperatorMatrix>,
    /// One estimate per batch and time, for error propagation.
    pub batches: Vec<Vec<SuperoperatorMatrix>>,
}

impl DynamicalMatrixEstimate {
    /// Per-entry standard error of the mean at sample `i`.
    pub fn stderr(&self, i: usize) -> DMatrix<f64> {
        let b = self.batches.len() as f64;
        let n = self.mean[i].matrix().nrows();
        DMatrix::from_fn(n, n, |p, q| {
            let vals: Vec<C64> = self.batches.iter().map(|bt| bt[i].matrix()[(p, q)]).collect();
            let m = vals.iter().sum::<C64>() / b;
            let var = vals.iter().map(|v| (v - m).norm_sqr()).sum::<f64>() / (b - 1.0);
            (var / b).sqrt()
        })
    }
}

fn check_small(d: usize) -> Result<()> {
    if d > MAX_VALIDATION_DIM {
        return Err(Error::TooLarge { dim: d, max: MAX_VALIDATION_DIM });
    }
    Ok(())
}

/// `F_{jk,rs} = E[⟨j|U_λ|r⟩⟨s|U_λ†|k⟩]`, with the same realizations at every
/// time (common random numbers keep finite differences smooth).
pub fn dynamical_matrix(
    ensemble: &HamiltonianEnsemble,
    times: &[f64],
    samples: usize,
    batches: usize,
    seed: u64,
) -> Result<DynamicalMatrixEstimate> {
    let d = ensemble.dim();
    check_small(d)?;
    if batches < 2 || samples < batches {
        return Err(Error::param("samples", "need at least two batches with one sample each"));
    }
    let n = d * d;
    let per = samples / batches;
    let mut batch_means = Vec::with_capacity(batches);
    let mut shifts = vec![0.0; d];
    let mut h = DMatrix::<f64>::zeros(d, d);
    for b in 0..batches {
        let mut acc = vec![CMatrix::zeros(n, n); times.len()];
        for s in 0..per {
            let mut rng = stream_rng(seed, (b * per + s) as u64);
            ensemble.spectral().noise().sample_into(&mut rng, &mut shifts);
            let (values, vectors): (Vec<f64>, CMatrix) = if ensemble.is_real() {
                ensemble.real_hamiltonian_into(&shifts, &mut h);
                let e = SymmetricEigen::new(h.clone());
                (e.eigenvalues.as_slice().to_vec(), e.eigenvectors.map(|x| C64::new(x, 0.0)))
            } else {
                let e = eigh(ensemble.hamiltonian(&shifts)?.matrix())?;
                (e.values.as_slice().to_vec(), e.vectors)
            };
            for (ti, &t) in times.iter().enumerate() {
                let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    d,
                    values.iter().map(|e| C64::new(0.0, -e * t).exp()),
                ));
                let u = &vectors * phases * vectors.adjoint();
                let f = &mut acc[ti];
                for j in 0..d {
                    for k in 0..d {
                        let row = LiouvilleIndex::new(j, k).flat(d);
                        for r in 0..d {
                            let ujr = u[(j, r)];
                            for s2 in 0..d {
                                f[(row, LiouvilleIndex::new(r, s2).flat(d))] += ujr * u[(k, s2)].conj();
                            }
                        }
                    }
                }
            }
        }
        batch_means.push(
            acc.into_iter()
                .map(|m| SuperoperatorMatrix::new(d, m.map(|z| z / per as f64)))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mean = (0..times.len())
        .map(|ti| {
            let sum = batch_means.iter().fold(CMatrix::zeros(n, n), |a, bt| a + bt[ti].matrix());
            SuperoperatorMatrix::new(d, sum.map(|z| z / batches as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DynamicalMatrixEstimate { times: times.to_vec(), mean, batches: batch_means })
}

/// Zeroth-order `F̄⁰(t)`: diagonal with entries `φ̄_jk(t)`.
pub fn unperturbed_dynamical_matrix(sd: &SpectralData, t: f64) -> SuperoperatorMatrix {
    let d = sd.dim();
    let mut m = CMatrix::zeros(d * d, d * d);
    for j in 0..d {
        for k in 0..d {
            let i = LiouvilleIndex::new(j, k).flat(d);
            let phase = C64::new(0.0, -sd.splitting(j, k) * t).exp();
            let env = (-0.5 * sd.pair_variance(j, k) * t * t).exp();
            m[(i, i)] = phase * env;
        }
    }
    SuperoperatorMatrix::new(d, m).expect("square by construction")
}

/// Spectral-radius estimate `‖X^{2^p}‖^{1/2^p}` by repeated squaring.
pub fn spectral_radius_estimate(x: &CMatrix) -> f64 {
    let mut p = x.clone();
    let mut power = 1.0;
    for _ in 0..6 {
        p = &p * &p;
        power *= 2.0;
        if !p.norm().is_finite() {
            return f64::INFINITY;
        }
    }
    p.norm().powf(1.0 / power)
}

/// `Σ_{n=0}^{N} (1 - M0⁻¹M)ⁿ M0⁻¹` for diagonal `M0`.
pub fn neumann_inverse(
    f: &SuperoperatorMatrix,
    f0: &SuperoperatorMatrix,
    n_terms: usize,
) -> Result<SuperoperatorMatrix> {
    if f.dim() != f0.dim() {
        return Err(Error::DimensionMismatch { expected: f0.dim(), actual: f.dim() });
    }
    let m0 = f0.matrix();
    let n = m0.nrows();
    let scale = m0.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    for p in 0..n {
        for q in 0..n {
            if p != q && m0[(p, q)].norm() > 1e-12 * scale.max(1.0) {
                return Err(Error::param("f0", "zeroth-order dynamical matrix must be diagonal"));
            }
        }
    }
    let mut inv0 = CMatrix::zeros(n, n);
    for p in 0..n {
        if m0[(p, p)].norm() == 0.0 {
            return Err(Error::IllConditioned { condition: f64::INFINITY });
        }
        inv0[(p, p)] = C64::new(1.0, 0.0) / m0[(p, p)];
    }
    let x = CMatrix::identity(n, n) - &inv0 * f.matrix();
    let radius = spectral_radius_estimate(&x);
    if radius >= 1.0 {
        return Err(Error::NeumannDivergent { radius });
    }
    let mut term = inv0.clone();
    let mut sum = inv0;
    for _ in 0..n_terms {
        term = &x * term;
        sum += &term;
    }
    SuperoperatorMatrix::new(f.dim(), sum)
}

/// `‖F·X − 1‖_F`.
pub fn inverse_residual(f: &SuperoperatorMatrix, inv: &SuperoperatorMatrix) -> f64 {
    let n = f.matrix().nrows();
    (f.matrix() * inv.matrix() - CMatrix::identity(n, n)).norm()
}

fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `Q̄(t)` with its estimated errors.
#[derive(Debug, Clone)]
pub struct QEstimate {
    pub t: f64,
    pub q: SuperoperatorMatrix,
    /// Batch-means standard error per entry.
    pub stat_error: DMatrix<f64>,
    /// `|D_h − D_{h/2}|`-based bound on the finite-difference error.
    pub fd_error: DMatrix<f64>,
}

fn q_from(
    fm: &CMatrix,
    f_minus: &CMatrix,
    f_plus: &CMatrix,
    f_mh: &CMatrix,
    f_ph: &CMatrix,
    h: f64,
) -> Result<(CMatrix, CMatrix)> {
    let cond = condition_number(fm);
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned { condition: cond });
    }
    let inv = fm.clone().try_inverse().ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let d_h = (f_plus - f_minus).map(|z| z / (2.0 * h));
    let d_h2 = (f_ph - f_mh).map(|z| z / h);
    // Richardson: (4 D_{h/2} - D_h) / 3
    let rich = (&d_h2 * C64::new(4.0, 0.0) - &d_h).map(|z| z / 3.0);
    Ok((&rich * &inv, (d_h2 - d_h) * &inv))
}

/// `Q̄(t) = Ḟ̄ F̄⁻¹` from Monte Carlo `F̄` at `t`, `t ± h/2`, `t ± h`.
pub fn numeric_q(ensemble: &HamiltonianEnsemble, t: f64, h: f64, samples: usize, seed: u64) -> Result<QEstimate> {
    if !(h > 0.0) || h >= t {
        return Err(Error::param("h", format!("need 0 < h < t, got h = {h}, t = {t}")));
    }
    let times = [t, t - h, t + h, t - 0.5 * h, t + 0.5 * h];
    let batches = 20;
    let est = dynamical_matrix(ensemble, &times, samples, batches, seed)?;
    let get = |v: &[SuperoperatorMatrix], i: usize| v[i].matrix().clone();
    let (q, diff) =
        q_from(&get(&est.mean, 0), &get(&est.mean, 1), &get(&est.mean, 2), &get(&est.mean, 3), &get(&est.mean, 4), h)?;
    let per_batch: Vec<CMatrix> = est
        .batches
        .iter()
        .map(|b| q_from(&get(b, 0), &get(b, 1), &get(b, 2), &get(b, 3), &get(b, 4), h).map(|x| x.0))
        .collect::<Result<_>>()?;
    let n = q.nrows();
    let bn = batches as f64;
    let stat_error = DMatrix::from_fn(n, n, |p, r| {
        let m = per_batch.iter().map(|x| x[(p, r)]).sum::<C64>() / bn;
        let var = per_batch.iter().map(|x| (x[(p, r)] - m).norm_sqr()).sum::<f64>() / (bn - 1.0);
        (var / bn).sqrt()
    });
    // D_{h/2} - D_h ≈ (3/4) h² F''' / 6; the Richardson value is better than
    // either, so |D_{h/2} - D_h| / 3 bounds its remaining error generously.
    let fd_error = diff.map(|z| z.norm() / 3.0);
    Ok(QEstimate { t, q: SuperoperatorMatrix::new(ensemble.dim(), q)?, stat_error, fd_error })
}

/// Pure-dephasing solution in the eigenbasis of `H̄`: populations fixed,
/// coherences `ρ_r,mn(0) e^{-i(E_m-E_n)t - σ²t²/2}`.
pub fn qubit_rotated_oracle(model: &QubitModel, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, actual: rho0.dim() });
    }
    let bundle = model.build()?;
    let eig = bundle.ensemble.mean_hamiltonian().eigh()?;
    let u = &eig.vectors;
    let mut r = u.adjoint() * rho0.matrix() * u;
    let decay = (-0.5 * model.sigma * model.sigma * t * t).exp();
    let phase = C64::new(0.0, -(eig.values[0] - eig.values[1]) * t).exp();
    r[(0, 1)] *= phase * decay;
    r[(1, 0)] = r[(0, 1)].conj();
    Ok(DensityMatrix::from_matrix_unchecked(u * r * u.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::asymptotic_state;
    use crate::quantum::fidelity;

    fn qubit(alpha: f64) -> HamiltonianEnsemble {
        QubitModel { lambda0: 10.0, sigma: 1.0, alpha }.build().unwrap().ensemble
    }

    #[test]
    fn dynamical_matrix_identity_at_zero_and_symmetric() {
        let ens = qubit(0.3);
        let est = dynamical_matrix(&ens, &[0.0, 0.5], 2000, 4, 1).unwrap();
        assert!((est.mean[0].matrix() - CMatrix::identity(4, 4)).norm() < 1e-13);
        assert!(est.mean[1].hermiticity_symmetry_error() < 1e-12);
    }

    #[test]
    fn neumann_trivial_cases() {
        let ens = qubit(0.0);
        let f0 = unperturbed_dynamical_matrix(ens.spectral(), 0.4);
        let inv = neumann_inverse(&f0, &f0, 0).unwrap();
        assert!(inverse_residual(&f0, &inv) < 1e-13);
        let inv1 = neumann_inverse(&f0, &f0, 1).unwrap();
        assert!(inverse_residual(&f0, &inv1) < 1e-13);
    }

    #[test]
    fn neumann_rejects_divergent_series() {
        let ens = qubit(0.0);
        let f0 = unperturbed_dynamical_matrix(ens.spectral(), 0.4);
        let f = SuperoperatorMatrix::new(2, f0.matrix().map(|z| z * 3.0)).unwrap();
        assert!(matches!(neumann_inverse(&f, &f0, 3), Err(Error::NeumannDivergent { .. })));
    }

    #[test]
    fn unperturbed_matches_monte_carlo() {
        let ens = qubit(0.0);
        let t = 0.6;
        let est = dynamical_matrix(&ens, &[t], 20_000, 10, 3).unwrap();
        let f0 = unperturbed_dynamical_matrix(ens.spectral(), t);
        let se = est.stderr(0);
        for p in 0..4 {
            for q in 0..4 {
                let diff = (est.mean[0].matrix()[(p, q)] - f0.matrix()[(p, q)]).norm();
                assert!(diff <= 5.0 * se[(p, q)] + 1e-12, "({p},{q}): {diff}");
            }
        }
    }

    #[test]
    fn rotated_oracle_limits() {
        let m = QubitModel { lambda0: 10.0, sigma: 1.0, alpha: 1.0 };
        let b = m.build().unwrap();
        let at0 = qubit_rotated_oracle(&m, &b.rho0, 0.0).unwrap();
        assert!((at0.matrix() - b.rho0.matrix()).norm() < 1e-14);
        let late = qubit_rotated_oracle(&m, &b.rho0, 40.0).unwrap();
        let asym = asymptotic_state(&b.ensemble.mean_hamiltonian(), &b.rho0).unwrap();
        assert!(fidelity(&late, &asym).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn size_guard() {
        use crate::models::{Coupling, LatticeModel};
        let l = LatticeModel { d: 5, tilt: 10.0, sigma: 1.0, alpha: 1.0, coupling: Coupling::NearestNeighbour }
            .build()
            .unwrap();
        assert!(matches!(dynamical_matrix(&l.ensemble, &[0.1], 10, 2, 0), Err(Error::TooLarge { .. })));
    }
}
