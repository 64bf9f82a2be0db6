//! Brute-force ensemble averaging: every realization is diagonalized once
//! and the initial state is propagated exactly to all sample times.
//!
//! Realization `i` always draws from RNG stream `i`. Realizations are summed
//! in blocks of [`BLOCK`]; [`WAVE`] consecutive blocks are merged by a fixed
//! pairwise tree and waves are added to the total in order. The result is
//! therefore bit-identical for sequential and parallel execution and across
//! checkpoint/resume.

use std::fs;
use std::path::Path;

use log::{debug, info};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::ensemble::HamiltonianEnsemble;
use crate::error::{Error, Result};
use crate::noise::stream_rng;
use crate::ode::check_times;
use crate::quantum::{eigh, CMatrix, CVector, DensityMatrix, HermitianOperator, C64};

pub const BLOCK: usize = 64;
pub const WAVE: usize = 16;
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Blocks of a wave run on the rayon pool; without the `parallel`
    /// feature this falls back to sequential execution.
    #[default]
    Parallel,
}

/// `ρ(t_i) = U e^{-iEt_i} U† ρ0 U e^{iEt_i} U†` for a single Hamiltonian.
pub fn evolve_one(h: &HermitianOperator, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    if h.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), actual: rho0.dim() });
    }
    let eig = h.eigh()?;
    let u = &eig.vectors;
    let rotated = u.adjoint() * rho0.matrix() * u;
    let d = h.dim();
    Ok(times
        .iter()
        .map(|&t| {
            let phases: Vec<C64> = eig.values.iter().map(|e| C64::new(0.0, -e * t).exp()).collect();
            let evolved = CMatrix::from_fn(d, d, |m, n| rotated[(m, n)] * phases[m] * phases[n].conj());
            DensityMatrix::from_matrix_unchecked(u * evolved * u.adjoint())
        })
        .collect())
}

/// Running sums over the upper triangle (diagonal included) at each time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Partial {
    n: usize,
    sum: Vec<C64>,
    sq_re: Vec<f64>,
    sq_im: Vec<f64>,
}

impl Partial {
    fn zeros(len: usize) -> Self {
        Self { n: 0, sum: vec![C64::new(0.0, 0.0); len], sq_re: vec![0.0; len], sq_im: vec![0.0; len] }
    }

    fn add(&mut self, other: &Partial) {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sq_re.iter_mut().zip(&other.sq_re) {
            *a += b;
        }
        for (a, b) in self.sq_im.iter_mut().zip(&other.sq_im) {
            *a += b;
        }
    }

    fn add_sample(&mut self, rho: &[C64]) {
        self.n += 1;
        for (i, z) in rho.iter().enumerate() {
            self.sum[i] += z;
            self.sq_re[i] += z.re * z.re;
            self.sq_im[i] += z.im * z.im;
        }
    }
}

/// Pairwise merge in a fixed shape.
fn tree_sum(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.add(&b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("tree_sum needs at least one part")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    seed: u64,
    dim: usize,
    times: Vec<f64>,
    n_done: usize,
    sums: Partial,
}

/// Mean state per time with per-element standard errors.
#[derive(Debug, Clone)]
pub struct AveragedTrajectory {
    pub times: Vec<f64>,
    pub n_real: usize,
    pub mean: Vec<CMatrix>,
    /// Standard error of `Re ρ̄_jk` and `Im ρ̄_jk`.
    pub stderr_re: Vec<DMatrix<f64>>,
    pub stderr_im: Vec<DMatrix<f64>>,
}

impl AveragedTrajectory {
    fn from_partial(p: &Partial, times: &[f64], d: usize) -> Self {
        let n = p.n as f64;
        let tri = d * (d + 1) / 2;
        let mut mean = Vec::with_capacity(times.len());
        let mut stderr_re = Vec::with_capacity(times.len());
        let mut stderr_im = Vec::with_capacity(times.len());
        let se = |sq: f64, m: f64| -> f64 {
            if p.n < 2 {
                return f64::NAN;
            }
            let var = ((sq - n * m * m) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        };
        for ti in 0..times.len() {
            let mut m = CMatrix::zeros(d, d);
            let mut sr = DMatrix::zeros(d, d);
            let mut si = DMatrix::zeros(d, d);
            let base = ti * tri;
            let mut idx = base;
            for j in 0..d {
                for k in j..d {
                    let z = p.sum[idx] / n;
                    let (er, ei) = (se(p.sq_re[idx], z.re), se(p.sq_im[idx], z.im));
                    m[(j, k)] = z;
                    m[(k, j)] = z.conj();
                    sr[(j, k)] = er;
                    sr[(k, j)] = er;
                    si[(j, k)] = ei;
                    si[(k, j)] = ei;
                    idx += 1;
                }
                m[(j, j)].im = 0.0;
            }
            mean.push(m);
            stderr_re.push(sr);
            stderr_im.push(si);
        }
        Self { times: times.to_vec(), n_real: p.n, mean, stderr_re, stderr_im }
    }

    pub fn states(&self) -> Vec<DensityMatrix> {
        self.mean.iter().cloned().map(DensityMatrix::from_matrix_unchecked).collect()
    }

    pub fn element(&self, j: usize, k: usize) -> Vec<C64> {
        self.mean.iter().map(|m| m[(j, k)]).collect()
    }

    /// Largest per-element standard error at sample `i`.
    pub fn max_stderr(&self, i: usize) -> f64 {
        self.stderr_re[i].iter().chain(self.stderr_im[i].iter()).fold(0.0, |a, &b| a.max(b))
    }
}

/// Outcome of a possibly budget-limited averaging run.
#[derive(Debug, Clone)]
pub enum Progress {
    Complete(AveragedTrajectory),
    Suspended { n_done: usize },
}

/// Draws Hamiltonians from an ensemble and averages the evolved state.
#[derive(Debug, Clone)]
pub struct EnsembleSampler {
    ensemble: HamiltonianEnsemble,
    seed: u64,
}

/// Per-worker scratch space.
struct Workspace {
    shifts: Vec<f64>,
    h_real: DMatrix<f64>,
    coeff: Vec<C64>,
    psi: Vec<C64>,
    rho: Vec<C64>,
}

/// One realization's eigensystem; `vectors` column-major.
enum Eigensystem {
    Real { values: Vec<f64>, vectors: DMatrix<f64> },
    Complex { values: Vec<f64>, vectors: CMatrix },
}

impl EnsembleSampler {
    pub fn new(ensemble: HamiltonianEnsemble, seed: u64) -> Self {
        Self { ensemble, seed }
    }

    pub fn ensemble(&self) -> &HamiltonianEnsemble {
        &self.ensemble
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Hamiltonian of realization `index`.
    pub fn hamiltonian(&self, index: u64) -> Result<HermitianOperator> {
        let mut rng = stream_rng(self.seed, index);
        self.ensemble.sample_hamiltonian(&mut rng)
    }

    fn workspace(&self, n_times: usize) -> Workspace {
        let d = self.ensemble.dim();
        Workspace {
            shifts: vec![0.0; d],
            h_real: DMatrix::zeros(d, d),
            coeff: vec![C64::new(0.0, 0.0); d],
            psi: vec![C64::new(0.0, 0.0); d],
            rho: vec![C64::new(0.0, 0.0); n_times * d * (d + 1) / 2],
        }
    }

    fn eigensystem(&self, ws: &mut Workspace, index: u64) -> Result<Eigensystem> {
        let mut rng = stream_rng(self.seed, index);
        self.ensemble.spectral().noise().sample_into(&mut rng, &mut ws.shifts);
        if self.ensemble.is_real() {
            self.ensemble.real_hamiltonian_into(&ws.shifts, &mut ws.h_real);
            let eig = SymmetricEigen::try_new(ws.h_real.clone(), f64::EPSILON, 0)
                .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
            Ok(Eigensystem::Real { values: eig.eigenvalues.as_slice().to_vec(), vectors: eig.eigenvectors })
        } else {
            let h = self.ensemble.hamiltonian(&ws.shifts)?;
            let eig = eigh(h.matrix())?;
            Ok(Eigensystem::Complex { values: eig.values.as_slice().to_vec(), vectors: eig.vectors })
        }
    }

    /// Evolves realization `index` and writes its upper-triangle states into
    /// `ws.rho`.
    fn realization(&self, ws: &mut Workspace, index: u64, components: &[(f64, CVector)], times: &[f64]) -> Result<()> {
        let d = self.ensemble.dim();
        let tri = d * (d + 1) / 2;
        let eig = self.eigensystem(ws, index)?;
        ws.rho.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let values = match &eig {
            Eigensystem::Real { values, .. } | Eigensystem::Complex { values, .. } => values,
        };
        for (w, psi0) in components {
            // c = U† ψ0
            for m in 0..d {
                ws.coeff[m] = match &eig {
                    Eigensystem::Real { vectors, .. } => (0..d).map(|a| psi0[a] * vectors[(a, m)]).sum(),
                    Eigensystem::Complex { vectors, .. } => (0..d).map(|a| vectors[(a, m)].conj() * psi0[a]).sum(),
                };
            }
            for (ti, &t) in times.iter().enumerate() {
                ws.psi.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                for m in 0..d {
                    let c = ws.coeff[m] * C64::new(0.0, -values[m] * t).exp();
                    match &eig {
                        Eigensystem::Real { vectors, .. } => {
                            let col = vectors.column(m);
                            for (p, u) in ws.psi.iter_mut().zip(col.iter()) {
                                *p += c * *u;
                            }
                        }
                        Eigensystem::Complex { vectors, .. } => {
                            let col = vectors.column(m);
                            for (p, u) in ws.psi.iter_mut().zip(col.iter()) {
                                *p += c * *u;
                            }
                        }
                    }
                }
                let out = &mut ws.rho[ti * tri..(ti + 1) * tri];
                let mut idx = 0;
                for j in 0..d {
                    let a = ws.psi[j] * *w;
                    for k in j..d {
                        out[idx] += a * ws.psi[k].conj();
                        idx += 1;
                    }
                }
            }
        }
        Ok(())
    }

    fn run_block(&self, start: usize, end: usize, components: &[(f64, CVector)], times: &[f64]) -> Result<Partial> {
        let d = self.ensemble.dim();
        let mut ws = self.workspace(times.len());
        let mut partial = Partial::zeros(times.len() * d * (d + 1) / 2);
        for i in start..end {
            self.realization(&mut ws, i as u64, components, times)?;
            partial.add_sample(&ws.rho);
        }
        Ok(partial)
    }

    fn run_wave(
        &self,
        start: usize,
        end: usize,
        components: &[(f64, CVector)],
        times: &[f64],
        exec: Execution,
    ) -> Result<Partial> {
        let blocks: Vec<(usize, usize)> = (start..end).step_by(BLOCK).map(|b| (b, (b + BLOCK).min(end))).collect();
        let parts: Vec<Partial> = match exec {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                blocks.par_iter().map(|&(a, b)| self.run_block(a, b, components, times)).collect::<Result<_>>()?
            }
            _ => blocks.iter().map(|&(a, b)| self.run_block(a, b, components, times)).collect::<Result<_>>()?,
        };
        Ok(tree_sum(parts))
    }

    pub fn average(
        &self,
        rho0: &DensityMatrix,
        times: &[f64],
        n_real: usize,
        exec: Execution,
    ) -> Result<AveragedTrajectory> {
        match self.average_resumable(rho0, times, n_real, exec, None, None)? {
            Progress::Complete(avg) => Ok(avg),
            Progress::Suspended { .. } => unreachable!("no wave budget was set"),
        }
    }

    /// Averages with optional checkpointing after every wave. With
    /// `wave_budget`, at most that many waves are processed in this call.
    pub fn average_resumable(
        &self,
        rho0: &DensityMatrix,
        times: &[f64],
        n_real: usize,
        exec: Execution,
        checkpoint: Option<&Path>,
        wave_budget: Option<usize>,
    ) -> Result<Progress> {
        let d = self.ensemble.dim();
        if rho0.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: rho0.dim() });
        }
        if n_real == 0 {
            return Err(Error::param("n_real", "need at least one realization"));
        }
        if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("times", "need finite sample times"));
        }
        if times.len() > 1 {
            check_times(times)?;
        }
        let components = rho0.pure_components(1e-14)?;
        let len = times.len() * d * (d + 1) / 2;

        let (mut total, mut n_done) = match checkpoint {
            Some(path) if path.exists() => {
                let cp: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
                self.check_checkpoint(&cp, d, times, n_real)?;
                info!("resuming from {} with {} realizations done", path.display(), cp.n_done);
                (cp.sums, cp.n_done)
            }
            _ => (Partial::zeros(len), 0),
        };

        let wave_size = BLOCK * WAVE;
        let mut waves = 0;
        while n_done < n_real {
            if wave_budget.is_some_and(|b| waves >= b) {
                return Ok(Progress::Suspended { n_done });
            }
            let end = (n_done + wave_size).min(n_real);
            let wave = self.run_wave(n_done, end, &components, times, exec)?;
            total.add(&wave);
            n_done = end;
            waves += 1;
            debug!("{n_done}/{n_real} realizations");
            if let Some(path) = checkpoint {
                let cp = Checkpoint {
                    version: CHECKPOINT_VERSION,
                    seed: self.seed,
                    dim: d,
                    times: times.to_vec(),
                    n_done,
                    sums: total.clone(),
                };
                let tmp = path.with_extension("tmp");
                fs::write(&tmp, serde_json::to_string(&cp)?)?;
                fs::rename(&tmp, path)?;
            }
        }
        Ok(Progress::Complete(AveragedTrajectory::from_partial(&total, times, d)))
    }

    fn check_checkpoint(&self, cp: &Checkpoint, d: usize, times: &[f64], n_real: usize) -> Result<()> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        if cp.seed != self.seed {
            return Err(Error::Checkpoint(format!("seed {} does not match {}", cp.seed, self.seed)));
        }
        if cp.dim != d || cp.times != times {
            return Err(Error::Checkpoint("dimension or time grid differs".into()));
        }
        if cp.n_done > n_real || !cp.n_done.is_multiple_of(BLOCK * WAVE) && cp.n_done != n_real {
            return Err(Error::Checkpoint(format!("inconsistent realization count {}", cp.n_done)));
        }
        if cp.sums.n != cp.n_done {
            return Err(Error::Checkpoint("sample count does not match partial sums".into()));
        }
        Ok(())
    }
}
