//! Dense complex linear algebra for states and operators in a fixed
//! quantization basis `{|j⟩}`, plus Liouville-space index bookkeeping.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default tolerance for Hermiticity and trace checks.
pub const DEFAULT_TOL: f64 = 1e-9;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Largest element-wise deviation `max |A_jk - conj(A_kj)|`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut dev = 0.0f64;
    for j in 0..d {
        for k in j..d {
            dev = dev.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    dev
}

/// Frobenius norm of `A - A^H`.
pub fn hermiticity_frobenius(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), actual: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(Error::param("dim", "matrix must be non-empty"));
    }
    Ok(())
}

fn scale(m: &CMatrix) -> f64 {
    m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()))
}

/// `(A + A^H) / 2`.
pub fn symmetrize(m: &mut CMatrix) {
    let d = m.nrows();
    for j in 0..d {
        m[(j, j)].im = 0.0;
        for k in (j + 1)..d {
            let avg = (m[(j, k)] + m[(k, j)].conj()) * 0.5;
            m[(j, k)] = avg;
            m[(k, j)] = avg.conj();
        }
    }
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Real matrix promoted to complex.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Hermitian operator in the quantization basis. Energies are in units of
/// `ħω0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
}

/// Eigendecomposition `H = U diag(E) U^H` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, DEFAULT_TOL)
    }

    /// Validates Hermiticity relative to the largest matrix element.
    pub fn with_tolerance(m: CMatrix, tol: f64) -> Result<Self> {
        check_square(&m)?;
        let deviation = hermiticity_deviation(&m);
        if deviation > tol * scale(&m) {
            return Err(Error::NotHermitian { deviation });
        }
        let mut m = m;
        symmetrize(&mut m);
        Ok(Self { m })
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(complexify(m))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        let m = CMatrix::from_fn(d, d, |j, k| if j == k { C64::new(values[j], 0.0) } else { C64::new(0.0, 0.0) });
        Self { m }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: CMatrix::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn is_real(&self) -> bool {
        self.m.iter().all(|z| z.im == 0.0)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &HermitianOperator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(Self { m: &self.m + other.m.map(|z| z * alpha) })
    }

    pub fn eigh(&self) -> Result<Eigh> {
        eigh(&self.m)
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn eigh(m: &CMatrix) -> Result<Eigh> {
    check_square(m)?;
    let d = m.nrows();
    if m.iter().all(|z| z.im == 0.0) {
        let real = m.map(|z| z.re);
        let eig =
            SymmetricEigen::try_new(real, f64::EPSILON, 0).ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
        let order = ascending_order(eig.eigenvalues.as_slice());
        let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = CMatrix::from_fn(d, d, |r, c| C64::new(eig.eigenvectors[(r, order[c])], 0.0));
        return Ok(Eigh { values, vectors });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
    let order = ascending_order(eig.eigenvalues.as_slice());
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = CMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigh { values, vectors })
}

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

impl Eigh {
    pub fn reconstruct(&self) -> CMatrix {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for c in 0..d {
            let e = self.values[c];
            for r in 0..d {
                scaled[(r, c)] *= e;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Smallest gap between consecutive eigenvalues.
    pub fn min_gap(&self) -> f64 {
        self.values.as_slice().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// `f(A)` for Hermitian `A` via its spectral decomposition.
fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    let eig = eigh(m)?;
    let mapped = Eigh { values: eig.values.map(f), vectors: eig.vectors };
    Ok(mapped.reconstruct())
}

/// d×d complex Hermitian unit-trace state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, DEFAULT_TOL)
    }

    pub fn with_tolerance(mut m: CMatrix, tol: f64) -> Result<Self> {
        check_square(&m)?;
        let deviation = hermiticity_deviation(&m);
        if deviation > tol * scale(&m) {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::NotUnitTrace { trace: tr.re });
        }
        symmetrize(&mut m);
        Ok(Self { m })
    }

    /// Wraps a matrix produced by an integrator without re-validating it.
    /// Positivity and trace are monitored by the caller.
    pub fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self { m }
    }

    /// `|ψ⟩⟨ψ|` for the normalized `ψ`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("psi", "state vector must have finite non-zero norm"));
        }
        let v = psi / C64::new(norm, 0.0);
        Ok(Self { m: &v * v.adjoint() })
    }

    pub fn basis_state(d: usize, j: usize) -> Result<Self> {
        if j >= d {
            return Err(Error::IndexOutOfRange { index: j, dim: d });
        }
        let mut psi = CVector::zeros(d);
        psi[j] = C64::new(1.0, 0.0);
        Self::pure(&psi)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { m: CMatrix::identity(d, d).map(|z| z / d as f64) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.m[(j, k)]
    }

    pub fn trace(&self) -> C64 {
        trace(self)
    }

    pub fn purity(&self) -> f64 {
        purity(self)
    }

    pub fn total_coherence(&self) -> f64 {
        total_coherence(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eigh(&self.m)?.values[0])
    }

    /// Convex decomposition `ρ = Σ p_k |ψ_k⟩⟨ψ_k|` keeping weights above
    /// `cutoff`.
    pub fn pure_components(&self, cutoff: f64) -> Result<Vec<(f64, CVector)>> {
        let eig = eigh(&self.m)?;
        Ok((0..self.dim())
            .rev()
            .filter(|&i| eig.values[i] > cutoff)
            .map(|i| (eig.values[i], eig.vectors.column(i).into_owned()))
            .collect())
    }
}

pub fn trace(rho: &DensityMatrix) -> C64 {
    rho.m.trace()
}

/// `Tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.m.iter().map(|z| z.norm_sqr()).sum()
}

/// `c = Σ_{j≠k} |ρ_jk|`.
pub fn total_coherence(rho: &DensityMatrix) -> f64 {
    matrix_coherence(&rho.m)
}

pub fn matrix_coherence(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut c = 0.0;
    for j in 0..d {
        for k in 0..d {
            if j != k {
                c += m[(j, k)].norm();
            }
        }
    }
    c
}

/// Uhlmann root fidelity `Tr √(√ρ σ √ρ)`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), actual: sigma.dim() });
    }
    let sqrt_rho = spectral_map(&rho.m, |x| x.max(0.0).sqrt())?;
    let mut inner = &sqrt_rho * &sigma.m * &sqrt_rho;
    symmetrize(&mut inner);
    let eig = eigh(&inner)?;
    let f: f64 = eig.values.iter().map(|&x| x.max(0.0).sqrt()).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Double index `(j, k)` in Liouville space; flat index `j·d + k`
/// (ordering `(11), (12), …, (1d), (21), …` with zero-based labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LiouvilleIndex {
    pub row: usize,
    pub col: usize,
}

impl LiouvilleIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn flat(self, d: usize) -> usize {
        self.row * d + self.col
    }

    pub fn from_flat(i: usize, d: usize) -> Self {
        Self { row: i / d, col: i % d }
    }
}

/// Row-major vectorization consistent with [`LiouvilleIndex`].
pub fn vectorize(m: &CMatrix) -> CVector {
    let d = m.nrows();
    CVector::from_fn(d * d, |i, _| {
        let idx = LiouvilleIndex::from_flat(i, d);
        m[(idx.row, idx.col)]
    })
}

pub fn unvectorize(v: &CVector, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |j, k| v[LiouvilleIndex::new(j, k).flat(d)])
}

/// d²×d² matrix acting on vectorized density matrices. Houses averaged
/// dynamical matrices and master-equation generators.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperoperatorMatrix {
    d: usize,
    m: CMatrix,
}

impl SuperoperatorMatrix {
    pub fn new(d: usize, m: CMatrix) -> Result<Self> {
        if m.nrows() != d * d || m.ncols() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, actual: m.nrows() });
        }
        Ok(Self { d, m })
    }

    pub fn identity(d: usize) -> Self {
        Self { d, m: CMatrix::identity(d * d, d * d) }
    }

    /// Builds the matrix of a linear map on d×d matrices column by column.
    pub fn from_linear_map(d: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let n = d * d;
        let mut m = CMatrix::zeros(n, n);
        for col in 0..n {
            let idx = LiouvilleIndex::from_flat(col, d);
            let mut basis = CMatrix::zeros(d, d);
            basis[(idx.row, idx.col)] = C64::new(1.0, 0.0);
            let image = vectorize(&f(&basis));
            m.set_column(col, &image);
        }
        Self { d, m }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn get(&self, a: LiouvilleIndex, b: LiouvilleIndex) -> C64 {
        self.m[(a.flat(self.d), b.flat(self.d))]
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unvectorize(&(&self.m * vectorize(rho)), self.d)
    }

    /// `max |F_{jk,rs} - conj(F_{kj,sr})|`; zero for maps preserving
    /// Hermiticity.
    pub fn hermiticity_symmetry_error(&self) -> f64 {
        let d = self.d;
        let mut err = 0.0f64;
        for j in 0..d {
            for k in 0..d {
                for r in 0..d {
                    for s in 0..d {
                        let a = self.get(LiouvilleIndex::new(j, k), LiouvilleIndex::new(r, s));
                        let b = self.get(LiouvilleIndex::new(k, j), LiouvilleIndex::new(s, r));
                        err = err.max((a - b.conj()).norm());
                    }
                }
            }
        }
        err
    }
}
