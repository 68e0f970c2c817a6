//! Dense complex operator algebra on small multi-spin Hilbert spaces.
//!
//! Everything is a dense `Array2<Complex64>`. For the ensemble sizes this
//! crate targets (N ≤ 6 in practice) dense matrices stay cache-resident and
//! a sparse representation would only add bookkeeping.
//!
//! Basis conventions: site 0 is the leftmost Kronecker factor; per site,
//! index 0 is the excited state and index 1 the ground state, so
//! `σz = diag(1, −1)` satisfies `σz|g⟩ = −|g⟩` and the all-ground state is
//! the last basis vector.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Hard cap on the number of spin sites so a typo cannot request an
/// astronomically large space. 2^12 = 4096 is already far beyond what the
/// dense solvers are meant for.
pub const MAX_SITES: usize = 12;

/// Elementwise tolerance for the Hermiticity invariant of flagged operators.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Trace and Hermiticity tolerances for a freshly constructed density matrix.
pub const DENSITY_TRACE_TOL: f64 = 1e-10;
pub const DENSITY_HERM_TOL: f64 = 1e-10;
/// Numerical positivity floor: eigenvalues above this are accepted.
pub const DENSITY_EIG_FLOOR: f64 = -1e-8;

#[derive(Debug, Error)]
pub enum HilbertError {
    #[error("site index {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("{n_sites} sites exceeds the {MAX_SITES}-site cap")]
    TooManySites { n_sites: usize },
    #[error("need at least one site")]
    NoSites,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix dimension {dim} is not a power of two")]
    NotPowerOfTwo { dim: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected a 2x2 single-site operator, got {rows}x{cols}")]
    NotSingleSite { rows: usize, cols: usize },
    #[error("density matrix trace {trace} deviates from 1 by more than {tol}")]
    BadTrace { trace: f64, tol: f64 },
    #[error("density matrix deviates from Hermiticity by {err} (tol {tol})")]
    NotHermitian { err: f64, tol: f64 },
    #[error("density matrix has eigenvalue {min_eig} below the {floor} floor")]
    NotPositive { min_eig: f64, floor: f64 },
    #[error("basis index {index} out of range for dimension {dim}")]
    BasisIndexOutOfRange { index: usize, dim: usize },
    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, HilbertError>;

/// Dense operator on a 2^N-dimensional spin space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    entries: Array2<C64>,
}

impl OperatorMatrix {
    /// Wrap a dense matrix, checking it is square with power-of-two dimension.
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols {
            return Err(HilbertError::NotSquare { rows, cols });
        }
        if rows == 0 || !rows.is_power_of_two() {
            return Err(HilbertError::NotPowerOfTwo { dim: rows });
        }
        Ok(Self { dim: rows, entries })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(Array2::eye(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of spin sites, `log2(dim)`.
    pub fn n_sites(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.entries
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self {
            dim: self.dim,
            entries: dagger(&self.entries),
        }
    }

    /// Largest elementwise deviation from `M = M†`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.entries)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Eigendecomposition of a Hermitian operator: ascending eigenvalues and
    /// the matrix whose columns are the corresponding eigenvectors.
    pub fn eigh(&self) -> Result<(Array1<f64>, Array2<C64>)> {
        eigh_hermitian(&self.entries)
    }
}

/// Hermitian eigendecomposition with eigenvector columns satisfying
/// `H v_k = λ_k v_k`.
///
/// LAPACK reads the row-major buffer as column-major, i.e. it diagonalizes
/// Hᵀ = H*; the eigenvalues are unaffected but the returned vectors must be
/// conjugated.
pub fn eigh_hermitian(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let (vals, vecs) = m.eigh(UPLO::Lower)?;
    Ok((vals, vecs.mapv(|z| z.conj())))
}

impl std::ops::Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        OperatorMatrix {
            dim: self.dim,
            entries: &self.entries + &rhs.entries,
        }
    }
}

impl std::ops::Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        OperatorMatrix {
            dim: self.dim,
            entries: &self.entries - &rhs.entries,
        }
    }
}

impl std::ops::Mul<f64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: f64) -> OperatorMatrix {
        OperatorMatrix {
            dim: self.dim,
            entries: self.entries.mapv(|z| z * rhs),
        }
    }
}

/// Dense Hermitian trace-one matrix on the 2^N space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    dim: usize,
    rho: Array2<C64>,
}

impl DensityState {
    /// Validate trace, Hermiticity, and numerical positivity before wrapping.
    pub fn new(rho: Array2<C64>) -> Result<Self> {
        let (rows, cols) = rho.dim();
        if rows != cols {
            return Err(HilbertError::NotSquare { rows, cols });
        }
        if rows == 0 || !rows.is_power_of_two() {
            return Err(HilbertError::NotPowerOfTwo { dim: rows });
        }
        let state = Self { dim: rows, rho };
        state.validate(DENSITY_TRACE_TOL, DENSITY_HERM_TOL, DENSITY_EIG_FLOOR)?;
        Ok(state)
    }

    /// Pure state on a single basis vector.
    pub fn pure_basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(HilbertError::BasisIndexOutOfRange { index, dim });
        }
        let mut rho = Array2::zeros((dim, dim));
        rho[(index, index)] = C64::new(1.0, 0.0);
        Self::new(rho)
    }

    /// All spins in their ground state (the last basis vector).
    pub fn all_ground(n_sites: usize) -> Result<Self> {
        let dim = hilbert_dim(n_sites)?;
        Self::pure_basis(dim, dim - 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> &Array2<C64> {
        &self.rho
    }

    pub fn into_rho(self) -> Array2<C64> {
        self.rho
    }

    pub fn trace(&self) -> C64 {
        self.rho.diag().sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = self.rho.eigh(UPLO::Lower)?;
        Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Check the density-matrix invariants at the given tolerances.
    pub fn validate(&self, trace_tol: f64, herm_tol: f64, eig_floor: f64) -> Result<()> {
        validate_density_matrix(&self.rho, trace_tol, herm_tol, eig_floor)
    }
}

/// Check the density-matrix invariants of a raw matrix at the given
/// tolerances, without constructing a [`DensityState`].
pub fn validate_density_matrix(
    rho: &Array2<C64>,
    trace_tol: f64,
    herm_tol: f64,
    eig_floor: f64,
) -> Result<()> {
    let tr: C64 = rho.diag().sum();
    if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
        return Err(HilbertError::BadTrace {
            trace: tr.re,
            tol: trace_tol,
        });
    }
    let herm = hermiticity_error(rho);
    if herm > herm_tol {
        return Err(HilbertError::NotHermitian {
            err: herm,
            tol: herm_tol,
        });
    }
    let (vals, _) = rho.eigh(UPLO::Lower)?;
    let min_eig = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < eig_floor {
        return Err(HilbertError::NotPositive {
            min_eig,
            floor: eig_floor,
        });
    }
    Ok(())
}

/// 2^n with the site cap enforced.
pub fn hilbert_dim(n_sites: usize) -> Result<usize> {
    if n_sites == 0 {
        return Err(HilbertError::NoSites);
    }
    if n_sites > MAX_SITES {
        return Err(HilbertError::TooManySites { n_sites });
    }
    Ok(1usize << n_sites)
}

pub fn sigma_x() -> Array2<C64> {
    ndarray::array![
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

pub fn sigma_y() -> Array2<C64> {
    ndarray::array![
        [C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
        [C64::new(0.0, 1.0), C64::new(0.0, 0.0)]
    ]
}

pub fn sigma_z() -> Array2<C64> {
    ndarray::array![
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]
    ]
}

/// Lowering operator `σ− = |g⟩⟨e|`.
pub fn sigma_minus() -> Array2<C64> {
    ndarray::array![
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

/// Raising operator `σ+ = |e⟩⟨g|`.
pub fn sigma_plus() -> Array2<C64> {
    ndarray::array![
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

/// Embed a single-site 2×2 operator at `site` in an `n_sites` spin chain:
/// `I ⊗ … ⊗ op ⊗ … ⊗ I`.
pub fn embed_site_operator(
    op: &Array2<C64>,
    site: usize,
    n_sites: usize,
) -> Result<OperatorMatrix> {
    let dim = hilbert_dim(n_sites)?;
    let (rows, cols) = op.dim();
    if (rows, cols) != (2, 2) {
        return Err(HilbertError::NotSingleSite { rows, cols });
    }
    if site >= n_sites {
        return Err(HilbertError::SiteOutOfRange { site, n_sites });
    }
    let left = 1usize << site;
    let right = dim >> (site + 1);
    // I_left ⊗ op ⊗ I_right, written out directly instead of via two krons.
    let mut out = Array2::zeros((dim, dim));
    for l in 0..left {
        for a in 0..2 {
            for b in 0..2 {
                let v = op[(a, b)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for r in 0..right {
                    let row = (l * 2 + a) * right + r;
                    let col = (l * 2 + b) * right + r;
                    out[(row, col)] = v;
                }
            }
        }
    }
    OperatorMatrix::new(out)
}

/// Collective lowering operator `Ŝ− = Σ_j σ−^{(j)}`.
pub fn collective_lowering(n_sites: usize) -> Result<OperatorMatrix> {
    let dim = hilbert_dim(n_sites)?;
    let sm = sigma_minus();
    let mut total = Array2::zeros((dim, dim));
    for site in 0..n_sites {
        total += embed_site_operator(&sm, site, n_sites)?.matrix();
    }
    OperatorMatrix::new(total)
}

/// `Tr(ρ · op)`. Real within 1e−10 whenever `op` is Hermitian.
pub fn expectation(state: &DensityState, op: &OperatorMatrix) -> Result<C64> {
    if state.dim() != op.dim() {
        return Err(HilbertError::DimensionMismatch {
            left: state.dim(),
            right: op.dim(),
        });
    }
    Ok(trace_product(state.rho(), op.matrix()))
}

/// `Tr(a · b) = Σ_ij a_ij b_ji` without forming the product.
pub fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

pub fn hermiticity_error(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut err = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > err {
                err = d;
            }
        }
    }
    err
}

pub fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) + b.dot(a)
}

/// Largest elementwise magnitude.
pub fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `exp(−i·H·t)` for Hermitian `H`, via eigendecomposition.
pub fn expm_minus_i_ht(h: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
    let (vals, vecs) = eigh_hermitian(h)?;
    let phases: Array1<C64> = vals.mapv(|e| C64::from_polar(1.0, -e * t));
    // V · diag(e^{−iλt}) · V†
    let mut scaled = vecs.clone();
    for (mut col, phase) in scaled.columns_mut().into_iter().zip(phases.iter()) {
        col.mapv_inplace(|z| z * phase);
    }
    Ok(scaled.dot(&dagger(&vecs)))
}
