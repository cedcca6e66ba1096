//! Small dense symmetric-matrix algebra.
//!
//! Everything here works on `p x p` matrices with `p` in the tens at most:
//! a cyclic Jacobi eigensolver, spectral square roots, and the influence
//! quantities of the sample mean and covariance (including the inverse
//! square root, whose influence solves a Kronecker-structured system).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used when no explicit tolerance is given.
pub const DEFAULT_REL_EIG_TOL: f64 = 1e-10;

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// A symmetric matrix. Construction symmetrizes, so `m[(i,j)] == m[(j,i)]`
/// holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Row-major entries.
    pub fn from_row_slice(p: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != p * p {
            return Err(Error::InvalidInput(format!(
                "{} entries cannot form a {p}x{p} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(p, p, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let p = self.dim();
        (0..p * p).map(|k| self.0[(k / p, k % p)]).collect()
    }
}

/// Eigenvalues in descending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomp {
    /// `Q diag(f(lambda)) Q^T`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        &scaled * self.vectors.transpose()
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps visit pairs `(i, j)`, `i < j`, in row order; iteration stops when
/// the off-diagonal Frobenius norm drops below `1e-12 * ||S||_F`. Each
/// eigenvector is sign-normalized so its largest-magnitude entry is
/// positive, which makes the output a pure function of the input bits.
pub fn sym_eig(s: &SymMatrix) -> Result<EigenDecomp> {
    let m = s.matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let p = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(p, p);
    let total = a.norm();
    let target = JACOBI_REL_TOL * total;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = a[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                let theta = (a[(j, j)] - a[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut a, &mut v, i, j, c, sn);
            }
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let values = DVector::from_iterator(p, order.iter().map(|&k| a[(k, k)]));
    let mut vectors = DMatrix::<f64>::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        let lead = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (k, x)| if x.abs() > best.1 { (k, x.abs()) } else { best })
            .0;
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomp { values, vectors })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    let mut acc = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

// A <- J^T A J, V <- V J for the Givens rotation in the (i, j) plane.
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    let p = a.nrows();
    for k in 0..p {
        let aki = a[(k, i)];
        let akj = a[(k, j)];
        a[(k, i)] = c * aki - s * akj;
        a[(k, j)] = s * aki + c * akj;
    }
    for k in 0..p {
        let aik = a[(i, k)];
        let ajk = a[(j, k)];
        a[(i, k)] = c * aik - s * ajk;
        a[(j, k)] = s * aik + c * ajk;
    }
    // the rotation zeroes (i, j) analytically; pin it to keep exact symmetry
    a[(i, j)] = 0.0;
    a[(j, i)] = 0.0;
    for k in 0..p {
        let vki = v[(k, i)];
        let vkj = v[(k, j)];
        v[(k, i)] = c * vki - s * vkj;
        v[(k, j)] = s * vki + c * vkj;
    }
}

fn check_pd(eig: &EigenDecomp, min_eig_tol: Option<f64>) -> Result<()> {
    let max = eig.values[0];
    let min = eig.values[eig.values.len() - 1];
    let tol = min_eig_tol.unwrap_or(DEFAULT_REL_EIG_TOL * max.max(0.0));
    if max <= 0.0 || min <= tol {
        return Err(Error::NotPositiveDefinite { min_eig: min, tol });
    }
    Ok(())
}

/// `S^{-1/2}` via the eigendecomposition. Fails when any eigenvalue is at or
/// below `min_eig_tol` (default `1e-10 * lambda_max`).
pub fn mat_inv_sqrt(s: &SymMatrix, min_eig_tol: Option<f64>) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    check_pd(&eig, min_eig_tol)?;
    SymMatrix::new(eig.spectral_map(|l| 1.0 / l.sqrt()))
}

/// `S^{1/2}`, with the same positive-definiteness rule as [`mat_inv_sqrt`].
pub fn mat_sqrt(s: &SymMatrix, min_eig_tol: Option<f64>) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    check_pd(&eig, min_eig_tol)?;
    SymMatrix::new(eig.spectral_map(f64::sqrt))
}

/// Square root and inverse square root from a single decomposition.
#[derive(Debug, Clone)]
pub struct SpdRoots {
    pub eig: EigenDecomp,
    pub sqrt: SymMatrix,
    pub inv_sqrt: SymMatrix,
}

impl SpdRoots {
    pub fn new(s: &SymMatrix) -> Result<Self> {
        let eig = sym_eig(s)?;
        check_pd(&eig, None)?;
        let sqrt = SymMatrix::new(eig.spectral_map(f64::sqrt))?;
        let inv_sqrt = SymMatrix::new(eig.spectral_map(|l| 1.0 / l.sqrt()))?;
        Ok(Self { eig, sqrt, inv_sqrt })
    }
}

/// Influence of one observation on the mean, the covariance and the inverse
/// square root of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMats {
    pub psi_mu: DVector<f64>,
    pub psi_sigma: SymMatrix,
    pub psi_sigma_inv_half: SymMatrix,
}

/// Solves `Sigma X Sigma^{1/2} + Sigma^{1/2} X Sigma = R` for symmetric `R`,
/// which is `(Sigma^{1/2} (x) Sigma + Sigma (x) Sigma^{1/2}) vec X = vec R`.
///
/// In the eigenbasis of `Sigma` the system is diagonal, so one decomposition
/// serves every right-hand side.
#[derive(Debug, Clone)]
pub struct KroneckerSolver {
    eig: EigenDecomp,
    denom: DMatrix<f64>,
}

impl KroneckerSolver {
    pub fn new(sigma: &SymMatrix) -> Result<Self> {
        let eig = sym_eig(sigma)?;
        check_pd(&eig, None)?;
        Ok(Self::from_eig(eig))
    }

    pub fn from_eig(eig: EigenDecomp) -> Self {
        let p = eig.values.len();
        let lam = &eig.values;
        let denom = DMatrix::from_fn(p, p, |i, j| lam[i] * lam[j].sqrt() + lam[i].sqrt() * lam[j]);
        Self { eig, denom }
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let q = &self.eig.vectors;
        let mut tilde = q.transpose() * rhs * q;
        tilde.component_div_assign(&self.denom);
        q * tilde * q.transpose()
    }

    /// Influence quantities of `x` at `(mu, Sigma)`:
    /// `psi_mu = x - mu`, `psi_Sigma = (x - mu)(x - mu)^T - Sigma`, and
    /// `psi_{Sigma^{-1/2}} = -K^{-1} vec(psi_Sigma)` reshaped.
    pub fn influence(&self, x: &[f64], mu: &[f64], sigma: &SymMatrix) -> Result<InfluenceMats> {
        let p = sigma.dim();
        if x.len() != p || mu.len() != p {
            return Err(Error::InvalidInput(format!(
                "vector lengths {} and {} do not match dimension {p}",
                x.len(),
                mu.len()
            )));
        }
        let centered = DVector::from_iterator(p, x.iter().zip(mu).map(|(a, b)| a - b));
        let psi_sigma = SymMatrix::new(&centered * centered.transpose() - sigma.matrix())?;
        let solved = self.solve(psi_sigma.matrix());
        let psi_sigma_inv_half = SymMatrix::new(-solved)?;
        Ok(InfluenceMats {
            psi_mu: centered,
            psi_sigma,
            psi_sigma_inv_half,
        })
    }
}

/// One-shot form of [`KroneckerSolver::influence`].
pub fn influence_mats(x: &[f64], mu: &[f64], sigma: &SymMatrix) -> Result<InfluenceMats> {
    KroneckerSolver::new(sigma)?.influence(x, mu, sigma)
}

/// Column-stacking vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for a `p x p` matrix.
pub fn dvec(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(p, p, v.as_slice())
}
