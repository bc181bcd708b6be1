//! Dense complex linear algebra used by every checker.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. The spectral routines treat
//! their input as Hermitian: small asymmetries are absorbed by replacing `M`
//! with `(M + M*)/2`, larger ones are reported as errors.
//!
//! Two relative thresholds govern the semantics of "positive" and "zero":
//!
//! * a Hermitian `M` is PSD when `λ_min(M) ≥ -psd_tol·(1 + ‖M‖₂)`;
//! * an eigenvalue belongs to the kernel when `λ ≤ kernel_tol·(1 + ‖M‖₂)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative asymmetry `‖M − M*‖_F / (1 + ‖M‖_F)` above which a matrix is not
/// accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-8;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Relative eigenvalue threshold for positive semidefiniteness.
    pub psd_tol: f64,
    /// Relative eigenvalue threshold separating the kernel from the support.
    pub kernel_tol: f64,
    /// Absolute gap allowed between a primal value and its dual certificate.
    pub duality_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            psd_tol: 1e-9,
            kernel_tol: 1e-10,
            duality_tol: 1e-8,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("psd_tol", self.psd_tol),
            ("kernel_tol", self.kernel_tol),
            ("duality_tol", self.duality_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Most negative eigenvalue still accepted as PSD for a matrix of the given norm.
    pub fn psd_threshold(&self, norm: f64) -> f64 {
        -self.psd_tol * (1.0 + norm)
    }

    /// Largest eigenvalue treated as zero for a matrix of the given norm.
    pub fn kernel_threshold(&self, norm: f64) -> f64 {
        self.kernel_tol * (1.0 + norm)
    }
}

/// Eigen-decomposition `M = V Λ V*` of a Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `eigenvalues`.
    pub eigenvectors: CMat,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Spectral norm `max |λ|`.
    pub fn norm(&self) -> f64 {
        self.max().abs().max(self.min().abs())
    }

    pub fn eigenvector(&self, i: usize) -> CVec {
        self.eigenvectors.column(i).into_owned()
    }

    /// `Σ f(λᵢ) |vᵢ⟩⟨vᵢ|`.
    pub fn map_spectrum(&self, mut f: impl FnMut(f64) -> f64) -> CMat {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(j).scale_mut(s);
        }
        let out = &scaled * self.eigenvectors.adjoint();
        debug_assert_eq!(out.nrows(), n);
        hermitian_part(&out)
    }

    pub fn reconstruct(&self) -> CMat {
        self.map_spectrum(|l| l)
    }
}

pub fn check_square(m: &CMat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare(m.nrows(), m.ncols()));
    }
    Ok(m.nrows())
}

pub fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).unscale(2.0)
}

/// Absolute Frobenius asymmetry `‖M − M*‖_F`.
pub fn asymmetry(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn trace(m: &CMat) -> Complex64 {
    m.trace()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Matrix unit `E_ij` in `M_n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMat {
    let mut e = CMat::zeros(n, n);
    e[(i, j)] = c64(1.0, 0.0);
    e
}

pub fn basis_vector(n: usize, i: usize) -> CVec {
    let mut e = CVec::zeros(n);
    e[i] = c64(1.0, 0.0);
    e
}

pub fn from_real_diagonal(d: &[f64]) -> CMat {
    let mut m = CMat::zeros(d.len(), d.len());
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = c64(x, 0.0);
    }
    m
}

/// `|a⟩⟨b|`.
pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues in descending order.
pub fn hermitian_eig(m: &CMat) -> Result<SpectralDecomposition> {
    let n = check_square(m)?;
    check_finite(m)?;
    let asym = asymmetry(m);
    if asym > HERMITIAN_TOL * (1.0 + m.norm()) {
        return Err(Error::NotHermitian(asym));
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: CMat::zeros(0, 0),
        });
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

pub fn min_eigenvalue(m: &CMat) -> Result<f64> {
    Ok(hermitian_eig(m)?.min())
}

/// Outcome of a PSD test on a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct PsdTest {
    pub psd: bool,
    pub min_eig: f64,
    pub norm: f64,
    /// Unit eigenvector for `min_eig`.
    pub min_vector: CVec,
}

/// PSD test with the relative threshold `-psd_tol·(1 + scale)`, where `scale`
/// defaults to the spectral norm of `m` but may be raised by the caller when
/// `m` is a difference of larger terms.
pub fn psd_test(m: &CMat, extra_scale: f64, tol: &ToleranceConfig) -> Result<PsdTest> {
    let eig = hermitian_eig(m)?;
    let norm = eig.norm();
    let n = eig.dim();
    let (min_eig, min_vector) = if n == 0 {
        (0.0, CVec::zeros(0))
    } else {
        (eig.min(), eig.eigenvector(n - 1))
    };
    Ok(PsdTest {
        psd: min_eig >= tol.psd_threshold(norm.max(extra_scale)),
        min_eig,
        norm,
        min_vector,
    })
}

pub fn is_psd(m: &CMat, tol: &ToleranceConfig) -> Result<bool> {
    Ok(psd_test(m, 0.0, tol)?.psd)
}

fn require_psd(eig: &SpectralDecomposition, tol: &ToleranceConfig) -> Result<()> {
    let threshold = tol.psd_threshold(eig.norm());
    if eig.min() < threshold {
        return Err(Error::NotPsd {
            min_eig: eig.min(),
            threshold,
        });
    }
    Ok(())
}

/// Applies `f` to the support of a PSD matrix and zero to its kernel.
pub fn psd_function(
    m: &CMat,
    tol: &ToleranceConfig,
    f: impl Fn(f64) -> f64,
) -> Result<CMat> {
    let eig = hermitian_eig(m)?;
    require_psd(&eig, tol)?;
    let cut = tol.kernel_threshold(eig.norm());
    Ok(eig.map_spectrum(|l| if l > cut { f(l) } else { 0.0 }))
}

/// Moore–Penrose pseudoinverse of a PSD matrix.
pub fn pinv_psd(m: &CMat, tol: &ToleranceConfig) -> Result<CMat> {
    psd_function(m, tol, |l| 1.0 / l)
}

/// `M^p` on the support of a PSD matrix (zero on the kernel). Negative `p`
/// gives powers of the pseudoinverse.
pub fn psd_power(m: &CMat, p: f64, tol: &ToleranceConfig) -> Result<CMat> {
    psd_function(m, tol, |l| l.powf(p))
}

pub fn psd_sqrt(m: &CMat, tol: &ToleranceConfig) -> Result<CMat> {
    psd_function(m, tol, f64::sqrt)
}

/// Orthonormal basis of the numerical kernel of a PSD matrix.
pub fn kernel_basis(m: &CMat, tol: &ToleranceConfig) -> Result<Vec<CVec>> {
    let eig = hermitian_eig(m)?;
    let cut = tol.kernel_threshold(eig.norm());
    Ok(eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l <= cut)
        .map(|(i, _)| eig.eigenvector(i))
        .collect())
}

/// `ker(A) ⊆ ker(B)` for PSD `A` and any `B` with as many columns as `A` has rows.
pub fn kernel_included(a: &CMat, b: &CMat, tol: &ToleranceConfig) -> Result<bool> {
    let n = check_square(a)?;
    if b.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel_included: A is {n}x{n} but B has {} columns",
            b.ncols()
        )));
    }
    let basis = kernel_basis(a, tol)?;
    if basis.is_empty() {
        return Ok(true);
    }
    let cut = tol.kernel_tol * (1.0 + op_norm(b));
    Ok(basis.iter().all(|k| (b * k).norm() <= cut))
}

/// Evaluation of the three equivalent conditions for positivity of the block
/// `(X K*; K Y)`.
#[derive(Debug, Clone, Serialize)]
pub struct SchurReport {
    /// The block itself is PSD.
    pub block_psd: bool,
    /// `ker(Y) ⊆ ker(K*)` and `X ≥ K* Y⁺ K`.
    pub via_y: bool,
    /// `ker(X) ⊆ ker(K)` and `Y ≥ K X⁺ K*`.
    pub via_x: bool,
    pub block_min_eig: f64,
    pub schur_y_min_eig: f64,
    pub schur_x_min_eig: f64,
}

impl SchurReport {
    pub fn verdict(&self) -> bool {
        self.block_psd
    }
}

/// Block matrix `(a b; c d)`.
pub fn block2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let (p, q) = (a.nrows(), d.nrows());
    let mut out = CMat::zeros(p + q, a.ncols() + d.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out.view_mut((p, 0), c.shape()).copy_from(c);
    out.view_mut((p, a.ncols()), d.shape()).copy_from(d);
    out
}

/// Checks the block `(X K*; K Y)` three ways: directly, through the Schur
/// complement over `Y`, and through the Schur complement over `X`.
///
/// `X` is `p×p`, `Y` is `q×q` and `K` maps the first space into the second
/// (`q×p`). Disagreement between the three answers is an error.
pub fn schur_block_psd(
    x: &CMat,
    y: &CMat,
    k: &CMat,
    tol: &ToleranceConfig,
) -> Result<SchurReport> {
    let p = check_square(x)?;
    let q = check_square(y)?;
    if k.shape() != (q, p) {
        return Err(Error::DimensionMismatch(format!(
            "schur_block_psd: K is {}x{}, expected {q}x{p}",
            k.nrows(),
            k.ncols()
        )));
    }
    let kd = k.adjoint();
    let block = block2(x, &kd, k, y);
    let block_test = psd_test(&block, 0.0, tol)?;

    let y_pinv = pinv_psd(y, tol)?;
    let cy = &kd * &y_pinv * k;
    let sy = psd_test(&(x - &cy), op_norm(x) + op_norm(&cy), tol)?;
    let via_y = kernel_included(y, &kd, tol)? && sy.psd;

    let x_pinv = pinv_psd(x, tol)?;
    let cx = k * &x_pinv * &kd;
    let sx = psd_test(&(y - &cx), op_norm(y) + op_norm(&cx), tol)?;
    let via_x = kernel_included(x, k, tol)? && sx.psd;

    let report = SchurReport {
        block_psd: block_test.psd,
        via_y,
        via_x,
        block_min_eig: block_test.min_eig,
        schur_y_min_eig: sy.min_eig,
        schur_x_min_eig: sx.min_eig,
    };
    if report.block_psd != via_y || report.block_psd != via_x {
        return Err(Error::SchurDisagreement {
            block: report.block_psd,
            via_y,
            via_x,
        });
    }
    Ok(report)
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `Tr₁` of a matrix on `Cⁿ ⊗ Cᵐ`, leaving an `m×m` matrix.
pub fn partial_trace_first(m: &CMat, n: usize, d: usize) -> Result<CMat> {
    if m.shape() != (n * d, n * d) {
        return Err(Error::DimensionMismatch(format!(
            "partial_trace_first: matrix is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            n * d,
            n * d
        )));
    }
    let mut out = CMat::zeros(d, d);
    for i in 0..n {
        out += m.view((i * d, i * d), (d, d));
    }
    Ok(out)
}

/// Column-stacking vectorization: `vec(A)[i + j·rows] = A[i, j]`.
pub fn vec_col(a: &CMat) -> CVec {
    // nalgebra storage is column-major, so this is a plain copy.
    CVec::from_column_slice(a.as_slice())
}

pub fn unvec_col(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Hilbert–Schmidt inner product `Tr[A* B]`.
pub fn hs_inner(a: &CMat, b: &CMat) -> Complex64 {
    a.dotc(b)
}

pub fn to_vec_pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn from_vec_pairs(v: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|p| c64(p[0], p[1])))
}

/// Row-major `[[[re, im], ...], ...]` view of a matrix.
pub fn to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    let m = CMat::from_fn(r, c, |i, j| c64(rows[i][j][0], rows[i][j][1]));
    check_finite(&m)?;
    Ok(m)
}
