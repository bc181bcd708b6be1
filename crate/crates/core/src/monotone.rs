//! Superoperators on the Hilbert–Schmidt space and monotonicity inequalities.
//!
//! Matrices are vectorized by stacking columns, so `vec(Y A X) = (Xᵀ ⊗ Y) vec(A)`.
//! Left multiplication `L_Y: A ↦ YA` is `1 ⊗ Y` and right multiplication
//! `R_X: A ↦ AX` is `Xᵀ ⊗ 1`.
//!
//! `J_f(X, Y) = f(R_X L_Y⁺) L_Y` is assembled spectrally. With
//! `X = Σ λ_j |x_j⟩⟨x_j|` and `Y = Σ μ_i |y_i⟩⟨y_i|`, the matrices
//! `|y_i⟩⟨x_j|` form an orthonormal eigenbasis of both `L_Y` and `R_X`, and
//! `J_f` has eigenvalue `μ_i f(λ_j / μ_i)` on `|y_i⟩⟨x_j|` (zero when `μ_i` or
//! `λ_j` vanishes, following the convention `f(0) = 0`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::MapRep;
use crate::numerics::{
    hermitian_eig, hermitian_part, identity, kron, op_norm, pinv_psd, psd_power, psd_test,
    unvec_col, vec_col, CMat, SpectralDecomposition, ToleranceConfig,
};
use crate::verdict::{exact_verdict, Certificate, CheckVerdict};

/// Linear operator `M_in → M_out` as an `out² × in²` matrix on column-stacked vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    pub out_dim: usize,
    pub in_dim: usize,
    pub matrix: CMat,
}

impl SuperOperator {
    pub fn new(out_dim: usize, in_dim: usize, matrix: CMat) -> Result<Self> {
        if matrix.shape() != (out_dim * out_dim, in_dim * in_dim) {
            return Err(Error::DimensionMismatch(format!(
                "superoperator M_{in_dim} → M_{out_dim} needs a {}x{} matrix, got {}x{}",
                out_dim * out_dim,
                in_dim * in_dim,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            out_dim,
            in_dim,
            matrix,
        })
    }

    pub fn apply(&self, a: &CMat) -> Result<CMat> {
        if a.shape() != (self.in_dim, self.in_dim) {
            return Err(Error::DimensionMismatch(format!(
                "superoperator expects {}x{} input",
                self.in_dim, self.in_dim
            )));
        }
        let v = &self.matrix * vec_col(a);
        Ok(unvec_col(&v, self.out_dim, self.out_dim))
    }

    pub fn adjoint(&self) -> SuperOperator {
        SuperOperator {
            out_dim: self.in_dim,
            in_dim: self.out_dim,
            matrix: self.matrix.adjoint(),
        }
    }
}

/// `L_Y: A ↦ Y A`.
pub fn left_mult_superop(y: &CMat) -> Result<SuperOperator> {
    let m = crate::numerics::check_square(y)?;
    SuperOperator::new(m, m, kron(&identity(m), y))
}

/// `R_X: A ↦ A X`.
pub fn right_mult_superop(x: &CMat) -> Result<SuperOperator> {
    let m = crate::numerics::check_square(x)?;
    SuperOperator::new(m, m, kron(&x.transpose(), &identity(m)))
}

/// Matrix of `φ` acting on column-stacked inputs (`m² × n²`).
pub fn superop_of_map(map: &MapRep) -> SuperOperator {
    let (n, m) = (map.input_dim(), map.output_dim());
    let choi = map.choi();
    let matrix = CMat::from_fn(m * m, n * n, |row, col| {
        let (a, b) = (row % m, row / m);
        let (i, j) = (col % n, col / n);
        choi[(i * m + a, j * m + b)]
    });
    SuperOperator {
        out_dim: m,
        in_dim: n,
        matrix,
    }
}

/// Operator monotone functions on `(0, ∞)`, extended by `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params", rename_all = "snake_case")]
pub enum MonotoneFunction {
    /// `x^r`, `0 < r < 1`.
    Power { r: f64 },
    Identity {},
    /// `β + γx + x/(t + x)`.
    LoewnerAtom { beta: f64, gamma: f64, t: f64 },
}

impl MonotoneFunction {
    pub fn power(r: f64) -> Result<Self> {
        let f = Self::Power { r };
        f.validate()?;
        Ok(f)
    }

    pub fn loewner_atom(beta: f64, gamma: f64, t: f64) -> Result<Self> {
        let f = Self::LoewnerAtom { beta, gamma, t };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Power { r } if !(r > 0.0 && r < 1.0) => Err(Error::InvalidParameter(format!(
                "power exponent must lie in (0,1), got {r}"
            ))),
            Self::LoewnerAtom { beta, gamma, t }
                if ![beta, gamma, t].iter().all(|v| *v >= 0.0 && v.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "Loewner atom parameters must be finite and >= 0, got ({beta},{gamma},{t})"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Power { r } => x.powf(r),
            Self::Identity {} => x,
            Self::LoewnerAtom { beta, gamma, t } => beta + gamma * x + x / (t + x),
        }
    }
}

impl fmt::Display for MonotoneFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power { r } => write!(f, "power:{r}"),
            Self::Identity {} => write!(f, "identity"),
            Self::LoewnerAtom { beta, gamma, t } => write!(f, "loewner:{beta},{gamma},{t}"),
        }
    }
}

/// Parses `identity`, `power:R` or `loewner:BETA,GAMMA,T`.
impl FromStr for MonotoneFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("malformed function spec '{s}'"));
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?
        };
        match (name.trim(), nums.as_slice()) {
            ("identity", []) => Ok(Self::Identity {}),
            ("power", [r]) => Self::power(*r),
            ("loewner" | "loewner_atom", [b, g, t]) => Self::loewner_atom(*b, *g, *t),
            _ => Err(bad()),
        }
    }
}

/// `J_f(X, Y)` in spectral form.
#[derive(Debug, Clone)]
pub struct Jf {
    x_eig: SpectralDecomposition,
    y_eig: SpectralDecomposition,
    /// `coeffs[j·m + i]` is the eigenvalue on `|y_i⟩⟨x_j|`.
    coeffs: Vec<f64>,
    kernel_tol: f64,
}

impl Jf {
    pub fn dim(&self) -> usize {
        self.x_eig.dim()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    fn assemble(&self, coeffs: &[f64]) -> CMat {
        // columns of kron(conj(Vx), Vy) are vec(|y_i⟩⟨x_j|) at index j·m + i
        let basis = kron(&self.x_eig.eigenvectors.conjugate(), &self.y_eig.eigenvectors);
        let mut scaled = basis.clone();
        for (col, &c) in coeffs.iter().enumerate() {
            scaled.column_mut(col).scale_mut(c);
        }
        hermitian_part(&(scaled * basis.adjoint()))
    }

    pub fn matrix(&self) -> CMat {
        self.assemble(&self.coeffs)
    }

    pub fn superop(&self) -> SuperOperator {
        let m = self.dim();
        SuperOperator {
            out_dim: m,
            in_dim: m,
            matrix: self.matrix(),
        }
    }

    /// Pseudoinverse: coefficients above the kernel threshold are inverted.
    pub fn pinv_coefficients(&self) -> Vec<f64> {
        let top = self.coeffs.iter().copied().fold(0.0, f64::max);
        let cut = self.kernel_tol * (1.0 + top);
        self.coeffs
            .iter()
            .map(|&c| if c > cut { 1.0 / c } else { 0.0 })
            .collect()
    }

    pub fn pinv_matrix(&self) -> CMat {
        self.assemble(&self.pinv_coefficients())
    }
}

/// `J_f(X, Y) = f(R_X L_Y⁺) L_Y` for PSD `X, Y`.
pub fn build_jf(f: &MonotoneFunction, x: &CMat, y: &CMat, tol: &ToleranceConfig) -> Result<Jf> {
    f.validate()?;
    let m = crate::numerics::check_square(x)?;
    if y.shape() != (m, m) {
        return Err(Error::DimensionMismatch("J_f needs X and Y of equal size".into()));
    }
    let x_eig = hermitian_eig(x)?;
    let y_eig = hermitian_eig(y)?;
    for eig in [&x_eig, &y_eig] {
        let threshold = tol.psd_threshold(eig.norm());
        if eig.min() < threshold {
            return Err(Error::NotPsd {
                min_eig: eig.min(),
                threshold,
            });
        }
    }
    let x_cut = tol.kernel_threshold(x_eig.norm());
    let y_cut = tol.kernel_threshold(y_eig.norm());
    let mut coeffs = vec![0.0; m * m];
    for (j, &lam) in x_eig.eigenvalues.iter().enumerate() {
        for (i, &mu) in y_eig.eigenvalues.iter().enumerate() {
            coeffs[j * m + i] = if mu <= y_cut || lam <= x_cut {
                0.0
            } else {
                mu * f.eval(lam / mu)
            };
        }
    }
    Ok(Jf {
        x_eig,
        y_eig,
        coeffs,
        kernel_tol: tol.kernel_tol,
    })
}

/// Moore–Penrose pseudoinverse of a PSD superoperator.
pub fn jf_pinv(j: &SuperOperator, tol: &ToleranceConfig) -> Result<SuperOperator> {
    SuperOperator::new(j.out_dim, j.in_dim, pinv_psd(&j.matrix, tol)?)
}

fn require_pd(m: &CMat, tol: &ToleranceConfig) -> Result<()> {
    let eig = hermitian_eig(m)?;
    if eig.min() <= tol.kernel_threshold(eig.norm()) {
        return Err(Error::NotPositiveDefinite(eig.min()));
    }
    Ok(())
}

fn superop_verdict(
    check: &str,
    diff: &CMat,
    scale: f64,
    x: &CMat,
    y: &CMat,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    let t = psd_test(diff, scale, tol)?;
    let scale = t.norm.max(scale);
    Ok(exact_verdict(
        check,
        t.min_eig,
        scale,
        t.psd,
        Certificate::Superoperator {
            x: x.clone(),
            y: y.clone(),
            vector: t.min_vector,
        },
    )
    .with_detail("max_abs_difference", t.norm))
}

fn images(map: &MapRep, x: &CMat, y: &CMat) -> Result<(CMat, CMat)> {
    Ok((
        hermitian_part(&map.apply_adjoint(x)?),
        hermitian_part(&map.apply_adjoint(y)?),
    ))
}

/// `φ* J_f(X,Y) φ ≤ J_f(φ*(X), φ*(Y))` for positive definite `X, Y`.
pub fn check_hp_b(
    map: &MapRep,
    f: &MonotoneFunction,
    x: &CMat,
    y: &CMat,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    require_pd(x, tol)?;
    require_pd(y, tol)?;
    let (px, py) = images(map, x, y)?;
    let phi = superop_of_map(map);
    let inner = build_jf(f, x, y, tol)?.matrix();
    let outer = build_jf(f, &px, &py, tol)?.matrix();
    let sandwiched = phi.matrix.adjoint() * inner * &phi.matrix;
    let scale = op_norm(&outer) + op_norm(&sandwiched);
    superop_verdict("hp_b", &(outer - sandwiched), scale, x, y, tol)
}

/// `φ J_f(φ*(X), φ*(Y))⁺ φ* ≤ J_f(X,Y)⁻¹` for positive definite `X, Y`.
pub fn check_hp_a(
    map: &MapRep,
    f: &MonotoneFunction,
    x: &CMat,
    y: &CMat,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    require_pd(x, tol)?;
    require_pd(y, tol)?;
    let (px, py) = images(map, x, y)?;
    let phi = superop_of_map(map);
    let inverse = build_jf(f, x, y, tol)?.pinv_matrix();
    let outer_pinv = build_jf(f, &px, &py, tol)?.pinv_matrix();
    let sandwiched = &phi.matrix * outer_pinv * phi.matrix.adjoint();
    let scale = op_norm(&inverse) + op_norm(&sandwiched);
    superop_verdict("hp_a", &(inverse - sandwiched), scale, x, y, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub a: CheckVerdict,
    pub b: CheckVerdict,
    pub agree: bool,
}

/// Runs both forms of the monotonicity inequality where they are known to be
/// equivalent (`X, Y, φ*(X), φ*(Y)` all positive definite).
pub fn check_equivalence_ab(
    map: &MapRep,
    f: &MonotoneFunction,
    x: &CMat,
    y: &CMat,
    tol: &ToleranceConfig,
) -> Result<EquivalenceReport> {
    let (px, py) = images(map, x, y)?;
    require_pd(&px, tol)?;
    require_pd(&py, tol)?;
    let a = check_hp_a(map, f, x, y, tol)?;
    let b = check_hp_b(map, f, x, y, tol)?;
    let agree = a.passed() == b.passed();
    Ok(EquivalenceReport { a, b, agree })
}

/// `φ* L_Y φ ≤ L_{φ*(Y)}` and `φ* R_X φ ≤ R_{φ*(X)}`.
pub fn check_ph7(map: &MapRep, x: &CMat, y: &CMat, tol: &ToleranceConfig) -> Result<CheckVerdict> {
    for (name, m) in [("X", x), ("Y", y)] {
        let eig = hermitian_eig(m)?;
        if eig.min() < tol.psd_threshold(eig.norm()) {
            return Err(Error::InvalidParameter(format!("{name} is not PSD")));
        }
    }
    let (px, py) = images(map, x, y)?;
    let phi = superop_of_map(map);
    let sandwich = |s: &SuperOperator| phi.matrix.adjoint() * &s.matrix * &phi.matrix;

    let l_big = left_mult_superop(&py)?.matrix;
    let l_small = sandwich(&left_mult_superop(y)?);
    let l_scale = op_norm(&l_big) + op_norm(&l_small);
    let left = superop_verdict("ph7_left", &(l_big - l_small), l_scale, x, y, tol)?;

    let r_big = right_mult_superop(&px)?.matrix;
    let r_small = sandwich(&right_mult_superop(x)?);
    let r_scale = op_norm(&r_big) + op_norm(&r_small);
    let right = superop_verdict("ph7_right", &(r_big - r_small), r_scale, x, y, tol)?;

    let (left_min, right_min) = (left.value, right.value);
    let mut out = if !left.passed() { left } else { right };
    out.check = "ph7".into();
    out.value = left_min.min(right_min);
    Ok(out
        .with_detail("left_min_eig", left_min)
        .with_detail("right_min_eig", right_min))
}

/// Signed gap of a trace inequality; nonnegative when the inequality holds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceGap {
    pub gap: f64,
    /// Side expected to be larger.
    pub upper: f64,
    /// Side expected to be smaller.
    pub lower: f64,
    pub scale: f64,
}

impl TraceGap {
    fn new(upper: f64, lower: f64) -> Self {
        Self {
            gap: upper - lower,
            upper,
            lower,
            scale: 1.0 + upper.abs() + lower.abs(),
        }
    }
}

fn check_exponent(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("r must lie in (0,1), got {r}")))
    }
}

/// `Tr[K* φ*(Y)^{1−r} K φ*(X)^r] − Tr[φ(K)* Y^{1−r} φ(K) X^r]` for `K ∈ M_n`.
pub fn check_l1(
    map: &MapRep,
    x: &CMat,
    y: &CMat,
    k: &CMat,
    r: f64,
    tol: &ToleranceConfig,
) -> Result<TraceGap> {
    check_exponent(r)?;
    require_pd(x, tol)?;
    require_pd(y, tol)?;
    let (px, py) = images(map, x, y)?;
    let upper = (k.adjoint() * psd_power(&py, 1.0 - r, tol)? * k * psd_power(&px, r, tol)?)
        .trace()
        .re;
    let fk = map.apply(k)?;
    let lower = (fk.adjoint() * psd_power(y, 1.0 - r, tol)? * &fk * psd_power(x, r, tol)?)
        .trace()
        .re;
    Ok(TraceGap::new(upper, lower))
}

/// `Tr[K* Y^{r−1} K X^{−r}] − Tr[φ*(K)* (φ*(Y)⁺)^{1−r} φ*(K) (φ*(X)⁺)^r]` for `K ∈ M_m`.
pub fn check_l2(
    map: &MapRep,
    x: &CMat,
    y: &CMat,
    k: &CMat,
    r: f64,
    tol: &ToleranceConfig,
) -> Result<TraceGap> {
    check_exponent(r)?;
    require_pd(x, tol)?;
    require_pd(y, tol)?;
    let (px, py) = images(map, x, y)?;
    let upper = (k.adjoint() * psd_power(y, r - 1.0, tol)? * k * psd_power(x, -r, tol)?)
        .trace()
        .re;
    let fk = map.apply_adjoint(k)?;
    let lower = (fk.adjoint() * psd_power(&py, r - 1.0, tol)? * &fk * psd_power(&px, -r, tol)?)
        .trace()
        .re;
    Ok(TraceGap::new(upper, lower))
}
