//! Linear maps `φ: M_n → M_m` in Choi form.
//!
//! The Choi matrix is `C = Σ_ij E_ij ⊗ φ(E_ij)`, so the input index is the
//! first tensor factor: the `(i, j)` block of size `m×m` is `φ(E_ij)`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    c64, check_finite, check_square, hermitian_part, identity, kron, matrix_unit, op_norm,
    psd_function, CMat, ToleranceConfig,
};
use crate::random::{ginibre, rng_for};

/// Stream tag for Kraus operators of `random_cp_map`.
const RANDOM_CP_STREAM: u64 = 0x4b52_4155_5300_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct MapRep {
    n: usize,
    m: usize,
    choi: CMat,
    pub label: String,
}

impl MapRep {
    pub fn from_choi(n: usize, m: usize, choi: CMat, label: impl Into<String>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter("map dimensions must be >= 1".into()));
        }
        if choi.shape() != (n * m, n * m) {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix is {}x{}, expected {}x{} for n={n}, m={m}",
                choi.nrows(),
                choi.ncols(),
                n * m,
                n * m
            )));
        }
        check_finite(&choi)?;
        Ok(Self {
            n,
            m,
            choi,
            label: label.into(),
        })
    }

    /// Builds the map from its action on matrix units.
    pub fn from_fn(
        n: usize,
        m: usize,
        label: impl Into<String>,
        mut f: impl FnMut(usize, usize) -> CMat,
    ) -> Result<Self> {
        let mut choi = CMat::zeros(n * m, n * m);
        for i in 0..n {
            for j in 0..n {
                let img = f(i, j);
                if img.shape() != (m, m) {
                    return Err(Error::DimensionMismatch(format!(
                        "image of E_{i}{j} is {}x{}, expected {m}x{m}",
                        img.nrows(),
                        img.ncols()
                    )));
                }
                choi.view_mut((i * m, j * m), (m, m)).copy_from(&img);
            }
        }
        Self::from_choi(n, m, choi, label)
    }

    /// Map `A ↦ Σ_l K_l A K_l*`.
    pub fn from_kraus(kraus: &[CMat], label: impl Into<String>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidParameter("at least one Kraus operator required".into()))?;
        let (m, n) = first.shape();
        if kraus.iter().any(|k| k.shape() != (m, n)) {
            return Err(Error::DimensionMismatch("Kraus operators differ in shape".into()));
        }
        // C[(i,a),(j,b)] = Σ_l K_l[a,i] conj(K_l[b,j])
        let mut choi = CMat::zeros(n * m, n * m);
        for k in kraus {
            let kv = nalgebra::DVector::from_iterator(
                n * m,
                (0..n).flat_map(|i| (0..m).map(move |a| k[(a, i)])),
            );
            choi += &kv * kv.adjoint();
        }
        Self::from_choi(n, m, choi, label)
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn choi(&self) -> &CMat {
        &self.choi
    }

    /// `φ(E_ij)`.
    pub fn unit_image(&self, i: usize, j: usize) -> CMat {
        self.choi
            .view((i * self.m, j * self.m), (self.m, self.m))
            .into_owned()
    }

    /// `φ(A) = Σ_ij A_ij φ(E_ij)`, equivalently `Tr₁[(Aᵀ ⊗ 1_m) C]`.
    pub fn apply(&self, a: &CMat) -> Result<CMat> {
        if a.shape() != (self.n, self.n) {
            return Err(Error::DimensionMismatch(format!(
                "map {} expects {}x{} input, got {}x{}",
                self.label,
                self.n,
                self.n,
                a.nrows(),
                a.ncols()
            )));
        }
        let m = self.m;
        let mut out = CMat::zeros(m, m);
        for i in 0..self.n {
            for j in 0..self.n {
                let aij = a[(i, j)];
                if aij == Complex64::ZERO {
                    continue;
                }
                for b in 0..m {
                    for r in 0..m {
                        out[(r, b)] += aij * self.choi[(i * m + r, j * m + b)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `φ(1_n)`.
    pub fn apply_identity(&self) -> CMat {
        let m = self.m;
        let mut out = CMat::zeros(m, m);
        for i in 0..self.n {
            out += self.choi.view((i * m, i * m), (m, m));
        }
        out
    }

    /// Hilbert–Schmidt adjoint `φ*: M_m → M_n`, with `Tr[φ(A)* B] = Tr[A* φ*(B)]`.
    ///
    /// Its Choi matrix is the factor-swapped, entrywise-conjugated Choi matrix of `φ`.
    pub fn adjoint(&self) -> MapRep {
        let (n, m) = (self.n, self.m);
        let mut choi = CMat::zeros(n * m, n * m);
        for a in 0..m {
            for b in 0..m {
                for i in 0..n {
                    for j in 0..n {
                        choi[(a * n + i, b * n + j)] = self.choi[(i * m + a, j * m + b)].conj();
                    }
                }
            }
        }
        MapRep {
            n: m,
            m: n,
            choi,
            label: format!("adjoint({})", self.label),
        }
    }

    /// `φ*(B)`, computed without materializing the adjoint Choi matrix.
    pub fn apply_adjoint(&self, b: &CMat) -> Result<CMat> {
        if b.shape() != (self.m, self.m) {
            return Err(Error::DimensionMismatch(format!(
                "adjoint of map {} expects {}x{} input, got {}x{}",
                self.label,
                self.m,
                self.m,
                b.nrows(),
                b.ncols()
            )));
        }
        let (n, m) = (self.n, self.m);
        // φ*(B)_ij = ⟨φ(E_ij), B⟩ = Σ_ab conj(φ(E_ij)_ab) B_ab
        Ok(CMat::from_fn(n, n, |i, j| {
            let mut acc = Complex64::ZERO;
            for bb in 0..m {
                for a in 0..m {
                    acc += self.choi[(i * m + a, j * m + bb)].conj() * b[(a, bb)];
                }
            }
            acc
        }))
    }

    /// `outer ∘ self`.
    pub fn then(&self, outer: &MapRep) -> Result<MapRep> {
        if outer.n != self.m {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose: {} outputs M_{} but {} takes M_{}",
                self.label, self.m, outer.label, outer.n
            )));
        }
        let label = format!("{}∘{}", outer.label, self.label);
        MapRep::from_fn(self.n, outer.m, label, |i, j| {
            outer
                .apply(&self.unit_image(i, j))
                .expect("dimensions checked above")
        })
    }

    /// `id_k ⊗ φ : M_{kn} → M_{km}`.
    pub fn tensor_with_identity(&self, k: usize) -> Result<MapRep> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        let (n, m) = (self.n, self.m);
        let (big_n, big_m) = (k * n, k * m);
        let dim = big_n * big_m;
        let mut choi = CMat::zeros(dim, dim);
        // C'[((p,i),(p,a)), ((q,j),(q,b))] = C[(i,a),(j,b)]
        for p in 0..k {
            for q in 0..k {
                for i in 0..n {
                    for j in 0..n {
                        let row0 = (p * n + i) * big_m + p * m;
                        let col0 = (q * n + j) * big_m + q * m;
                        choi.view_mut((row0, col0), (m, m))
                            .copy_from(&self.choi.view((i * m, j * m), (m, m)));
                    }
                }
            }
        }
        MapRep::from_choi(big_n, big_m, choi, format!("id_{k}⊗{}", self.label))
    }

    /// `A ↦ B φ(A) B*` for an `r × m` matrix `B`.
    pub fn conjugate_output(&self, b: &CMat) -> Result<MapRep> {
        if b.ncols() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "output conjugation needs {} columns, got {}",
                self.m,
                b.ncols()
            )));
        }
        let lifted = kron(&identity(self.n), b);
        let choi = &lifted * &self.choi * lifted.adjoint();
        MapRep::from_choi(self.n, b.nrows(), choi, format!("conj({})", self.label))
    }

    pub fn scaled(&self, s: f64) -> MapRep {
        MapRep {
            choi: self.choi.scale(s),
            label: format!("{s}·{}", self.label),
            ..self.clone()
        }
    }

    pub fn plus(&self, other: &MapRep) -> Result<MapRep> {
        if (self.n, self.m) != (other.n, other.m) {
            return Err(Error::DimensionMismatch("cannot add maps of different shapes".into()));
        }
        MapRep::from_choi(
            self.n,
            self.m,
            &self.choi + &other.choi,
            format!("{}+{}", self.label, other.label),
        )
    }

    /// `ψ(K) = (φ(1)⁺)^{1/2} φ(K) (φ(1)⁺)^{1/2}`; unital whenever `φ(1) ≻ 0`.
    pub fn normalize_to_unital(&self, tol: &ToleranceConfig) -> Result<MapRep> {
        let s = hermitian_part(&self.apply_identity());
        let root = psd_function(&s, tol, |l| 1.0 / l.sqrt())?;
        let mut out = self.conjugate_output(&root)?;
        out.label = format!("normalized({})", self.label);
        Ok(out)
    }

    /// `φ + ε·φ_D` with `φ_D(A) = Tr[A]/n · 1_m`.
    pub fn regularize(&self, eps: f64) -> Result<MapRep> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("ε must be > 0, got {eps}")));
        }
        let mut out = self.plus(&depolarizing_map(self.n, self.m)?.scaled(eps))?;
        out.label = format!("{}+{eps}·φ_D", self.label);
        Ok(out)
    }

    pub fn is_hermiticity_preserving(&self, tol: &ToleranceConfig) -> bool {
        let asym = crate::numerics::asymmetry(&self.choi);
        asym <= tol.kernel_tol * (1.0 + op_norm(&self.choi))
    }

    pub fn to_file(&self) -> MapFile {
        MapFile {
            label: self.label.clone(),
            n: self.n,
            m: self.m,
            choi: crate::numerics::to_rows(&self.choi),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("map serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<MapRep> {
        let file: MapFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedMap(e.to_string()))?;
        file.into_map()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MapRep> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk `.map.json` layout. Entries are `[re, im]` pairs, rows in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapFile {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub choi: Vec<Vec<[f64; 2]>>,
}

impl MapFile {
    pub fn into_map(self) -> Result<MapRep> {
        let dim = self.n * self.m;
        if self.choi.len() != dim || self.choi.iter().any(|r| r.len() != dim) {
            return Err(Error::MalformedMap(format!(
                "choi must be {dim}x{dim} for n={}, m={}",
                self.n, self.m
            )));
        }
        let choi = crate::numerics::from_rows(&self.choi)
            .map_err(|e| Error::MalformedMap(e.to_string()))?;
        MapRep::from_choi(self.n, self.m, choi, self.label)
            .map_err(|e| Error::MalformedMap(e.to_string()))
    }
}

pub fn identity_map(n: usize) -> Result<MapRep> {
    MapRep::from_fn(n, n, format!("identity({n})"), |i, j| matrix_unit(n, i, j))
}

/// `φ_D(A) = Tr[A]/n · 1_m`; completely positive and unital.
pub fn depolarizing_map(n: usize, m: usize) -> Result<MapRep> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("map dimensions must be >= 1".into()));
    }
    MapRep::from_choi(
        n,
        m,
        identity(n * m).unscale(n as f64),
        format!("depolarizing({n},{m})"),
    )
}

/// `X ↦ t·Tr[X]·1_n − X` on `M_n`.
pub fn choi_reduction_map(t: f64, n: usize) -> Result<MapRep> {
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t must be finite, got {t}")));
    }
    MapRep::from_fn(n, n, format!("choi_reduction({t},{n})"), |i, j| {
        let mut img = -matrix_unit(n, i, j);
        if i == j {
            img += identity(n).scale(t);
        }
        img
    })
}

/// `A ↦ Aᵀ`; positive, not 2-positive.
pub fn transpose_map(n: usize) -> Result<MapRep> {
    MapRep::from_fn(n, n, format!("transpose({n})"), |i, j| matrix_unit(n, j, i))
}

/// `A ↦ U A U*`.
pub fn unitary_conjugation_map(u: &CMat, tol: &ToleranceConfig) -> Result<MapRep> {
    let n = check_square(u)?;
    let defect = (u.adjoint() * u - identity(n)).norm();
    if defect > tol.kernel_tol.sqrt() {
        return Err(Error::InvalidParameter(format!(
            "matrix is not unitary (‖U*U − 1‖_F = {defect:.3e})"
        )));
    }
    MapRep::from_kraus(std::slice::from_ref(u), format!("unitary_conjugation({n})"))
}

/// `A ↦ Σ_l K_l A K_l*` with `kraus_count` complex Gaussian `m×n` Kraus
/// operators scaled by `1/√(n·kraus_count)`.
pub fn random_cp_map(n: usize, m: usize, kraus_count: usize, seed: u64) -> Result<MapRep> {
    if kraus_count == 0 {
        return Err(Error::InvalidParameter("kraus_count must be >= 1".into()));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("map dimensions must be >= 1".into()));
    }
    let mut rng = rng_for(seed, &[RANDOM_CP_STREAM]);
    let s = 1.0 / ((n * kraus_count) as f64).sqrt();
    let kraus: Vec<CMat> = (0..kraus_count)
        .map(|_| ginibre(&mut rng, m, n).scale(s))
        .collect();
    MapRep::from_kraus(&kraus, format!("random_cp({n},{m},{kraus_count},seed={seed})"))
}

/// `id_2 ⊗ (X ↦ 3Tr[X]1₄ − X)`: a generalized Schwarz map on `M_8` that is
/// not 2-positive.
pub fn tensored_choi_map() -> Result<MapRep> {
    choi_reduction_map(3.0, 4)?.tensor_with_identity(2)
}

/// `|Ω⟩ = Σ_i |ii⟩` as an `n²` vector.
pub fn max_entangled(n: usize) -> crate::numerics::CVec {
    let mut v = crate::numerics::CVec::zeros(n * n);
    for i in 0..n {
        v[i * n + i] = c64(1.0, 0.0);
    }
    v
}
