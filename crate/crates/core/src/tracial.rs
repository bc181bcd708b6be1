//! The functional `F(K, X) = Tr[K* X⁺ K]`, its convex dual over the cone
//! `Ω = {(L, Y) : Y ≤ -LL*}`, and the tracial inequalities built from it.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::maps::MapRep;
use crate::numerics::{
    hermitian_eig, hermitian_part, kernel_included, op_norm, pinv_psd, CMat, ToleranceConfig,
};
use crate::random::{ginibre, random_pd, random_psd_with_rank, rng_for};
use crate::verdict::{ser_mat, SchwarzWitness};

const PAIR_STREAM: u64 = 0x5041_4952;

/// Relative tolerance below which a signed gap counts as a violation.
pub const GAP_TOL: f64 = 1e-7;

/// A value in `[0, ∞]` or `(-∞, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(*v),
            Self::Infinite => None,
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Self::Finite(a), Self::Finite(b)) => a.partial_cmp(b),
            (Self::Finite(_), Self::Infinite) => Some(Ordering::Less),
            (Self::Infinite, Self::Finite(_)) => Some(Ordering::Greater),
            (Self::Infinite, Self::Infinite) => Some(Ordering::Equal),
        }
    }
}

/// Serialized as a number, or the string `"inf"`.
impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => s.serialize_f64(*v),
            Self::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Argument `(K, X)` of `F` with `X ≥ 0`.
#[derive(Debug, Clone, Serialize)]
pub struct TracialPair {
    #[serde(serialize_with = "ser_mat")]
    pub k: CMat,
    #[serde(serialize_with = "ser_mat")]
    pub x: CMat,
}

impl TracialPair {
    pub fn new(k: CMat, x: CMat, tol: &ToleranceConfig) -> Result<Self> {
        let m = crate::numerics::check_square(&x)?;
        if k.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!("K must be {m}x{m}")));
        }
        let x = hermitian_part(&x);
        let eig = hermitian_eig(&x)?;
        let threshold = tol.psd_threshold(eig.norm());
        if eig.min() < threshold {
            return Err(Error::NotPsd {
                min_eig: eig.min(),
                threshold,
            });
        }
        Ok(Self { k, x })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// `ker(X) ⊆ ker(K*)`.
    pub fn is_valid(&self, tol: &ToleranceConfig) -> Result<bool> {
        kernel_included(&self.x, &self.k.adjoint(), tol)
    }

    /// Image `(φ*(K), φ*(X))`.
    pub fn pull_back(&self, map: &MapRep, tol: &ToleranceConfig) -> Result<TracialPair> {
        TracialPair::new(map.apply_adjoint(&self.k)?, map.apply_adjoint(&self.x)?, tol)
    }
}

/// Point `(L, Y)` with `Y` Hermitian.
#[derive(Debug, Clone, Serialize)]
pub struct OmegaPoint {
    #[serde(serialize_with = "ser_mat")]
    pub l: CMat,
    #[serde(serialize_with = "ser_mat")]
    pub y: CMat,
}

impl OmegaPoint {
    pub fn new(l: CMat, y: CMat) -> Result<Self> {
        let m = crate::numerics::check_square(&y)?;
        if l.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!("L must be {m}x{m}")));
        }
        Ok(Self {
            l,
            y: hermitian_part(&y),
        })
    }
}

/// `F(K, X) = Tr[K* X⁺ K]` when `ker X ⊆ ker K*`, and `+∞` otherwise.
pub fn eval_f(p: &TracialPair, tol: &ToleranceConfig) -> Result<ExtendedReal> {
    if !p.is_valid(tol)? {
        return Ok(ExtendedReal::Infinite);
    }
    let v = (p.k.adjoint() * pinv_psd(&p.x, tol)? * &p.k).trace().re;
    Ok(ExtendedReal::Finite(v))
}

/// `Y + LL* ≤ 0` up to `psd_tol·(1 + ‖Y‖ + ‖LL*‖)`.
pub fn omega_contains(q: &OmegaPoint, tol: &ToleranceConfig) -> Result<bool> {
    let ll = &q.l * q.l.adjoint();
    let s = hermitian_part(&(&q.y + &ll));
    let top = hermitian_eig(&s)?.max();
    Ok(top <= tol.psd_tol * (1.0 + op_norm(&q.y) + op_norm(&ll)))
}

/// `Tr[XY] + Tr[K*L] + Tr[KL*]`.
pub fn pairing(p: &TracialPair, q: &OmegaPoint) -> Result<f64> {
    if p.dim() != q.y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "pairing of M_{} with M_{}",
            p.dim(),
            q.y.nrows()
        )));
    }
    let v = (&p.x * &q.y).trace() + (p.k.adjoint() * &q.l).trace() + (&p.k * q.l.adjoint()).trace();
    Ok(v.re)
}

/// The maximizer `(L, Y) = (X⁺K, -LL*)` of `pairing(p, ·)` over `Ω`.
pub fn dual_optimizer(p: &TracialPair, tol: &ToleranceConfig) -> Result<OmegaPoint> {
    if !p.is_valid(tol)? {
        return Err(Error::KernelPrecondition(
            "ker(X) ⊄ ker(K*): the supremum is infinite".into(),
        ));
    }
    let l = pinv_psd(&p.x, tol)? * &p.k;
    let y = -(&l * l.adjoint());
    OmegaPoint::new(l, y)
}

/// Indicator of `Ω`: `0` inside, `+∞` outside.
pub fn eval_g(q: &OmegaPoint, tol: &ToleranceConfig) -> Result<ExtendedReal> {
    Ok(if omega_contains(q, tol)? {
        ExtendedReal::Finite(0.0)
    } else {
        ExtendedReal::Infinite
    })
}

/// Seeded point of `Ω`: `Y = -LL* - slack·S` with `S` a random PSD matrix.
pub fn random_omega_point<R: Rng + ?Sized>(rng: &mut R, m: usize, slack: f64) -> Result<OmegaPoint> {
    let l = ginibre(rng, m, m);
    let s = crate::random::random_gram(rng, m, m).scale(slack);
    OmegaPoint::new(l.clone(), -(&l * l.adjoint()) - s)
}

/// Signed gap of a tracial inequality together with the kernel-transport flag
/// `ker φ*(X) ⊆ ker φ*(K)*`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracialGap {
    pub gap: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub scale: f64,
    pub transport_ok: bool,
}

impl TracialGap {
    pub fn is_violation(&self) -> bool {
        !self.transport_ok || self.gap < -GAP_TOL * self.scale
    }
}

fn tracial_gap(map: &MapRep, p: &TracialPair, lhs: f64, tol: &ToleranceConfig) -> Result<TracialGap> {
    let image = p.pull_back(map, tol)?;
    let transport_ok = image.is_valid(tol)?;
    let rhs = (image.k.adjoint() * pinv_psd(&image.x, tol)? * &image.k)
        .trace()
        .re;
    Ok(TracialGap {
        gap: lhs - rhs,
        lhs,
        rhs,
        scale: 1.0 + lhs.abs() + rhs.abs(),
        transport_ok,
    })
}

fn require_valid(p: &TracialPair, tol: &ToleranceConfig) -> Result<()> {
    if !p.is_valid(tol)? {
        return Err(Error::KernelPrecondition("ker(X) ⊄ ker(K*)".into()));
    }
    Ok(())
}

/// `Tr[φ*(K*X⁺K)] − Tr[φ*(K)* φ*(X)⁺ φ*(K)]`; nonnegative for generalized Schwarz maps.
pub fn check_tracial_gs(map: &MapRep, p: &TracialPair, tol: &ToleranceConfig) -> Result<TracialGap> {
    require_valid(p, tol)?;
    let inner = p.k.adjoint() * pinv_psd(&p.x, tol)? * &p.k;
    let lhs = map.apply_adjoint(&inner)?.trace().re;
    tracial_gap(map, p, lhs, tol)
}

/// `Tr[K*X⁺K] − Tr[φ*(K)* φ*(X)⁺ φ*(K)]`; nonnegative for Schwarz maps.
pub fn check_tracial_schwarz(
    map: &MapRep,
    p: &TracialPair,
    tol: &ToleranceConfig,
) -> Result<TracialGap> {
    require_valid(p, tol)?;
    let lhs = (p.k.adjoint() * pinv_psd(&p.x, tol)? * &p.k).trace().re;
    tracial_gap(map, p, lhs, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessClass {
    /// Transport holds and the generalized Schwarz gap is at most `-λ`.
    GapViolation,
    /// `ker φ*(X) ⊄ ker φ*(K)*`.
    TransportViolation,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessPair {
    pub pair: TracialPair,
    pub class: WitnessClass,
    pub lambda: f64,
    pub report: TracialGap,
}

/// Turns a Schwarz-block eigenvector `(u, v)` with eigenvalue `-λ` into the
/// pair `X = |v⟩⟨v|`, `K = |v⟩⟨u|`, for which `K*X⁺K = |u⟩⟨u|` and
/// `λ + Tr[φ*(K*X⁺K)] ≤ F(φ*(K), φ*(X))`.
pub fn violation_from_witness(
    map: &MapRep,
    w: &SchwarzWitness,
    tol: &ToleranceConfig,
) -> Result<WitnessPair> {
    w.verify(map, tol)?;
    if w.v.norm() < 1e-12 {
        return Err(Error::WitnessRejected("v vanishes".into()));
    }
    let x = &w.v * w.v.adjoint();
    let k = &w.v * w.u.adjoint();
    let pair = TracialPair::new(k, x, tol)?;
    let report = check_tracial_gs(map, &pair, tol)?;
    let class = if report.transport_ok {
        WitnessClass::GapViolation
    } else {
        WitnessClass::TransportViolation
    };
    Ok(WitnessPair {
        pair,
        class,
        lambda: w.lambda,
        report,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FMonotoneReport {
    pub lhs: ExtendedReal,
    pub rhs: ExtendedReal,
    pub holds: bool,
}

/// `F(K, X) ≥ F(φ*(K), φ*(X))` in the extended reals.
pub fn check_f_monotone(
    map: &MapRep,
    p: &TracialPair,
    tol: &ToleranceConfig,
) -> Result<FMonotoneReport> {
    let lhs = eval_f(p, tol)?;
    let rhs = eval_f(&p.pull_back(map, tol)?, tol)?;
    let holds = match (lhs, rhs) {
        (ExtendedReal::Infinite, _) => true,
        (_, ExtendedReal::Infinite) => false,
        (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => {
            a - b >= -GAP_TOL * (1.0 + a.abs() + b.abs())
        }
    };
    Ok(FMonotoneReport { lhs, rhs, holds })
}

/// Seeded valid pair on `M_m`. With `rank < m`, `X` has exactly that rank
/// and `K = V R` for the isometry `V` onto the range of `X`, so that
/// `ker X ⊆ ker K*`.
pub fn random_valid_pair<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    rank: usize,
    tol: &ToleranceConfig,
) -> Result<TracialPair> {
    if rank == 0 || rank > m {
        return Err(Error::InvalidParameter(format!("rank must lie in 1..={m}")));
    }
    if rank == m {
        let x = random_pd(rng, m);
        let k = ginibre(rng, m, m);
        return TracialPair::new(k, x, tol);
    }
    let (x, v) = random_psd_with_rank(rng, m, rank);
    let k = v * ginibre(rng, rank, m);
    TracialPair::new(k, x, tol)
}

/// Pair number `index` of the seeded ensemble: every third pair has a
/// rank-deficient `X`.
pub fn ensemble_pair(seed: u64, m: usize, index: usize, tol: &ToleranceConfig) -> Result<TracialPair> {
    let mut rng = rng_for(seed, &[PAIR_STREAM, m as u64, index as u64]);
    let rank = if index % 3 == 2 && m > 1 {
        rng.random_range(1..m)
    } else {
        m
    };
    random_valid_pair(&mut rng, m, rank, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TracialMode {
    Gs,
    Schwarz,
    Fmono,
}

impl std::str::FromStr for TracialMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gs" => Ok(Self::Gs),
            "schwarz" => Ok(Self::Schwarz),
            "fmono" => Ok(Self::Fmono),
            _ => Err(Error::InvalidParameter(format!("unknown tracial mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub mode: TracialMode,
    pub samples: usize,
    pub seed: u64,
    pub gaps: Vec<f64>,
    /// Gap divided by its scale.
    pub scaled_gaps: Vec<f64>,
    pub transport: Vec<bool>,
    pub min_gap: f64,
    pub min_scaled_gap: f64,
    /// Minimum, quartiles and maximum of the gaps.
    pub quantiles: [f64; 5],
    pub transport_failures: usize,
    pub violations: usize,
}

impl BatchReport {
    pub fn has_violation(&self) -> bool {
        self.violations > 0
    }
}

fn quantiles(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return [0.0; 5];
    }
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    [at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)]
}

/// Evaluates one tracial inequality on `samples` seeded ensemble pairs.
pub fn run_batch(
    map: &MapRep,
    mode: TracialMode,
    samples: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<BatchReport> {
    let m = map.output_dim();
    let rows: Vec<(f64, f64, bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let p = ensemble_pair(seed, m, i, tol)?;
            Ok(match mode {
                TracialMode::Gs | TracialMode::Schwarz => {
                    let r = if mode == TracialMode::Gs {
                        check_tracial_gs(map, &p, tol)?
                    } else {
                        check_tracial_schwarz(map, &p, tol)?
                    };
                    (r.gap, r.gap / r.scale, r.transport_ok, r.is_violation())
                }
                TracialMode::Fmono => {
                    let r = check_f_monotone(map, &p, tol)?;
                    let (gap, scaled) = match (r.lhs, r.rhs) {
                        (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => {
                            (a - b, (a - b) / (1.0 + a.abs() + b.abs()))
                        }
                        _ => (0.0, 0.0),
                    };
                    (gap, scaled, !r.rhs.is_infinite() || r.lhs.is_infinite(), !r.holds)
                }
            })
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let scaled_gaps: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let transport: Vec<bool> = rows.iter().map(|r| r.2).collect();
    Ok(BatchReport {
        mode,
        samples,
        seed,
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        min_scaled_gap: scaled_gaps.iter().copied().fold(f64::INFINITY, f64::min),
        quantiles: quantiles(&gaps),
        transport_failures: transport.iter().filter(|t| !**t).count(),
        violations: rows.iter().filter(|r| r.3).count(),
        gaps,
        scaled_gaps,
        transport,
    })
}
