//! Positivity classes of linear maps: complete positivity, k-positivity,
//! the generalized Schwarz property and the 2-positivity operator inequality.
//!
//! Exact checks return `ProvenPass` or `ProvenViolation`. Searches only ever
//! return `ProvenViolation` (with a certificate that is re-verified by direct
//! evaluation) or `NoViolationFound`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::MapRep;
use crate::monotone::{right_mult_superop, superop_of_map};
use crate::numerics::{
    block2, hermitian_eig, hermitian_part, kernel_included, op_norm, pinv_psd, psd_test,
    CMat, CVec, ToleranceConfig,
};
use crate::random::{ginibre, random_pd, random_unit_vector, rng_for};
use crate::verdict::{exact_verdict, Certificate, CheckVerdict, SchwarzWitness, Status};

const GSCHWARZ_STREAM: u64 = 0x4753_4348;
const KPOS_STREAM: u64 = 0x4b50_4f53;
const OP2POS_STREAM: u64 = 0x4f50_3250;
const IDMON_STREAM: u64 = 0x4944_4d4e;
const BLOCK_STREAM: u64 = 0x424c_4b53;

const WITNESS_TOL: f64 = 1e-8;

fn require_restarts(restarts: usize) -> Result<()> {
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1".into()));
    }
    Ok(())
}

/// Complete positivity: the Choi matrix is PSD.
pub fn check_cp(map: &MapRep, tol: &ToleranceConfig) -> Result<CheckVerdict> {
    let t = psd_test(&hermitian_part(map.choi()), 0.0, tol)?;
    Ok(exact_verdict(
        "cp",
        t.min_eig,
        1.0 + t.norm,
        t.psd,
        Certificate::Eigenvector {
            vector: t.min_vector,
        },
    ))
}

/// The block `(φ(1) φ(K); φ(K)* φ(K*K))`.
pub fn schwarz_block(map: &MapRep, k: &CMat) -> Result<CMat> {
    let n = map.input_dim();
    if k.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "schwarz_block: K must be {n}x{n}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let fk = map.apply(k)?;
    let fkk = map.apply(&(k.adjoint() * k))?;
    Ok(hermitian_part(&block2(
        &map.apply_identity(),
        &fk,
        &fk.adjoint(),
        &fkk,
    )))
}

impl SchwarzWitness {
    /// Recomputes the block at `a` and checks that `(u, v)` is a unit
    /// eigenvector with eigenvalue `-lambda < 0`.
    pub fn verify(&self, map: &MapRep, tol: &ToleranceConfig) -> Result<()> {
        let m = map.output_dim();
        if self.u.len() != m || self.v.len() != m {
            return Err(Error::WitnessRejected(format!(
                "witness vectors must have length {m}"
            )));
        }
        let block = schwarz_block(map, &self.a)?;
        let norm = op_norm(&block);
        let unit = self.u.norm_squared() + self.v.norm_squared();
        if (unit - 1.0).abs() > WITNESS_TOL {
            return Err(Error::WitnessRejected(format!(
                "‖u‖² + ‖v‖² = {unit}, expected 1"
            )));
        }
        if self.lambda.is_nan() || self.lambda <= tol.psd_tol * (1.0 + norm) {
            return Err(Error::WitnessRejected(format!(
                "lambda = {:.3e} is not a violation",
                self.lambda
            )));
        }
        let w = self.stacked();
        let residual = (&block * &w + w.scale(self.lambda)).norm();
        if residual > WITNESS_TOL * (1.0 + norm) {
            return Err(Error::WitnessRejected(format!(
                "eigen-residual {residual:.3e} too large"
            )));
        }
        Ok(())
    }

    pub fn stacked(&self) -> CVec {
        let m = self.u.len();
        CVec::from_fn(2 * m, |i, _| if i < m { self.u[i] } else { self.v[i - m] })
    }
}

struct BlockEval {
    block: CMat,
    eigenvalues: Vec<f64>,
    eigenvectors: CMat,
}

impl BlockEval {
    fn new(map: &MapRep, k: &CMat) -> Result<Self> {
        let block = schwarz_block(map, k)?;
        let eig = hermitian_eig(&block)?;
        Ok(Self {
            block,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    fn min(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Log-sum-exp soft minimum of the eigenvalues and its weights.
    fn soft_min(&self, beta: f64) -> (f64, Vec<f64>) {
        let lo = self.min();
        let raw: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|l| (-beta * (l - lo)).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        (lo - z.ln() / beta, raw.iter().map(|r| r / z).collect())
    }
}

/// Euclidean gradient (w.r.t. `Re⟨·,·⟩_HS`) of `Tr[W B(K)]` in `K`, where `W`
/// is a weighted sum of projections onto block eigenvectors.
fn block_gradient(map: &MapRep, k: &CMat, eval: &BlockEval, weights: &[f64]) -> Result<CMat> {
    let m = map.output_dim();
    let mut w12 = CMat::zeros(m, m);
    let mut w22 = CMat::zeros(m, m);
    for (idx, &wt) in weights.iter().enumerate() {
        if wt < 1e-300 {
            continue;
        }
        let v = eval.eigenvectors.column(idx);
        let p = v.rows(0, m);
        let q = v.rows(m, m);
        w12 += (p * q.adjoint()).scale(wt);
        w22 += (q * q.adjoint()).scale(wt);
    }
    let g12 = map.apply_adjoint(&w12)?;
    let g22 = map.apply_adjoint(&hermitian_part(&w22))?;
    Ok((g12 + k * g22).scale(2.0))
}

struct RestartResult {
    value: f64,
    k: CMat,
}

fn gschwarz_restart(map: &MapRep, seed: u64, restart: usize) -> Result<RestartResult> {
    let n = map.input_dim();
    let mut rng = rng_for(seed, &[GSCHWARZ_STREAM, restart as u64]);
    let g = ginibre(&mut rng, n, n);
    let mut k = g.unscale(g.norm());
    let mut eval = BlockEval::new(map, &k)?;
    let scale = 1.0 + op_norm(&eval.block);
    let mut best = RestartResult {
        value: eval.min(),
        k: k.clone(),
    };
    for stage in 0..5 {
        let beta = 10f64.powi(2 + stage) / scale;
        let mut theta: f64 = 0.2;
        for _ in 0..40 {
            let (val, weights) = eval.soft_min(beta);
            let grad = block_gradient(map, &k, &eval, &weights)?;
            let radial = k.dotc(&grad).re;
            let tangent = &grad - k.scale(radial);
            let gnorm = tangent.norm();
            if gnorm < 1e-14 * scale {
                break;
            }
            let dir = tangent.unscale(-gnorm);
            let mut accepted = None;
            for _ in 0..30 {
                let cand = k.scale(theta.cos()) + dir.scale(theta.sin());
                let cand = cand.unscale(cand.norm());
                let cand_eval = BlockEval::new(map, &cand)?;
                if cand_eval.soft_min(beta).0 < val - 1e-4 * theta * gnorm {
                    accepted = Some((cand, cand_eval));
                    break;
                }
                theta *= 0.5;
            }
            let Some((cand, cand_eval)) = accepted else {
                break;
            };
            k = cand;
            eval = cand_eval;
            theta = (theta * 1.5).min(0.5);
            if eval.min() < best.value {
                best = RestartResult {
                    value: eval.min(),
                    k: k.clone(),
                };
            }
        }
    }
    Ok(best)
}

/// Searches for `K` with a non-PSD Schwarz block by minimizing a smoothed
/// smallest eigenvalue over unit-Frobenius `K`. Restarts run in parallel; the
/// merge picks the smallest value, ties going to the lowest restart index.
pub fn check_generalized_schwarz(
    map: &MapRep,
    restarts: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    require_restarts(restarts)?;
    let results: Vec<RestartResult> = (0..restarts)
        .into_par_iter()
        .map(|r| gschwarz_restart(map, seed, r))
        .collect::<Result<_>>()?;
    let negative = results.iter().filter(|r| r.value < 0.0).count();
    let best = results
        .into_iter()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .unwrap();
    let eval = BlockEval::new(map, &best.k)?;
    let value = eval.min();
    let norm = op_norm(&eval.block);
    let scale = 1.0 + norm;
    let base = |status| {
        CheckVerdict::new("gschwarz", status, value, scale)
            .with_search(restarts, seed)
            .with_detail("negative_restarts", negative as f64)
    };
    if value < -tol.psd_threshold(norm).abs() {
        let m = map.output_dim();
        let w = eval.eigenvectors.column(eval.eigenvalues.len() - 1).into_owned();
        let witness = SchwarzWitness {
            a: best.k,
            u: w.rows(0, m).into_owned(),
            v: w.rows(m, m).into_owned(),
            lambda: -value,
        };
        witness.verify(map, tol)?;
        Ok(base(Status::ProvenViolation).with_certificate(Certificate::Schwarz(witness)))
    } else {
        Ok(base(Status::NoViolationFound))
    }
}

/// Samples random `K` and tests the Schwarz block at each.
pub fn sample_schwarz_block(
    map: &MapRep,
    samples: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    require_restarts(samples)?;
    let n = map.input_dim();
    let m = map.output_dim();
    let mut best: Option<(f64, f64, CMat, CVec)> = None;
    for s in 0..samples {
        let k = ginibre(&mut rng_for(seed, &[BLOCK_STREAM, s as u64]), n, n);
        let t = psd_test(&schwarz_block(map, &k)?, 0.0, tol)?;
        if best.as_ref().is_none_or(|b| t.min_eig < b.0) {
            best = Some((t.min_eig, t.norm, k, t.min_vector));
        }
    }
    let (value, norm, k, w) = best.unwrap();
    let violated = value < tol.psd_threshold(norm);
    let status = if violated {
        Status::ProvenViolation
    } else {
        Status::NoViolationFound
    };
    let mut out = CheckVerdict::new("schwarz_block", status, value, 1.0 + norm).with_search(samples, seed);
    if violated {
        let witness = SchwarzWitness {
            a: k,
            u: w.rows(0, m).into_owned(),
            v: w.rows(m, m).into_owned(),
            lambda: -value,
        };
        witness.verify(map, tol)?;
        out = out.with_certificate(Certificate::Schwarz(witness));
    }
    Ok(out)
}

/// `φ(K*X⁺K) ≥ φ(K)*φ(X)⁺φ(K)` for `X ≥ 0` and `ker X ⊆ ker K*`.
///
/// Failure of `ker φ(X) ⊆ ker φ(K)*` is reported as a violation as well: the
/// corresponding block `(id_2 ⊗ φ)` image is then not PSD.
pub fn check_operator_2pos(
    map: &MapRep,
    k: &CMat,
    x: &CMat,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    let n = map.input_dim();
    if k.shape() != (n, n) || x.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "operator 2-positivity needs K, X of size {n}x{n}"
        )));
    }
    let x = hermitian_part(x);
    if !kernel_included(&x, &k.adjoint(), tol)? {
        return Err(Error::KernelPrecondition("ker(X) ⊄ ker(K*)".into()));
    }
    let args = |vector: CVec| Certificate::OperatorArguments {
        k: k.clone(),
        x: x.clone(),
        vector,
    };
    let fx = hermitian_part(&map.apply(&x)?);
    let fx_test = psd_test(&fx, 0.0, tol)?;
    if !fx_test.psd {
        return Ok(CheckVerdict::new(
            "operator_2pos",
            Status::ProvenViolation,
            fx_test.min_eig,
            1.0 + fx_test.norm,
        )
        .with_certificate(args(fx_test.min_vector))
        .with_detail("image_not_psd", 1.0));
    }
    let fk = map.apply(k)?;
    let upper = hermitian_part(&map.apply(&(k.adjoint() * pinv_psd(&x, tol)? * k))?);
    if !kernel_included(&fx, &fk.adjoint(), tol)? {
        let block = hermitian_part(&block2(&fx, &fk, &fk.adjoint(), &upper));
        let t = psd_test(&block, 0.0, tol)?;
        return Ok(CheckVerdict::new(
            "operator_2pos",
            Status::ProvenViolation,
            t.min_eig,
            1.0 + t.norm,
        )
        .with_certificate(args(t.min_vector))
        .with_detail("kernel_failure", 1.0));
    }
    let lower = hermitian_part(&(fk.adjoint() * pinv_psd(&fx, tol)? * &fk));
    let scale = op_norm(&upper) + op_norm(&lower);
    let t = psd_test(&(upper - lower), scale, tol)?;
    Ok(exact_verdict(
        "operator_2pos",
        t.min_eig,
        1.0 + t.norm.max(scale),
        t.psd,
        args(t.min_vector),
    ))
}

/// Seesaw search for a non-positive image of `id_2 ⊗ φ` at a rank-one input
/// `zz*`, `z = (a; b)`, turned into the operator-inequality arguments
/// `X = aa*`, `K = ab*` (for which `K*X⁺K = bb*`).
pub fn search_operator_2pos(
    map: &MapRep,
    restarts: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    require_restarts(restarts)?;
    let n = map.input_dim();
    let psi = map.tensor_with_identity(2)?;
    let psi_adj = psi.adjoint();
    let runs: Vec<(f64, CVec)> = (0..restarts)
        .into_par_iter()
        .map(|r| -> Result<(f64, CVec)> {
            let mut rng = rng_for(seed, &[OP2POS_STREAM, r as u64]);
            let mut z = random_unit_vector(&mut rng, 2 * n);
            let mut value = f64::INFINITY;
            for _ in 0..200 {
                let img = hermitian_eig(&hermitian_part(&psi.apply(&(&z * z.adjoint()))?))?;
                let y = img.eigenvector(img.dim() - 1);
                let pulled = hermitian_eig(&hermitian_part(&psi_adj.apply(&(&y * y.adjoint()))?))?;
                z = pulled.eigenvector(pulled.dim() - 1);
                let next = pulled.min();
                let done = value - next < 1e-13;
                value = value.min(next);
                if done {
                    break;
                }
            }
            Ok((value, z))
        })
        .collect::<Result<_>>()?;
    let (best_idx, _) = runs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, r)| if r.0 < acc.1 { (i, r.0) } else { acc });
    let z = &runs[best_idx].1;
    let a = z.rows(0, n).into_owned();
    let b = z.rows(n, n).into_owned();
    let x = &a * a.adjoint();
    let k = &a * b.adjoint();
    let verdict = check_operator_2pos(map, &k, &x, tol)?;
    let seesaw = runs[best_idx].0;
    let mut out = if verdict.is_violation() {
        verdict
    } else {
        CheckVerdict::new("operator_2pos", Status::NoViolationFound, verdict.value, verdict.scale)
    };
    out.restarts = restarts;
    out.seed = Some(seed);
    Ok(out.with_detail("seesaw_value", seesaw))
}

/// Isometry whose columns are `e_i ⊗ b_l` (`fix_right`) or `a_l ⊗ e_j`.
fn product_isometry(vecs: &CMat, n: usize, m: usize, fix_right: bool) -> CMat {
    let k = vecs.ncols();
    if fix_right {
        CMat::from_fn(n * m, k * n, |row, col| {
            let (l, i) = (col / n, col % n);
            if row / m == i {
                vecs[(row % m, l)]
            } else {
                crate::numerics::c64(0.0, 0.0)
            }
        })
    } else {
        CMat::from_fn(n * m, k * m, |row, col| {
            let (l, a) = (col / m, col % m);
            if row % m == a {
                vecs[(row / m, l)]
            } else {
                crate::numerics::c64(0.0, 0.0)
            }
        })
    }
}

/// Leading `k` Schmidt terms of `w ∈ C^n ⊗ C^m`: returns `(U, s, B)` with
/// `w ≈ Σ s_l U_l ⊗ B_l` and orthonormal columns in `U` and `B`.
fn schmidt(w: &CVec, n: usize, m: usize, k: usize) -> (CMat, Vec<f64>, CMat) {
    let wm = CMat::from_fn(n, m, |i, a| w[i * m + a]);
    let svd = wm.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&p, &q| svd.singular_values[q].total_cmp(&svd.singular_values[p]));
    order.truncate(k);
    let left = CMat::from_fn(n, order.len(), |i, l| u[(i, order[l])]);
    // W = Σ s u v*, so the right factor of the tensor is conj(v) = row of v_t
    let right = CMat::from_fn(m, order.len(), |a, l| v_t[(order[l], a)]);
    let s = order.iter().map(|&l| svd.singular_values[l]).collect();
    (left, s, right)
}

fn orthonormalize(m: &CMat) -> CMat {
    let (q, _) = m.clone().qr().unpack();
    q
}

fn min_eig_step(c: &CMat, t: &CMat) -> Result<(f64, CVec)> {
    let h = hermitian_part(&(t.adjoint() * c * t));
    let eig = hermitian_eig(&h)?;
    let alpha = eig.eigenvector(eig.dim() - 1);
    let w = t * alpha;
    let w = w.unscale(w.norm());
    Ok((eig.min(), w))
}

/// Seesaw minimization of `⟨w|C_φ|w⟩` over unit `w` of Schmidt rank at most `k`.
pub fn check_kpositive_seesaw(
    map: &MapRep,
    k: usize,
    restarts: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    let (n, m) = (map.input_dim(), map.output_dim());
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k must lie in 1..={n}, got {k}")));
    }
    require_restarts(restarts)?;
    let keff = k.min(m);
    let c = hermitian_part(map.choi());
    let norm = op_norm(&c);
    let runs: Vec<(f64, CVec)> = (0..restarts)
        .into_par_iter()
        .map(|r| -> Result<(f64, CVec)> {
            let mut rng = rng_for(seed, &[KPOS_STREAM, k as u64, r as u64]);
            let init = CMat::from_columns(
                &(0..keff)
                    .map(|_| random_unit_vector(&mut rng, m))
                    .collect::<Vec<_>>(),
            );
            let mut right = orthonormalize(&init);
            let mut value = f64::INFINITY;
            let mut w = CVec::zeros(n * m);
            for _ in 0..500 {
                let (_, wa) = min_eig_step(&c, &product_isometry(&right, n, m, true))?;
                let (left, _, _) = schmidt(&wa, n, m, keff);
                let (next, wb) = min_eig_step(&c, &product_isometry(&left, n, m, false))?;
                let (_, _, r2) = schmidt(&wb, n, m, keff);
                right = r2;
                w = wb;
                let done = value - next < 1e-12;
                value = value.min(next);
                if done {
                    break;
                }
            }
            let value = (w.adjoint() * &c * &w)[(0, 0)].re;
            Ok((value, w))
        })
        .collect::<Result<_>>()?;
    let (best_idx, value) = runs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, r)| if r.0 < acc.1 { (i, r.0) } else { acc });
    let check = format!("kpos_{k}");
    let mut out = CheckVerdict::new(&check, Status::NoViolationFound, value, 1.0 + norm)
        .with_search(restarts, seed)
        .with_detail("k", k as f64);
    if value < tol.psd_threshold(norm) {
        let w = runs[best_idx].1.clone();
        let (left, s, right) = schmidt(&w, n, m, keff);
        let a = (0..s.len()).map(|l| left.column(l).scale(s[l])).collect();
        let b = (0..s.len()).map(|l| right.column(l).into_owned()).collect();
        out.status = Status::ProvenViolation;
        out = out.with_certificate(Certificate::SchmidtVector { a, b, vector: w });
    }
    Ok(out)
}

/// The block `(R_{φ*(X)} Φ*; Φ R_X⁻¹)` on `H_n ⊕ H_m` for positive definite `X`.
pub fn identity_mon_block(map: &MapRep, x: &CMat, tol: &ToleranceConfig) -> Result<CheckVerdict> {
    let m = map.output_dim();
    if x.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!("X must be {m}x{m}")));
    }
    let x = hermitian_part(x);
    let eig = hermitian_eig(&x)?;
    if eig.min() <= tol.kernel_threshold(eig.norm()) {
        return Err(Error::NotPositiveDefinite(eig.min()));
    }
    let px = hermitian_part(&map.apply_adjoint(&x)?);
    let phi = superop_of_map(map).matrix;
    let r_inv = right_mult_superop(&pinv_psd(&x, tol)?)?.matrix;
    let block = hermitian_part(&block2(
        &right_mult_superop(&px)?.matrix,
        &phi.adjoint(),
        &phi,
        &r_inv,
    ));
    let t = psd_test(&block, 0.0, tol)?;
    Ok(exact_verdict(
        "idmon",
        t.min_eig,
        1.0 + t.norm,
        t.psd,
        Certificate::Argument {
            x,
            vector: t.min_vector,
        },
    ))
}

/// Runs [`identity_mon_block`] on seeded positive definite `X`.
pub fn search_identity_mon(
    map: &MapRep,
    samples: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<CheckVerdict> {
    require_restarts(samples)?;
    let m = map.output_dim();
    let mut best: Option<CheckVerdict> = None;
    for s in 0..samples {
        let x = random_pd(&mut rng_for(seed, &[IDMON_STREAM, s as u64]), m);
        let v = identity_mon_block(map, &x, tol)?;
        if best.as_ref().is_none_or(|b| v.value < b.value) {
            best = Some(v);
        }
    }
    let mut out = best.unwrap();
    if !out.is_violation() {
        out.status = Status::NoViolationFound;
    }
    Ok(out.with_search(samples, seed))
}

/// Kernel containments relating `R_X`, `L_X` and `φ(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelFacts {
    /// `ker(X) ⊆ ker(φ(1))`.
    pub unit_condition: bool,
    /// `ker(R_X) ⊆ ker(Φ*)`.
    pub right: bool,
    /// `ker(L_X) ⊆ ker(Φ*)`.
    pub left: bool,
    /// `ker(R_{φ*(X)}) ⊆ ker(Φ)`, evaluated when `right` holds.
    pub right_transport: Option<bool>,
    /// `ker(L_{φ*(X)}) ⊆ ker(Φ)`, evaluated when `left` holds.
    pub left_transport: Option<bool>,
}

impl KernelFacts {
    /// The equivalences and implications expected for positive maps.
    pub fn consistent(&self) -> bool {
        self.right == self.unit_condition
            && self.left == self.unit_condition
            && self.right_transport != Some(false)
            && self.left_transport != Some(false)
    }
}

pub fn kernel_inclusion_facts(map: &MapRep, x: &CMat, tol: &ToleranceConfig) -> Result<KernelFacts> {
    let x = hermitian_part(x);
    let phi = superop_of_map(map).matrix;
    let phi_adj = phi.adjoint();
    let px = hermitian_part(&map.apply_adjoint(&x)?);
    let unit_condition = kernel_included(&x, &map.apply_identity(), tol)?;
    let r = crate::monotone::right_mult_superop(&x)?.matrix;
    let l = crate::monotone::left_mult_superop(&x)?.matrix;
    let right = kernel_included(&r, &phi_adj, tol)?;
    let left = kernel_included(&l, &phi_adj, tol)?;
    let right_transport = if right {
        Some(kernel_included(&right_mult_superop(&px)?.matrix, &phi, tol)?)
    } else {
        None
    };
    let left_transport = if left {
        Some(kernel_included(
            &crate::monotone::left_mult_superop(&px)?.matrix,
            &phi,
            tol,
        )?)
    } else {
        None
    };
    Ok(KernelFacts {
        unit_condition,
        right,
        left,
        right_transport,
        left_transport,
    })
}

/// `(φ(1)⁺)^{1/2} φ(K*K) (φ(1)⁺)^{1/2} − (φ(1)⁺)^{1/2} φ(K)* φ(1)⁺ φ(K) (φ(1)⁺)^{1/2}`.
pub fn normalized_schwarz_difference(map: &MapRep, k: &CMat, tol: &ToleranceConfig) -> Result<CMat> {
    let one = hermitian_part(&map.apply_identity());
    let s = crate::numerics::psd_power(&one, -0.5, tol)?;
    let fk = map.apply(k)?;
    let fkk = map.apply(&(k.adjoint() * k))?;
    let d = fkk - fk.adjoint() * pinv_psd(&one, tol)? * &fk;
    Ok(hermitian_part(&(&s * d * &s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{
        choi_reduction_map, depolarizing_map, identity_map, random_cp_map, tensored_choi_map,
        transpose_map,
    };
    use crate::numerics::{from_real_diagonal, identity, matrix_unit};
    use crate::random::random_gram;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn cp_examples() {
        let t = tol();
        let v = check_cp(&depolarizing_map(3, 3).unwrap(), &t).unwrap();
        assert!(v.passed());
        assert!((v.value - 1.0 / 3.0).abs() < 1e-12);

        let v = check_cp(&choi_reduction_map(3.0, 4).unwrap(), &t).unwrap();
        assert!(v.is_violation());
        assert!((v.value + 1.0).abs() < 1e-9);
        let Some(Certificate::Eigenvector { vector }) = &v.certificate else {
            panic!("missing certificate");
        };
        let choi = choi_reduction_map(3.0, 4).unwrap().choi().clone();
        let q = (vector.adjoint() * choi * vector)[(0, 0)].re;
        assert!((q - v.value).abs() < 1e-8);

        let v = check_cp(&transpose_map(2).unwrap(), &t).unwrap();
        assert!(v.is_violation() && (v.value + 1.0).abs() < 1e-12);

        for seed in 0..10 {
            assert!(check_cp(&random_cp_map(3, 2, 2, seed).unwrap(), &t).unwrap().passed());
        }
    }

    #[test]
    fn schwarz_block_examples() {
        let t = tol();
        let phi = random_cp_map(2, 3, 2, 1).unwrap();
        let b = schwarz_block(&phi, &CMat::zeros(2, 2)).unwrap();
        assert!((b.view((0, 0), (3, 3)) - phi.apply_identity()).norm() < 1e-14);
        assert!(b.view((3, 3), (3, 3)).norm() < 1e-14);

        let dep = depolarizing_map(3, 3).unwrap();
        let b = schwarz_block(&dep, &identity(3)).unwrap();
        let one = dep.apply_identity();
        for (r, c) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert!((b.view((r, c), (3, 3)) - &one).norm() < 1e-12);
        }
        assert!(crate::numerics::is_psd(&b, &t).unwrap());

        let b = schwarz_block(&transpose_map(2).unwrap(), &matrix_unit(2, 0, 1)).unwrap();
        let expect = block2(&identity(2), &matrix_unit(2, 1, 0), &matrix_unit(2, 0, 1), &matrix_unit(2, 1, 1));
        assert_eq!(b, expect);
        assert!(crate::numerics::min_eigenvalue(&b).unwrap() < -0.1);

        assert!(schwarz_block(&phi, &identity(3)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let map = random_cp_map(2, 3, 2, 7).unwrap().plus(&transpose_map(2).unwrap().then(&random_cp_map(2, 3, 1, 8).unwrap()).unwrap()).unwrap();
        let mut rng = rng_for(3, &[]);
        let k = ginibre(&mut rng, 2, 2);
        let dir = ginibre(&mut rng, 2, 2);
        let beta = 5.0;
        let eval = BlockEval::new(&map, &k).unwrap();
        let (_, w) = eval.soft_min(beta);
        let grad = block_gradient(&map, &k, &eval, &w).unwrap();
        let h = 1e-6;
        let f = |kk: &CMat| BlockEval::new(&map, kk).unwrap().soft_min(beta).0;
        let fd = (f(&(&k + dir.scale(h))) - f(&(&k - dir.scale(h)))) / (2.0 * h);
        let analytic = grad.dotc(&dir).re;
        assert!((fd - analytic).abs() < 1e-5 * (1.0 + analytic.abs()), "{fd} vs {analytic}");
    }

    #[test]
    fn gschwarz_examples() {
        let t = tol();
        let v = check_generalized_schwarz(&identity_map(3).unwrap(), 8, 1, &t).unwrap();
        assert_eq!(v.status, Status::NoViolationFound);
        assert!(v.value >= -1e-10);

        let tr = transpose_map(2).unwrap();
        let v = check_generalized_schwarz(&tr, 8, 1, &t).unwrap();
        assert!(v.is_violation());
        let Some(Certificate::Schwarz(w)) = &v.certificate else {
            panic!("missing witness");
        };
        w.verify(&tr, &t).unwrap();
        assert!((w.lambda + crate::numerics::min_eigenvalue(&schwarz_block(&tr, &w.a).unwrap()).unwrap()).abs() < 1e-8);

        // the Schwarz difference at E_12 for the transpose is E_22 − E_11
        let e12 = matrix_unit(2, 0, 1);
        let d = normalized_schwarz_difference(&tr, &e12, &t).unwrap();
        assert!((d - from_real_diagonal(&[-1.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn gschwarz_is_deterministic() {
        let t = tol();
        let tr = transpose_map(2).unwrap();
        let a = check_generalized_schwarz(&tr, 6, 42, &t).unwrap();
        let b = check_generalized_schwarz(&tr, 6, 42, &t).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn cp_maps_have_no_schwarz_violation() {
        let t = tol();
        for seed in 0..5 {
            let phi = random_cp_map(2, 3, 2, seed).unwrap();
            let v = check_generalized_schwarz(&phi, 3, seed, &t).unwrap();
            assert_eq!(v.status, Status::NoViolationFound);
        }
    }

    #[test]
    fn synthetic_witnesses_are_rejected() {
        let t = tol();
        let tr = transpose_map(2).unwrap();
        // K = 0: the block diag(1, 0) has eigenvalue 0 on (0, e1)
        let zero = SchwarzWitness {
            a: CMat::zeros(2, 2),
            u: CVec::zeros(2),
            v: crate::numerics::basis_vector(2, 0),
            lambda: 0.0,
        };
        assert!(matches!(zero.verify(&tr, &t), Err(Error::WitnessRejected(_))));
        let mut wrong = zero.clone();
        wrong.lambda = 0.5;
        assert!(wrong.verify(&tr, &t).is_err());
    }

    #[test]
    fn operator_2pos_examples() {
        let t = tol();
        let id = identity_map(3).unwrap();
        let mut rng = rng_for(4, &[]);
        let k = ginibre(&mut rng, 3, 3);
        let x = random_pd(&mut rng, 3);
        let v = check_operator_2pos(&id, &k, &x, &t).unwrap();
        assert!(v.passed() && v.value.abs() < 1e-9);

        for i in 0..100 {
            let phi = random_cp_map(3, 2, 2, i).unwrap();
            let k = ginibre(&mut rng, 3, 3);
            let x = random_pd(&mut rng, 3);
            assert!(check_operator_2pos(&phi, &k, &x, &t).unwrap().passed());
        }

        let sing = from_real_diagonal(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            check_operator_2pos(&id, &identity(3), &sing, &t),
            Err(Error::KernelPrecondition(_))
        ));
        // rank-one X with compatible K
        let v = check_operator_2pos(&id, &matrix_unit(3, 0, 1), &sing, &t).unwrap();
        assert!(v.passed());
    }

    #[test]
    fn tensored_choi_map_is_not_2_positive() {
        let t = tol();
        let phi = tensored_choi_map().unwrap();
        let v = search_operator_2pos(&phi, 4, 5, &t).unwrap();
        assert!(v.is_violation(), "{v:?}");
        assert!(v.value < -1e-7 * v.scale);
        let Some(Certificate::OperatorArguments { k, x, .. }) = &v.certificate else {
            panic!("missing arguments");
        };
        let again = check_operator_2pos(&phi, k, x, &t).unwrap();
        assert!((again.value - v.value).abs() < 1e-8);
    }

    #[test]
    fn kpos_examples() {
        let t = tol();
        let choi = choi_reduction_map(3.0, 4).unwrap();
        let v = check_kpositive_seesaw(&choi, 4, 3, 1, &t).unwrap();
        assert!(v.is_violation());
        assert!(v.value <= -1.0 + 1e-9);
        let Some(Certificate::SchmidtVector { a, b, vector }) = &v.certificate else {
            panic!("missing certificate");
        };
        let rebuilt = a
            .iter()
            .zip(b)
            .fold(CVec::zeros(16), |acc, (x, y)| acc + x.kronecker(y));
        assert!((rebuilt - vector).norm() < 1e-9);

        let v = check_kpositive_seesaw(&choi, 3, 20, 1, &t).unwrap();
        assert_eq!(v.status, Status::NoViolationFound);

        let v = check_kpositive_seesaw(&transpose_map(2).unwrap(), 1, 20, 1, &t).unwrap();
        assert_eq!(v.status, Status::NoViolationFound);
        let v = check_kpositive_seesaw(&transpose_map(2).unwrap(), 2, 2, 1, &t).unwrap();
        assert!(v.is_violation() && (v.value + 1.0).abs() < 1e-9);

        assert!(check_kpositive_seesaw(&choi, 0, 1, 1, &t).is_err());
        assert!(check_kpositive_seesaw(&choi, 5, 1, 1, &t).is_err());
    }

    #[test]
    fn idmon_examples() {
        let t = tol();
        let mut rng = rng_for(6, &[]);
        let id = identity_map(3).unwrap();
        assert!(identity_mon_block(&id, &random_pd(&mut rng, 3), &t).unwrap().passed());

        let dep = depolarizing_map(3, 3).unwrap();
        for _ in 0..50 {
            assert!(identity_mon_block(&dep, &random_pd(&mut rng, 3), &t).unwrap().passed());
        }
        let v = search_identity_mon(&transpose_map(2).unwrap(), 50, 1, &t).unwrap();
        assert!(v.is_violation());

        let sing = from_real_diagonal(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            identity_mon_block(&id, &sing, &t),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn kernel_facts_examples() {
        let t = tol();
        let phi = random_cp_map(3, 3, 2, 3).unwrap();
        let f = kernel_inclusion_facts(&phi, &from_real_diagonal(&[1.0, 0.0, 0.0]), &t).unwrap();
        assert!(!f.unit_condition && !f.right && !f.left && f.consistent());

        let mut rng = rng_for(7, &[]);
        let f = kernel_inclusion_facts(&phi, &random_pd(&mut rng, 3), &t).unwrap();
        assert!(f.unit_condition && f.right && f.left);
        assert_eq!(f.right_transport, Some(true));
        assert!(f.consistent());

        // compress the outputs so that φ(1) has a kernel
        let p = from_real_diagonal(&[1.0, 1.0, 0.0]);
        let compressed = phi.conjugate_output(&p).unwrap();
        let mut seen = [false, false];
        for i in 0..40 {
            let x = if i % 2 == 0 {
                // kernel of X inside ker φ(1) = span(e3)
                let g = ginibre(&mut rng, 2, 2);
                let mut x = CMat::zeros(3, 3);
                x.view_mut((0, 0), (2, 2)).copy_from(&(&g * g.adjoint()));
                x
            } else {
                random_gram(&mut rng, 3, 2)
            };
            let f = kernel_inclusion_facts(&compressed, &x, &t).unwrap();
            assert!(f.consistent(), "{f:?}");
            seen[f.unit_condition as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn block_psd_matches_normalized_schwarz() {
        let t = tol();
        let mut rng = rng_for(8, &[]);
        let maps = [
            random_cp_map(2, 2, 2, 1).unwrap(),
            transpose_map(2).unwrap(),
            depolarizing_map(2, 2).unwrap(),
        ];
        for phi in &maps {
            for _ in 0..30 {
                let k = ginibre(&mut rng, 2, 2);
                let block = crate::numerics::is_psd(&schwarz_block(phi, &k).unwrap(), &t).unwrap();
                let d = normalized_schwarz_difference(phi, &k, &t).unwrap();
                let unital = phi.normalize_to_unital(&t).unwrap();
                let du = normalized_schwarz_difference(&unital, &k, &t).unwrap();
                assert!((&d - &du).norm() < 1e-10 * (1.0 + d.norm()));
                assert_eq!(block, crate::numerics::is_psd(&d, &t).unwrap());
            }
        }
    }

    #[test]
    fn sampled_block_search() {
        let t = tol();
        let v = sample_schwarz_block(&transpose_map(2).unwrap(), 30, 3, &t).unwrap();
        assert!(v.is_violation());
        let v = sample_schwarz_block(&depolarizing_map(2, 2).unwrap(), 30, 3, &t).unwrap();
        assert_eq!(v.status, Status::NoViolationFound);
    }
}
