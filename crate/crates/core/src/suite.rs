//! Acceptance suite: each criterion is a deterministic function of the root
//! seed and returns a pass/fail line with its key measurements.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::maps::{
    choi_reduction_map, identity_map, random_cp_map, tensored_choi_map, transpose_map, MapRep,
};
use crate::monotone::{check_equivalence_ab, check_hp_a, check_l1, check_l2, MonotoneFunction};
use crate::numerics::{schur_block_psd, ToleranceConfig};
use crate::positivity::{
    check_cp, check_generalized_schwarz, check_kpositive_seesaw, identity_mon_block,
    search_operator_2pos,
};
use crate::random::{child_seed, ginibre, random_pd, rng_for};
use crate::tracial::{
    check_tracial_schwarz, dual_optimizer, ensemble_pair, eval_f, pairing,
    random_omega_point, run_batch, violation_from_witness, TracialMode, TracialPair, WitnessClass,
};
use crate::verdict::{Certificate, Status};

const ENSEMBLE_STREAM: u64 = 0x454e_534d;
const SUITE_STREAM: u64 = 0x5355_4954;

/// Number of random CP maps in the map ensembles.
pub const ENSEMBLE_MAPS: usize = 20;

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Caps every sample and restart count (quick mode).
    pub samples: Option<usize>,
    pub tol: ToleranceConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            samples: None,
            tol: ToleranceConfig::default(),
        }
    }
}

impl SuiteConfig {
    fn count(&self, n: usize) -> usize {
        self.samples.map_or(n, |cap| n.min(cap.max(1)))
    }

    fn stream(&self, criterion: u64, sub: u64) -> u64 {
        child_seed(self.seed, &[SUITE_STREAM, criterion, sub])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
}

impl CriterionResult {
    fn new(id: u32, name: &str) -> Self {
        Self {
            id,
            name: name.into(),
            passed: true,
            summary: String::new(),
            metrics: BTreeMap::new(),
        }
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.into(), v);
    }

    fn require(&mut self, ok: bool, what: &str) {
        if !ok {
            self.passed = false;
            if !self.summary.is_empty() {
                self.summary.push_str("; ");
            }
            self.summary.push_str(what);
        }
    }

    fn finish(mut self) -> Self {
        if self.passed && self.summary.is_empty() {
            self.summary = "ok".into();
        }
        self
    }

    /// One-line report, e.g. `[PASS] 1 choi map classification: ok`.
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let metrics: Vec<String> = self
            .metrics
            .iter()
            .map(|(k, v)| format!("{k}={v:.3e}"))
            .collect();
        format!(
            "[{tag}] {} {}: {} ({})",
            self.id,
            self.name,
            self.summary,
            metrics.join(", ")
        )
    }
}

/// Random CP maps followed by the unital-normalized tensored Choi map. With
/// `normalize`, the CP maps are normalized to be unital as well.
pub fn map_ensemble(seed: u64, normalize: bool, tol: &ToleranceConfig) -> Result<Vec<MapRep>> {
    let mut maps = Vec::with_capacity(ENSEMBLE_MAPS + 1);
    for i in 0..ENSEMBLE_MAPS {
        let n = 2 + i % 2;
        let m = 2 + (i / 2) % 2;
        let kraus = 2 + (i / 4) % 2;
        let phi = random_cp_map(n, m, kraus, child_seed(seed, &[ENSEMBLE_STREAM, i as u64]))?;
        maps.push(if normalize {
            phi.normalize_to_unital(tol)?
        } else {
            phi
        });
    }
    maps.push(tensored_choi_map()?.normalize_to_unital(tol)?);
    Ok(maps)
}

fn min_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Criterion 1: classification of `X ↦ 3Tr[X]1₄ − X`.
pub fn choi_map_classification(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(1, "choi map classification");
    let tol = &cfg.tol;
    let phi = choi_reduction_map(3.0, 4)?;
    let cp = check_cp(&phi, tol)?;
    r.metric("cp_min_eig", cp.value);
    r.require(cp.is_violation() && (cp.value + 1.0).abs() <= 1e-9, "cp check");
    let k4 = check_kpositive_seesaw(&phi, 4, cfg.count(10), cfg.stream(1, 4), tol)?;
    r.metric("k4_value", k4.value);
    r.require(k4.is_violation() && k4.value <= -1.0 + 1e-6, "4-positivity violation");
    let k3 = check_kpositive_seesaw(&phi, 3, cfg.count(200), cfg.stream(1, 3), tol)?;
    r.metric("k3_value", k3.value);
    r.require(k3.status == Status::NoViolationFound, "3-positivity");
    Ok(r.finish())
}

/// Criterion 2: the tensored Choi map is generalized Schwarz but not 2-positive.
pub fn tensored_choi_construction(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(2, "tensored choi construction");
    let tol = &cfg.tol;
    let phi = tensored_choi_map()?;
    let gs = check_generalized_schwarz(&phi, cfg.count(200), cfg.stream(2, 0), tol)?;
    r.metric("gschwarz_best", gs.value);
    r.require(gs.status == Status::NoViolationFound, "generalized Schwarz search found a violation");
    let op = search_operator_2pos(&phi, cfg.count(20), cfg.stream(2, 1), tol)?;
    r.metric("op2pos_value", op.value);
    r.metric("op2pos_scale", op.scale);
    r.require(
        op.is_violation() && op.value < -1e-7 * op.scale,
        "no 2-positivity violation found",
    );
    Ok(r.finish())
}

fn tracial_ensemble_check(
    cfg: &SuiteConfig,
    mode: TracialMode,
    id: u32,
    maps: &[MapRep],
    pairs: usize,
) -> Result<(f64, usize)> {
    let mut worst = f64::INFINITY;
    let mut transport = 0;
    for (i, phi) in maps.iter().enumerate() {
        let b = run_batch(phi, mode, pairs, cfg.stream(id as u64, i as u64), &cfg.tol)?;
        worst = worst.min(b.min_scaled_gap);
        transport += b.transport_failures;
    }
    Ok((worst, transport))
}

/// Criterion 3: the generalized Schwarz tracial inequality on known
/// generalized Schwarz maps.
pub fn tracial_gs_positive(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(3, "tracial inequality for generalized Schwarz maps");
    let maps = map_ensemble(cfg.stream(3, 999), false, &cfg.tol)?;
    let (worst, transport) =
        tracial_ensemble_check(cfg, TracialMode::Gs, 3, &maps, cfg.count(1000))?;
    r.metric("min_scaled_gap", worst);
    r.metric("transport_failures", transport as f64);
    r.require(worst >= -1e-9, "negative gap");
    r.require(transport == 0, "transport failure");
    Ok(r.finish())
}

/// Criterion 4: a Schwarz-block witness for the transpose becomes a tracial
/// counterexample.
pub fn tracial_gs_constructive(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(4, "witness to tracial counterexample");
    let tol = &cfg.tol;
    let phi = transpose_map(2)?;
    let v = check_generalized_schwarz(&phi, cfg.count(20), cfg.stream(4, 0), tol)?;
    let Some(Certificate::Schwarz(w)) = &v.certificate else {
        r.require(false, "no Schwarz witness for the transpose");
        return Ok(r.finish());
    };
    let wp = violation_from_witness(&phi, w, tol)?;
    r.metric("lambda", wp.lambda);
    r.metric("gap", wp.report.gap);
    let ok = match wp.class {
        WitnessClass::GapViolation => wp.report.gap <= -wp.lambda + 1e-8,
        WitnessClass::TransportViolation => !wp.report.transport_ok,
    };
    r.metric("transport_ok", wp.report.transport_ok as u8 as f64);
    r.require(ok, "pipeline did not certify a violation");
    Ok(r.finish())
}

/// Criterion 5: the Schwarz tracial inequality.
pub fn tracial_schwarz(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(5, "tracial Schwarz inequality");
    let tol = &cfg.tol;
    let maps = map_ensemble(cfg.stream(5, 999), true, tol)?;
    let (worst, transport) =
        tracial_ensemble_check(cfg, TracialMode::Schwarz, 5, &maps, cfg.count(1000))?;
    r.metric("min_scaled_gap", worst);
    r.metric("transport_failures", transport as f64);
    r.require(worst >= -1e-9 && transport == 0, "Schwarz ensemble violates");

    let tr = transpose_map(2)?;
    let seed = cfg.stream(5, 1000);
    let batch = run_batch(&tr, TracialMode::Schwarz, cfg.count(1000), seed, tol)?;
    let found = batch
        .gaps
        .iter()
        .zip(&batch.transport)
        .position(|(g, t)| !t || *g < 0.0);
    let reverified = match found {
        Some(i) => {
            let p = ensemble_pair(seed, 2, i, tol)?;
            let again = check_tracial_schwarz(&tr, &p, tol)?;
            r.metric("transpose_gap", again.gap);
            again.is_violation() && (again.gap - batch.gaps[i]).abs() <= 1e-12 * again.scale
        }
        None => false,
    };
    r.require(reverified, "no re-verified transpose counterexample");
    Ok(r.finish())
}

/// Criterion 6: Legendre duality for `F`.
pub fn duality(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(6, "duality and joint convexity");
    let tol = &cfg.tol;
    let seed = cfg.stream(6, 0);
    let pairs = cfg.count(500);
    let omega = cfg.count(100);
    let rows: Vec<(f64, f64)> = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let p = ensemble_pair(seed, 3, i, tol)?;
            let f = eval_f(&p, tol)?.finite().unwrap_or(f64::INFINITY);
            let q = dual_optimizer(&p, tol)?;
            let attain = (pairing(&p, &q)? - f).abs();
            let mut rng = rng_for(seed, &[1, i as u64]);
            let mut excess = f64::NEG_INFINITY;
            for _ in 0..omega {
                let slack = rng.random_range(0.0..1.0);
                let q = random_omega_point(&mut rng, 3, slack)?;
                excess = excess.max(pairing(&p, &q)? - f);
            }
            Ok((attain, excess))
        })
        .collect::<Result<_>>()?;
    let attain = max_of(rows.iter().map(|x| x.0));
    let excess = max_of(rows.iter().map(|x| x.1));
    r.metric("max_attainment_gap", attain);
    r.metric("max_weak_duality_excess", excess);
    r.require(attain <= 1e-8, "dual optimizer does not attain F");
    r.require(excess <= 1e-8, "weak duality violated");

    let combos = cfg.count(200);
    let conv: Vec<f64> = (0..combos)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let p1 = ensemble_pair(seed, 3, 10_000 + 2 * i, tol)?;
            let p2 = ensemble_pair(seed, 3, 10_001 + 2 * i, tol)?;
            let lam: f64 = rng_for(seed, &[2, i as u64]).random_range(0.01..0.99);
            let mix = TracialPair::new(
                p1.k.scale(lam) + p2.k.scale(1.0 - lam),
                p1.x.scale(lam) + p2.x.scale(1.0 - lam),
                tol,
            )?;
            let fm = eval_f(&mix, tol)?.finite().unwrap_or(f64::INFINITY);
            let f1 = eval_f(&p1, tol)?.finite().unwrap_or(f64::INFINITY);
            let f2 = eval_f(&p2, tol)?.finite().unwrap_or(f64::INFINITY);
            Ok(fm - lam * f1 - (1.0 - lam) * f2)
        })
        .collect::<Result<_>>()?;
    let worst = max_of(conv);
    r.metric("max_convexity_excess", worst);
    r.require(worst <= 1e-8, "joint convexity violated");
    Ok(r.finish())
}

/// Criterion 7: monotonicity of `J_f` for Schwarz maps.
pub fn jf_monotonicity(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(7, "monotonicity of J_f under Schwarz maps");
    let tol = &cfg.tol;
    let maps = map_ensemble(cfg.stream(7, 999), true, tol)?;
    let fs = [
        MonotoneFunction::power(0.25)?,
        MonotoneFunction::power(0.5)?,
        MonotoneFunction::power(0.75)?,
        MonotoneFunction::loewner_atom(1.0, 1.0, 1.0)?,
        MonotoneFunction::loewner_atom(0.0, 0.0, 2.0)?,
    ];
    let per = cfg.count(100);
    let mut jobs = Vec::new();
    for (fi, _) in fs.iter().enumerate() {
        for (mi, _) in maps.iter().enumerate() {
            for s in 0..per {
                jobs.push((fi, mi, s));
            }
        }
    }
    let rows: Vec<(f64, bool, bool)> = jobs
        .par_iter()
        .map(|&(fi, mi, s)| -> Result<(f64, bool, bool)> {
            let phi = &maps[mi];
            let m = phi.output_dim();
            let mut rng = rng_for(cfg.stream(7, fi as u64), &[mi as u64, s as u64]);
            let x = random_pd(&mut rng, m);
            let y = random_pd(&mut rng, m);
            let e = check_equivalence_ab(phi, &fs[fi], &x, &y, tol)?;
            let worst = (e.a.value / e.a.scale).min(e.b.value / e.b.scale);
            let pass = e.a.value >= -1e-8 * e.a.scale && e.b.value >= -1e-8 * e.b.scale;
            Ok((worst, pass, e.agree))
        })
        .collect::<Result<_>>()?;
    r.metric("instances", rows.len() as f64);
    r.metric("min_scaled_eig", min_of(rows.iter().map(|x| x.0)));
    let fails = rows.iter().filter(|x| !x.1).count();
    let disagree = rows.iter().filter(|x| !x.2).count();
    r.metric("failures", fails as f64);
    r.metric("disagreements", disagree as f64);
    r.require(fails == 0, "inequality violated");
    r.require(disagree == 0, "forms (a) and (b) disagree");
    Ok(r.finish())
}

/// Criterion 8: the identity-function block test agrees with form (a).
pub fn identity_block_consistency(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(8, "identity block versus form (a)");
    let tol = &cfg.tol;
    let mut maps = map_ensemble(cfg.stream(8, 999), true, tol)?;
    maps.push(transpose_map(2)?);
    let transpose_idx = maps.len() - 1;
    let per = cfg.count(50);
    let jobs: Vec<(usize, usize)> = (0..maps.len())
        .flat_map(|mi| (0..per).map(move |s| (mi, s)))
        .collect();
    let f = MonotoneFunction::Identity {};
    let rows: Vec<(usize, bool, bool)> = jobs
        .par_iter()
        .map(|&(mi, s)| -> Result<(usize, bool, bool)> {
            let phi = &maps[mi];
            let mut rng = rng_for(cfg.stream(8, mi as u64), &[s as u64]);
            let x = random_pd(&mut rng, phi.output_dim());
            let block = identity_mon_block(phi, &x, tol)?;
            let a = check_hp_a(phi, &f, &x, &x, tol)?;
            Ok((mi, block.passed() == a.passed(), block.is_violation()))
        })
        .collect::<Result<_>>()?;
    let disagree = rows.iter().filter(|x| !x.1).count();
    let transpose_violations = rows
        .iter()
        .filter(|x| x.0 == transpose_idx && x.2)
        .count();
    let schwarz_violations = rows
        .iter()
        .filter(|x| x.0 != transpose_idx && x.2)
        .count();
    r.metric("disagreements", disagree as f64);
    r.metric("transpose_violations", transpose_violations as f64);
    r.metric("schwarz_violations", schwarz_violations as f64);
    r.require(disagree == 0, "block and form (a) disagree");
    r.require(schwarz_violations == 0, "Schwarz map failed the block test");
    Ok(r.finish())
}

/// Criterion 9: the trace inequalities obtained from power functions.
pub fn power_trace_inequalities(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(9, "power trace inequalities");
    let tol = &cfg.tol;
    let maps = map_ensemble(cfg.stream(9, 999), true, tol)?;
    let per = cfg.count(200);
    let rs = [0.25, 0.5, 0.75];
    let mut jobs = Vec::new();
    for mi in 0..maps.len() {
        for ri in 0..rs.len() {
            for s in 0..per {
                jobs.push((mi, ri, s));
            }
        }
    }
    let rows: Vec<f64> = jobs
        .par_iter()
        .map(|&(mi, ri, s)| -> Result<f64> {
            let phi = &maps[mi];
            let (n, m) = (phi.input_dim(), phi.output_dim());
            let mut rng = rng_for(cfg.stream(9, mi as u64), &[ri as u64, s as u64]);
            let x = random_pd(&mut rng, m);
            let y = random_pd(&mut rng, m);
            let k1 = ginibre(&mut rng, n, n);
            let k2 = ginibre(&mut rng, m, m);
            let g1 = check_l1(phi, &x, &y, &k1, rs[ri], tol)?;
            let g2 = check_l2(phi, &x, &y, &k2, rs[ri], tol)?;
            Ok((g1.gap / g1.scale).min(g2.gap / g2.scale))
        })
        .collect::<Result<_>>()?;
    let worst = min_of(rows);
    r.metric("min_scaled_gap", worst);
    r.require(worst >= -1e-9, "negative gap on the Schwarz ensemble");

    let id = identity_map(3)?;
    let mut rng = rng_for(cfg.stream(9, 1000), &[]);
    let mut id_max = 0.0f64;
    for &rr in &rs {
        for _ in 0..cfg.count(20) {
            let x = random_pd(&mut rng, 3);
            let y = random_pd(&mut rng, 3);
            let k = ginibre(&mut rng, 3, 3);
            id_max = id_max
                .max(check_l1(&id, &x, &y, &k, rr, tol)?.gap.abs())
                .max(check_l2(&id, &x, &y, &k, rr, tol)?.gap.abs());
        }
    }
    r.metric("identity_max_abs_gap", id_max);
    r.require(id_max <= 1e-12, "identity map gap is not zero");
    Ok(r.finish())
}

/// Criterion 10: direct, `Y`-Schur and `X`-Schur positivity tests agree.
pub fn schur_equivalence(cfg: &SuiteConfig) -> Result<CriterionResult> {
    let mut r = CriterionResult::new(10, "three-way Schur equivalence");
    let tol = &cfg.tol;
    let seed = cfg.stream(10, 0);
    let blocks = cfg.count(1000);
    let rows: Vec<std::result::Result<bool, String>> = (0..blocks)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, &[i as u64]);
            let p = rng.random_range(1..=3usize);
            let q = rng.random_range(1..=3usize);
            let rank = rng.random_range(1..=p + q);
            let g = ginibre(&mut rng, p + q, rank);
            let block = &g * g.adjoint();
            let x = block.view((0, 0), (p, p)).into_owned();
            let y = block.view((p, p), (q, q)).into_owned();
            let mut k = block.view((p, 0), (q, p)).into_owned();
            if i % 2 == 1 {
                let delta: f64 = rng.random_range(0.01..0.5);
                k += ginibre(&mut rng, q, p).scale(delta);
            }
            schur_block_psd(&x, &y, &k, tol)
                .map(|rep| rep.block_psd)
                .map_err(|e| e.to_string())
        })
        .collect();
    let disagreements = rows.iter().filter(|x| x.is_err()).count();
    let psd = rows.iter().filter(|x| matches!(x, Ok(true))).count();
    r.metric("blocks", blocks as f64);
    r.metric("psd_blocks", psd as f64);
    r.metric("disagreements", disagreements as f64);
    r.require(disagreements == 0, "conditions disagree");
    Ok(r.finish())
}

pub type CriterionFn = fn(&SuiteConfig) -> Result<CriterionResult>;

pub const CRITERIA: [CriterionFn; 10] = [
    choi_map_classification,
    tensored_choi_construction,
    tracial_gs_positive,
    tracial_gs_constructive,
    tracial_schwarz,
    duality,
    jf_monotonicity,
    identity_block_consistency,
    power_trace_inequalities,
    schur_equivalence,
];

/// Runs every criterion; an error inside a criterion is reported as a failure.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f(cfg).unwrap_or_else(|e| {
                let mut r = CriterionResult::new(i as u32 + 1, &format!("criterion {}", i + 1));
                r.require(false, &e.to_string());
                r
            })
        })
        .collect()
}
