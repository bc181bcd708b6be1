use proptest::prelude::*;

use schwarz_core::maps::{random_cp_map, transpose_map, MapRep};
use schwarz_core::monotone::{build_jf, jf_pinv, superop_of_map, MonotoneFunction};
use schwarz_core::numerics::{
    hermitian_eig, hs_inner, is_psd, pinv_psd, psd_test, schur_block_psd, ToleranceConfig,
};
use schwarz_core::positivity::{check_cp, check_generalized_schwarz, check_kpositive_seesaw};
use schwarz_core::random::{ginibre, random_gram, random_hermitian, random_pd, rng_for};
use schwarz_core::tracial::{
    dual_optimizer, ensemble_pair, eval_f, omega_contains, pairing, random_omega_point,
    TracialPair,
};
use schwarz_core::verdict::Certificate;

fn tol() -> ToleranceConfig {
    ToleranceConfig::default()
}

/// Hermiticity-preserving map with a random Hermitian Choi matrix.
fn random_hp_map(n: usize, m: usize, seed: u64) -> MapRep {
    let c = random_hermitian(&mut rng_for(seed, &[9]), n * m);
    MapRep::from_choi(n, m, c, "random_hp").unwrap()
}

fn function_strategy() -> impl Strategy<Value = MonotoneFunction> {
    prop_oneof![
        (0.01f64..0.99).prop_map(|r| MonotoneFunction::Power { r }),
        Just(MonotoneFunction::Identity {}),
        (0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0)
            .prop_map(|(beta, gamma, t)| MonotoneFunction::LoewnerAtom { beta, gamma, t }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_is_hilbert_schmidt_adjoint(seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
        let phi = random_hp_map(n, m, seed);
        let mut rng = rng_for(seed, &[1]);
        let a = ginibre(&mut rng, n, n);
        let b = ginibre(&mut rng, m, m);
        let lhs = hs_inner(&b, &phi.apply(&a).unwrap());
        let rhs = hs_inner(&phi.apply_adjoint(&b).unwrap(), &a);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
        let s = superop_of_map(&phi).matrix;
        let sa = superop_of_map(&phi.adjoint()).matrix;
        prop_assert!((sa - s.adjoint()).norm() <= 1e-12 * (1.0 + s.norm()));
    }

    #[test]
    fn jf_is_psd_with_closed_form_spectrum(seed in any::<u64>(), f in function_strategy(), rx in 1usize..4, ry in 1usize..4) {
        let t = tol();
        let mut rng = rng_for(seed, &[2]);
        let x = random_gram(&mut rng, 3, rx);
        let y = random_gram(&mut rng, 3, ry);
        let j = build_jf(&f, &x, &y, &t).unwrap().matrix();
        prop_assert!(is_psd(&j, &t).unwrap());
        // independent recomputation of the coefficients from the two spectra
        let lx = hermitian_eig(&x).unwrap().eigenvalues;
        let ly = hermitian_eig(&y).unwrap().eigenvalues;
        let cut = |v: &[f64]| t.kernel_tol * (1.0 + v.iter().fold(0.0f64, |a, b| a.max(b.abs())));
        let (cx, cy) = (cut(&lx), cut(&ly));
        let mut expect: Vec<f64> = Vec::new();
        for &l in &lx {
            for &mu in &ly {
                expect.push(if l > cx && mu > cy { mu * f.eval(l / mu) } else { 0.0 });
            }
        }
        expect.sort_by(f64::total_cmp);
        let mut got = hermitian_eig(&j).unwrap().eigenvalues;
        got.reverse();
        for (g, e) in got.iter().zip(&expect) {
            prop_assert!((g - e).abs() <= 1e-10 * (1.0 + e.abs()), "{g} vs {e}");
        }
        let p = jf_pinv(&schwarz_core::monotone::SuperOperator::new(3, 3, j.clone()).unwrap(), &t).unwrap();
        prop_assert!((&j * &p.matrix * &j - &j).norm() <= 1e-9 * (1.0 + j.norm()));
    }

    #[test]
    fn cp_certificates_reverify(seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
        let t = tol();
        let phi = random_hp_map(n, m, seed);
        let v = check_cp(&phi, &t).unwrap();
        if let Some(Certificate::Eigenvector { vector }) = &v.certificate {
            let q = (vector.adjoint() * phi.choi() * vector)[(0, 0)].re;
            prop_assert!((q - v.value).abs() <= 1e-8);
            prop_assert!(v.is_violation());
        } else {
            prop_assert!(v.passed());
        }
    }

    #[test]
    fn weak_and_strong_duality(seed in any::<u64>(), idx in 0usize..10_000, slack in 0.0f64..2.0) {
        let t = tol();
        let p = ensemble_pair(seed, 3, idx, &t).unwrap();
        let f = eval_f(&p, &t).unwrap().finite().unwrap();
        let q = dual_optimizer(&p, &t).unwrap();
        prop_assert!(omega_contains(&q, &t).unwrap());
        prop_assert!((pairing(&p, &q).unwrap() - f).abs() <= t.duality_tol * (1.0 + f));
        let mut rng = rng_for(seed, &[3, idx as u64]);
        let q = random_omega_point(&mut rng, 3, slack).unwrap();
        prop_assert!(pairing(&p, &q).unwrap() <= f + 1e-9 * (1.0 + f));
    }

    #[test]
    fn f_is_jointly_convex(seed in any::<u64>(), lam in 0.01f64..0.99) {
        let t = tol();
        let p1 = ensemble_pair(seed, 3, 0, &t).unwrap();
        let p2 = ensemble_pair(seed, 3, 2, &t).unwrap();
        let mix = TracialPair::new(
            p1.k.scale(lam) + p2.k.scale(1.0 - lam),
            p1.x.scale(lam) + p2.x.scale(1.0 - lam),
            &t,
        ).unwrap();
        let f = |p: &TracialPair| eval_f(p, &t).unwrap().finite().unwrap();
        prop_assert!(f(&mix) <= lam * f(&p1) + (1.0 - lam) * f(&p2) + 1e-8);
    }

    #[test]
    fn schur_conditions_agree(seed in any::<u64>(), p in 1usize..4, q in 1usize..4, rank in 1usize..7, delta in 0.02f64..1.0, perturb in any::<bool>()) {
        let t = tol();
        let mut rng = rng_for(seed, &[4]);
        let g = ginibre(&mut rng, p + q, rank.min(p + q));
        let block = &g * g.adjoint();
        let x = block.view((0, 0), (p, p)).into_owned();
        let y = block.view((p, p), (q, q)).into_owned();
        let mut k = block.view((p, 0), (q, p)).into_owned();
        if perturb {
            k += ginibre(&mut rng, q, p).scale(delta);
        }
        let report = schur_block_psd(&x, &y, &k, &t);
        prop_assert!(report.is_ok(), "{report:?}");
        if !perturb {
            prop_assert!(report.unwrap().block_psd);
        }
    }

    #[test]
    fn cp_maps_satisfy_operator_2pos(seed in any::<u64>(), n in 1usize..4, m in 1usize..4) {
        let t = tol();
        let phi = random_cp_map(n, m, 2, seed).unwrap();
        let mut rng = rng_for(seed, &[5]);
        let k = ginibre(&mut rng, n, n);
        let x = random_pd(&mut rng, n);
        let v = schwarz_core::positivity::check_operator_2pos(&phi, &k, &x, &t).unwrap();
        prop_assert!(v.passed(), "{:?}", v.value);
    }

    #[test]
    fn pinv_is_moore_penrose(seed in any::<u64>(), n in 1usize..5, rank in 1usize..5) {
        let t = tol();
        let a = random_gram(&mut rng_for(seed, &[6]), n, rank.min(n));
        let p = pinv_psd(&a, &t).unwrap();
        prop_assert!((&a * &p * &a - &a).norm() <= 1e-9 * (1.0 + a.norm()));
        prop_assert!((&p * &a * &p - &p).norm() <= 1e-9 * (1.0 + p.norm() * p.norm() * a.norm()));
        prop_assert!(psd_test(&p, 0.0, &t).unwrap().psd);
    }
}

#[test]
fn seesaw_violation_persists_with_larger_k() {
    let t = tol();
    let tr = transpose_map(3).unwrap();
    let k2 = check_kpositive_seesaw(&tr, 2, 4, 1, &t).unwrap();
    let k3 = check_kpositive_seesaw(&tr, 3, 4, 1, &t).unwrap();
    assert!(k2.is_violation() && k3.is_violation());
    assert!(k3.value <= k2.value + 1e-9);
}

#[test]
fn parallel_merge_matches_sequential() {
    let t = tol();
    let tr = transpose_map(2).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let a = check_generalized_schwarz(&tr, 8, 11, &t).unwrap();
            let b = check_kpositive_seesaw(&tr, 2, 8, 11, &t).unwrap();
            format!(
                "{}{}",
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap()
            )
        })
    };
    assert_eq!(run(1), run(4));
}
