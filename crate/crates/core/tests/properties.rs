//! Cross-module invariants as seeded property tests.

use kidecomp::channels::{self, Picture, Superoperator};
use kidecomp::classical;
use kidecomp::experiment::{self, StatisticalExperiment};
use kidecomp::linalg::{self, ComplexMatrix, Tolerance};
use kidecomp::minsuff;
use kidecomp::opspace::{self, OperatorSubspace};
use kidecomp::products;
use kidecomp::random::{self, rng_from_seed};
use kidecomp::structure;
use kidecomp::suite;
use kidecomp::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn tol() -> Tolerance {
    Tolerance::default()
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// U diag(λ) U† with each eigenvalue repeated `mult` times.
fn degenerate_hermitian(seed: u64, distinct: usize, mult: usize) -> (ComplexMatrix, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let d = distinct * mult;
    let u = random::haar_unitary(&mut rng, d);
    let mut spectrum = Vec::with_capacity(d);
    for k in 0..distinct {
        spectrum.extend(std::iter::repeat_n(k as f64 - 1.5, mult));
    }
    let h = &u * linalg::real_diag(&spectrum) * u.adjoint();
    spectrum.sort_by(f64::total_cmp);
    (h, spectrum)
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn eigh_reconstructs_generic_hermitian(seed in any::<u64>(), d in 1usize..=64) {
        let h = random::ginibre_hermitian(&mut rng_from_seed(seed), d);
        let eig = linalg::eigh(&h, &tol()).unwrap();
        let err = (eig.reconstruct() - &h).norm();
        prop_assert!(err <= 10.0 * tol().residual * h.norm(), "error {err:e}");
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eigh_reconstructs_degenerate_hermitian(seed in any::<u64>(), distinct in 1usize..=4, mult in 1usize..=16) {
        let (h, spectrum) = degenerate_hermitian(seed, distinct, mult);
        let eig = linalg::eigh(&h, &tol()).unwrap();
        let err = (eig.reconstruct() - &h).norm();
        prop_assert!(err <= 10.0 * tol().residual * h.norm().max(1.0), "error {err:e}");
        let n = h.nrows();
        let orth = (eig.vectors.adjoint() * &eig.vectors - linalg::identity(n)).norm();
        prop_assert!(orth <= 1e-10, "orthonormality {orth:e}");
        for (a, b) in eig.values.iter().zip(&spectrum) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn planted_instances_reconstruct_and_validate(seed in any::<u64>()) {
        let (e, truth) = suite::planted_instance(seed, 0, 12, 2..=4).unwrap();
        prop_assert!(experiment::validate(&e, &tol()).is_valid());
        for t in 0..e.num_labels() {
            let err = (truth.assemble(t) - &e.states[t]).norm();
            prop_assert!(err <= 1e-12, "label {t}: {err:e}");
        }
    }

    #[test]
    fn restriction_is_idempotent_and_faithful(seed in any::<u64>()) {
        let e = suite::product_factor(seed).unwrap();
        let (r, v) = experiment::restrict_to_joint_support(&e, &tol()).unwrap();
        let (r2, v2) = experiment::restrict_to_joint_support(&r, &tol()).unwrap();
        prop_assert_eq!(r2.dim, r.dim);
        prop_assert_eq!(v2.ncols(), v.ncols());
        let avg = experiment::average_state(&r, None);
        let eig = linalg::eigh(&avg, &tol()).unwrap();
        let lmax = *eig.values.last().unwrap();
        prop_assert!(eig.values[0] > tol().rank_cut * lmax);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn planted_recovery_matches_ground_truth(seed in any::<u64>()) {
        let (e, truth) = suite::planted_instance(seed, 0, 12, 2..=4).unwrap();
        let k = structure::ki_decomposition(&e, &tol(), seed).unwrap();
        let mut got = k.block_dims();
        got.sort();
        let mut want = truth.block_dims.clone();
        want.sort();
        prop_assert_eq!(got, want);
        prop_assert!(suite::planted_q_distance(&k, &truth) <= 1e-6);
        let m0 = minsuff::minimal_sufficient_algebra(&e, None, &tol()).unwrap();
        let n2: usize = k.blocks.iter().map(|b| b.n * b.n).sum();
        prop_assert_eq!(n2, m0.dim());
        let nm: usize = k.blocks.iter().map(|b| b.n * b.m).sum();
        prop_assert_eq!(nm, k.support_dim());
    }

    #[test]
    fn decomposition_is_deterministic(seed in any::<u64>()) {
        let (e, _) = suite::planted_instance(seed, 1, 8, 2..=3).unwrap();
        let a = structure::ki_decomposition(&e, &tol(), 3).unwrap();
        let b = structure::ki_decomposition(&e, &tol(), 3).unwrap();
        let ja = serde_json::to_string(&a.to_json()).unwrap();
        let jb = serde_json::to_string(&b.to_json()).unwrap();
        prop_assert_eq!(ja, jb);
    }

    #[test]
    fn conditional_expectation_properties(seed in any::<u64>()) {
        let (e, _) = suite::planted_instance(seed, 2, 8, 2..=3).unwrap();
        let m0 = minsuff::minimal_sufficient_algebra(&e, None, &tol()).unwrap();
        let rho_bar = experiment::average_state(&e, None);
        let cond = minsuff::conditional_expectation(&m0, &rho_bar, &tol()).unwrap();
        let report = channels::is_cptp_unital(&cond, &tol()).unwrap();
        prop_assert!(report.cp && report.unital);
        let sqrt_bar = linalg::spectral_apply(&rho_bar, |x| Complex64::new(x.sqrt(), 0.0), false, &tol()).unwrap();
        let probes = random::hermitian_probes(seed, e.dim, 20);
        for pair in probes.windows(2) {
            let (x, y) = (&pair[0], &pair[1]);
            let ex = cond.apply(x, Picture::Heisenberg).unwrap();
            let ey = cond.apply(y, Picture::Heisenberg).unwrap();
            for s in &e.states {
                prop_assert!(((s * &ex).trace() - (s * x).trace()).norm() <= 1e-8);
            }
            let eex = cond.apply(&ex, Picture::Heisenberg).unwrap();
            prop_assert!((eex - &ex).norm() <= 1e-8);
            prop_assert!(m0.residual(&ex) <= 1e-8);
            let l = (&sqrt_bar * ex.adjoint() * &sqrt_bar * y).trace();
            let r = (&sqrt_bar * x.adjoint() * &sqrt_bar * &ey).trace();
            prop_assert!((l - r).norm() <= 1e-8);
        }
    }

    #[test]
    fn minimal_algebra_contains_generators_and_supports(seed in any::<u64>()) {
        let e = suite::product_factor(seed).unwrap();
        let (r, _) = experiment::restrict_to_joint_support(&e, &tol()).unwrap();
        let cg = minsuff::cocycle_generators(&r, None, &tol()).unwrap();
        let m0 = minsuff::algebra_from_generators(&cg, &tol()).unwrap();
        for g in &cg.generators {
            prop_assert!(m0.contains(g, &tol()));
        }
        for s in &r.states {
            let p = linalg::support_projection(s, &tol()).unwrap();
            prop_assert!(m0.contains(&p.matrix, &tol()));
        }
    }

    #[test]
    fn weight_independence(seed in any::<u64>()) {
        let (e, _) = suite::planted_instance(seed, 3, 8, 2..=4).unwrap();
        let mut rng = rng_from_seed(seed);
        let w1 = random::random_probability(&mut rng, e.num_labels());
        let w2 = random::random_probability(&mut rng, e.num_labels());
        let a = minsuff::minimal_sufficient_algebra(&e, Some(&w1), &tol()).unwrap();
        let b = minsuff::minimal_sufficient_algebra(&e, Some(&w2), &tol()).unwrap();
        prop_assert!(a.mutual_containment_residual(&b) <= 1e-8);
    }

    #[test]
    fn unitary_covariance(seed in any::<u64>()) {
        let (e, _) = suite::planted_instance(seed, 4, 8, 2..=3).unwrap();
        let u = random::haar_unitary(&mut rng_from_seed(seed), e.dim);
        let m = minsuff::minimal_sufficient_algebra(&e, None, &tol()).unwrap();
        let mu = minsuff::minimal_sufficient_algebra(&e.conjugate(&u), None, &tol()).unwrap();
        prop_assert!(m.conjugate(&u).mutual_containment_residual(&mu) <= 1e-8);
    }

    #[test]
    fn bicommutant_of_unital_seed(seed in any::<u64>(), d in 2usize..=4, k in 1usize..=2) {
        let mut rng = rng_from_seed(seed);
        let mut gens = vec![linalg::identity(d)];
        gens.extend((0..k).map(|_| random::ginibre_hermitian(&mut rng, d)));
        // Keep the seed commutative half of the time so the closure is a proper subalgebra.
        if seed % 2 == 0 {
            let h = gens[1].clone();
            gens.truncate(1);
            gens.push(&h * &h);
            gens.push(h);
        }
        let s = opspace::orthonormalize_span(&gens, d, &tol()).unwrap();
        let a = opspace::close_algebra(&s, &[], &tol()).unwrap();
        let aa = opspace::commutant(&opspace::commutant(&s, &tol()).unwrap(), &tol()).unwrap();
        prop_assert!(a.mutual_containment_residual(&aa) <= 1e-8);
        let z = opspace::center(&a, &tol()).unwrap();
        prop_assert!(z.dim() <= a.dim() && a.dim() <= d * d);
        prop_assert!(opspace::commutativity_defect(&z) <= 1e-8);
    }

    #[test]
    fn broadcast_witness_exists_iff_classical(seed in any::<u64>()) {
        let e = suite::product_factor(seed).unwrap();
        let k = structure::ki_decomposition(&e, &tol(), seed).unwrap();
        match classical::broadcast_channel(&k) {
            Ok(w) => {
                prop_assert!(classical::is_broadcastable(&k));
                let c = classical::certify_broadcast(&w, &e, &tol()).unwrap();
                prop_assert!(c.cp && c.tp);
                prop_assert!(c.worst_marginal() <= 1e-9);
            }
            Err(Error::NotClassical { .. }) => prop_assert!(!classical::is_broadcastable(&k)),
            Err(other) => prop_assert!(false, "unexpected error {other}"),
        }
    }

    #[test]
    fn extraction_reproduces_classical_part(seed in any::<u64>()) {
        let (e, _) = suite::planted_instance(seed, 5, 12, 2..=4).unwrap();
        let k = structure::ki_decomposition(&e, &tol(), seed).unwrap();
        let cert = classical::certify_extraction(&k, &e, &tol()).unwrap();
        prop_assert!(cert.passed);
        prop_assert!(cert.disturbance <= 1e-9);
        prop_assert!(cert.outcome_deviation <= 1e-10);
    }

    #[test]
    fn products_satisfy_both_theorems(seed in any::<u64>()) {
        let e = suite::product_factor(seed).unwrap();
        let f = suite::product_factor(seed.wrapping_add(1)).unwrap();
        let [a, b, ab] = products::check_product_minimal_sufficiency(&e, &f, &tol()).unwrap();
        prop_assert_eq!(ab, a && b);
        let (pe, _) = suite::planted_instance(seed, 6, 4, 2..=3).unwrap();
        let (pf, _) = suite::planted_instance(seed, 7, 4, 2..=3).unwrap();
        let rep = products::check_product_classical(&pe, &pf, &tol(), seed).unwrap();
        prop_assert!(rep.theorems_hold());
        prop_assert!(rep.q_factorization_residual.unwrap() <= 1e-6);
    }
}

fn sorted_rows(cl: &classical::ClassicalExperiment) -> Vec<Vec<u64>> {
    // Distributions as sorted multisets per label, rounded to compare up to relabeling.
    let mut rows: Vec<Vec<u64>> = cl
        .distributions
        .iter()
        .map(|d| {
            let mut r: Vec<u64> = d.iter().map(|p| (p * 1e8).round() as u64).collect();
            r.sort_unstable();
            r
        })
        .collect();
    rows.sort();
    rows
}

#[test]
fn classical_part_of_products_is_associative() {
    let t = tol();
    let make = |s: u64| {
        let d = [0.2 + 0.1 * (s % 3) as f64, 0.6];
        StatisticalExperiment::from_states(vec![
            linalg::real_diag(&[0.5, 0.5]),
            linalg::real_diag(&[d[0], 1.0 - d[0]]),
        ])
        .unwrap()
    };
    let (e, f) = (make(0), make(1));
    let g = suite::fixtures::pure_pair();
    let left = products::tensor_experiments(&products::tensor_experiments(&e, &f).unwrap(), &g).unwrap();
    let right = products::tensor_experiments(&e, &products::tensor_experiments(&f, &g).unwrap()).unwrap();
    let kl = structure::ki_decomposition(&left, &t, 1).unwrap();
    let kr = structure::ki_decomposition(&right, &t, 1).unwrap();
    let (cl, cr) = (classical::classical_part(&kl), classical::classical_part(&kr));
    assert_eq!(cl.size(), cr.size());
    assert_eq!(cl.size(), 4);
    assert_eq!(sorted_rows(&cl), sorted_rows(&cr));
}

#[test]
fn duality_for_random_channels() {
    let t = tol();
    let mut rng = rng_from_seed(21);
    for d in 1..=4 {
        let kraus: Vec<ComplexMatrix> = {
            let g: Vec<ComplexMatrix> = (0..3).map(|_| random::ginibre(&mut rng, d, d)).collect();
            let s: ComplexMatrix = g.iter().map(|k| k.adjoint() * k).sum();
            let inv_sqrt = linalg::spectral_apply(&s, |x| Complex64::new(x.powf(-0.5), 0.0), false, &t).unwrap();
            g.iter().map(|k| k * &inv_sqrt).collect()
        };
        let op = Superoperator::from_kraus(kraus).unwrap();
        let rho = random::random_density(&mut rng, d);
        let x = random::ginibre_hermitian(&mut rng, d);
        let lhs = (op.apply(&rho, Picture::Schrodinger).unwrap() * &x).trace();
        let rhs = (&rho * op.apply(&x, Picture::Heisenberg).unwrap()).trace();
        assert!((lhs - rhs).norm() <= t.residual);
    }
}

#[test]
fn multiplicative_domain_elements_are_multiplicative() {
    let t = tol();
    let mut rng = rng_from_seed(5);
    // Pinching along two blocks: the block-diagonal algebra is its multiplicative domain.
    let p = linalg::real_diag(&[1.0, 1.0, 0.0]);
    let q = linalg::real_diag(&[0.0, 0.0, 1.0]);
    let op = Superoperator::pinching(&[p.clone(), q.clone()]).unwrap();
    let block = {
        let g = random::ginibre(&mut rng, 3, 3);
        &p * &g * &p + &q * &g * &q
    };
    assert!(channels::multiplicative_domain_member(&op, &block, &t).unwrap());
    for _ in 0..5 {
        let b = random::ginibre(&mut rng, 3, 3);
        let l = |x: &ComplexMatrix| op.apply(x, Picture::Heisenberg).unwrap();
        assert!((l(&(&b * &block)) - l(&b) * l(&block)).norm() <= 10.0 * t.residual);
        assert!((l(&(&block * &b)) - l(&block) * l(&b)).norm() <= 10.0 * t.residual);
    }
    let off = linalg::matrix_unit(3, 0, 2);
    assert!(!channels::multiplicative_domain_member(&op, &off, &t).unwrap());
}

#[test]
fn subspace_conjugation_preserves_orthonormality() {
    let t = tol();
    let mut rng = rng_from_seed(9);
    let gens: Vec<ComplexMatrix> = (0..5).map(|_| random::ginibre(&mut rng, 3, 3)).collect();
    let s: OperatorSubspace = opspace::orthonormalize_span(&gens, 3, &t).unwrap();
    let u = random::haar_unitary(&mut rng, 3);
    assert!(s.conjugate(&u).orthonormality_defect() <= 1e-12);
}
