mod common;

use std::f64::consts::PI;

use corrlab::completion::{
    chordal_membership_2x2, completion_interval_2x2, find_completion, find_completion_with,
    Correlator,
};
use corrlab::geometry::{
    exposedness_from, is_extreme, is_extreme_analytic_2x2, is_local, membership_sdp, support_value,
    ExposednessStatus, ExtremalityStatus,
};
use corrlab::linalg::{
    gram_factor, gram_matrix, nullspace_basis, numerical_rank, Complex64, HermMatrix, SymMatrix,
    Tolerances,
};
use corrlab::models::{
    behavior_to_correlator, qubit, realization_to_correlator, Behavior, Extremal2x2Sampler,
    Realization,
};
use corrlab::sdp::{self, IpmSettings, SdpProblem};
use corrlab::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::*;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn correlator(n: usize, m: usize) -> impl Strategy<Value = Correlator> {
    prop::collection::vec(-1.0..=1.0f64, n * m)
        .prop_map(move |v| Correlator::new(n, m, &v).unwrap())
}

fn extremal() -> impl Strategy<Value = Correlator> {
    any::<u64>().prop_map(corrlab::models::random_extremal_2x2)
}

fn psd(k: usize, d: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0..1.0f64, k * d).prop_map(move |g| {
        let g = DMatrix::from_vec(d, k, g);
        SymMatrix::from_dmatrix(&(g.transpose() * g)).unwrap()
    })
}

fn unit_vector() -> impl Strategy<Value = [f64; 3]> {
    (0.0..PI, 0.0..2.0 * PI).prop_map(|(t, p)| [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
}

fn two_qubit_state() -> impl Strategy<Value = HermMatrix> {
    (prop::collection::vec(-1.0..1.0f64, 8), 0.0..=1.0f64).prop_filter_map("nonzero", |(v, w)| {
        let psi: Vec<Complex64> = v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let pure = qubit::pure_state(&psi).ok()?;
        Some(pure.scale(w).add(&qubit::maximally_mixed().scale(1.0 - w)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_round_trip(m in (1usize..6, 1usize..6).prop_flat_map(|(k, d)| psd(k, d))) {
        let xs = gram_factor(&m, &tol()).unwrap();
        let back = gram_matrix(&xs);
        prop_assert!(back.sub(&m).max_abs() <= 1e-8 * m.max_abs().max(1.0));
    }

    #[test]
    fn rank_plus_nullity(v in prop::collection::vec(-1.0..1.0f64, 25), k in 0usize..5) {
        let mut m = SymMatrix::from_fn(5, |i, j| v[i * 5 + j] + v[j * 5 + i]);
        // Force a rank deficiency in half of the cases.
        if k > 0 {
            let g = DMatrix::from_fn(k, 5, |i, j| v[i * 5 + j]);
            m = SymMatrix::from_dmatrix(&(g.transpose() * g)).unwrap();
        }
        prop_assert_eq!(numerical_rank(&m, &tol()) + nullspace_basis(&m, &tol()).len(), 5);
    }

    #[test]
    fn psd_spectrum_is_nonnegative(m in psd(4, 3)) {
        let min = SymMatrix::min_eigenvalue(&m).unwrap();
        prop_assert!(min >= -tol().psd_abs * m.frobenius().max(1.0));
    }

    #[test]
    fn rank_one_gram_scalars_are_signs(signs in prop::collection::vec(any::<bool>(), 1..7)) {
        let x: Vec<f64> = signs.iter().map(|s| if *s { 1.0 } else { -1.0 }).collect();
        let m = SymMatrix::from_fn(x.len(), |i, j| x[i] * x[j]);
        let xs = gram_factor(&m, &tol()).unwrap();
        prop_assert!(xs.iter().all(|v| v.len() == 1 && (v[0].abs() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn solver_pairs_satisfy_duality(l in prop::collection::vec(-2.0..2.0f64, 6)) {
        let lam = DMatrix::from_row_slice(2, 3, &l);
        let mut c = SymMatrix::zeros(5);
        for x in 0..2 {
            for y in 0..3 {
                c.set(x, 2 + y, 0.5 * lam[(x, y)]);
            }
        }
        let cons = (0..5).map(|i| (corrlab::completion::basis_matrix(5, i, i), 1.0)).collect();
        let p = SdpProblem::new(c, cons).unwrap();
        let a = sdp::solve(&p, &tol());
        prop_assert!(a.is_optimal());
        let b = sdp::solve(&p, &tol());
        prop_assert_eq!(&a.x, &b.x);
        prop_assert_eq!(&a.y, &b.y);
        prop_assert!(a.primal_obj <= a.dual_obj + 10.0 * tol().sdp_gap * (1.0 + a.primal_obj.abs()));
        prop_assert!(a.x.inner(&a.z) <= tol().sdp_gap * (1.0 + a.primal_obj.abs()));
        prop_assert!(numerical_rank(&a.x, &tol()) + numerical_rank(&a.z, &tol()) <= 5);
    }

    #[test]
    fn completion_projects_back(c in (1usize..4, 1usize..4).prop_flat_map(|(n, m)| correlator(n, m))) {
        let c = c.scale(0.5).unwrap();
        let r = find_completion(&c, &tol()).unwrap();
        prop_assert!(r.member);
        let x = r.completion.unwrap();
        for i in 0..x.dim() {
            prop_assert_eq!(x.get(i, i), 1.0);
        }
        for a in 0..c.n() {
            for b in 0..c.m() {
                prop_assert!((x.get(a, c.n() + b) - c.get(a, b)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn perturbed_start_gives_same_completion(c in extremal(), s in 0.25..4.0f64) {
        let base = find_completion(&c, &tol()).unwrap();
        prop_assert!(base.unique);
        let settings = IpmSettings { start_scale: s, ..IpmSettings::default() };
        let other = find_completion_with(&c, &tol(), &settings).unwrap();
        let d = base.completion.unwrap().sub(&other.completion.unwrap()).max_abs();
        prop_assert!(d <= 1e-6, "difference {d:e}");
    }

    #[test]
    fn chordal_and_sdp_membership_agree(c in correlator(2, 2)) {
        let t = tol();
        let iv = completion_interval_2x2(&c, &t).unwrap();
        let r = find_completion(&c, &t).unwrap();
        let near = iv.is_some_and(|i| i.width() < 10.0 * t.tight_abs) || r.margin.abs() < 10.0 * t.tight_abs;
        prop_assume!(!near);
        prop_assert_eq!(chordal_membership_2x2(&c, &t).unwrap(), r.member);
    }

    #[test]
    fn interval_is_sound(c in correlator(2, 2), k in 0usize..20) {
        let Some(iv) = completion_interval_2x2(&c, &tol()).unwrap() else { return Ok(()) };
        let th = iv.lo + iv.width() * (k as f64 + 0.5) / 20.0;
        let x = full_2x2(&c, chordal_c12(&c, th.cos()), th.cos());
        prop_assert!(min_eig(&x) >= -1e-9);
        for th in [iv.lo - 0.01, iv.hi + 0.01] {
            if (0.0..=PI).contains(&th) {
                // Any c12 fails once a 3×3 block through c34 is indefinite.
                let x = full_2x2(&c, chordal_c12(&c, th.cos()), th.cos());
                prop_assert!(min_eig(&x) < 0.0);
            }
        }
    }

    #[test]
    fn extremality_agrees_with_angle_criterion(c in prop_oneof![extremal(), correlator(2, 2).prop_map(|c| c.scale(0.9).unwrap())]) {
        let t = tol();
        prop_assume!(membership_sdp(&c, &t).unwrap().member);
        let a = is_extreme_analytic_2x2(&c, &t);
        prop_assume!(!matches!(a, Err(Error::NotAMember { .. })));
        let a = a.unwrap();
        let v = is_extreme(&c, &t).unwrap();
        if v.status != ExtremalityStatus::Inconclusive {
            prop_assert_eq!(v.status == ExtremalityStatus::Extreme, a.extreme);
        }
    }

    #[test]
    fn gram_vectors_follow_the_tight_cycle(c in extremal()) {
        let t = (0..64).map(|k| transform_2x2(&c, k)).find(|t| normal_cycle(t).abs() < 1e-9);
        prop_assert!(t.is_some());
        let t = t.unwrap();
        let x = find_completion(&t, &tol()).unwrap().completion.unwrap();
        let xs = gram_factor(&x, &tol()).unwrap();
        let (t13, t23) = (t.get(0, 0).acos(), t.get(1, 0).acos());
        let lhs = &xs[2] * (t13 + t23).sin();
        let rhs = &xs[0] * t23.sin() + &xs[1] * t13.sin();
        prop_assert!((lhs - rhs).norm() <= 1e-6);
        let (c12, c34) = closed_form(&t);
        prop_assert!((x.get(0, 1) - c12).abs() <= 1e-7);
        prop_assert!((x.get(2, 3) - c34).abs() <= 1e-7);
    }

    #[test]
    fn exposing_hyperplane_is_globally_valid(c in extremal()) {
        let t = tol();
        let v = is_extreme(&c, &t).unwrap();
        let x = exposedness_from(&v, &t).unwrap();
        prop_assume!(x.status == ExposednessStatus::Exposed);
        let h = x.hyperplane.unwrap();
        let s = support_value(&h.functional(), &t).unwrap();
        let scale = h.coefficients.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
        prop_assert!((s.value - h.offset).abs() <= 1e-6 * scale.max(1.0));
        prop_assert!(s.argmax.distance(&c) <= 1e-5, "argmax off by {:e}", s.argmax.distance(&c));
    }

    #[test]
    fn verdicts_are_switching_invariant(c in prop_oneof![extremal(), correlator(2, 2), correlator(2, 3)], seed in any::<u64>()) {
        let t = tol();
        let s = random_switching(&c, &mut rng(seed));
        let member = |c: &Correlator| membership_sdp(c, &t).unwrap().member;
        prop_assert_eq!(member(&c), member(&s));
        prop_assert_eq!(is_local(&c, &t).unwrap().local, is_local(&s, &t).unwrap().local);
        if member(&c) {
            let (a, b) = (is_extreme(&c, &t).unwrap(), is_extreme(&s, &t).unwrap());
            prop_assert_eq!(a.status, b.status);
            if a.status == ExtremalityStatus::Extreme {
                prop_assert_eq!(exposedness_from(&a, &t).unwrap().status, exposedness_from(&b, &t).unwrap().status);
            }
        }
    }

    #[test]
    fn necessary_conditions_hold_on_extremal_points(c in extremal()) {
        let x = find_completion(&c, &tol()).unwrap().completion.unwrap();
        let xs = gram_factor(&x, &tol()).unwrap();
        prop_assert!(xs.iter().all(|v| (v.norm() - 1.0).abs() <= 1e-8));
        let all = rank(&DMatrix::from_columns(&xs), 1e-7);
        prop_assert_eq!(rank(&DMatrix::from_columns(&xs[..2]), 1e-7), all);
        prop_assert_eq!(rank(&DMatrix::from_columns(&xs[2..]), 1e-7), all);
    }

    #[test]
    fn arcsin_criterion_on_rank_two_extremal_points(c in extremal()) {
        prop_assert!(scarani(&c, tol().tight_abs));
    }

    #[test]
    fn realization_and_behavior_maps_commute(
        rho in two_qubit_state(),
        a in prop::collection::vec(unit_vector(), 1..4),
        b in prop::collection::vec(unit_vector(), 1..4),
    ) {
        let obs = |d: &Vec<[f64; 3]>| d.iter().map(|v| qubit::bloch_observable(*v).unwrap()).collect::<Vec<_>>();
        let r = Realization::new(2, 2, rho, obs(&a), obs(&b)).unwrap();
        let direct = realization_to_correlator(&r).unwrap();
        let via = behavior_to_correlator(&Behavior::from_realization(&r).unwrap()).unwrap();
        prop_assert!(via.c.distance(&direct) <= 1e-9);
    }

    #[test]
    fn affine_bijection_round_trip(
        rho in two_qubit_state(),
        a in prop::collection::vec(unit_vector(), 1..4),
        b in prop::collection::vec(unit_vector(), 1..4),
    ) {
        let obs = |d: &Vec<[f64; 3]>| d.iter().map(|v| qubit::bloch_observable(*v).unwrap()).collect::<Vec<_>>();
        let r = Realization::new(2, 2, rho, obs(&a), obs(&b)).unwrap();
        let p = Behavior::from_realization(&r).unwrap();
        let t = behavior_to_correlator(&p).unwrap();
        let q = Behavior::from_correlators(&t.c_a, &t.c_b, &t.c).unwrap();
        for x in 0..p.n() {
            for y in 0..p.m() {
                for s in [1, -1] {
                    for u in [1, -1] {
                        prop_assert!((p.get(s, u, x, y) - q.get(s, u, x, y)).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn generator_draws_are_rank_two_extreme_points() {
    let t = tol();
    for c in Extremal2x2Sampler::new(1).take(1000) {
        let v = is_extreme_analytic_2x2(&c, &t).unwrap();
        assert!(v.extreme && v.rank == 2, "{c:?}");
    }
}
