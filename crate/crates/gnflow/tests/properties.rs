use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use gnflow::coeffs::CoefficientTable;
use gnflow::grassmann::{berezin_integrate, gaussian_integrate, Element, ModeCovariance};
use gnflow::kernels::{eval_kernel, KernelKind, TorusSpec};
use gnflow::linear::{dense_solve, LinearContext};
use gnflow::polymer::{
    gamma_n, mayer_cluster_log, random_activities, reblock_scalar, small_set, theta_exhaustive, theta_gamma,
    theta_tree, BlockTorus, GammaParams, PavedSet, ScalarFamily, TreeWeight,
};
use gnflow::quadratic::backward_step;
use gnflow::spin::{expand2, expand4, reconstruct2, reconstruct4, SpinMatrix, SpinOperator};

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn blocks(max: usize) -> impl Strategy<Value = Vec<[usize; 2]>> {
    prop::collection::btree_set((0usize..5, 0usize..5), 1..=max).prop_map(|s| s.into_iter().map(|(a, b)| [a, b]).collect())
}

fn element(modes: usize) -> impl Strategy<Value = Element> {
    prop::collection::vec((0u32..(1 << modes), 0u32..(1 << modes), -1.0f64..1.0), 0..6).prop_map(move |terms| {
        let mut e = Element::zero();
        for (a, b, c) in terms {
            let psi: Vec<usize> = (0..modes).filter(|i| a >> i & 1 == 1).collect();
            let bar: Vec<usize> = (0..modes).filter(|i| b >> i & 1 == 1).collect();
            e = e.add(&Element::monomial(&psi, &bar, cx(c, 0.0)).unwrap());
        }
        e
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernels_are_odd(x0 in -1.9f64..1.9, x1 in -1.9f64..1.9, k in 0u32..4) {
        let spec = TorusSpec::new(2, 2, 2).unwrap();
        for kind in [KernelKind::C { k }, KernelKind::W { k }] {
            let a = eval_kernel(&kind, [x0, x1], &spec, 1e-15).unwrap();
            let b = eval_kernel(&kind, [-x0, -x1], &spec, 1e-15).unwrap();
            prop_assert!((a + b).norm() < 1e-13);
        }
    }

    #[test]
    fn clifford_expansions_round_trip(v in prop::collection::vec(-1.0f64..1.0, 32)) {
        let m = SpinMatrix::from_fn(|r, c| cx(v[2 * r + c], v[4 + 2 * r + c]));
        prop_assert!((reconstruct2(&expand2(&m)) - m).norm() < 1e-14);
        let o = SpinOperator::from_fn(|r, c| cx(v[(4 * r + c) % 32], v[(4 * r + c + 16) % 32]));
        prop_assert!((reconstruct4(&expand4(&o)) - o).norm() < 1e-13);
    }

    #[test]
    fn grassmann_product_is_associative(a in element(3), b in element(3), c in element(3)) {
        let left = a.mul(&b).mul(&c);
        let right = a.mul(&b.mul(&c));
        prop_assert!(left.distance(&right) < 1e-14);
    }

    #[test]
    fn even_elements_commute(a in element(3), b in element(3)) {
        let ea = Element::from_terms(a.terms().filter(|(k, _)| (k.0.count_ones() + k.1.count_ones()) % 2 == 0).map(|(k, v)| (*k, *v)));
        prop_assert!(ea.mul(&b).distance(&b.mul(&ea)) < 1e-14);
    }

    #[test]
    fn gaussian_matches_berezin(f in element(3), v in prop::collection::vec(-1.0f64..1.0, 9)) {
        let c = DMatrix::from_fn(3, 3, |r, k| cx(v[3 * r + k], 0.0) + if r == k { cx(2.0, 0.0) } else { cx(0.0, 0.0) });
        let det = gaussian_integrate(&f, &ModeCovariance::square(c.clone()).unwrap(), None).unwrap().scalar_part();
        let oracle = berezin_integrate(&f, &c).unwrap();
        prop_assert!((det - oracle).norm() < 1e-11 * (1.0 + oracle.norm()));
    }

    #[test]
    fn theta_is_the_minimum_over_trees(b in blocks(5)) {
        let t = BlockTorus::new([5, 5]).unwrap();
        let x = PavedSet::new(&t, b.clone()).unwrap();
        let w = TreeWeight::default();
        prop_assert_eq!(theta_tree(&x, &t, &w).0, theta_exhaustive(&x, &t, &w).unwrap());
        let mut rev = b;
        rev.reverse();
        prop_assert_eq!(theta_tree(&PavedSet::new(&t, rev).unwrap(), &t, &w).0, theta_tree(&x, &t, &w).0);
    }

    #[test]
    fn gamma_at_least_one_and_small_sets(b in blocks(6), n in 0u32..5) {
        let t = BlockTorus::new([5, 5]).unwrap();
        let x = PavedSet::new(&t, b).unwrap();
        let p = GammaParams::default();
        prop_assert!(theta_gamma(&x, &t, &p, 0).gamma >= 1.0);
        prop_assert!(gamma_n(&x, &t, &p, n) >= theta_gamma(&x, &t, &p, 0).gamma);
        prop_assert_eq!(small_set(&x, &t), x.is_connected(&t) && x.len() <= 4);
    }

    #[test]
    fn reblocking_preserves_total_activity(vals in prop::collection::vec(-0.05f64..0.05, 16)) {
        let t = BlockTorus::new([4, 4]).unwrap();
        let mut f = ScalarFamily::new(t).unwrap();
        for (i, v) in vals.iter().enumerate() {
            f.insert(&PavedSet::single(&t, t.block(i)).unwrap(), *v);
        }
        let g = reblock_scalar(&f, 2).unwrap();
        let total: f64 = g.values.values().sum();
        prop_assert!((total - vals.iter().sum::<f64>()).abs() < 1e-15);
        prop_assert_eq!(g.values.len(), 4);
    }

    #[test]
    fn mayer_identity_for_random_activities(seed in 0u64..1000) {
        let f = random_activities(BlockTorus::new([2, 3]).unwrap(), 3, 0.05, seed).unwrap();
        let (_, _, rep) = mayer_cluster_log(&f, &GammaParams::default()).unwrap();
        prop_assert!(rep.identity_error < 1e-10);
    }

    #[test]
    fn backward_step_inverts_the_forward_map(beta in 0.0f64..1.0, g in 1e-4f64..0.1) {
        let prev = backward_step(beta, g);
        prop_assert!(prev > 0.0 && prev <= g);
        prop_assert!((prev + beta * prev * prev - g).abs() <= 1e-15 * g);
    }

    #[test]
    fn s0_matches_dense(beta in 0.2f64..0.6, theta in -0.3f64..0.3, n in 4u32..20) {
        let table = CoefficientTable::constant(n, beta, beta, theta, 0.1, -0.2);
        let traj = gnflow::quadratic::trajectory(0.01, &table).unwrap();
        let ctx = LinearContext::new(&table, &traj.gbar, &traj.zbar, None).unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(n as u64);
        let r = ctx.random_unit_r(&mut rng);
        let y = ctx.s0_apply(&r);
        let d = dense_solve(&ctx.l_blocks(), &r).unwrap();
        prop_assert!(ctx.norm_w(&y.sub(&d)) <= 1e-10 * ctx.norm_w(&y));
    }
}
