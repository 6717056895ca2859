use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::StandardNormal;

use gbl::envs::{make_theta, standard_normal_matrix, top_set_of, LinkFamily};
use gbl::graphs::{er_graph, laplacian, quad_kernel, Graph};
use gbl::linalg::{frob_inner, sorted_svd, sorted_symmetric_eigen};
use gbl::rng::seeded;
use gbl::stage1::{psi, psi_nu, rearrangement, split_and_transform, svt};
use gbl::stage2::{init_design, PenaltySpec};

fn shape() -> impl Strategy<Value = (usize, usize, usize)> {
    (2usize..7, 2usize..7).prop_flat_map(|(d1, d2)| (Just(d1), Just(d2), 1..=d1.min(d2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_preserves_geometry((d1, d2, r) in shape(), seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let est = standard_normal_matrix(d1, d2, &mut rng);
        let tr = split_and_transform(&est, r).unwrap();
        let x = standard_normal_matrix(d1, d2, &mut rng);
        let y = standard_normal_matrix(d1, d2, &mut rng);
        let xt = tr.rearrange(&tr.rotate(&x));
        let yt = tr.rearrange(&tr.rotate(&y));
        prop_assert!((xt.dot(&yt) - frob_inner(&x, &y)).abs() < 1e-10);
        prop_assert!((xt.norm() - x.norm()).abs() < 1e-12);
        prop_assert_eq!(tr.k, (d1 + d2 - r) * r);

        let rotated = tr.rotate(&x);
        prop_assert_eq!(tr.unrearrange(&tr.rearrange(&rotated)), rotated);
        let mut perm = rearrangement(d1, d2, r);
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..d1 * d2).collect::<Vec<_>>());

        let eye1 = DMatrix::<f64>::identity(d1, d1);
        let full_u = DMatrix::from_columns(
            &tr.u_hat.column_iter().chain(tr.u_hat_perp.column_iter()).map(|c| c.into_owned()).collect::<Vec<_>>(),
        );
        prop_assert!((full_u.transpose() * &full_u - eye1).amax() < 1e-10);
    }

    #[test]
    fn tail_bounded_by_subspace_error((d1, d2, r) in shape(), seed in any::<u64>(), scale in 0.0f64..1.0) {
        let mut rng = seeded(seed);
        let tp = make_theta(d1, d2, r, &Graph::empty(d1), &Graph::empty(d2), 1.0, &mut rng).unwrap();
        let est = &tp.theta + standard_normal_matrix(d1, d2, &mut rng) * scale;
        let tr = split_and_transform(&est, r).unwrap();
        let th = tr.rearrange(&tr.rotate(&tp.theta));
        let tail = th.rows(tr.k, d1 * d2 - tr.k).norm_squared();
        let bound = (tr.u_hat_perp.transpose() * &tp.u_star).norm_squared()
            * (tr.v_hat_perp.transpose() * &tp.v_star).norm_squared();
        prop_assert!(tail <= bound + 1e-10, "tail {} bound {}", tail, bound);
    }

    #[test]
    fn laplacian_is_psd_with_zero_rows(n in 2usize..30, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let g = er_graph(n, p, &mut seeded(seed)).unwrap();
        let l = laplacian(&g);
        for row in l.row_iter() {
            prop_assert!(row.sum().abs() < 1e-12);
        }
        let (vals, _) = sorted_symmetric_eigen(&l);
        prop_assert!(vals.iter().all(|&v| v > -1e-10));
    }

    #[test]
    fn kernel_quad_form_is_edge_sum(n in 2usize..20, d in 1usize..6, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let g = er_graph(n, 0.4, &mut rng).unwrap();
        let stack = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let kernel = quad_kernel(&stack, &laplacian(&g), 1.5, 0.2).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let z = &stack * DVector::from_column_slice(&theta);
        let pairwise = 0.3 * g.edges().map(|(a, b)| (z[a] - z[b]).powi(2)).sum::<f64>();
        prop_assert!((kernel.quad_form(&theta) - pairwise).abs() <= 1e-10 * pairwise.max(1.0));
    }

    #[test]
    fn svt_shrinks_each_singular_value(d1 in 1usize..7, d2 in 1usize..7, t in 0.0f64..3.0, seed in any::<u64>()) {
        let m = standard_normal_matrix(d1, d2, &mut seeded(seed));
        let before = sorted_svd(&m).1;
        let after = sorted_svd(&svt(&m, t)).1;
        for (a, b) in after.iter().zip(before.iter()) {
            prop_assert!((a - (b - t).max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn psi_is_odd_monotone_and_logarithmic(x in -1e6f64..1e6, h in 1e-6f64..10.0) {
        prop_assert_eq!(psi(-x), -psi(x));
        prop_assert!(psi(x + h) > psi(x));
        prop_assert!(psi(x).abs() <= (1.0 + x.abs() + 0.5 * x * x).ln() + 1e-12);
    }

    #[test]
    fn truncation_is_identity_to_first_order(d1 in 1usize..5, d2 in 1usize..5, seed in any::<u64>()) {
        // ψ(x) = x − x³/6 + O(x⁴), so ψ_ν(A) → A as ν → 0
        let a = standard_normal_matrix(d1, d2, &mut seeded(seed));
        let t = psi_nu(&a, 1e-4).unwrap();
        prop_assert!((t - &a).amax() < 1e-6 * (1.0 + a.amax().powi(3)));
    }

    #[test]
    fn rank_one_updates_track_inverse(d in 1usize..8, m in 1usize..80, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let penalty = PenaltySpec::ridge(0.7, d).unwrap();
        let mut state = init_design(&penalty, 1.0, &[]).unwrap();
        for _ in 0..m {
            let x = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
            state.update_design(&x, 0.0).unwrap();
        }
        let (inv_err, logdet_err) = state.audit();
        prop_assert!(inv_err < 1e-8 && logdet_err < 1e-8, "{} {}", inv_err, logdet_err);
    }

    #[test]
    fn top_set_holds_the_best(rewards in prop::collection::vec(-10.0f64..10.0, 1..200), pct in 0.5f64..99.5) {
        let set = top_set_of(&rewards, pct).unwrap();
        let want = ((pct / 100.0) * rewards.len() as f64).ceil().max(1.0) as usize;
        prop_assert_eq!(set.len(), want.min(rewards.len()));
        let worst_in = set.iter().map(|&i| rewards[i]).fold(f64::INFINITY, f64::min);
        for (i, &r) in rewards.iter().enumerate() {
            if !set.contains(&i) {
                prop_assert!(r <= worst_in);
            }
        }
    }
}

#[test]
fn glm_derivatives_match_finite_differences() {
    let h = 1e-4;
    for f in [
        LinkFamily::linear(0.5).unwrap(),
        LinkFamily::logistic(),
        LinkFamily::poisson(),
    ] {
        for i in 0..=100 {
            let z = -1.0 + 0.02 * i as f64;
            let fd = (f.mu(z + h) - f.mu(z - h)) / (2.0 * h);
            assert_relative_eq!(fd, f.mu_prime(z), epsilon = 1e-6);
            let db = (f.b(z + h) - f.b(z - h)) / (2.0 * h);
            assert_relative_eq!(db, f.mu(z), epsilon = 1e-6);
            assert!(f.mu_prime(z) >= f.c_mu - 1e-9 && f.mu_prime(z) <= f.k_mu + 1e-9);
        }
    }
}
