use balflow_core::cones::{lcp_bruteforce, project_orthant, solve_lcp_laplacian, BoxSet};
use balflow_core::flows::{
    in_lambda_set, max_abs_diff, monotonicity_check, rhs_algorithm1, rhs_algorithm1_per_agent, State,
};
use balflow_core::{Digraph, KronLaplacian, Laplacian, SlicingInstance};
use proptest::prelude::*;

fn graph(kind: u8, n: usize, w: f64, seed: u64) -> Digraph {
    match kind % 3 {
        0 => Digraph::directed_circle(n, w).unwrap(),
        1 => Digraph::complete(n, w).unwrap(),
        _ => Digraph::random_balanced(n, 0.5, seed).unwrap(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn box_projection_is_idempotent_and_obtuse(
        y in prop::collection::vec(-10.0f64..10.0, 1..12),
        z in prop::collection::vec(-10.0f64..10.0, 1..12),
        width in 0.0f64..5.0,
    ) {
        let n = y.len().min(z.len());
        let (y, z) = (&y[..n], &z[..n]);
        let set = BoxSet { lower: vec![-1.0; n], upper: vec![-1.0 + width; n] };
        let p = set.project(y);
        prop_assert!(set.contains(&p));
        prop_assert_eq!(set.project(&p), p.clone());
        // (y − P(y))ᵀ(w − P(y)) ≤ 0 for every w in the set.
        let w = set.project(z);
        let r: Vec<f64> = y.iter().zip(&p).map(|(a, b)| a - b).collect();
        let d: Vec<f64> = w.iter().zip(&p).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&r, &d) <= 1e-12);
        let o = project_orthant(y);
        prop_assert!(o.iter().zip(y).all(|(a, b)| *a >= 0.0 && *a >= *b));
    }

    #[test]
    fn compact_and_per_agent_dynamics_agree(
        n in 2usize..12,
        kind in 0u8..3,
        seed in any::<u64>(),
        eps in prop::sample::select(vec![1.0, 0.1, 0.01, 0.001]),
        scale in 0.0f64..4.0,
    ) {
        let prob = SlicingInstance::generate(n, seed).unwrap().to_problem().unwrap();
        let g = graph(kind, n, 1.0, seed).normalized().unwrap();
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let x: Vec<f64> = (0..n).map(|i| scale * ((i as f64 * 0.37 + seed as f64 * 1e-19).sin().abs())).collect();
        let lambda: Vec<f64> = (0..n).map(|i| scale * ((i as f64 * 1.3).cos().abs())).collect();
        let s = State::new(x, lambda);
        let a = rhs_algorithm1(&prob, &op, eps, &s).unwrap();
        let b = rhs_algorithm1_per_agent(&prob, &op, eps, &s).unwrap();
        let mag = 1.0 + a.norm();
        prop_assert!(max_abs_diff(&a, &b) <= 1e-12 * mag);
    }

    #[test]
    fn euler_step_stays_in_lambda(
        n in 2usize..10,
        kind in 0u8..3,
        seed in any::<u64>(),
        h in 1e-4f64..=1.0,
        eps in prop::sample::select(vec![1.0, 0.1, 0.01]),
        scale in 0.0f64..3.0,
    ) {
        let prob = SlicingInstance::generate(n, seed).unwrap().to_problem().unwrap();
        let g = graph(kind, n, 1.0, seed).normalized().unwrap();
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let x: Vec<f64> = (0..n).map(|i| scale * (i % 3) as f64).collect();
        let lambda: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.0 } else { scale }).collect();
        let mut s = State::new(x, lambda);
        prop_assert!(in_lambda_set(&prob, &s));
        let d = rhs_algorithm1(&prob, &op, eps, &s).unwrap();
        s.axpy(h, &d);
        prop_assert!(in_lambda_set(&prob, &s));
    }

    #[test]
    fn g_is_strongly_monotone(n in 2usize..10, kind in 0u8..3, seed in any::<u64>()) {
        let prob = SlicingInstance::generate(n, seed).unwrap().to_problem().unwrap();
        let g = graph(kind, n, 1.0, seed).normalized().unwrap();
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let report = monotonicity_check(&prob, &op, 0.01, 20, seed).unwrap();
        prop_assert!(report.worst_slack >= -1e-9, "slack {}", report.worst_slack);
    }

    #[test]
    fn laplacian_rows_and_columns_sum_to_zero(n in 2usize..15, seed in any::<u64>(), density in 0.1f64..=1.0) {
        let g = Digraph::random_balanced(n, density, seed).unwrap();
        prop_assert!(g.is_weight_balanced());
        let lap = Laplacian::new(&g);
        let ones = vec![1.0; n];
        let mut out = vec![0.0; n];
        lap.apply(&ones, &mut out);
        prop_assert!(out.iter().all(|v| v.abs() <= 1e-12));
        lap.apply_transpose(&ones, &mut out);
        prop_assert!(out.iter().all(|v| v.abs() <= 1e-12));
        // Balanced graphs give a positive semidefinite symmetric part.
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        prop_assert!(lap.quadratic_form(&x) >= -1e-12);
    }

    #[test]
    fn lcp_iteration_matches_bruteforce(
        n in 2usize..7,
        kind in 0u8..3,
        seed in any::<u64>(),
        u in prop::collection::vec(-1.0f64..1.0, 7),
        slack in 0.0f64..0.3,
    ) {
        let g = graph(kind, n, 1.0, seed);
        let lap = Laplacian::new(&g);
        let op = KronLaplacian::new(&lap, 1);
        let mut u = u[..n].to_vec();
        let shift = u.iter().sum::<f64>().max(0.0) / n as f64 + slack;
        u.iter_mut().for_each(|v| *v -= shift);
        let eps = 0.1;
        let it = solve_lcp_laplacian(&op, &u, eps, 1e-12).unwrap();
        let q: Vec<f64> = u.iter().map(|v| -eps * v).collect();
        let bf = lcp_bruteforce(&q, lap.matrix()).unwrap();
        prop_assert!(!bf.is_empty());
        let lz = lap.matrix().mul_vec(&it.z);
        for s in &bf {
            let lz_bf = lap.matrix().mul_vec(&s.z);
            let d = lz.iter().zip(&lz_bf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(d <= 1e-8, "Lz mismatch {}", d);
        }
    }
}
