use proptest::prelude::*;

use lssvm_ode::harness::{run, RunConfig};
use lssvm_ode::kernel::RbfKernel;
use lssvm_ode::metrics::compute_errors;
use lssvm_ode::nystrom::{select_landmarks, NystromFeatureMap, SamplingStrategy, DEFAULT_DROP_TOL};
use lssvm_ode::ode_model::linspace;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn error_norms_are_ordered(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..100)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_errors(&a, &b).unwrap();
        // equal-magnitude errors make mae and rmse agree up to rounding
        prop_assert!(m.mae <= m.rmse * (1.0 + 1e-12));
        prop_assert!(m.rmse <= m.linf * (1.0 + 1e-12));
    }

    #[test]
    fn kernel_is_symmetric_and_bounded(u in -10.0f64..10.0, v in -10.0f64..10.0, s in 0.1f64..20.0) {
        let k = RbfKernel::new(s).unwrap();
        prop_assert_eq!(k.eval(u, v), k.eval(v, u));
        prop_assert!((0.0..=1.0).contains(&k.eval(u, v)));
        // odd derivatives flip sign when the arguments swap
        let d1 = k.eval_deriv(1, u, v).unwrap();
        prop_assert!((d1 + k.eval_deriv(1, v, u).unwrap()).abs() <= 1e-12 * (1.0 + d1.abs()));
    }

    #[test]
    fn landmarks_are_distinct_grid_points(n in 10usize..200, frac in 0.05f64..1.0, seed in any::<u64>()) {
        let grid = linspace(0.0, 1.0, n);
        let m = ((n as f64 * frac) as usize).max(2);
        let k = RbfKernel::new(1.0).unwrap();
        for strategy in [SamplingStrategy::Equidistant, SamplingStrategy::Random { seed }] {
            let lm = select_landmarks(strategy, &k, &grid, m).unwrap();
            prop_assert_eq!(lm.len(), m);
            prop_assert!(lm.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(lm.iter().all(|x| grid.contains(x)));
        }
    }

    #[test]
    fn feature_inner_products_approximate_the_kernel(s in 0.5f64..5.0, t in 0.0f64..3.0) {
        let k = RbfKernel::new(s).unwrap();
        let lm = linspace(0.0, 3.0, 40);
        let map = NystromFeatureMap::build(k.clone(), &lm, DEFAULT_DROP_TOL).unwrap();
        let phi = map.feature(t);
        let psi = map.feature(lm[17]);
        let dot: f64 = phi.iter().zip(&psi).map(|(a, b)| a * b).sum();
        prop_assert!((dot - k.eval(t, lm[17])).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn same_seed_gives_identical_metrics(seed in any::<u64>()) {
        let mut cfg = RunConfig::defaults(2).unwrap();
        cfg.n = 300;
        cfg.m = 25;
        cfg.strategy = lssvm_ode::StrategyKind::Random;
        cfg.seed = seed;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        prop_assert_eq!(a.metrics, b.metrics);
        prop_assert_eq!(a.model, b.model);
    }
}
