mod common;

use common::random_mdp;
use metastable_mdp::solver::{
    bellman_residual, enumerate_policies, greedy_policy, policy_evaluation, policy_iteration, value_iteration,
    value_iteration_with, Sweep, SolverRegistry, ValueFn,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bellman_operator_is_a_monotone_contraction(seed in any::<u64>(), n in 1usize..7, lambda in 0.05f64..0.99, shift in proptest::collection::vec(0.0f64..3.0, 7)) {
        let m = random_mdp(seed, n, 3, lambda);
        let v = ValueFn((0..n).map(|k| (k as f64).sin()).collect());
        let w = ValueFn(v.0.iter().zip(&shift).map(|(x, s)| x + s).collect());
        let (tv, tw) = (m.bellman(&v), m.bellman(&w));
        prop_assert!(tv.sup_distance(&tw) <= lambda * v.sup_distance(&w) + 1e-12);
        for k in 0..n {
            prop_assert!(tv.0[k] <= tw.0[k] + 1e-12);
        }
    }

    #[test]
    fn solvers_agree(seed in any::<u64>(), n in 1usize..7, lambda in 0.05f64..0.95) {
        let m = random_mdp(seed, n, 3, lambda);
        let (vi, _) = value_iteration(&m, 1e-11).unwrap();
        let (gs, _) = value_iteration_with(&m, 1e-11, Sweep::GaussSeidel).unwrap();
        let (_, pv, _) = policy_iteration(&m).unwrap();
        let (_, ev, _) = enumerate_policies(&m, 1 << 20).unwrap();
        prop_assert!(vi.sup_distance(&pv) < 1e-8);
        prop_assert!(gs.sup_distance(&pv) < 1e-8);
        prop_assert!(ev.sup_distance(&pv) < 1e-8);
        prop_assert!(bellman_residual(&m, &pv) < 1e-10);
    }

    #[test]
    fn evaluation_is_a_fixed_point(seed in any::<u64>(), n in 1usize..7, lambda in 0.05f64..0.999) {
        let m = random_mdp(seed, n, 3, lambda);
        let pi = greedy_policy(&m, &ValueFn::zeros(n));
        let v = policy_evaluation(&m, &pi).unwrap();
        for s in 0..n {
            let q = m.q_value(&v, s, pi.0[s]);
            prop_assert!((q - v.0[s]).abs() <= 1e-12 * m.value_scale().max(1.0));
        }
    }
}

#[test]
fn registry_solvers_agree_on_one_instance() {
    let m = random_mdp(3, 6, 3, 0.9);
    let reg = SolverRegistry::default();
    let sols: Vec<_> = reg.names().iter().map(|n| reg.get(n).unwrap().solve(&m, 1e-11).unwrap()).collect();
    for s in &sols[1..] {
        assert!(s.values.sup_distance(&sols[0].values) < 1e-8);
    }
}
