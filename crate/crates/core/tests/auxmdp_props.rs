use metastable_mdp::auxmdp::{self, build_mdp, kernel, AuxAction, AuxState, RewardSpec};
use metastable_mdp::solver::policy_evaluation;
use metastable_mdp::verify::{claimed_policy_r1, claimed_policy_r2, ClaimedValues};
use num_traits::One;
use proptest::prelude::*;

fn l_and_state() -> impl Strategy<Value = (usize, AuxState)> {
    (6usize..=14).prop_flat_map(|l| {
        let s = auxmdp::sides(l);
        (Just(l), proptest::sample::select(s.clone()), proptest::sample::select(s)).prop_map(|(l, i, j)| (l, AuxState::new(i, j)))
    })
}

proptest! {
    #[test]
    fn rows_are_distributions_on_states((l, s) in l_and_state()) {
        for a in auxmdp::action_set(l, s).unwrap() {
            let row = kernel(l, s, a).unwrap();
            prop_assert!(row.total().is_one());
            for (t, _) in &row.entries {
                prop_assert!(t.is_valid(l));
            }
        }
    }

    #[test]
    fn kernel_commutes_with_transposition((l, s) in l_and_state()) {
        for a in auxmdp::action_set(l, s).unwrap() {
            prop_assert_eq!(kernel(l, s.transpose(), a.transpose()).unwrap(), kernel(l, s, a).unwrap().transpose());
        }
    }

    #[test]
    fn claimed_policies_are_feasible_and_symmetric((l, s) in l_and_state()) {
        let acts = auxmdp::action_set(l, s).unwrap();
        for a in [claimed_policy_r1(l, s), claimed_policy_r2(l, s)] {
            prop_assert!(acts.contains(&a));
        }
        if s.i != s.j {
            prop_assert_eq!(claimed_policy_r2(l, s.transpose()), claimed_policy_r2(l, s).transpose());
        }
    }

    #[test]
    fn values_are_transposition_symmetric(l in 6usize..=12, lambda in 0.05f64..0.99, u in 0.5f64..2.0) {
        let cv = ClaimedValues::new(l, lambda, u).unwrap();
        for s in auxmdp::states(l) {
            prop_assert!((cv.r2(s.i, s.j) - cv.r2(s.j, s.i)).abs() < 1e-9 * u / (1.0 - lambda));
        }
    }

    #[test]
    fn r2_values_scale_linearly_with_u(l in 6usize..=10, lambda in 0.05f64..0.95, u in 0.1f64..5.0) {
        let one = build_mdp(l, lambda, RewardSpec::r2(1.0)).unwrap();
        let many = build_mdp(l, lambda, RewardSpec::r2(u)).unwrap();
        let pi = one.policy_from(|s| claimed_policy_r2(l, s)).unwrap();
        let (a, b) = (policy_evaluation(&one.mdp, &pi).unwrap(), policy_evaluation(&many.mdp, &pi).unwrap());
        for k in 0..a.0.len() {
            prop_assert!((u * a.0[k] - b.0[k]).abs() < 1e-9 * (1.0 + b.0[k].abs()));
        }
    }

    #[test]
    fn r1_full_box_value_is_geometric(l in 6usize..=10, lambda in 0.01f64..0.99) {
        let cv = ClaimedValues::new(l, lambda, 1.0).unwrap();
        prop_assert!((cv.r1(l, l) - 1.0 / (1.0 - lambda)).abs() < 1e-9 / (1.0 - lambda));
        prop_assert!(cv.r2(l, l).abs() < 1e-12);
    }
}

#[test]
fn r2_absorbing_stay_costs_nothing() {
    assert_eq!(auxmdp::reward(8, AuxState::new(8, 8), AuxAction::Stay, RewardSpec::r2(1.0)).unwrap(), 0.0);
}
