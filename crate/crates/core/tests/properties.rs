mod common;

use num_traits::{One, Zero};
use proptest::prelude::*;
use strategic::criteria::{cvar, var, FiniteDistribution};
use strategic::game::{solve_matrix_game, MatrixGame};
use strategic::measure::strategic_measure;
use strategic::PolicyClass;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_measures_have_unit_mass(seed in any::<u64>(), class in 0usize..5, h in 1usize..4) {
        let mut r = rng(seed);
        let class = PolicyClass::ALL[class];
        let model = random_mdp(&mut r, 3, 2, 2);
        let p0 = random_p0(&mut r, 3);
        let pi = random_policy(&mut r, &model, class, h, &support(&p0), 0.5);
        let p = strategic_measure(&model, &pi, &p0, h).unwrap();
        let total = p.support.values().fold(Q::zero(), |a, w| a + w);
        prop_assert!(total.is_one());
        prop_assert!(p.support.keys().all(|k| k.len() == 2 * h));
    }

    #[test]
    fn game_value_matches_vertex_enumeration(
        g in prop::collection::vec(prop::collection::vec(-4i32..5, 3), 1..4),
    ) {
        let payoff: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let s = solve_matrix_game(&MatrixGame::new(payoff.clone()).unwrap());
        prop_assert!((s.value - game_value_oracle(&payoff)).abs() <= 1e-9);
    }

    #[test]
    fn cvar_is_monotone_in_alpha(atoms in prop::collection::vec((0u8..20, 1u8..10), 1..6)) {
        let total: f64 = atoms.iter().map(|&(_, w)| w as f64).sum();
        let d = FiniteDistribution::new(atoms.iter().map(|&(v, w)| (v as f64, w as f64 / total)).collect()).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=10 {
            let alpha = k as f64 / 10.0;
            let c = cvar(&d, alpha).unwrap();
            prop_assert!(c <= prev + 1e-12);
            prop_assert!(c + 1e-12 >= var(&d, alpha).unwrap());
            prev = c;
        }
    }
}
