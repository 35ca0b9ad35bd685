//! Property tests for the structural invariants.

use proptest::prelude::*;

use xfhedge_core::baselines::{best_in_hindsight, brute_force_best, CumulativeLoss};
use xfhedge_core::bregman::{divergence, project_onto_constraint};
use xfhedge_core::formulation::{build_identity, AugmentedPoint};
use xfhedge_core::learner::sample_object;
use xfhedge_core::sorting_networks::{build_bubble, build_odd_even_merge};

fn formulation(n: usize) -> xfhedge_core::formulation::ExtendedFormulation {
    build_identity(&build_odd_even_merge(n).to_reflection_order().unwrap()).unwrap()
}

proptest! {
    #[test]
    fn divergence_nonnegative(
        a in proptest::collection::vec(0.0f64..5.0, 6),
        b in proptest::collection::vec(0.01f64..5.0, 6),
    ) {
        let d = divergence(&a, &b);
        prop_assert!(d.value() >= 0.0);
        prop_assert_eq!(divergence(&b, &b).value(), 0.0);
    }

    #[test]
    fn single_facet_projection_invariants(
        coords in proptest::collection::vec(0.01f64..8.0, 4 + 2 * 5),
        facet in 0usize..9,
    ) {
        // n = 4 batcher: m = 5, so 9 facets over 14 coordinates
        let ext = formulation(4);
        let csts = ext.constraints();
        let w = AugmentedPoint {
            v: coords[0..4].to_vec(),
            x: coords[4..9].to_vec(),
            s: coords[9..14].to_vec(),
        };
        let cst = &csts[facet];
        let once = project_onto_constraint(&w, cst).unwrap();
        prop_assert!(once.min_coordinate() >= 0.0);
        prop_assert!(cst.residual(&once).abs() <= 1e-12 * cst.rhs().max(1.0));
        let twice = project_onto_constraint(&once, cst).unwrap();
        for i in 0..once.dim() {
            prop_assert!((once.get(i) - twice.get(i)).abs() <= 1e-12);
        }
    }

    #[test]
    fn decision_corners_are_exact_permutations(bits in proptest::collection::vec(any::<bool>(), 9)) {
        let ext = formulation(5);
        prop_assert_eq!(ext.m(), 9);
        let (h, w) = ext.corner_from_decisions(&bits);
        let mut key: Vec<i64> = h.iter().map(|&v| v as i64).collect();
        key.sort_unstable();
        prop_assert_eq!(key, vec![1, 2, 3, 4, 5]);
        for c in ext.constraints() {
            prop_assert_eq!(c.residual(&w), 0.0);
        }
    }

    #[test]
    fn sampler_output_is_always_a_permutation(
        x in proptest::collection::vec(0.0f64..3.0, 9),
        s in proptest::collection::vec(0.0f64..3.0, 9),
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let ext = formulation(5);
        let w = AugmentedPoint { v: vec![0.0; 5], x, s };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut h = sample_object(&ext, &w, &mut rng);
        h.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(h, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn hindsight_oracle_matches_brute_force(
        sums in proptest::collection::vec(0.0f64..10.0, 1..=5),
    ) {
        let l = CumulativeLoss::from_sums(sums, 10);
        let fast = best_in_hindsight(&l);
        let slow = brute_force_best(&l).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn reflection_order_double_reversal(n in 1usize..10) {
        for net in [build_bubble(n), build_odd_even_merge(n)] {
            let seq = net.to_reflection_order().unwrap();
            let mut back = seq.comparators().to_vec();
            back.reverse();
            prop_assert_eq!(back, net.comparators().to_vec());
        }
    }
}
