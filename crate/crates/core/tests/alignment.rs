mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spnfault::conformance::{self, Aligner, SearchLimits};
use spnfault::discovery::tree_to_petri;

fn instance(seed: u64) -> Option<(spnfault::petri::PetriNet, Vec<String>, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves = 1 + (seed % 6) as usize;
    let net = tree_to_petri(&common::random_tree(&mut rng, leaves));
    let base = common::random_trace(&net, &mut rng, 10)?;
    let noisy = common::perturb(&base, &mut rng, 10);
    Some((net, base, noisy))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn playouts_fit_perfectly(seed in any::<u64>()) {
        if let Some((net, base, _)) = instance(seed) {
            let al = conformance::align(&base, &net).unwrap();
            prop_assert_eq!(al.cost, 0);
            prop_assert_eq!(conformance::fitness(&base, &net).unwrap(), 1.0);
        }
    }

    #[test]
    fn cost_is_bounded_by_worst_case(seed in any::<u64>()) {
        if let Some((net, _, noisy)) = instance(seed) {
            let al = conformance::align(&noisy, &net).unwrap();
            let worst = conformance::worst_alignment_cost(&noisy, &net).unwrap();
            prop_assert!(al.cost <= worst);
            let f = conformance::fitness(&noisy, &net).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(common::check_alignment(&al, &noisy, &net).is_ok());
        }
    }

    #[test]
    fn one_edit_costs_at_most_two(seed in any::<u64>()) {
        // A single insertion is repaired by one log move; anything more
        // would mean the search missed a cheaper path.
        if let Some((net, mut base, _)) = instance(seed) {
            let at = (seed as usize) % (base.len() + 1);
            base.insert(at, "zz".into());
            prop_assert_eq!(conformance::align(&base, &net).unwrap().cost, 1);
        }
    }
}

#[test]
fn reused_aligner_matches_one_shot() {
    for seed in 0..40 {
        let Some((net, _, noisy)) = instance(seed) else {
            continue;
        };
        let aligner = Aligner::new(&net, SearchLimits::default()).unwrap();
        assert_eq!(
            aligner.align(&noisy).unwrap().cost,
            conformance::align(&noisy, &net).unwrap().cost
        );
        assert_eq!(
            aligner.worst_cost(&noisy),
            conformance::worst_alignment_cost(&noisy, &net).unwrap()
        );
    }
}

#[test]
fn empty_trace_costs_the_shortest_run() {
    for seed in 0..40 {
        let Some((net, _, _)) = instance(seed) else {
            continue;
        };
        let aligner = Aligner::new(&net, SearchLimits::default()).unwrap();
        assert_eq!(aligner.align(&[]).unwrap().cost, aligner.shortest_visible());
    }
}
