use proptest::prelude::*;

use sortnet::encoder::{expanded_len, min_gap, poly_expand};
use sortnet::ensemble::{combine_votes, native_rank_encode, ViewVote};
use sortnet::layer::{RankingFilter, SortLayer, VoteMatrix};
use sortnet::perm::{
    adjacent_transpose_augment, argsort_desc, footrule, kendall_tau, lq_distance, motion, Norm,
    Permutation,
};
use sortnet::SeededRng;

fn perm(v: usize) -> impl Strategy<Value = Permutation> {
    Just((0..v).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|items| Permutation::new(items).unwrap())
}

fn perm_pair() -> impl Strategy<Value = (Permutation, Permutation)> {
    (2usize..40).prop_flat_map(|v| (perm(v), perm(v)))
}

fn perm_triple() -> impl Strategy<Value = (Permutation, Permutation, Permutation)> {
    (2usize..30).prop_flat_map(|v| (perm(v), perm(v), perm(v)))
}

proptest! {
    #[test]
    fn footrule_is_a_metric((a, b, c) in perm_triple()) {
        let ab = footrule(&a, &b).unwrap();
        prop_assert_eq!(footrule(&a, &a).unwrap(), 0);
        prop_assert_eq!(ab, footrule(&b, &a).unwrap());
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(footrule(&a, &c).unwrap() <= ab + footrule(&b, &c).unwrap());
    }

    #[test]
    fn footrule_is_even_and_bounded((a, b) in perm_pair()) {
        let v = a.len() as u64;
        let f = footrule(&a, &b).unwrap();
        prop_assert_eq!(f % 2, 0);
        prop_assert!(f <= v * v / 2);
    }

    #[test]
    fn footrule_sandwiches_kendall((a, b) in perm_pair()) {
        let f = footrule(&a, &b).unwrap();
        let k = kendall_tau(&a, &b).unwrap();
        prop_assert!(k <= f && f <= 2 * k);
    }

    #[test]
    fn motion_sums_to_zero_and_matches_footrule((a, b) in perm_pair()) {
        let m = motion(&a, &b).unwrap();
        prop_assert_eq!(m.iter().sum::<i64>(), 0);
        prop_assert_eq!(lq_distance(&a, &b, Norm::L1).unwrap() as u64, footrule(&a, &b).unwrap());
        for (p, &item) in a.items().iter().enumerate() {
            prop_assert_eq!(p as i64 + m[p], b.rank_of(item).unwrap() as i64);
        }
        let l0 = lq_distance(&a, &b, Norm::L0).unwrap();
        let l2 = lq_distance(&a, &b, Norm::L2).unwrap();
        prop_assert!(l0 <= a.len() as f64);
        prop_assert!(l2 <= footrule(&a, &b).unwrap() as f64 + 1e-9);
    }

    #[test]
    fn augmentation_moves_at_most_two_per_swap(p in (2usize..30).prop_flat_map(perm), count in 0usize..10, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let out = adjacent_transpose_augment(&p, count, &mut rng);
        prop_assert!(footrule(&p, &out).unwrap() <= 2 * count as u64);
        if count == 1 {
            prop_assert_eq!(footrule(&p, &out).unwrap(), 2);
        }
    }

    #[test]
    fn argsort_survives_sub_half_gap_noise(
        z in prop::collection::vec(-100.0f64..100.0, 2..20),
        noise in prop::collection::vec(-0.999f64..0.999, 20),
    ) {
        let gap = min_gap(&z).unwrap();
        prop_assume!(gap > 1e-9);
        let noisy: Vec<f64> = z.iter().zip(&noise).map(|(v, u)| v + u * gap / 2.0).collect();
        prop_assert_eq!(argsort_desc(&z).unwrap(), argsort_desc(&noisy).unwrap());
    }

    #[test]
    fn argsort_output_is_descending(z in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        let p = argsort_desc(&z).unwrap();
        for w in p.items().windows(2) {
            prop_assert!(z[w[0]] > z[w[1]] || (z[w[0]] == z[w[1]] && w[0] < w[1]));
        }
    }

    #[test]
    fn accumulated_filter_stays_a_permutation(
        (init, x) in (2usize..20).prop_flat_map(|v| (perm(v), perm(v))),
        eta in 0.01f64..5.0,
        steps in 1usize..6,
    ) {
        let mut f = RankingFilter::new(init);
        let phi = VoteMatrix::from_input(x.items(), x.len()).unwrap();
        let before = footrule(f.ordering(), &x).unwrap();
        for _ in 0..steps {
            f.accumulate(&phi, eta).unwrap();
            f.reorder().unwrap();
        }
        prop_assert!(Permutation::new(f.ordering().items().to_vec()).is_ok());
        prop_assert!(footrule(f.ordering(), &x).unwrap() <= before);
    }

    #[test]
    fn layer_output_sorts_distances((x, seed) in ((2usize..16).prop_flat_map(perm), any::<u64>()), n in 1usize..12) {
        let mut rng = SeededRng::new(seed);
        let layer = SortLayer::random(n, x.len(), Norm::L1, &mut rng).unwrap();
        let out = layer.forward(&x).unwrap();
        prop_assert_eq!(out.output.len(), n);
        for w in out.output.items().windows(2) {
            let (a, b) = (out.distances[w[0]], out.distances[w[1]]);
            prop_assert!(a < b || (a == b && w[0] < w[1]));
        }
    }

    #[test]
    fn expansion_length(x in prop::collection::vec(-3.0f64..3.0, 1..6), k in 1usize..4) {
        prop_assert_eq!(poly_expand(&x, k).unwrap().len(), expanded_len(x.len(), k));
    }

    #[test]
    fn native_rank_ignores_increasing_maps(x in prop::collection::vec(0.001f64..1e3, 2..30)) {
        let clean = native_rank_encode(&x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * 100.0).collect();
        let logged: Vec<f64> = x.iter().map(|v| v.ln_1p()).collect();
        prop_assert_eq!(&clean, &native_rank_encode(&scaled).unwrap());
        prop_assert_eq!(&clean, &native_rank_encode(&logged).unwrap());
    }

    #[test]
    fn vote_is_order_free(
        votes in prop::collection::vec((0usize..3, prop::collection::vec(0.0f64..1.0, 3)), 1..9),
        seed in any::<u64>(),
    ) {
        let votes: Vec<ViewVote> = votes
            .into_iter()
            .map(|(class, normalized_distances)| ViewVote { class, normalized_distances })
            .collect();
        let mut shuffled = votes.clone();
        SeededRng::new(seed).shuffle(&mut shuffled);
        prop_assert_eq!(combine_votes(&votes, 3), combine_votes(&shuffled, 3));
        prop_assert_eq!(combine_votes(&votes[..1], 3), votes[0].class);
    }
}
