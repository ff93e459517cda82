use polyframe::evaluation::{ndcg5, GainMode, RelevanceProfile};
use polyframe::fusion::{borda_fuse, FusionConfig};
use polyframe::similarity::{ScoreStream, StreamName};
use proptest::prelude::*;

fn profiles() -> impl Strategy<Value = RelevanceProfile> {
    prop_oneof![Just(GainMode::Exponential), Just(GainMode::Linear)].prop_map(|gain_mode| RelevanceProfile {
        gains: vec![4.0, 3.0, 2.0, 1.0, 0.0],
        gain_mode,
    })
}

fn permutations() -> impl Strategy<Value = Vec<usize>> {
    Just((0..5).collect::<Vec<usize>>()).prop_shuffle()
}

fn streams() -> impl Strategy<Value = Vec<ScoreStream>> {
    let scores = || prop::collection::vec(-1.0f64..1.0, 5);
    (scores(), scores(), scores(), 0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0).prop_map(|(a, b, c, wa, wb, wc)| {
        vec![
            ScoreStream::new(StreamName::Vision, a, wa),
            ScoreStream::new(StreamName::TextM3, b, wb),
            ScoreStream::new(StreamName::TextVl, c, wc),
        ]
    })
}

proptest! {
    #[test]
    fn ndcg_is_bounded_and_maximal_only_at_gold(pred in permutations(), profile in profiles()) {
        let gold: Vec<usize> = (0..5).collect();
        let v = ndcg5(&pred, &gold, &profile).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        if pred == gold {
            prop_assert!((v - 1.0).abs() < 1e-12);
        } else {
            prop_assert!(v < 1.0);
        }
    }

    #[test]
    fn ndcg_ignores_candidate_labels(pred in permutations(), relabel in permutations(), profile in profiles()) {
        let gold: Vec<usize> = (0..5).collect();
        let a = ndcg5(&pred, &gold, &profile).unwrap();
        let pred2: Vec<usize> = pred.iter().map(|&c| relabel[c]).collect();
        let gold2: Vec<usize> = gold.iter().map(|&c| relabel[c]).collect();
        prop_assert_eq!(a, ndcg5(&pred2, &gold2, &profile).unwrap());
    }

    #[test]
    fn fixing_an_inversion_never_lowers_ndcg(pred in permutations(), i in 0usize..4, profile in profiles()) {
        let gold: Vec<usize> = (0..5).collect();
        let mut fixed = pred.clone();
        // gold index doubles as relevance rank here
        if fixed[i] > fixed[i + 1] {
            fixed.swap(i, i + 1);
            prop_assert!(ndcg5(&fixed, &gold, &profile).unwrap() > ndcg5(&pred, &gold, &profile).unwrap());
        }
    }

    #[test]
    fn fused_scores_are_bounded_and_order_is_a_permutation(s in streams()) {
        let r = borda_fuse(&s, &FusionConfig::default()).unwrap();
        let mut sorted = r.order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..5).collect::<Vec<_>>());
        prop_assert!(r.borda_scores.iter().all(|&x| (-1e-12..=4.0 + 1e-12).contains(&x)));
        // sum of points is m(m-1)/2 under normalized weights
        let total: f64 = r.borda_scores.iter().sum();
        prop_assert!((total - 10.0).abs() < 1e-9);
        for w in r.order.windows(2) {
            prop_assert!(r.borda_scores[w[0]] >= r.borda_scores[w[1]]);
        }
    }

    #[test]
    fn uniform_weight_scaling_is_invisible(s in streams(), k in 0.1f64..10.0) {
        let scaled: Vec<ScoreStream> = s.iter().map(|x| ScoreStream::new(x.name, x.scores.clone(), x.weight * k / 10.0)).collect();
        let base: Vec<ScoreStream> = s.iter().map(|x| ScoreStream::new(x.name, x.scores.clone(), x.weight / 10.0)).collect();
        let a = borda_fuse(&base, &FusionConfig::default()).unwrap();
        let b = borda_fuse(&scaled, &FusionConfig::default()).unwrap();
        for (x, y) in a.borda_scores.iter().zip(&b.borda_scores) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn unanimous_streams_decide_the_order(scores in prop::collection::vec(-1.0f64..1.0, 5), w in prop::collection::vec(0.01f64..1.0, 3)) {
        let s: Vec<ScoreStream> = [StreamName::Vision, StreamName::TextM3, StreamName::TextVl]
            .iter()
            .zip(&w)
            .map(|(&n, &wi)| ScoreStream::new(n, scores.clone(), wi))
            .collect();
        let r = borda_fuse(&s, &FusionConfig::default()).unwrap();
        prop_assert_eq!(r.order, polyframe::fusion::order_from_scores(&scores).unwrap());
    }
}
