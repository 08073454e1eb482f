mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlg::tracklet::{tracklet_iou, tracklet_nms};

fn kept_ids(set: &tlg::TrackletSet) -> Vec<u64> {
    set.tracklets.iter().map(|t| t.id.0).collect()
}

#[test]
fn matches_greedy_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..60 {
        let (t, w, h) = (
            rng.random_range(1..=5),
            rng.random_range(1..=10),
            rng.random_range(1..=10),
        );
        let n = rng.random_range(1..=20);
        let items = random_tracklets(&mut rng, n, t, w, h);
        let thr = [0.0, 0.3, 0.5, 0.7, 1.0][rng.random_range(0..5)];
        let max_keep = rng.random_range(1..=12);
        let got = tracklet_nms(&to_set(&items, t, w, h), thr, max_keep).unwrap();
        assert_eq!(kept_ids(&got), reference_nms(&items, thr, max_keep), "case {case}");
    }
}

proptest! {
    #[test]
    fn kept_tracklets_are_mutually_distinct(seed in any::<u64>(), thr in 0.05f64..1.0, max_keep in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=16);
        let items = random_tracklets(&mut rng, n, 3, 8, 8);
        let set = to_set(&items, 3, 8, 8);
        let kept = tracklet_nms(&set, thr, max_keep).unwrap();
        prop_assert!(!kept.is_empty() && kept.len() <= max_keep.min(n));
        for (i, a) in kept.tracklets.iter().enumerate() {
            prop_assert!(set.get(a.id).is_some());
            for b in &kept.tracklets[i + 1..] {
                prop_assert!(tracklet_iou(a, b).unwrap() < thr);
            }
        }
        // NMS is idempotent
        let again = tracklet_nms(&kept, thr, max_keep).unwrap();
        prop_assert_eq!(kept_ids(&again), kept_ids(&kept));
        // scores never increase along the selection order
        let scores: Vec<f64> = kept.tracklets.iter().map(|t| t.score()).collect();
        prop_assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }
}
