use evcs_harness::stats::{summarize, Phase};
use proptest::prelude::*;

fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

proptest! {
    #[test]
    fn summary_matches_sorted_reference(v in prop::collection::vec(-1e6..1e6f64, 1..400)) {
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let s = summarize("x", Phase::Attack, &v).unwrap();
        prop_assert_eq!(s.n, v.len());
        prop_assert_eq!(s.min, sorted[0]);
        prop_assert_eq!(s.q1, sorted_quantile(&sorted, 0.25));
        prop_assert_eq!(s.median, sorted_quantile(&sorted, 0.5));
        prop_assert_eq!(s.q3, sorted_quantile(&sorted, 0.75));
        prop_assert_eq!(s.max, sorted[v.len() - 1]);
    }

    #[test]
    fn summary_is_ordered_and_permutation_invariant(mut v in prop::collection::vec(-1e3..1e3f64, 1..200), rot in 0usize..200) {
        let s = summarize("x", Phase::Normal, &v).unwrap();
        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        let k = rot % v.len();
        v.rotate_left(k);
        v.reverse();
        prop_assert_eq!(summarize("x", Phase::Normal, &v).unwrap(), s);
    }
}
