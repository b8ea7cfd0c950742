use proptest::prelude::*;

use fibertt::harness::random_tt;
use fibertt::pattern::{mask_apply, random_pattern, slice_observations, validate, FiberPattern};

fn arb_case() -> impl Strategy<Value = (Vec<usize>, Vec<bool>, Vec<usize>)> {
    (prop::collection::vec(2usize..5, 2..4), 1usize..4).prop_flat_map(|(base, r)| {
        let len: usize = base.iter().product();
        let order = base.len() + 1;
        let ranks: Vec<usize> = (0..=order).map(|n| if n == 0 || n == order { 1 } else { r.min(base[0]) }).collect();
        (Just(base), prop::collection::vec(prop::bool::weighted(0.7), len), Just(ranks))
    })
}

fn pattern(base: &[usize], mut flags: Vec<bool>) -> FiberPattern {
    if !flags.contains(&true) {
        flags[0] = true;
    }
    FiberPattern::new(base.to_vec(), flags).unwrap()
}

/// Transitive closure of the overlap relation over slices with at least `rank` rows.
fn brute_connected(sets: &[Vec<usize>], rank: usize) -> bool {
    let used: Vec<&Vec<usize>> = sets.iter().filter(|s| s.len() >= rank).collect();
    let n = used.len();
    if n == 0 {
        return false;
    }
    let mut reach = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            reach[a][b] = a == b || used[a].iter().filter(|r| used[b].contains(r)).count() >= rank;
        }
    }
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                reach[a][b] = reach[a][b] || (reach[a][k] && reach[k][b]);
            }
        }
    }
    reach[0].iter().all(|&x| x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_fibers_keeps_valid((base, flags, ranks) in arb_case(), extra in 0usize..1000) {
        let p = pattern(&base, flags.clone());
        let before = validate(&p, &ranks).unwrap().overall_valid;
        let mut more = p.flags().to_vec();
        let k = extra % more.len();
        more[k] = true;
        let after = validate(&pattern(&base, more), &ranks).unwrap().overall_valid;
        prop_assert!(!before || after);
    }

    #[test]
    fn connectivity_matches_closure((base, flags, ranks) in arb_case()) {
        let p = pattern(&base, flags);
        let report = validate(&p, &ranks).unwrap();
        for s in &report.splits {
            let sets = p.slice_row_sets(s.split).unwrap();
            prop_assert_eq!(s.overlap_graph_connected, brute_connected(&sets, s.rank));
        }
    }

    #[test]
    fn every_split_sees_each_fiber_once((base, flags, _ranks) in arb_case()) {
        let p = pattern(&base, flags);
        for split in 1..base.len() {
            let j: usize = base[..split].iter().product();
            let mut seen = vec![0usize; p.fiber_count()];
            for obs in slice_observations(&p, split).unwrap() {
                prop_assert!(obs.alpha.windows(2).all(|w| w[0] < w[1]));
                for &row in &obs.alpha {
                    seen[row + j * obs.slice_index] += 1;
                }
            }
            let expected: Vec<usize> = p.flags().iter().map(|&b| usize::from(b)).collect();
            prop_assert_eq!(seen, expected);
        }
    }
}

#[test]
fn row_counts_on_large_pattern() {
    let base = [15; 4];
    let p = random_pattern(&base, 0.4, 3).unwrap();
    assert_eq!(p.missing_count(), 20250);
    for split in 1..4 {
        let total: usize = slice_observations(&p, split).unwrap().iter().map(|o| o.alpha.len()).sum();
        let direct = p.flags().iter().filter(|&&b| b).count();
        assert_eq!(total, direct);
    }
}

#[test]
fn forty_percent_missing_on_15_to_the_5th_is_usually_valid() {
    let ranks = [1, 3, 3, 3, 4, 1];
    let valid = (0..30u64)
        .filter(|&s| validate(&random_pattern(&[15; 4], 0.4, s).unwrap(), &ranks).unwrap().overall_valid)
        .count();
    assert!(valid >= 29, "{valid}/30 valid");
}

#[test]
fn small_examples() {
    let full = FiberPattern::full(vec![3, 4]).unwrap();
    assert!(validate(&full, &[1, 2, 3, 1]).unwrap().overall_valid);
    let sets = full.slice_row_sets(1).unwrap();
    assert!(sets.iter().all(|s| *s == vec![0, 1, 2]));

    let mut one = vec![false; 12];
    one[5] = true;
    let single = FiberPattern::new(vec![3, 4], one).unwrap();
    let obs = slice_observations(&single, 1).unwrap();
    assert_eq!(obs.len(), 1);
    assert_eq!(obs[0].alpha.len(), 1);

    let mut few = vec![false; 12];
    few[0] = true;
    few[1] = true;
    let report = validate(&FiberPattern::new(vec![3, 4], few).unwrap(), &[1, 3, 3, 1]).unwrap();
    assert!(!report.last_core_ok && !report.overall_valid);
    assert!(report.messages.iter().any(|m| m.contains("last core")));

    assert_eq!(random_pattern(&[5, 5], 0.0, 1).unwrap().missing_count(), 0);
    assert_eq!(random_pattern(&[6, 7], 0.3, 9), random_pattern(&[6, 7], 0.3, 9));
}

#[test]
fn mask_blanks_whole_fibers() {
    let x = random_tt(&[4, 5, 6], &[1, 2, 2, 1], 1).unwrap().to_dense();
    let p = random_pattern(&[4, 5], 0.35, 2).unwrap();
    let m = mask_apply(&x, &p).unwrap();
    assert_eq!(m.values().iter().filter(|v| v.is_nan()).count(), p.missing_count() * 6);
    let full = FiberPattern::full(vec![4, 5]).unwrap();
    assert_eq!(mask_apply(&x, &full).unwrap(), x);
}
