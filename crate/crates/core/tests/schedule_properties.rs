mod common;

use circulant::schedule::{ceil_log2, Invariant};
use circulant::{ReductionTree, Scheme, SkipSchedule};
use proptest::prelude::*;

/// Independent representability check: enumerate every subset of skips.
fn subset_sums(skips: &[usize]) -> Vec<bool> {
    let total: usize = skips.iter().sum();
    let mut hit = vec![false; total + 1];
    for mask in 0u32..(1 << skips.len()) {
        let s: usize = (0..skips.len()).filter(|k| mask >> k & 1 == 1).map(|k| skips[k]).sum();
        hit[s] = true;
    }
    hit
}

#[test]
fn halving_round_count_and_volume_up_to_4096() {
    for p in 1..=4096 {
        let s = SkipSchedule::halving(p).unwrap();
        assert_eq!(s.rounds(), ceil_log2(p), "p={p}");
        assert_eq!(s.run_lengths().iter().sum::<usize>(), p - 1, "p={p}");
    }
}

#[test]
fn halving_runs_never_exceed_half() {
    for p in 1..=1024usize {
        let max = SkipSchedule::halving(p).unwrap().run_lengths().into_iter().max().unwrap_or(0);
        assert!(max <= p.div_ceil(2), "p={p}: run {max}");
    }
}

#[test]
fn log_schedules_match_subset_enumeration() {
    // ⌈log₂ p⌉ skips are few enough to enumerate all 2^q subsets.
    for p in 1..=300 {
        for scheme in [Scheme::Halving, Scheme::Doubling] {
            let s = SkipSchedule::generate(scheme, p).unwrap();
            let hit = subset_sums(s.skips());
            for i in 1..p {
                assert!(hit.get(i).copied().unwrap_or(false), "{scheme} p={p} i={i}");
            }
            assert!(s.validate().is_valid());
        }
    }
}

#[test]
fn doubling_and_linear_round_counts() {
    for p in 1..=1024 {
        assert_eq!(SkipSchedule::doubling(p).unwrap().rounds(), ceil_log2(p));
        assert_eq!(SkipSchedule::linear(p).unwrap().rounds(), p - 1);
    }
}

#[test]
fn tree_paths_sum_to_labels_for_every_generator() {
    for p in [1usize, 2, 3, 5, 16, 22, 63, 64, 65, 100, 255] {
        for scheme in Scheme::GENERATED {
            let tree = ReductionTree::build(&SkipSchedule::generate(scheme, p).unwrap()).unwrap();
            assert_eq!(tree.edges().len(), p.saturating_sub(1));
            for i in 0..p {
                let path = tree.path_skips(i);
                assert_eq!(path.iter().sum::<usize>(), i, "{scheme} p={p} i={i}");
                let mut uniq = path.clone();
                uniq.sort_unstable();
                uniq.dedup();
                assert_eq!(uniq.len(), path.len(), "{scheme} p={p} i={i}: repeated skip");
                let child_skips: Vec<usize> = tree.children(i).iter().map(|&c| tree.edge_skip(c)).collect();
                assert!(child_skips.windows(2).all(|w| w[0] > w[1]), "children hooked in round order");
            }
        }
    }
}

#[test]
fn reduction_order_covers_every_input_once() {
    for p in [1usize, 2, 4, 7, 22, 31] {
        let tree = ReductionTree::build(&SkipSchedule::halving(p).unwrap()).unwrap();
        for r in 0..p {
            let mut leaves = tree.reduction_order(r).unwrap().leaves();
            leaves.sort_unstable();
            assert_eq!(leaves, (0..p).collect::<Vec<_>>());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The validator's verdict on arbitrary skip lists agrees with tree
    /// construction and with brute-force subset enumeration.
    #[test]
    fn validator_agrees_with_tree_builder(p in 1usize..40, raw in prop::collection::btree_set(1usize..40, 0..6)) {
        let skips: Vec<usize> = raw.into_iter().rev().collect();
        let sched = SkipSchedule::custom(p, skips.clone()).unwrap();
        let report = sched.validate();
        let hit = subset_sums(&skips);
        let brute: Vec<usize> = (1..p).filter(|&i| !hit.get(i).copied().unwrap_or(false)).collect();
        prop_assert_eq!(&report.unrepresentable, &brute);
        prop_assert_eq!(report.is_valid(), ReductionTree::build(&sched).is_ok());
        if report.is_valid() {
            prop_assert!(report.passed(Invariant::Representable));
        }
    }

    #[test]
    fn sqrt_schedule_is_valid_and_short(p in 1usize..5000) {
        let s = SkipSchedule::sqrt(p).unwrap();
        prop_assert!(s.validate().is_valid());
        prop_assert!((s.rounds() as f64) <= 3.0 * (p as f64).sqrt() + ceil_log2(p) as f64);
    }
}
