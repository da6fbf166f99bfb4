mod common;

use std::collections::BTreeSet;

use ain_core::cluster::{ClusterTree, Linkage, TieBreak};
use ain_core::embedding::EmbeddingTable;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LINKAGES: [Linkage; 3] = [Linkage::Average, Linkage::Complete, Linkage::Single];

fn assert_matches_oracle(table: &EmbeddingTable, linkage: Linkage) {
    let tree = ClusterTree::build(table, linkage);
    let got: Vec<_> = tree.merges().collect();
    let want = common::naive_merges(table, linkage);
    assert_eq!(got.len(), want.len());
    for (step, (g, w)) in got.iter().zip(&want).enumerate() {
        assert_eq!((g.left, g.right), (w.0, w.1), "{linkage} step {step}");
        assert!(
            (g.height - w.2).abs() < 1e-9,
            "{linkage} step {step}: {} vs {}",
            g.height,
            w.2
        );
    }
}

#[test]
fn merge_order_matches_naive_oracle() {
    for seed in 0..8u64 {
        let n = 5 + (seed as usize * 11) % 60;
        let table = EmbeddingTable::generate_synthetic(n, 6, seed).unwrap();
        for linkage in LINKAGES {
            assert_matches_oracle(&table, linkage);
        }
    }
}

#[test]
fn exact_ties_follow_codepoint_rule() {
    // Four copies of one direction and two of another: every distance is
    // exactly 0 or exactly the same positive value, so order is decided by
    // the tie rule alone.
    let table = EmbeddingTable::new(
        2,
        vec![
            ('d', vec![1.0, 0.0]),
            ('b', vec![0.0, 1.0]),
            ('a', vec![1.0, 0.0]),
            ('f', vec![0.0, 1.0]),
            ('c', vec![1.0, 0.0]),
            ('e', vec![1.0, 0.0]),
        ],
    )
    .unwrap();
    for linkage in LINKAGES {
        assert_matches_oracle(&table, linkage);
    }
    let tree = ClusterTree::build(&table, Linkage::Average);
    // a (leaf 2) and c (leaf 4) have the smallest codepoints among the zero-distance pairs
    assert_eq!(tree.merges().next().map(|m| (m.left, m.right)), Some((2, 4)));
}

#[test]
fn spec_four_point_example() {
    let table = EmbeddingTable::new(
        2,
        vec![
            ('A', vec![1.0, 0.02]),
            ('B', vec![1.0, -0.02]),
            ('C', vec![0.03, 1.0]),
            ('D', vec![-0.03, 1.0]),
        ],
    )
    .unwrap();
    let tree = ClusterTree::build(&table, Linkage::Average);
    let merges: Vec<_> = tree.merges().map(|m| (m.left, m.right)).collect();
    assert_eq!(merges, vec![(0, 1), (2, 3), (4, 5)]);
    assert_eq!(tree.feedback_level('A', 'A', 4).unwrap(), 0);
    assert_eq!(tree.feedback_level('A', 'B', 4).unwrap(), 1);
    assert_eq!(tree.feedback_level('A', 'C', 4).unwrap(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        tree.hint_for('A', |_| false, TieBreak::Codepoint, &mut rng).unwrap(),
        'B'
    );
}

fn small_table() -> impl Strategy<Value = EmbeddingTable> {
    (3usize..30, 2usize..6, any::<u64>())
        .prop_map(|(n, dim, seed)| EmbeddingTable::generate_synthetic(n, dim, seed).unwrap())
}

fn linkage() -> impl Strategy<Value = Linkage> {
    prop::sample::select(LINKAGES.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cophenetic_is_ultrametric(table in small_table(), linkage in linkage()) {
        let tree = ClusterTree::build(&table, linkage);
        let cs = table.chars();
        for &a in cs {
            prop_assert_eq!(tree.cophenetic_distance(a, a).unwrap(), 0.0);
            for &b in cs {
                let ab = tree.cophenetic_distance(a, b).unwrap();
                prop_assert_eq!(ab, tree.cophenetic_distance(b, a).unwrap());
                for &c in cs {
                    let bound = ab.max(tree.cophenetic_distance(b, c).unwrap());
                    prop_assert!(tree.cophenetic_distance(a, c).unwrap() <= bound);
                }
            }
        }
    }

    #[test]
    fn heights_monotone_and_members_partition(table in small_table(), linkage in linkage()) {
        let tree = ClusterTree::build(&table, linkage);
        prop_assert_eq!(tree.nodes().len(), 2 * table.len() - 1);
        for node in tree.nodes() {
            if let Some((l, r)) = node.children {
                let (ln, rn) = (tree.node(l).unwrap(), tree.node(r).unwrap());
                prop_assert!(node.height >= ln.height && node.height >= rn.height);
                let mut both: Vec<char> = tree.members(l).chain(tree.members(r)).collect();
                let mut mine: Vec<char> = tree.members(node.id).collect();
                both.sort();
                mine.sort();
                prop_assert_eq!(both, mine);
            }
        }
        let all: BTreeSet<char> = tree.members(tree.root()).collect();
        prop_assert_eq!(all, table.chars().iter().copied().collect::<BTreeSet<_>>());
    }

    #[test]
    fn levels_partition_the_leaves(table in small_table(), linkage in linkage(), levels in 2u32..7) {
        let tree = ClusterTree::build(&table, linkage);
        for &g in table.chars() {
            let mut seen = BTreeSet::new();
            for l in 1..=levels {
                let cands = tree.candidates_at_level(g, l, levels).unwrap();
                for &c in &cands {
                    prop_assert_eq!(tree.feedback_level(g, c, levels).unwrap(), l);
                    prop_assert!(seen.insert(c), "{} in two levels", c);
                }
            }
            prop_assert!(!seen.contains(&g));
            prop_assert_eq!(seen.len(), table.len() - 1);
        }
    }

    #[test]
    fn hint_lies_in_the_parent_cluster(table in small_table(), linkage in linkage(), pick in any::<prop::sample::Index>()) {
        let tree = ClusterTree::build(&table, linkage);
        let target = table.chars()[pick.index(table.len())];
        let leaf = tree.leaf_of(target).unwrap();
        let parent = tree.parent_cluster(leaf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hint = tree.hint_for(target, |_| false, TieBreak::Codepoint, &mut rng).unwrap();
        prop_assert_ne!(hint, target);
        prop_assert!(tree.members(parent).any(|c| c == hint));
        let siblings: Vec<char> = tree.members(parent).filter(|&c| c != target).collect();
        prop_assert_eq!(hint, *siblings.iter().min().unwrap());
    }

    #[test]
    fn tree_from_dumped_merges_is_identical(table in small_table(), linkage in linkage()) {
        let tree = ClusterTree::build(&table, linkage);
        let merges: Vec<_> = tree.merges().collect();
        let rebuilt = ClusterTree::from_merges(table.chars().to_vec(), &merges);
        prop_assert_eq!(rebuilt.dump(), tree.dump());
    }
}
