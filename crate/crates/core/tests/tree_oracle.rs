mod common;

use proptest::prelude::*;

use common::oracles::best_root_split;
use common::toys::{row, single_feature_separable, tree_toy8};
use sqlion::features::FEATURE_COUNT;
use sqlion::ml::{train_tree, LabeledDataset, Node, DEFAULT_MAX_DEPTH};

fn root_split(data: &LabeledDataset) -> Option<(usize, u32)> {
    match &train_tree(data, DEFAULT_MAX_DEPTH).unwrap().root {
        Node::Split {
            feature, threshold, ..
        } => Some((*feature, *threshold)),
        Node::Leaf { .. } => None,
    }
}

#[test]
fn toy_root_is_the_exhaustive_best_split() {
    let data = tree_toy8();
    let (f, t, _) = best_root_split(&data.rows).unwrap();
    assert_eq!(root_split(&data), Some((f, t)));
    assert_eq!((f, t), (39, 1));
}

#[test]
fn single_feature_separable_data_is_fit_exactly() {
    let data = single_feature_separable();
    let tree = train_tree(&data, DEFAULT_MAX_DEPTH).unwrap();
    for r in &data.rows {
        assert_eq!(tree.predict(&r.counts), r.label);
    }
    assert!(tree.depth() <= DEFAULT_MAX_DEPTH);
}

#[test]
fn fixture_trees_respect_the_depth_limit() {
    let f = common::fixture();
    let sqlion::ml::TrainedModel::Tree(tree) = &f.tree else {
        panic!()
    };
    assert!(tree.depth() <= DEFAULT_MAX_DEPTH);
    for limit in [1, 2, 5] {
        assert!(train_tree(&f.train, limit).unwrap().depth() <= limit);
    }
}

proptest! {
    #[test]
    fn root_split_is_exhaustive_best(
        rows in proptest::collection::vec((1u8..=4, proptest::collection::vec((0usize..6, 0u32..4), 0..4)), 2..12)
    ) {
        let data = LabeledDataset::new(rows.iter().map(|(l, c)| row(*l, c)).collect());
        let expected = best_root_split(&data.rows).map(|(f, t, _)| (f, t));
        prop_assert_eq!(root_split(&data), expected);
    }

    #[test]
    fn depth_never_exceeds_ten(
        rows in proptest::collection::vec((1u8..=4, proptest::collection::vec((0usize..FEATURE_COUNT, 0u32..30), 0..8)), 1..200)
    ) {
        let data = LabeledDataset::new(rows.iter().map(|(l, c)| row(*l, c)).collect());
        prop_assert!(train_tree(&data, DEFAULT_MAX_DEPTH).unwrap().depth() <= DEFAULT_MAX_DEPTH);
    }
}
