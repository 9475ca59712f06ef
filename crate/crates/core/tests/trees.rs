use std::collections::BTreeSet;

use embtree_core::reduction::FeatureMatrix;
use embtree_core::tree::{
    build_forest, build_tree, entropy, gini_impurity, weighted_gini, Algorithm, DecisionTree,
    ForestConfig, Model, ModelFile, NodeKind, TrainingData, TreeConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Data {
    features: FeatureMatrix,
    labels: Vec<u32>,
    ids: Vec<String>,
    k: usize,
}

impl Data {
    fn view(&self) -> TrainingData<'_> {
        TrainingData::new(&self.features, &self.labels, &self.ids, self.k).unwrap()
    }
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> Data {
    let values: Vec<f64> = (0..n * m).map(|_| rng.random_range(-3.0..3.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..k) as u32).collect();
    Data {
        features: FeatureMatrix::new(n, m, values, (0..m).map(|j| format!("f{j}")).collect())
            .unwrap(),
        labels,
        ids: (0..n).map(|i| format!("doc{i:03}")).collect(),
        k,
    }
}

fn row_of(data: &Data, id: &str) -> usize {
    data.ids.iter().position(|d| d == id).unwrap()
}

fn check_structure(tree: &DecisionTree, data: &Data) {
    assert_eq!(tree.root().routed.len(), data.ids.len());
    for node in &tree.nodes {
        let counts = node.class_counts.clone();
        let mut recount = vec![0; data.k];
        for id in &node.routed {
            recount[data.labels[row_of(data, id)] as usize] += 1;
        }
        assert_eq!(counts, recount, "node {} counts", node.id);
        let best = counts.iter().max().unwrap();
        let argmax = counts.iter().position(|c| c == best).unwrap() as u32;
        assert_eq!(node.majority_class(), argmax);

        if let NodeKind::Internal { split, left, right } = &node.kind {
            let (l, r) = (tree.node(*left).unwrap(), tree.node(*right).unwrap());
            assert_eq!(l.depth, node.depth + 1);
            let ls: BTreeSet<&String> = l.routed.iter().collect();
            let rs: BTreeSet<&String> = r.routed.iter().collect();
            assert!(ls.is_disjoint(&rs));
            let union: BTreeSet<&String> = ls.union(&rs).copied().collect();
            assert_eq!(union, node.routed.iter().collect::<BTreeSet<_>>());
            for id in &l.routed {
                assert!(data.features.get(row_of(data, id), split.feature) <= split.threshold);
            }
            for id in &r.routed {
                assert!(data.features.get(row_of(data, id), split.feature) > split.threshold);
            }
            let children = vec![l.class_counts.clone(), r.class_counts.clone()];
            match tree.algorithm() {
                Algorithm::Cart => {
                    assert!(weighted_gini(&children).unwrap() <= gini_impurity(&counts).unwrap());
                }
                _ => {
                    let n = node.routed.len() as f64;
                    let after: f64 = children
                        .iter()
                        .map(|c| c.iter().sum::<usize>() as f64 / n * entropy(c).unwrap())
                        .sum();
                    assert!(entropy(&counts).unwrap() - after >= 0.0);
                }
            }
        }
    }
}

#[test]
fn depth_bound_and_structure_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let algorithms = [Algorithm::Id3, Algorithm::C45, Algorithm::Cart];
    for max_depth in 1..=20 {
        for algorithm in algorithms {
            let n = rng.random_range(20..120);
            let m = rng.random_range(1..5);
            let k = rng.random_range(2..5);
            let data = random_data(&mut rng, n, m, k);
            let tree = build_tree(
                &data.view(),
                &TreeConfig::new(algorithm).with_max_depth(max_depth),
            )
            .unwrap();
            assert!(tree.depth() <= max_depth);
            assert!(tree.nodes.iter().all(|node| node.depth <= max_depth));
            check_structure(&tree, &data);
        }
    }
}

#[test]
fn depth_limit_on_nested_xor() {
    // Labels follow the parity of five sign bits, which needs depth 5.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 320;
    let values: Vec<f64> = (0..n * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<u32> = (0..n)
        .map(|a| (0..5).filter(|&j| values[a * 5 + j] > 0.0).count() as u32 % 2)
        .collect();
    let data = Data {
        features: FeatureMatrix::new(n, 5, values, (0..5).map(|j| format!("f{j}")).collect())
            .unwrap(),
        labels,
        ids: (0..n).map(|i| format!("x{i}")).collect(),
        k: 2,
    };
    let tree = build_tree(
        &data.view(),
        &TreeConfig::new(Algorithm::Cart).with_max_depth(3),
    )
    .unwrap();
    assert!(tree.depth() <= 3);
    for leaf in tree.nodes.iter().filter(|n| n.is_leaf()) {
        let c = &leaf.class_counts;
        let expected = if c[1] > c[0] { 1 } else { 0 };
        assert_eq!(leaf.majority_class(), expected);
    }
    check_structure(&tree, &data);
}

#[test]
fn prediction_path_is_root_to_leaf_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_data(&mut rng, 80, 3, 3);
    let tree = build_tree(&data.view(), &TreeConfig::new(Algorithm::C45)).unwrap();
    for a in 0..80 {
        let p = tree.predict(data.features.row(a)).unwrap();
        assert_eq!(p.path[0], 0);
        for w in p.path.windows(2) {
            let (l, r) = tree.node(w[0]).unwrap().children().unwrap();
            assert!(w[1] == l || w[1] == r);
        }
        let leaf = tree.node(*p.path.last().unwrap()).unwrap();
        assert!(leaf.is_leaf());
        assert!(leaf.routed.contains(&data.ids[a]));
        assert_eq!(p.class, leaf.majority_class());
    }
}

#[test]
fn forest_is_seed_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data = random_data(&mut rng, 60, 6, 2);
    let config = ForestConfig {
        tree_count: 5,
        base: TreeConfig::new(Algorithm::Id3),
        subset_size: None,
        seed: 7,
    };
    let a = Model::Forest(build_forest(&data.view(), &config).unwrap());
    let b = Model::Forest(build_forest(&data.view(), &config).unwrap());
    let names = data.features.feature_names().to_vec();
    let classes = vec!["a".to_string(), "b".to_string()];
    let bytes = |m: &Model| {
        ModelFile::from_model(m, names.clone(), classes.clone(), "x".into(), None).to_json_bytes()
    };
    assert_eq!(bytes(&a), bytes(&b));

    let other = ForestConfig { seed: 8, ..config };
    let c = Model::Forest(build_forest(&data.view(), &other).unwrap());
    let Model::Forest(fa) = &a else {
        unreachable!()
    };
    let Model::Forest(fc) = &c else {
        unreachable!()
    };
    assert_ne!(fa.feature_subsets, fc.feature_subsets);
}

#[test]
fn forest_of_one_full_subset_equals_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = random_data(&mut rng, 70, 4, 3);
    let base = TreeConfig::new(Algorithm::Cart);
    let forest = build_forest(
        &data.view(),
        &ForestConfig {
            tree_count: 1,
            base: base.clone(),
            subset_size: Some(4),
            seed: 1,
        },
    )
    .unwrap();
    let tree = build_tree(&data.view(), &base).unwrap();
    assert_eq!(forest.trees[0].nodes, tree.nodes);
    for a in 0..70 {
        let row = data.features.row(a);
        assert_eq!(
            forest.predict(row).unwrap().class,
            tree.predict(row).unwrap().class
        );
    }
}

#[test]
fn standard_forest_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = random_data(&mut rng, 40, 9, 2);
    for count in [1, 5, 10] {
        let forest = build_forest(
            &data.view(),
            &ForestConfig {
                tree_count: count,
                base: TreeConfig::new(Algorithm::C45),
                subset_size: None,
                seed: 2,
            },
        )
        .unwrap();
        assert_eq!(forest.trees.len(), count);
        assert!(forest.feature_subsets.iter().all(|s| s.len() == 3));
    }
}

#[test]
fn model_file_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data = random_data(&mut rng, 90, 4, 3);
    let model = Model::Tree(build_tree(&data.view(), &TreeConfig::new(Algorithm::Id3)).unwrap());
    let names = data.features.feature_names().to_vec();
    let classes: Vec<String> = ["x", "y", "z"].map(String::from).to_vec();
    let file = ModelFile::from_model(&model, names, classes, "abc".into(), None);
    let bytes = file.to_json_bytes();
    let back = ModelFile::from_json_bytes(&bytes).unwrap();
    assert_eq!(back.to_json_bytes(), bytes);
    let Model::Tree(original) = &model else {
        unreachable!()
    };
    let Model::Tree(reloaded) = back.to_model().unwrap() else {
        panic!("expected a tree")
    };
    assert_eq!(original.nodes, reloaded.nodes);
}
