//! Random forest of CART trees with Gini splits.
//!
//! Training is a pure function of (examples, hyperparameters, seed):
//! examples are first put into a canonical value-based order, every tree
//! draws its bootstrap sample and per-node feature subsets from its own
//! generator seeded by `mix_seed(seed, tree_index)`, and split ties are
//! broken by lowest feature index, then lowest threshold.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::weighted_f1;
use crate::examples::Example;
use crate::features::FeatureVector;
use crate::util::{mix_seed, rng_from};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: u32,
    pub max_depth: u32,
    pub min_samples_leaf: u32,
    pub n_features_per_split: u32,
}

pub const DEFAULT_TREES: u32 = 100;
pub const DEFAULT_INNER_FOLDS: usize = 3;

impl Hyperparams {
    pub fn validate(&self, n_features: usize) -> Result<(), ForestError> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 || self.n_features_per_split == 0 {
            return Err(ForestError::InvalidHyperparams("all hyperparameters must be at least 1"));
        }
        if self.n_features_per_split as usize > n_features {
            return Err(ForestError::InvalidHyperparams("more features per split than features"));
        }
        Ok(())
    }
}

/// Depth {4, 8, 16} x leaf size {1, 5, 20} x features per split {√d, d/3}.
pub fn default_grid(n_features: usize, n_trees: u32) -> Vec<Hyperparams> {
    let d = n_features.max(1) as f64;
    let clamp = |v: f64| (libm::round(v) as u32).clamp(1, n_features.max(1) as u32);
    let mut per_split = alloc::vec![clamp(libm::sqrt(d)), clamp(d / 3.0)];
    per_split.dedup();
    let mut grid = Vec::new();
    for max_depth in [4, 8, 16] {
        for min_samples_leaf in [1, 5, 20] {
            for &n_features_per_split in &per_split {
                grid.push(Hyperparams { n_trees, max_depth, min_samples_leaf, n_features_per_split });
            }
        }
    }
    grid
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ForestError {
    #[error("cannot train on zero examples")]
    NoExamples,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(&'static str),
    #[error("feature vector does not match the model schema ({found} features, expected {expected})")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("cross-validation needs at least two folds")]
    InvalidFolds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    /// Training sample counts `[negative, positive]`.
    Leaf { counts: [u32; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root first.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> [u32; 2] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    /// Majority vote of the leaf; ties vote negative.
    pub fn vote(&self, x: &[f64]) -> bool {
        let c = self.leaf_counts(x);
        c[1] > c[0]
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> u32 {
        fn walk(t: &Tree, i: usize) -> u32 {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left as usize).max(walk(t, *right as usize)),
            }
        }
        walk(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = [u32; 2]> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts } => Some(*counts),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub feature_names: Vec<String>,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: bool,
    /// Fraction of trees voting positive.
    pub score: f64,
}

impl Forest {
    pub fn predict_values(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        if x.len() != self.feature_names.len() {
            return Err(ForestError::SchemaMismatch { expected: self.feature_names.len(), found: x.len() });
        }
        let votes = self.trees.iter().filter(|t| t.vote(x)).count();
        let score = votes as f64 / self.trees.len() as f64;
        Ok(Prediction { label: score > 0.5, score })
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<Prediction, ForestError> {
        if fv.schema.names != self.feature_names {
            return Err(ForestError::SchemaMismatch { expected: self.feature_names.len(), found: fv.len() });
        }
        self.predict_values(&fv.values)
    }
}

/// Canonical order so that training is independent of input order.
fn canonical_cmp(a: &Example, b: &Example) -> Ordering {
    a.participant_id
        .cmp(&b.participant_id)
        .then(a.t_ref.total_cmp(&b.t_ref))
        .then(a.task.cmp(&b.task))
        .then(a.label.cmp(&b.label))
        .then_with(|| {
            a.features
                .values
                .iter()
                .zip(&b.features.values)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Column-major training matrix, with each value's rank among the distinct
/// values of its column.
struct Dataset {
    n: usize,
    d: usize,
    columns: Vec<f64>,
    ranks: Vec<u32>,
    /// Sorted distinct values per column.
    distinct: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl Dataset {
    fn new(examples: &[&Example]) -> Dataset {
        let mut sorted: Vec<&Example> = examples.to_vec();
        sorted.sort_by(|a, b| canonical_cmp(a, b));
        let n = sorted.len();
        let d = sorted.first().map_or(0, |e| e.features.len());
        let mut columns = alloc::vec![0.0; n * d];
        for (i, e) in sorted.iter().enumerate() {
            for (f, &v) in e.features.values.iter().enumerate() {
                columns[f * n + i] = v;
            }
        }
        let mut ranks = alloc::vec![0u32; n * d];
        let mut distinct = Vec::with_capacity(d);
        for f in 0..d {
            let col = &columns[f * n..(f + 1) * n];
            let mut vals = col.to_vec();
            vals.sort_by(f64::total_cmp);
            vals.dedup_by(|a, b| a.total_cmp(b).is_eq());
            for (r, v) in ranks[f * n..(f + 1) * n].iter_mut().zip(col) {
                *r = vals.binary_search_by(|x| x.total_cmp(v)).expect("value listed") as u32;
            }
            distinct.push(vals);
        }
        Dataset { n, d, columns, ranks, distinct, labels: sorted.iter().map(|e| e.label).collect() }
    }

    fn value(&self, i: u32, f: usize) -> f64 {
        self.columns[f * self.n + i as usize]
    }

    fn rank(&self, i: u32, f: usize) -> u32 {
        self.ranks[f * self.n + i as usize]
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Sum over children of (Σ class count²) / child size; larger is purer.
    purity: f64,
}

fn better(candidate: &Split, best: &Option<Split>) -> bool {
    match best {
        None => true,
        Some(b) => match candidate.purity.total_cmp(&b.purity) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (candidate.feature, candidate.threshold) < (b.feature, b.threshold),
        },
    }
}

/// Grows one tree. A bootstrap sample is held as distinct rows plus the
/// number of times each was drawn.
struct Builder<'d> {
    data: &'d Dataset,
    hp: Hyperparams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    weights: Vec<u32>,
    /// `rank << 32 | row`, so an integer sort orders rows by value.
    keys: Vec<u64>,
}

impl Builder<'_> {
    fn counts(&self, rows: &[u32]) -> [u32; 2] {
        let mut c = [0u32; 2];
        for &i in rows {
            c[usize::from(self.data.labels[i as usize])] += self.weights[i as usize];
        }
        c
    }

    fn best_split(&mut self, rows: &[u32], counts: [u32; 2]) -> Option<Split> {
        let min_leaf = f64::from(self.hp.min_samples_leaf);
        let n = f64::from(counts[0] + counts[1]);
        let total_pos = f64::from(counts[1]);
        let features = index::sample(&mut self.rng, self.data.d, self.hp.n_features_per_split as usize);
        let mut best: Option<Split> = None;
        for f in features.iter() {
            self.keys.clear();
            self.keys.extend(rows.iter().map(|&i| u64::from(self.data.rank(i, f)) << 32 | u64::from(i)));
            self.keys.sort_unstable();
            let distinct = &self.data.distinct[f];
            let (mut nl, mut left_pos) = (0.0, 0.0);
            for pair in self.keys.windows(2) {
                let i = pair[0] as u32 as usize;
                let w = f64::from(self.weights[i]);
                nl += w;
                if self.data.labels[i] {
                    left_pos += w;
                }
                let (rlo, rhi) = ((pair[0] >> 32) as usize, (pair[1] >> 32) as usize);
                let nr = n - nl;
                if rlo == rhi || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let left_neg = nl - left_pos;
                let right_pos = total_pos - left_pos;
                let right_neg = nr - right_pos;
                let purity = (left_pos * left_pos + left_neg * left_neg) / nl + (right_pos * right_pos + right_neg * right_neg) / nr;
                let (lo, hi) = (distinct[rlo], distinct[rhi]);
                let mid = 0.5 * (lo + hi);
                let threshold = if mid < hi { mid } else { lo };
                let cand = Split { feature: f, threshold, purity };
                if better(&cand, &best) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<u32>, depth: u32) -> u32 {
        let id = self.nodes.len() as u32;
        let counts = self.counts(&rows);
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.hp.max_depth || counts[0] + counts[1] < 2 * self.hp.min_samples_leaf {
            return id;
        }
        let Some(split) = self.best_split(&rows, counts) else {
            return id;
        };
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&i| self.data.value(i, split.feature) <= split.threshold);
        drop(rows);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id as usize] = Node::Split { feature: split.feature as u32, threshold: split.threshold, left: l, right: r };
        id
    }
}

fn train_tree(data: &Dataset, hp: Hyperparams, seed: u64) -> Tree {
    let mut rng = rng_from(seed);
    let mut weights = alloc::vec![0u32; data.n];
    for _ in 0..data.n {
        weights[rng.gen_range(0..data.n)] += 1;
    }
    let rows: Vec<u32> = (0..data.n as u32).filter(|&i| weights[i as usize] > 0).collect();
    let mut b = Builder { data, hp, rng, nodes: Vec::new(), weights, keys: Vec::with_capacity(rows.len()) };
    b.grow(rows, 0);
    Tree { nodes: b.nodes }
}

pub fn train_refs(examples: &[&Example], hp: &Hyperparams, seed: u64) -> Result<Forest, ForestError> {
    let first = examples.first().ok_or(ForestError::NoExamples)?;
    let names = first.features.schema.names.clone();
    if let Some(bad) = examples.iter().find(|e| e.features.schema.names != names) {
        return Err(ForestError::SchemaMismatch { expected: names.len(), found: bad.features.len() });
    }
    hp.validate(names.len())?;
    let data = Dataset::new(examples);
    let trees = (0..hp.n_trees).map(|t| train_tree(&data, *hp, mix_seed(seed, u64::from(t)))).collect();
    Ok(Forest { feature_names: names, hyperparams: *hp, seed, trees })
}

/// Trains a forest on bootstrap resamples of `examples`.
pub fn train(examples: &[Example], hp: &Hyperparams, seed: u64) -> Result<Forest, ForestError> {
    let refs: Vec<&Example> = examples.iter().collect();
    train_refs(&refs, hp, seed)
}

/// Inner fold of each example: whole participants per fold when the
/// training set has at least two of them, otherwise round-robin over the
/// canonical order.
fn inner_folds(examples: &[&Example], k: usize) -> (usize, Vec<usize>) {
    let ids = {
        let mut ids: Vec<&str> = examples.iter().map(|e| e.participant_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    if ids.len() >= 2 {
        let k = k.min(ids.len());
        let fold = examples
            .iter()
            .map(|e| ids.binary_search(&e.participant_id.as_str()).expect("id listed") % k)
            .collect();
        (k, fold)
    } else {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.sort_by(|&a, &b| canonical_cmp(examples[a], examples[b]));
        let mut fold = alloc::vec![0; examples.len()];
        for (rank, &i) in order.iter().enumerate() {
            fold[i] = rank % k;
        }
        (k, fold)
    }
}

/// Mean inner-CV weighted F1 of every grid point, in grid order.
pub fn cross_validate(examples: &[&Example], grid: &[Hyperparams], k: usize, seed: u64) -> Result<Vec<f64>, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::EmptyGrid);
    }
    if k < 2 {
        return Err(ForestError::InvalidFolds);
    }
    if examples.is_empty() {
        return Err(ForestError::NoExamples);
    }
    let (k, fold) = inner_folds(examples, k);
    let mut scores = Vec::with_capacity(grid.len());
    for hp in grid {
        let mut total = 0.0;
        let mut used = 0usize;
        for f in 0..k {
            let train: Vec<&Example> = examples.iter().zip(&fold).filter(|(_, &g)| g != f).map(|(e, _)| *e).collect();
            let held: Vec<&Example> = examples.iter().zip(&fold).filter(|(_, &g)| g == f).map(|(e, _)| *e).collect();
            if train.is_empty() || held.is_empty() {
                continue;
            }
            let forest = train_refs(&train, hp, mix_seed(seed, f as u64))?;
            let preds: Vec<bool> = held.iter().map(|e| forest.predict_values(&e.features.values).map(|p| p.label)).collect::<Result<_, _>>()?;
            let labels: Vec<bool> = held.iter().map(|e| e.label).collect();
            total += weighted_f1(&preds, &labels).expect("non-empty, equal lengths");
            used += 1;
        }
        scores.push(if used == 0 { 0.0 } else { total / used as f64 });
    }
    Ok(scores)
}

/// Grid point with the highest mean inner-CV weighted F1; earliest wins ties.
pub fn tune_refs(examples: &[&Example], grid: &[Hyperparams], k: usize, seed: u64) -> Result<Hyperparams, ForestError> {
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let scores = cross_validate(examples, grid, k, seed)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

pub fn tune(examples: &[Example], grid: &[Hyperparams], k: usize, seed: u64) -> Result<Hyperparams, ForestError> {
    let refs: Vec<&Example> = examples.iter().collect();
    tune_refs(&refs, grid, k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::Task;
    use crate::features::{FeatureGroup, FeatureSchema};
    use crate::recording::{Environment, SegmentKind};
    use alloc::format;
    use alloc::sync::Arc;
    use alloc::vec;
    use proptest::prelude::{any, ProptestConfig};
    use proptest::{prop_assert_eq, proptest};

    fn schema(d: usize) -> Arc<FeatureSchema> {
        Arc::new(FeatureSchema { group: FeatureGroup::Phone, names: (0..d).map(|i| format!("f{i}")).collect() })
    }

    fn examples(rows: &[(Vec<f64>, bool)], participants: usize) -> Vec<Example> {
        let s = schema(rows[0].0.len());
        rows.iter()
            .enumerate()
            .map(|(i, (x, y))| Example {
                participant_id: format!("P{}", i % participants),
                t_ref: i as f64,
                features: FeatureVector { schema: s.clone(), values: x.clone() },
                label: *y,
                segment_kind: SegmentKind::Working,
                environment: Environment::Office,
                task: Task::PrimaryFocus,
            })
            .collect()
    }

    /// Feature 0 separates the classes at 0.5; features 1 and 2 are noise.
    fn separable(n: usize) -> Vec<Example> {
        let mut rng = rng_from(99);
        let rows: Vec<(Vec<f64>, bool)> = (0..n)
            .map(|i| {
                let y = i % 2 == 0;
                let x0 = if y { 0.6 + rng.gen::<f64>() * 0.4 } else { rng.gen::<f64>() * 0.4 };
                (vec![x0, rng.gen(), rng.gen()], y)
            })
            .collect();
        examples(&rows, 4)
    }

    fn hp(n_trees: u32, max_depth: u32, min_samples_leaf: u32, n_features_per_split: u32) -> Hyperparams {
        Hyperparams { n_trees, max_depth, min_samples_leaf, n_features_per_split }
    }

    #[test]
    fn single_class_gives_constant_prediction() {
        let ex = examples(&[(vec![1.0], true), (vec![2.0], true), (vec![3.0], true)], 1);
        let f = train(&ex, &hp(5, 1, 10, 1), 0).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        for x in [-10.0, 2.0, 50.0] {
            let p = f.predict_values(&[x]).unwrap();
            assert!(p.label);
            assert_eq!(p.score, 1.0);
        }
    }

    #[test]
    fn zero_examples_is_an_error() {
        assert_eq!(train(&[], &hp(1, 1, 1, 1), 0), Err(ForestError::NoExamples));
    }

    #[test]
    fn constant_features_give_leaves() {
        let ex = examples(&[(vec![1.0, 1.0], true), (vec![1.0, 1.0], false), (vec![1.0, 1.0], false)], 1);
        let f = train(&ex, &hp(3, 5, 1, 2), 0).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        assert!(!f.predict_values(&[1.0, 1.0]).unwrap().label);
    }

    #[test]
    fn deterministic_and_order_independent() {
        let ex = separable(200);
        let a = train(&ex, &hp(10, 6, 2, 2), 7).unwrap();
        let b = train(&ex, &hp(10, 6, 2, 2), 7).unwrap();
        assert_eq!(a, b);
        let mut rev = ex.clone();
        rev.reverse();
        assert_eq!(train(&rev, &hp(10, 6, 2, 2), 7).unwrap(), a);
        assert_ne!(train(&ex, &hp(10, 6, 2, 2), 8).unwrap(), a);
    }

    #[test]
    fn separable_set_fits_perfectly() {
        let ex = separable(200);
        let f = train(&ex, &hp(25, 1, 1, 3), 3).unwrap();
        let acc = ex.iter().filter(|e| f.predict(&e.features).unwrap().label == e.label).count();
        assert_eq!(acc, ex.len());
    }

    #[test]
    fn structural_limits_hold() {
        let ex = separable(300);
        let h = hp(10, 3, 7, 2);
        let f = train(&ex, &h, 1).unwrap();
        for t in &f.trees {
            assert!(t.depth() <= 3);
            assert!(t.leaves().all(|c| c[0] + c[1] >= 7));
        }
    }

    #[test]
    fn identical_trees_match_single_tree() {
        let ex = separable(100);
        let f = train(&ex, &hp(1, 4, 1, 3), 5).unwrap();
        let mut many = f.clone();
        many.trees = vec![f.trees[0].clone(); 9];
        for e in &ex {
            let one = f.predict_values(&e.features.values).unwrap();
            let all = many.predict_values(&e.features.values).unwrap();
            assert_eq!(one.label, all.label);
            assert!(all.score == 0.0 || all.score == 1.0);
        }
    }

    #[test]
    fn schema_mismatch() {
        let ex = separable(20);
        let f = train(&ex, &hp(2, 2, 1, 1), 0).unwrap();
        assert!(matches!(f.predict_values(&[0.0, 1.0]), Err(ForestError::SchemaMismatch { .. })));
        let other = FeatureVector { schema: schema(4), values: vec![0.0; 4] };
        assert!(f.predict(&other).is_err());
    }

    #[test]
    fn hyperparams_validated() {
        let ex = separable(20);
        assert!(train(&ex, &hp(2, 2, 1, 4), 0).is_err());
        assert!(train(&ex, &hp(0, 2, 1, 1), 0).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid(81, 100);
        assert_eq!(g.len(), 18);
        assert!(g.iter().all(|h| h.n_features_per_split == 9 || h.n_features_per_split == 27));
        assert_eq!(default_grid(1, 10).len(), 9);
    }

    #[test]
    fn tune_edge_cases() {
        let ex = separable(60);
        let one = [hp(3, 2, 1, 1)];
        assert_eq!(tune(&ex, &one, 3, 0).unwrap(), one[0]);
        let dup = [hp(3, 2, 1, 1), hp(3, 2, 1, 1)];
        assert_eq!(tune(&ex, &dup, 3, 0).unwrap(), dup[0]);
        assert_eq!(tune(&ex, &[], 3, 0), Err(ForestError::EmptyGrid));
        assert_eq!(tune(&ex, &dup, 1, 0), Err(ForestError::InvalidFolds));
    }

    #[test]
    fn tune_finds_perfect_point() {
        let ex = separable(120);
        // Splitting on the noise features alone cannot reach 1.0.
        let grid = [hp(5, 1, 1, 1), hp(15, 2, 1, 3)];
        let refs: Vec<&Example> = ex.iter().collect();
        let scores = cross_validate(&refs, &grid, 3, 4).unwrap();
        let chosen = tune(&ex, &grid, 3, 4).unwrap();
        assert_eq!(chosen, grid[1]);
        assert_eq!(scores[1], 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn unlimited_tree_zero_training_error(rows in proptest::collection::vec((0i32..6, 0i32..6, any::<bool>()), 2..40)) {
            // Deduplicate inputs so the labelling is a function.
            let mut seen: Vec<(i32, i32)> = Vec::new();
            let mut data = Vec::new();
            for (a, b, y) in rows {
                if !seen.contains(&(a, b)) {
                    seen.push((a, b));
                    data.push((vec![f64::from(a), f64::from(b)], y));
                }
            }
            let ex = examples(&data, 1);
            let refs: Vec<&Example> = ex.iter().collect();
            let d = Dataset::new(&refs);
            // A single tree on the full (non-bootstrapped) set with every feature at each node.
            let mut b = Builder { data: &d, hp: hp(1, u32::MAX, 1, 2), rng: rng_from(0), nodes: Vec::new(), weights: vec![1; d.n], keys: Vec::new() };
            b.grow((0..d.n as u32).collect(), 0);
            let tree = Tree { nodes: b.nodes };
            for e in &ex {
                prop_assert_eq!(tree.vote(&e.features.values), e.label);
            }
        }
    }
}
