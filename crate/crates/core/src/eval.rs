//! Metrics and the leave-one-person-out experiment.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::examples::{balance_indices, generate_with, lopo_folds, Example, ExampleError, Fold, Task, TaskConfig};
use crate::features::{FeatureExtractor, FeatureGroup};
use crate::forest::{self, ForestError, Hyperparams, DEFAULT_INNER_FOLDS};
use crate::recording::{Environment, Recording, SegmentKind};
use crate::util::{mean_std, mix_seed};
use crate::seed_for_label;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(preds: &[bool], labels: &[bool]) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for (&p, &l) in preds.iter().zip(labels) {
            cm.add(p, l);
        }
        cm
    }

    pub fn add(&mut self, pred: bool, label: bool) {
        match (pred, label) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts with the negative class treated as positive.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }

    /// Rows are true classes `[negative, positive]`, columns predictions.
    /// A row with no support is all zeros.
    pub fn normalized(&self) -> [[f64; 2]; 2] {
        let row = |a: u64, b: u64| {
            let n = (a + b) as f64;
            if n == 0.0 { [0.0, 0.0] } else { [a as f64 / n, b as f64 / n] }
        };
        [row(self.tn, self.fp), row(self.fn_, self.tp)]
    }

    /// Support-weighted F1 over both classes; `None` when empty.
    pub fn weighted_f1(&self) -> Option<f64> {
        let pos = (self.tp + self.fn_) as f64;
        let neg = (self.tn + self.fp) as f64;
        if pos + neg == 0.0 {
            return None;
        }
        Some((pos * f1(self) + neg * f1(&self.swapped())) / (pos + neg))
    }
}

pub fn f1(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, fn_) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64);
    if tp + fp == 0.0 || tp + fn_ == 0.0 {
        return 0.0;
    }
    let p = tp / (tp + fp);
    let r = tp / (tp + fn_);
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no predictions to score")]
    Empty,
    #[error("recordings disagree on the feature schema ({0})")]
    SchemaMismatch(String),
    #[error(transparent)]
    Examples(#[from] ExampleError),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

pub fn weighted_f1(preds: &[bool], labels: &[bool]) -> Result<f64, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    ConfusionMatrix::from_predictions(preds, labels).weighted_f1().ok_or(EvalError::Empty)
}

/// Hyperparameter search space and inner cross-validation fold count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub grid: Vec<Hyperparams>,
    pub inner_folds: usize,
}

impl Tuning {
    pub fn default_for(n_features: usize) -> Tuning {
        Tuning { grid: forest::default_grid(n_features, forest::DEFAULT_TREES), inner_folds: DEFAULT_INNER_FOLDS }
    }
}

/// A scored test example, kept for the pooled breakdowns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub t_ref: f64,
    pub label: bool,
    pub prediction: bool,
    pub score: f64,
    pub segment_kind: SegmentKind,
    pub environment: Environment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub participant: String,
    pub hyperparams: Hyperparams,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    pub weighted_f1: f64,
    #[serde(skip)]
    pub scored: Vec<Scored>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub participant: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum FoldOutcome {
    Scored(FoldResult),
    Skipped(SkippedFold),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub key: String,
    pub n: u64,
    pub weighted_f1: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub normalized: [[f64; 2]; 2],
}

impl Breakdown {
    fn new(key: &str, cm: ConfusionMatrix) -> Breakdown {
        Breakdown { key: key.to_string(), n: cm.total(), weighted_f1: cm.weighted_f1(), confusion: cm, normalized: cm.normalized() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: Task,
    pub group: FeatureGroup,
    pub target_window: f64,
    pub feature_window: f64,
    pub stride: f64,
    pub seed: u64,
    pub n_examples: usize,
    pub n_features: usize,
    pub folds: Vec<FoldResult>,
    pub skipped: Vec<SkippedFold>,
    /// Over scored folds; `None` when every fold was skipped.
    pub mean_f1: Option<f64>,
    /// Population standard deviation over scored folds.
    pub std_f1: Option<f64>,
    pub pooled: Breakdown,
    pub by_segment: Vec<Breakdown>,
    pub by_environment: Vec<Breakdown>,
}

/// Examples of every recording, in recording order.
pub fn prepare(recordings: &[Recording], cfg: &TaskConfig, group: FeatureGroup) -> Result<Vec<Example>, EvalError> {
    cfg.validate()?;
    if let Some(first) = recordings.first() {
        if let Some(other) = recordings.iter().find(|r| r.config != first.config) {
            return Err(EvalError::SchemaMismatch(alloc::format!(
                "{} and {} use different class, scene or app lists",
                first.participant_id, other.participant_id
            )));
        }
    }
    let mut out = Vec::new();
    for rec in recordings {
        out.extend(generate_with(&FeatureExtractor::new(rec), rec, cfg, group)?);
    }
    Ok(out)
}

/// Balance, tune, train, balance the test set and score one fold. The
/// seed is derived from the participant id so folds can run in any order.
pub fn evaluate_fold(examples: &[Example], fold: &Fold, tuning: &Tuning, seed: u64) -> Result<FoldOutcome, EvalError> {
    let fold_seed = seed_for_label(seed, &fold.participant);
    let skipped = |what: &str, e: &dyn core::fmt::Display| {
        Ok(FoldOutcome::Skipped(SkippedFold { participant: fold.participant.clone(), reason: alloc::format!("{what}: {e}") }))
    };
    let train_labels: Vec<bool> = fold.train.iter().map(|&i| examples[i].label).collect();
    let train_keep = match balance_indices(&train_labels, mix_seed(fold_seed, 0)) {
        Ok(k) => k,
        Err(ExampleError::SingleClass) => return skipped("training set", &ExampleError::SingleClass),
        Err(e) => return Err(e.into()),
    };
    let test_labels: Vec<bool> = fold.test.iter().map(|&i| examples[i].label).collect();
    let test_keep = match balance_indices(&test_labels, mix_seed(fold_seed, 3)) {
        Ok(k) => k,
        Err(ExampleError::SingleClass) => return skipped("test set", &ExampleError::SingleClass),
        Err(e) => return Err(e.into()),
    };
    let train: Vec<&Example> = train_keep.iter().map(|&k| &examples[fold.train[k]]).collect();
    let test: Vec<&Example> = test_keep.iter().map(|&k| &examples[fold.test[k]]).collect();

    let hp = forest::tune_refs(&train, &tuning.grid, tuning.inner_folds, mix_seed(fold_seed, 1))?;
    let model = forest::train_refs(&train, &hp, mix_seed(fold_seed, 2))?;
    let mut confusion = ConfusionMatrix::default();
    let mut scored = Vec::with_capacity(test.len());
    for e in &test {
        let p = model.predict(&e.features)?;
        confusion.add(p.label, e.label);
        scored.push(Scored {
            t_ref: e.t_ref,
            label: e.label,
            prediction: p.label,
            score: p.score,
            segment_kind: e.segment_kind,
            environment: e.environment,
        });
    }
    Ok(FoldOutcome::Scored(FoldResult {
        participant: fold.participant.clone(),
        hyperparams: hp,
        n_train: train.len(),
        n_test: test.len(),
        confusion,
        weighted_f1: confusion.weighted_f1().ok_or(EvalError::Empty)?,
        scored,
    }))
}

/// Combines fold outcomes, given in participant order, into a report.
pub fn assemble(
    examples: &[Example],
    cfg: &TaskConfig,
    group: FeatureGroup,
    seed: u64,
    outcomes: Vec<FoldOutcome>,
) -> ExperimentReport {
    let mut folds = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            FoldOutcome::Scored(f) => folds.push(f),
            FoldOutcome::Skipped(s) => skipped.push(s),
        }
    }
    let f1s: Vec<f64> = folds.iter().map(|f| f.weighted_f1).collect();
    let (mean_f1, std_f1) = if f1s.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&f1s);
        (Some(m), Some(s))
    };

    let mut pooled = ConfusionMatrix::default();
    let mut by_segment: BTreeMap<SegmentKind, ConfusionMatrix> = BTreeMap::new();
    let mut by_env: BTreeMap<Environment, ConfusionMatrix> = BTreeMap::new();
    for s in folds.iter().flat_map(|f| &f.scored) {
        pooled.add(s.prediction, s.label);
        by_segment.entry(s.segment_kind).or_default().add(s.prediction, s.label);
        by_env.entry(s.environment).or_default().add(s.prediction, s.label);
    }
    ExperimentReport {
        task: cfg.task,
        group,
        target_window: cfg.target_window,
        feature_window: cfg.feature_window,
        stride: cfg.stride,
        seed,
        n_examples: examples.len(),
        n_features: examples.first().map_or(0, |e| e.features.len()),
        folds,
        skipped,
        mean_f1,
        std_f1,
        pooled: Breakdown::new("all", pooled),
        by_segment: [SegmentKind::Working, SegmentKind::Waiting]
            .iter()
            .map(|k| Breakdown::new(k.name(), by_segment.get(k).copied().unwrap_or_default()))
            .collect(),
        by_environment: Environment::ALL
            .iter()
            .map(|e| Breakdown::new(e.name(), by_env.get(e).copied().unwrap_or_default()))
            .collect(),
    }
}

/// Full leave-one-person-out experiment, folds evaluated in order.
pub fn run_experiment(
    recordings: &[Recording],
    cfg: &TaskConfig,
    group: FeatureGroup,
    tuning: &Tuning,
    seed: u64,
) -> Result<ExperimentReport, EvalError> {
    let examples = prepare(recordings, cfg, group)?;
    let folds = lopo_folds(&examples)?;
    let outcomes = folds
        .iter()
        .map(|f| evaluate_fold(&examples, f, tuning, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(&examples, cfg, group, seed, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cm(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&cm(1, 0, 0, 0)), 1.0);
        assert_eq!(f1(&cm(0, 3, 2, 5)), 0.0);
        assert_eq!(f1(&cm(0, 0, 0, 9)), 0.0);
        assert_abs_diff_eq!(f1(&cm(3, 1, 2, 0)), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_f1_examples() {
        assert_eq!(weighted_f1(&[true, false, true], &[true, false, true]).unwrap(), 1.0);
        // Constant positive predictor on balanced labels: positive F1 2/3, negative 0.
        let w = weighted_f1(&[true; 4], &[true, true, false, false]).unwrap();
        assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-12);
        // Supports 240/60 with per-class F1 0.75 and 0.5.
        let m = cm(150, 10, 90, 50).swapped();
        assert_abs_diff_eq!(f1(&m.swapped()), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(f1(&m), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.weighted_f1().unwrap(), 0.70, epsilon = 1e-12);
    }

    #[test]
    fn weighted_f1_errors() {
        assert_eq!(weighted_f1(&[true], &[true, false]), Err(EvalError::LengthMismatch { preds: 1, labels: 2 }));
        assert_eq!(weighted_f1(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn normalized_rows() {
        let n = cm(3, 1, 1, 3).normalized();
        assert_eq!(n, [[0.75, 0.25], [0.25, 0.75]]);
        assert_eq!(cm(0, 0, 0, 2).normalized()[1], [0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn f1_scale_invariant(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, k in 1u64..20) {
            let a = f1(&cm(tp, fp, fn_, 0));
            let b = f1(&cm(tp * k, fp * k, fn_ * k, 0));
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn weighted_f1_class_symmetric(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let (p, l): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let np: Vec<bool> = p.iter().map(|b| !b).collect();
            let nl: Vec<bool> = l.iter().map(|b| !b).collect();
            let a = weighted_f1(&p, &l).unwrap();
            let b = weighted_f1(&np, &nl).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn assemble_mean_matches_folds() {
        let fold = |p: &str, f: f64| {
            FoldOutcome::Scored(FoldResult {
                participant: p.into(),
                hyperparams: Hyperparams { n_trees: 1, max_depth: 1, min_samples_leaf: 1, n_features_per_split: 1 },
                n_train: 0,
                n_test: 0,
                confusion: ConfusionMatrix::default(),
                weighted_f1: f,
                scored: vec![],
            })
        };
        let outcomes = vec![
            fold("a", 0.5),
            FoldOutcome::Skipped(SkippedFold { participant: "b".into(), reason: "x".into() }),
            fold("c", 0.9),
        ];
        let r = assemble(&[], &TaskConfig::new(Task::PrimaryFocus), FeatureGroup::Phone, 0, outcomes);
        assert_eq!(r.folds.len(), 2);
        assert_eq!(r.skipped.len(), 1);
        assert_abs_diff_eq!(r.mean_f1.unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.std_f1.unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(r.by_environment.len(), 6);
        assert_eq!(r.by_segment.len(), 2);
    }
}
