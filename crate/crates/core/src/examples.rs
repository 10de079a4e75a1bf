//! Labeled prediction examples.
//!
//! An example sits at a reference time `t_ref` on the stride grid
//! (`t_ref = k * stride`). Features come from the feature window
//! `[t_ref − feature_window, t_ref)`, the label from the target window
//! `(t_ref, t_ref + target_window]`. Both windows must lie inside a single
//! contiguous annotated span and a single segment.
//!
//! Shift tasks only emit examples whose current attention (the interval
//! containing `t_ref`) is on the shift's source: the device for shifts to
//! the environment and vice versa. Primary focus is emitted everywhere and
//! is positive when more than half of the target window is on the device.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureExtractor, FeatureGroup, FeatureVector};
use crate::recording::{Attention, Environment, Recording, SegmentKind};
use crate::timeline::{attention_at, attention_time, contiguous_spans, interval_index_at, shift_events, ShiftDirection, ShiftEvent};
use crate::util::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ShiftToEnvironment,
    ShiftToDevice,
    PrimaryFocus,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::ShiftToEnvironment, Task::ShiftToDevice, Task::PrimaryFocus];

    pub fn name(self) -> &'static str {
        match self {
            Task::ShiftToEnvironment => "shift_to_environment",
            Task::ShiftToDevice => "shift_to_device",
            Task::PrimaryFocus => "primary_focus",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Best-performing horizon per task: 1 s, 10 s and 5 s.
    pub fn default_target_window(self) -> f64 {
        match self {
            Task::ShiftToEnvironment => 1.0,
            Task::ShiftToDevice => 10.0,
            Task::PrimaryFocus => 5.0,
        }
    }
}

/// Target window sizes evaluated by default.
pub const TARGET_WINDOWS: [f64; 3] = [1.0, 5.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: Task,
    pub feature_window: f64,
    pub target_window: f64,
    pub stride: f64,
    /// Permit target windows other than 1, 5 and 10 s.
    #[serde(default)]
    pub custom_target: bool,
}

impl TaskConfig {
    pub fn new(task: Task) -> TaskConfig {
        TaskConfig {
            task,
            feature_window: 1.0,
            target_window: task.default_target_window(),
            stride: 0.5,
            custom_target: false,
        }
    }

    pub fn with_target(mut self, target_window: f64) -> TaskConfig {
        self.target_window = target_window;
        self
    }

    pub fn validate(&self) -> Result<(), ExampleError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.feature_window) && positive(self.target_window) && positive(self.stride)) {
            return Err(ExampleError::InvalidConfig("windows and stride must be positive"));
        }
        if !self.custom_target && !TARGET_WINDOWS.contains(&self.target_window) {
            return Err(ExampleError::InvalidConfig("target window must be 1, 5 or 10 s"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExampleError {
    #[error("invalid task configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("balancing needs both classes present")]
    SingleClass,
    #[error("leave-one-person-out needs at least two participants, found {found}")]
    TooFewParticipants { found: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub participant_id: String,
    /// End of the feature window, start of the target window.
    pub t_ref: f64,
    pub features: FeatureVector,
    pub label: bool,
    pub segment_kind: SegmentKind,
    pub environment: Environment,
    pub task: Task,
}

/// Everything about an example except its features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelPoint {
    pub t_ref: f64,
    pub label: bool,
    pub segment_kind: SegmentKind,
    pub environment: Environment,
}

/// Candidate reference times: stride-grid points whose feature and target
/// windows fit inside one span and one segment, paired with that segment's kind.
fn reference_times(rec: &Recording, cfg: &TaskConfig) -> Vec<(f64, SegmentKind)> {
    let spans = contiguous_spans(&rec.annotations);
    let mut out = Vec::new();
    for seg in &rec.segments.segments {
        for &(a, b) in &spans {
            let lo = a.max(seg.start);
            let hi = b.min(seg.end);
            if hi - lo < cfg.feature_window + cfg.target_window {
                continue;
            }
            let first = libm::ceil((lo + cfg.feature_window) / cfg.stride) as i64 - 1;
            let last = libm::floor((hi - cfg.target_window) / cfg.stride) as i64 + 1;
            for k in first..=last {
                let t_ref = k as f64 * cfg.stride;
                if t_ref - cfg.feature_window >= lo && t_ref + cfg.target_window <= hi {
                    out.push((t_ref, seg.kind));
                }
            }
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out.dedup_by(|x, y| x.0 == y.0);
    out
}

fn any_shift(events: &[ShiftEvent], direction: ShiftDirection, after: f64, until: f64) -> bool {
    let k = events.partition_point(|e| e.t <= after);
    events[k..].iter().take_while(|e| e.t <= until).any(|e| e.direction == direction)
}

/// Label and context for every eligible reference time.
pub fn label_points(rec: &Recording, cfg: &TaskConfig) -> Vec<LabelPoint> {
    let track = &rec.annotations;
    let events = shift_events(track);
    let tw = cfg.target_window;
    reference_times(rec, cfg)
        .into_iter()
        .filter_map(|(t_ref, segment_kind)| {
            let current = attention_at(track, t_ref)?;
            let label = match cfg.task {
                Task::ShiftToEnvironment => {
                    if current != Attention::Device {
                        return None;
                    }
                    any_shift(&events, ShiftDirection::ToEnvironment, t_ref, t_ref + tw)
                }
                Task::ShiftToDevice => {
                    if current != Attention::Environment {
                        return None;
                    }
                    any_shift(&events, ShiftDirection::ToDevice, t_ref, t_ref + tw)
                }
                Task::PrimaryFocus => attention_time(track, t_ref, t_ref + tw).0 / tw > 0.5,
            };
            let environment = track.intervals[interval_index_at(track, t_ref)?].environment;
            Some(LabelPoint { t_ref, label, segment_kind, environment })
        })
        .collect()
}

/// Examples of one recording, reusing a prepared extractor.
pub fn generate_with(extractor: &FeatureExtractor<'_>, rec: &Recording, cfg: &TaskConfig, group: FeatureGroup) -> Result<Vec<Example>, ExampleError> {
    cfg.validate()?;
    Ok(label_points(rec, cfg)
        .into_iter()
        .filter_map(|p| {
            let features = extractor.extract(p.t_ref - cfg.feature_window, p.t_ref, group).ok()?;
            Some(Example {
                participant_id: rec.participant_id.clone(),
                t_ref: p.t_ref,
                features,
                label: p.label,
                segment_kind: p.segment_kind,
                environment: p.environment,
                task: cfg.task,
            })
        })
        .collect())
}

pub fn generate(rec: &Recording, cfg: &TaskConfig, group: FeatureGroup) -> Result<Vec<Example>, ExampleError> {
    generate_with(&FeatureExtractor::new(rec), rec, cfg, group)
}

/// Indices of a class-balanced subset: the majority class is undersampled
/// without replacement down to the minority count. Indices come back in
/// input order.
pub fn balance_indices(labels: &[bool], seed: u64) -> Result<Vec<usize>, ExampleError> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(ExampleError::SingleClass);
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = rng_from(seed);
    let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|i| majority[i])
        .collect();
    keep.extend(minority);
    keep.sort_unstable();
    Ok(keep)
}

pub fn balance(examples: &[Example], seed: u64) -> Result<Vec<Example>, ExampleError> {
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    Ok(balance_indices(&labels, seed)?.into_iter().map(|i| examples[i].clone()).collect())
}

/// One leave-one-person-out split, as indices into the example list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub participant: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    pub fn split<'e>(&self, examples: &'e [Example]) -> (Vec<&'e Example>, Vec<&'e Example>) {
        (
            self.train.iter().map(|&i| &examples[i]).collect(),
            self.test.iter().map(|&i| &examples[i]).collect(),
        )
    }
}

/// Distinct participant ids in sorted order.
pub fn participants(examples: &[Example]) -> Vec<String> {
    examples.iter().map(|e| e.participant_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// One fold per participant, ordered by participant id.
pub fn lopo_folds(examples: &[Example]) -> Result<Vec<Fold>, ExampleError> {
    let ids = participants(examples);
    if ids.len() < 2 {
        return Err(ExampleError::TooFewParticipants { found: ids.len() });
    }
    Ok(ids
        .into_iter()
        .map(|p| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..examples.len()).partition(|&i| examples[i].participant_id == p);
            Fold { participant: p, train, test }
        })
        .collect())
}
