//! Run configuration: a JSON file with command-line overrides, resolved to
//! fully explicit values before anything runs.

use std::path::{Path, PathBuf};

use foresight_core::eval::Tuning;
use foresight_core::examples::{Task, TaskConfig};
use foresight_core::features::FeatureGroup;
use foresight_core::forest::{Hyperparams, DEFAULT_INNER_FOLDS, DEFAULT_TREES};
use foresight_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::io::{read_json, IoError};

/// Features tried per split, relative to the feature count `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCount {
    Sqrt,
    Third,
    Count(u32),
}

impl FeatureCount {
    pub fn resolve(self, d: usize) -> u32 {
        let d = d.max(1);
        let v = match self {
            FeatureCount::Sqrt => (d as f64).sqrt().round() as u32,
            FeatureCount::Third => (d as f64 / 3.0).round() as u32,
            FeatureCount::Count(n) => n,
        };
        v.clamp(1, d as u32)
    }
}

/// Hyperparameter grid, independent of the feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_trees: u32,
    pub max_depth: Vec<u32>,
    pub min_samples_leaf: Vec<u32>,
    pub features_per_split: Vec<FeatureCount>,
    pub inner_folds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_trees: DEFAULT_TREES,
            max_depth: vec![4, 8, 16],
            min_samples_leaf: vec![1, 5, 20],
            features_per_split: vec![FeatureCount::Sqrt, FeatureCount::Third],
            inner_folds: DEFAULT_INNER_FOLDS,
        }
    }
}

impl GridSpec {
    /// Concrete grid for `d` features; duplicates after rounding are dropped.
    pub fn resolve(&self, d: usize) -> Tuning {
        let mut grid: Vec<Hyperparams> = Vec::new();
        for &max_depth in &self.max_depth {
            for &min_samples_leaf in &self.min_samples_leaf {
                for fc in &self.features_per_split {
                    let hp = Hyperparams { n_trees: self.n_trees, max_depth, min_samples_leaf, n_features_per_split: fc.resolve(d) };
                    if !grid.contains(&hp) {
                        grid.push(hp);
                    }
                }
            }
        }
        Tuning { grid, inner_folds: self.inner_folds }
    }

    fn validate(&self) -> Result<(), String> {
        if self.n_trees == 0 || self.inner_folds < 2 {
            return Err("grid needs n_trees >= 1 and inner_folds >= 2".into());
        }
        if self.max_depth.is_empty() || self.min_samples_leaf.is_empty() || self.features_per_split.is_empty() {
            return Err("every grid axis needs at least one value".into());
        }
        if self.max_depth.contains(&0) || self.min_samples_leaf.contains(&0) || self.features_per_split.contains(&FeatureCount::Count(0)) {
            return Err("grid values must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus directory; `run` generates one from `synth` when absent.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub task: Task,
    pub feature_window: f64,
    /// Defaults to the task's customary window.
    pub target_window: Option<f64>,
    pub stride: f64,
    pub custom_target: bool,
    pub group: FeatureGroup,
    pub grid: GridSpec,
    pub seed: u64,
    /// 0 uses every core. Results do not depend on it.
    pub workers: usize,
    /// Generator settings; its seed is always the run seed.
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let task = TaskConfig::new(Task::ShiftToEnvironment);
        RunConfig {
            data: None,
            out: PathBuf::from("out"),
            task: task.task,
            feature_window: task.feature_window,
            target_window: None,
            stride: task.stride,
            custom_target: false,
            group: FeatureGroup::ProposedPlusGaze,
            grid: GridSpec::default(),
            seed: 0,
            workers: 0,
            synth: SynthConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub task: Option<Task>,
    pub group: Option<FeatureGroup>,
    pub target_window: Option<f64>,
    pub stride: Option<f64>,
    pub workers: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Read(#[from] IoError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<RunConfig, ConfigError> {
        let mut cfg: RunConfig = match path {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(t) = o.task {
            // A different task brings its own customary window.
            if t != cfg.task {
                cfg.target_window = None;
            }
            cfg.task = t;
        }
        if let Some(v) = o.target_window {
            cfg.target_window = Some(v);
        }
        if let Some(v) = &o.data {
            cfg.data = Some(v.clone());
        }
        if let Some(v) = &o.out {
            cfg.out = v.clone();
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.group {
            cfg.group = v;
        }
        if let Some(v) = o.stride {
            cfg.stride = v;
        }
        if let Some(v) = o.workers {
            cfg.workers = v;
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Fills defaults so the config is fully explicit, then checks it.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        self.target_window.get_or_insert(self.task.default_target_window());
        self.synth.seed = self.seed;
        self.task_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grid.validate().map_err(ConfigError::Invalid)?;
        self.synth.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn task_config(&self) -> TaskConfig {
        TaskConfig {
            task: self.task,
            feature_window: self.feature_window,
            target_window: self.target_window.unwrap_or(self.task.default_target_window()),
            stride: self.stride,
            custom_target: self.custom_target,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use foresight_core::forest::default_grid;

    #[test]
    fn default_grid_spec_matches_core_grid() {
        for d in [1, 2, 9, 81, 457] {
            assert_eq!(GridSpec::default().resolve(d).grid, default_grid(d, DEFAULT_TREES));
        }
    }

    #[test]
    fn defaults_resolve_to_task_window() {
        let c = RunConfig::load(None, &Overrides { task: Some(Task::ShiftToDevice), ..Overrides::default() }).unwrap();
        assert_eq!(c.target_window, Some(10.0));
        let c = RunConfig::load(None, &Overrides { task: Some(Task::PrimaryFocus), ..Overrides::default() }).unwrap();
        assert_eq!(c.target_window, Some(5.0));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "task": "primary_focus", "target_window": 1, "stride": 1.0}"#).unwrap();
        let c = RunConfig::load(Some(&p), &Overrides { seed: Some(9), ..Overrides::default() }).unwrap();
        assert_eq!((c.seed, c.task, c.target_window, c.stride, c.synth.seed), (9, Task::PrimaryFocus, Some(1.0), 1.0, 9));
        let c = RunConfig::load(Some(&p), &Overrides { target_window: Some(10.0), ..Overrides::default() }).unwrap();
        assert_eq!(c.target_window, Some(10.0));
    }

    #[test]
    fn invalid_values_rejected() {
        let o = Overrides { target_window: Some(3.0), ..Overrides::default() };
        assert!(matches!(RunConfig::load(None, &o), Err(ConfigError::Invalid(_))));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"sede": 3}"#).unwrap();
        assert!(matches!(RunConfig::load(Some(&p), &Overrides::default()), Err(ConfigError::Read(_))));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::load(None, &Overrides::default()).unwrap();
        let back: RunConfig = serde_json::from_value(c.to_value()).unwrap();
        assert_eq!(back, c);
    }
}
