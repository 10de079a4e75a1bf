//! Synthetic corpora with planted cues, and an independent labeling oracle.
//!
//! Baseline streams are generated without looking at the attention
//! timeline, so with `cue_probability = 0` nothing observable predicts a
//! shift. Cues are the only planted structure:
//!
//! * before a shift to the device: a phone IMU variance burst over
//!   `[s - lead, s)` and a screen-on event at `s - lead`;
//! * before a shift to the environment: extra faces (and people) in the
//!   egocentric frames over `[s - lead, s)`.

mod generator;
mod oracle;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::recording::RecordingConfig;
use crate::timeline::ShiftDirection;

pub use generator::{generate, generate_participant, generate_with_truth, participant_id};
pub use oracle::{oracle_label, OracleError, OracleLabel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub median: f64,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseLevels {
    /// Degrees of jitter around each gaze hold.
    pub gaze_jitter: f64,
    /// Probability that a gaze hold ends in a blink.
    pub blink_probability: f64,
    /// m/s²
    pub accel: f64,
    /// rad/s
    pub gyro: f64,
    /// Degrees.
    pub orientation: f64,
    /// Mean faces per frame.
    pub faces: f64,
    /// Touches per second.
    pub touch_rate: f64,
    /// Probability a frame's scene class is not the block environment.
    pub scene_confusion: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        NoiseLevels {
            gaze_jitter: 0.15,
            blink_probability: 0.05,
            accel: 0.3,
            gyro: 0.05,
            orientation: 2.0,
            faces: 0.3,
            touch_rate: 0.5,
            scene_confusion: 0.2,
        }
    }
}

/// Size of the planted cues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueShape {
    /// Extra accelerometer noise (m/s²) during a device cue.
    pub accel_burst: f64,
    /// Extra gyroscope noise (rad/s) during a device cue.
    pub gyro_burst: f64,
    /// Screen is forced off for this long before the screen-on event.
    pub screen_off_before: f64,
    /// Screen stays forced on for this long after the shift.
    pub screen_on_after: f64,
    /// Extra mean faces per frame during an environment cue.
    pub face_boost: f64,
}

impl Default for CueShape {
    fn default() -> Self {
        CueShape { accel_burst: 3.0, gyro_burst: 1.5, screen_off_before: 0.3, screen_on_after: 1.0, face_boost: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamRates {
    pub gaze_hz: f64,
    pub imu_hz: f64,
    pub frame_hz: f64,
    /// Seconds between scene maps.
    pub map_period: f64,
}

impl Default for StreamRates {
    fn default() -> Self {
        StreamRates { gaze_hz: 30.0, imu_hz: 100.0, frame_hz: 24.0, map_period: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_participants: u32,
    /// Seconds.
    pub session_length: f64,
    /// Chat blocks, each in its own equal slice of the session.
    pub n_blocks: u32,
    pub questions_per_block: u32,
    pub working_duration: LogNormal,
    /// Waiting durations are drawn uniformly from these.
    pub waiting_durations: Vec<f64>,
    pub device_dwell: LogNormal,
    pub environment_dwell: LogNormal,
    pub cue_probability: f64,
    /// Lead range `[lo, hi]` in seconds.
    pub cue_lead: (f64, f64),
    pub cue_shape: CueShape,
    pub noise: NoiseLevels,
    pub rates: StreamRates,
    pub recording: RecordingConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_participants: 10,
            session_length: 5400.0,
            n_blocks: 12,
            questions_per_block: 6,
            working_duration: LogNormal { median: 40.0, sigma: 0.3 },
            waiting_durations: alloc::vec![10.0, 15.0, 20.0, 30.0, 45.0],
            device_dwell: LogNormal { median: 20.0, sigma: 0.6 },
            environment_dwell: LogNormal { median: 6.0, sigma: 0.6 },
            cue_probability: 0.0,
            cue_lead: (0.5, 2.0),
            cue_shape: CueShape::default(),
            noise: NoiseLevels::default(),
            rates: StreamRates::default(),
            recording: RecordingConfig::default(),
            seed: 0,
        }
    }
}

/// Gap left at the end of every block slice so that blocks never touch.
pub(crate) const BLOCK_GAP: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("invalid synthetic corpus configuration: {0}")]
pub struct ConfigError(pub &'static str);

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.n_participants == 0 {
            return Err(ConfigError("n_participants must be at least 1"));
        }
        if !pos(self.session_length) {
            return Err(ConfigError("session_length must be positive"));
        }
        if self.n_blocks == 0 || self.questions_per_block == 0 {
            return Err(ConfigError("n_blocks and questions_per_block must be at least 1"));
        }
        if self.session_length / f64::from(self.n_blocks) <= 2.0 * BLOCK_GAP {
            return Err(ConfigError("blocks do not fit in the session"));
        }
        for d in [self.working_duration, self.device_dwell, self.environment_dwell] {
            if !pos(d.median) || !nonneg(d.sigma) {
                return Err(ConfigError("log-normal median must be positive and sigma non-negative"));
            }
        }
        if self.waiting_durations.is_empty() || !self.waiting_durations.iter().all(|&w| pos(w)) {
            return Err(ConfigError("waiting_durations must be non-empty and positive"));
        }
        if !(0.0..=1.0).contains(&self.cue_probability) {
            return Err(ConfigError("cue_probability must lie in [0, 1]"));
        }
        let (lo, hi) = self.cue_lead;
        if !(pos(lo) && pos(hi) && lo <= hi) {
            return Err(ConfigError("cue_lead must be a positive range"));
        }
        let c = &self.cue_shape;
        let n = &self.noise;
        let all_nonneg = [c.accel_burst, c.gyro_burst, c.screen_off_before, c.screen_on_after, c.face_boost]
            .into_iter()
            .chain([n.gaze_jitter, n.accel, n.gyro, n.orientation, n.faces, n.touch_rate])
            .all(nonneg);
        if !all_nonneg {
            return Err(ConfigError("noise levels and cue sizes must be non-negative"));
        }
        if !(0.0..=1.0).contains(&n.blink_probability) || !(0.0..=1.0).contains(&n.scene_confusion) {
            return Err(ConfigError("noise probabilities must lie in [0, 1]"));
        }
        let r = &self.rates;
        if !(pos(r.gaze_hz) && pos(r.imu_hz) && pos(r.frame_hz) && pos(r.map_period)) {
            return Err(ConfigError("stream rates must be positive"));
        }
        if self.recording.classes.is_empty() || self.recording.scenes.is_empty() || self.recording.frame_pixel_total == 0 {
            return Err(ConfigError("recording config needs classes, scenes and a pixel total"));
        }
        Ok(())
    }
}

/// A shift as the generator placed it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedShift {
    pub t: f64,
    pub direction: ShiftDirection,
    /// Lead of the planted cue, if this shift got one.
    pub cue_lead: Option<f64>,
}

/// Generator bookkeeping for one participant, written alongside the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub participant_id: String,
    pub shifts_to_environment: u32,
    pub shifts_to_device: u32,
    pub annotated_time: f64,
    pub device_time: f64,
    pub environment_time: f64,
    /// Shifts inside annotated blocks, in time order.
    pub shifts: Vec<PlantedShift>,
}
