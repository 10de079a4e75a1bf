//! Session data model.
//!
//! A [`Recording`] holds every timestamped stream of one participant session
//! together with the ground-truth attention annotation and the chat-block
//! segment schedule. Field names double as the on-disk record schema used by
//! the `foresight` crate (JSON Lines, one record per sample, `t` first).
//!
//! Time is in seconds, gaze angles in degrees in scene-camera coordinates
//! (origin on the optical axis, +x right, +y up).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Side length of the at-gaze lookup grids (cells per axis).
pub const GRID_SIZE: usize = 32;
/// Cells in one at-gaze lookup grid.
pub const GRID_CELLS: usize = GRID_SIZE * GRID_SIZE;
/// Scene camera field of view covered by the lookup grids, per axis.
pub const FIELD_OF_VIEW_DEG: f64 = 175.0;
/// Histogram bins used for map entropy.
pub const ENTROPY_BINS: usize = 32;

/// Pascal VOC vocabulary used for the per-class scene features.
pub const DEFAULT_CLASSES: [&str; 20] = [
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

pub const DEFAULT_APPS: [&str; 6] = ["browser", "chat", "mail", "maps", "music", "social"];

/// 640x480 scene camera.
pub const DEFAULT_FRAME_PIXELS: u64 = 640 * 480;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Consumers must ignore `x`/`y` of invalid samples.
    pub valid: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// m/s²
    pub accel: [f64; 3],
    /// rad/s
    pub gyro: [f64; 3],
    /// Degrees. Phone only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhoneEventKind {
    Touch,
    ScreenOn,
    ScreenOff,
    AppStart(String),
    AppStop(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhoneEvent {
    pub t: f64,
    pub kind: PhoneEventKind,
}

/// Summary statistics of one dense scene map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub entropy: f64,
}

impl FrameStats {
    /// Statistics of a grid of values. Entropy is the Shannon entropy (nats)
    /// of an [`ENTROPY_BINS`]-bin histogram spanning the value range.
    pub fn from_values(values: &[f64]) -> FrameStats {
        if values.is_empty() {
            return FrameStats::default();
        }
        let (mean, std) = crate::util::mean_std(values);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut entropy = 0.0;
        if max > min {
            let mut bins = [0usize; ENTROPY_BINS];
            let width = max - min;
            for v in values {
                let b = libm::floor((v - min) / width * ENTROPY_BINS as f64) as usize;
                bins[b.min(ENTROPY_BINS - 1)] += 1;
            }
            let n = values.len() as f64;
            for &c in bins.iter().filter(|&&c| c > 0) {
                let p = c as f64 / n;
                entropy -= p * libm::log(p);
            }
        }
        FrameStats {
            mean: mean.clamp(min, max),
            min,
            max,
            std,
            entropy,
        }
    }
}

/// Per-frame scene descriptors produced by upstream vision models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub t: f64,
    pub face_count: u32,
    pub class_presence: Vec<bool>,
    pub class_pixel_counts: Vec<u64>,
    pub class_instance_counts: Vec<u32>,
    /// One-hot over the configured scene classes.
    pub scene_class: Vec<u8>,
    pub saliency: FrameStats,
    pub objectness: FrameStats,
    /// Meters, entropy dimensionless.
    pub depth: FrameStats,
    /// Index into [`Recording::maps`] for at-gaze lookup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<u32>,
}

/// Coarse row-major grids over the camera field of view. Row 0 is the top
/// edge (+y), column 0 the left edge (−x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMaps {
    pub t: f64,
    pub saliency: Vec<f64>,
    pub objectness: Vec<f64>,
    /// Meters.
    pub depth: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attention {
    Device,
    Environment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Cafe,
    Corridor,
    Library,
    Canteen,
    Office,
    Street,
}

impl Environment {
    pub const ALL: [Environment; 6] = [
        Environment::Cafe,
        Environment::Corridor,
        Environment::Library,
        Environment::Canteen,
        Environment::Office,
        Environment::Street,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Environment::Cafe => "cafe",
            Environment::Corridor => "corridor",
            Environment::Library => "library",
            Environment::Canteen => "canteen",
            Environment::Office => "office",
            Environment::Street => "street",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locomotion {
    Sit,
    Stand,
    Walk,
}

impl Locomotion {
    pub const ALL: [Locomotion; 3] = [Locomotion::Sit, Locomotion::Stand, Locomotion::Walk];

    pub fn name(self) -> &'static str {
        match self {
            Locomotion::Sit => "sit",
            Locomotion::Stand => "stand",
            Locomotion::Walk => "walk",
        }
    }
}

/// Half-open `[start, end)` stretch of constant attention and context.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationInterval {
    #[serde(rename = "t")]
    pub start: f64,
    pub end: f64,
    pub attention: Attention,
    pub environment: Environment,
    pub indoor: bool,
    pub locomotion: Locomotion,
}

impl AnnotationInterval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    fn same_context(&self, other: &AnnotationInterval) -> bool {
        self.environment == other.environment
            && self.indoor == other.indoor
            && self.locomotion == other.locomotion
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotationTrack {
    pub intervals: Vec<AnnotationInterval>,
}

impl AnnotationTrack {
    pub fn new(intervals: Vec<AnnotationInterval>) -> Self {
        AnnotationTrack { intervals }
    }

    /// `[first start, last end]`, or `None` for an empty track.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.start, self.intervals.last()?.end))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Working,
    Waiting,
}

impl SegmentKind {
    pub fn name(self) -> &'static str {
        match self {
            SegmentKind::Working => "working",
            SegmentKind::Waiting => "waiting",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(rename = "t")]
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
    pub block: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentSchedule {
    pub segments: Vec<Segment>,
}

impl SegmentSchedule {
    pub fn new(segments: Vec<Segment>) -> Self {
        SegmentSchedule { segments }
    }
}

/// Constants shared by every recording of a corpus. Feature names derive
/// from these lists, so recordings can only be pooled when they agree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingConfig {
    pub frame_pixel_total: u64,
    pub classes: Vec<String>,
    pub scenes: Vec<String>,
    pub apps: Vec<String>,
}

impl Default for RecordingConfig {
    fn default() -> Self {
        RecordingConfig {
            frame_pixel_total: DEFAULT_FRAME_PIXELS,
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            scenes: Environment::ALL.iter().map(|e| e.name().to_string()).collect(),
            apps: DEFAULT_APPS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub participant_id: String,
    pub config: RecordingConfig,
    pub gaze: Vec<GazeSample>,
    pub head_imu: Vec<ImuSample>,
    pub phone_imu: Vec<ImuSample>,
    pub phone_events: Vec<PhoneEvent>,
    pub frames: Vec<FrameFeatures>,
    pub maps: Vec<SceneMaps>,
    pub annotations: AnnotationTrack,
    pub segments: SegmentSchedule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Gaze,
    HeadImu,
    PhoneImu,
    PhoneEvents,
    Frames,
    Maps,
    Annotations,
    Segments,
}

impl Stream {
    pub const ALL: [Stream; 8] = [
        Stream::Gaze,
        Stream::HeadImu,
        Stream::PhoneImu,
        Stream::PhoneEvents,
        Stream::Frames,
        Stream::Maps,
        Stream::Annotations,
        Stream::Segments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Gaze => "gaze",
            Stream::HeadImu => "head_imu",
            Stream::PhoneImu => "phone_imu",
            Stream::PhoneEvents => "phone_events",
            Stream::Frames => "frames",
            Stream::Maps => "maps",
            Stream::Annotations => "annotations",
            Stream::Segments => "segments",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// First invariant violation found in a recording.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{stream} at t={t}: {reason}")]
pub struct ValidationError {
    pub stream: Stream,
    /// Timestamp of the first offending record.
    pub t: f64,
    pub reason: String,
}

fn violation(stream: Stream, t: f64, reason: impl Into<String>) -> ValidationError {
    ValidationError {
        stream,
        t,
        reason: reason.into(),
    }
}

fn finite3(v: &[f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn check_increasing(stream: Stream, times: impl Iterator<Item = f64>) -> Result<(), ValidationError> {
    let mut prev: Option<f64> = None;
    for t in times {
        if !t.is_finite() {
            return Err(violation(stream, t, "non-finite timestamp"));
        }
        if let Some(p) = prev {
            if t <= p {
                return Err(violation(stream, t, format!("timestamp not after previous {p}")));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

fn check_stats(stream: Stream, t: f64, name: &str, s: &FrameStats, unit_range: bool) -> Result<(), ValidationError> {
    let vals = [s.mean, s.min, s.max, s.std, s.entropy];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(violation(stream, t, format!("{name}: non-finite statistic")));
    }
    if !(s.min <= s.mean && s.mean <= s.max) {
        return Err(violation(stream, t, format!("{name}: expected min <= mean <= max")));
    }
    if s.std < 0.0 || s.entropy < 0.0 {
        return Err(violation(stream, t, format!("{name}: negative std or entropy")));
    }
    if unit_range && (s.min < 0.0 || s.max > 1.0) {
        return Err(violation(stream, t, format!("{name}: values outside [0, 1]")));
    }
    Ok(())
}

impl Recording {
    /// Empty recording carrying only an id and the default constants.
    pub fn empty(participant_id: impl Into<String>) -> Recording {
        Recording {
            participant_id: participant_id.into(),
            config: RecordingConfig::default(),
            gaze: Vec::new(),
            head_imu: Vec::new(),
            phone_imu: Vec::new(),
            phone_events: Vec::new(),
            frames: Vec::new(),
            maps: Vec::new(),
            annotations: AnnotationTrack::default(),
            segments: SegmentSchedule::default(),
        }
    }

    /// Checks every type invariant; reports the first violation.
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.validate_gaze()?;
        self.validate_imu(Stream::HeadImu, &self.head_imu, false)?;
        self.validate_imu(Stream::PhoneImu, &self.phone_imu, true)?;
        self.validate_phone_events()?;
        self.validate_maps()?;
        self.validate_frames()?;
        self.validate_annotations()?;
        self.validate_segments()?;
        self.validate_overlap()
    }

    fn validate_gaze(&self) -> Result<(), ValidationError> {
        check_increasing(Stream::Gaze, self.gaze.iter().map(|g| g.t))?;
        for g in &self.gaze {
            if g.valid && !(g.x.is_finite() && g.y.is_finite()) {
                return Err(violation(Stream::Gaze, g.t, "valid sample with non-finite position"));
            }
        }
        Ok(())
    }

    fn validate_imu(&self, stream: Stream, samples: &[ImuSample], orientation_allowed: bool) -> Result<(), ValidationError> {
        check_increasing(stream, samples.iter().map(|s| s.t))?;
        for s in samples {
            if !finite3(&s.accel) || !finite3(&s.gyro) {
                return Err(violation(stream, s.t, "non-finite accelerometer or gyroscope value"));
            }
            match &s.orientation {
                Some(_) if !orientation_allowed => {
                    return Err(violation(stream, s.t, "orientation present on head IMU"));
                }
                Some(o) if !finite3(o) => {
                    return Err(violation(stream, s.t, "non-finite orientation"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn validate_phone_events(&self) -> Result<(), ValidationError> {
        let stream = Stream::PhoneEvents;
        let mut prev = f64::NEG_INFINITY;
        let mut screen: Option<bool> = None;
        let mut app_open: Vec<bool> = alloc::vec![false; self.config.apps.len()];
        for e in &self.phone_events {
            if !e.t.is_finite() {
                return Err(violation(stream, e.t, "non-finite timestamp"));
            }
            if e.t < prev {
                return Err(violation(stream, e.t, format!("timestamp before previous {prev}")));
            }
            prev = e.t;
            match &e.kind {
                PhoneEventKind::Touch => {}
                PhoneEventKind::ScreenOn | PhoneEventKind::ScreenOff => {
                    let on = e.kind == PhoneEventKind::ScreenOn;
                    if screen == Some(on) {
                        return Err(violation(stream, e.t, "screen on/off events do not alternate"));
                    }
                    screen = Some(on);
                }
                PhoneEventKind::AppStart(app) | PhoneEventKind::AppStop(app) => {
                    let starting = matches!(e.kind, PhoneEventKind::AppStart(_));
                    let Some(i) = self.config.apps.iter().position(|a| a == app) else {
                        return Err(violation(stream, e.t, format!("unknown app id {app:?}")));
                    };
                    if app_open[i] == starting {
                        let what = if starting { "started twice" } else { "stopped while not running" };
                        return Err(violation(stream, e.t, format!("app {app:?} {what}")));
                    }
                    app_open[i] = starting;
                }
            }
        }
        Ok(())
    }

    fn validate_maps(&self) -> Result<(), ValidationError> {
        check_increasing(Stream::Maps, self.maps.iter().map(|m| m.t))?;
        for m in &self.maps {
            for (name, grid, unit) in [
                ("saliency", &m.saliency, true),
                ("objectness", &m.objectness, true),
                ("depth", &m.depth, false),
            ] {
                if grid.len() != GRID_CELLS {
                    return Err(violation(Stream::Maps, m.t, format!("{name} grid has {} cells, expected {GRID_CELLS}", grid.len())));
                }
                let ok = grid.iter().all(|v| v.is_finite() && (!unit || (0.0..=1.0).contains(v)) && (unit || *v >= 0.0));
                if !ok {
                    return Err(violation(Stream::Maps, m.t, format!("{name} grid value out of range")));
                }
            }
        }
        Ok(())
    }

    fn validate_frames(&self) -> Result<(), ValidationError> {
        let stream = Stream::Frames;
        check_increasing(stream, self.frames.iter().map(|f| f.t))?;
        let c = self.config.classes.len();
        let s = self.config.scenes.len();
        for f in &self.frames {
            if f.class_presence.len() != c || f.class_pixel_counts.len() != c || f.class_instance_counts.len() != c {
                return Err(violation(stream, f.t, format!("per-class vectors must have length {c}")));
            }
            if f.class_pixel_counts.iter().any(|&p| p > self.config.frame_pixel_total) {
                return Err(violation(stream, f.t, "pixel count exceeds frame pixel total"));
            }
            if f.scene_class.len() != s || f.scene_class.iter().any(|&v| v > 1) || f.scene_class.iter().filter(|&&v| v == 1).count() != 1 {
                return Err(violation(stream, f.t, format!("scene class must be one-hot of length {s}")));
            }
            check_stats(stream, f.t, "saliency", &f.saliency, true)?;
            check_stats(stream, f.t, "objectness", &f.objectness, true)?;
            check_stats(stream, f.t, "depth", &f.depth, false)?;
            if f.depth.min < 0.0 {
                return Err(violation(stream, f.t, "depth: negative distance"));
            }
            if let Some(m) = f.map {
                if m as usize >= self.maps.len() {
                    return Err(violation(stream, f.t, format!("map reference {m} out of range")));
                }
            }
        }
        Ok(())
    }

    fn validate_annotations(&self) -> Result<(), ValidationError> {
        let stream = Stream::Annotations;
        let ivs = &self.annotations.intervals;
        for (i, iv) in ivs.iter().enumerate() {
            if !(iv.start.is_finite() && iv.end.is_finite()) {
                return Err(violation(stream, iv.start, "non-finite bound"));
            }
            if iv.end <= iv.start {
                return Err(violation(stream, iv.start, "interval end not after start"));
            }
            if i > 0 {
                let prev = &ivs[i - 1];
                if iv.start < prev.end {
                    return Err(violation(stream, iv.start, "interval overlaps or precedes previous"));
                }
                if iv.start == prev.end && iv.attention == prev.attention && iv.same_context(prev) {
                    return Err(violation(stream, iv.start, "adjacent intervals with identical attention and context"));
                }
            }
        }
        Ok(())
    }

    fn validate_segments(&self) -> Result<(), ValidationError> {
        let stream = Stream::Segments;
        let segs = &self.segments.segments;
        for (i, s) in segs.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite()) || s.end <= s.start {
                return Err(violation(stream, s.start, "segment end not after start"));
            }
            if i > 0 {
                let prev = &segs[i - 1];
                if s.start < prev.end {
                    return Err(violation(stream, s.start, "segment overlaps or precedes previous"));
                }
                if s.block == prev.block && s.kind == prev.kind {
                    return Err(violation(stream, s.start, "segment kinds do not alternate within block"));
                }
            }
        }
        Ok(())
    }

    fn validate_overlap(&self) -> Result<(), ValidationError> {
        let Some((a0, a1)) = self.annotations.time_range() else {
            return Ok(());
        };
        let ranges = [
            (Stream::Gaze, self.gaze.first().map(|s| s.t), self.gaze.last().map(|s| s.t)),
            (Stream::HeadImu, self.head_imu.first().map(|s| s.t), self.head_imu.last().map(|s| s.t)),
            (Stream::PhoneImu, self.phone_imu.first().map(|s| s.t), self.phone_imu.last().map(|s| s.t)),
            (Stream::PhoneEvents, self.phone_events.first().map(|s| s.t), self.phone_events.last().map(|s| s.t)),
            (Stream::Frames, self.frames.first().map(|s| s.t), self.frames.last().map(|s| s.t)),
        ];
        for (stream, first, last) in ranges {
            if let (Some(first), Some(last)) = (first, last) {
                if first >= a1 || last < a0 {
                    return Err(violation(stream, first, format!("stream does not overlap annotated range [{a0}, {a1})")));
                }
            }
        }
        Ok(())
    }

    /// Earliest and latest timestamp over all streams and annotations.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut see = |a: f64, b: f64| {
            lo = lo.min(a);
            hi = hi.max(b);
        };
        if let (Some(a), Some(b)) = (self.gaze.first(), self.gaze.last()) {
            see(a.t, b.t);
        }
        for s in [&self.head_imu, &self.phone_imu] {
            if let (Some(a), Some(b)) = (s.first(), s.last()) {
                see(a.t, b.t);
            }
        }
        if let (Some(a), Some(b)) = (self.phone_events.first(), self.phone_events.last()) {
            see(a.t, b.t);
        }
        if let (Some(a), Some(b)) = (self.frames.first(), self.frames.last()) {
            see(a.t, b.t);
        }
        if let Some((a, b)) = self.annotations.time_range() {
            see(a, b);
        }
        if let (Some(a), Some(b)) = (self.segments.segments.first(), self.segments.segments.last()) {
            see(a.start, b.end);
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Copy with every timestamp moved by `dt` seconds.
    pub fn time_shifted(&self, dt: f64) -> Recording {
        let mut r = self.clone();
        r.shift_stream(Stream::Gaze, dt);
        r.shift_stream(Stream::HeadImu, dt);
        r.shift_stream(Stream::PhoneImu, dt);
        r.shift_stream(Stream::PhoneEvents, dt);
        r.shift_stream(Stream::Frames, dt);
        r.shift_stream(Stream::Maps, dt);
        r.shift_stream(Stream::Annotations, dt);
        r.shift_stream(Stream::Segments, dt);
        r
    }

    /// Moves one stream by `dt` seconds, e.g. to apply a clock offset.
    pub fn shift_stream(&mut self, stream: Stream, dt: f64) {
        if dt == 0.0 {
            return;
        }
        match stream {
            Stream::Gaze => self.gaze.iter_mut().for_each(|s| s.t += dt),
            Stream::HeadImu => self.head_imu.iter_mut().for_each(|s| s.t += dt),
            Stream::PhoneImu => self.phone_imu.iter_mut().for_each(|s| s.t += dt),
            Stream::PhoneEvents => self.phone_events.iter_mut().for_each(|s| s.t += dt),
            Stream::Frames => self.frames.iter_mut().for_each(|s| s.t += dt),
            Stream::Maps => self.maps.iter_mut().for_each(|s| s.t += dt),
            Stream::Annotations => self.annotations.intervals.iter_mut().for_each(|s| {
                s.start += dt;
                s.end += dt;
            }),
            Stream::Segments => self.segments.segments.iter_mut().for_each(|s| {
                s.start += dt;
                s.end += dt;
            }),
        }
    }
}
