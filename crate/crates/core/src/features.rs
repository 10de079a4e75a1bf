//! Windowed feature extraction.
//!
//! Numeric channels aggregate to mean, min, max, population std and
//! least-squares slope (units per second); binary channels to mean and
//! slope. Samples count toward a window `[t0, t1)` when `t0 <= t < t1`.
//!
//! Discrete phone events are first turned into 0/1 series on a 30 Hz grid
//! anchored at the window start: a touch sets the tick it falls in, screen
//! and app state hold between their on/off events. Three-axis sensors get an
//! extra per-sample Euclidean norm channel. A substream with no samples in
//! the window contributes zeros and clears its `*.present` flag.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gaze::{at_gaze, detect_fixations, FixationParams};
use crate::recording::{FrameFeatures, ImuSample, PhoneEventKind, Recording, RecordingConfig};

/// Rate of the grid that event streams are binarized onto.
pub const BINARY_GRID_HZ: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Egocentric,
    Phone,
    Proposed,
    ProposedPlusGaze,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Egocentric,
        FeatureGroup::Phone,
        FeatureGroup::Proposed,
        FeatureGroup::ProposedPlusGaze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Egocentric => "egocentric",
            FeatureGroup::Phone => "phone",
            FeatureGroup::Proposed => "proposed",
            FeatureGroup::ProposedPlusGaze => "proposed_plus_gaze",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureGroup> {
        FeatureGroup::ALL.into_iter().find(|g| g.name() == s)
    }

    fn parts(self) -> (bool, bool, bool) {
        match self {
            FeatureGroup::Egocentric => (true, false, false),
            FeatureGroup::Phone => (false, true, false),
            FeatureGroup::Proposed => (true, true, false),
            FeatureGroup::ProposedPlusGaze => (true, true, true),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericAgg {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryAgg {
    pub mean: f64,
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("no samples fall inside the window")]
    MissingData,
    #[error("window [{t0}, {t1}) lies outside the recording")]
    WindowOutOfRange { t0: f64, t1: f64 },
}

/// Ordered feature names for one (group, recording constants) pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    pub group: FeatureGroup,
    pub names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(config: &RecordingConfig, group: FeatureGroup) -> FeatureSchema {
        let mut rec = Recording::empty("");
        rec.config = config.clone();
        let mut out = Sink::naming();
        FeatureExtractor::bare(&rec).fill(0.0, 1.0, group, &mut out);
        FeatureSchema {
            group,
            names: out.names.unwrap_or_default(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub schema: Arc<FeatureSchema>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.schema.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Two-pass moments over `(t, v)` pairs, with time measured from `origin`.
fn numeric_from<I>(samples: I, origin: f64) -> Option<NumericAgg>
where
    I: Iterator<Item = (f64, f64)> + Clone,
{
    let mut n = 0usize;
    let (mut st, mut sv) = (0.0, 0.0);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (t, v) in samples.clone() {
        n += 1;
        st += t - origin;
        sv += v;
        min = min.min(v);
        max = max.max(v);
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let (mt, mv) = (st / nf, sv / nf);
    let (mut sxx, mut sxy, mut svv) = (0.0, 0.0, 0.0);
    for (t, v) in samples {
        let dt = t - origin - mt;
        let dv = v - mv;
        sxx += dt * dt;
        sxy += dt * dv;
        svv += dv * dv;
    }
    Some(NumericAgg {
        mean: mv.clamp(min, max),
        min,
        max,
        std: libm::sqrt(svv / nf),
        slope: if sxx > 0.0 { sxy / sxx } else { 0.0 },
    })
}

fn in_window(t: f64, t0: f64, t1: f64) -> bool {
    t0 <= t && t < t1
}

pub fn aggregate_numeric(series: &[(f64, f64)], t0: f64, t1: f64) -> Result<NumericAgg, FeatureError> {
    numeric_from(series.iter().copied().filter(|&(t, _)| in_window(t, t0, t1)), t0).ok_or(FeatureError::MissingData)
}

/// `series` values must be 0 or 1, already on the binarization grid.
pub fn aggregate_binary(series: &[(f64, u8)], t0: f64, t1: f64) -> Result<BinaryAgg, FeatureError> {
    let agg = numeric_from(
        series.iter().filter(|&&(t, _)| in_window(t, t0, t1)).map(|&(t, b)| (t, f64::from(b))),
        t0,
    )
    .ok_or(FeatureError::MissingData)?;
    Ok(BinaryAgg { mean: agg.mean, slope: agg.slope })
}

/// Number of 30 Hz ticks in a window of length `len`.
fn grid_ticks(len: f64) -> usize {
    (libm::round(len * BINARY_GRID_HZ) as usize).max(1)
}

fn grid_time(t0: f64, k: usize) -> f64 {
    t0 + k as f64 / BINARY_GRID_HZ
}

/// Collects values, and names when building a schema.
struct Sink {
    names: Option<Vec<String>>,
    values: Vec<f64>,
}

const NUMERIC_STATS: [&str; 5] = ["mean", "min", "max", "std", "slope"];
const BINARY_STATS: [&str; 2] = ["mean", "slope"];

impl Sink {
    fn naming() -> Sink {
        Sink {
            names: Some(Vec::new()),
            values: Vec::new(),
        }
    }

    fn values(capacity: usize) -> Sink {
        Sink {
            names: None,
            values: Vec::with_capacity(capacity),
        }
    }

    fn numeric(&mut self, name: &str, agg: Option<NumericAgg>) {
        if let Some(names) = &mut self.names {
            names.extend(NUMERIC_STATS.iter().map(|s| format!("{name}.{s}")));
        }
        let a = agg.unwrap_or(NumericAgg { mean: 0.0, min: 0.0, max: 0.0, std: 0.0, slope: 0.0 });
        self.values.extend([a.mean, a.min, a.max, a.std, a.slope]);
    }

    fn binary(&mut self, name: &str, agg: Option<BinaryAgg>) {
        if let Some(names) = &mut self.names {
            names.extend(BINARY_STATS.iter().map(|s| format!("{name}.{s}")));
        }
        let a = agg.unwrap_or(BinaryAgg { mean: 0.0, slope: 0.0 });
        self.values.extend([a.mean, a.slope]);
    }

    fn flag(&mut self, name: &str, present: bool) {
        if let Some(names) = &mut self.names {
            names.push(format!("{name}.present"));
        }
        self.values.push(if present { 1.0 } else { 0.0 });
    }
}

/// Fixation reduced to what the gaze features need.
#[derive(Clone, Copy, Debug)]
struct FixationPoint {
    t_end: f64,
    cx: f64,
    cy: f64,
    /// `[saliency, objectness, depth]` under the centroid.
    at_gaze: Option<[f64; 3]>,
}

/// On/off state changes of one held state (screen, an app).
#[derive(Clone, Debug, Default)]
struct StateTrack {
    initial: bool,
    changes: Vec<(f64, bool)>,
}

impl StateTrack {
    fn at(&self, t: f64) -> bool {
        let k = self.changes.partition_point(|&(ct, _)| ct <= t);
        if k == 0 {
            self.initial
        } else {
            self.changes[k - 1].1
        }
    }
}

/// Per-recording indices that make repeated window extraction cheap.
///
/// Fixations, at-gaze values and phone state tracks are computed once; each
/// [`extract`](FeatureExtractor::extract) call then touches only the
/// samples inside its window.
pub struct FeatureExtractor<'a> {
    rec: &'a Recording,
    fixations: Vec<FixationPoint>,
    touches: Vec<f64>,
    screen: StateTrack,
    apps: Vec<StateTrack>,
    schemas: [Arc<FeatureSchema>; 4],
    range: Option<(f64, f64)>,
}

fn slice_by_time<T>(items: &[T], t0: f64, t1: f64, time: impl Fn(&T) -> f64) -> &[T] {
    let lo = items.partition_point(|x| time(x) < t0);
    let hi = items.partition_point(|x| time(x) < t1);
    &items[lo..hi.max(lo)]
}

fn norm3(v: &[f64; 3]) -> f64 {
    libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(rec: &'a Recording) -> FeatureExtractor<'a> {
        Self::with_params(rec, &FixationParams::default())
    }

    pub fn with_params(rec: &'a Recording, params: &FixationParams) -> FeatureExtractor<'a> {
        let fixations = detect_fixations(&rec.gaze, params)
            .into_iter()
            .map(|f| {
                let mid = 0.5 * (f.t_start + f.t_end);
                let k = rec.frames.partition_point(|fr| fr.t <= mid);
                let frame = rec.frames.get(k.saturating_sub(1));
                let at = frame
                    .and_then(|fr| at_gaze(fr, &rec.maps, f.cx, f.cy).ok())
                    .map(|a| [a.saliency, a.objectness, a.depth]);
                FixationPoint { t_end: f.t_end, cx: f.cx, cy: f.cy, at_gaze: at }
            })
            .collect();
        let mut touches = Vec::new();
        let mut screen = StateTrack::default();
        let mut apps: Vec<StateTrack> = alloc::vec![StateTrack::default(); rec.config.apps.len()];
        for e in &rec.phone_events {
            match &e.kind {
                PhoneEventKind::Touch => touches.push(e.t),
                PhoneEventKind::ScreenOn | PhoneEventKind::ScreenOff => {
                    let on = e.kind == PhoneEventKind::ScreenOn;
                    if screen.changes.is_empty() {
                        screen.initial = !on;
                    }
                    screen.changes.push((e.t, on));
                }
                PhoneEventKind::AppStart(app) | PhoneEventKind::AppStop(app) => {
                    if let Some(i) = rec.config.apps.iter().position(|a| a == app) {
                        apps[i].changes.push((e.t, matches!(e.kind, PhoneEventKind::AppStart(_))));
                    }
                }
            }
        }
        FeatureExtractor {
            rec,
            fixations,
            touches,
            screen,
            apps,
            schemas: FeatureGroup::ALL.map(|g| Arc::new(FeatureSchema::new(&rec.config, g))),
            range: rec.time_range(),
        }
    }

    /// Extractor without any precomputed indices, used to enumerate names.
    fn bare(rec: &'a Recording) -> FeatureExtractor<'a> {
        FeatureExtractor {
            rec,
            fixations: Vec::new(),
            touches: Vec::new(),
            screen: StateTrack::default(),
            apps: alloc::vec![StateTrack::default(); rec.config.apps.len()],
            schemas: FeatureGroup::ALL.map(|group| Arc::new(FeatureSchema { group, names: Vec::new() })),
            range: None,
        }
    }

    pub fn schema(&self, group: FeatureGroup) -> &Arc<FeatureSchema> {
        &self.schemas[group as usize]
    }

    /// Feature vector for window `[t0, t1)`.
    pub fn extract(&self, t0: f64, t1: f64, group: FeatureGroup) -> Result<FeatureVector, FeatureError> {
        let ok = t0.is_finite() && t1.is_finite() && t1 > t0 && self.range.is_some_and(|(lo, hi)| t0 >= lo && t1 <= hi);
        if !ok {
            return Err(FeatureError::WindowOutOfRange { t0, t1 });
        }
        let schema = self.schema(group).clone();
        let mut out = Sink::values(schema.len());
        self.fill(t0, t1, group, &mut out);
        debug_assert_eq!(out.values.len(), schema.len());
        Ok(FeatureVector { schema, values: out.values })
    }

    fn fill(&self, t0: f64, t1: f64, group: FeatureGroup, out: &mut Sink) {
        let (ego, phone, gaze) = group.parts();
        if ego {
            self.egocentric(t0, t1, out);
        }
        if phone {
            self.phone(t0, t1, out);
        }
        if gaze {
            self.gaze(t0, t1, out);
        }
    }

    fn egocentric(&self, t0: f64, t1: f64, out: &mut Sink) {
        let cfg = &self.rec.config;
        let frames = slice_by_time(&self.rec.frames, t0, t1, |f| f.t);
        let num = |f: &dyn Fn(&FrameFeatures) -> f64| numeric_from(frames.iter().map(|fr| (fr.t, f(fr))), t0);
        out.numeric("ego.faces", num(&|f| f64::from(f.face_count)));
        for (c, name) in cfg.classes.iter().enumerate() {
            let present = num(&|f| if f.class_presence[c] { 1.0 } else { 0.0 });
            out.binary(&format!("ego.class.{name}.present"), present.map(|a| BinaryAgg { mean: a.mean, slope: a.slope }));
            out.numeric(&format!("ego.class.{name}.pixels"), num(&|f| f.class_pixel_counts[c] as f64));
            out.numeric(&format!("ego.class.{name}.instances"), num(&|f| f64::from(f.class_instance_counts[c])));
        }
        for (s, name) in cfg.scenes.iter().enumerate() {
            let a = num(&|f| f64::from(f.scene_class[s]));
            out.binary(&format!("ego.scene.{name}"), a.map(|a| BinaryAgg { mean: a.mean, slope: a.slope }));
        }
        type StatsOf = fn(&FrameFeatures) -> &crate::recording::FrameStats;
        let maps: [(&str, StatsOf); 3] = [
            ("saliency", |f| &f.saliency),
            ("objectness", |f| &f.objectness),
            ("depth", |f| &f.depth),
        ];
        for (map, get) in maps {
            out.numeric(&format!("ego.{map}.mean"), num(&|f| get(f).mean));
            out.numeric(&format!("ego.{map}.min"), num(&|f| get(f).min));
            out.numeric(&format!("ego.{map}.max"), num(&|f| get(f).max));
            out.numeric(&format!("ego.{map}.std"), num(&|f| get(f).std));
            out.numeric(&format!("ego.{map}.entropy"), num(&|f| get(f).entropy));
        }
        out.flag("ego.frames", !frames.is_empty());
        let head = slice_by_time(&self.rec.head_imu, t0, t1, |s| s.t);
        imu_channels(out, "ego.head", head, t0, false);
        out.flag("ego.head_imu", !head.is_empty());
    }

    fn phone(&self, t0: f64, t1: f64, out: &mut Sink) {
        let imu = slice_by_time(&self.rec.phone_imu, t0, t1, |s| s.t);
        imu_channels(out, "phone", imu, t0, true);
        out.flag("phone.imu", !imu.is_empty());
        out.flag("phone.orientation", imu.iter().any(|s| s.orientation.is_some()));

        let n = grid_ticks(t1 - t0);
        let mut touch = alloc::vec![0u8; n];
        for &t in slice_by_time(&self.touches, t0, t1, |&t| t) {
            let k = libm::floor((t - t0) * BINARY_GRID_HZ) as usize;
            touch[k.min(n - 1)] = 1;
        }
        out.binary("phone.touch", Some(grid_agg(t0, &touch)));
        let held = |track: &StateTrack| -> Vec<u8> { (0..n).map(|k| u8::from(track.at(grid_time(t0, k)))).collect() };
        out.binary("phone.screen", Some(grid_agg(t0, &held(&self.screen))));
        for (i, app) in self.rec.config.apps.iter().enumerate() {
            out.binary(&format!("phone.app.{app}"), Some(grid_agg(t0, &held(&self.apps[i]))));
        }
        let any_event = !slice_by_time(&self.rec.phone_events, t0, t1, |e| e.t).is_empty();
        out.flag("phone.events", any_event);
    }

    fn gaze(&self, t0: f64, t1: f64, out: &mut Sink) {
        let fx = slice_by_time(&self.fixations, t0, t1, |f| f.t_end);
        let num = |f: &dyn Fn(&FixationPoint) -> f64| numeric_from(fx.iter().map(|p| (p.t_end, f(p))), t0);
        out.numeric("gaze.fixation.x", num(&|p| p.cx));
        out.numeric("gaze.fixation.y", num(&|p| p.cy));
        out.numeric("gaze.fixation.norm", num(&|p| libm::sqrt(p.cx * p.cx + p.cy * p.cy)));
        out.flag("gaze.fixations", !fx.is_empty());
        let at = || fx.iter().filter_map(|p| p.at_gaze.map(|a| (p.t_end, a)));
        for (k, name) in ["saliency", "objectness", "depth"].iter().enumerate() {
            out.numeric(&format!("gaze.at.{name}"), numeric_from(at().map(|(t, a)| (t, a[k])), t0));
        }
        out.numeric("gaze.at.norm", numeric_from(at().map(|(t, a)| (t, norm3(&a))), t0));
        out.flag("gaze.maps", at().next().is_some());
    }
}

fn grid_agg(t0: f64, values: &[u8]) -> BinaryAgg {
    let a = numeric_from(values.iter().enumerate().map(|(k, &b)| (grid_time(t0, k), f64::from(b))), t0)
        .expect("grid has at least one tick");
    BinaryAgg { mean: a.mean, slope: a.slope }
}

type Channel = fn(&ImuSample) -> Option<[f64; 3]>;

fn imu_channels(out: &mut Sink, prefix: &str, samples: &[ImuSample], t0: f64, orientation: bool) {
    let mut vectors: Vec<(&str, Channel)> =
        alloc::vec![("accel", |s| Some(s.accel)), ("gyro", |s| Some(s.gyro))];
    if orientation {
        vectors.push(("orientation", |s| s.orientation));
    }
    for (name, get) in vectors {
        let series = || samples.iter().filter_map(|s| get(s).map(|v| (s.t, v)));
        for (axis, label) in ["x", "y", "z"].iter().enumerate() {
            out.numeric(&format!("{prefix}.{name}.{label}"), numeric_from(series().map(|(t, v)| (t, v[axis])), t0));
        }
        out.numeric(&format!("{prefix}.{name}.norm"), numeric_from(series().map(|(t, v)| (t, norm3(&v))), t0));
    }
}

/// One-shot extraction; prefer [`FeatureExtractor`] for many windows.
pub fn extract(rec: &Recording, t0: f64, t1: f64, group: FeatureGroup) -> Result<FeatureVector, FeatureError> {
    FeatureExtractor::new(rec).extract(t0, t1, group)
}
