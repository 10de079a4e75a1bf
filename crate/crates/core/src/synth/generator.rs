use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal as LogNormalDist, Normal, Poisson};

use super::{ConfigError, GroundTruth, LogNormal, PlantedShift, SynthConfig, BLOCK_GAP};
use crate::recording::{
    AnnotationInterval, AnnotationTrack, Attention, Environment, FrameFeatures, FrameStats, GazeSample, ImuSample,
    Locomotion, PhoneEvent, PhoneEventKind, Recording, SceneMaps, Segment, SegmentKind, SegmentSchedule, GRID_CELLS,
    GRID_SIZE,
};
use crate::timeline::ShiftDirection;
use crate::util::{mix_seed, rng_from};

const GRAVITY: f64 = 9.81;
const SCREEN_ON_MEAN: f64 = 40.0;
const SCREEN_OFF_MEAN: f64 = 20.0;
const APP_IDLE_MEAN: f64 = 90.0;
const APP_ACTIVE_MEAN: f64 = 30.0;
const CLASS_PRESENCE: f64 = 0.1;

/// Independent random streams per participant, so that changing one
/// knob (e.g. the cue probability) leaves the other streams untouched.
#[derive(Clone, Copy)]
enum Purpose {
    Schedule = 1,
    Context,
    Timeline,
    Cues,
    Gaze,
    HeadImu,
    PhoneImu,
    Burst,
    Events,
    Maps,
    Frames,
    FaceCue,
}

fn rng(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    rng_from(mix_seed(seed, purpose as u64))
}

fn ms(t: f64) -> f64 {
    libm::round(t * 1000.0) / 1000.0
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = libm::pow(10.0, f64::from(digits));
    libm::round(x * s) / s
}

fn log_normal(d: LogNormal) -> LogNormalDist<f64> {
    LogNormalDist::new(libm::log(d.median), d.sigma).expect("validated log-normal")
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated noise level")
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u32
}

/// Zero-padded id, `P01`, `P02`, ...
pub fn participant_id(index: u32, n_participants: u32) -> String {
    let width = (libm::floor(libm::log10(f64::from(n_participants.max(1)))) as usize + 1).max(2);
    format!("P{:0width$}", index + 1)
}

// Sorted, disjoint, half-open interval sets.

fn normalize(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.retain(|(a, b)| b > a);
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn subtract(set: &[(f64, f64)], holes: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in set {
        let mut start = a;
        for &(h0, h1) in holes.iter().filter(|h| h.1 > a && h.0 < b) {
            if h0 > start {
                out.push((start, h0));
            }
            start = start.max(h1);
        }
        if b > start {
            out.push((start, b));
        }
    }
    out
}

fn union(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    normalize(a.iter().chain(b).copied().collect())
}

/// Membership queries for non-decreasing `t`.
struct Cursor<'s> {
    set: &'s [(f64, f64)],
    i: usize,
}

impl<'s> Cursor<'s> {
    fn new(set: &'s [(f64, f64)]) -> Self {
        Cursor { set, i: 0 }
    }

    fn contains(&mut self, t: f64) -> bool {
        while self.i < self.set.len() && self.set[self.i].1 <= t {
            self.i += 1;
        }
        self.i < self.set.len() && self.set[self.i].0 <= t
    }
}

struct Block {
    start: f64,
    end: f64,
    environment: Environment,
    locomotion: Locomotion,
}

fn schedule(cfg: &SynthConfig, seed: u64) -> (Vec<Segment>, Vec<Block>) {
    let mut r = rng(seed, Purpose::Schedule);
    let mut ctx = rng(seed, Purpose::Context);
    let working = log_normal(cfg.working_duration);
    let slot = cfg.session_length / f64::from(cfg.n_blocks);
    let mut segments = Vec::new();
    let mut blocks = Vec::new();
    for b in 0..cfg.n_blocks {
        let start = ms(f64::from(b) * slot);
        let limit = ms(f64::from(b + 1) * slot - BLOCK_GAP);
        let mut t = start;
        'questions: for q in 0..cfg.questions_per_block {
            for kind in [SegmentKind::Working, SegmentKind::Waiting] {
                // A block ends with its last answer.
                if kind == SegmentKind::Waiting && q + 1 == cfg.questions_per_block {
                    break 'questions;
                }
                let dur = match kind {
                    SegmentKind::Working => working.sample(&mut r),
                    SegmentKind::Waiting => cfg.waiting_durations[r.gen_range(0..cfg.waiting_durations.len())],
                };
                if limit - t < 1.0 {
                    break 'questions;
                }
                let end = ms(t + dur).min(limit);
                segments.push(Segment { start: t, end, kind, block: b });
                t = end;
            }
        }
        let environment = Environment::ALL[ctx.gen_range(0..Environment::ALL.len())];
        let locomotion = if environment == Environment::Street {
            if ctx.gen_bool(0.7) { Locomotion::Walk } else { Locomotion::Stand }
        } else {
            let u: f64 = ctx.gen();
            if u < 0.6 {
                Locomotion::Sit
            } else if u < 0.85 {
                Locomotion::Stand
            } else {
                Locomotion::Walk
            }
        };
        if t > start {
            blocks.push(Block { start, end: t, environment, locomotion });
        }
    }
    (segments, blocks)
}

/// Alternating attention over the whole session as `(start, end, attention)`.
fn attention_timeline(cfg: &SynthConfig, seed: u64) -> Vec<(f64, f64, Attention)> {
    let mut r = rng(seed, Purpose::Timeline);
    let device = log_normal(cfg.device_dwell);
    let environment = log_normal(cfg.environment_dwell);
    let mut att = if r.gen_bool(0.5) { Attention::Device } else { Attention::Environment };
    let mut t = 0.0;
    let mut pieces = Vec::new();
    while t < cfg.session_length {
        let dwell = match att {
            Attention::Device => device.sample(&mut r),
            Attention::Environment => environment.sample(&mut r),
        };
        let end = ms(t + dwell.max(0.05)).min(cfg.session_length);
        pieces.push((t, end, att));
        t = end;
        att = match att {
            Attention::Device => Attention::Environment,
            Attention::Environment => Attention::Device,
        };
    }
    pieces
}

struct Cue {
    shift: f64,
    direction: ShiftDirection,
    lead: Option<f64>,
}

fn plant_cues(cfg: &SynthConfig, seed: u64, pieces: &[(f64, f64, Attention)]) -> Vec<Cue> {
    let mut r = rng(seed, Purpose::Cues);
    let (lo, hi) = cfg.cue_lead;
    pieces
        .windows(2)
        .map(|w| {
            // Both draws happen for every shift so the leads do not depend on the probability.
            let u: f64 = r.gen();
            let lead = ms(if hi > lo { r.gen_range(lo..=hi) } else { lo });
            Cue {
                shift: w[1].0,
                direction: match w[1].2 {
                    Attention::Device => ShiftDirection::ToDevice,
                    Attention::Environment => ShiftDirection::ToEnvironment,
                },
                lead: (u < cfg.cue_probability).then_some(lead),
            }
        })
        .collect()
}

fn cue_windows(cues: &[Cue], direction: ShiftDirection) -> Vec<(f64, f64)> {
    normalize(
        cues.iter()
            .filter(|c| c.direction == direction)
            .filter_map(|c| c.lead.map(|l| (ms(c.shift - l), c.shift)))
            .collect(),
    )
}

fn annotate(blocks: &[Block], pieces: &[(f64, f64, Attention)], cues: &[Cue], id: &str) -> (AnnotationTrack, GroundTruth) {
    let mut intervals = Vec::new();
    let mut truth = GroundTruth {
        participant_id: id.into(),
        shifts_to_environment: 0,
        shifts_to_device: 0,
        annotated_time: 0.0,
        device_time: 0.0,
        environment_time: 0.0,
        shifts: Vec::new(),
    };
    let mut cue_at = cues.iter().peekable();
    for b in blocks {
        let mut first = true;
        for &(s, e, attention) in pieces.iter().filter(|p| p.1 > b.start && p.0 < b.end) {
            let iv = AnnotationInterval {
                start: s.max(b.start),
                end: e.min(b.end),
                attention,
                environment: b.environment,
                indoor: b.environment != Environment::Street,
                locomotion: b.locomotion,
            };
            let d = iv.duration();
            truth.annotated_time += d;
            match attention {
                Attention::Device => truth.device_time += d,
                Attention::Environment => truth.environment_time += d,
            }
            if !first {
                while cue_at.peek().is_some_and(|c| c.shift < iv.start) {
                    cue_at.next();
                }
                let cue = cue_at.peek().filter(|c| c.shift == iv.start).expect("every piece boundary has a cue record");
                match cue.direction {
                    ShiftDirection::ToDevice => truth.shifts_to_device += 1,
                    ShiftDirection::ToEnvironment => truth.shifts_to_environment += 1,
                }
                truth.shifts.push(PlantedShift { t: cue.shift, direction: cue.direction, cue_lead: cue.lead });
            }
            first = false;
            intervals.push(iv);
        }
    }
    (AnnotationTrack::new(intervals), truth)
}

fn sample_times(length: f64, hz: f64) -> impl Iterator<Item = f64> {
    (0u64..).map(move |k| k as f64 / hz).take_while(move |&t| t < length)
}

fn gaze(cfg: &SynthConfig, seed: u64) -> Vec<GazeSample> {
    let mut r = rng(seed, Purpose::Gaze);
    let spread = normal(12.0);
    let jitter = normal(cfg.noise.gaze_jitter);
    let (mut cx, mut cy) = (0.0, 0.0);
    let mut hold_end = f64::NEG_INFINITY;
    let mut blink_end = f64::NEG_INFINITY;
    sample_times(cfg.session_length, cfg.rates.gaze_hz)
        .map(|t| {
            if t >= hold_end {
                cx = spread.sample(&mut r).clamp(-70.0, 70.0);
                cy = spread.sample(&mut r).clamp(-70.0, 70.0);
                hold_end = t + r.gen_range(0.15..0.8);
                if r.gen_bool(cfg.noise.blink_probability) {
                    blink_end = t + r.gen_range(0.08..0.25);
                }
            }
            if t < blink_end {
                GazeSample { t, x: 0.0, y: 0.0, valid: false }
            } else {
                let x = round_to(cx + jitter.sample(&mut r), 3);
                let y = round_to(cy + jitter.sample(&mut r), 3);
                GazeSample { t, x, y, valid: true }
            }
        })
        .collect()
}

fn head_imu(cfg: &SynthConfig, seed: u64) -> Vec<ImuSample> {
    let mut r = rng(seed, Purpose::HeadImu);
    let a = normal(cfg.noise.accel);
    let g = normal(cfg.noise.gyro);
    sample_times(cfg.session_length, cfg.rates.imu_hz)
        .map(|t| ImuSample {
            t,
            accel: [a.sample(&mut r), a.sample(&mut r), GRAVITY + a.sample(&mut r)].map(|v| round_to(v, 4)),
            gyro: [g.sample(&mut r), g.sample(&mut r), g.sample(&mut r)].map(|v| round_to(v, 4)),
            orientation: None,
        })
        .collect()
}

fn phone_imu(cfg: &SynthConfig, seed: u64, bursts: &[(f64, f64)]) -> Vec<ImuSample> {
    let mut r = rng(seed, Purpose::PhoneImu);
    let mut br = rng(seed, Purpose::Burst);
    let a = normal(cfg.noise.accel);
    let g = normal(cfg.noise.gyro);
    let o = normal(cfg.noise.orientation);
    let ba = normal(cfg.cue_shape.accel_burst);
    let bg = normal(cfg.cue_shape.gyro_burst);
    let mut inside = Cursor::new(bursts);
    // Phone held tilted toward the face.
    let rest = [0.0, GRAVITY * 0.8, GRAVITY * 0.6];
    sample_times(cfg.session_length, cfg.rates.imu_hz)
        .map(|t| {
            let mut accel = [0.0; 3];
            let mut gyro = [0.0; 3];
            for i in 0..3 {
                accel[i] = rest[i] + a.sample(&mut r);
                gyro[i] = g.sample(&mut r);
            }
            let orientation = [-35.0 + o.sample(&mut r), o.sample(&mut r), 180.0 + o.sample(&mut r)];
            if inside.contains(t) {
                for i in 0..3 {
                    accel[i] += ba.sample(&mut br);
                    gyro[i] += bg.sample(&mut br);
                }
            }
            ImuSample {
                t,
                accel: accel.map(|v| round_to(v, 4)),
                gyro: gyro.map(|v| round_to(v, 4)),
                orientation: Some(orientation.map(|v| round_to(v, 3))),
            }
        })
        .collect()
}

/// Alternating off/on renewal process as a set of "on" intervals.
fn on_off_process(r: &mut ChaCha8Rng, length: f64, start_on: bool, on_mean: f64, off_mean: f64) -> Vec<(f64, f64)> {
    let on = Exp::new(1.0 / on_mean).expect("positive mean");
    let off = Exp::new(1.0 / off_mean).expect("positive mean");
    let mut t = 0.0;
    let mut state = start_on;
    let mut out = Vec::new();
    while t < length {
        let end = ms(t + if state { on.sample(r) } else { off.sample(r) }).min(length);
        if state {
            out.push((t, end));
        }
        t = end;
        state = !state;
    }
    normalize(out)
}

fn phone_events(cfg: &SynthConfig, seed: u64, device_cues: &[Cue]) -> Vec<PhoneEvent> {
    let mut r = rng(seed, Purpose::Events);
    let length = cfg.session_length;
    let mut events: Vec<PhoneEvent> = Vec::new();

    if cfg.noise.touch_rate > 0.0 {
        let gap = Exp::new(cfg.noise.touch_rate).expect("positive rate");
        let mut t = gap.sample(&mut r);
        while t < length {
            events.push(PhoneEvent { t: ms(t), kind: PhoneEventKind::Touch });
            t += gap.sample(&mut r);
        }
    }

    let start_on = r.gen_bool(0.5);
    let baseline = on_off_process(&mut r, length, start_on, SCREEN_ON_MEAN, SCREEN_OFF_MEAN);
    let shape = &cfg.cue_shape;
    let (mut forced_off, mut forced_on) = (Vec::new(), Vec::new());
    for c in device_cues {
        if let Some(lead) = c.lead {
            let on_at = ms(c.shift - lead);
            forced_off.push((ms(on_at - shape.screen_off_before), on_at));
            forced_on.push((on_at, ms(c.shift + shape.screen_on_after)));
        }
    }
    let screen = union(&subtract(&baseline, &normalize(forced_off)), &normalize(forced_on));
    for (a, b) in screen {
        if a > 0.0 && a < length {
            events.push(PhoneEvent { t: a, kind: PhoneEventKind::ScreenOn });
        }
        if b < length {
            events.push(PhoneEvent { t: b, kind: PhoneEventKind::ScreenOff });
        }
    }

    for app in &cfg.recording.apps {
        for (a, b) in on_off_process(&mut r, length, false, APP_ACTIVE_MEAN, APP_IDLE_MEAN) {
            events.push(PhoneEvent { t: a, kind: PhoneEventKind::AppStart(app.clone()) });
            if b < length {
                events.push(PhoneEvent { t: b, kind: PhoneEventKind::AppStop(app.clone()) });
            }
        }
    }
    // Stable, so per-app and screen order survives equal timestamps.
    events.sort_by(|x, y| x.t.total_cmp(&y.t));
    events
}

fn bump_map(r: &mut ChaCha8Rng, bumps: usize, base: f64) -> Vec<f64> {
    let centers: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| (r.gen::<f64>(), r.gen::<f64>(), r.gen_range(0.05..0.25), r.gen_range(0.3..1.0)))
        .collect();
    (0..GRID_CELLS)
        .map(|i| {
            let v = ((i / GRID_SIZE) as f64 + 0.5) / GRID_SIZE as f64;
            let u = ((i % GRID_SIZE) as f64 + 0.5) / GRID_SIZE as f64;
            let s: f64 = centers
                .iter()
                .map(|&(cu, cv, w, amp)| amp * libm::exp(-((u - cu) * (u - cu) + (v - cv) * (v - cv)) / (2.0 * w * w)))
                .sum();
            round_to((base + s).clamp(0.0, 1.0), 3)
        })
        .collect()
}

fn maps(cfg: &SynthConfig, seed: u64) -> Vec<SceneMaps> {
    let mut r = rng(seed, Purpose::Maps);
    let noise = normal(0.3);
    sample_times(cfg.session_length, 1.0 / cfg.rates.map_period)
        .map(|t| {
            let far = r.gen_range(4.0..15.0);
            let depth = (0..GRID_CELLS)
                .map(|i| {
                    // Far at the top of the view, near at the bottom.
                    let v = ((i / GRID_SIZE) as f64 + 0.5) / GRID_SIZE as f64;
                    round_to((far + (1.0 - far) * v + noise.sample(&mut r)).max(0.1), 2)
                })
                .collect();
            SceneMaps { t, saliency: bump_map(&mut r, 3, 0.0), objectness: bump_map(&mut r, 2, 0.1), depth }
        })
        .collect()
}

fn frames(cfg: &SynthConfig, seed: u64, maps: &[SceneMaps], blocks: &[Block], face_cues: &[(f64, f64)]) -> Vec<FrameFeatures> {
    let mut r = rng(seed, Purpose::Frames);
    let mut cue_r = rng(seed, Purpose::FaceCue);
    let rc = &cfg.recording;
    let n_classes = rc.classes.len();
    let n_scenes = rc.scenes.len();
    let person = rc.classes.iter().position(|c| c == "person");
    let stats: Vec<[FrameStats; 3]> = maps
        .iter()
        .map(|m| [FrameStats::from_values(&m.saliency), FrameStats::from_values(&m.objectness), FrameStats::from_values(&m.depth)])
        .collect();
    let mut boosted = Cursor::new(face_cues);
    sample_times(cfg.session_length, cfg.rates.frame_hz)
        .map(|t| {
            let mut faces = poisson(&mut r, cfg.noise.faces);
            if boosted.contains(t) {
                faces += poisson(&mut cue_r, cfg.cue_shape.face_boost);
            }
            let mut presence = alloc::vec![false; n_classes];
            let mut instances = alloc::vec![0u32; n_classes];
            let mut pixels = alloc::vec![0u64; n_classes];
            for c in 0..n_classes {
                let mut n = if r.gen_bool(CLASS_PRESENCE) { 1 + poisson(&mut r, 0.5) } else { 0 };
                if Some(c) == person {
                    n = n.max(faces);
                }
                if n > 0 {
                    presence[c] = true;
                    instances[c] = n;
                    let share = r.gen_range(0.005..0.05) * f64::from(n.min(4));
                    pixels[c] = libm::round(share * rc.frame_pixel_total as f64) as u64;
                }
            }
            let env = blocks.iter().rfind(|b| b.start <= t).map_or(Environment::Office, |b| b.environment);
            let mut scene = env.index() % n_scenes;
            if r.gen_bool(cfg.noise.scene_confusion) {
                scene = r.gen_range(0..n_scenes);
            }
            let mut scene_class = alloc::vec![0u8; n_scenes];
            scene_class[scene] = 1;
            let m = (libm::floor(t / cfg.rates.map_period) as usize).min(maps.len().saturating_sub(1));
            let [saliency, objectness, depth] = stats.get(m).copied().unwrap_or_default();
            FrameFeatures {
                t,
                face_count: faces,
                class_presence: presence,
                class_pixel_counts: pixels,
                class_instance_counts: instances,
                scene_class,
                saliency,
                objectness,
                depth,
                map: (!maps.is_empty()).then_some(m as u32),
            }
        })
        .collect()
}

/// One participant's recording and the generator's bookkeeping for it.
pub fn generate_participant(cfg: &SynthConfig, index: u32) -> Result<(Recording, GroundTruth), ConfigError> {
    cfg.validate()?;
    let seed = mix_seed(cfg.seed, u64::from(index));
    let id = participant_id(index, cfg.n_participants);
    let (segments, blocks) = schedule(cfg, seed);
    let pieces = attention_timeline(cfg, seed);
    let cues = plant_cues(cfg, seed, &pieces);
    let (annotations, truth) = annotate(&blocks, &pieces, &cues, &id);
    let device_windows = cue_windows(&cues, ShiftDirection::ToDevice);
    let face_windows = cue_windows(&cues, ShiftDirection::ToEnvironment);
    let device_cues: Vec<Cue> = cues.into_iter().filter(|c| c.direction == ShiftDirection::ToDevice).collect();
    let maps = maps(cfg, seed);
    let rec = Recording {
        participant_id: id,
        config: cfg.recording.clone(),
        gaze: gaze(cfg, seed),
        head_imu: head_imu(cfg, seed),
        phone_imu: phone_imu(cfg, seed, &device_windows),
        phone_events: phone_events(cfg, seed, &device_cues),
        frames: frames(cfg, seed, &maps, &blocks, &face_windows),
        maps,
        annotations,
        segments: SegmentSchedule::new(segments),
    };
    Ok((rec, truth))
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<(Vec<Recording>, Vec<GroundTruth>), ConfigError> {
    cfg.validate()?;
    let mut recs = Vec::new();
    let mut truth = Vec::new();
    for i in 0..cfg.n_participants {
        let (r, t) = generate_participant(cfg, i)?;
        recs.push(r);
        truth.push(t);
    }
    Ok((recs, truth))
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<Recording>, ConfigError> {
    Ok(generate_with_truth(cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn interval_set_ops() {
        assert_eq!(normalize(vec![(3.0, 4.0), (0.0, 1.0), (1.0, 2.0), (5.0, 5.0)]), vec![(0.0, 2.0), (3.0, 4.0)]);
        assert_eq!(subtract(&[(0.0, 10.0)], &[(2.0, 3.0), (5.0, 12.0)]), vec![(0.0, 2.0), (3.0, 5.0)]);
        assert_eq!(union(&[(0.0, 1.0)], &[(0.5, 2.0), (4.0, 5.0)]), vec![(0.0, 2.0), (4.0, 5.0)]);
        let set = [(1.0, 2.0), (3.0, 4.0)];
        let mut c = Cursor::new(&set);
        let hits: Vec<bool> = [0.5, 1.0, 1.5, 2.0, 3.5, 4.0].iter().map(|&t| c.contains(t)).collect();
        assert_eq!(hits, vec![false, true, true, false, true, false]);
    }

    #[test]
    fn ids_are_padded() {
        assert_eq!(participant_id(0, 10), "P01");
        assert_eq!(participant_id(9, 10), "P10");
        assert_eq!(participant_id(4, 120), "P005");
    }
}
