//! Attention timeline over the ground-truth annotation track.
//!
//! Intervals are half-open. Only intervals that touch exactly
//! (`prev.end == next.start`) belong to the same contiguous span; no shift
//! is ever inferred across an unannotated gap.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gaze::{detect_fixations, FixationParams};
use crate::recording::{AnnotationTrack, Attention, Environment, Locomotion, Recording, SegmentKind};
use crate::util::mean_std;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    ToEnvironment,
    ToDevice,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftEvent {
    pub t: f64,
    pub direction: ShiftDirection,
}

/// Attention at `t`, or `None` when `t` is unannotated.
pub fn attention_at(track: &AnnotationTrack, t: f64) -> Option<Attention> {
    let ivs = &track.intervals;
    let idx = ivs.partition_point(|iv| iv.start <= t);
    let iv = ivs.get(idx.checked_sub(1)?)?;
    (t < iv.end).then_some(iv.attention)
}

/// Index of the interval containing `t`.
pub fn interval_index_at(track: &AnnotationTrack, t: f64) -> Option<usize> {
    let ivs = &track.intervals;
    let idx = ivs.partition_point(|iv| iv.start <= t).checked_sub(1)?;
    (t < ivs[idx].end).then_some(idx)
}

/// One event per attention change between touching intervals.
pub fn shift_events(track: &AnnotationTrack) -> Vec<ShiftEvent> {
    track
        .intervals
        .windows(2)
        .filter(|w| w[0].end == w[1].start && w[0].attention != w[1].attention)
        .map(|w| ShiftEvent {
            t: w[1].start,
            direction: match w[1].attention {
                Attention::Environment => ShiftDirection::ToEnvironment,
                Attention::Device => ShiftDirection::ToDevice,
            },
        })
        .collect()
}

/// Maximal runs of touching intervals as `[start, end)` pairs.
pub fn contiguous_spans(track: &AnnotationTrack) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for iv in &track.intervals {
        match spans.last_mut() {
            Some(last) if last.1 == iv.start => last.1 = iv.end,
            _ => spans.push((iv.start, iv.end)),
        }
    }
    spans
}

/// Seconds of `[a, b)` annotated as device and as environment.
pub fn attention_time(track: &AnnotationTrack, a: f64, b: f64) -> (f64, f64) {
    let ivs = &track.intervals;
    let first = ivs.partition_point(|iv| iv.end <= a);
    let (mut device, mut environment) = (0.0, 0.0);
    for iv in ivs[first..].iter().take_while(|iv| iv.start < b) {
        let overlap = iv.end.min(b) - iv.start.max(a);
        if overlap > 0.0 {
            match iv.attention {
                Attention::Device => device += overlap,
                Attention::Environment => environment += overlap,
            }
        }
    }
    (device, environment)
}

/// Table-style statistics for one participant. Times in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantStats {
    pub participant_id: String,
    pub shifts_to_environment: u32,
    pub shifts_to_device: u32,
    pub annotated_time: f64,
    pub device_time: f64,
    pub environment_time: f64,
    /// Fixation time intersected with device-attention intervals.
    pub fixation_on_screen: f64,
    /// Fixation time intersected with environment-attention intervals.
    pub fixation_off_screen: f64,
    pub environments: BTreeMap<String, f64>,
    pub indoor: f64,
    pub outdoor: f64,
    pub locomotion: BTreeMap<String, f64>,
    pub working_segments: u32,
    pub waiting_segments: u32,
    pub working_time_per_segment: f64,
    pub working_device_time_per_segment: f64,
    pub waiting_time_per_segment: f64,
    pub waiting_device_time_per_segment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub family: String,
    pub row: String,
    pub mean: f64,
    pub std: f64,
    /// Absent for per-segment averages, where a corpus total is meaningless.
    pub total: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub participants: Vec<ParticipantStats>,
    /// Mean and population std across participants, plus corpus totals.
    pub rows: Vec<StatRow>,
}

fn fixation_split(rec: &Recording, params: &FixationParams) -> (f64, f64) {
    let (mut on, mut off) = (0.0, 0.0);
    for f in detect_fixations(&rec.gaze, params) {
        let (d, e) = attention_time(&rec.annotations, f.t_start, f.t_end);
        on += d;
        off += e;
    }
    (on, off)
}

fn per_segment(rec: &Recording, kind: SegmentKind) -> (u32, f64, f64) {
    let mut n = 0u32;
    let (mut time, mut device) = (0.0, 0.0);
    for s in rec.segments.segments.iter().filter(|s| s.kind == kind) {
        n += 1;
        time += s.end - s.start;
        device += attention_time(&rec.annotations, s.start, s.end).0;
    }
    if n == 0 {
        (0, 0.0, 0.0)
    } else {
        (n, time / f64::from(n), device / f64::from(n))
    }
}

pub fn participant_stats(rec: &Recording, params: &FixationParams) -> ParticipantStats {
    let shifts = shift_events(&rec.annotations);
    let count = |d: ShiftDirection| shifts.iter().filter(|s| s.direction == d).count() as u32;
    let mut environments: BTreeMap<String, f64> = Environment::ALL.iter().map(|e| (e.name().to_string(), 0.0)).collect();
    let mut locomotion: BTreeMap<String, f64> = Locomotion::ALL.iter().map(|l| (l.name().to_string(), 0.0)).collect();
    let (mut annotated, mut device, mut environment, mut indoor, mut outdoor) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for iv in &rec.annotations.intervals {
        let d = iv.duration();
        annotated += d;
        match iv.attention {
            Attention::Device => device += d,
            Attention::Environment => environment += d,
        }
        *environments.get_mut(iv.environment.name()).expect("all environments present") += d;
        *locomotion.get_mut(iv.locomotion.name()).expect("all modes present") += d;
        if iv.indoor {
            indoor += d;
        } else {
            outdoor += d;
        }
    }
    let (fixation_on_screen, fixation_off_screen) = fixation_split(rec, params);
    let (working_segments, working_time_per_segment, working_device_time_per_segment) = per_segment(rec, SegmentKind::Working);
    let (waiting_segments, waiting_time_per_segment, waiting_device_time_per_segment) = per_segment(rec, SegmentKind::Waiting);
    ParticipantStats {
        participant_id: rec.participant_id.clone(),
        shifts_to_environment: count(ShiftDirection::ToEnvironment),
        shifts_to_device: count(ShiftDirection::ToDevice),
        annotated_time: annotated,
        device_time: device,
        environment_time: environment,
        fixation_on_screen,
        fixation_off_screen,
        environments,
        indoor,
        outdoor,
        locomotion,
        working_segments,
        waiting_segments,
        working_time_per_segment,
        working_device_time_per_segment,
        waiting_time_per_segment,
        waiting_device_time_per_segment,
    }
}

fn row(family: &str, name: &str, values: &[f64], with_total: bool) -> StatRow {
    let (mean, std) = mean_std(values);
    StatRow {
        family: family.to_string(),
        row: name.to_string(),
        mean,
        std,
        total: with_total.then(|| values.iter().sum()),
    }
}

/// Per-participant statistics and their across-participant summary.
pub fn summarize(recordings: &[Recording]) -> SummaryStats {
    summarize_with(recordings, &FixationParams::default())
}

pub fn summarize_with(recordings: &[Recording], params: &FixationParams) -> SummaryStats {
    let participants: Vec<ParticipantStats> = recordings.iter().map(|r| participant_stats(r, params)).collect();
    let col = |f: &dyn Fn(&ParticipantStats) -> f64| -> Vec<f64> { participants.iter().map(f).collect() };
    let mut rows = alloc::vec![
        row("working segments per question (s)", "working time", &col(&|p| p.working_time_per_segment), false),
        row("working segments per question (s)", "time on mobile device", &col(&|p| p.working_device_time_per_segment), false),
        row("waiting segments per question (s)", "waiting time", &col(&|p| p.waiting_time_per_segment), false),
        row("waiting segments per question (s)", "time on mobile device", &col(&|p| p.waiting_device_time_per_segment), false),
        row("attention shifts (count)", "shifts to environment", &col(&|p| f64::from(p.shifts_to_environment)), true),
        row("attention shifts (count)", "shifts to mobile device", &col(&|p| f64::from(p.shifts_to_device)), true),
        row("attention time (s)", "on device", &col(&|p| p.device_time), true),
        row("attention time (s)", "off device", &col(&|p| p.environment_time), true),
        row("fixation time on/off screen (s)", "on", &col(&|p| p.fixation_on_screen), true),
        row("fixation time on/off screen (s)", "off", &col(&|p| p.fixation_off_screen), true),
    ];
    for e in Environment::ALL {
        rows.push(row("environments (s)", e.name(), &col(&|p| p.environments[e.name()]), true));
    }
    rows.push(row("indoor/outdoor (s)", "indoor", &col(&|p| p.indoor), true));
    rows.push(row("indoor/outdoor (s)", "outdoor", &col(&|p| p.outdoor), true));
    for l in Locomotion::ALL {
        rows.push(row("modes of locomotion (s)", l.name(), &col(&|p| p.locomotion[l.name()]), true));
    }
    SummaryStats { participants, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::{AnnotationInterval, Segment, SegmentSchedule};
    use alloc::vec;
    use proptest::prelude::*;

    fn iv(start: f64, end: f64, attention: Attention) -> AnnotationInterval {
        AnnotationInterval { start, end, attention, environment: Environment::Library, indoor: true, locomotion: Locomotion::Sit }
    }

    fn track(ivs: &[(f64, f64, Attention)]) -> AnnotationTrack {
        AnnotationTrack::new(ivs.iter().map(|&(a, b, att)| iv(a, b, att)).collect())
    }

    use Attention::{Device as D, Environment as E};

    #[test]
    fn attention_lookup_half_open() {
        let t = track(&[(0.0, 5.0, D), (5.0, 8.0, E)]);
        assert_eq!(attention_at(&t, 2.0), Some(D));
        assert_eq!(attention_at(&t, 5.0), Some(E));
        assert_eq!(attention_at(&t, 9.0), None);
        assert_eq!(attention_at(&t, 8.0), None);
        assert_eq!(attention_at(&t, -1.0), None);
    }

    #[test]
    fn shifts_at_boundaries() {
        let t = track(&[(0.0, 5.0, D), (5.0, 8.0, E), (8.0, 10.0, D)]);
        assert_eq!(
            shift_events(&t),
            vec![
                ShiftEvent { t: 5.0, direction: ShiftDirection::ToEnvironment },
                ShiftEvent { t: 8.0, direction: ShiftDirection::ToDevice },
            ]
        );
        assert!(shift_events(&track(&[(0.0, 5.0, D)])).is_empty());
    }

    #[test]
    fn gap_breaks_span() {
        let t = track(&[(0.0, 5.0, D), (6.0, 8.0, E)]);
        assert!(shift_events(&t).is_empty());
        assert_eq!(contiguous_spans(&t), vec![(0.0, 5.0), (6.0, 8.0)]);
    }

    #[test]
    fn attention_time_clips() {
        let t = track(&[(0.0, 5.0, D), (5.0, 8.0, E), (8.0, 10.0, D)]);
        assert_eq!(attention_time(&t, 4.0, 9.0), (2.0, 3.0));
        assert_eq!(attention_time(&t, 20.0, 30.0), (0.0, 0.0));
    }

    fn one_minute_device() -> Recording {
        let mut r = Recording::empty("P01");
        r.annotations = track(&[(0.0, 60.0, D)]);
        r.segments = SegmentSchedule::new(vec![Segment { start: 0.0, end: 60.0, kind: SegmentKind::Working, block: 0 }]);
        r
    }

    #[test]
    fn summary_single_interval() {
        let s = summarize(&[one_minute_device()]);
        let p = &s.participants[0];
        assert_eq!(p.device_time, 60.0);
        assert_eq!(p.shifts_to_environment + p.shifts_to_device, 0);
        assert_eq!(p.working_device_time_per_segment, 60.0);
        let on = s.rows.iter().find(|r| r.row == "on device").unwrap();
        assert_eq!((on.mean, on.total), (60.0, Some(60.0)));
    }

    #[test]
    fn identical_recordings_zero_std() {
        let mut r = one_minute_device();
        r.annotations = track(&[(0.0, 20.0, D), (20.0, 45.0, E), (45.0, 60.0, D)]);
        let mut r2 = r.clone();
        r2.participant_id = "P02".into();
        let s = summarize(&[r, r2]);
        assert!(s.rows.iter().all(|row| row.std == 0.0));
        let shifts = s.rows.iter().find(|r| r.row == "shifts to environment").unwrap();
        assert_eq!(shifts.total, Some(2.0));
    }

    fn track_strategy() -> impl Strategy<Value = AnnotationTrack> {
        proptest::collection::vec((0.1f64..10.0, any::<bool>(), 0u8..4), 1..40).prop_map(|parts| {
            let mut t = 0.0;
            let mut out: Vec<AnnotationInterval> = Vec::new();
            for (len, dev, gap) in parts {
                if gap == 0 {
                    t += 1.0;
                }
                let att = if dev { D } else { E };
                if let Some(last) = out.last() {
                    if last.end == t && last.attention == att {
                        continue;
                    }
                }
                out.push(iv(t, t + len, att));
                t += len;
            }
            AnnotationTrack::new(out)
        })
    }

    proptest! {
        #[test]
        fn shift_balance_per_span(tr in track_strategy()) {
            let events = shift_events(&tr);
            for (a, b) in contiguous_spans(&tr) {
                let in_span: Vec<_> = events.iter().filter(|e| e.t > a && e.t < b).collect();
                let to_env = in_span.iter().filter(|e| e.direction == ShiftDirection::ToEnvironment).count() as i64;
                let to_dev = in_span.len() as i64 - to_env;
                prop_assert!((to_env - to_dev).abs() <= 1);
                for w in in_span.windows(2) {
                    prop_assert_ne!(w[0].direction, w[1].direction);
                }
            }
        }

        #[test]
        fn shift_count_matches_linear_scan(tr in track_strategy()) {
            let mut changes = 0;
            let ivs = &tr.intervals;
            for i in 1..ivs.len() {
                if ivs[i - 1].end == ivs[i].start && ivs[i - 1].attention != ivs[i].attention {
                    changes += 1;
                }
            }
            prop_assert_eq!(shift_events(&tr).len(), changes);
        }

        #[test]
        fn attention_changes_exactly_at_events(tr in track_strategy()) {
            for e in shift_events(&tr) {
                let before = attention_at(&tr, e.t - 1e-9);
                let after = attention_at(&tr, e.t);
                prop_assert_ne!(before, after);
                let expected = match e.direction { ShiftDirection::ToEnvironment => E, ShiftDirection::ToDevice => D };
                prop_assert_eq!(after, Some(expected));
            }
            for w in tr.intervals.windows(2) {
                if w[0].end == w[1].start {
                    let changed = w[0].attention != w[1].attention;
                    prop_assert_eq!(changed, shift_events(&tr).iter().any(|e| e.t == w[1].start));
                }
            }
        }

        #[test]
        fn category_times_sum_to_total(tr in track_strategy()) {
            let mut r = Recording::empty("P");
            r.annotations = tr;
            let p = participant_stats(&r, &FixationParams::default());
            let tol = 1e-9 * p.annotated_time.max(1.0);
            prop_assert!((p.device_time + p.environment_time - p.annotated_time).abs() < tol);
            prop_assert!((p.environments.values().sum::<f64>() - p.annotated_time).abs() < tol);
            prop_assert!((p.indoor + p.outdoor - p.annotated_time).abs() < tol);
            prop_assert!((p.locomotion.values().sum::<f64>() - p.annotated_time).abs() < tol);
        }
    }
}
