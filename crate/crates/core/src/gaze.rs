//! Fixation detection and at-gaze scene map lookup.
//!
//! Fixations use identification by dispersion threshold (I-DT): dispersion
//! of a window is `(max x − min x) + (max y − min y)` over its valid
//! samples, and a window qualifies when dispersion stays within the
//! threshold (inclusive) for at least the minimum duration. Qualifying
//! windows are grown one sample at a time while dispersion allows, then
//! emitted; scanning resumes after the last member.
//!
//! Invalid samples never contribute positions. A run of invalid samples
//! lasting longer than [`FixationParams::max_invalid_gap`] (measured from
//! the first invalid sample to the next valid one) ends any window that
//! would span it; shorter runs are bridged.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::recording::{FrameFeatures, GazeSample, SceneMaps, FIELD_OF_VIEW_DEG, GRID_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixationParams {
    /// Degrees.
    pub dispersion_threshold: f64,
    /// Seconds.
    pub min_duration: f64,
    /// Seconds.
    pub max_invalid_gap: f64,
}

impl Default for FixationParams {
    fn default() -> Self {
        FixationParams {
            dispersion_threshold: 1.0,
            min_duration: 0.150,
            max_invalid_gap: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub t_start: f64,
    pub t_end: f64,
    /// Centroid, degrees.
    pub cx: f64,
    pub cy: f64,
}

impl Fixation {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum GazeError {
    #[error("gaze ({x}, {y}) lies outside the camera field of view")]
    OutOfField { x: f64, y: f64 },
    #[error("frame carries no scene maps")]
    MapsAbsent,
}

/// Map values under the gaze point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtGaze {
    pub saliency: f64,
    pub objectness: f64,
    /// Meters.
    pub depth: f64,
}

#[derive(Clone, Copy)]
struct Point {
    t: f64,
    x: f64,
    y: f64,
}

/// Splits the stream into runs of valid samples that no long invalid gap interrupts.
fn tracks(gaze: &[GazeSample], max_gap: f64) -> Vec<Vec<Point>> {
    let mut out = Vec::new();
    let mut current: Vec<Point> = Vec::new();
    let mut invalid_since: Option<f64> = None;
    for s in gaze {
        if !s.valid {
            invalid_since.get_or_insert(s.t);
            continue;
        }
        if let Some(t0) = invalid_since.take() {
            if s.t - t0 > max_gap && !current.is_empty() {
                out.push(core::mem::take(&mut current));
            }
        }
        current.push(Point { t: s.t, x: s.x, y: s.y });
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

struct Extent {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Extent {
    fn of(points: &[Point]) -> Extent {
        let mut e = Extent {
            min_x: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            min_y: f64::INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for p in points {
            e.add(p);
        }
        e
    }

    fn add(&mut self, p: &Point) {
        self.min_x = self.min_x.min(p.x);
        self.max_x = self.max_x.max(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_y = self.max_y.max(p.y);
    }

    fn dispersion_with(&self, p: &Point) -> f64 {
        (self.max_x.max(p.x) - self.min_x.min(p.x)) + (self.max_y.max(p.y) - self.min_y.min(p.y))
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

fn centroid(points: &[Point]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.x).sum();
    let sy: f64 = points.iter().map(|p| p.y).sum();
    (sx / n, sy / n)
}

fn idt(track: &[Point], params: &FixationParams, out: &mut Vec<Fixation>) {
    let n = track.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && track[j].t - track[i].t < params.min_duration {
            j += 1;
        }
        if j == n {
            break;
        }
        let mut extent = Extent::of(&track[i..=j]);
        if extent.dispersion() > params.dispersion_threshold {
            i += 1;
            continue;
        }
        while j + 1 < n && extent.dispersion_with(&track[j + 1]) <= params.dispersion_threshold {
            j += 1;
            extent.add(&track[j]);
        }
        let (cx, cy) = centroid(&track[i..=j]);
        out.push(Fixation {
            t_start: track[i].t,
            t_end: track[j].t,
            cx,
            cy,
        });
        i = j + 1;
    }
}

/// Detects fixations; output intervals are disjoint and time-ordered.
pub fn detect_fixations(gaze: &[GazeSample], params: &FixationParams) -> Vec<Fixation> {
    let mut out = Vec::new();
    for track in tracks(gaze, params.max_invalid_gap) {
        idt(&track, params, &mut out);
    }
    out
}

/// Row-major cell index of an in-field gaze direction.
pub fn grid_cell(x: f64, y: f64) -> Result<usize, GazeError> {
    let half = FIELD_OF_VIEW_DEG / 2.0;
    if !(x.abs() <= half && y.abs() <= half) {
        return Err(GazeError::OutOfField { x, y });
    }
    let scale = GRID_SIZE as f64 / FIELD_OF_VIEW_DEG;
    let col = (libm::floor((x + half) * scale) as usize).min(GRID_SIZE - 1);
    let row = (libm::floor((half - y) * scale) as usize).min(GRID_SIZE - 1);
    Ok(row * GRID_SIZE + col)
}

/// Angular center `(x, y)` of grid cell `(row, col)`.
pub fn cell_center(row: usize, col: usize) -> (f64, f64) {
    let half = FIELD_OF_VIEW_DEG / 2.0;
    let step = FIELD_OF_VIEW_DEG / GRID_SIZE as f64;
    (-half + (col as f64 + 0.5) * step, half - (row as f64 + 0.5) * step)
}

/// Saliency, objectness and depth of the cell containing `(x, y)` in the
/// maps referenced by `frame`.
pub fn at_gaze(frame: &FrameFeatures, maps: &[SceneMaps], x: f64, y: f64) -> Result<AtGaze, GazeError> {
    let cell = grid_cell(x, y)?;
    let m = frame
        .map
        .and_then(|i| maps.get(i as usize))
        .ok_or(GazeError::MapsAbsent)?;
    let get = |grid: &[f64]| grid.get(cell).copied().ok_or(GazeError::MapsAbsent);
    Ok(AtGaze {
        saliency: get(&m.saliency)?,
        objectness: get(&m.objectness)?,
        depth: get(&m.depth)?,
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute force: from each unconsumed valid sample, find the longest
    //! window whose dispersion (recomputed from scratch) stays within the
    //! threshold and which crosses no long invalid gap.
    use super::*;

    fn dispersion(samples: &[GazeSample]) -> f64 {
        let valid: Vec<&GazeSample> = samples.iter().filter(|s| s.valid).collect();
        let xs = valid.iter().map(|s| s.x);
        let ys = valid.iter().map(|s| s.y);
        let (mut lx, mut hx, mut ly, mut hy) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            lx = lx.min(x);
            hx = hx.max(x);
        }
        for y in ys {
            ly = ly.min(y);
            hy = hy.max(y);
        }
        (hx - lx) + (hy - ly)
    }

    fn crosses_long_gap(samples: &[GazeSample], max_gap: f64) -> bool {
        let mut k = 0;
        while k < samples.len() {
            if !samples[k].valid {
                let start = samples[k].t;
                let mut m = k;
                while m < samples.len() && !samples[m].valid {
                    m += 1;
                }
                if m < samples.len() && samples[m].t - start > max_gap {
                    return true;
                }
                k = m;
            } else {
                k += 1;
            }
        }
        false
    }

    pub fn detect(gaze: &[GazeSample], p: &FixationParams) -> Vec<Fixation> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < gaze.len() {
            if !gaze[i].valid {
                i += 1;
                continue;
            }
            let mut best: Option<usize> = None;
            for j in i..gaze.len() {
                if !gaze[j].valid {
                    continue;
                }
                let w = &gaze[i..=j];
                if crosses_long_gap(w, p.max_invalid_gap) || dispersion(w) > p.dispersion_threshold {
                    break;
                }
                best = Some(j);
            }
            match best {
                Some(j) if gaze[j].t - gaze[i].t >= p.min_duration => {
                    let members: Vec<&GazeSample> = gaze[i..=j].iter().filter(|s| s.valid).collect();
                    let n = members.len() as f64;
                    out.push(Fixation {
                        t_start: gaze[i].t,
                        t_end: gaze[j].t,
                        cx: members.iter().map(|s| s.x).sum::<f64>() / n,
                        cy: members.iter().map(|s| s.y).sum::<f64>() / n,
                    });
                    i = j + 1;
                }
                _ => i += 1,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::{FrameStats, GRID_CELLS};
    use alloc::vec;
    use proptest::prelude::*;

    fn samples(points: &[(f64, f64, f64)]) -> Vec<GazeSample> {
        points.iter().map(|&(t, x, y)| GazeSample { t, x, y, valid: true }).collect()
    }

    #[test]
    fn empty_input() {
        assert!(detect_fixations(&[], &FixationParams::default()).is_empty());
    }

    #[test]
    fn single_stationary_cluster() {
        let g = samples(&(0..10).map(|i| (i as f64 * 0.3 / 9.0, 0.0, 0.0)).collect::<Vec<_>>());
        let f = detect_fixations(&g, &FixationParams::default());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].t_start, 0.0);
        assert!((f[0].t_end - 0.30).abs() < 1e-12);
        assert_eq!((f[0].cx, f[0].cy), (0.0, 0.0));
    }

    #[test]
    fn two_clusters_two_fixations() {
        let mut pts = Vec::new();
        for i in 0..7 {
            pts.push((i as f64 / 30.0, 0.0, 0.0));
        }
        for i in 7..14 {
            pts.push((i as f64 / 30.0, 10.0, 0.0));
        }
        let f = detect_fixations(&samples(&pts), &FixationParams::default());
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].cx, 0.0);
        assert_eq!(f[1].cx, 10.0);
    }

    #[test]
    fn boundary_dispersion_is_inside() {
        let pts: Vec<_> = (0..8).map(|i| (i as f64 / 30.0, if i % 2 == 0 { 0.0 } else { 0.5 }, if i % 2 == 0 { 0.0 } else { 0.5 })).collect();
        assert_eq!(detect_fixations(&samples(&pts), &FixationParams::default()).len(), 1);
    }

    #[test]
    fn short_blink_bridged_long_gap_splits() {
        let mk = |invalid: &[usize]| -> Vec<GazeSample> {
            (0..20)
                .map(|i| GazeSample { t: i as f64 / 30.0, x: 0.0, y: 0.0, valid: !invalid.contains(&i) })
                .collect()
        };
        let p = FixationParams::default();
        // One dropped sample: 33 ms until recovery.
        assert_eq!(detect_fixations(&mk(&[10]), &p).len(), 1);
        // Three dropped samples: 100 ms; both halves (10 and 7 samples) still long enough.
        let f = detect_fixations(&mk(&[10, 11, 12]), &p);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].t_end, 9.0 / 30.0);
        assert_eq!(f[1].t_start, 13.0 / 30.0);
    }

    fn maps_with(cell: usize, value: f64) -> SceneMaps {
        let mut saliency = vec![0.0; GRID_CELLS];
        saliency[cell] = value;
        SceneMaps { t: 0.0, saliency, objectness: vec![0.25; GRID_CELLS], depth: vec![2.0; GRID_CELLS] }
    }

    fn frame_with_map() -> FrameFeatures {
        FrameFeatures {
            t: 0.0,
            face_count: 0,
            class_presence: vec![],
            class_pixel_counts: vec![],
            class_instance_counts: vec![],
            scene_class: vec![1],
            saliency: FrameStats::default(),
            objectness: FrameStats::default(),
            depth: FrameStats::default(),
            map: Some(0),
        }
    }

    #[test]
    fn uniform_grid_any_gaze() {
        let maps = [SceneMaps { t: 0.0, saliency: vec![0.5; GRID_CELLS], objectness: vec![0.5; GRID_CELLS], depth: vec![0.5; GRID_CELLS] }];
        for (x, y) in [(0.0, 0.0), (87.5, -87.5), (-40.0, 12.0)] {
            assert_eq!(at_gaze(&frame_with_map(), &maps, x, y).unwrap().saliency, 0.5);
        }
    }

    #[test]
    fn outside_field_of_view() {
        let maps = [maps_with(0, 1.0)];
        let err = at_gaze(&frame_with_map(), &maps, 87.6, 0.0).unwrap_err();
        assert!(matches!(err, GazeError::OutOfField { .. }));
        assert!(at_gaze(&frame_with_map(), &maps, 0.0, -87.6).is_err());
    }

    #[test]
    fn maps_absent() {
        let mut f = frame_with_map();
        f.map = None;
        assert_eq!(at_gaze(&f, &[], 0.0, 0.0), Err(GazeError::MapsAbsent));
    }

    #[test]
    fn hot_cell_at_its_center() {
        // Row 3, column 20: x = -87.5 + 20.5 * 5.46875 = 24.609375, y = 87.5 - 3.5 * 5.46875 = 68.359375.
        let cell = 3 * GRID_SIZE + 20;
        assert_eq!(cell_center(3, 20), (24.609375, 68.359375));
        let maps = [maps_with(cell, 0.9)];
        let v = at_gaze(&frame_with_map(), &maps, 24.609375, 68.359375).unwrap();
        assert_eq!(v.saliency, 0.9);
        assert_eq!(v.objectness, 0.25);
        assert_eq!(v.depth, 2.0);
        // Neighbouring cell center reads zero.
        let (x, y) = cell_center(3, 21);
        assert_eq!(at_gaze(&frame_with_map(), &maps, x, y).unwrap().saliency, 0.0);
    }

    fn gaze_strategy() -> impl Strategy<Value = Vec<GazeSample>> {
        proptest::collection::vec((0.005f64..0.06, -2.0f64..2.0, -2.0f64..2.0, 0u8..20, 0u8..10), 0..200).prop_map(|steps| {
            let mut t = 0.0;
            let (mut cx, mut cy) = (0.0, 0.0);
            steps
                .into_iter()
                .map(|(dt, jx, jy, invalid, jump)| {
                    t += dt;
                    if jump == 0 {
                        cx += jx * 4.0;
                        cy += jy * 4.0;
                    }
                    GazeSample { t, x: cx + jx * 0.2, y: cy + jy * 0.2, valid: invalid != 0 }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(g in gaze_strategy()) {
            let p = FixationParams::default();
            let got = detect_fixations(&g, &p);
            let want = oracle::detect(&g, &p);
            prop_assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                prop_assert_eq!((a.t_start, a.t_end), (b.t_start, b.t_end));
                prop_assert!((a.cx - b.cx).abs() < 1e-9 && (a.cy - b.cy).abs() < 1e-9);
            }
        }

        #[test]
        fn fixations_disjoint_and_valid(g in gaze_strategy()) {
            let p = FixationParams::default();
            let f = detect_fixations(&g, &p);
            for w in f.windows(2) {
                prop_assert!(w[0].t_end < w[1].t_start);
            }
            for fx in &f {
                prop_assert!(fx.duration() >= p.min_duration);
                let members: Vec<_> = g.iter().filter(|s| s.valid && s.t >= fx.t_start && s.t <= fx.t_end).collect();
                let lx = members.iter().map(|s| s.x).fold(f64::INFINITY, f64::min);
                let hx = members.iter().map(|s| s.x).fold(f64::NEG_INFINITY, f64::max);
                let ly = members.iter().map(|s| s.y).fold(f64::INFINITY, f64::min);
                let hy = members.iter().map(|s| s.y).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((hx - lx) + (hy - ly) <= p.dispersion_threshold);
            }
        }

        #[test]
        fn shorter_min_duration_never_fewer(g in gaze_strategy(), shrink in 0.0f64..0.15) {
            let p = FixationParams::default();
            let q = FixationParams { min_duration: p.min_duration - shrink, ..p };
            prop_assume!(q.min_duration > 0.0);
            prop_assert!(detect_fixations(&g, &q).len() >= detect_fixations(&g, &p).len());
        }

        #[test]
        fn split_at_non_fixation_boundary(g in gaze_strategy(), cut in 0usize..200) {
            let p = FixationParams::default();
            let k = cut.min(g.len());
            let whole = detect_fixations(&g, &p);
            let inside = whole.iter().any(|f| k > 0 && k < g.len() && g[k - 1].t >= f.t_start && g[k].t <= f.t_end);
            prop_assume!(!inside);
            let mut parts = detect_fixations(&g[..k], &p);
            parts.extend(detect_fixations(&g[k..], &p));
            prop_assert_eq!(whole, parts);
        }
    }
}
