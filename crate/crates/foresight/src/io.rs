//! Recording directories: a JSON manifest plus one JSON Lines file per stream.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use foresight_core::recording::{AnnotationTrack, Recording, RecordingConfig, SegmentSchedule, Stream, ValidationError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FORMAT: &str = "foresight-recording/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamRef {
    /// Relative to the manifest's directory.
    pub path: String,
    /// Seconds added to every timestamp of the stream on load.
    #[serde(default)]
    pub clock_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub participant_id: String,
    pub constants: RecordingConfig,
    /// Keyed by stream name. Empty optional streams are left out.
    pub streams: BTreeMap<String, StreamRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("stream {stream} missing: {}", path.display())]
    MissingStream { stream: String, path: PathBuf },
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Validation { path: PathBuf, source: ValidationError },
    #[error("{}: no recordings found", .0.display())]
    EmptyCorpus(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| IoError::Format { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("records serialize");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Format { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

const REQUIRED: [Stream; 2] = [Stream::Annotations, Stream::Segments];

/// Loads, applies clock offsets and validates.
pub fn load_recording(manifest_path: &Path) -> Result<Recording, IoError> {
    let manifest: Manifest = read_json(manifest_path)?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(IoError::Format {
            path: manifest_path.to_path_buf(),
            line: 1,
            message: format!("unsupported format {:?}, expected {MANIFEST_FORMAT:?}", manifest.format),
        });
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut rec = Recording::empty(manifest.participant_id.clone());
    rec.config = manifest.constants.clone();
    for name in manifest.streams.keys() {
        if !Stream::ALL.iter().any(|s| s.name() == name) {
            return Err(IoError::Format { path: manifest_path.to_path_buf(), line: 1, message: format!("unknown stream {name:?}") });
        }
    }
    for stream in Stream::ALL {
        let Some(sref) = manifest.streams.get(stream.name()) else {
            if REQUIRED.contains(&stream) {
                return Err(IoError::MissingStream { stream: stream.name().into(), path: manifest_path.to_path_buf() });
            }
            continue;
        };
        let path = dir.join(&sref.path);
        if !path.is_file() {
            return Err(IoError::MissingStream { stream: stream.name().into(), path });
        }
        match stream {
            Stream::Gaze => rec.gaze = read_lines(&path)?,
            Stream::HeadImu => rec.head_imu = read_lines(&path)?,
            Stream::PhoneImu => rec.phone_imu = read_lines(&path)?,
            Stream::PhoneEvents => rec.phone_events = read_lines(&path)?,
            Stream::Frames => rec.frames = read_lines(&path)?,
            Stream::Maps => rec.maps = read_lines(&path)?,
            Stream::Annotations => rec.annotations = AnnotationTrack::new(read_lines(&path)?),
            Stream::Segments => rec.segments = SegmentSchedule::new(read_lines(&path)?),
        }
        if !sref.clock_offset.is_finite() {
            return Err(IoError::Format { path: manifest_path.to_path_buf(), line: 1, message: format!("non-finite clock offset for {stream}") });
        }
        rec.shift_stream(stream, sref.clock_offset);
    }
    rec.validate().map_err(|source| IoError::Validation { path: manifest_path.to_path_buf(), source })?;
    Ok(rec)
}

fn populated(rec: &Recording, stream: Stream) -> bool {
    match stream {
        Stream::Gaze => !rec.gaze.is_empty(),
        Stream::HeadImu => !rec.head_imu.is_empty(),
        Stream::PhoneImu => !rec.phone_imu.is_empty(),
        Stream::PhoneEvents => !rec.phone_events.is_empty(),
        Stream::Frames => !rec.frames.is_empty(),
        Stream::Maps => !rec.maps.is_empty(),
        Stream::Annotations | Stream::Segments => true,
    }
}

pub fn save_recording(rec: &Recording, dir: &Path) -> Result<PathBuf, IoError> {
    save_recording_with(rec, dir, None)
}

/// Writes the manifest and stream files into `dir`; returns the manifest path.
pub fn save_recording_with(rec: &Recording, dir: &Path, provenance: Option<&serde_json::Value>) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut streams = BTreeMap::new();
    for stream in Stream::ALL.into_iter().filter(|&s| populated(rec, s)) {
        let file = format!("{}.jsonl", stream.name());
        let path = dir.join(&file);
        match stream {
            Stream::Gaze => write_lines(&path, &rec.gaze)?,
            Stream::HeadImu => write_lines(&path, &rec.head_imu)?,
            Stream::PhoneImu => write_lines(&path, &rec.phone_imu)?,
            Stream::PhoneEvents => write_lines(&path, &rec.phone_events)?,
            Stream::Frames => write_lines(&path, &rec.frames)?,
            Stream::Maps => write_lines(&path, &rec.maps)?,
            Stream::Annotations => write_lines(&path, &rec.annotations.intervals)?,
            Stream::Segments => write_lines(&path, &rec.segments.segments)?,
        }
        streams.insert(stream.name().to_string(), StreamRef { path: file, clock_offset: 0.0 });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        participant_id: rec.participant_id.clone(),
        constants: rec.config.clone(),
        streams,
        provenance: provenance.cloned(),
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Manifests of a corpus: `dir/manifest.json` itself, or one per
/// immediate subdirectory, in name order.
pub fn corpus_manifests(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let own = dir.join(MANIFEST_FILE);
    if own.is_file() {
        return Ok(vec![own]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let m = entry.path().join(MANIFEST_FILE);
        if m.is_file() {
            out.push(m);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(IoError::EmptyCorpus(dir.to_path_buf()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use foresight_core::synth::{generate, SynthConfig};

    fn sample() -> Recording {
        let cfg = SynthConfig { n_participants: 1, session_length: 120.0, n_blocks: 1, cue_probability: 0.5, seed: 3, ..SynthConfig::default() };
        generate(&cfg).unwrap().remove(0)
    }

    #[test]
    fn round_trip_and_byte_stable() {
        let rec = sample();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = save_recording(&rec, a.path()).unwrap();
        save_recording(&rec, b.path()).unwrap();
        assert_eq!(load_recording(&m).unwrap(), rec);
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 9);
        for n in names {
            assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap());
        }
    }

    #[test]
    fn empty_optional_streams_are_omitted() {
        let mut rec = sample();
        rec.maps.clear();
        rec.frames.iter_mut().for_each(|f| f.map = None);
        rec.gaze.clear();
        let dir = tempfile::tempdir().unwrap();
        let m = save_recording(&rec, dir.path()).unwrap();
        let manifest: Manifest = read_json(&m).unwrap();
        assert!(!manifest.streams.contains_key("gaze"));
        assert!(!manifest.streams.contains_key("maps"));
        assert!(!dir.path().join("gaze.jsonl").exists());
        assert_eq!(load_recording(&m).unwrap(), rec);
    }

    #[test]
    fn missing_and_malformed_streams() {
        let rec = sample();
        let dir = tempfile::tempdir().unwrap();
        let m = save_recording(&rec, dir.path()).unwrap();
        fs::remove_file(dir.path().join("gaze.jsonl")).unwrap();
        assert!(matches!(load_recording(&m), Err(IoError::MissingStream { .. })));

        save_recording(&rec, dir.path()).unwrap();
        let p = dir.path().join("head_imu.jsonl");
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("{\"accel\":[0,0,0]}\n");
        fs::write(&p, text).unwrap();
        match load_recording(&m) {
            Err(IoError::Format { line, .. }) => assert_eq!(line, rec.head_imu.len() + 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_order_timestamp_is_named() {
        let mut rec = sample();
        let bad_t = rec.gaze[10].t;
        rec.gaze.swap(10, 11);
        let dir = tempfile::tempdir().unwrap();
        let m = save_recording(&rec, dir.path()).unwrap();
        match load_recording(&m) {
            Err(IoError::Validation { source, .. }) => {
                assert_eq!(source.stream, Stream::Gaze);
                assert_eq!(source.t, bad_t);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clock_offset_applied() {
        let rec = sample();
        let dir = tempfile::tempdir().unwrap();
        let m = save_recording(&rec, dir.path()).unwrap();
        let mut manifest: Manifest = read_json(&m).unwrap();
        manifest.streams.get_mut("gaze").unwrap().clock_offset = 0.25;
        write_json(&m, &manifest).unwrap();
        let loaded = load_recording(&m).unwrap();
        assert_eq!(loaded.gaze[0].t, rec.gaze[0].t + 0.25);
        assert_eq!(loaded.frames, rec.frames);
    }

    #[test]
    fn ten_minutes_fit_in_fifty_megabytes() {
        let cfg = SynthConfig { n_participants: 1, session_length: 600.0, n_blocks: 2, cue_probability: 0.9, ..SynthConfig::default() };
        let rec = generate(&cfg).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        save_recording(&rec, dir.path()).unwrap();
        let total: u64 = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().metadata().unwrap().len()).sum();
        assert!(total < 50_000_000, "{total} bytes");
    }
}
