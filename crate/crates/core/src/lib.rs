//! Attention forecasting for mobile interaction.
//!
//! The crate turns timestamped multimodal sensor streams (eye tracker, head
//! and phone IMUs, phone events, per-frame scene descriptors) plus a
//! ground-truth attention annotation into labeled prediction examples,
//! trains random forests on them and scores them with leave-one-person-out
//! weighted F1.
//!
//! Everything here is pure computation over in-memory data and builds under
//! `no_std` with `alloc`. Reading and writing files lives in the companion
//! `foresight` crate.
//!
//! Module map:
//!
//! - [`recording`]: session data model and invariant checks.
//! - [`gaze`]: I-DT fixation detection and at-gaze map lookup.
//! - [`timeline`]: attention state queries, shift events, corpus statistics.
//! - [`features`]: windowed aggregation into named feature vectors.
//! - [`examples`]: labeled examples per task, class balancing, LOPO folds.
//! - [`forest`]: deterministic CART random forest with inner-CV tuning.
//! - [`eval`]: F1 metrics and the end-to-end LOPO experiment.
//! - [`synth`]: synthetic corpora with planted cues and the label oracle.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod eval;
pub mod examples;
pub mod features;
pub mod forest;
pub mod gaze;
pub mod recording;
pub mod synth;
pub mod timeline;

mod util;

pub use util::{mix_seed, seed_for_label};
