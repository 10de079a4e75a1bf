//! Reference labels by direct scan of the annotation intervals. Written
//! against the raw interval list only; it must not call into the example,
//! timeline or feature code it is used to check.

use serde::{Deserialize, Serialize};

use crate::examples::Task;
use crate::recording::{Attention, Recording};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLabel {
    pub eligible: bool,
    pub label: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("reference time {t_ref} with target window {target_window} s falls outside the recording")]
    OutOfRange { t_ref: f64, target_window: f64 },
}

pub fn oracle_label(rec: &Recording, task: Task, t_ref: f64, target_window: f64) -> Result<OracleLabel, OracleError> {
    let out_of_range = OracleError::OutOfRange { t_ref, target_window };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for iv in &rec.annotations.intervals {
        lo = lo.min(iv.start);
        hi = hi.max(iv.end);
    }
    let inside = target_window > 0.0 && t_ref >= lo && t_ref + target_window <= hi;
    if !inside {
        return Err(out_of_range);
    }
    let ivs = &rec.annotations.intervals;
    let a = t_ref;
    let b = t_ref + target_window;

    let mut now: Option<Attention> = None;
    for iv in ivs {
        if iv.start <= a && a < iv.end {
            now = Some(iv.attention);
        }
    }

    let wanted = match task {
        Task::ShiftToEnvironment => Some((Attention::Device, Attention::Environment)),
        Task::ShiftToDevice => Some((Attention::Environment, Attention::Device)),
        Task::PrimaryFocus => None,
    };
    match wanted {
        Some((from, to)) => {
            if now != Some(from) {
                return Ok(OracleLabel { eligible: false, label: false });
            }
            let mut shift = false;
            for i in 1..ivs.len() {
                let (p, q) = (&ivs[i - 1], &ivs[i]);
                let boundary = q.start;
                if p.end == q.start && p.attention != q.attention && q.attention == to && boundary > a && boundary <= b {
                    shift = true;
                }
            }
            Ok(OracleLabel { eligible: true, label: shift })
        }
        None => {
            if now.is_none() {
                return Ok(OracleLabel { eligible: false, label: false });
            }
            let mut device = 0.0;
            for iv in ivs {
                let s = if iv.start > a { iv.start } else { a };
                let e = if iv.end < b { iv.end } else { b };
                if e > s && iv.attention == Attention::Device {
                    device += e - s;
                }
            }
            Ok(OracleLabel { eligible: true, label: device / target_window > 0.5 })
        }
    }
}
