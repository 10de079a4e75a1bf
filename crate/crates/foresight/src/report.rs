//! Plain-text tables and CSV renderings of reports.

use std::fmt::Write;

use foresight_core::eval::{Breakdown, ExperimentReport};
use foresight_core::timeline::SummaryStats;

fn f3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Left-aligns the first column and right-aligns the rest.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for r in rows {
        line(&mut r.iter().map(String::as_str));
    }
    out
}

fn breakdown_rows(items: &[Breakdown]) -> Vec<Vec<String>> {
    items
        .iter()
        .map(|b| {
            vec![
                b.key.clone(),
                b.n.to_string(),
                f3(b.weighted_f1),
                format!("{:.3}", b.normalized[0][0]),
                format!("{:.3}", b.normalized[1][1]),
            ]
        })
        .collect()
}

pub fn experiment_text(r: &ExperimentReport) -> String {
    let mut out = format!(
        "task {}  group {}  target window {} s  feature window {} s  stride {} s  seed {}\n{} examples, {} features\n\n",
        r.task.name(),
        r.group.name(),
        r.target_window,
        r.feature_window,
        r.stride,
        r.seed,
        r.n_examples,
        r.n_features
    );
    let rows: Vec<Vec<String>> = r
        .folds
        .iter()
        .map(|f| {
            let c = &f.confusion;
            vec![
                f.participant.clone(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                format!("{:.3}", f.weighted_f1),
            ]
        })
        .collect();
    out.push_str(&table(&["participant", "train", "test", "tp", "fp", "fn", "tn", "weighted F1"], &rows));
    for s in &r.skipped {
        let _ = writeln!(out, "skipped {}: {}", s.participant, s.reason);
    }
    let _ = writeln!(out, "\nmean weighted F1 {}  std {}  ({} folds)\n", f3(r.mean_f1), f3(r.std_f1), r.folds.len());
    let header = ["", "n", "weighted F1", "TNR", "TPR"];
    out.push_str(&table(&header, &breakdown_rows(std::slice::from_ref(&r.pooled))));
    out.push('\n');
    out.push_str(&table(&header, &breakdown_rows(&r.by_segment)));
    out.push('\n');
    out.push_str(&table(&header, &breakdown_rows(&r.by_environment)));
    out
}

/// One row per report: overall and per-segment weighted F1.
pub fn run_text(reports: &[ExperimentReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let seg = |k: &str| r.by_segment.iter().find(|b| b.key == k).and_then(|b| b.weighted_f1);
            vec![
                r.task.name().to_string(),
                r.target_window.to_string(),
                r.group.name().to_string(),
                f3(r.mean_f1),
                f3(r.std_f1),
                f3(seg("working")),
                f3(seg("waiting")),
                r.folds.len().to_string(),
                r.skipped.len().to_string(),
            ]
        })
        .collect();
    table(&["task", "target (s)", "group", "mean F1", "std", "working", "waiting", "folds", "skipped"], &rows)
}

/// Row-normalized confusion matrices of every breakdown cell.
pub fn confusion_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("task,target_window,group,breakdown,key,true_class,pred_negative,pred_positive\n");
    for r in reports {
        let cells = std::iter::once(("all", &r.pooled))
            .chain(r.by_segment.iter().map(|b| ("segment", b)))
            .chain(r.by_environment.iter().map(|b| ("environment", b)));
        for (kind, b) in cells {
            for (i, class) in ["negative", "positive"].iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{kind},{},{class},{},{}",
                    r.task.name(),
                    r.target_window,
                    r.group.name(),
                    b.key,
                    b.normalized[i][0],
                    b.normalized[i][1]
                );
            }
        }
    }
    out
}

pub fn stats_text(s: &SummaryStats) -> String {
    let rows: Vec<Vec<String>> = s
        .rows
        .iter()
        .map(|r| vec![format!("{}: {}", r.family, r.row), format!("{:.2}", r.mean), format!("{:.2}", r.std), f3(r.total).replace(".000", "")])
        .collect();
    format!("{} participants\n\n{}", s.participants.len(), table(&["statistic", "mean", "std", "total"], &rows))
}
