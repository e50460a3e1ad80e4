//! Output artifacts: per-epoch records, metric tables, topic exports and
//! plot-ready series.

use std::path::Path;

use gloctm_core::evaluation::{mean, std_dev, MetricReport};
use gloctm_core::training::TrainReport;

use crate::error::{Error, Result};
use crate::io::{write_json, write_lines};

/// One JSON object per epoch.
pub fn write_train_report(path: &Path, report: &TrainReport) -> Result<()> {
    let lines = report
        .epochs
        .iter()
        .map(|e| {
            let mut v = serde_json::to_value(e).map_err(|source| Error::Json { path: path.into(), source })?;
            v["seed"] = report.seed.into();
            Ok(v.to_string())
        })
        .collect::<Result<Vec<_>>>()?;
    write_lines(path, lines)
}

/// `topic_id <TAB> language-1 words <TAB> language-2 words`.
pub fn write_topics(path: &Path, topics: &[[Vec<String>; 2]]) -> Result<()> {
    write_lines(path, topics.iter().enumerate().map(|(k, [a, b])| format!("{k}\t{}\t{}", a.join(" "), b.join(" "))))
}

/// Flat `(key, value)` view of a report.
pub fn metric_pairs(m: &MetricReport) -> Vec<(String, f64)> {
    let mut out = vec![("cnpmi".to_owned(), m.cnpmi), ("tu".to_owned(), m.tu), ("tq".to_owned(), m.tq)];
    if let Some(c) = &m.classification {
        out.extend([
            ("l1_intra".to_owned(), c.l1_intra),
            ("l2_intra".to_owned(), c.l2_intra),
            ("l1_cross".to_owned(), c.l1_cross),
            ("l2_cross".to_owned(), c.l2_cross),
        ]);
    }
    if let Some(a) = m.alignment_accuracy {
        out.push(("alignment_accuracy".to_owned(), a));
    }
    out
}

/// `metrics.json`, `metrics.tsv` and the plot series for one evaluation.
pub fn write_metrics(dir: &Path, m: &MetricReport) -> Result<()> {
    write_json(&dir.join("metrics.json"), m)?;
    write_lines(&dir.join("metrics.tsv"), metric_pairs(m).iter().map(|(k, v)| format!("{k}\t{v}")))?;
    write_lines(
        &dir.join("plot_cnpmi.tsv"),
        std::iter::once("topic\tcnpmi".to_owned())
            .chain(m.per_topic_cnpmi.iter().enumerate().map(|(k, v)| format!("{k}\t{v}"))),
    )?;
    if let Some(c) = &m.classification {
        let rows = [("L1", "intra", c.l1_intra), ("L2", "intra", c.l2_intra), ("L1", "cross", c.l1_cross), ("L2", "cross", c.l2_cross)];
        write_lines(
            &dir.join("plot_classification.tsv"),
            std::iter::once("test_language\tsetting\taccuracy".to_owned())
                .chain(rows.iter().map(|(l, s, v)| format!("{l}\t{s}\t{v}"))),
        )?;
    }
    Ok(())
}

/// `metric <TAB> mean <TAB> std <TAB> n` over several runs, keyed by the
/// metrics present in every run.
pub fn aggregate_lines(runs: &[Vec<(String, f64)>]) -> Vec<String> {
    let mut out = vec!["metric\tmean\tstd\tn".to_owned()];
    let Some(first) = runs.first() else { return out };
    for (key, _) in first {
        let values: Vec<f64> =
            runs.iter().filter_map(|r| r.iter().find(|(k, _)| k == key).map(|(_, v)| *v)).collect();
        if values.len() == runs.len() {
            out.push(format!("{key}\t{}\t{}\t{}", mean(&values), std_dev(&values), values.len()));
        }
    }
    out
}
