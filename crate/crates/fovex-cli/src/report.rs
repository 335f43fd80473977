//! Run records: one JSON document per command invocation, accounting for
//! every manifest entry either as a result or as a recorded failure, plus
//! the CSV renderings of evaluation results.

use std::collections::BTreeMap;

use fovex::foveation::{Fixation, FovexConfig};
use fovex::predictor::PredictorDescriptor;
use serde::{Deserialize, Serialize};

/// Per-metric values of one image. Fields stay `None` when the metric was
/// not requested, its ground truth is missing, or it is undefined for the
/// row (for example pct_drop at p_full = 0).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_full: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_masked: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pct_drop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increased: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delete_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub insert_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ebpg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aucj: Option<f64>,
}

/// One manifest entry's outcome. A row either carries artifacts/metrics or
/// an error string, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub index: usize,
    pub image: String,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sidecar_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlay_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixations: Option<Vec<Fixation>>,
    pub wall_clock_s: f64,
    #[serde(default)]
    pub metrics: MetricValues,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean of one metric over the rows where it was defined, with the number of
/// rows excluded from that mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub excluded: usize,
}

/// The full account of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: FovexConfig,
    pub predictor: PredictorDescriptor,
    pub seed: u64,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_fraction: Option<f64>,
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub mean_wall_clock_s: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, MetricSummary>,
    pub rows: Vec<RowRecord>,
}

impl RunRecord {
    pub fn new(
        command: &str,
        config: FovexConfig,
        predictor: PredictorDescriptor,
        seed: u64,
        workers: usize,
        step_fraction: Option<f64>,
        rows: Vec<RowRecord>,
    ) -> Self {
        let total = rows.len();
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        let mean_wall_clock_s = if total == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.wall_clock_s).sum::<f64>() / total as f64
        };
        RunRecord {
            command: command.to_string(),
            config,
            predictor,
            seed,
            workers,
            step_fraction,
            total,
            succeeded: total - failed,
            failed,
            mean_wall_clock_s,
            summary: BTreeMap::new(),
            rows,
        }
    }

    /// Fills `summary` with the mean/excluded pair of each requested metric.
    pub fn summarize(&mut self, metric_names: &[&str]) {
        for &name in metric_names {
            let values: Vec<f64> = self
                .rows
                .iter()
                .filter_map(|r| metric_value(&r.metrics, name))
                .collect();
            let mean = if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            };
            self.summary.insert(
                name.to_string(),
                MetricSummary { mean, excluded: self.rows.len() - values.len() },
            );
        }
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run record serializes");
        s.push('\n');
        s
    }
}

/// The value a named metric column takes on one row, `increased` rendered as
/// 0/1 so it can participate in means.
pub fn metric_value(metrics: &MetricValues, name: &str) -> Option<f64> {
    match name {
        "drop" => metrics.pct_drop,
        "increase" => metrics.increased.map(|b| if b { 1.0 } else { 0.0 }),
        "delete" => metrics.delete_auc,
        "insert" => metrics.insert_auc,
        "ebpg" => metrics.ebpg,
        "nss" => metrics.nss,
        "aucj" => metrics.aucj,
        _ => None,
    }
}

/// Column order of the evaluation CSV.
pub const CSV_COLUMNS: [&str; 14] = [
    "index",
    "label",
    "target_class",
    "p_full",
    "p_masked",
    "pct_drop",
    "increased",
    "delete_auc",
    "insert_auc",
    "ebpg",
    "nss",
    "aucj",
    "wall_clock_s",
    "error",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders rows plus a trailing `mean` and `excluded` line per the summary.
pub fn to_csv(record: &RunRecord) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("header");
    for r in &record.rows {
        let m = &r.metrics;
        w.write_record([
            r.index.to_string(),
            r.label.clone(),
            r.target_class.map(|t| t.to_string()).unwrap_or_default(),
            cell(m.p_full),
            cell(m.p_masked),
            cell(m.pct_drop),
            m.increased.map(|b| (b as u8).to_string()).unwrap_or_default(),
            cell(m.delete_auc),
            cell(m.insert_auc),
            cell(m.ebpg),
            cell(m.nss),
            cell(m.aucj),
            r.wall_clock_s.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("row");
    }
    let summary_cell = |name: &str| -> Option<&MetricSummary> { record.summary.get(name) };
    let mean_of = |name: &str| summary_cell(name).and_then(|s| s.mean);
    let excluded_of =
        |name: &str| summary_cell(name).map(|s| s.excluded.to_string()).unwrap_or_default();
    w.write_record([
        String::new(),
        "mean".to_string(),
        String::new(),
        String::new(),
        String::new(),
        cell(mean_of("drop")),
        cell(mean_of("increase")),
        cell(mean_of("delete")),
        cell(mean_of("insert")),
        cell(mean_of("ebpg")),
        cell(mean_of("nss")),
        cell(mean_of("aucj")),
        record.mean_wall_clock_s.to_string(),
        String::new(),
    ])
    .expect("mean row");
    w.write_record([
        String::new(),
        "excluded".to_string(),
        String::new(),
        String::new(),
        String::new(),
        excluded_of("drop"),
        excluded_of("increase"),
        excluded_of("delete"),
        excluded_of("insert"),
        excluded_of("ebpg"),
        excluded_of("nss"),
        excluded_of("aucj"),
        String::new(),
        String::new(),
    ])
    .expect("excluded row");
    String::from_utf8(w.into_inner().expect("csv buffer")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(index: usize, ebpg: Option<f64>, error: Option<&str>) -> RowRecord {
        RowRecord {
            index,
            image: format!("img{index}.png"),
            label: format!("{index:04}_img{index}"),
            target_class: Some(0),
            map_path: None,
            sidecar_path: None,
            overlay_path: None,
            fixations: None,
            wall_clock_s: 0.5,
            metrics: MetricValues { ebpg, ..MetricValues::default() },
            error: error.map(str::to_string),
        }
    }

    fn sample_record(rows: Vec<RowRecord>) -> RunRecord {
        let desc = PredictorDescriptor {
            name: "builtin:constant".into(),
            num_classes: 2,
            input_height: 8,
            input_width: 8,
            input_channels: 3,
            supports_gradient: true,
        };
        RunRecord::new("evaluate", FovexConfig::default(), desc, 7, 2, Some(0.1), rows)
    }

    #[test]
    fn totals_account_for_every_row() {
        let record = sample_record(vec![
            sample_row(0, Some(50.0), None),
            sample_row(1, None, Some("boom")),
            sample_row(2, Some(70.0), None),
        ]);
        assert_eq!(record.total, 3);
        assert_eq!(record.succeeded, 2);
        assert_eq!(record.failed, 1);
        assert!((record.mean_wall_clock_s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn summary_means_skip_missing_values_and_count_them() {
        let mut record = sample_record(vec![
            sample_row(0, Some(50.0), None),
            sample_row(1, None, Some("boom")),
            sample_row(2, Some(70.0), None),
        ]);
        record.summarize(&["ebpg", "nss"]);
        let ebpg = &record.summary["ebpg"];
        assert_eq!(ebpg.mean, Some(60.0));
        assert_eq!(ebpg.excluded, 1);
        let nss = &record.summary["nss"];
        assert_eq!(nss.mean, None);
        assert_eq!(nss.excluded, 3);
    }

    #[test]
    fn json_round_trips() {
        let mut record = sample_record(vec![sample_row(0, Some(12.5), None)]);
        record.summarize(&["ebpg"]);
        let text = record.to_json_pretty();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, record);
    }

    #[test]
    fn csv_has_header_rows_and_trailing_aggregates() {
        let mut record = sample_record(vec![
            sample_row(0, Some(50.0), None),
            sample_row(1, Some(70.0), None),
        ]);
        record.summarize(&["ebpg"]);
        let text = to_csv(&record);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 2, "header, two rows, mean, excluded");
        assert!(lines[0].starts_with("index,label,target_class"));
        assert!(lines[3].contains("mean"));
        assert!(lines[3].contains("60"), "{}", lines[3]);
        assert!(lines[4].contains("excluded"));
    }

    #[test]
    fn increased_contributes_as_a_rate() {
        let mut rows = vec![sample_row(0, None, None), sample_row(1, None, None)];
        rows[0].metrics.increased = Some(true);
        rows[1].metrics.increased = Some(false);
        let mut record = sample_record(rows);
        record.summarize(&["increase"]);
        assert_eq!(record.summary["increase"].mean, Some(0.5));
    }
}
