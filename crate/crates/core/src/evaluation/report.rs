//! CSV files of an experiment: per-seed metrics, per-emotion breakdowns and a
//! seed-aggregated summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::experiment::{ExperimentOutput, SeedFailure};
use super::metrics::{mean_se, Metric};

pub const METRICS_CSV: &str = "metrics.csv";
pub const PER_EMOTION_CSV: &str = "per_emotion.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const FAILURES_CSV: &str = "failures.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One row of `metrics.csv`. Column order is part of the file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    pub query_count: usize,
    pub labels: usize,
    pub quality_mean: f64,
    pub quality_se: f64,
    pub top1: f64,
    pub top1_se: f64,
    pub top2: f64,
    pub top2_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerEmotionRow {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    pub query_count: usize,
    pub emotion: String,
    pub quality: f64,
    pub top1: f64,
    pub top2: f64,
}

/// Means and standard errors across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub n: usize,
    pub query_count: usize,
    pub seeds: usize,
    pub quality_mean: f64,
    pub quality_se: f64,
    pub top1_mean: f64,
    pub top1_se: f64,
    pub top2_mean: f64,
    pub top2_se: f64,
    pub quality_chance: f64,
    pub top1_chance: f64,
    pub top2_chance: f64,
}

impl SummaryRow {
    pub fn get(&self, metric: Metric) -> (f64, f64) {
        match metric {
            Metric::Quality => (self.quality_mean, self.quality_se),
            Metric::Top1 => (self.top1_mean, self.top1_se),
            Metric::Top2 => (self.top2_mean, self.top2_se),
        }
    }
}

/// Rows of `out` in a fixed order: method, N, seed, query count.
pub fn metrics_rows(out: &ExperimentOutput) -> Vec<MetricsRow> {
    let mut recs: Vec<_> = out.records.iter().collect();
    recs.sort_by_key(|r| (r.method, r.n, r.seed, r.query_count));
    recs.into_iter()
        .map(|r| MetricsRow {
            method: r.method.name().to_string(),
            n: r.n,
            seed: r.seed,
            query_count: r.query_count,
            labels: r.labels,
            quality_mean: r.quality_mean,
            quality_se: r.quality_se,
            top1: r.top1,
            top1_se: r.top1_se,
            top2: r.top2,
            top2_se: r.top2_se,
        })
        .collect()
}

pub fn per_emotion_rows(out: &ExperimentOutput) -> Vec<PerEmotionRow> {
    let mut recs: Vec<_> = out.records.iter().collect();
    recs.sort_by_key(|r| (r.method, r.n, r.seed, r.query_count));
    recs.into_iter()
        .flat_map(|r| {
            r.per_emotion.iter().map(move |e| PerEmotionRow {
                method: r.method.name().to_string(),
                n: r.n,
                seed: r.seed,
                query_count: r.query_count,
                emotion: e.emotion.clone(),
                quality: e.quality,
                top1: e.top1,
                top2: e.top2,
            })
        })
        .collect()
}

/// Groups by (method, N, query count), keeping the input's first-seen order
/// of methods.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, usize, usize), (String, Vec<&MetricsRow>)> = BTreeMap::new();
    let mut method_order: Vec<String> = Vec::new();
    for r in rows {
        let mi = match method_order.iter().position(|m| *m == r.method) {
            Some(i) => i,
            None => {
                method_order.push(r.method.clone());
                method_order.len() - 1
            }
        };
        groups.entry((mi, r.n, r.query_count)).or_insert_with(|| (r.method.clone(), Vec::new())).1.push(r);
    }
    groups
        .into_iter()
        .map(|((_, n, query_count), (method, rs))| {
            let col = |f: fn(&MetricsRow) -> f64| mean_se(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (quality_mean, quality_se) = col(|r| r.quality_mean);
            let (top1_mean, top1_se) = col(|r| r.top1);
            let (top2_mean, top2_se) = col(|r| r.top2);
            SummaryRow {
                method,
                n,
                query_count,
                seeds: rs.len(),
                quality_mean,
                quality_se,
                top1_mean,
                top1_se,
                top2_mean,
                top2_se,
                quality_chance: Metric::Quality.chance(n),
                top1_chance: Metric::Top1.chance(n),
                top2_chance: Metric::Top2.chance(n),
            }
        })
        .collect()
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S], header: &[&str]) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<D>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<Result<Vec<D>, _>>().map_err(Into::into)
}

pub const METRICS_HEADER: [&str; 11] =
    ["method", "n", "seed", "query_count", "labels", "quality_mean", "quality_se", "top1", "top1_se", "top2", "top2_se"];
pub const PER_EMOTION_HEADER: [&str; 8] = ["method", "n", "seed", "query_count", "emotion", "quality", "top1", "top2"];
pub const SUMMARY_HEADER: [&str; 13] = [
    "method",
    "n",
    "query_count",
    "seeds",
    "quality_mean",
    "quality_se",
    "top1_mean",
    "top1_se",
    "top2_mean",
    "top2_se",
    "quality_chance",
    "top1_chance",
    "top2_chance",
];
pub const FAILURES_HEADER: [&str; 5] = ["method", "n", "seed", "stage", "message"];

/// Writes the four CSV files into `dir` (created if missing).
pub fn write_results(dir: &Path, out: &ExperimentOutput) -> Result<(), ReportError> {
    fs::create_dir_all(dir)?;
    let rows = metrics_rows(out);
    write_csv(&dir.join(METRICS_CSV), &rows, &METRICS_HEADER)?;
    write_csv(&dir.join(PER_EMOTION_CSV), &per_emotion_rows(out), &PER_EMOTION_HEADER)?;
    write_csv(&dir.join(SUMMARY_CSV), &summarize(&rows), &SUMMARY_HEADER)?;
    let mut failures: Vec<&SeedFailure> = out.failures.iter().collect();
    failures.sort_by_key(|f| (f.method, f.n, f.seed));
    write_csv(&dir.join(FAILURES_CSV), &failures, &FAILURES_HEADER)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, n: usize, seed: u64, qc: usize, top1: f64) -> MetricsRow {
        MetricsRow {
            method: method.into(),
            n,
            seed,
            query_count: qc,
            labels: qc,
            quality_mean: 4.0 + top1,
            quality_se: 0.1,
            top1,
            top1_se: 0.0,
            top2: top1,
            top2_se: 0.0,
        }
    }

    #[test]
    fn summary_aggregates_across_seeds() {
        let rows = vec![row("ours", 2, 0, 0, 0.5), row("ours", 2, 1, 0, 0.7), row("sep", 2, 0, 0, 0.1)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].method, "ours");
        assert_eq!(s[0].seeds, 2);
        assert!((s[0].top1_mean - 0.6).abs() < 1e-12);
        assert!((s[0].top1_se - 0.1).abs() < 1e-12);
        assert_eq!(s[1].top1_se, 0.0);
        assert_eq!(s[0].top2_chance, 1.0);
    }

    #[test]
    fn csv_round_trip_keeps_header_order() {
        let dir = std::env::temp_dir().join(format!("emotive-report-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let rows = vec![row("ours", 6, 3, 20, 0.25)];
        write_csv(&path, &rows, &METRICS_HEADER).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("method,n,seed,query_count,labels,quality_mean"));
        let back: Vec<MetricsRow> = read_csv(&path).unwrap();
        assert_eq!(back, rows);
        fs::remove_dir_all(&dir).unwrap();
    }
}
