//! Metric families emitted by a replay, and their JSON/CSV files.

use std::collections::BTreeMap;
use std::path::Path;

use lbsn_core::Ranker;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

/// Ranks reported in the rank CDF.
pub const RANK_CDF_DEPTH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub p: f64,
}

/// Empirical CDF at each distinct finite value; infinite values count in
/// the denominator only.
pub fn ecdf(values: &[f64]) -> Vec<CdfPoint> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.x == *x => last.p = p,
            _ => out.push(CdfPoint { x: *x, p }),
        }
    }
    out
}

/// Lower median of the finite values.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCdfPoint {
    pub rank: usize,
    pub fraction: f64,
}

/// Fraction of cases whose 1-based rank is at most `k`, for `k` up to
/// `depth`; `None` marks a miss.
pub fn rank_cdf(ranks: &[Option<usize>], depth: usize) -> Vec<RankCdfPoint> {
    let n = ranks.len().max(1) as f64;
    (1..=depth)
        .map(|k| RankCdfPoint {
            rank: k,
            fraction: ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / n,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionPoint {
    pub dstar: f64,
    /// Fake check-ins labeled fake, over fake check-ins.
    pub detection_prob: f64,
    /// Honest check-ins labeled fake, over honest check-ins.
    pub false_alarm_prob: f64,
    pub fakes: usize,
    pub honest: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingPoint {
    pub fake_checkin_prob: f64,
    /// Locations estimated from every check-in.
    pub unfiltered: f64,
    /// Locations estimated from check-ins the detector accepts.
    pub detector: f64,
    /// Locations estimated from the truly honest check-ins.
    pub oracle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub max_edit: usize,
    /// Venues given any name.
    pub named: f64,
    /// Venues given their true name.
    pub recall: f64,
    /// Venues given a wrong name.
    pub false_positive: f64,
    pub venues: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerAccuracy {
    pub ranker: Ranker,
    /// Check-ins where the ranker voted.
    pub votes: usize,
    /// Over all evaluated check-ins; abstentions count as misses.
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub false_positive: usize,
    pub true_negative: usize,
}

impl Confusion {
    pub fn add(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.true_positive += 1,
            (true, false) => self.false_negative += 1,
            (false, true) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
        }
    }

    pub fn tp_rate(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn fp_rate(&self) -> f64 {
        ratio(self.false_positive, self.false_positive + self.true_negative)
    }
}

pub fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NamingCounts {
    pub ssid: usize,
    pub logical_fingerprint: usize,
    pub unnamed: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub checkins: usize,
    /// Check-ins whose actual venue was in the store when they arrived.
    pub evaluated: usize,
    pub top1: f64,
    pub top5: f64,
    pub rank_cdf: Vec<RankCdfPoint>,
    /// Walking distance from the actual venue to the top-ranked one.
    pub distance_error_cdf: Vec<CdfPoint>,
    pub median_distance_error_m: Option<f64>,
    /// Positive class: the actual venue was missing from the store.
    pub new_venue: Confusion,
    pub fake_detection: Vec<DetectionPoint>,
    pub labeling: Vec<LabelingPoint>,
    pub coverage: Vec<CoveragePoint>,
    /// Venues created by the coverage extender during the replay.
    pub naming: NamingCounts,
    pub rankers: Vec<RankerAccuracy>,
    pub final_weights: BTreeMap<Ranker, f64>,
}

impl MetricsReport {
    /// Flat `(metric, value)` summary.
    pub fn summary(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("checkins".to_string(), self.checkins as f64),
            ("evaluated".into(), self.evaluated as f64),
            ("top1_recall".into(), self.top1),
            ("top5_recall".into(), self.top5),
            (
                "median_distance_error_m".into(),
                self.median_distance_error_m.unwrap_or(f64::NAN),
            ),
            ("new_venue_tp_rate".into(), self.new_venue.tp_rate()),
            ("new_venue_fp_rate".into(), self.new_venue.fp_rate()),
            ("coverage_named_by_ssid".into(), self.naming.ssid as f64),
            (
                "coverage_named_by_logical".into(),
                self.naming.logical_fingerprint as f64,
            ),
            ("coverage_unnamed".into(), self.naming.unnamed as f64),
            ("coverage_correct".into(), self.naming.correct as f64),
        ];
        for l in &self.labeling {
            rows.push((format!("labeling_unfiltered@{}", l.fake_checkin_prob), l.unfiltered));
            rows.push((format!("labeling_detector@{}", l.fake_checkin_prob), l.detector));
            rows.push((format!("labeling_oracle@{}", l.fake_checkin_prob), l.oracle));
        }
        for d in &self.fake_detection {
            rows.push((format!("detection_prob@{}", d.dstar), d.detection_prob));
            rows.push((format!("false_alarm_prob@{}", d.dstar), d.false_alarm_prob));
        }
        for r in &self.rankers {
            rows.push((format!("ranker_top1_{}", r.ranker), r.top1));
            rows.push((format!("ranker_top5_{}", r.ranker), r.top5));
        }
        for (r, w) in &self.final_weights {
            rows.push((format!("weight_{r}"), *w));
        }
        rows
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes one file per metric family plus `summary`, in `format`.
    pub fn write(&self, dir: &Path, format: Format) -> SimResult<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: String| -> SimResult<()> {
            let ext = match format {
                Format::Json => "json",
                Format::Csv => "csv",
            };
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::write(&path, body).map_err(|e| SimError::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        match format {
            Format::Json => {
                put("rank_cdf", json(&self.rank_cdf))?;
                put("distance_error_cdf", json(&self.distance_error_cdf))?;
                put("fake_detection", json(&self.fake_detection))?;
                put("labeling", json(&self.labeling))?;
                put("coverage", json(&self.coverage))?;
                put("rankers", json(&self.rankers))?;
                put("summary", json(&self.summary().into_iter().collect::<BTreeMap<_, _>>()))?;
            }
            Format::Csv => {
                put("rank_cdf", csv_rows(&self.rank_cdf)?)?;
                put("distance_error_cdf", csv_rows(&self.distance_error_cdf)?)?;
                put("fake_detection", csv_rows(&self.fake_detection)?)?;
                put("labeling", csv_rows(&self.labeling)?)?;
                put("coverage", csv_rows(&self.coverage)?)?;
                put("rankers", csv_rows(&self.rankers)?)?;
                #[derive(Serialize)]
                struct Row<'a> {
                    metric: &'a str,
                    value: f64,
                }
                let summary = self.summary();
                let rows: Vec<Row> = summary.iter().map(|(m, v)| Row { metric: m, value: *v }).collect();
                put("summary", csv_rows(&rows)?)?;
            }
        }
        Ok(written)
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn csv_rows<T: Serialize>(rows: &[T]) -> SimResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| SimError::parse("csv", e))?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::parse("csv", e))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
