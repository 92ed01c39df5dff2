//! Run reports and their serialization: versioned CSV series (one file per
//! scenario/fuser/metric) plus a single JSON report with full provenance.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::FusionMethod;
use crate::metrics::EllipseSummary;

use super::ScenarioConfig;

/// Version tag written as the first line of every CSV file.
pub const CSV_FORMAT_VERSION: &str = "trackfuse-csv v1";

/// One sampled value of a metric series, with optional acceptance bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricPoint {
    pub step: usize,
    pub time_s: f64,
    pub value: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
}

/// A named per-step series for one fuser (e.g. `rmse_pos_t04`, `nees`,
/// `omega`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric: String,
    pub points: Vec<MetricPoint>,
}

impl MetricSeries {
    pub fn new(metric: impl Into<String>) -> Self {
        Self {
            metric: metric.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, step: usize, time_s: f64, value: f64) {
        self.points.push(MetricPoint {
            step,
            time_s,
            value,
            lower_bound: None,
            upper_bound: None,
        });
    }

    pub fn push_bounded(&mut self, step: usize, time_s: f64, value: f64, lo: f64, hi: f64) {
        self.points.push(MetricPoint {
            step,
            time_s,
            value,
            lower_bound: Some(lo),
            upper_bound: Some(hi),
        });
    }

    /// Arithmetic mean of the series values; `None` when empty.
    pub fn time_average(&self) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().map(|p| p.value).sum::<f64>() / self.points.len() as f64)
    }
}

/// A labeled confidence ellipse attached to a fuser report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipseRecord {
    pub label: String,
    pub ellipse: EllipseSummary,
}

/// Everything measured for a single fuser over the Monte-Carlo runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuserReport {
    pub fuser: FusionMethod,
    /// Total wall-clock seconds spent executing this fuser's runs.
    pub wall_clock_s: f64,
    pub series: Vec<MetricSeries>,
    /// Scalar summaries (trace ratios, averaged weights, consistency
    /// margins); keys are stable, sorted strings.
    pub summary: BTreeMap<String, f64>,
    /// Mean-squared-error matrix at the evaluation point, where the
    /// scenario defines one.
    pub sample_cov: Option<DMatrix<f64>>,
    /// Run-averaged reported covariance at the evaluation point.
    pub reported_cov: Option<DMatrix<f64>>,
    pub ellipses: Vec<EllipseRecord>,
}

impl FuserReport {
    pub fn new(fuser: FusionMethod) -> Self {
        Self {
            fuser,
            wall_clock_s: 0.0,
            series: Vec::new(),
            summary: BTreeMap::new(),
            sample_cov: None,
            reported_cov: None,
            ellipses: Vec::new(),
        }
    }

    pub fn series_named(&self, metric: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric == metric)
    }
}

/// Report of one scenario execution across all requested fusers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub fusers: Vec<FuserReport>,
    /// Runs that failed numerically (logged, never silently dropped).
    pub run_failures: usize,
    /// Description of the first failure, if any occurred.
    pub first_failure: Option<String>,
    pub mc_runs_completed: usize,
}

impl RunReport {
    pub fn fuser_report(&self, fuser: FusionMethod) -> Option<&FuserReport> {
        self.fusers.iter().find(|f| f.fuser == fuser)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render one metric series as a versioned CSV document. The header echoes
/// the full scenario config for provenance.
pub fn csv_document(config_json: &str, fuser: FusionMethod, series: &MetricSeries) -> String {
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(CSV_FORMAT_VERSION);
    out.push('\n');
    out.push_str("# config=");
    out.push_str(config_json);
    out.push('\n');
    out.push_str(&format!("# fuser={fuser}\n"));
    out.push_str("step,time_s,metric,value,lower_bound,upper_bound\n");
    for p in &series.points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.step,
            p.time_s,
            series.metric,
            p.value,
            fmt_opt(p.lower_bound),
            fmt_opt(p.upper_bound),
        ));
    }
    out
}

/// Write a report to `dir`: one CSV per (scenario, fuser, metric) and a
/// single JSON file with the complete report. Returns the created paths in
/// a deterministic order.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let scenario = report.config.kind.label();
    let config_json = serde_json::to_string(&report.config)?;
    let mut written = Vec::new();
    for fuser_report in &report.fusers {
        for series in &fuser_report.series {
            let name = format!("{}_{}_{}.csv", scenario, fuser_report.fuser, series.metric);
            let path = dir.join(name);
            let doc = csv_document(&config_json, fuser_report.fuser, series);
            let mut file = std::fs::File::create(&path)?;
            file.write_all(doc.as_bytes())?;
            written.push(path);
        }
    }
    let json_path = dir.join(format!("{scenario}_report.json"));
    let pretty = serde_json::to_string_pretty(report)?;
    std::fs::write(&json_path, pretty)?;
    written.push(json_path);
    Ok(written)
}
