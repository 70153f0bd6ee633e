//! Evaluation report rendering.
//!
//! Output is deterministic: keys are sorted, videos keep the order given, and
//! every float is rounded to 6 significant digits before printing. Metrics
//! that could not be computed are written as the string `"unavailable"`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{MecError, Result};

pub const UNAVAILABLE: &str = "unavailable";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Value(f64),
    Unavailable,
}

impl MetricValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(v),
            MetricValue::Unavailable => None,
        }
    }
}

impl From<Option<f64>> for MetricValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(MetricValue::Unavailable, MetricValue::Value)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VideoReport {
    pub video_id: String,
    pub metrics: BTreeMap<String, MetricValue>,
    /// Structured per-video extras (e.g. the grouping-purity breakdown).
    pub details: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub aggregate: BTreeMap<String, MetricValue>,
    pub per_video: Vec<VideoReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = MecError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(MecError::Config(format!("unknown report format `{other}`"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        })
    }
}

/// Round to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Shortest decimal form of `x` rounded to 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    format!("{}", round_sig6(x))
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(round_sig6(x))
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(UNAVAILABLE.into()))
}

fn metric_json(v: MetricValue) -> Value {
    match v {
        MetricValue::Value(x) => number(x),
        MetricValue::Unavailable => Value::String(UNAVAILABLE.into()),
    }
}

fn round_value(v: &Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => n.as_f64().map_or(v.clone(), number),
        Value::Array(a) => Value::Array(a.iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), round_value(v))).collect()),
        other => other.clone(),
    }
}

fn metrics_map(m: &BTreeMap<String, MetricValue>) -> Map<String, Value> {
    m.iter().map(|(k, v)| (k.clone(), metric_json(*v))).collect()
}

pub fn report_to_json(report: &EvalReport) -> Value {
    let per_video: Vec<Value> = report
        .per_video
        .iter()
        .map(|v| {
            let mut obj = metrics_map(&v.metrics);
            obj.insert("video_id".into(), Value::String(v.video_id.clone()));
            if !v.details.is_empty() {
                let details: Map<String, Value> =
                    v.details.iter().map(|(k, d)| (k.clone(), round_value(d))).collect();
                obj.insert("details".into(), Value::Object(details));
            }
            Value::Object(obj)
        })
        .collect();
    let mut root = Map::new();
    root.insert("aggregate".into(), Value::Object(metrics_map(&report.aggregate)));
    root.insert("per_video".into(), Value::Array(per_video));
    Value::Object(root)
}

fn csv_cell(v: Option<&MetricValue>) -> String {
    match v {
        Some(MetricValue::Value(x)) => format_sig6(*x),
        Some(MetricValue::Unavailable) => UNAVAILABLE.into(),
        None => String::new(),
    }
}

/// One row per video; columns are the union of metric names, sorted.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut columns: Vec<&String> = report
        .aggregate
        .keys()
        .chain(report.per_video.iter().flat_map(|v| v.metrics.keys()))
        .collect();
    columns.sort();
    columns.dedup();

    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["video_id".to_string()];
    header.extend(columns.iter().map(|c| c.to_string()));
    w.write_record(&header).expect("in-memory write");
    for v in &report.per_video {
        let mut row = vec![v.video_id.clone()];
        row.extend(columns.iter().map(|c| csv_cell(v.metrics.get(*c))));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report_to_json(report)).expect("json");
            s.push('\n');
            s
        }
        ReportFormat::Csv => report_to_csv(report),
    }
}

pub fn write_report(report: &EvalReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_report(report, format)).map_err(|e| MecError::io(path, e))
}

fn parse_metrics(obj: &Map<String, Value>, path: &Path) -> Result<BTreeMap<String, MetricValue>> {
    let mut out = BTreeMap::new();
    for (k, v) in obj {
        if k == "video_id" || k == "details" {
            continue;
        }
        let mv = match v {
            Value::Number(n) => MetricValue::Value(n.as_f64().unwrap_or(f64::NAN)),
            Value::String(s) if s == UNAVAILABLE => MetricValue::Unavailable,
            other => {
                return Err(MecError::schema(
                    path.display().to_string(),
                    k,
                    "?",
                    format!("expected number or \"{UNAVAILABLE}\", got {other}"),
                ))
            }
        };
        out.insert(k.clone(), mv);
    }
    Ok(out)
}

/// Read back a JSON report written by [`write_report`].
pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let root: Value = super::json::parse_json(&super::json::read_file(path)?, path)?;
    let shape_err = |m: &str| MecError::schema(path.display().to_string(), m, "?", "missing or malformed");
    let aggregate = root
        .get("aggregate")
        .and_then(Value::as_object)
        .ok_or_else(|| shape_err("aggregate"))?;
    let videos = root
        .get("per_video")
        .and_then(Value::as_array)
        .ok_or_else(|| shape_err("per_video"))?;
    let mut per_video = Vec::with_capacity(videos.len());
    for v in videos {
        let obj = v.as_object().ok_or_else(|| shape_err("per_video[]"))?;
        let video_id = obj
            .get("video_id")
            .and_then(Value::as_str)
            .ok_or_else(|| shape_err("per_video[].video_id"))?
            .to_string();
        let details = obj
            .get("details")
            .and_then(Value::as_object)
            .map(|d| d.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default();
        per_video.push(VideoReport {
            video_id,
            metrics: parse_metrics(obj, path)?,
            details,
        });
    }
    Ok(EvalReport {
        aggregate: parse_metrics(aggregate, path)?,
        per_video,
    })
}
