//! The `mec` command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 internal error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{MecError, Result};
use crate::ingest::{format_sig6, read_report, render_report, ReportFormat};
use crate::metrics::SoftWeighting;
use crate::pipeline::{self, parse_metric_list, MetricKind, PipelineConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mec", version, about = "Entity coreference clustering and evaluation for video situation recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check bundles for schema and cross-file consistency.
    Validate(Shared),
    /// Cluster box proposals into entity tracks.
    Cluster(Shared),
    /// Ground predicted entity groups to visual clusters.
    Assign(Shared),
    /// Compute the evaluation report.
    Eval(Shared),
    /// Ground-truth intra-entity embedding distance, per video or per dump.
    Gied(GiedArgs),
    /// Re-render a JSON report.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct Shared {
    /// Bundle directory or corpus of bundle directories.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    pub format: Option<ReportFormat>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub tracklet_scale: Option<f64>,
    /// Comma-separated, e.g. 0.3,0.5.
    #[arg(long, value_delimiter = ',')]
    pub iou_thresholds: Option<Vec<f64>>,
    /// Comma-separated subset of: verb, cider, lea, lea_soft, iou, hota, grouping_purity, gied.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Which side of LEA-Soft is caption-weighted: both, recall or precision.
    #[arg(long)]
    pub soft_weighting: Option<String>,
    /// TOML file with defaults for any of the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GiedArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// Directory of embedding dumps, one entry per checkpoint.
    #[arg(long)]
    pub dumps: Option<PathBuf>,
    #[arg(long)]
    pub iou_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report written by `mec eval`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    bundle: Option<PathBuf>,
    out: Option<PathBuf>,
    format: Option<String>,
    jobs: Option<usize>,
    levels: Option<usize>,
    tracklet_scale: Option<f64>,
    iou_thresholds: Option<Vec<f64>>,
    metrics: Option<Vec<String>>,
    soft_weighting: Option<String>,
    iou_floor: Option<f64>,
}

/// Flags merged over the optional config file.
#[derive(Debug)]
struct Resolved {
    bundle: PathBuf,
    out: Option<PathBuf>,
    format: ReportFormat,
    jobs: usize,
    pipeline: PipelineConfig,
}

fn parse_weighting(s: &str) -> Result<SoftWeighting> {
    match s.to_ascii_lowercase().as_str() {
        "both" => Ok(SoftWeighting::Both),
        "recall" => Ok(SoftWeighting::RecallOnly),
        "precision" => Ok(SoftWeighting::PrecisionOnly),
        other => Err(MecError::Config(format!("unknown soft weighting `{other}`"))),
    }
}

fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| MecError::io(path, e))?;
    toml::from_str(&text).map_err(|e| MecError::Config(format!("{}: {e}", path.display())))
}

fn resolve(s: &Shared, iou_floor: Option<f64>) -> Result<Resolved> {
    let file = match &s.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };
    let defaults = PipelineConfig::default();
    let bundle = s
        .bundle
        .clone()
        .or(file.bundle)
        .ok_or_else(|| MecError::Config("--bundle is required".into()))?;
    let format = match (&s.format, &file.format) {
        (Some(f), _) => *f,
        (None, Some(f)) => f.parse()?,
        (None, None) => ReportFormat::Json,
    };
    let metrics: BTreeSet<MetricKind> = match (&s.metrics, &file.metrics) {
        (Some(list), _) => parse_metric_list(list)?,
        (None, Some(list)) => list.iter().map(|m| m.parse()).collect::<Result<_>>()?,
        (None, None) => defaults.metrics.clone(),
    };
    let soft_weighting = match s.soft_weighting.as_ref().or(file.soft_weighting.as_ref()) {
        Some(w) => parse_weighting(w)?,
        None => defaults.soft_weighting,
    };
    let pipeline = PipelineConfig {
        levels: s.levels.or(file.levels).unwrap_or(defaults.levels),
        tracklet_scale: s.tracklet_scale.or(file.tracklet_scale).unwrap_or(defaults.tracklet_scale),
        iou_thresholds: s
            .iou_thresholds
            .clone()
            .or(file.iou_thresholds)
            .unwrap_or(defaults.iou_thresholds),
        iou_floor: iou_floor.or(file.iou_floor).unwrap_or(defaults.iou_floor),
        metrics,
        soft_weighting,
    };
    pipeline.validate()?;
    Ok(Resolved {
        bundle,
        out: s.out.clone().or(file.out),
        format,
        jobs: s.jobs.or(file.jobs).unwrap_or(0),
        pipeline,
    })
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| MecError::io(p, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| MecError::io("<stdout>", e)),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| MecError::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(f)
}

fn csv_rows(header: [&str; 2], rows: &[(String, Option<f64>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for (name, v) in rows {
        let cell = v.map_or_else(|| crate::ingest::UNAVAILABLE.to_string(), format_sig6);
        w.write_record([name.as_str(), cell.as_str()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn validate(r: &Resolved, stdout: &mut dyn Write) -> Result<i32> {
    let results = with_pool(r.jobs, || pipeline::validate_corpus(&r.bundle))?;
    let mut text = String::new();
    let mut errors = 0usize;
    for (path, res) in &results {
        match res {
            Ok(vid) => text.push_str(&format!("ok {vid} ({})\n", path.display())),
            Err(e) => {
                errors += 1;
                text.push_str(&format!("error {}: {e}\n", path.display()));
            }
        }
    }
    text.push_str(&format!("{} bundles, {errors} errors\n", results.len()));
    emit(r.out.as_deref(), &text, stdout)?;
    let internal = results
        .iter()
        .any(|(_, res)| res.as_ref().is_err_and(|e| !e.is_input_error()));
    Ok(match (errors, internal) {
        (0, _) => EXIT_OK,
        (_, true) => EXIT_INTERNAL,
        _ => EXIT_INPUT,
    })
}

fn run_command(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Validate(s) => validate(&resolve(&s, None)?, stdout),
        Command::Cluster(s) => {
            let r = resolve(&s, None)?;
            let out = with_pool(r.jobs, || {
                let bundles = pipeline::load_corpus(&r.bundle)?;
                pipeline::cluster_corpus(&bundles, &r.pipeline)
            })?;
            emit(r.out.as_deref(), &to_json(&out), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Assign(s) => {
            let r = resolve(&s, None)?;
            let out = with_pool(r.jobs, || {
                let bundles = pipeline::load_corpus(&r.bundle)?;
                pipeline::assign_corpus(&bundles, &r.pipeline)
            })?;
            emit(r.out.as_deref(), &to_json(&out), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Eval(s) => {
            let r = resolve(&s, None)?;
            let report = with_pool(r.jobs, || {
                let bundles = pipeline::load_corpus(&r.bundle)?;
                pipeline::evaluate(&bundles, &r.pipeline)
            })?;
            emit(r.out.as_deref(), &render_report(&report, r.format), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Gied(g) => {
            let r = resolve(&g.shared, g.iou_floor)?;
            let floor = r.pipeline.iou_floor;
            let text = with_pool(r.jobs, || {
                let bundles = pipeline::load_corpus(&r.bundle)?;
                if bundles.iter().all(|b| b.grounding.is_none()) {
                    return Err(MecError::Config("GIED needs grounding boxes".into()));
                }
                Ok(match &g.dumps {
                    Some(dir) => csv_rows(["dump", "gied"], &pipeline::gied_dumps(&bundles, dir, floor)?),
                    None => csv_rows(["video_id", "gied"], &pipeline::gied_corpus(&bundles, floor)?),
                })
            })?;
            emit(r.out.as_deref(), &text, stdout)?;
            Ok(EXIT_OK)
        }
        Command::Report(a) => {
            let report = read_report(&a.input)?;
            let text = render_report(&report, a.format.unwrap_or_default());
            emit(a.out.as_deref(), &text, stdout)?;
            Ok(EXIT_OK)
        }
    }
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code. Errors are reported on standard error.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run_command(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_INTERNAL
            }
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("MEC_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}
