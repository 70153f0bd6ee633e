//! Reading and writing every on-disk format.

mod bundle;
mod json;
mod report;
mod tensor;

pub use bundle::{
    discover_manifests, load_manifest, load_run_bundle, load_run_bundle_with, write_manifest,
    Manifest, RunBundle, MANIFEST_FILE,
};
pub use json::{
    load_annotations, load_grounding, load_predictions, load_proposals, parse_annotations,
    parse_grounding, parse_predictions, parse_proposals, write_annotations, write_grounding,
    write_predictions, write_proposals, GroundingEntry, GroundingSet, GroundingStats, Limits,
    PredCaptions, Predictions,
};
pub use report::{
    format_sig6, read_report, render_report, report_to_csv, report_to_json, round_sig6,
    write_report, EvalReport, MetricValue, ReportFormat, VideoReport, UNAVAILABLE,
};
pub use tensor::{decode_tensor, encode_tensor, load_tensor, write_tensor, Tensor};
