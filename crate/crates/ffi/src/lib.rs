//! C ABI over `mec-core`.
//!
//! Every function returns a [`MecStatus`]; on failure the message is available
//! from [`mec_last_error_message`] on the calling thread. Handles are opaque
//! and must be released with their `_free` function. Strings returned through
//! out-parameters are owned by the caller and released with
//! [`mec_string_free`]. No function unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mec_core::finch::{clusters_from_hierarchy, finch_hierarchy};
use mec_core::ingest::{load_run_bundle, render_report, ReportFormat, RunBundle};
use mec_core::metrics::hungarian_match;
use mec_core::model::VisualClusterSet;
use mec_core::pipeline::{evaluate, load_corpus, PipelineConfig};
use mec_core::MecError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Schema = 5,
    Consistency = 6,
    Value = 7,
    Config = 8,
    Internal = 9,
    Panic = 10,
}

impl From<&MecError> for MecStatus {
    fn from(e: &MecError) -> Self {
        match e {
            MecError::Io { .. } => MecStatus::Io,
            MecError::Parse { .. } => MecStatus::Parse,
            MecError::Schema { .. } | MecError::UnknownVerb(_) => MecStatus::Schema,
            MecError::Consistency { .. } | MecError::Domain { .. } => MecStatus::Consistency,
            MecError::Format { .. }
            | MecError::Truncation { .. }
            | MecError::Value { .. }
            | MecError::DegenerateEmbedding { .. }
            | MecError::DegenerateCluster { .. } => MecStatus::Value,
            MecError::Config(_) => MecStatus::Config,
            MecError::Index(_) => MecStatus::Internal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MecStatus, msg: impl Into<String>) -> MecStatus {
    set_error(msg);
    status
}

fn from_error(e: MecError) -> MecStatus {
    fail(MecStatus::from(&e), e.to_string())
}

/// Run `f`, converting panics into `MecStatus::Panic`.
fn guard(f: impl FnOnce() -> MecStatus) -> MecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(MecStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, MecStatus> {
    if p.is_null() {
        return Err(fail(MecStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(MecStatus::InvalidUtf8, "path is not valid UTF-8"))
}

fn out_string(s: String, out: *mut *mut c_char) -> MecStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            MecStatus::Ok
        }
        Err(_) => fail(MecStatus::Internal, "string contains NUL"),
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A loaded and validated run bundle.
pub struct MecBundle {
    inner: RunBundle,
}

/// Load the bundle described by a `manifest.json`.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mec_bundle_load(manifest_path: *const c_char, out: *mut *mut MecBundle) -> MecStatus {
    guard(|| {
        if out.is_null() {
            return fail(MecStatus::NullPointer, "out is null");
        }
        let path = match path_arg(manifest_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_run_bundle(path) {
            Ok(b) => {
                *out = Box::into_raw(Box::new(MecBundle { inner: b }));
                MecStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `bundle` must come from [`mec_bundle_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mec_bundle_free(bundle: *mut MecBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// # Safety
/// `bundle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mec_bundle_num_proposals(bundle: *const MecBundle, out: *mut usize) -> MecStatus {
    if bundle.is_null() || out.is_null() {
        return fail(MecStatus::NullPointer, "null argument");
    }
    *out = (*bundle).inner.proposals.len();
    MecStatus::Ok
}

/// Video id of the bundle; free with [`mec_string_free`].
///
/// # Safety
/// `bundle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mec_bundle_video_id(bundle: *const MecBundle, out: *mut *mut c_char) -> MecStatus {
    if bundle.is_null() || out.is_null() {
        return fail(MecStatus::NullPointer, "null argument");
    }
    out_string((*bundle).inner.video_id().to_string(), out)
}

/// Visual clusters of one bundle.
pub struct MecClusters {
    inner: VisualClusterSet,
    proposals: usize,
}

/// Cluster the proposals of a bundle, keeping the coarsest of up to `levels`
/// levels.
///
/// # Safety
/// `bundle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mec_cluster(
    bundle: *const MecBundle,
    levels: usize,
    tracklet_scale: f64,
    out: *mut *mut MecClusters,
) -> MecStatus {
    guard(|| {
        if bundle.is_null() || out.is_null() {
            return fail(MecStatus::NullPointer, "null argument");
        }
        if levels == 0 || !(tracklet_scale.is_finite() && tracklet_scale > 0.0) {
            return fail(MecStatus::Config, "levels must be >= 1 and tracklet_scale positive");
        }
        let b = &(*bundle).inner;
        match finch_hierarchy(&b.embeddings, &b.proposals, tracklet_scale, levels) {
            Ok(h) => {
                let clusters = clusters_from_hierarchy(&h, h.num_levels().saturating_sub(1));
                *out = Box::into_raw(Box::new(MecClusters {
                    inner: clusters,
                    proposals: b.proposals.len(),
                }));
                MecStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of clusters; 0 for NULL.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_clusters_count(c: *const MecClusters) -> usize {
    c.as_ref().map_or(0, |c| c.inner.len())
}

/// Hierarchy level the clusters come from; 0 for NULL.
///
/// # Safety
/// `c` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_clusters_level(c: *const MecClusters) -> usize {
    c.as_ref().map_or(0, |c| c.inner.level)
}

/// Write the cluster label of each proposal into `labels[0..len]`. `len`
/// must equal the bundle's proposal count.
///
/// # Safety
/// `c` must be a live handle and `labels` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mec_clusters_labels(c: *const MecClusters, labels: *mut usize, len: usize) -> MecStatus {
    let Some(c) = c.as_ref() else {
        return fail(MecStatus::NullPointer, "clusters is null");
    };
    if labels.is_null() && len > 0 {
        return fail(MecStatus::NullPointer, "labels is null");
    }
    if len != c.proposals {
        return fail(
            MecStatus::Config,
            format!("labels buffer has {len} entries, bundle has {} proposals", c.proposals),
        );
    }
    for (i, l) in c.inner.labels(c.proposals).into_iter().enumerate() {
        *labels.add(i) = l.unwrap_or(usize::MAX);
    }
    MecStatus::Ok
}

/// # Safety
/// `c` must come from [`mec_cluster`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mec_clusters_free(c: *mut MecClusters) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Evaluate a bundle or corpus directory with default settings and return
/// the JSON report; free with [`mec_string_free`].
///
/// # Safety
/// `bundle_dir` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mec_eval_json(bundle_dir: *const c_char, out_json: *mut *mut c_char) -> MecStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(MecStatus::NullPointer, "out_json is null");
        }
        let dir = match path_arg(bundle_dir) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let report = load_corpus(dir).and_then(|b| evaluate(&b, &PipelineConfig::default()));
        match report {
            Ok(r) => out_string(render_report(&r, ReportFormat::Json), out_json),
            Err(e) => from_error(e),
        }
    })
}

/// Minimum-cost assignment of a row-major `rows × cols` cost matrix.
/// `out_cols[i]` receives the column matched to row `i`, or `SIZE_MAX` when
/// the row is unmatched (more rows than columns).
///
/// # Safety
/// `cost` must be valid for `rows * cols` reads, `out_cols` for `rows`
/// writes; `out_total` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mec_hungarian(
    cost: *const f64,
    rows: usize,
    cols: usize,
    out_cols: *mut usize,
    out_total: *mut f64,
) -> MecStatus {
    guard(|| {
        let Some(n) = rows.checked_mul(cols) else {
            return fail(MecStatus::Config, "matrix size overflows");
        };
        if (cost.is_null() && n > 0) || (out_cols.is_null() && rows > 0) {
            return fail(MecStatus::NullPointer, "null argument");
        }
        let flat = if n == 0 { &[][..] } else { std::slice::from_raw_parts(cost, n) };
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return fail(MecStatus::Value, format!("cost entry {i} is not finite"));
        }
        let matrix: Vec<Vec<f64>> = if cols == 0 {
            Vec::new()
        } else {
            flat.chunks(cols).map(<[f64]>::to_vec).collect()
        };
        let m = hungarian_match(&matrix);
        for i in 0..rows {
            *out_cols.add(i) = usize::MAX;
        }
        for (r, c) in m.pairs {
            *out_cols.add(r) = c;
        }
        if !out_total.is_null() {
            *out_total = m.total;
        }
        MecStatus::Ok
    })
}
