//! C ABI over `polyframe`.
//!
//! Every fallible function returns a [`PfStatus`]. On failure the message is
//! available from [`pf_last_error_message`] on the same thread until the next
//! failing call. Handles are opaque; each `*_open`/`*_load` pairs with a
//! `*_free`. Strings returned through out-parameters are released with
//! [`pf_string_free`]. No function unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use polyframe::config::{config_hash, load_resources, RunConfig};
use polyframe::embeddings::{load_embeddings, EmbeddingStore};
use polyframe::evaluation::{ndcg5, RelevanceProfile};
use polyframe::fusion::{borda_fuse, FusionConfig};
use polyframe::pipeline::{predictions_tsv, run_dataset, Resources};
use polyframe::similarity::{text_key, ScoreStream, StreamName};
use polyframe::{Dataset, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidData = 4,
    Config = 5,
    MissingEmbedding = 6,
    InvalidArgument = 7,
    Internal = 8,
}

fn status_of(e: &Error) -> PfStatus {
    match e {
        Error::Instance { source, .. } => status_of(source),
        Error::Io { .. } => PfStatus::Io,
        Error::Config(_) => PfStatus::Config,
        Error::MissingEmbedding { .. } | Error::MissingCaptions(_) => PfStatus::MissingEmbedding,
        Error::MissingColumn(_)
        | Error::MalformedRow { .. }
        | Error::Format { .. }
        | Error::DimensionMismatch { .. }
        | Error::DuplicateKey(_)
        | Error::DegenerateData
        | Error::MissingGold(_)
        | Error::UnparseableResponse(_)
        | Error::ClientUnavailable(_) => PfStatus::InvalidData,
        Error::NotAPermutation(_)
        | Error::EmptyInput
        | Error::AllZeroWeights
        | Error::StreamMismatch(_)
        | Error::NonPositiveTemperature(_) => PfStatus::InvalidArgument,
        Error::ZeroVector | Error::NonFiniteScore(_) => PfStatus::Internal,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let msg = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

struct Failure(PfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: PfStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {text}"));
            PfStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(PfStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(PfStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return fail(PfStatus::NullPointer, format!("{name} is null"));
    }
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .or_else(|_| fail(PfStatus::Internal, "output contains a nul byte"))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Embedding store loaded from a PFEMB file.
pub struct PfStore {
    inner: EmbeddingStore,
}

/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_store_load(path: *const c_char, out: *mut *mut PfStore) -> PfStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = load_embeddings(Path::new(path))?;
        *out = Box::into_raw(Box::new(PfStore { inner }));
        Ok(())
    })
}

/// Vector dimension; 0 for a null handle.
///
/// # Safety
/// `store` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_store_dimension(store: *const PfStore) -> usize {
    store.as_ref().map_or(0, |s| s.inner.dimension())
}

/// Number of keys; 0 for a null handle.
///
/// # Safety
/// `store` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_store_len(store: *const PfStore) -> usize {
    store.as_ref().map_or(0, |s| s.inner.len())
}

/// Borrows the vector for `key`: `pf_store_dimension` floats owned by the
/// store and valid until it is freed.
///
/// # Safety
/// `store` must be a live handle, `key` nul-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_store_get(store: *const PfStore, key: *const c_char, out: *mut *const f32) -> PfStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null();
        let store = match store.as_ref() {
            Some(s) => s,
            None => return fail(PfStatus::NullPointer, "store is null"),
        };
        let key = str_arg(key, "key")?;
        match store.inner.get(key) {
            Some(v) => {
                *out = v.as_ptr();
                Ok(())
            }
            None => Err(Error::MissingEmbedding {
                store: "loaded".into(),
                key: key.into(),
            }
            .into()),
        }
    })
}

/// # Safety
/// `store` must be null or a handle from `pf_store_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn pf_store_free(store: *mut PfStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Store key under which a sentence's text embedding is filed.
///
/// # Safety
/// `text` must be nul-terminated; `out` writable. Free the result with
/// `pf_string_free`.
#[no_mangle]
pub unsafe extern "C" fn pf_text_key(text: *const c_char, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        *out = into_c_string(text_key(str_arg(text, "text")?))?;
        Ok(())
    })
}

const STREAMS: [StreamName; 3] = [StreamName::Vision, StreamName::TextM3, StreamName::TextVl];

/// Weighted Borda fusion. `scores` is row-major `n_streams x n_candidates`;
/// rows map to the vision, m3-text and vl-text streams in that order, so
/// `n_streams` is at most 3. Writes the best-first candidate order and the
/// fused score per candidate, each `n_candidates` long.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn pf_borda_fuse(
    scores: *const f64,
    weights: *const f64,
    n_streams: usize,
    n_candidates: usize,
    out_order: *mut usize,
    out_scores: *mut f64,
) -> PfStatus {
    guard(|| {
        if scores.is_null() || weights.is_null() {
            return fail(PfStatus::NullPointer, "scores and weights must be non-null");
        }
        out_arg(out_order, "out_order")?;
        out_arg(out_scores, "out_scores")?;
        if n_streams == 0 || n_streams > STREAMS.len() || n_candidates == 0 {
            return fail(
                PfStatus::InvalidArgument,
                format!("need 1..=3 streams and at least one candidate, got {n_streams} x {n_candidates}"),
            );
        }
        let scores = std::slice::from_raw_parts(scores, n_streams * n_candidates);
        let weights = std::slice::from_raw_parts(weights, n_streams);
        let streams: Vec<ScoreStream> = STREAMS
            .iter()
            .zip(scores.chunks(n_candidates))
            .zip(weights)
            .map(|((&name, row), &w)| ScoreStream::new(name, row.to_vec(), w))
            .collect();
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return fail(
                PfStatus::InvalidArgument,
                format!("weight {w} is not a nonnegative number"),
            );
        }
        let result = borda_fuse(&streams, &FusionConfig::default())?;
        std::slice::from_raw_parts_mut(out_order, n_candidates).copy_from_slice(&result.order);
        std::slice::from_raw_parts_mut(out_scores, n_candidates).copy_from_slice(&result.borda_scores);
        Ok(())
    })
}

/// NDCG@5 of `prediction` against `gold` (both permutations of the same five
/// candidate ids, gold best first) under the default relevance profile.
///
/// # Safety
/// `prediction` and `gold` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pf_ndcg5(prediction: *const u32, gold: *const u32, n: usize, out: *mut f64) -> PfStatus {
    guard(|| {
        if prediction.is_null() || gold.is_null() {
            return fail(PfStatus::NullPointer, "prediction and gold must be non-null");
        }
        out_arg(out, "out")?;
        let p = std::slice::from_raw_parts(prediction, n);
        let g = std::slice::from_raw_parts(gold, n);
        *out = ndcg5(p, g, &RelevanceProfile::default())?;
        Ok(())
    })
}

/// A loaded run: configuration, dataset and scoring resources.
pub struct PfPipeline {
    config: RunConfig,
    dataset: Dataset,
    resources: Resources,
}

/// Loads a run configuration, applies `KEY=VALUE` overrides and loads the
/// dataset and every resource it names.
///
/// # Safety
/// `config_path` must be nul-terminated; `overrides` must hold
/// `n_overrides` nul-terminated strings (or be null when zero); `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_open(
    config_path: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    out: *mut *mut PfPipeline,
) -> PfStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(config_path, "config_path")?;
        let mut sets = Vec::with_capacity(n_overrides);
        if n_overrides > 0 {
            if overrides.is_null() {
                return fail(PfStatus::NullPointer, "overrides is null");
            }
            for &item in std::slice::from_raw_parts(overrides, n_overrides) {
                sets.push(str_arg(item, "override")?.to_string());
            }
        }
        let mut config = RunConfig::load(Path::new(path))?;
        config.apply_overrides(&sets)?;
        config.pipeline.validate()?;
        let dataset = config.load_dataset()?;
        let resources = load_resources(&config)?;
        *out = Box::into_raw(Box::new(PfPipeline {
            config,
            dataset,
            resources,
        }));
        Ok(())
    })
}

/// Number of dataset instances; 0 for a null handle.
///
/// # Safety
/// `pipeline` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_len(pipeline: *const PfPipeline) -> usize {
    pipeline.as_ref().map_or(0, |p| p.dataset.len())
}

/// 16-hex-digit hash of the effective pipeline settings.
///
/// # Safety
/// `pipeline` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_config_hash(pipeline: *const PfPipeline, out: *mut *mut c_char) -> PfStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = match pipeline.as_ref() {
            Some(p) => p,
            None => return fail(PfStatus::NullPointer, "pipeline is null"),
        };
        *out = into_c_string(config_hash(&p.config.pipeline))?;
        Ok(())
    })
}

/// Ranks every instance and writes the predictions TSV (no timestamp line)
/// to `out_tsv`. Instances that fail in lenient mode are counted in
/// `out_failed`; strict mode fails the call instead.
///
/// # Safety
/// `pipeline` must be a live handle; `out_tsv` writable; `out_failed` null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_rank(
    pipeline: *const PfPipeline,
    out_tsv: *mut *mut c_char,
    out_failed: *mut usize,
) -> PfStatus {
    guard(|| {
        out_arg(out_tsv, "out_tsv")?;
        *out_tsv = ptr::null_mut();
        let p = match pipeline.as_ref() {
            Some(p) => p,
            None => return fail(PfStatus::NullPointer, "pipeline is null"),
        };
        let run = run_dataset(&p.dataset, &p.config.pipeline, &p.resources)?;
        let hash = config_hash(&p.config.pipeline);
        let tsv = predictions_tsv(&run.records, p.config.pipeline.variant, &hash, None);
        *out_tsv = into_c_string(tsv)?;
        if !out_failed.is_null() {
            *out_failed = run.failures.len();
        }
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be null or a handle from `pf_pipeline_open`, freed once.
#[no_mangle]
pub unsafe extern "C" fn pf_pipeline_free(pipeline: *mut PfPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}
