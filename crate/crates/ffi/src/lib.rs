//! C ABI over the `spikehd` crate.
//!
//! Objects are opaque heap handles created by `*_new`/`*_load` and released
//! by the matching `*_free`. Every fallible call returns a
//! [`SpikehdStatus`]; on failure a description is available from
//! [`spikehd_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use spikehd::{Activation, EncoderBasis, Error, SpikeHdModel, SpikeTrain};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikehdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Format = 4,
    Version = 5,
    Io = 6,
    Phase = 7,
    Numeric = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikehdActivation {
    Tanh = 0,
    SinCos = 1,
}

/// A trained model.
pub struct SpikehdModel {
    inner: SpikeHdModel,
}

/// An encoder basis.
pub struct SpikehdBasis {
    inner: EncoderBasis,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpikehdStatus {
    match e {
        Error::Shape { .. } => SpikehdStatus::ShapeMismatch,
        Error::InvalidArgument(_) | Error::UnknownLabel(_) | Error::DuplicateLabel(_) | Error::Config(_) => {
            SpikehdStatus::InvalidArgument
        }
        Error::Format(_) | Error::Truncated { .. } | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => {
            SpikehdStatus::Format
        }
        Error::Version { .. } => SpikehdStatus::Version,
        Error::Io(_) => SpikehdStatus::Io,
        Error::Phase { .. } => SpikehdStatus::Phase,
        Error::ZeroNorm | Error::RankDeficient { .. } | Error::ForwardOnly(_) => SpikehdStatus::Numeric,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (SpikehdStatus, String)>) -> SpikehdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpikehdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpikehdStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SpikehdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SpikehdStatus, String) {
    (SpikehdStatus::NullPointer, format!("{what} is null"))
}

/// Message for the last failing call on this thread, or null. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spikehd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spikehd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `spikehd train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spikehd_model_load(path: *const c_char, out: *mut *mut SpikehdModel) -> SpikehdStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (SpikehdStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let inner = SpikeHdModel::load(Path::new(p)).map_err(lib)?;
        *out = Box::into_raw(Box::new(SpikehdModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`spikehd_model_load`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn spikehd_model_free(model: *mut SpikehdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input spike channels the model expects.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spikehd_model_input_dim(model: *const SpikehdModel, out: *mut usize) -> SpikehdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.inner.network().input_dim();
        Ok(())
    })
}

/// Number of classes.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spikehd_model_class_count(model: *const SpikehdModel, out: *mut usize) -> SpikehdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.inner.labels().len();
        Ok(())
    })
}

/// Copies the class labels into `labels[0..len]`; `len` must equal the
/// class count.
///
/// # Safety
/// `labels` must point to `len` writable `u32`s.
#[no_mangle]
pub unsafe extern "C" fn spikehd_model_labels(
    model: *const SpikehdModel,
    labels: *mut u32,
    len: usize,
) -> SpikehdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let src = m.inner.labels();
        if len != src.len() {
            return Err(lib(Error::Shape {
                expected: src.len(),
                actual: len,
                context: "label buffer",
            }));
        }
        std::slice::from_raw_parts_mut(labels, len).copy_from_slice(src);
        Ok(())
    })
}

/// Classifies one spike train given row-major as `steps × channels` bytes,
/// non-zero meaning a spike.
///
/// # Safety
/// `spikes` must point to `steps * channels` readable bytes; `label` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn spikehd_model_predict(
    model: *const SpikehdModel,
    spikes: *const u8,
    steps: usize,
    channels: usize,
    label: *mut u32,
) -> SpikehdStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let label = label.as_mut().ok_or_else(|| null("label"))?;
        if spikes.is_null() {
            return Err(null("spikes"));
        }
        let len = steps
            .checked_mul(channels)
            .ok_or_else(|| (SpikehdStatus::InvalidArgument, "steps × channels overflows".to_string()))?;
        let raw = std::slice::from_raw_parts(spikes, len);
        let rows: Vec<Vec<bool>> = raw.chunks(channels.max(1)).map(|r| r.iter().map(|b| *b != 0).collect()).collect();
        let train = SpikeTrain::from_rows(&rows).map_err(lib)?;
        *label = m.inner.predict_end_to_end(&train).map_err(lib)?;
        Ok(())
    })
}

/// Builds a `dim × input_dim` encoder basis from `seed`. `activation` is
/// a [`SpikehdActivation`] value.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spikehd_basis_new(
    input_dim: usize,
    dim: usize,
    activation: u32,
    seed: u64,
    sigma: f64,
    out: *mut *mut SpikehdBasis,
) -> SpikehdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let act = match activation {
            a if a == SpikehdActivation::Tanh as u32 => Activation::Tanh,
            a if a == SpikehdActivation::SinCos as u32 => Activation::SinCos,
            a => return Err((SpikehdStatus::InvalidArgument, format!("unknown activation {a}"))),
        };
        let inner = EncoderBasis::with_bandwidth(input_dim, dim, act, seed, sigma).map_err(lib)?;
        *out = Box::into_raw(Box::new(SpikehdBasis { inner }));
        Ok(())
    })
}

/// # Safety
/// `basis` must come from [`spikehd_basis_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn spikehd_basis_free(basis: *mut SpikehdBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Encodes `features[0..input_dim]` into `out[0..dim]`.
///
/// # Safety
/// Buffers must hold the stated number of `f64`s.
#[no_mangle]
pub unsafe extern "C" fn spikehd_basis_encode(
    basis: *const SpikehdBasis,
    features: *const f64,
    input_dim: usize,
    out: *mut f64,
    dim: usize,
) -> SpikehdStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        if features.is_null() {
            return Err(null("features"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if dim != b.inner.dim() {
            return Err(lib(Error::Shape {
                expected: b.inner.dim(),
                actual: dim,
                context: "output buffer",
            }));
        }
        let f = std::slice::from_raw_parts(features, input_dim);
        let h = b.inner.encode(f).map_err(lib)?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(h.values());
        Ok(())
    })
}
