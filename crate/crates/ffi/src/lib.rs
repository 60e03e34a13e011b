//! C ABI over `sign-core`.
//!
//! Every fallible function returns a [`SignStatus`]; on failure a message is
//! kept per thread and read back with [`sign_last_error`]. Kernels and model
//! ensembles cross the boundary as opaque handles that the caller releases
//! with the matching `_free` function. Region indices are zero-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sign_core::gaze::{
    enumerate_weights, expected_log_gaze_pathsum, expected_log_gaze_weighted, monte_carlo_log_gaze,
    monte_carlo_weights, sample_scanpath, EnumerationLimits, GazeError, GazeField, IorHorizon, LinearDurations,
    TransitionKernel, WeightMap,
};
use sign_core::imaging::{load_image, Image};
use sign_core::model::{predict_log_gaze, SignInput, SignModel};
use sign_core::pipeline::{checkpoint_paths, ensemble_patterns, load_ensemble, PipelineError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Invalid kernel, field or path length.
    Gaze = 3,
    /// Exact enumeration would exceed the path cap.
    ExplosionGuard = 4,
    Io = 5,
    Image = 6,
    Model = 7,
    /// The output buffer is shorter than the result.
    BufferTooSmall = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

/// A transition kernel over `N` regions with its IoR horizon.
pub struct SignKernel {
    inner: TransitionKernel,
}

/// An ensemble of trained gaze models sharing one config.
pub struct SignEnsemble {
    members: Vec<SignModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SignStatus, String);

type FfiResult<T = ()> = Result<T, Failure>;

impl From<GazeError> for Failure {
    fn from(e: GazeError) -> Self {
        let status = match e {
            GazeError::ExplosionGuard { .. } => SignStatus::ExplosionGuard,
            _ => SignStatus::Gaze,
        };
        Failure(status, e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Io { .. } => SignStatus::Io,
            PipelineError::Image(_) => SignStatus::Image,
            PipelineError::Gaze(g) => return g.clone().into(),
            _ => SignStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

impl From<sign_core::model::ModelError> for Failure {
    fn from(e: sign_core::model::ModelError) -> Self {
        use sign_core::model::ModelError;
        let status = match &e {
            ModelError::Io { .. } => SignStatus::Io,
            ModelError::Image(_) => SignStatus::Image,
            _ => SignStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

impl From<sign_core::imaging::ImageError> for Failure {
    fn from(e: sign_core::imaging::ImageError) -> Self {
        use sign_core::imaging::ImageError;
        let status = match &e {
            ImageError::Io { .. } => SignStatus::Io,
            _ => SignStatus::Image,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SignStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as this thread's last error.
fn guard(f: impl FnOnce() -> FfiResult) -> SignStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SignStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SignStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if p.is_null() {
        return Err(Failure(SignStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null, and the caller promises `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if p.is_null() {
        return Err(Failure(SignStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null, and the caller promises `len` writable elements.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

/// # Safety
/// `p` must be null or valid for a write of `T`.
unsafe fn write<T>(p: *mut T, value: T, what: &str) -> FfiResult {
    if p.is_null() {
        return Err(Failure(SignStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and writable per the caller.
    unsafe { p.write(value) };
    Ok(())
}

/// # Safety
/// `p` must be null or a live handle.
unsafe fn borrow<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    // SAFETY: the caller promises a live handle when non-null.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(SignStatus::NullPointer, format!("{what} is null")))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path(p: *const c_char, what: &str) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(Failure(SignStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the caller.
    let s = unsafe { CStr::from_ptr(p) };
    let s = s.to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn horizon(h: usize) -> IorHorizon {
    if h == 0 {
        IorHorizon::Infinite
    } else {
        IorHorizon::Last(h)
    }
}

fn field(mu: &[f64]) -> FfiResult<(GazeField, LinearDurations)> {
    Ok((GazeField::from_scalars(mu)?, LinearDurations::identity()))
}

/// The last error message on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sign_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sign_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a kernel from an `n x n` row-major affinity matrix and an
/// initial distribution of length `n`. `ior_horizon` 0 means infinite.
///
/// # Safety
/// `affinity` must hold `n * n` values, `initial` `n` values, and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sign_kernel_new(
    affinity: *const f64,
    initial: *const f64,
    n: usize,
    ior_horizon: usize,
    out: *mut *mut SignKernel,
) -> SignStatus {
    guard(|| {
        let len = n.checked_mul(n).ok_or_else(|| invalid("n is too large"))?;
        let a = unsafe { slice(affinity, len, "affinity") }?.to_vec();
        let p = unsafe { slice(initial, n, "initial") }?.to_vec();
        let inner = TransitionKernel::new(a, p, horizon(ior_horizon))?;
        unsafe { write(out, Box::into_raw(Box::new(SignKernel { inner })), "out") }
    })
}

/// Uniform affinities and initial distribution over `n` regions, infinite
/// IoR.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sign_kernel_uniform(n: usize, out: *mut *mut SignKernel) -> SignStatus {
    guard(|| {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let inner = TransitionKernel::uniform(n);
        unsafe { write(out, Box::into_raw(Box::new(SignKernel { inner })), "out") }
    })
}

/// Affinities and initial distribution proportional to `saliency`.
///
/// # Safety
/// `saliency` must hold `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sign_kernel_saliency(
    saliency: *const f64,
    n: usize,
    ior_horizon: usize,
    out: *mut *mut SignKernel,
) -> SignStatus {
    guard(|| {
        let s = unsafe { slice(saliency, n, "saliency") }?;
        let inner = TransitionKernel::saliency_proportional(s, horizon(ior_horizon))?;
        unsafe { write(out, Box::into_raw(Box::new(SignKernel { inner })), "out") }
    })
}

/// Number of regions, or 0 for a null handle.
///
/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sign_kernel_len(kernel: *const SignKernel) -> usize {
    unsafe { kernel.as_ref() }.map_or(0, |k| k.inner.len())
}

/// Releases a kernel. Null is ignored.
///
/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sign_kernel_free(kernel: *mut SignKernel) {
    if !kernel.is_null() {
        // SAFETY: created by Box::into_raw in this crate and not yet freed.
        drop(unsafe { Box::from_raw(kernel) });
    }
}

/// Exact visit weights `w_j` by enumeration, written to `out` (length N).
///
/// # Safety
/// `kernel` must be live and `out` must hold N values.
#[no_mangle]
pub unsafe extern "C" fn sign_enumerate_weights(kernel: *const SignKernel, max_len: usize, out: *mut f64) -> SignStatus {
    guard(|| {
        let k = unsafe { borrow(kernel, "kernel") }?;
        let dst = unsafe { slice_mut(out, k.inner.len(), "out") }?;
        let w = enumerate_weights(&k.inner, max_len, EnumerationLimits::default())?;
        dst.copy_from_slice(w.weights());
        Ok(())
    })
}

/// Expected log gaze summed over every scan-path, with region
/// log-durations `mu` (length N) and gist log-duration `gist`.
///
/// # Safety
/// `kernel` must be live, `mu` must hold N values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sign_expected_log_gaze_pathsum(
    kernel: *const SignKernel,
    mu: *const f64,
    max_len: usize,
    gist: f64,
    out: *mut f64,
) -> SignStatus {
    guard(|| {
        let k = unsafe { borrow(kernel, "kernel") }?;
        let (f, d) = field(unsafe { slice(mu, k.inner.len(), "mu") }?)?;
        let v = expected_log_gaze_pathsum(&f, &k.inner, &d, max_len, gist, EnumerationLimits::default())?;
        unsafe { write(out, v, "out") }
    })
}

/// Expected log gaze from region weights: `gist + sum_j mu_j w_j`.
///
/// # Safety
/// `mu` and `weights` must hold `n` values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sign_expected_log_gaze_weighted(
    mu: *const f64,
    weights: *const f64,
    n: usize,
    gist: f64,
    out: *mut f64,
) -> SignStatus {
    guard(|| {
        let (f, d) = field(unsafe { slice(mu, n, "mu") }?)?;
        let w = WeightMap::from_weights(unsafe { slice(weights, n, "weights") }?.to_vec())?;
        let v = expected_log_gaze_weighted(&f, &d, &w, gist)?;
        unsafe { write(out, v, "out") }
    })
}

/// Samples one scan-path into `path` (capacity `cap`), storing its length
/// and probability.
///
/// # Safety
/// `kernel` must be live, `path` must hold `cap` values, `out_len` and
/// `out_prob` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sign_sample_scanpath(
    kernel: *const SignKernel,
    max_len: usize,
    seed: u64,
    path: *mut usize,
    cap: usize,
    out_len: *mut usize,
    out_prob: *mut f64,
) -> SignStatus {
    guard(|| {
        let k = unsafe { borrow(kernel, "kernel") }?;
        if max_len == 0 {
            return Err(invalid("max_len must be positive"));
        }
        let sp = sample_scanpath(&k.inner, max_len, seed);
        unsafe { write(out_len, sp.fixations.len(), "out_len") }?;
        if sp.fixations.len() > cap {
            return Err(Failure(
                SignStatus::BufferTooSmall,
                format!("path has {} fixations, buffer holds {cap}", sp.fixations.len()),
            ));
        }
        unsafe { slice_mut(path, sp.fixations.len(), "path") }?.copy_from_slice(&sp.fixations);
        unsafe { write(out_prob, sp.prob, "out_prob") }
    })
}

/// Monte-Carlo expected log gaze and its standard error.
///
/// # Safety
/// `kernel` must be live, `mu` must hold N values, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn sign_monte_carlo_log_gaze(
    kernel: *const SignKernel,
    mu: *const f64,
    max_len: usize,
    samples: usize,
    seed: u64,
    gist: f64,
    out_mean: *mut f64,
    out_std_error: *mut f64,
) -> SignStatus {
    guard(|| {
        let k = unsafe { borrow(kernel, "kernel") }?;
        let (f, d) = field(unsafe { slice(mu, k.inner.len(), "mu") }?)?;
        let est = monte_carlo_log_gaze(&f, &k.inner, &d, max_len, samples, seed, gist)?;
        unsafe { write(out_mean, est.mean, "out_mean") }?;
        unsafe { write(out_std_error, est.std_error, "out_std_error") }
    })
}

/// Monte-Carlo visit weights and per-region standard errors (length N).
///
/// # Safety
/// `kernel` must be live; `out_weights` and `out_std_error` must hold N
/// values.
#[no_mangle]
pub unsafe extern "C" fn sign_monte_carlo_weights(
    kernel: *const SignKernel,
    max_len: usize,
    samples: usize,
    seed: u64,
    out_weights: *mut f64,
    out_std_error: *mut f64,
) -> SignStatus {
    guard(|| {
        let k = unsafe { borrow(kernel, "kernel") }?;
        let n = k.inner.len();
        let w_out = unsafe { slice_mut(out_weights, n, "out_weights") }?;
        let se_out = unsafe { slice_mut(out_std_error, n, "out_std_error") }?;
        let (w, se) = monte_carlo_weights(&k.inner, max_len, samples, seed)?;
        w_out.copy_from_slice(w.weights());
        se_out.copy_from_slice(&se);
        Ok(())
    })
}

/// Loads every `*.ckpt` (with its `.cfg` sidecar) in `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_load_dir(dir: *const c_char, out: *mut *mut SignEnsemble) -> SignStatus {
    guard(|| {
        let dir = unsafe { path(dir, "dir") }?;
        let members = load_ensemble(&checkpoint_paths(&dir)?)?;
        unsafe { write(out, Box::into_raw(Box::new(SignEnsemble { members })), "out") }
    })
}

/// Loads the checkpoints listed in `paths`.
///
/// # Safety
/// `paths` must hold `count` NUL-terminated strings and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_load(
    paths: *const *const c_char,
    count: usize,
    out: *mut *mut SignEnsemble,
) -> SignStatus {
    guard(|| {
        if count == 0 {
            return Err(invalid("no checkpoints given"));
        }
        let raw = unsafe { slice(paths, count, "paths") }?;
        let list = raw
            .iter()
            .map(|&p| unsafe { path(p, "checkpoint path") })
            .collect::<FfiResult<Vec<_>>>()?;
        let members = load_ensemble(&list)?;
        unsafe { write(out, Box::into_raw(Box::new(SignEnsemble { members })), "out") }
    })
}

/// Number of models in the ensemble, or 0 for a null handle.
///
/// # Safety
/// `ensemble` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_size(ensemble: *const SignEnsemble) -> usize {
    unsafe { ensemble.as_ref() }.map_or(0, |e| e.members.len())
}

/// Number of regions in the ensemble's patch grid, or 0 for null.
///
/// # Safety
/// `ensemble` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_regions(ensemble: *const SignEnsemble) -> usize {
    unsafe { ensemble.as_ref() }
        .and_then(|e| e.members.first())
        .map_or(0, |m| m.config().regions())
}

/// Releases an ensemble. Null is ignored.
///
/// # Safety
/// `ensemble` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_free(ensemble: *mut SignEnsemble) {
    if !ensemble.is_null() {
        // SAFETY: created by Box::into_raw in this crate and not yet freed.
        drop(unsafe { Box::from_raw(ensemble) });
    }
}

fn input_from_pixels(
    e: &SignEnsemble,
    pixels: *const u8,
    height: usize,
    width: usize,
    channels: usize,
) -> FfiResult<SignInput> {
    let len = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| invalid("image size overflows"))?;
    let data = unsafe { slice(pixels, len, "pixels") }?.to_vec();
    let image = Image::new(height, width, channels, data)?;
    let first = e.members.first().ok_or_else(|| invalid("empty ensemble"))?;
    Ok(SignInput::new(first.config(), &image, None)?)
}

fn input_from_files(e: &SignEnsemble, image: *const c_char, context: *const c_char) -> FfiResult<SignInput> {
    let img = load_image(unsafe { path(image, "image") }?)?;
    let ctx = if context.is_null() {
        None
    } else {
        Some(load_image(unsafe { path(context, "context") }?)?)
    };
    let first = e.members.first().ok_or_else(|| invalid("empty ensemble"))?;
    Ok(SignInput::new(first.config(), &img, ctx.as_ref())?)
}

/// Ensemble log gaze (mean of member log predictions) for an image file,
/// with an optional context image (`context` may be null).
///
/// # Safety
/// `ensemble` must be live, `image` (and `context` when non-null) must be
/// NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_predict_file(
    ensemble: *const SignEnsemble,
    image: *const c_char,
    context: *const c_char,
    out_log_gaze: *mut f64,
) -> SignStatus {
    guard(|| {
        let e = unsafe { borrow(ensemble, "ensemble") }?;
        let input = input_from_files(e, image, context)?;
        let v = predict_log_gaze(&e.members, &input)?;
        unsafe { write(out_log_gaze, v, "out_log_gaze") }
    })
}

/// Ensemble log gaze for interleaved 8-bit pixels (1 or 3 channels).
///
/// # Safety
/// `ensemble` must be live, `pixels` must hold `height * width * channels`
/// bytes, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_predict_pixels(
    ensemble: *const SignEnsemble,
    pixels: *const u8,
    height: usize,
    width: usize,
    channels: usize,
    out_log_gaze: *mut f64,
) -> SignStatus {
    guard(|| {
        let e = unsafe { borrow(ensemble, "ensemble") }?;
        let input = input_from_pixels(e, pixels, height, width, channels)?;
        let v = predict_log_gaze(&e.members, &input)?;
        unsafe { write(out_log_gaze, v, "out_log_gaze") }
    })
}

/// Inferred gaze pattern (weights normalized to sum to one) for an image
/// file, written to `out` of capacity `cap`; `out_len` receives the region
/// count.
///
/// # Safety
/// `ensemble` must be live, `image` NUL-terminated, `context` null or
/// NUL-terminated, `out` must hold `cap` values, `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn sign_ensemble_pattern_file(
    ensemble: *const SignEnsemble,
    image: *const c_char,
    context: *const c_char,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> SignStatus {
    guard(|| {
        let e = unsafe { borrow(ensemble, "ensemble") }?;
        let input = input_from_files(e, image, context)?;
        let pattern = ensemble_patterns(&e.members, &[&input])?.remove(0);
        unsafe { write(out_len, pattern.len(), "out_len") }?;
        if pattern.len() > cap {
            return Err(Failure(
                SignStatus::BufferTooSmall,
                format!("pattern has {} regions, buffer holds {cap}", pattern.len()),
            ));
        }
        unsafe { slice_mut(out, pattern.len(), "out") }?.copy_from_slice(&pattern);
        Ok(())
    })
}
