//! C interface to `blindnorm`.
//!
//! Objects cross the boundary as opaque handles created by `bn_*_new` or
//! `bn_*_load` and released with the matching `bn_*_free`. Every fallible
//! call returns a [`BnStatus`]; on failure the message is available from
//! [`bn_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use blindnorm::baselines::cmn;
use blindnorm::convert::{channel_convert, ConvertOptions};
use blindnorm::dsp::{AudioSignal, CepstralTrajectory, Frontend, FrontendConfig};
use blindnorm::pipeline::{run_pipeline, PipelineConfig};
use blindnorm::scale::ScaleField;
use blindnorm::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A configuration document was rejected.
    Config = 3,
    Io = 4,
    /// A point or frame lies outside a scale's domain or range.
    OutOfRange = 5,
    /// Any other failure inside the library.
    Failure = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
    /// The caller's buffer is too small.
    BufferTooSmall = 8,
}

/// MFCC front end.
pub struct BnFrontend(Frontend);

/// Cepstral trajectory: frames of equal dimension at a fixed hop.
pub struct BnTrajectory(CepstralTrajectory);

/// Fitted scale field of one channel.
pub struct BnScale(ScaleField);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BnStatus {
    match err {
        Error::ConfigInvalid { .. } | Error::Json(_) => BnStatus::Config,
        Error::IoFailure { .. } | Error::Format { .. } | Error::Csv(_) | Error::Wav(_) => BnStatus::Io,
        Error::OutsideScaleDomain(_) | Error::SOutOfRange(_) => BnStatus::OutOfRange,
        Error::InvalidArgument(_) | Error::DimMismatch { .. } | Error::EmptyTrajectory | Error::InvalidSignal(_) => {
            BnStatus::InvalidArgument
        }
        Error::StageFailure { source, .. } => status_of(source),
        _ => BnStatus::Failure,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (BnStatus, String)>) -> BnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BnStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BnStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (BnStatus, String)>;
}

impl<T> IntoFfi<T> for blindnorm::Result<T> {
    fn ffi(self) -> Result<T, (BnStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (BnStatus, String) {
    (BnStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(message: impl Into<String>) -> (BnStatus, String) {
    (BnStatus::InvalidArgument, message.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (BnStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (BnStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (BnStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, (BnStatus, String)> {
    Ok(PathBuf::from(string(p, what)?))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, (BnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid(format!("`{what}` is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), (BnStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread, or null if none. The string
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn bn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Forgets the last error on this thread.
#[no_mangle]
pub extern "C" fn bn_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a front end. `config_json` may be null for the defaults.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bn_frontend_new(config_json: *const c_char, out: *mut *mut BnFrontend) -> BnStatus {
    guard(|| {
        let cfg: FrontendConfig = if config_json.is_null() {
            FrontendConfig::default()
        } else {
            serde_json::from_str(&string(config_json, "config_json")?)
                .map_err(|e| (BnStatus::Config, e.to_string()))?
        };
        put(out, BnFrontend(Frontend::new(cfg).ffi()?), "out")
    })
}

/// # Safety
/// `fe` must be null or a handle from [`bn_frontend_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn bn_frontend_free(fe: *mut BnFrontend) {
    if !fe.is_null() {
        drop(Box::from_raw(fe));
    }
}

/// MFCC trajectory of `n_samples` mono samples.
///
/// # Safety
/// `samples` must hold `n_samples` values; `fe` must be a live handle;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bn_frontend_process(
    fe: *const BnFrontend,
    samples: *const f64,
    n_samples: usize,
    sample_rate: u32,
    out: *mut *mut BnTrajectory,
) -> BnStatus {
    guard(|| {
        let fe = deref(fe, "fe")?;
        let signal = AudioSignal::new(slice(samples, n_samples, "samples")?.to_vec(), sample_rate).ffi()?;
        put(out, BnTrajectory(fe.0.process(&signal).ffi()?), "out")
    })
}

/// Trajectory from `n_frames * dim` row-major values.
///
/// # Safety
/// `data` must hold `n_frames * dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bn_trajectory_new(
    data: *const f64,
    n_frames: usize,
    dim: usize,
    hop: f64,
    out: *mut *mut BnTrajectory,
) -> BnStatus {
    guard(|| {
        let total = n_frames.checked_mul(dim).ok_or_else(|| invalid("size overflow"))?;
        let flat = slice(data, total, "data")?;
        let frames = if dim == 0 {
            vec![Vec::new(); n_frames]
        } else {
            flat.chunks(dim).map(<[f64]>::to_vec).collect()
        };
        put(out, BnTrajectory(CepstralTrajectory::with_dim(frames, hop, dim).ffi()?), "out")
    })
}

/// Loads a trajectory (`.csv` or binary container).
///
/// # Safety
/// `file` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bn_trajectory_load(file: *const c_char, out: *mut *mut BnTrajectory) -> BnStatus {
    guard(|| {
        let p = path(file, "path")?;
        put(out, BnTrajectory(CepstralTrajectory::load_any(&p).ffi()?), "out")
    })
}

/// Saves a trajectory; the format follows the extension.
///
/// # Safety
/// `traj` must be a live handle and `file` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn bn_trajectory_save(traj: *const BnTrajectory, file: *const c_char) -> BnStatus {
    guard(|| {
        let t = deref(traj, "traj")?;
        t.0.save_any(&path(file, "path")?).ffi()
    })
}

/// # Safety
/// `traj` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bn_trajectory_free(traj: *mut BnTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of frames, or 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bn_trajectory_len(traj: *const BnTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.len())
}

/// Frame dimension, or 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bn_trajectory_dim(traj: *const BnTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.dim())
}

/// Copies the frames row-major into `buf`, which must hold `len * dim`
/// values; `capacity` is its size in values.
///
/// # Safety
/// `buf` must be writable for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn bn_trajectory_copy(traj: *const BnTrajectory, buf: *mut f64, capacity: usize) -> BnStatus {
    guard(|| {
        let t = deref(traj, "traj")?;
        let need = t.0.len() * t.0.dim();
        if capacity < need {
            return Err((BnStatus::BufferTooSmall, format!("need {need} values, have {capacity}")));
        }
        let buf = slice_mut(buf, need, "buf")?;
        for (dst, src) in buf.chunks_mut(t.0.dim().max(1)).zip(t.0.frames()) {
            dst.copy_from_slice(src);
        }
        Ok(())
    })
}

/// Cepstral mean normalization into a new trajectory.
///
/// # Safety
/// `traj` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bn_cmn(traj: *const BnTrajectory, out: *mut *mut BnTrajectory) -> BnStatus {
    guard(|| {
        let t = deref(traj, "traj")?;
        put(out, BnTrajectory(cmn(&t.0).ffi()?), "out")
    })
}

/// Loads a scale field.
///
/// # Safety
/// `file` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bn_scale_load(file: *const c_char, out: *mut *mut BnScale) -> BnStatus {
    guard(|| {
        let p = path(file, "path")?;
        put(out, BnScale(ScaleField::load(&p).ffi()?), "out")
    })
}

/// # Safety
/// `scale` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bn_scale_free(scale: *mut BnScale) {
    if !scale.is_null() {
        drop(Box::from_raw(scale));
    }
}

/// Dimension of the space the scale lives in, or 0 for a null handle.
///
/// # Safety
/// `scale` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bn_scale_dim(scale: *const BnScale) -> usize {
    scale.as_ref().map_or(0, |s| s.0.dim())
}

/// Scale coordinates `s(x)` of one point.
///
/// # Safety
/// `x` and `s_out` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn bn_scale_rescale(scale: *const BnScale, x: *const f64, dim: usize, s_out: *mut f64) -> BnStatus {
    guard(|| {
        let sc = deref(scale, "scale")?;
        if dim != sc.0.dim() {
            return Err(invalid(format!("scale has dimension {}, got {dim}", sc.0.dim())));
        }
        let s = sc.0.rescale(slice(x, dim, "x")?).ffi()?;
        slice_mut(s_out, dim, "s_out")?.copy_from_slice(&s);
        Ok(())
    })
}

/// The point `x` whose scale coordinates are `s`.
///
/// # Safety
/// `s` and `x_out` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn bn_scale_inverse(scale: *const BnScale, s: *const f64, dim: usize, x_out: *mut f64) -> BnStatus {
    guard(|| {
        let sc = deref(scale, "scale")?;
        if dim != sc.0.dim() {
            return Err(invalid(format!("scale has dimension {}, got {dim}", sc.0.dim())));
        }
        let x = sc.0.inverse_rescale(slice(s, dim, "s")?).ffi()?;
        slice_mut(x_out, dim, "x_out")?.copy_from_slice(&x);
        Ok(())
    })
}

/// Converts `traj` from the `from` channel to the `to` channel. Frames that
/// cannot be converted are written as NaN with `valid[t] = 0`. `frames_out`
/// holds `len * dim` values and `valid` holds `len` bytes.
///
/// # Safety
/// All handles must be live and the buffers sized as stated.
#[no_mangle]
pub unsafe extern "C" fn bn_convert(
    traj: *const BnTrajectory,
    from: *const BnScale,
    to: *const BnScale,
    nearest_s: bool,
    frames_out: *mut f64,
    valid: *mut u8,
    n_out_of_range: *mut usize,
) -> BnStatus {
    guard(|| {
        let t = deref(traj, "traj")?;
        let report = channel_convert(
            &t.0,
            &deref(from, "from")?.0,
            &deref(to, "to")?.0,
            &ConvertOptions { nearest_s },
        )
        .ffi()?;
        let dim = t.0.dim();
        let frames = slice_mut(frames_out, t.0.len() * dim, "frames_out")?;
        let mask = slice_mut(valid, t.0.len(), "valid")?;
        for (k, f) in report.converted.frames.iter().enumerate() {
            let dst = &mut frames[k * dim..(k + 1) * dim];
            match f {
                Some(v) => dst.copy_from_slice(v),
                None => dst.fill(f64::NAN),
            }
            mask[k] = f.is_some() as u8;
        }
        if !n_out_of_range.is_null() {
            *n_out_of_range = report.n_out_of_range;
        }
        Ok(())
    })
}

/// Runs the full pipeline described by a JSON configuration, writing every
/// artifact below `out_dir`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bn_pipeline_run(config_json: *const c_char, out_dir: *const c_char) -> BnStatus {
    guard(|| {
        let cfg = PipelineConfig::from_json(&string(config_json, "config_json")?).ffi()?;
        run_pipeline(&cfg, &path(out_dir, "out_dir")?).ffi().map(drop)
    })
}
