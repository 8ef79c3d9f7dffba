//! C ABI over the sspe-vit core.
//!
//! Every entry point returns an [`SspeStatus`]. On failure a description is
//! kept per thread and can be read with [`sspe_last_error`]. Models live
//! behind the opaque [`SspeModel`] handle and must be released with
//! [`sspe_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use sspe_vit::augment::{assign_label, make_sspe_plan, KeySet, PositionPlan, SetTag};
use sspe_vit::encoder::{
    embed_patches, encode, read_checkpoint, save_checkpoint, write_checkpoint, EncoderParams, ModelConfig,
};
use sspe_vit::loss::{ce_loss, hybrid_loss, lsce_loss, smooth_labels, HybridLossConfig, Reduction};
use sspe_vit::rng::rng_for;
use sspe_vit::{Error, Grade, Raster};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SspeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Checkpoint = 5,
    NonFinite = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque trained or initialised encoder.
pub struct SspeModel {
    params: EncoderParams,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> SspeStatus {
    match err {
        Error::Shape(_) => SspeStatus::Shape,
        Error::NonFinite(_) | Error::Diverged { .. } => SspeStatus::NonFinite,
        Error::Io { .. } => SspeStatus::Io,
        Error::Checkpoint(_) => SspeStatus::Checkpoint,
        _ => SspeStatus::InvalidArgument,
    }
}

type Outcome = Result<(), (SspeStatus, String)>;

fn fail(status: SspeStatus, msg: impl Into<String>) -> Outcome {
    Err((status, msg.into()))
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, (SspeStatus, String)>;
}

impl<T> OrStatus<T> for sspe_vit::Result<T> {
    fn or_status(self) -> Result<T, (SspeStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

/// Runs `body`, records any error and converts panics into a status.
fn guard(body: impl FnOnce() -> Outcome) -> SspeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            SspeStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SspeStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SspeStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, (SspeStatus, String)> {
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|_| (SspeStatus::InvalidArgument, "path is not UTF-8".to_string()))
}

fn grade_arg(code: u8) -> Result<Grade, (SspeStatus, String)> {
    match code {
        0 => Ok(Grade::Kl0),
        1 => Ok(Grade::Kl2),
        other => Err((SspeStatus::InvalidArgument, format!("grade code {other} is neither 0 nor 1"))),
    }
}

unsafe fn publish(model: EncoderParams, out: *mut *mut SspeModel) {
    *out = Box::into_raw(Box::new(SspeModel { params: model }));
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sspe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn sspe_status_name(status: SspeStatus) -> *const c_char {
    let name: &'static CStr = match status {
        SspeStatus::Ok => c"ok",
        SspeStatus::NullPointer => c"null pointer",
        SspeStatus::InvalidArgument => c"invalid argument",
        SspeStatus::Shape => c"shape mismatch",
        SspeStatus::Io => c"i/o error",
        SspeStatus::Checkpoint => c"bad checkpoint",
        SspeStatus::NonFinite => c"non-finite value",
        SspeStatus::BufferTooSmall => c"buffer too small",
        SspeStatus::Panic => c"internal panic",
    };
    name.as_ptr()
}

/// Randomly initialised model with the default geometry.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_init(seed: u64, out: *mut *mut SspeModel) -> SspeStatus {
    guard(|| {
        non_null!(out);
        let params = EncoderParams::init(ModelConfig::default(), &mut rng_for(seed, &[])).or_status()?;
        publish(params, out);
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_load(path: *const c_char, out: *mut *mut SspeModel) -> SspeStatus {
    guard(|| {
        non_null!(path, out);
        let params = sspe_vit::encoder::load_checkpoint(path_arg(path)?).or_status()?;
        publish(params, out);
        Ok(())
    })
}

/// Reads a checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be valid for one handle.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_from_bytes(data: *const u8, len: usize, out: *mut *mut SspeModel) -> SspeStatus {
    guard(|| {
        non_null!(data, out);
        let params = read_checkpoint(slice::from_raw_parts(data, len)).or_status()?;
        publish(params, out);
        Ok(())
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_save(model: *const SspeModel, path: *const c_char) -> SspeStatus {
    guard(|| {
        non_null!(model, path);
        save_checkpoint(&(*model).params, path_arg(path)?).or_status()
    })
}

/// Serialises the model into `buffer`. `written` always receives the
/// required size, so a call with a null buffer queries it.
///
/// # Safety
/// `buffer` must be null or writable for `capacity` bytes; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_to_bytes(
    model: *const SspeModel,
    buffer: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> SspeStatus {
    guard(|| {
        non_null!(model, written);
        let mut bytes = Vec::new();
        write_checkpoint(&(*model).params, &mut bytes).map_err(|e| (SspeStatus::Io, e.to_string()))?;
        *written = bytes.len();
        if buffer.is_null() || capacity < bytes.len() {
            return fail(
                SspeStatus::BufferTooSmall,
                format!("checkpoint needs {} bytes, buffer holds {capacity}", bytes.len()),
            );
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buffer, bytes.len());
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_free(model: *mut SspeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Image side and patch size in pixels, and the number of patch positions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_geometry(
    model: *const SspeModel,
    image_side: *mut usize,
    patch_pixels: *mut usize,
    positions: *mut usize,
) -> SspeStatus {
    guard(|| {
        non_null!(model, image_side, patch_pixels, positions);
        let cfg = &(*model).params.config;
        *image_side = cfg.image_side;
        *patch_pixels = cfg.patch_pixels;
        *positions = cfg.positions();
        Ok(())
    })
}

/// Logits `[KL-0, KL-2]` for a row-major grayscale image with values in
/// `[0, 1]`. `plan` lists the 1-based position row of each token; pass null
/// for the identity plan used at inference.
///
/// # Safety
/// `pixels` must hold `len` values, `plan` (if non-null) `plan_len` values,
/// and `logits` must be writable for two values.
#[no_mangle]
pub unsafe extern "C" fn sspe_model_encode(
    model: *const SspeModel,
    pixels: *const f64,
    len: usize,
    plan: *const usize,
    plan_len: usize,
    logits: *mut f64,
) -> SspeStatus {
    guard(|| {
        non_null!(model, pixels, logits);
        let params = &(*model).params;
        let side = params.config.image_side;
        if len != side * side {
            return fail(SspeStatus::Shape, format!("expected {} pixels, got {len}", side * side));
        }
        let image = Raster::new(side, side, slice::from_raw_parts(pixels, len).to_vec()).or_status()?;
        let tokens = embed_patches(&image, params.config.patch_pixels).or_status()?;
        let plan = if plan.is_null() {
            PositionPlan::identity(tokens.positions())
        } else {
            PositionPlan::new(slice::from_raw_parts(plan, plan_len).to_vec()).or_status()?
        };
        let out = encode(&tokens, &params.position, &plan, params).or_status()?;
        slice::from_raw_parts_mut(logits, 2).copy_from_slice(&out);
        Ok(())
    })
}

/// Selective shuffle plan: key tokens keep their rows, the rest are
/// permuted uniformly. Writes `positions` 1-based rows to `out`.
///
/// # Safety
/// `keys` must hold `key_count` values and `out` be writable for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn sspe_make_plan(
    positions: usize,
    keys: *const usize,
    key_count: usize,
    seed: u64,
    out: *mut usize,
    out_len: usize,
) -> SspeStatus {
    guard(|| {
        non_null!(keys, out);
        if out_len < positions {
            return fail(SspeStatus::BufferTooSmall, format!("plan needs {positions} slots"));
        }
        let keys = KeySet::new(slice::from_raw_parts(keys, key_count).to_vec()).or_status()?;
        let plan = make_sspe_plan(positions, &keys, &mut rng_for(seed, &[])).or_status()?;
        slice::from_raw_parts_mut(out, positions).copy_from_slice(plan.assignment());
        Ok(())
    })
}

/// Label of an exchanged sequence from its key-patch grades (0 = KL-0,
/// 1 = KL-2): KL-0 only when every key patch is KL-0.
///
/// # Safety
/// `grades` must hold `count` values and `label` be valid.
#[no_mangle]
pub unsafe extern "C" fn sspe_exchange_label(grades: *const u8, count: usize, label: *mut u8) -> SspeStatus {
    guard(|| {
        non_null!(grades, label);
        let grades = slice::from_raw_parts(grades, count)
            .iter()
            .map(|&g| grade_arg(g))
            .collect::<Result<Vec<_>, _>>()?;
        *label = assign_label(&grades).index() as u8;
        Ok(())
    })
}

/// Smoothed target `one_hot * (1 - epsilon) + epsilon / 2`.
///
/// # Safety
/// `one_hot` must hold two values and `out` be writable for two.
#[no_mangle]
pub unsafe extern "C" fn sspe_smooth_labels(one_hot: *const f64, epsilon: f64, out: *mut f64) -> SspeStatus {
    guard(|| {
        non_null!(one_hot, out);
        let s = smooth_labels([*one_hot, *one_hot.add(1)], epsilon).or_status()?;
        slice::from_raw_parts_mut(out, 2).copy_from_slice(&s.weights);
        Ok(())
    })
}

/// Cross-entropy of two-class probabilities against a one-hot target.
///
/// # Safety
/// `probs` and `one_hot` must hold two values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sspe_ce_loss(probs: *const f64, one_hot: *const f64, out: *mut f64) -> SspeStatus {
    guard(|| {
        non_null!(probs, one_hot, out);
        *out = ce_loss([*probs, *probs.add(1)], [*one_hot, *one_hot.add(1)]).or_status()?;
        Ok(())
    })
}

/// Label-smoothing cross-entropy with smoothing `epsilon` in (0, 1).
///
/// # Safety
/// `probs` and `one_hot` must hold two values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sspe_lsce_loss(
    probs: *const f64,
    one_hot: *const f64,
    epsilon: f64,
    out: *mut f64,
) -> SspeStatus {
    guard(|| {
        non_null!(probs, one_hot, out);
        let target = smooth_labels([*one_hot, *one_hot.add(1)], epsilon).or_status()?;
        *out = lsce_loss([*probs, *probs.add(1)], &target).or_status()?;
        Ok(())
    })
}

/// `alpha * LSCE` over mixed members plus `beta * CE` over full members.
/// `probs` holds `2 * count` values; `labels` are grade codes; `mixed` is
/// non-zero for mixed members. `sum_reduction` selects sums over means.
///
/// # Safety
/// Arrays must hold the stated number of values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sspe_hybrid_loss(
    probs: *const f64,
    labels: *const u8,
    mixed: *const u8,
    count: usize,
    epsilon: f64,
    alpha: f64,
    beta: f64,
    sum_reduction: bool,
    out: *mut f64,
) -> SspeStatus {
    guard(|| {
        non_null!(probs, labels, mixed, out);
        let probs = slice::from_raw_parts(probs, 2 * count);
        let labels = slice::from_raw_parts(labels, count);
        let mixed = slice::from_raw_parts(mixed, count);
        let batch = (0..count)
            .map(|i| {
                let tag = if mixed[i] != 0 { SetTag::MixedKl } else { SetTag::FullKl };
                Ok(([probs[2 * i], probs[2 * i + 1]], grade_arg(labels[i])?, tag))
            })
            .collect::<Result<Vec<_>, (SspeStatus, String)>>()?;
        let config = HybridLossConfig {
            epsilon,
            alpha,
            beta,
            reduction: if sum_reduction { Reduction::Sum } else { Reduction::Mean },
        };
        *out = hybrid_loss(&batch, &config).or_status()?;
        Ok(())
    })
}
