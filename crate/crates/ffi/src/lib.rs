//! C ABI over the `softseg` library.
//!
//! Masks and annotation sets are opaque heap handles created by `ss_*_new`
//! and released by the matching `ss_*_free`. Every fallible function returns
//! an [`SsStatus`]; on failure [`ss_last_error_message`] describes the error
//! for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use softseg::losses::{cross_entropy, dice_loss, LossValue};
use softseg::mask::{fuse_mean, threshold, variance_map, AnnotationSet, BinaryMask, SoftMask};
use softseg::metrics::{
    dice, ged_squared_deterministic, ged_squared_general, hausdorff95, iou, precision_recall, GedReport,
};
use softseg::nn::{cosine_lr, CosineSchedule};
use softseg::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    ShapeMismatch = 2,
    InvalidArgument = 3,
    InvalidValue = 4,
    /// The quantity is undefined for these inputs (HD95 with one empty mask).
    Undefined = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Opaque binary mask handle.
pub struct SsBinaryMask(BinaryMask);

/// Opaque soft mask handle.
pub struct SsSoftMask(SoftMask);

/// Opaque annotation set handle.
pub struct SsAnnotationSet(AnnotationSet);

/// Squared GED of a deterministic prediction and its components.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SsGedReport {
    pub d2_ged: f64,
    pub expected_distance: f64,
    pub diversity: f64,
    pub expected_dsc: f64,
}

impl From<GedReport> for SsGedReport {
    fn from(r: GedReport) -> Self {
        Self { d2_ged: r.d2_ged, expected_distance: r.expected_distance, diversity: r.diversity, expected_dsc: r.expected_dsc }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("no interior nul")));
}

fn status_of(err: &Error) -> SsStatus {
    match err {
        Error::ShapeMismatch(_) => SsStatus::ShapeMismatch,
        Error::InvalidArgument(_) => SsStatus::InvalidArgument,
        Error::InvalidValue(_) => SsStatus::InvalidValue,
        _ => SsStatus::Internal,
    }
}

struct Fail(SsStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn fail(status: SsStatus, msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(status)
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("internal panic");
            SsStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(SsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(SsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len < need {
        return Err(fail(SsStatus::BufferTooSmall, format!("{what} holds {len} values, {need} needed")));
    }
    if p.is_null() {
        return Err(fail(SsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn masks(handles: *const *const SsBinaryMask, n: usize, what: &str) -> Result<Vec<BinaryMask>, Fail> {
    slice(handles, n, what)?.iter().map(|&h| deref(h, what).map(|m| m.0.clone())).collect()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a binary mask from `width * height` row-major values, each 0 or 1.
///
/// # Safety
/// `values` must point to `width * height` bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_binary_mask_new(
    width: usize,
    height: usize,
    values: *const u8,
    out_mask: *mut *mut SsBinaryMask,
) -> SsStatus {
    guard(|| {
        let out_mask = out(out_mask, "out_mask")?;
        let n = width.checked_mul(height).ok_or_else(|| fail(SsStatus::InvalidArgument, "size overflow"))?;
        let m = BinaryMask::new(width, height, slice(values, n, "values")?.to_vec())?;
        *out_mask = Box::into_raw(Box::new(SsBinaryMask(m)));
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a handle from `ss_binary_mask_new`/`ss_threshold`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn ss_binary_mask_free(mask: *mut SsBinaryMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Width and height of a binary mask.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_binary_mask_shape(mask: *const SsBinaryMask, width: *mut usize, height: *mut usize) -> SsStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        *out(width, "width")? = m.width();
        *out(height, "height")? = m.height();
        Ok(())
    })
}

/// Copy the mask's values into `buf`, which must hold at least `width * height` bytes.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ss_binary_mask_values(mask: *const SsBinaryMask, buf: *mut u8, len: usize) -> SsStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        slice_mut(buf, len, m.len(), "buf")?.copy_from_slice(m.values());
        Ok(())
    })
}

/// Create a soft mask from `width * height` row-major values in `[0, 1]`.
///
/// # Safety
/// `values` must point to `width * height` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_soft_mask_new(
    width: usize,
    height: usize,
    values: *const f64,
    out_mask: *mut *mut SsSoftMask,
) -> SsStatus {
    guard(|| {
        let out_mask = out(out_mask, "out_mask")?;
        let n = width.checked_mul(height).ok_or_else(|| fail(SsStatus::InvalidArgument, "size overflow"))?;
        let m = SoftMask::new(width, height, slice(values, n, "values")?.to_vec())?;
        *out_mask = Box::into_raw(Box::new(SsSoftMask(m)));
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a live soft mask handle.
#[no_mangle]
pub unsafe extern "C" fn ss_soft_mask_free(mask: *mut SsSoftMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_soft_mask_shape(mask: *const SsSoftMask, width: *mut usize, height: *mut usize) -> SsStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        *out(width, "width")? = m.width();
        *out(height, "height")? = m.height();
        Ok(())
    })
}

/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_soft_mask_values(mask: *const SsSoftMask, buf: *mut f64, len: usize) -> SsStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        slice_mut(buf, len, m.len(), "buf")?.copy_from_slice(m.values());
        Ok(())
    })
}

/// Collect `count` same-shape masks into an annotation set. The masks are
/// copied; the caller keeps ownership of the input handles.
///
/// # Safety
/// `masks` must point to `count` live binary mask handles.
#[no_mangle]
pub unsafe extern "C" fn ss_annotation_set_new(
    masks_in: *const *const SsBinaryMask,
    count: usize,
    out_set: *mut *mut SsAnnotationSet,
) -> SsStatus {
    guard(|| {
        let out_set = out(out_set, "out_set")?;
        let set = AnnotationSet::new(masks(masks_in, count, "masks")?)?;
        *out_set = Box::into_raw(Box::new(SsAnnotationSet(set)));
        Ok(())
    })
}

/// # Safety
/// `set` must be null or a live annotation set handle.
#[no_mangle]
pub unsafe extern "C" fn ss_annotation_set_free(set: *mut SsAnnotationSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of annotations in the set; 0 for a null handle.
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_annotation_set_len(set: *const SsAnnotationSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// Per-pixel mean of the annotations.
///
/// # Safety
/// `set` must be a live handle and `out_mask` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_fuse_mean(set: *const SsAnnotationSet, out_mask: *mut *mut SsSoftMask) -> SsStatus {
    guard(|| {
        let set = &deref(set, "set")?.0;
        let out_mask = out(out_mask, "out_mask")?;
        *out_mask = Box::into_raw(Box::new(SsSoftMask(fuse_mean(set))));
        Ok(())
    })
}

/// Per-pixel Bernoulli variance `m (1 - m)` written into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_variance_map(mask: *const SsSoftMask, buf: *mut f64, len: usize) -> SsStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        slice_mut(buf, len, m.len(), "buf")?.copy_from_slice(&variance_map(m));
        Ok(())
    })
}

/// Binarise with `p >= tau`, `tau` in (0, 1).
///
/// # Safety
/// `mask` must be a live handle and `out_mask` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_threshold(mask: *const SsSoftMask, tau: f64, out_mask: *mut *mut SsBinaryMask) -> SsStatus {
    guard(|| {
        let m = &deref(mask, "mask")?.0;
        let out_mask = out(out_mask, "out_mask")?;
        *out_mask = Box::into_raw(Box::new(SsBinaryMask(threshold(m, tau)?)));
        Ok(())
    })
}

unsafe fn pair_metric(
    pred: *const SsBinaryMask,
    gt: *const SsBinaryMask,
    result: *mut f64,
    f: fn(&BinaryMask, &BinaryMask) -> softseg::Result<f64>,
) -> SsStatus {
    guard(|| {
        let value = f(&deref(pred, "pred")?.0, &deref(gt, "gt")?.0)?;
        *out(result, "result")? = value;
        Ok(())
    })
}

/// Dice similarity coefficient; 1 when both masks are empty.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_dice(pred: *const SsBinaryMask, gt: *const SsBinaryMask, result: *mut f64) -> SsStatus {
    pair_metric(pred, gt, result, dice)
}

/// Intersection over union; 1 when both masks are empty.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_iou(pred: *const SsBinaryMask, gt: *const SsBinaryMask, result: *mut f64) -> SsStatus {
    pair_metric(pred, gt, result, iou)
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_precision_recall(
    pred: *const SsBinaryMask,
    gt: *const SsBinaryMask,
    precision: *mut f64,
    recall: *mut f64,
) -> SsStatus {
    guard(|| {
        let (p, r) = precision_recall(&deref(pred, "pred")?.0, &deref(gt, "gt")?.0)?;
        *out(precision, "precision")? = p;
        *out(recall, "recall")? = r;
        Ok(())
    })
}

/// 95th-percentile Hausdorff distance in pixels. Returns `Undefined` when
/// exactly one mask is empty; 0 when both are.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_hausdorff95(a: *const SsBinaryMask, b: *const SsBinaryMask, result: *mut f64) -> SsStatus {
    guard(|| {
        let result = out(result, "result")?;
        match hausdorff95(&deref(a, "a")?.0, &deref(b, "b")?.0)? {
            Some(d) => {
                *result = d;
                Ok(())
            }
            None => Err(fail(SsStatus::Undefined, "HD95 is undefined when exactly one mask is empty")),
        }
    })
}

/// Squared GED of a deterministic prediction against the annotation set.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_ged_deterministic(
    set: *const SsAnnotationSet,
    pred: *const SsBinaryMask,
    report: *mut SsGedReport,
) -> SsStatus {
    guard(|| {
        let r = ged_squared_deterministic(&deref(set, "set")?.0, &deref(pred, "pred")?.0)?;
        *out(report, "report")? = r.into();
        Ok(())
    })
}

/// Squared GED between two samples of masks.
///
/// # Safety
/// `p` and `q` must point to `np` and `nq` live handles.
#[no_mangle]
pub unsafe extern "C" fn ss_ged_general(
    p: *const *const SsBinaryMask,
    np: usize,
    q: *const *const SsBinaryMask,
    nq: usize,
    result: *mut f64,
) -> SsStatus {
    guard(|| {
        let value = ged_squared_general(&masks(p, np, "p")?, &masks(q, nq, "q")?)?;
        *out(result, "result")? = value;
        Ok(())
    })
}

unsafe fn loss_call(
    p: *const SsSoftMask,
    g: *const SsSoftMask,
    loss: *mut f64,
    grad: *mut f64,
    grad_len: usize,
    f: fn(&SoftMask, &SoftMask) -> softseg::Result<LossValue>,
) -> SsStatus {
    guard(|| {
        let v = f(&deref(p, "p")?.0, &deref(g, "g")?.0)?;
        let loss = out(loss, "loss")?;
        if !grad.is_null() {
            slice_mut(grad, grad_len, v.grad.len(), "grad")?.copy_from_slice(&v.grad);
        }
        *loss = v.value;
        Ok(())
    })
}

/// Pixel-mean binary cross-entropy against a soft target. `grad` may be null;
/// otherwise it receives dLoss/dp.
///
/// # Safety
/// `grad`, when non-null, must point to `grad_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_cross_entropy(
    p: *const SsSoftMask,
    g: *const SsSoftMask,
    loss: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> SsStatus {
    loss_call(p, g, loss, grad, grad_len, cross_entropy)
}

/// Soft dice loss. `grad` may be null.
///
/// # Safety
/// `grad`, when non-null, must point to `grad_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_dice_loss(
    p: *const SsSoftMask,
    g: *const SsSoftMask,
    loss: *mut f64,
    grad: *mut f64,
    grad_len: usize,
) -> SsStatus {
    loss_call(p, g, loss, grad, grad_len, dice_loss)
}

/// Cosine-annealed learning rate at `step` of `total_steps`.
///
/// # Safety
/// `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_cosine_lr(
    lr_start: f64,
    lr_end: f64,
    total_steps: usize,
    step: usize,
    result: *mut f64,
) -> SsStatus {
    guard(|| {
        let schedule = CosineSchedule::new(lr_start, lr_end, total_steps)?;
        let lr = cosine_lr(&schedule, step)?;
        *out(result, "result")? = lr;
        Ok(())
    })
}
