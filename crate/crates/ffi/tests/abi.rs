use std::ffi::CStr;
use std::ptr;

use softseg_ffi::*;

unsafe fn binary(w: usize, h: usize, v: &[u8]) -> *mut SsBinaryMask {
    let mut m = ptr::null_mut();
    assert_eq!(ss_binary_mask_new(w, h, v.as_ptr(), &mut m), SsStatus::Ok);
    m
}

unsafe fn last_error() -> String {
    CStr::from_ptr(ss_last_error_message()).to_string_lossy().into_owned()
}

#[test]
fn fuse_variance_threshold() {
    unsafe {
        let a = binary(2, 2, &[1, 1, 0, 0]);
        let b = binary(2, 2, &[1, 0, 0, 0]);
        let mut set = ptr::null_mut();
        assert_eq!(ss_annotation_set_new([a as *const _, b as *const _].as_ptr(), 2, &mut set), SsStatus::Ok);
        assert_eq!(ss_annotation_set_len(set), 2);

        let mut fused = ptr::null_mut();
        assert_eq!(ss_fuse_mean(set, &mut fused), SsStatus::Ok);
        let mut vals = [0.0; 4];
        assert_eq!(ss_soft_mask_values(fused, vals.as_mut_ptr(), 4), SsStatus::Ok);
        assert_eq!(vals, [1.0, 0.5, 0.0, 0.0]);
        assert_eq!(ss_variance_map(fused, vals.as_mut_ptr(), 4), SsStatus::Ok);
        assert_eq!(vals, [0.0, 0.25, 0.0, 0.0]);

        let mut bin = ptr::null_mut();
        assert_eq!(ss_threshold(fused, 0.5, &mut bin), SsStatus::Ok);
        let mut bytes = [9u8; 4];
        assert_eq!(ss_binary_mask_values(bin, bytes.as_mut_ptr(), 4), SsStatus::Ok);
        assert_eq!(bytes, [1, 1, 0, 0]);

        let (mut w, mut h) = (0, 0);
        assert_eq!(ss_binary_mask_shape(bin, &mut w, &mut h), SsStatus::Ok);
        assert_eq!((w, h), (2, 2));

        let mut report = SsGedReport::default();
        assert_eq!(ss_ged_deterministic(set, bin, &mut report), SsStatus::Ok);
        // d(pred, a) = 0, d(pred, b) = 1/2; pairs (a,b), (b,a) at 1/2
        assert_eq!(report.expected_distance, 0.25);
        assert_eq!(report.diversity, 0.25);
        assert_eq!(report.d2_ged, 0.25);

        let mut general = 0.0;
        assert_eq!(ss_ged_general([a as *const _, b as *const _].as_ptr(), 2, [bin as *const _].as_ptr(), 1, &mut general), SsStatus::Ok);
        assert!((general - report.d2_ged).abs() < 1e-12);

        ss_binary_mask_free(bin);
        ss_soft_mask_free(fused);
        ss_annotation_set_free(set);
        ss_binary_mask_free(a);
        ss_binary_mask_free(b);
    }
}

#[test]
fn metrics_and_empty_conventions() {
    unsafe {
        let empty = binary(3, 3, &[0; 9]);
        let dot = binary(3, 3, &[0, 0, 0, 0, 1, 0, 0, 0, 0]);
        let mut v = -1.0;
        assert_eq!(ss_dice(empty, empty, &mut v), SsStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(ss_iou(empty, empty, &mut v), SsStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(ss_hausdorff95(empty, empty, &mut v), SsStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(ss_hausdorff95(empty, dot, &mut v), SsStatus::Undefined);
        assert!(last_error().contains("undefined"));

        let (mut p, mut r) = (0.0, 0.0);
        assert_eq!(ss_precision_recall(dot, dot, &mut p, &mut r), SsStatus::Ok);
        assert_eq!((p, r), (1.0, 1.0));
        ss_binary_mask_free(empty);
        ss_binary_mask_free(dot);
    }
}

#[test]
fn losses_and_schedule() {
    unsafe {
        let mut p = ptr::null_mut();
        let mut g = ptr::null_mut();
        assert_eq!(ss_soft_mask_new(2, 1, [0.5, 0.5].as_ptr(), &mut p), SsStatus::Ok);
        assert_eq!(ss_soft_mask_new(2, 1, [1.0, 0.0].as_ptr(), &mut g), SsStatus::Ok);
        let mut loss = 0.0;
        let mut grad = [0.0; 2];
        assert_eq!(ss_cross_entropy(p, g, &mut loss, grad.as_mut_ptr(), 2), SsStatus::Ok);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        // (p - g) / (p (1 - p)) / N
        assert!((grad[0] + 1.0).abs() < 1e-12 && (grad[1] - 1.0).abs() < 1e-12);
        assert_eq!(ss_dice_loss(p, g, &mut loss, ptr::null_mut(), 0), SsStatus::Ok);
        assert!((loss - 0.5).abs() < 1e-12);
        assert_eq!(ss_cross_entropy(p, g, &mut loss, grad.as_mut_ptr(), 1), SsStatus::BufferTooSmall);

        let mut lr = 0.0;
        assert_eq!(ss_cosine_lr(1e-2, 1e-4, 100, 0, &mut lr), SsStatus::Ok);
        assert_eq!(lr, 1e-2);
        assert_eq!(ss_cosine_lr(1e-2, 1e-4, 100, 100, &mut lr), SsStatus::Ok);
        assert_eq!(lr, 1e-4);
        assert_eq!(ss_cosine_lr(1e-2, 1e-4, 100, 101, &mut lr), SsStatus::InvalidArgument);
        ss_soft_mask_free(p);
        ss_soft_mask_free(g);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ss_binary_mask_new(2, 1, [0u8, 2].as_ptr(), &mut m), SsStatus::InvalidValue);
        assert!(m.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(ss_soft_mask_new(1, 1, [1.5].as_ptr(), ptr::null_mut()), SsStatus::NullPointer);
        let mut s = ptr::null_mut();
        assert_eq!(ss_soft_mask_new(1, 1, [f64::NAN].as_ptr(), &mut s), SsStatus::InvalidValue);

        let a = binary(2, 1, &[1, 0]);
        let b = binary(1, 2, &[1, 0]);
        let mut v = 0.0;
        assert_eq!(ss_dice(a, b, &mut v), SsStatus::ShapeMismatch);
        let mut set = ptr::null_mut();
        assert_eq!(ss_annotation_set_new(ptr::null(), 0, &mut set), SsStatus::InvalidArgument);
        assert_eq!(ss_dice(a, ptr::null(), &mut v), SsStatus::NullPointer);
        assert_eq!(ss_annotation_set_len(ptr::null()), 0);
        ss_binary_mask_free(a);
        ss_binary_mask_free(b);
        ss_binary_mask_free(ptr::null_mut());

        assert!(CStr::from_ptr(ss_version()).to_str().unwrap().starts_with("0."));
    }
}
