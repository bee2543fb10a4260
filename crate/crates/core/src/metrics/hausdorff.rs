use crate::error::Result;
use crate::mask::{ensure_same_shape, BinaryMask};

// Finite stand-in for +inf so the parabola intersections below never see
// `inf - inf`. Larger than any squared distance on a realistic raster.
const FAR: f64 = 1e20;

/// Exact squared Euclidean distance from every pixel to the nearest
/// foreground pixel of `mask` (separable lower-envelope-of-parabolas
/// transform). Pixels of an empty mask all map to a huge sentinel.
pub fn squared_distance_transform(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = mask.shape();
    let mut grid: Vec<f64> = mask.values().iter().map(|&v| if v == 1 { 0.0 } else { FAR }).collect();

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        lower_envelope(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        lower_envelope(&f[..w], &mut out[..w], &mut v, &mut z);
        row.copy_from_slice(&out[..w]);
    }
    grid
}

fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let intersect = |k: usize| {
            let p = v[k] as f64;
            ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p))
        };
        let mut s = intersect(k);
        // z[0] is -inf, so this stops at k = 0 at the latest.
        while s <= z[k] {
            k -= 1;
            s = intersect(k);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Percentile of `values` with linear interpolation between closest ranks
/// (rank `q * (n - 1)`). Sorts in place; returns `None` for an empty slice.
pub fn percentile_linear(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Some(values[lo] + frac * (values[hi] - values[lo]))
}

/// 95th percentile of the pooled nearest-neighbour distances from each
/// mask's foreground pixels to the other mask's foreground.
///
/// Returns `Some(0.0)` when both masks are empty and `None` when exactly one
/// is empty.
pub fn hausdorff95(a: &BinaryMask, b: &BinaryMask) -> Result<Option<f64>> {
    ensure_same_shape(a.shape(), b.shape(), "hausdorff95(a, b)")?;
    match (a.is_blank(), b.is_blank()) {
        (true, true) => return Ok(Some(0.0)),
        (true, false) | (false, true) => return Ok(None),
        _ => {}
    }
    let w = a.width();
    let dt_a = squared_distance_transform(a);
    let dt_b = squared_distance_transform(b);
    let mut pooled: Vec<f64> = a
        .foreground()
        .map(|(x, y)| dt_b[y * w + x].sqrt())
        .chain(b.foreground().map(|(x, y)| dt_a[y * w + x].sqrt()))
        .collect();
    Ok(percentile_linear(&mut pooled, 0.95))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: usize, h: usize, x: usize, y: usize) -> BinaryMask {
        let mut v = vec![0u8; w * h];
        v[y * w + x] = 1;
        BinaryMask::new(w, h, v).unwrap()
    }

    #[test]
    fn identical_masks_zero() {
        let m = BinaryMask::new(3, 3, vec![0, 1, 1, 0, 1, 0, 1, 0, 0]).unwrap();
        assert_eq!(hausdorff95(&m, &m).unwrap(), Some(0.0));
    }

    #[test]
    fn single_pixels_three_four_five() {
        let a = single(8, 8, 1, 1);
        let b = single(8, 8, 4, 5);
        assert_eq!(hausdorff95(&a, &b).unwrap(), Some(5.0));
    }

    #[test]
    fn empty_conventions() {
        let e = BinaryMask::zeros(4, 4).unwrap();
        let s = single(4, 4, 2, 2);
        assert_eq!(hausdorff95(&e, &e).unwrap(), Some(0.0));
        assert_eq!(hausdorff95(&e, &s).unwrap(), None);
        assert_eq!(hausdorff95(&s, &e).unwrap(), None);
    }

    #[test]
    fn shape_mismatch() {
        let a = BinaryMask::zeros(4, 2).unwrap();
        let b = BinaryMask::zeros(2, 4).unwrap();
        assert!(hausdorff95(&a, &b).is_err());
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let m = BinaryMask::new(5, 4, vec![0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let dt = squared_distance_transform(&m);
        let fg: Vec<_> = m.foreground().collect();
        for y in 0..4 {
            for x in 0..5 {
                let best = fg
                    .iter()
                    .map(|&(fx, fy)| {
                        let dx = fx as f64 - x as f64;
                        let dy = fy as f64 - y as f64;
                        dx * dx + dy * dy
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(dt[y * 5 + x], best, "({x},{y})");
            }
        }
    }

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0, 0.0];
        assert_eq!(percentile_linear(&mut v, 0.5), Some(2.0));
        assert_eq!(percentile_linear(&mut v, 0.95), Some(3.8));
        assert_eq!(percentile_linear(&mut [], 0.95), None);
        assert_eq!(percentile_linear(&mut [7.0], 0.95), Some(7.0));
    }
}
