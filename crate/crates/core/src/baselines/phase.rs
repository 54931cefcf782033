//! Translation estimation by phase correlation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::Plane;

pub const MIN_SIDE: usize = 32;
/// Width (pixels) of the Gaussian the correlation peak is shaped into, so a
/// parabola through the log of three samples locates it exactly.
const PEAK_SIGMA: f64 = 1.0;

fn fft2(data: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        col_fft.process(&mut col);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

/// Mean-removed, Hann-tapered copy of a plane as complex samples.
fn prepare(plane: &Plane) -> Vec<Complex<f64>> {
    let (h, w) = plane.shape();
    let mean = plane.mean();
    let hann = |i: usize, n: usize| {
        0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos()
    };
    let wy: Vec<f64> = (0..h).map(|i| hann(i, h)).collect();
    let wx: Vec<f64> = (0..w).map(|i| hann(i, w)).collect();
    (0..h * w)
        .map(|i| {
            let v = (plane.data[i] as f64 - mean) * wy[i / w] * wx[i % w];
            Complex::new(v, 0.0)
        })
        .collect()
}

/// Offset of a peak from three samples around it, by a parabola through
/// their logarithms.
fn refine(left: f64, center: f64, right: f64) -> f64 {
    if left <= 0.0 || right <= 0.0 || center <= 0.0 {
        // fall back to a plain parabola
        let den = left - 2.0 * center + right;
        return if den.abs() > 0.0 {
            (0.5 * (left - right) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        };
    }
    let (l, c, r) = (left.ln(), center.ln(), right.ln());
    let den = l - 2.0 * c + r;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / den).clamp(-0.5, 0.5)
}

/// Displacement `(dx, dy)` of `moving` relative to `fixed`, so that
/// `moving(r, c) ≈ fixed(r − dy, c − dx)`. Translating `moving` by
/// `(−dx, −dy)` aligns it.
pub fn phase_correlate(moving: &Plane, fixed: &Plane) -> Result<(f64, f64)> {
    if moving.shape() != fixed.shape() {
        return Err(Error::invalid("phase correlation needs equal shapes"));
    }
    let (h, w) = fixed.shape();
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::invalid(format!(
            "phase correlation needs at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}"
        )));
    }
    if moving.data.iter().all(|&v| v == 0.0) || fixed.data.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("phase correlation of an all-zero image"));
    }
    let mut fm = prepare(moving);
    let mut ff = prepare(fixed);
    fft2(&mut fm, h, w, false);
    fft2(&mut ff, h, w, false);
    let freq = |i: usize, n: usize| {
        let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        k / n as f64
    };
    let s2 = 2.0 * (std::f64::consts::PI * PEAK_SIGMA).powi(2);
    let mut cross: Vec<Complex<f64>> = fm
        .iter()
        .zip(&ff)
        .enumerate()
        .map(|(i, (a, b))| {
            let p = a * b.conj();
            let n = p.norm();
            if n < 1e-20 {
                return Complex::new(0.0, 0.0);
            }
            let (fy, fx) = (freq(i / w, h), freq(i % w, w));
            p / n * (-s2 * (fx * fx + fy * fy)).exp()
        })
        .collect();
    fft2(&mut cross, h, w, true);
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, c) in cross.iter().enumerate() {
        if c.re > best_v {
            best_v = c.re;
            best = i;
        }
    }
    if !(best_v > 0.0) {
        return Err(Error::invalid("phase correlation found no peak"));
    }
    let (pr, pc) = (best / w, best % w);
    let at = |r: usize, c: usize| cross[(r % h) * w + (c % w)].re;
    let dy = refine(at(pr + h - 1, pc), best_v, at(pr + 1, pc));
    let dx = refine(at(pr, pc + w - 1), best_v, at(pr, pc + 1));
    let wrap = |p: usize, n: usize| if p > n / 2 { p as f64 - n as f64 } else { p as f64 };
    Ok((wrap(pc, w) + dx, wrap(pr, h) + dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene;
    use crate::warp::translate;

    fn texture(n: usize, seed: u64) -> Plane {
        let img = scene::color_scene(n, n, seed);
        img.plane(1)
    }

    #[test]
    fn identical_is_zero() {
        let f = texture(64, 1);
        let (dx, dy) = phase_correlate(&f, &f).unwrap();
        assert!(dx.abs() < 1e-9 && dy.abs() < 1e-9);
    }

    #[test]
    fn integer_shift() {
        let f = texture(96, 2);
        let m = translate(&f, 3.0, -2.0);
        let (dx, dy) = phase_correlate(&m, &f).unwrap();
        assert!((dx - 3.0).abs() < 0.02 && (dy + 2.0).abs() < 0.02, "{dx} {dy}");
    }

    #[test]
    fn circular_integer_shift_exact() {
        let f = texture(64, 5);
        let m = Plane::from_fn(64, 64, |r, c| f.get((r + 64 - 2) % 64, (c + 3) % 64));
        let (dx, dy) = phase_correlate(&m, &f).unwrap();
        assert_eq!((dx.round(), dy.round()), (-3.0, 2.0));
    }

    #[test]
    fn subpixel_shift() {
        let f = texture(128, 3);
        let m = translate(&f, 0.5, 0.25);
        let (dx, dy) = phase_correlate(&m, &f).unwrap();
        assert!((dx - 0.5).abs() < 0.1 && (dy - 0.25).abs() < 0.1, "{dx} {dy}");
    }

    #[test]
    fn equivariant_under_common_shift() {
        let f = texture(96, 4);
        let m = translate(&f, 1.25, -0.5);
        let a = phase_correlate(&m, &f).unwrap();
        let b = phase_correlate(&translate(&m, 2.0, 1.0), &translate(&f, 2.0, 1.0)).unwrap();
        assert!((a.0 - b.0).abs() < 0.05 && (a.1 - b.1).abs() < 0.05, "{a:?} {b:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let z = Plane::zeros(40, 40);
        assert!(phase_correlate(&z, &texture(40, 1)).is_err());
        assert!(phase_correlate(&Plane::zeros(20, 20), &Plane::zeros(20, 20)).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn common_shift_leaves_estimate(sx in -3.0f64..3.0, sy in -3.0f64..3.0) {
            let f = texture(96, 6);
            let m = translate(&f, 0.75, -1.5);
            let a = phase_correlate(&m, &f).unwrap();
            let b = phase_correlate(&translate(&m, sx, sy), &translate(&f, sx, sy)).unwrap();
            proptest::prop_assert!((a.0 - b.0).abs() < 0.05 && (a.1 - b.1).abs() < 0.05, "{:?} {:?}", a, b);
        }
    }
}
