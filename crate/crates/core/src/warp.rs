//! Bicubic resampling with mirror boundary.

use crate::image::{mirror_index, Plane};

/// Keys cubic convolution weights (`a = −0.5`) for the four taps around a
/// sample at fractional offset `t ∈ [0, 1)`.
#[inline]
fn weights(t: f64) -> [f64; 4] {
    const A: f64 = -0.5;
    let near = |x: f64| ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0;
    let far = |x: f64| ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A;
    [far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)]
}

/// Value at real coordinates `(y, x)` (row, col).
pub fn bicubic(plane: &Plane, y: f64, x: f64) -> f32 {
    let (h, w) = plane.shape();
    let (fy, fx) = (y.floor(), x.floor());
    let (wy, wx) = (weights(y - fy), weights(x - fx));
    let (iy, ix) = (fy as isize - 1, fx as isize - 1);
    let cols: [usize; 4] = std::array::from_fn(|k| mirror_index(ix + k as isize, w));
    let mut acc = 0.0;
    for (ky, &a) in wy.iter().enumerate() {
        let row = mirror_index(iy + ky as isize, h) * w;
        let mut s = 0.0;
        for (kx, &b) in wx.iter().enumerate() {
            s += b * plane.data[row + cols[kx]] as f64;
        }
        acc += a * s;
    }
    acc as f32
}

/// Resample with `out(r, c) = in(map(r, c))`, where `map` returns `(y, x)`.
pub fn remap(plane: &Plane, map: impl Fn(usize, usize) -> (f64, f64)) -> Plane {
    Plane::from_fn(plane.height, plane.width, |r, c| {
        let (y, x) = map(r, c);
        bicubic(plane, y, x)
    })
}

/// Move the content by `(dx, dy)` pixels: `out(r, c) = in(r − dy, c − dx)`.
pub fn translate(plane: &Plane, dx: f64, dy: f64) -> Plane {
    if dx == 0.0 && dy == 0.0 {
        return plane.clone();
    }
    remap(plane, |r, c| (r as f64 - dy, c as f64 - dx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity() {
        for t in [0.0, 0.1, 0.5, 0.77] {
            let w = weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn integer_positions_exact() {
        let p = crate::scene::chart(20, 1);
        assert_eq!(translate(&p, 0.0, 0.0), p);
        let q = translate(&p, 2.0, -1.0);
        assert_eq!(q.get(5, 7), p.get(6, 5));
    }

    #[test]
    fn reproduces_linear_ramp() {
        let p = Plane::from_fn(16, 16, |r, c| 0.01 * r as f32 + 0.02 * c as f32);
        let q = translate(&p, 0.3, 0.6);
        for r in 3..13 {
            for c in 3..13 {
                let want = 0.01 * (r as f32 - 0.6) + 0.02 * (c as f32 - 0.3);
                assert!((q.get(r, c) - want).abs() < 1e-6);
            }
        }
    }
}
