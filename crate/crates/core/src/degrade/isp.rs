//! Minimal raw pipeline: Bayer mosaicking, bilateral denoising and
//! Hamilton–Adams demosaicking (RGGB).

use crate::error::{Error, Result};
use crate::image::{mirror_index, PlanarImage, Plane};

/// Color index (0 = R, 1 = G, 2 = B) of an RGGB site.
#[inline]
pub fn cfa_color(row: usize, col: usize) -> usize {
    match (row % 2, col % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Keep one color per pixel following the RGGB layout.
pub fn mosaick(image: &PlanarImage) -> Plane {
    Plane::from_fn(image.height(), image.width(), |r, c| {
        image.get(r, c, cfa_color(r, c))
    })
}

/// Edge-preserving smoothing over a `(2·ceil(2σs) + 1)²` window.
pub fn bilateral(channel: &Plane, spatial_sigma: f64, range_sigma: f64) -> Plane {
    let (h, w) = channel.shape();
    if spatial_sigma <= 0.0 {
        return channel.clone();
    }
    let radius = (2.0 * spatial_sigma).ceil() as isize;
    let side = (2 * radius + 1) as usize;
    let spatial: Vec<f64> = (0..side * side)
        .map(|i| {
            let dy = (i / side) as f64 - radius as f64;
            let dx = (i % side) as f64 - radius as f64;
            (-(dx * dx + dy * dy) / (2.0 * spatial_sigma * spatial_sigma)).exp()
        })
        .collect();
    let inv_range = if range_sigma.is_finite() && range_sigma > 0.0 {
        1.0 / (2.0 * range_sigma * range_sigma)
    } else {
        0.0
    };
    Plane::from_fn(h, w, |r, c| {
        let center = channel.get(r, c) as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for dy in -radius..=radius {
            let rr = mirror_index(r as isize + dy, h);
            for dx in -radius..=radius {
                let cc = mirror_index(c as isize + dx, w);
                let v = channel.data[rr * w + cc] as f64;
                let k = spatial[((dy + radius) as usize) * side + (dx + radius) as usize]
                    * (-(v - center) * (v - center) * inv_range).exp();
                num += k * v;
                den += k;
            }
        }
        (num / den) as f32
    })
}

/// Bilateral filtering of a mosaic, done separately on each of the four CFA
/// sub-planes so colors never mix. `spatial_sigma` is in full-resolution
/// pixels.
pub fn denoise_raw(raw: &Plane, spatial_sigma: f64, range_sigma: f64) -> Plane {
    let (h, w) = raw.shape();
    let mut out = raw.clone();
    for (oy, ox) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let sh = (h + 1 - oy) / 2;
        let sw = (w + 1 - ox) / 2;
        if sh == 0 || sw == 0 {
            continue;
        }
        let sub = Plane::from_fn(sh, sw, |r, c| raw.get(2 * r + oy, 2 * c + ox));
        let f = bilateral(&sub, spatial_sigma / 2.0, range_sigma);
        for r in 0..sh {
            for c in 0..sw {
                out.set(2 * r + oy, 2 * c + ox, f.get(r, c));
            }
        }
    }
    out
}

/// Whole-sample reflection, which keeps the CFA parity of an index.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Taps of a one-pixel linear extrapolation past the border along samples
/// two apart, which keeps the CFA parity: `v(-1) = 2 v(1) - v(3)`.
fn extrapolate(i: isize, n: usize) -> [(usize, f32); 2] {
    let n = n as isize;
    if i < 0 {
        [((i + 2) as usize, 2.0), ((i + 4) as usize, -1.0)]
    } else if i >= n {
        [((i - 2) as usize, 2.0), ((i - 4) as usize, -1.0)]
    } else {
        [(i as usize, 1.0), (i as usize, 0.0)]
    }
}

/// Hamilton–Adams demosaicking of an RGGB mosaic with even dimensions.
pub fn demosaick_hamilton_adams(raw: &Plane) -> Result<PlanarImage> {
    let (h, w) = raw.shape();
    if h % 2 != 0 || w % 2 != 0 || h < 4 || w < 4 {
        return Err(Error::invalid(format!(
            "demosaicking needs even dimensions of at least 4, got {h}x{w}"
        )));
    }
    // samples past the border are extrapolated along the CFA lattice
    let extended = |plane: &dyn Fn(usize, usize) -> f32, r: isize, c: isize| {
        let mut v = 0.0;
        for (rr, wr) in extrapolate(r, h) {
            for (cc, wc) in extrapolate(c, w) {
                if wr != 0.0 && wc != 0.0 {
                    v += wr * wc * plane(rr, cc);
                }
            }
        }
        v
    };
    let raw_at = |r: usize, c: usize| raw.data[r * w + c];
    let at = |r: isize, c: isize| extended(&raw_at, r, c);

    // green: gradient-directed interpolation with Laplacian correction
    let mut g = raw.clone();
    for r in 0..h {
        for c in 0..w {
            if cfa_color(r, c) == 1 {
                continue;
            }
            let (ri, ci) = (r as isize, c as isize);
            let x = at(ri, ci);
            let lap_h = 2.0 * x - at(ri, ci - 2) - at(ri, ci + 2);
            let lap_v = 2.0 * x - at(ri - 2, ci) - at(ri + 2, ci);
            let (gl, gr) = (at(ri, ci - 1), at(ri, ci + 1));
            let (gu, gd) = (at(ri - 1, ci), at(ri + 1, ci));
            let dh = (gl - gr).abs() + lap_h.abs();
            let dv = (gu - gd).abs() + lap_v.abs();
            let est_h = (gl + gr) / 2.0 + lap_h / 4.0;
            let est_v = (gu + gd) / 2.0 + lap_v / 4.0;
            let v = if dh < dv {
                est_h
            } else if dv < dh {
                est_v
            } else {
                (est_h + est_v) / 2.0
            };
            g.set(r, c, v);
        }
    }

    // red and blue: interpolate the color difference X − G
    let mut planes = [Plane::zeros(h, w), g.clone(), Plane::zeros(h, w)];
    for target in [0usize, 2] {
        let inner = |r: usize, c: usize| raw.data[r * w + c] - g.data[r * w + c];
        let diff = |r: isize, c: isize| extended(&inner, r, c);
        let p = &mut planes[target];
        for r in 0..h {
            for c in 0..w {
                let (ri, ci) = (r as isize, c as isize);
                let site = cfa_color(r, c);
                let gv = g.get(r, c);
                let v = if site == target {
                    raw.get(r, c)
                } else if site == 1 {
                    // a green site has the target color either left/right or
                    // above/below, depending on the row
                    let horizontal = cfa_color(r, reflect(ci + 1, w)) == target;
                    if horizontal {
                        gv + (diff(ri, ci - 1) + diff(ri, ci + 1)) / 2.0
                    } else {
                        gv + (diff(ri - 1, ci) + diff(ri + 1, ci)) / 2.0
                    }
                } else {
                    gv + (diff(ri - 1, ci - 1)
                        + diff(ri - 1, ci + 1)
                        + diff(ri + 1, ci - 1)
                        + diff(ri + 1, ci + 1))
                        / 4.0
                };
                p.set(r, c, v);
            }
        }
    }
    PlanarImage::from_planes(&planes)
}
