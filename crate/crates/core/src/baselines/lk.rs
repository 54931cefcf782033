//! Block-wise pyramid Lucas–Kanade alignment (forward additive
//! Gauss–Newton on the squared intensity error).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::warp::bicubic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Translation,
    /// Translation plus rotation and isotropic scale.
    Similarity,
}

impl Motion {
    fn dof(self) -> usize {
        match self {
            Motion::Translation => 2,
            Motion::Similarity => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkConfig {
    pub block: usize,
    pub levels: usize,
    pub iterations: usize,
    /// Stop once the update moves no block point by more than this (pixels).
    pub tolerance: f64,
}

impl Default for LkConfig {
    fn default() -> Self {
        LkConfig {
            block: 64,
            levels: 3,
            iterations: 20,
            tolerance: 1e-3,
        }
    }
}

/// Per-block motion. Block `k` maps a fixed-image point `p` to
/// `p + d_k(p)` in the moving image, with
/// `d_k(p) = (tx + a·x − b·y, ty + b·x + a·y)` and `(x, y)` taken relative
/// to the block center. Between block centers the displacements are blended
/// bilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWarp {
    pub motion: Motion,
    /// Block boundaries along rows and columns (first 0, last the size).
    pub row_bounds: Vec<usize>,
    pub col_bounds: Vec<usize>,
    /// `[tx, ty, a, b]` per block, row-major.
    pub params: Vec<[f64; 4]>,
    /// Blocks whose normal equations were singular (zero motion kept).
    pub singular: Vec<bool>,
    /// Blocks whose estimate was discarded for running away or fitting
    /// worse than zero motion.
    pub diverged: Vec<bool>,
    /// Final mean squared error per block at full resolution.
    pub errors: Vec<f64>,
}

fn bounds(n: usize, block: usize) -> Vec<usize> {
    let count = ((n as f64 / block as f64).round() as usize).max(1);
    (0..=count).map(|i| i * n / count).collect()
}

fn centers(b: &[usize]) -> Vec<f64> {
    b.windows(2).map(|w| (w[0] + w[1] - 1) as f64 / 2.0).collect()
}

#[inline]
fn displacement(p: &[f64; 4], x: f64, y: f64) -> (f64, f64) {
    (p[0] + p[2] * x - p[3] * y, p[1] + p[3] * x + p[2] * y)
}

/// Blend weights along one axis: two neighboring block indices and the
/// weight of the second.
fn axis_blend(centers: &[f64], v: f64) -> (usize, usize, f64) {
    let n = centers.len();
    if n == 1 || v <= centers[0] {
        return (0, 0, 0.0);
    }
    if v >= centers[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let i = centers.partition_point(|&c| c <= v) - 1;
    let t = (v - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, t)
}

impl LocalWarp {
    pub fn identity(height: usize, width: usize, block: usize, motion: Motion) -> Self {
        let row_bounds = bounds(height, block);
        let col_bounds = bounds(width, block);
        let n = (row_bounds.len() - 1) * (col_bounds.len() - 1);
        LocalWarp {
            motion,
            row_bounds,
            col_bounds,
            params: vec![[0.0; 4]; n],
            singular: vec![false; n],
            diverged: vec![false; n],
            errors: vec![0.0; n],
        }
    }

    /// A single block carrying one global translation.
    pub fn translation(height: usize, width: usize, dx: f64, dy: f64) -> Self {
        let mut w = LocalWarp::identity(height, width, height.max(width), Motion::Translation);
        w.params = vec![[dx, dy, 0.0, 0.0]];
        w
    }

    fn block_cols(&self) -> usize {
        self.col_bounds.len() - 1
    }

    pub fn mean_error(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    /// Displacement at full-resolution point `(x, y)`.
    pub fn displacement_at(&self, x: f64, y: f64) -> (f64, f64) {
        let cy = centers(&self.row_bounds);
        let cx = centers(&self.col_bounds);
        let (r0, r1, ty) = axis_blend(&cy, y);
        let (c0, c1, tx) = axis_blend(&cx, x);
        let nc = self.block_cols();
        let mut d = (0.0, 0.0);
        for (r, wr) in [(r0, 1.0 - ty), (r1, ty)] {
            for (c, wc) in [(c0, 1.0 - tx), (c1, tx)] {
                let wgt = wr * wc;
                if wgt == 0.0 {
                    continue;
                }
                let (dx, dy) = displacement(&self.params[r * nc + c], x - cx[c], y - cy[r]);
                d.0 += wgt * dx;
                d.1 += wgt * dy;
            }
        }
        d
    }

    /// Resample `moving` into the fixed frame.
    pub fn apply(&self, moving: &Plane) -> Plane {
        if self.params.iter().all(|p| *p == [0.0; 4]) {
            return moving.clone();
        }
        let cy = centers(&self.row_bounds);
        let cx = centers(&self.col_bounds);
        let nc = self.block_cols();
        Plane::from_fn(moving.height, moving.width, |r, c| {
            let (x, y) = (c as f64, r as f64);
            let (r0, r1, ty) = axis_blend(&cy, y);
            let (c0, c1, tx) = axis_blend(&cx, x);
            let (mut dx, mut dy) = (0.0, 0.0);
            for (br, wr) in [(r0, 1.0 - ty), (r1, ty)] {
                for (bc, wc) in [(c0, 1.0 - tx), (c1, tx)] {
                    let wgt = wr * wc;
                    if wgt != 0.0 {
                        let d = displacement(&self.params[br * nc + bc], x - cx[bc], y - cy[br]);
                        dx += wgt * d.0;
                        dy += wgt * d.1;
                    }
                }
            }
            bicubic(moving, y + dy, x + dx)
        })
    }
}

/// Largest displacement over the corners of a block.
fn corner_displacement(p: &[f64; 4], rows: (usize, usize), cols: (usize, usize), center: (f64, f64)) -> f64 {
    let mut m = 0.0f64;
    for y in [rows.0 as f64, (rows.1 - 1) as f64] {
        for x in [cols.0 as f64, (cols.1 - 1) as f64] {
            let (dx, dy) = displacement(p, x - center.0, y - center.1);
            m = m.max(dx.hypot(dy));
        }
    }
    m
}

/// Mean and standard deviation over a block; `None` when it is flat.
fn block_stats(p: &Plane, rows: (usize, usize), cols: (usize, usize)) -> Option<(f64, f64)> {
    let (mut s, mut s2) = (0.0, 0.0);
    for r in rows.0..rows.1 {
        for &v in &p.data[r * p.width + cols.0..r * p.width + cols.1] {
            s += v as f64;
            s2 += (v as f64).powi(2);
        }
    }
    let n = ((rows.1 - rows.0) * (cols.1 - cols.0)) as f64;
    let mean = s / n;
    let sd = (s2 / n - mean * mean).max(0.0).sqrt();
    (sd > 1e-6).then_some((mean, sd))
}

/// 2×2 box average; odd trailing rows or columns are dropped.
fn downsample(p: &Plane) -> Plane {
    let (h, w) = (p.height / 2, p.width / 2);
    Plane::from_fn(h.max(1), w.max(1), |r, c| {
        let (r2, c2) = ((2 * r).min(p.height - 1), (2 * c).min(p.width - 1));
        let (r3, c3) = ((2 * r + 1).min(p.height - 1), (2 * c + 1).min(p.width - 1));
        0.25 * (p.get(r2, c2) + p.get(r2, c3) + p.get(r3, c2) + p.get(r3, c3))
    })
}

/// Central-difference gradients.
fn central_gradients(p: &Plane) -> (Plane, Plane) {
    let gx = Plane::from_fn(p.height, p.width, |r, c| {
        0.5 * (p.get_mirror(r as isize, c as isize + 1) - p.get_mirror(r as isize, c as isize - 1))
    });
    let gy = Plane::from_fn(p.height, p.width, |r, c| {
        0.5 * (p.get_mirror(r as isize + 1, c as isize) - p.get_mirror(r as isize - 1, c as isize))
    });
    (gx, gy)
}

/// Solve a small symmetric positive system by Cholesky; `None` when it is
/// numerically singular.
fn solve_spd(a: &[[f64; 4]; 4], b: &[f64; 4], n: usize) -> Option<[f64; 4]> {
    let scale = (0..n).map(|i| a[i][i]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let mut l = [[0.0; 4]; 4];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-10 * scale {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

struct Level {
    scale: f64,
    fixed: Plane,
    moving: Plane,
    gx: Plane,
    gy: Plane,
}

/// Gauss–Newton refinement of one block at one level. Returns `false` when
/// the normal equations were singular.
#[allow(clippy::too_many_arguments)]
fn refine_block(
    lv: &Level,
    rows: (usize, usize),
    cols: (usize, usize),
    center: (f64, f64),
    motion: Motion,
    cfg: &LkConfig,
    params: &mut [f64; 4],
) -> bool {
    let s = lv.scale;
    let off = (s - 1.0) / 2.0;
    let (lh, lw) = lv.fixed.shape();
    let r0 = ((rows.0 as f64 / s).floor() as usize).min(lh - 1);
    let r1 = ((rows.1 as f64 / s).ceil() as usize).clamp(r0 + 1, lh);
    let c0 = ((cols.0 as f64 / s).floor() as usize).min(lw - 1);
    let c1 = ((cols.1 as f64 / s).ceil() as usize).clamp(c0 + 1, lw);
    let n = motion.dof();
    let reach = ((rows.1 - rows.0).max(cols.1 - cols.0) as f64) / 2.0;
    let (Some(fs), Some(ms)) = (
        block_stats(&lv.fixed, (r0, r1), (c0, c1)),
        block_stats(&lv.moving, (r0, r1), (c0, c1)),
    ) else {
        return false;
    };
    for _ in 0..cfg.iterations {
        let mut h = [[0.0; 4]; 4];
        let mut g = [0.0; 4];
        for r in r0..r1 {
            for c in c0..c1 {
                let xf = s * c as f64 + off - center.0;
                let yf = s * r as f64 + off - center.1;
                let (dx, dy) = displacement(params, xf, yf);
                let (sy, sx) = (r as f64 + dy / s, c as f64 + dx / s);
                let m = (bicubic(&lv.moving, sy, sx) as f64 - ms.0) / ms.1;
                let ix = bicubic(&lv.gx, sy, sx) as f64 / (s * ms.1);
                let iy = bicubic(&lv.gy, sy, sx) as f64 / (s * ms.1);
                let e = (lv.fixed.get(r, c) as f64 - fs.0) / fs.1 - m;
                let j = [ix, iy, ix * xf + iy * yf, -ix * yf + iy * xf];
                for a in 0..n {
                    g[a] += j[a] * e;
                    for b in 0..=a {
                        h[a][b] += j[a] * j[b];
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                h[b][a] = h[a][b];
            }
        }
        let Some(delta) = solve_spd(&h, &g, n) else {
            return false;
        };
        for a in 0..n {
            params[a] += delta[a];
        }
        let step = delta[0]
            .abs()
            .max(delta[1].abs())
            .max((delta[2].abs() + delta[3].abs()) * reach);
        if step < cfg.tolerance {
            break;
        }
    }
    true
}

/// Estimate the warp taking `fixed` coordinates into `moving`.
/// Intensities are standardized within each block, so the error is
/// insensitive to a local gain and offset between the channels.
pub fn lucas_kanade(moving: &Plane, fixed: &Plane, motion: Motion, cfg: &LkConfig) -> Result<LocalWarp> {
    if moving.shape() != fixed.shape() {
        return Err(Error::invalid("lucas-kanade needs equal shapes"));
    }
    if cfg.levels == 0 || cfg.block < 8 || cfg.iterations == 0 {
        return Err(Error::invalid("lucas-kanade needs levels >= 1, block >= 8"));
    }
    let (h, w) = fixed.shape();
    let mut pyramid = Vec::with_capacity(cfg.levels);
    let (mut f, mut m) = (fixed.clone(), moving.clone());
    for l in 0..cfg.levels {
        if l > 0 {
            if f.height < 16 || f.width < 16 {
                break;
            }
            f = downsample(&f);
            m = downsample(&m);
        }
        let (gx, gy) = central_gradients(&m);
        pyramid.push(Level {
            scale: (1u64 << l) as f64,
            fixed: f.clone(),
            moving: m.clone(),
            gx,
            gy,
        });
    }
    let mut warp = LocalWarp::identity(h, w, cfg.block, motion);
    let nc = warp.block_cols();
    let cy = centers(&warp.row_bounds);
    let cx = centers(&warp.col_bounds);
    let results: Vec<([f64; 4], bool, bool, f64)> = (0..warp.params.len())
        .into_par_iter()
        .map(|k| {
            let (br, bc) = (k / nc, k % nc);
            let rows = (warp.row_bounds[br], warp.row_bounds[br + 1]);
            let cols = (warp.col_bounds[bc], warp.col_bounds[bc + 1]);
            let center = (cx[bc], cy[br]);
            let mut p = [0.0; 4];
            let mut ok = true;
            for lv in pyramid.iter().rev() {
                if !refine_block(lv, rows, cols, center, motion, cfg, &mut p) {
                    ok = false;
                    break;
                }
            }
            if !ok || p.iter().any(|v| !v.is_finite()) {
                p = [0.0; 4];
                ok = false;
            }
            let base = &pyramid[0];
            let fs = block_stats(&base.fixed, rows, cols).unwrap_or((0.0, 1.0));
            let ms = block_stats(&base.moving, rows, cols).unwrap_or((0.0, 1.0));
            let block_error = |p: &[f64; 4]| {
                let mut err = 0.0;
                for r in rows.0..rows.1 {
                    for c in cols.0..cols.1 {
                        let (dx, dy) = displacement(p, c as f64 - center.0, r as f64 - center.1);
                        let m = bicubic(&base.moving, r as f64 + dy, c as f64 + dx) as f64;
                        let e = (base.fixed.get(r, c) as f64 - fs.0) / fs.1 - (m - ms.0) / ms.1;
                        err += e * e;
                    }
                }
                err / ((rows.1 - rows.0) * (cols.1 - cols.0)) as f64
            };
            // Gauss–Newton can run away on weak texture: reject motions beyond
            // half a block and anything that fits worse than no motion.
            let limit = (rows.1 - rows.0).min(cols.1 - cols.0) as f64 / 2.0;
            let reach = corner_displacement(&p, rows, cols, center);
            let mut err = block_error(&p);
            let mut diverged = false;
            if ok && p != [0.0; 4] {
                let still = block_error(&[0.0; 4]);
                if reach > limit || still <= err {
                    diverged = reach > limit || still < err;
                    p = [0.0; 4];
                    err = still;
                }
            }
            (p, !ok, diverged, err)
        })
        .collect();
    for (k, (p, singular, diverged, err)) in results.into_iter().enumerate() {
        warp.params[k] = p;
        warp.singular[k] = singular;
        warp.diverged[k] = diverged;
        warp.errors[k] = err;
    }
    Ok(warp)
}
