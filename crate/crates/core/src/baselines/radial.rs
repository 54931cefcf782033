//! Global even-order radial warp about the image center, fitted with a
//! Nelder–Mead simplex.

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::warp::{bicubic, remap};

/// `r' = r · (1 + k1·r̂² + k3·r̂⁴)`, with `r̂` the radius over the
/// half-diagonal. Applying the warp samples the input at `r'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialWarp {
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k3: f64,
}

impl RadialWarp {
    /// Identity warp centered on a `height × width` image.
    pub fn centered(height: usize, width: usize) -> Self {
        RadialWarp {
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            k1: 0.0,
            k3: 0.0,
        }
    }

    pub fn with_coefficients(mut self, k1: f64, k3: f64) -> Self {
        self.k1 = k1;
        self.k3 = k3;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.k1 == 0.0 && self.k3 == 0.0
    }

    fn half_diagonal(&self) -> f64 {
        self.cx.hypot(self.cy).max(1.0)
    }

    #[inline]
    fn gain(&self, rn2: f64) -> f64 {
        1.0 + self.k1 * rn2 + self.k3 * rn2 * rn2
    }

    pub fn apply(&self, plane: &Plane) -> Plane {
        if self.is_identity() {
            return plane.clone();
        }
        let d2 = self.half_diagonal().powi(2);
        remap(plane, |r, c| {
            let (x, y) = (c as f64 - self.cx, r as f64 - self.cy);
            let g = self.gain((x * x + y * y) / d2);
            (self.cy + y * g, self.cx + x * g)
        })
    }

    /// Undo [`apply`](Self::apply): samples at the radius `s` solving
    /// `s · gain(s) = r`, found by Newton iteration.
    pub fn apply_inverse(&self, plane: &Plane) -> Plane {
        if self.is_identity() {
            return plane.clone();
        }
        let d = self.half_diagonal();
        remap(plane, |r, c| {
            let (x, y) = (c as f64 - self.cx, r as f64 - self.cy);
            let rho = x.hypot(y) / d;
            if rho == 0.0 {
                return (self.cy, self.cx);
            }
            let mut s = rho;
            for _ in 0..20 {
                let s2 = s * s;
                let f = s * self.gain(s2) - rho;
                let df = 1.0 + 3.0 * self.k1 * s2 + 5.0 * self.k3 * s2 * s2;
                if df.abs() < 1e-12 {
                    break;
                }
                let step = f / df;
                s -= step;
                if step.abs() < 1e-12 {
                    break;
                }
            }
            let scale = s / rho;
            (self.cy + y * scale, self.cx + x * scale)
        })
    }
}

/// Mean absolute residual between the warped moving channel and `fixed`.
pub fn radial_residual(moving: &Plane, fixed: &Plane, warp: &RadialWarp) -> f64 {
    let d2 = warp.half_diagonal().powi(2);
    let w = fixed.width;
    let mut acc = 0.0;
    for (i, &f) in fixed.data.iter().enumerate() {
        let (r, c) = (i / w, i % w);
        let (x, y) = (c as f64 - warp.cx, r as f64 - warp.cy);
        let g = warp.gain((x * x + y * y) / d2);
        let v = if warp.is_identity() {
            moving.data[i]
        } else {
            bicubic(moving, warp.cy + y * g, warp.cx + x * g)
        };
        acc += (v - f).abs() as f64;
    }
    acc / fixed.len() as f64
}

/// Zero mean, unit variance, so a global gain or offset between the
/// channels does not count as residual.
fn standardize(p: &Plane) -> Plane {
    let m = p.mean() as f32;
    let s = (p.variance().sqrt() as f32).max(1e-6);
    p.map(|v| (v - m) / s)
}

/// Result of a radial fit, with the best objective seen after each
/// simplex iteration.
#[derive(Debug, Clone)]
pub struct RadialFit {
    pub warp: RadialWarp,
    pub residual: f64,
    pub history: Vec<f64>,
}

const MAX_ITER: usize = 200;
const INITIAL_STEP: f64 = 0.01;

/// Minimize a function of two variables from the origin.
fn nelder_mead(f: impl Fn([f64; 2]) -> f64) -> ([f64; 2], f64, Vec<f64>) {
    let mut simplex: Vec<([f64; 2], f64)> = [[0.0, 0.0], [INITIAL_STEP, 0.0], [0.0, INITIAL_STEP]]
        .into_iter()
        .map(|p| (p, f(p)))
        .collect();
    let mut history = Vec::new();
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..MAX_ITER {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let size = simplex[1..]
            .iter()
            .map(|(p, _)| (p[0] - simplex[0].0[0]).abs().max((p[1] - simplex[0].0[1]).abs()))
            .fold(0.0, f64::max);
        if size < 1e-7 || simplex[2].1 - simplex[0].1 < 1e-12 {
            break;
        }
        let centroid = lerp(simplex[0].0, simplex[1].0, 0.5);
        let worst = simplex[2];
        let reflected = lerp(centroid, worst.0, -1.0);
        let fr = f(reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(centroid, worst.0, -2.0);
            let fe = f(expanded);
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let (target, ft) = if fr < worst.1 { (reflected, fr) } else { worst };
            let contracted = lerp(centroid, target, 0.5);
            let fc = f(contracted);
            if fc < ft {
                simplex[2] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let p = lerp(best, v.0, 0.5);
                    *v = (p, f(p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    history.push(simplex[0].1);
    (simplex[0].0, simplex[0].1, history)
}

/// Fit `(k1, k3)` so the warped `moving` best matches `fixed`, both
/// standardized. The reported residual is in standardized units.
pub fn fit_radial_traced(moving: &Plane, fixed: &Plane) -> Result<RadialFit> {
    if moving.shape() != fixed.shape() {
        return Err(Error::invalid("radial fit needs equal shapes"));
    }
    let (moving, fixed) = (&standardize(moving), &standardize(fixed));
    let base = RadialWarp::centered(fixed.height, fixed.width);
    let objective = |k: [f64; 2]| {
        if k.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return f64::INFINITY;
        }
        radial_residual(moving, fixed, &base.with_coefficients(k[0], k[1]))
    };
    let (k, residual, history) = nelder_mead(objective);
    Ok(RadialFit {
        warp: base.with_coefficients(k[0], k[1]),
        residual,
        history,
    })
}

pub fn fit_radial(moving: &Plane, fixed: &Plane) -> Result<RadialWarp> {
    fit_radial_traced(moving, fixed).map(|f| f.warp)
}
