//! Image quality metrics: SSIM, the deblurring SSIM ratio, the chroma
//! gradient energy and the fringe residual loss.

use crate::deblur::{apply_inverse, build_inverse, InversePolynomial};
use crate::error::{Error, Result};
use crate::image::{PlanarImage, Plane};
use crate::psf::{GaussianPsf, RasterKernel};

/// Pixels dropped on each side before scoring a deblurred image.
pub const RATIO_CROP: usize = 15;
/// Largest integer shift tried when aligning a deblurred result.
pub const MAX_SHIFT: isize = 2;
/// Floor of the divisor in normalized gradients.
pub const ENERGY_EPS: f32 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    /// Normalized 1D Gaussian taps; the 2D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let t: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - r).powi(2) / (2.0 * self.window_sigma.powi(2))).exp())
            .collect();
        let s: f64 = t.iter().sum();
        t.into_iter().map(|v| v / s).collect()
    }
}

/// Separable "valid" filtering of an f64 buffer.
fn filter_valid(data: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &data[r * w..(r + 1) * w];
        let dst = &mut rows[r * ow..(r + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            for (d, &s) in dst.iter_mut().zip(&src[k..k + ow]) {
                *d += t * s;
            }
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        let dst = &mut out[r * ow..(r + 1) * ow];
        for (k, &t) in taps.iter().enumerate() {
            let src = &rows[(r + k) * ow..(r + k + 1) * ow];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over all fully-contained windows.
pub fn ssim(a: &Plane, b: &Plane, cfg: &SsimConfig) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "ssim shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (h, w) = a.shape();
    if h < cfg.window || w < cfg.window {
        return Err(Error::invalid(format!(
            "ssim needs at least {0}x{0} pixels, got {h}x{w}",
            cfg.window
        )));
    }
    let taps = cfg.taps();
    let x: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, _, _) = filter_valid(&x, h, w, &taps);
    let (my, _, _) = filter_valid(&y, h, w, &taps);
    let (exx, _, _) = filter_valid(&xx, h, w, &taps);
    let (eyy, _, _) = filter_valid(&yy, h, w, &taps);
    let (exy, _, _) = filter_valid(&xy, h, w, &taps);
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ma, mb) = (mx[i], my[i]);
        let va = exx[i] - ma * ma;
        let vb = eyy[i] - mb * mb;
        let cov = exy[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mx.len() as f64)
}

/// Mean SSIM over channels.
pub fn ssim_image(a: &PlanarImage, b: &PlanarImage, cfg: &SsimConfig) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(Error::invalid("ssim channel count mismatch"));
    }
    let mut total = 0.0;
    for c in 0..a.channels() {
        total += ssim(&a.plane(c), &b.plane(c), cfg)?;
    }
    Ok(total / a.channels() as f64)
}

/// SSIM of `z` against `u` after cropping, with `z` displaced by `(dy, dx)`.
fn shifted_ssim(z: &Plane, u: &Plane, dy: isize, dx: isize, cfg: &SsimConfig) -> Result<f64> {
    let (h, w) = u.shape();
    let (ch, cw) = (h - 2 * RATIO_CROP, w - 2 * RATIO_CROP);
    let zc = z.crop(
        (RATIO_CROP as isize + dy) as usize,
        (RATIO_CROP as isize + dx) as usize,
        ch,
        cw,
    );
    ssim(&zc, &u.crop(RATIO_CROP, RATIO_CROP, ch, cw), cfg)
}

/// Integer shift in `[−2, 2]²` maximizing the SSIM of `z` against `u`, and
/// the SSIM at that shift. Ties keep the first shift in raster order.
pub fn best_shift(z: &Plane, u: &Plane, cfg: &SsimConfig) -> Result<((isize, isize), f64)> {
    let mut best = ((0, 0), f64::NEG_INFINITY);
    for dy in -MAX_SHIFT..=MAX_SHIFT {
        for dx in -MAX_SHIFT..=MAX_SHIFT {
            let s = shifted_ssim(z, u, dy, dx, cfg)?;
            if s > best.1 {
                best = ((dy, dx), s);
            }
        }
    }
    Ok(best)
}

/// Components of the deblurring SSIM ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimRatio {
    pub ratio: f64,
    pub ssim_true: f64,
    pub ssim_est: f64,
    pub shift: (isize, isize),
}

/// `R = (SSIM[p(g)∗v, u] + 2) / (SSIM[p(ĝ)∗v, u] + 2)`. Values above 1 mean
/// the estimated kernel does worse than the true one.
///
/// Both deblurred results are clamped to `[0, 1]`, cropped by 15 pixels and
/// scored at the shift that best aligns the true-kernel result.
pub fn ssim_ratio(
    blurry: &Plane,
    clean: &Plane,
    g_true: &RasterKernel,
    g_est: &RasterKernel,
    poly: &InversePolynomial,
) -> Result<SsimRatio> {
    let (h, w) = clean.shape();
    if blurry.shape() != clean.shape() {
        return Err(Error::invalid("ssim ratio shape mismatch"));
    }
    let min = 4 * RATIO_CROP + 1;
    if h < min || w < min {
        return Err(Error::invalid(format!(
            "ssim ratio needs at least {min}x{min} pixels, got {h}x{w}"
        )));
    }
    let cfg = SsimConfig::default();
    let deblur = |g: &RasterKernel| {
        let mut z = apply_inverse(blurry, &build_inverse(g, poly));
        z.clamp01();
        z
    };
    let z_true = deblur(g_true);
    let (shift, ssim_true) = best_shift(&z_true, clean, &cfg)?;
    let ssim_est = if g_est == g_true {
        ssim_true
    } else {
        shifted_ssim(&deblur(g_est), clean, shift.0, shift.1, &cfg)?
    };
    Ok(SsimRatio {
        ratio: (ssim_true + 2.0) / (ssim_est + 2.0),
        ssim_true,
        ssim_est,
        shift,
    })
}

/// [`ssim_ratio`] over the three channels of an image: per-channel SSIMs
/// are averaged before forming the ratio.
pub fn ssim_ratio_image(
    blurry: &PlanarImage,
    clean: &PlanarImage,
    g_true: &GaussianPsf,
    g_est: &GaussianPsf,
    poly: &InversePolynomial,
) -> Result<f64> {
    if blurry.channels() != 3 || clean.channels() != 3 {
        return Err(Error::invalid("ssim ratio needs 3-channel images"));
    }
    let (mut t, mut e) = (0.0, 0.0);
    for c in 0..3 {
        let r = ssim_ratio(
            &blurry.plane(c),
            &clean.plane(c),
            &g_true.kernel(c),
            &g_est.kernel(c),
            poly,
        )?;
        t += r.ssim_true / 3.0;
        e += r.ssim_est / 3.0;
    }
    Ok((t + 2.0) / (e + 2.0))
}

/// Mean over pixels of `|∇a/max(a, ε) − ∇b/max(b, ε)|` along one axis, with
/// forward differences.
fn normalized_gradient_gap(a: &Plane, b: &Plane, along_x: bool) -> f64 {
    let (h, w) = a.shape();
    let (rows, cols) = if along_x { (h, w - 1) } else { (h - 1, w) };
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut total = 0.0f64;
    for r in 0..rows {
        for c in 0..cols {
            let (r2, c2) = if along_x { (r, c + 1) } else { (r + 1, c) };
            let av = a.get(r, c);
            let bv = b.get(r, c);
            let ga = (a.get(r2, c2) - av) as f64 / av.max(ENERGY_EPS) as f64;
            let gb = (b.get(r2, c2) - bv) as f64 / bv.max(ENERGY_EPS) as f64;
            total += (ga - gb).abs();
        }
    }
    total / (rows * cols) as f64
}

/// Chroma gradient energy `E`: summed over red and blue and both axes, the
/// mean absolute gap between normalized gradients of the channel and green.
pub fn energy(u_r: &Plane, u_b: &Plane, z_g: &Plane) -> Result<f64> {
    if u_r.shape() != z_g.shape() || u_b.shape() != z_g.shape() {
        return Err(Error::invalid("energy shape mismatch"));
    }
    let mut e = 0.0;
    for u in [u_r, u_b] {
        e += normalized_gradient_gap(z_g, u, true);
        e += normalized_gradient_gap(z_g, u, false);
    }
    Ok(e)
}

/// [`energy`] of a 3-channel image.
pub fn image_energy(image: &PlanarImage) -> Result<f64> {
    if image.channels() != 3 {
        return Err(Error::invalid("energy needs 3 channels"));
    }
    energy(&image.plane(0), &image.plane(2), &image.plane(1))
}

/// Fringe training loss: summed over red and blue, the mean absolute gap
/// between the clean chroma residual `u_c − u_G` and the corrected one
/// `z_c − φ_c − z_G`. `phi` holds the red and blue network outputs.
pub fn residual_loss(clean: &PlanarImage, deblurred: &PlanarImage, phi: [&Plane; 2]) -> Result<f64> {
    if clean.channels() != 3 || deblurred.channels() != 3 {
        return Err(Error::invalid("residual loss needs 3-channel images"));
    }
    let shape = (clean.height(), clean.width());
    if (deblurred.height(), deblurred.width()) != shape
        || phi.iter().any(|p| p.shape() != shape)
    {
        return Err(Error::invalid("residual loss shape mismatch"));
    }
    let n = (shape.0 * shape.1) as f64;
    let (ug, zg) = (clean.channel(1), deblurred.channel(1));
    let mut loss = 0.0;
    for (k, c) in [0usize, 2].into_iter().enumerate() {
        let (uc, zc) = (clean.channel(c), deblurred.channel(c));
        let mut sum = 0.0f64;
        for i in 0..uc.len() {
            let target = uc[i] as f64 - ug[i] as f64;
            let got = zc[i] as f64 - phi[k].data[i] as f64 - zg[i] as f64;
            sum += (target - got).abs();
        }
        loss += sum / n;
    }
    Ok(loss)
}
