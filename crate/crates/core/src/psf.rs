//! Parametric Gaussian PSF model, kernel rasterization, moment fitting of
//! measured PSFs, and mirror-boundary spatial convolution.
//!
//! Angles are measured in image coordinates: `θ = 0` points along increasing
//! column, `θ = π/2` along increasing row. A kernel with parameters
//! `(θ, σ, ρ)` has standard deviation `σ` along `(cos θ, sin θ)` and `ρ`
//! along the perpendicular direction.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{mirror_index, Plane};

pub const MIN_STD: f64 = 0.2;
pub const MAX_STD: f64 = 4.0;

/// Fold an angle into `[0, π)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly π
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Absolute angular distance between two orientations, modulo π.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Per-channel blur of the seven-parameter RGB model: one shared orientation
/// and two standard deviations per color plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPsf {
    pub theta: f64,
    /// Standard deviation along `theta`, for R, G, B.
    pub sigma: [f64; 3],
    /// Standard deviation along `theta + π/2`, for R, G, B.
    pub rho: [f64; 3],
}

impl GaussianPsf {
    pub fn new(theta: f64, sigma: [f64; 3], rho: [f64; 3]) -> Result<Self> {
        for &s in sigma.iter().chain(&rho) {
            if !(MIN_STD - 1e-9..=MAX_STD + 1e-9).contains(&s) {
                return Err(Error::invalid(format!(
                    "standard deviation {s} outside [{MIN_STD}, {MAX_STD}]"
                )));
            }
        }
        Ok(GaussianPsf {
            theta: canonical_angle(theta),
            sigma,
            rho,
        })
    }

    /// Near-Dirac kernel on every channel.
    pub fn dirac() -> Self {
        GaussianPsf {
            theta: 0.0,
            sigma: [MIN_STD; 3],
            rho: [MIN_STD; 3],
        }
    }

    pub fn kernel(&self, channel: usize) -> RasterKernel {
        rasterize(self.theta, self.sigma[channel], self.rho[channel])
            .expect("stds validated at construction")
    }
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues, largest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        (mean + r, mean - r)
    }

    /// Orientation of the major eigenvector, in `[0, π)`.
    pub fn major_angle(&self) -> f64 {
        canonical_angle(0.5 * (2.0 * self.xy).atan2(self.xx - self.yy))
    }
}

/// `Σ = R(θ)ᵀ diag(σ², ρ²) R(θ)` with `R(θ) = [[cos, −sin], [sin, cos]]`.
///
/// The matrix is expressed in `(x, y)` with `y` pointing up, i.e.
/// `y = −row`; its major axis is then `(cos θ, sin θ)` in `(col, row)`.
pub fn covariance(theta: f64, sigma: f64, rho: f64) -> Result<Cov2> {
    if !(sigma > 0.0 && rho > 0.0) {
        return Err(Error::invalid(format!(
            "standard deviations must be positive, got ({sigma}, {rho})"
        )));
    }
    let (s, c) = theta.sin_cos();
    let (s2, r2) = (sigma * sigma, rho * rho);
    Ok(Cov2 {
        xx: c * c * s2 + s * s * r2,
        xy: c * s * (r2 - s2),
        yy: s * s * s2 + c * c * r2,
    })
}

/// Odd-sided square filter, row-major. Taps may be negative for inverse
/// filters; Gaussian kernels are nonnegative with unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterKernel {
    pub side: usize,
    pub taps: Vec<f64>,
}

impl RasterKernel {
    pub fn dirac() -> Self {
        RasterKernel {
            side: 1,
            taps: vec![1.0],
        }
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.taps[row * self.side + col]
    }

    /// First moments `(col, row)` about the center.
    pub fn first_moments(&self) -> (f64, f64) {
        let r = self.radius() as f64;
        let mut mx = 0.0;
        let mut my = 0.0;
        for row in 0..self.side {
            for col in 0..self.side {
                let t = self.at(row, col);
                mx += t * (col as f64 - r);
                my += t * (row as f64 - r);
            }
        }
        (mx, my)
    }

    /// Full (linear) convolution of two kernels.
    pub fn convolve_kernel(&self, other: &RasterKernel) -> RasterKernel {
        let side = self.side + other.side - 1;
        let mut taps = vec![0.0; side * side];
        for r1 in 0..self.side {
            for c1 in 0..self.side {
                let a = self.at(r1, c1);
                if a == 0.0 {
                    continue;
                }
                for r2 in 0..other.side {
                    let row = (r1 + r2) * side + c1;
                    for c2 in 0..other.side {
                        taps[row + c2] += a * other.at(r2, c2);
                    }
                }
            }
        }
        RasterKernel { side, taps }
    }

    /// Zero-pad to a larger odd side, keeping the center.
    pub fn padded(&self, side: usize) -> RasterKernel {
        assert!(side >= self.side && side % 2 == 1);
        let off = (side - self.side) / 2;
        let mut taps = vec![0.0; side * side];
        for r in 0..self.side {
            for c in 0..self.side {
                taps[(r + off) * side + c + off] = self.at(r, c);
            }
        }
        RasterKernel { side, taps }
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            height: self.side,
            width: self.side,
            data: self.taps.iter().map(|&t| t as f32).collect(),
        }
    }
}

/// Point-sample the Gaussian of `(θ, σ, ρ)` on the integer lattice and
/// renormalize to unit sum. Support radius is `ceil(4·max(σ, ρ))`.
pub fn rasterize(theta: f64, sigma: f64, rho: f64) -> Result<RasterKernel> {
    if !(sigma > 0.0 && sigma <= 8.0 && rho > 0.0 && rho <= 8.0) {
        return Err(Error::invalid(format!(
            "standard deviations ({sigma}, {rho}) outside (0, 8]"
        )));
    }
    let cov = covariance(theta, sigma, rho)?;
    let det = cov.det();
    // Σ⁻¹
    let (ixx, ixy, iyy) = (cov.yy / det, -cov.xy / det, cov.xx / det);
    let radius = (4.0 * sigma.max(rho)).ceil() as isize;
    let side = (2 * radius + 1) as usize;
    let mut taps = Vec::with_capacity(side * side);
    for row in -radius..=radius {
        // y axis points up
        let y = -(row as f64);
        for col in -radius..=radius {
            let x = col as f64;
            let q = ixx * x * x + 2.0 * ixy * x * y + iyy * y * y;
            taps.push((-0.5 * q).exp());
        }
    }
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(RasterKernel { side, taps })
}

/// Result of a moment fit. `clamped` is set when a standard deviation fell
/// below the model floor and was raised to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub clamped: bool,
}

/// Second-moment Gaussian fit of a nonnegative tap grid: the covariance of the
/// tap distribution about its centroid, eigendecomposed. `σ ≥ ρ` always.
pub fn fit_gaussian(grid: &Plane) -> Result<GaussianFit> {
    let total: f64 = grid.data.iter().map(|&v| v.max(0.0) as f64).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid("degenerate PSF grid: no positive mass"));
    }
    let mut mc = 0.0;
    let mut mr = 0.0;
    for r in 0..grid.height {
        for c in 0..grid.width {
            let w = grid.get(r, c).max(0.0) as f64 / total;
            mc += w * c as f64;
            mr += w * r as f64;
        }
    }
    let mut cov = Cov2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };
    for r in 0..grid.height {
        for c in 0..grid.width {
            let w = grid.get(r, c).max(0.0) as f64 / total;
            let dc = c as f64 - mc;
            let dr = r as f64 - mr;
            cov.xx += w * dc * dc;
            cov.xy += w * dc * dr;
            cov.yy += w * dr * dr;
        }
    }
    // in (col, row) coordinates the major eigenvector is (cos θ, sin θ)
    let theta = cov.major_angle();
    let (major, minor) = cov.eigenvalues();
    let sigma = major.max(0.0).sqrt();
    let rho = minor.max(0.0).sqrt();
    let clamped = sigma < MIN_STD || rho < MIN_STD;
    Ok(GaussianFit {
        theta,
        sigma: sigma.max(MIN_STD),
        rho: rho.max(MIN_STD),
        clamped,
    })
}

/// Measured per-channel PSF grids, each nonnegative with unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPsf {
    pub channels: Vec<Plane>,
}

impl EmpiricalPsf {
    /// Clip negative taps to zero and normalize each channel to unit sum.
    pub fn new(channels: Vec<Plane>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("empirical PSF without channels"));
        }
        let side = channels[0].height;
        let mut out = Vec::with_capacity(channels.len());
        for mut ch in channels {
            if ch.height != side || ch.width != side || side % 2 == 0 {
                return Err(Error::invalid("PSF channels must be odd-sided squares"));
            }
            for v in &mut ch.data {
                if !v.is_finite() {
                    return Err(Error::invalid("non-finite PSF tap"));
                }
                *v = v.max(0.0);
            }
            let sum: f64 = ch.data.iter().map(|&v| v as f64).sum();
            if sum <= 0.0 {
                return Err(Error::invalid("PSF channel has no positive mass"));
            }
            for v in &mut ch.data {
                *v = (*v as f64 / sum) as f32;
            }
            out.push(ch);
        }
        Ok(EmpiricalPsf { channels: out })
    }

    pub fn side(&self) -> usize {
        self.channels[0].height
    }
}

/// Read a sequence of empirical PSF records (grid points in row-major order).
///
/// Each record is a text line `EPSF <side> <channels>` followed by one
/// single-channel little-endian PFM of `side × side` taps per channel.
pub fn read_epsf(path: impl AsRef<Path>) -> Result<Vec<EmpiricalPsf>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_epsf(&bytes).map_err(|reason| Error::io(path, reason))
}

fn parse_epsf(bytes: &[u8]) -> std::result::Result<Vec<EmpiricalPsf>, String> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos].is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("truncated EPSF header")?;
        let header = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|e| e.to_string())?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "EPSF" {
            return Err(format!("bad EPSF header `{header}`"));
        }
        let side: usize = fields[1].parse().map_err(|_| "bad EPSF side")?;
        let channels: usize = fields[2].parse().map_err(|_| "bad EPSF channel count")?;
        if side == 0 || side % 2 == 0 || channels == 0 {
            return Err(format!("invalid EPSF dimensions {side}x{channels}"));
        }
        pos += nl + 1;
        let mut planes = Vec::with_capacity(channels);
        for _ in 0..channels {
            let (plane, used) = parse_pf(&bytes[pos..], side)?;
            planes.push(plane);
            pos += used;
        }
        out.push(EmpiricalPsf::new(planes).map_err(|e| e.to_string())?);
    }
    if out.is_empty() {
        return Err("empty EPSF file".into());
    }
    Ok(out)
}

fn parse_pf(bytes: &[u8], side: usize) -> std::result::Result<(Plane, usize), String> {
    let mut lines = 0;
    let mut i = 0;
    while lines < 3 {
        let nl = bytes[i..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("truncated PFM header in EPSF")?;
        i += nl + 1;
        lines += 1;
    }
    let header = std::str::from_utf8(&bytes[..i]).map_err(|e| e.to_string())?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 4 || tok[0] != "Pf" {
        return Err(format!("expected single-channel PFM, got `{}`", header.trim()));
    }
    if tok[1] != side.to_string() || tok[2] != side.to_string() {
        return Err(format!("PFM payload is {}x{}, header says {side}", tok[1], tok[2]));
    }
    let scale: f32 = tok[3].parse().map_err(|_| "bad PFM scale")?;
    let n = side * side;
    if bytes.len() < i + 4 * n {
        return Err("truncated EPSF payload".into());
    }
    let mut data = vec![0.0f32; n];
    for (k, b) in bytes[i..i + 4 * n].chunks_exact(4).enumerate() {
        let arr = [b[0], b[1], b[2], b[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(arr)
        } else {
            f32::from_be_bytes(arr)
        };
        let row = side - 1 - k / side;
        data[row * side + k % side] = v;
    }
    Ok((Plane::from_vec(side, side, data).map_err(|e| e.to_string())?, i + 4 * n))
}

pub fn write_epsf(path: impl AsRef<Path>, psfs: &[EmpiricalPsf]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for psf in psfs {
        let side = psf.side();
        let _ = writeln!(out, "EPSF {side} {}", psf.channels.len());
        for ch in &psf.channels {
            let _ = write!(out, "Pf\n{side} {side}\n-1.0\n");
            for row in (0..side).rev() {
                for col in 0..side {
                    out.extend_from_slice(&ch.get(row, col).to_le_bytes());
                }
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Same-size 2D convolution with mirror boundary, accumulated in f64.
pub fn convolve(plane: &Plane, kernel: &RasterKernel) -> Plane {
    let (h, w) = plane.shape();
    let r = kernel.radius();
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let mut padded = vec![0.0f64; ph * pw];
    for pr in 0..ph {
        let sr = mirror_index(pr as isize - r as isize, h);
        for pc in 0..pw {
            let sc = mirror_index(pc as isize - r as isize, w);
            padded[pr * pw + pc] = plane.data[sr * w + sc] as f64;
        }
    }
    let side = kernel.side;
    let mut out = Vec::with_capacity(h * w);
    let mut acc = vec![0.0f64; w];
    for row in 0..h {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for kr in 0..side {
            // true convolution: output(y) = Σ k(d) · in(y − d)
            let src_row = row + (side - 1 - kr);
            let base = &padded[src_row * pw..(src_row + 1) * pw];
            for kc in 0..side {
                let t = kernel.taps[kr * side + kc];
                if t == 0.0 {
                    continue;
                }
                let off = side - 1 - kc;
                for (a, &v) in acc.iter_mut().zip(&base[off..off + w]) {
                    *a += t * v;
                }
            }
        }
        out.extend(acc.iter().map(|&a| a as f32));
    }
    Plane {
        height: h,
        width: w,
        data: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_isotropic() {
        let c = covariance(0.3, 1.5, 1.5).unwrap();
        assert!((c.xx - 2.25).abs() < 1e-12 && (c.yy - 2.25).abs() < 1e-12);
        assert!(c.xy.abs() < 1e-12);
    }

    #[test]
    fn covariance_axis_swap() {
        let c = covariance(PI / 2.0, 2.0, 1.0).unwrap();
        assert!((c.xx - 1.0).abs() < 1e-12 && (c.yy - 4.0).abs() < 1e-12);
        assert!(c.xy.abs() < 1e-12);
    }

    #[test]
    fn covariance_quarter_turn() {
        let c = covariance(PI / 4.0, 2.0, 1.0).unwrap();
        assert!((c.xx - 2.5).abs() < 1e-12);
        assert!((c.yy - 2.5).abs() < 1e-12);
        assert!((c.xy + 1.5).abs() < 1e-12);
        let (a, b) = c.eigenvalues();
        assert!((a - 4.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_rejects_nonpositive() {
        assert!(covariance(0.0, 0.0, 1.0).is_err());
        assert!(covariance(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn rasterize_near_dirac() {
        let k = rasterize(0.0, 0.2, 0.2).unwrap();
        assert_eq!(k.side, 3);
        assert!(k.at(1, 1) > 0.99);
    }

    #[test]
    fn rasterize_support_and_half_turn_symmetry() {
        let a = rasterize(0.4, 1.3, 0.6).unwrap();
        assert_eq!(a.side, 2 * 6 + 1);
        let b = rasterize(0.4 + PI, 1.3, 0.6).unwrap();
        for (x, y) in a.taps.iter().zip(&b.taps) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rasterized_major_axis_follows_theta() {
        // θ = π/2: strongest spread along rows
        let k = rasterize(PI / 2.0, 2.0, 0.5).unwrap();
        let r = k.radius();
        assert!(k.at(r + 2, r) > k.at(r, r + 2) * 10.0);
        // θ = π/4: spread along (col+1, row+1)
        let k = rasterize(PI / 4.0, 2.0, 0.5).unwrap();
        let r = k.radius();
        assert!(k.at(r + 2, r + 2) > k.at(r + 2, r - 2) * 10.0);
    }

    #[test]
    fn fit_recovers_raster() {
        for &(t, s, r) in &[(0.3, 2.0, 1.0), (2.5, 3.5, 0.5), (1.2, 1.0, 0.7)] {
            let k = rasterize(t, s, r).unwrap();
            let fit = fit_gaussian(&k.to_plane()).unwrap();
            assert!(angle_distance(fit.theta, t) < 0.05, "{fit:?}");
            assert!((fit.sigma - s).abs() < 0.05, "{fit:?}");
            assert!((fit.rho - r).abs() < 0.05, "{fit:?}");
            assert!(!fit.clamped);
        }
    }

    #[test]
    fn fit_isotropic_and_single_tap() {
        let k = rasterize(0.0, 1.5, 1.5).unwrap();
        let fit = fit_gaussian(&k.to_plane()).unwrap();
        assert!((fit.sigma - fit.rho).abs() < 1e-6);

        let mut single = Plane::zeros(5, 5);
        single.set(2, 2, 1.0);
        let fit = fit_gaussian(&single).unwrap();
        assert_eq!((fit.sigma, fit.rho), (MIN_STD, MIN_STD));
        assert!(fit.clamped);

        assert!(fit_gaussian(&Plane::zeros(3, 3)).is_err());
    }

    fn brute_convolve(p: &Plane, k: &RasterKernel) -> Plane {
        let r = k.radius() as isize;
        Plane::from_fn(p.height, p.width, |y, x| {
            let mut acc = 0.0f64;
            for dy in -r..=r {
                for dx in -r..=r {
                    let t = k.at((dy + r) as usize, (dx + r) as usize);
                    acc += t * p.get_mirror(y as isize - dy, x as isize - dx) as f64;
                }
            }
            acc as f32
        })
    }

    #[test]
    fn convolve_matches_brute_force_on_box() {
        let img = Plane::from_fn(32, 32, |r, c| {
            if (8..20).contains(&r) && (10..26).contains(&c) {
                1.0
            } else {
                0.0
            }
        });
        let k = rasterize(0.0, 1.0, 1.0).unwrap();
        assert!(convolve(&img, &k).max_abs_diff(&brute_convolve(&img, &k)) < 1e-6);
        let k = rasterize(0.7, 2.0, 0.5).unwrap();
        assert!(convolve(&img, &k).max_abs_diff(&brute_convolve(&img, &k)) < 1e-6);
    }

    #[test]
    fn convolve_is_true_convolution() {
        // asymmetric kernel: a shift right by one column
        let mut taps = vec![0.0; 9];
        taps[5] = 1.0; // (row 1, col 2): offset +1 in col
        let k = RasterKernel { side: 3, taps };
        let img = Plane::from_fn(4, 6, |_, c| c as f32);
        let out = convolve(&img, &k);
        // out(x) = in(x - 1)
        assert_eq!(out.get(0, 3), 2.0);
    }

    #[test]
    fn convolve_dirac_and_constant() {
        let img = Plane::from_fn(17, 23, |r, c| ((r * 31 + c * 17) % 11) as f32 / 11.0);
        assert!(convolve(&img, &RasterKernel::dirac()).max_abs_diff(&img) < 1e-7);
        let flat = Plane::filled(20, 20, 0.3);
        let k = rasterize(1.0, 3.0, 1.0).unwrap();
        assert!(convolve(&flat, &k).data.iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn epsf_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.epsf");
        let k1 = rasterize(0.5, 2.0, 1.0).unwrap().to_plane();
        let k2 = rasterize(1.5, 1.0, 0.8).unwrap().padded_plane(k1.height);
        let psf = EmpiricalPsf::new(vec![k1.clone(), k2.clone(), k1.clone()]).unwrap();
        write_epsf(&path, &[psf.clone(), psf.clone()]).unwrap();
        let back = read_epsf(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], psf);

        std::fs::write(&path, b"EPSF 3 1\nPf\n3 3\n-1.0\n\x00").unwrap();
        assert!(read_epsf(&path).unwrap_err().is_io());
    }

    impl RasterKernel {
        fn padded_plane(&self, side: usize) -> Plane {
            self.padded(side).to_plane()
        }
    }

    proptest::proptest! {
        #[test]
        fn raster_invariants(t in 0.0f64..6.3, s in 0.2f64..4.0, r in 0.2f64..4.0) {
            let k = rasterize(t, s, r).unwrap();
            proptest::prop_assert!((k.sum() - 1.0).abs() < 1e-8);
            let (mx, my) = k.first_moments();
            proptest::prop_assert!(mx.abs() < 1e-6 && my.abs() < 1e-6);
            let c = covariance(t, s, r).unwrap();
            let (a, b) = c.eigenvalues();
            let (hi, lo) = if s >= r { (s * s, r * r) } else { (r * r, s * s) };
            proptest::prop_assert!((a - hi).abs() < 1e-9 * hi.max(1.0));
            proptest::prop_assert!((b - lo).abs() < 1e-9 * hi.max(1.0));
        }

        #[test]
        fn convolve_linear(a in -1.0f32..1.0, b in -1.0f32..1.0, seed in 0u32..1000) {
            let x = Plane::from_fn(24, 19, |r, c| ((r as u32 * 7 + c as u32 * 3 + seed) % 13) as f32 / 13.0);
            let y = Plane::from_fn(24, 19, |r, c| ((r as u32 * 5 + c as u32 * 11 + seed) % 7) as f32 / 7.0);
            let k = rasterize(seed as f64 * 0.01, 1.4, 0.6).unwrap();
            let mix = Plane::from_fn(24, 19, |r, c| a * x.get(r, c) + b * y.get(r, c));
            let lhs = convolve(&mix, &k);
            let cx = convolve(&x, &k);
            let cy = convolve(&y, &k);
            for i in 0..lhs.len() {
                let rhs = a as f64 * cx.data[i] as f64 + b as f64 * cy.data[i] as f64;
                proptest::prop_assert!((lhs.data[i] as f64 - rhs).abs() < 1e-6);
            }
        }
    }
}
