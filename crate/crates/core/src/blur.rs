//! Blind per-patch Gaussian blur estimation and calibration of the affine
//! gradient-to-blur rule.
//!
//! The estimator normalizes each channel by its 0.1% / 99.9% quantiles, picks
//! the blur orientation as the direction where the green channel's largest
//! directional derivative is smallest, and maps the largest derivative along
//! that direction (and its perpendicular) to a standard deviation through
//! `σ = sqrt(C² / ‖∇n(v)‖∞² − σ_b²)`.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{PlanarImage, Plane};
use crate::psf::{canonical_angle, GaussianPsf, MAX_STD, MIN_STD};

/// Quantile used by the normalization.
pub const QUANTILE: f64 = 0.001;
/// Variance threshold of the normalized channel below which a channel is
/// treated as unblurred.
pub const VARIANCE_FLOOR: f64 = 0.09;
/// Border excluded from the gradient sup-norm.
pub const BORDER: usize = 2;
/// Orientations (degrees) at which directional derivatives are evaluated.
pub const SAMPLED_ANGLES_DEG: [f64; 7] = [0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0];
/// Resolution (degrees) of the interpolated orientation grid.
pub const ANGLE_STEP_DEG: f64 = 6.0;

const FLAT_RANGE: f32 = 1e-6;

/// Coefficients of `σ² = C² / ‖∇‖∞² − σ_b²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineBlurModel {
    pub c: f64,
    pub sigma_b: f64,
}

impl AffineBlurModel {
    /// Demosaicked images before gamma correction.
    pub const LINEAR: AffineBlurModel = AffineBlurModel {
        c: 0.415,
        sigma_b: 0.358,
    };
    /// Gamma-encoded (JPEG) images.
    pub const JPEG: AffineBlurModel = AffineBlurModel {
        c: 0.371,
        sigma_b: 0.453,
    };

    pub fn new(c: f64, sigma_b: f64) -> Result<Self> {
        if !(c > 0.0) || !(sigma_b >= 0.0) || !c.is_finite() || !sigma_b.is_finite() {
            return Err(Error::invalid(format!(
                "affine model needs C > 0 and sigma_b >= 0, got ({c}, {sigma_b})"
            )));
        }
        Ok(AffineBlurModel { c, sigma_b })
    }

    /// Raw model output, `None` when the radicand is not positive.
    pub fn std_from_gradient(&self, grad_norm: f64) -> Option<f64> {
        let radicand = self.c * self.c / (grad_norm * grad_norm) - self.sigma_b * self.sigma_b;
        (radicand > 0.0).then(|| radicand.sqrt())
    }

    /// Parse the two-line `C=<f>` / `sigma_b=<f>` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = None;
        let mut sb = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad model line `{line}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad number in `{line}`")))?;
            match key.trim() {
                "C" => c = Some(value),
                "sigma_b" => sb = Some(value),
                other => return Err(Error::invalid(format!("unknown model key `{other}`"))),
            }
        }
        match (c, sb) {
            (Some(c), Some(sb)) => Self::new(c, sb),
            _ => Err(Error::invalid("model file needs both C and sigma_b")),
        }
    }

    pub fn to_text(&self) -> String {
        format!("C={}\nsigma_b={}\n", self.c, self.sigma_b)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Blur parameters of one patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurEstimate {
    pub theta: f64,
    pub sigma: [f64; 3],
    pub rho: [f64; 3],
    pub flat: [bool; 3],
}

impl BlurEstimate {
    pub fn dirac() -> Self {
        BlurEstimate {
            theta: 0.0,
            sigma: [MIN_STD; 3],
            rho: [MIN_STD; 3],
            flat: [true; 3],
        }
    }

    pub fn psf(&self) -> GaussianPsf {
        GaussianPsf {
            theta: self.theta,
            sigma: self.sigma,
            rho: self.rho,
        }
    }

    /// True when every channel sits at the floor, i.e. deblurring is a no-op.
    pub fn is_dirac(&self, channel: usize) -> bool {
        self.flat[channel] || (self.sigma[channel] <= MIN_STD && self.rho[channel] <= MIN_STD)
    }
}

/// Quantile with nearest-rank interpolation on a sorted copy.
fn quantiles(data: &[f32], q: f64) -> (f32, f32) {
    let mut sorted = data.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let lo = ((q * (n - 1) as f64).round() as usize).min(n - 1);
    let hi = (((1.0 - q) * (n - 1) as f64).round() as usize).min(n - 1);
    (sorted[lo], sorted[hi])
}

/// Quantile normalization `clamp((v − v[q]) / (v[1−q] − v[q]), 0, 1)`.
///
/// Returns the normalized plane and whether the channel is flat (zero
/// dynamic range), in which case the plane is all zeros.
pub fn normalize(channel: &Plane) -> (Plane, bool) {
    if channel.is_empty() {
        return (channel.clone(), true);
    }
    let (lo, hi) = quantiles(&channel.data, QUANTILE);
    let range = hi - lo;
    if !(range >= FLAT_RANGE) {
        return (Plane::zeros(channel.height, channel.width), true);
    }
    let inv = 1.0 / range;
    (channel.map(|v| ((v - lo) * inv).clamp(0.0, 1.0)), false)
}

/// Forward-difference gradients `(∇x, ∇y)`, with the last column/row
/// differenced against its mirror (zero).
pub fn gradients(plane: &Plane) -> (Plane, Plane) {
    let (h, w) = plane.shape();
    let mut gx = Plane::zeros(h, w);
    let mut gy = Plane::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let v = plane.get(r, c);
            if c + 1 < w {
                gx.set(r, c, plane.get(r, c + 1) - v);
            }
            if r + 1 < h {
                gy.set(r, c, plane.get(r + 1, c) - v);
            }
        }
    }
    (gx, gy)
}

/// `max |cos φ ∇x + sin φ ∇y|` over the patch interior.
///
/// Each 2×2 cell contributes its four corner-anchored forward-difference
/// stencils. A single anchoring is biased on hard edges: at one pixel the two
/// differences share a sign, so directions with `cos φ · sin φ < 0` would
/// never see a full unit step.
fn directional_sup(gx: &Plane, gy: &Plane, phi: f64) -> f64 {
    let (h, w) = gx.shape();
    let (s, c) = phi.sin_cos();
    let (s, c) = (s as f32, c as f32);
    let border = if h > 2 * BORDER + 2 && w > 2 * BORDER + 2 {
        BORDER
    } else {
        0
    };
    if h < 2 || w < 2 {
        return 0.0;
    }
    let (r_end, c_end) = ((h - border).min(h - 1), (w - border).min(w - 1));
    let mut best = 0.0f32;
    for r in border..r_end {
        let x0 = &gx.data[r * w..(r + 1) * w];
        let x1 = &gx.data[(r + 1) * w..(r + 2) * w];
        let y0 = &gy.data[r * w..(r + 1) * w];
        for col in border..c_end {
            let (ya, yb) = (s * y0[col], s * y0[col + 1]);
            let (xa, xb) = (c * x0[col], c * x1[col]);
            let m = (xa + ya)
                .abs()
                .max((xa + yb).abs())
                .max((xb + ya).abs())
                .max((xb + yb).abs());
            best = best.max(m);
        }
    }
    best as f64
}

/// Gradient sup-norm of a normalized channel along `phi`.
pub fn directional_norm(normalized: &Plane, phi: f64) -> f64 {
    let (gx, gy) = gradients(normalized);
    directional_sup(&gx, &gy, phi)
}

/// Periodic cubic spline through `values` sampled uniformly over one period
/// (the closing sample equal to the first is not included), evaluated at `t`
/// measured in sample units.
fn periodic_spline(values: &[f64], t: f64) -> f64 {
    let n = values.len();
    // second derivatives from the cyclic tridiagonal system
    // m[i-1] + 4 m[i] + m[i+1] = 6 (y[i-1] − 2 y[i] + y[i+1])
    let mut a = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        a[i][prev] += 1.0;
        a[i][i] += 4.0;
        a[i][next] += 1.0;
        rhs[i] = 6.0 * (values[prev] - 2.0 * values[i] + values[next]);
    }
    let m = solve_dense(a, rhs);
    let tt = t.rem_euclid(n as f64);
    let i = (tt.floor() as usize).min(n - 1);
    let u = tt - i as f64;
    let j = (i + 1) % n;
    let (y0, y1, m0, m1) = (values[i], values[j], m[i], m[j]);
    (1.0 - u) * y0 + u * y1 + ((1.0 - u).powi(3) - (1.0 - u)) * m0 / 6.0 + (u.powi(3) - u) * m1 / 6.0
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Directional sup-norms at the sampled angles and their interpolation on the
/// 6° grid over `[0°, 180°]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionScores {
    pub sampled: Vec<f64>,
    pub interpolated: Vec<f64>,
}

pub fn direction_scores(normalized_green: &Plane) -> DirectionScores {
    let (gx, gy) = gradients(normalized_green);
    let sampled: Vec<f64> = SAMPLED_ANGLES_DEG
        .iter()
        .map(|d| directional_sup(&gx, &gy, d.to_radians()))
        .collect();
    // the 180° sample repeats 0° (∇_{φ+π} = −∇_φ)
    let period = &sampled[..sampled.len() - 1];
    let step = SAMPLED_ANGLES_DEG[1];
    let count = (180.0 / ANGLE_STEP_DEG).round() as usize + 1;
    let interpolated = (0..count)
        .map(|k| periodic_spline(period, k as f64 * ANGLE_STEP_DEG / step))
        .collect();
    DirectionScores {
        sampled,
        interpolated,
    }
}

/// Orientation of strongest blur of a normalized, non-flat green channel.
pub fn estimate_direction(normalized_green: &Plane, flat: bool) -> Result<f64> {
    if flat {
        return Err(Error::FlatPatch);
    }
    let scores = direction_scores(normalized_green);
    let mut best = 0;
    for (k, &s) in scores.interpolated.iter().enumerate() {
        if s < scores.interpolated[best] {
            best = k;
        }
    }
    Ok(canonical_angle((best as f64 * ANGLE_STEP_DEG).to_radians()))
}

/// Clamp rule for one standard deviation.
fn bounded_std(model: &AffineBlurModel, grad_norm: f64, variance: f64) -> f64 {
    match model.std_from_gradient(grad_norm) {
        Some(s) if s <= MAX_STD && variance >= VARIANCE_FLOOR => s.max(MIN_STD),
        _ => MIN_STD,
    }
}

/// Standard deviations along `theta` and `theta + π/2` of a normalized channel.
pub fn estimate_sigmas(normalized: &Plane, theta: f64, model: &AffineBlurModel) -> (f64, f64) {
    let (gx, gy) = gradients(normalized);
    let variance = normalized.variance();
    let sigma = bounded_std(model, directional_sup(&gx, &gy, theta), variance);
    let rho = bounded_std(model, directional_sup(&gx, &gy, theta + PI / 2.0), variance);
    (sigma, rho)
}

/// Blur estimate of a 3-channel patch; the orientation comes from green.
pub fn estimate(patch: &PlanarImage, model: &AffineBlurModel) -> Result<BlurEstimate> {
    if patch.channels() != 3 {
        return Err(Error::invalid(format!(
            "blur estimation needs 3 channels, got {}",
            patch.channels()
        )));
    }
    let normalized: Vec<(Plane, bool)> = (0..3).map(|c| normalize(&patch.plane(c))).collect();
    let theta = match estimate_direction(&normalized[1].0, normalized[1].1) {
        Ok(t) => t,
        Err(Error::FlatPatch) => {
            if normalized.iter().all(|(_, flat)| *flat) {
                return Ok(BlurEstimate::dirac());
            }
            0.0
        }
        Err(e) => return Err(e),
    };
    let mut est = BlurEstimate {
        theta,
        sigma: [MIN_STD; 3],
        rho: [MIN_STD; 3],
        flat: [false; 3],
    };
    for (c, (plane, flat)) in normalized.iter().enumerate() {
        est.flat[c] = *flat;
        if !flat {
            let (s, r) = estimate_sigmas(plane, theta, model);
            est.sigma[c] = s;
            est.rho[c] = r;
        }
    }
    Ok(est)
}

/// One calibration observation: a gradient sup-norm and the true standard
/// deviation along the same direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub grad_norm: f64,
    pub true_std: f64,
}

/// Observations along `theta` and `theta + π/2` of a blurred channel.
pub fn calibration_samples(
    channel: &Plane,
    theta: f64,
    sigma: f64,
    rho: f64,
) -> Vec<CalibrationSample> {
    let (n, flat) = normalize(channel);
    if flat || n.variance() < VARIANCE_FLOOR {
        return Vec::new();
    }
    let (gx, gy) = gradients(&n);
    [(theta, sigma), (theta + PI / 2.0, rho)]
        .iter()
        .map(|&(phi, s)| CalibrationSample {
            grad_norm: directional_sup(&gx, &gy, phi),
            true_std: s,
        })
        .filter(|s| s.grad_norm > 0.0)
        .collect()
}

/// Least-absolute-deviation fit of `σ² ≈ C²·t − σ_b²`, `t = 1/‖∇‖∞²`, by
/// iteratively reweighted least squares.
pub fn calibrate(samples: &[CalibrationSample]) -> Result<AffineBlurModel> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.grad_norm > 0.0 && s.grad_norm.is_finite())
        .map(|s| (1.0 / (s.grad_norm * s.grad_norm), s.true_std * s.true_std))
        .collect();
    let mut levels: Vec<f64> = pts.iter().map(|p| p.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    if levels.len() < 2 {
        return Err(Error::Calibration(format!(
            "need at least 2 distinct gradient levels, got {}",
            levels.len()
        )));
    }

    let (mut slope, mut intercept) = weighted_line(&pts, &vec![1.0; pts.len()]);
    for _ in 0..200 {
        let weights: Vec<f64> = pts
            .iter()
            .map(|&(t, y)| 1.0 / (y - (slope * t + intercept)).abs().max(1e-9))
            .collect();
        let (s, i) = weighted_line(&pts, &weights);
        let done = (s - slope).abs() <= 1e-12 * s.abs().max(1.0)
            && (i - intercept).abs() <= 1e-12 * i.abs().max(1.0);
        slope = s;
        intercept = i;
        if done {
            break;
        }
    }
    // σ² = C² t − σ_b² requires a nonpositive intercept
    if intercept > 0.0 {
        intercept = 0.0;
        slope = weighted_median(pts.iter().map(|&(t, y)| (y / t, t)).collect());
    }
    if !(slope > 0.0) {
        return Err(Error::Calibration(format!("nonpositive slope {slope}")));
    }
    AffineBlurModel::new(slope.sqrt(), (-intercept).sqrt())
}

fn weighted_line(pts: &[(f64, f64)], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = pts.iter().zip(w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts
        .iter()
        .zip(w)
        .map(|(p, w)| w * (p.0 - mx) * (p.1 - my))
        .sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Minimizer of `Σ w_i |r − r_i|` for `(r_i, w_i)` pairs.
fn weighted_median(mut pairs: Vec<(f64, f64)>) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for &(v, w) in &pairs {
        acc += w;
        if acc >= total / 2.0 {
            return v;
        }
    }
    pairs.last().map_or(0.0, |p| p.0)
}

/// One calibration image with the true kernel of each channel as
/// `(θ, σ, ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub name: String,
    pub image: PlanarImage,
    pub kernels: Vec<(f64, f64, f64)>,
}

/// Parse a sidecar: one `theta sigma rho` line per channel.
pub fn parse_sidecar(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::invalid(format!("bad sidecar line '{line}'")))?;
            match v[..] {
                [t, s, r] if v.iter().all(|x| x.is_finite()) && s > 0.0 && r > 0.0 => Ok((t, s, r)),
                _ => Err(Error::invalid(format!("sidecar line '{line}' needs theta sigma rho"))),
            }
        })
        .collect()
}

pub fn format_sidecar(kernels: &[(f64, f64, f64)]) -> String {
    kernels
        .iter()
        .map(|(t, s, r)| format!("{t} {s} {r}\n"))
        .collect()
}

/// Write `<name>.pfm` and `<name>.txt` into `dir`.
pub fn write_corpus_entry(dir: impl AsRef<Path>, entry: &CorpusEntry) -> Result<()> {
    let dir = dir.as_ref();
    crate::image::write_pfm(&entry.image, dir.join(format!("{}.pfm", entry.name)))?;
    let side = dir.join(format!("{}.txt", entry.name));
    std::fs::write(&side, format_sidecar(&entry.kernels)).map_err(|e| Error::io(side, e))
}

/// Load every `*.pfm` with a sidecar `*.txt` from `dir`, sorted by name.
pub fn read_corpus(dir: impl AsRef<Path>) -> Result<Vec<CorpusEntry>> {
    let dir = dir.as_ref();
    let mut stems: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let p = e.path();
            (p.extension()? == "pfm").then(|| p.file_stem()?.to_str().map(String::from))?
        })
        .collect();
    stems.sort();
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let side = dir.join(format!("{stem}.txt"));
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let kernels = parse_sidecar(&text).map_err(|e| Error::io(&side, e))?;
        let image = crate::image::read_pfm(dir.join(format!("{stem}.pfm")))?;
        if kernels.len() != image.channels() {
            return Err(Error::io(
                &side,
                format!("{} kernel lines for {} channels", kernels.len(), image.channels()),
            ));
        }
        out.push(CorpusEntry {
            name: stem,
            image,
            kernels,
        });
    }
    if out.is_empty() {
        return Err(Error::Calibration(format!(
            "no image/sidecar pairs in {}",
            dir.display()
        )));
    }
    Ok(out)
}

/// Calibration observations from every channel of every entry.
pub fn corpus_samples(entries: &[CorpusEntry]) -> Vec<CalibrationSample> {
    entries
        .iter()
        .flat_map(|e| {
            e.kernels.iter().enumerate().flat_map(|(c, &(t, s, r))| {
                calibration_samples(&e.image.plane(c), t, s, r)
            })
        })
        .collect()
}
