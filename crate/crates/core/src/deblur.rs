//! Approximate-inverse deconvolution: each channel is convolved with a
//! low-degree polynomial `p(k)` of its own blur kernel.

use std::fmt;
use std::str::FromStr;

use crate::blur::BlurEstimate;
use crate::error::{Error, Result};
use crate::image::{PlanarImage, Plane};
use crate::psf::{convolve, rasterize, RasterKernel};

/// `p(k) = a₀·δ + a₁·k + a₂·k∗k (+ a₃·k∗k∗k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InversePolynomial {
    coefficients: Vec<f64>,
}

impl Default for InversePolynomial {
    /// `k∗k − 3k + 3δ`: the degree-2 truncation of `1/x` about 1, with unit
    /// DC gain.
    fn default() -> Self {
        InversePolynomial {
            coefficients: vec![3.0, -3.0, 1.0],
        }
    }
}

impl InversePolynomial {
    /// Coefficients in increasing degree, at most degree 3.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() > 4 {
            return Err(Error::invalid(format!(
                "inverse polynomial needs 1 to 4 coefficients, got {}",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("non-finite polynomial coefficient"));
        }
        Ok(InversePolynomial { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Response to a constant signal, `Σ aⱼ`.
    pub fn dc_gain(&self) -> f64 {
        self.coefficients.iter().sum()
    }
}

impl FromStr for InversePolynomial {
    type Err = Error;

    /// Comma-separated `a₀,a₁,a₂[,a₃]`.
    fn from_str(s: &str) -> Result<Self> {
        let coefficients = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad polynomial coefficient {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        InversePolynomial::new(coefficients)
    }
}

impl fmt::Display for InversePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coefficients.iter().map(|a| a.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// `Σ aⱼ k^{∗j}` on the support of the highest power.
pub fn build_inverse(kernel: &RasterKernel, poly: &InversePolynomial) -> RasterKernel {
    let mut powers = vec![RasterKernel::dirac()];
    for j in 1..=poly.degree() {
        let next = powers[j - 1].convolve_kernel(kernel);
        powers.push(next);
    }
    let side = powers.last().map_or(1, |k| k.side);
    let mut taps = vec![0.0; side * side];
    for (a, k) in poly.coefficients.iter().zip(&powers) {
        if *a == 0.0 {
            continue;
        }
        for (t, v) in taps.iter_mut().zip(&k.padded(side).taps) {
            *t += a * v;
        }
    }
    RasterKernel { side, taps }
}

/// Inverse filter for one channel of an estimate, or `None` when the channel
/// passes through unchanged.
pub fn channel_filter(
    est: &BlurEstimate,
    channel: usize,
    poly: &InversePolynomial,
) -> Result<Option<RasterKernel>> {
    if est.is_dirac(channel) {
        return Ok(None);
    }
    let k = rasterize(est.theta, est.sigma[channel], est.rho[channel])?;
    Ok(Some(build_inverse(&k, poly)))
}

/// Deconvolve a single plane with a precomputed filter, without clamping.
pub fn apply_inverse(plane: &Plane, filter: &RasterKernel) -> Plane {
    convolve(plane, filter)
}

/// Deblur every channel with its own inverse filter and clamp to `[0, 1]`.
/// Flat and floor-width channels are copied through untouched.
pub fn deblur_patch(
    patch: &PlanarImage,
    est: &BlurEstimate,
    poly: &InversePolynomial,
) -> Result<PlanarImage> {
    if patch.channels() != 3 {
        return Err(Error::invalid(format!(
            "deblurring needs 3 channels, got {}",
            patch.channels()
        )));
    }
    let mut out = patch.clone();
    for c in 0..3 {
        if let Some(filter) = channel_filter(est, c, poly)? {
            let mut z = apply_inverse(&patch.plane(c), &filter);
            z.clamp01();
            out.set_plane(c, &z);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::MIN_STD;

    fn step(h: usize, w: usize) -> Plane {
        Plane::from_fn(h, w, |_, c| if c < w / 2 { 0.1 } else { 0.9 })
    }

    #[test]
    fn default_has_unit_dc_gain() {
        let p = InversePolynomial::default();
        assert_eq!(p.dc_gain(), 1.0);
        let k = rasterize(0.7, 2.3, 1.1).unwrap();
        assert!((build_inverse(&k, &p).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn printed_variants_have_other_gains() {
        let a: InversePolynomial = "3,-1,-3".parse().unwrap();
        let b: InversePolynomial = "3,-4,-3".parse().unwrap();
        assert_eq!(a.dc_gain(), -1.0);
        assert_eq!(b.dc_gain(), -4.0);
        let k = rasterize(0.0, 1.0, 1.0).unwrap();
        assert!((build_inverse(&k, &b).sum() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn dirac_is_identity() {
        let f = build_inverse(&RasterKernel::dirac(), &InversePolynomial::default());
        assert_eq!(f, RasterKernel::dirac());
    }

    #[test]
    fn support_grows_with_degree() {
        let k = rasterize(0.0, 1.0, 1.0).unwrap();
        assert_eq!(k.side, 9);
        let f = build_inverse(&k, &InversePolynomial::default());
        assert_eq!(f.side, 17);
        let cubic = InversePolynomial::new(vec![4.0, -6.0, 4.0, -1.0]).unwrap();
        assert_eq!(build_inverse(&k, &cubic).side, 25);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("3,x,1".parse::<InversePolynomial>().is_err());
        assert!("1,2,3,4,5".parse::<InversePolynomial>().is_err());
        assert_eq!(
            "3, -3, 1".parse::<InversePolynomial>().unwrap(),
            InversePolynomial::default()
        );
        assert_eq!(InversePolynomial::default().to_string(), "3,-3,1");
    }

    #[test]
    fn step_edge_steepens() {
        let k = rasterize(0.0, 1.5, 1.5).unwrap();
        let blurry = convolve(&step(48, 64), &k);
        let f = build_inverse(&k, &InversePolynomial::default());
        let sharp = apply_inverse(&blurry, &f);
        let slope = |p: &Plane| p.get(24, 32) - p.get(24, 31);
        assert!(slope(&sharp) > slope(&blurry) + 0.05);
    }

    #[test]
    fn dirac_estimate_passes_through() {
        let img = crate::scene::color_scene(40, 48, 1);
        let out = deblur_patch(&img, &BlurEstimate::dirac(), &InversePolynomial::default()).unwrap();
        assert_eq!(out, img);
        let floor = BlurEstimate {
            theta: 0.4,
            sigma: [MIN_STD; 3],
            rho: [MIN_STD; 3],
            flat: [false; 3],
        };
        let out = deblur_patch(&img, &floor, &InversePolynomial::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_patch_is_preserved() {
        let img = PlanarImage::from_vec(50, 50, 3, vec![0.37; 7500]).unwrap();
        let est = BlurEstimate {
            theta: 1.0,
            sigma: [2.5, 1.0, 3.0],
            rho: [0.5, 0.7, 1.0],
            flat: [false; 3],
        };
        let out = deblur_patch(&img, &est, &InversePolynomial::default()).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn per_channel_filters() {
        let base = crate::scene::chart(64, 2);
        let img = PlanarImage::from_planes(&[base.clone(), base.clone(), base]).unwrap();
        let est = BlurEstimate {
            theta: 0.0,
            sigma: [2.0, MIN_STD, 1.0],
            rho: [2.0, MIN_STD, 1.0],
            flat: [false; 3],
        };
        let out = deblur_patch(&img, &est, &InversePolynomial::default()).unwrap();
        assert_eq!(out.channel(1), img.channel(1));
        assert_ne!(out.channel(0), out.channel(2));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn linear_before_clamp(theta in 0.0f64..3.1, s in 0.3f64..2.5, r in 0.3f64..2.5,
                               a in -3.0f32..3.0, seed in 0u64..100) {
            let x = crate::scene::chart(32, seed);
            let f = build_inverse(&rasterize(theta, s, r).unwrap(), &InversePolynomial::default());
            let lhs = apply_inverse(&x.map(|v| a * v), &f);
            let rhs = apply_inverse(&x, &f).map(|v| a * v);
            proptest::prop_assert!(lhs.max_abs_diff(&rhs) < 1e-5);
            proptest::prop_assert_eq!(lhs.shape(), x.shape());
        }
    }
}
