//! Planar floating-point images, gamma transforms and patch tiling.

mod io;
mod patch;

pub use io::{read_image, read_pfm, write_image, write_image_with_depth, write_pfm, BitDepth};
pub use patch::{fuse, hamming, tile, PatchGrid};

use crate::error::{Error, Result};

/// Default display gamma.
pub const GAMMA: f32 = 2.2;

/// Transfer curve the samples are encoded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colorspace {
    #[default]
    Linear,
    Gamma22,
}

/// A single channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Plane {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "plane {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Plane {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Plane {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    /// Sample with mirror (half-sample symmetric) extension outside the plane.
    #[inline]
    pub fn get_mirror(&self, row: isize, col: isize) -> f32 {
        let r = mirror_index(row, self.height);
        let c = mirror_index(col, self.width);
        self.data[r * self.width + c]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Plane {
        assert!(row + height <= self.height && col + width <= self.width);
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Plane {
            height,
            width,
            data,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data
            .iter()
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / self.data.len().max(1) as f64
    }

    pub fn max_abs_diff(&self, other: &Plane) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Mirror index with the edge sample repeated (`d c b a | a b c d | d c b a`).
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

/// H×W×C image, channel-planar and row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    pub colorspace: Colorspace,
}

impl PlanarImage {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        PlanarImage {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            colorspace: Colorspace::Linear,
        }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "image {height}x{width}x{channels} needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {bad}")));
        }
        Ok(PlanarImage {
            height,
            width,
            channels,
            data,
            colorspace: Colorspace::Linear,
        })
    }

    pub fn from_planes(planes: &[Plane]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::invalid("no planes given"))?;
        if planes.iter().any(|p| p.shape() != first.shape()) {
            return Err(Error::invalid("planes differ in shape"));
        }
        let mut data = Vec::with_capacity(first.len() * planes.len());
        for p in planes {
            data.extend_from_slice(&p.data);
        }
        Self::from_vec(first.height, first.width, planes.len(), data)
    }

    pub fn with_colorspace(mut self, colorspace: Colorspace) -> Self {
        self.colorspace = colorspace;
        self
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn plane(&self, c: usize) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn planes(&self) -> Vec<Plane> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    pub fn set_plane(&mut self, c: usize, plane: &Plane) {
        assert_eq!(plane.shape(), (self.height, self.width));
        self.channel_mut(c).copy_from_slice(&plane.data);
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, c: usize) -> f32 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> PlanarImage {
        let planes: Vec<Plane> = (0..self.channels)
            .map(|c| self.plane_crop(c, row, col, height, width))
            .collect();
        let mut out = PlanarImage::from_planes(&planes).expect("crop of a valid image");
        out.colorspace = self.colorspace;
        out
    }

    fn plane_crop(&self, c: usize, row: usize, col: usize, height: usize, width: usize) -> Plane {
        assert!(row + height <= self.height && col + width <= self.width);
        let src = self.channel(c);
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&src[start..start + width]);
        }
        Plane {
            height,
            width,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> PlanarImage {
        PlanarImage {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn max_abs_diff(&self, other: &PlanarImage) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// `x ↦ x^exponent` on clamped samples; the result is tagged linear.
pub fn gamma_decode(image: &PlanarImage, exponent: f32) -> PlanarImage {
    let mut out = image.map(|v| v.clamp(0.0, 1.0).powf(exponent));
    out.colorspace = Colorspace::Linear;
    out
}

/// `x ↦ x^(1/exponent)` on clamped samples; the result is tagged gamma-encoded.
pub fn gamma_encode(image: &PlanarImage, exponent: f32) -> PlanarImage {
    let inv = 1.0 / exponent;
    let mut out = image.map(|v| v.clamp(0.0, 1.0).powf(inv));
    out.colorspace = Colorspace::Gamma22;
    out
}
