//! Patch decomposition and Hamming-weighted overlap-add fusion.

use super::PlanarImage;
use crate::error::{Error, Result};

/// Tiling of an image into (possibly overlapping) patches.
///
/// Patches never extend past the image: the last row and column of origins is
/// clamped so that the final patch ends exactly on the border.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub patch_height: usize,
    pub patch_width: usize,
    pub overlap: f32,
    /// Patch anchors `(row, col)` in row-major order.
    pub origins: Vec<(usize, usize)>,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch_size: usize, overlap: f32) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("cannot tile an empty image"));
        }
        if patch_size < 32 {
            return Err(Error::invalid(format!(
                "patch size {patch_size} below the minimum of 32"
            )));
        }
        if !(0.0..0.95).contains(&overlap) {
            return Err(Error::invalid(format!("overlap {overlap} outside [0, 0.95)")));
        }
        if patch_size > height.min(width) {
            return Ok(PatchGrid {
                height,
                width,
                patch_height: height,
                patch_width: width,
                overlap,
                origins: vec![(0, 0)],
            });
        }
        let stride = ((patch_size as f32 * (1.0 - overlap)).round() as usize).max(1);
        let rows = axis_origins(height, patch_size, stride);
        let cols = axis_origins(width, patch_size, stride);
        let origins = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .collect();
        Ok(PatchGrid {
            height,
            width,
            patch_height: patch_size,
            patch_width: patch_size,
            overlap,
            origins,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Extract every patch in grid order.
    pub fn extract(&self, image: &PlanarImage) -> Vec<PlanarImage> {
        self.origins
            .iter()
            .map(|&(r, c)| image.crop(r, c, self.patch_height, self.patch_width))
            .collect()
    }
}

fn axis_origins(n: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut o = 0;
    while o + patch < n {
        o = (o + stride).min(n - patch);
        out.push(o);
    }
    out
}

pub fn tile(image: &PlanarImage, patch_size: usize, overlap: f32) -> Result<PatchGrid> {
    PatchGrid::new(image.height(), image.width(), patch_size, overlap)
}

/// Symmetric Hamming window `0.54 − 0.46·cos(2πn/(N−1))`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
        })
        .collect()
}

/// Overlap-add the patches with separable Hamming weights, normalized by the
/// accumulated weight at each pixel. Accumulation runs in grid order.
pub fn fuse(patches: &[PlanarImage], grid: &PatchGrid) -> Result<PlanarImage> {
    if patches.len() != grid.origins.len() {
        return Err(Error::invalid(format!(
            "{} patches for a grid of {}",
            patches.len(),
            grid.origins.len()
        )));
    }
    let channels = patches[0].channels();
    for (i, p) in patches.iter().enumerate() {
        if p.height() != grid.patch_height
            || p.width() != grid.patch_width
            || p.channels() != channels
        {
            return Err(Error::invalid(format!(
                "patch {i} is {}x{}x{}, grid expects {}x{}x{channels}",
                p.height(),
                p.width(),
                p.channels(),
                grid.patch_height,
                grid.patch_width
            )));
        }
    }
    let (h, w) = (grid.height, grid.width);
    let wy = hamming(grid.patch_height);
    let wx = hamming(grid.patch_width);
    let mut acc = vec![0.0f64; h * w * channels];
    let mut norm = vec![0.0f64; h * w];
    for (patch, &(r0, c0)) in patches.iter().zip(&grid.origins) {
        for (pr, &wr) in wy.iter().enumerate() {
            let row = (r0 + pr) * w + c0;
            for (pc, &wc) in wx.iter().enumerate() {
                norm[row + pc] += wr * wc;
            }
        }
        for c in 0..channels {
            let src = patch.channel(c);
            let dst = &mut acc[c * h * w..(c + 1) * h * w];
            for (pr, &wr) in wy.iter().enumerate() {
                let row = (r0 + pr) * w + c0;
                let prow = &src[pr * grid.patch_width..(pr + 1) * grid.patch_width];
                for (pc, (&wc, &v)) in wx.iter().zip(prow).enumerate() {
                    dst[row + pc] += wr * wc * v as f64;
                }
            }
        }
    }
    let data: Vec<f32> = acc
        .iter()
        .enumerate()
        .map(|(i, &v)| (v / norm[i % (h * w)]) as f32)
        .collect();
    let mut out = PlanarImage::from_vec(h, w, channels, data)?;
    out.colorspace = patches[0].colorspace;
    Ok(out)
}
