//! Residual CNN that realigns the red and blue planes to green.
//!
//! The network is a stack of stride-1 3×3 convolutions with skip additions
//! (see [`weights::GRAPH`]). Each convolution runs as nine shifted matrix
//! products over a reflect-padded activation buffer, so no im2col copy is
//! needed. Batch norm is folded into the convolutions at load time.

pub mod weights;

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{PlanarImage, Plane};
pub use weights::{FringeNetWeights, Node, Tensor, GRAPH};

/// Weights shipped with the library, trained on the synthetic degradation
/// model.
const BUILTIN: &[u8] = include_bytes!("../../assets/fringe_net.ftbw");

/// Smallest side accepted by [`FringeNet::forward`].
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Clone)]
struct FoldedConv {
    cin: usize,
    cout: usize,
    /// `[cout][cin][3][3]`.
    w: Vec<f32>,
    b: Vec<f32>,
    relu: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Conv(FoldedConv),
    Add(usize),
}

/// Inference-ready network.
#[derive(Debug, Clone)]
pub struct FringeNet {
    ops: Vec<Op>,
}

impl FringeNet {
    pub fn new(weights: &FringeNetWeights) -> Self {
        let get = |name: String| &weights.get(&name).expect("validated weights").data;
        let ops = GRAPH
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let tag = i + 1;
                match *node {
                    Node::Add(src) => Op::Add(src),
                    Node::Conv { input, output } | Node::ConvBnRelu { input, output } => {
                        let mut w = get(format!("conv{tag}.w")).clone();
                        let mut b = get(format!("conv{tag}.b")).clone();
                        let relu = matches!(node, Node::ConvBnRelu { .. });
                        if relu {
                            let gamma = get(format!("bn{tag}.gamma"));
                            let beta = get(format!("bn{tag}.beta"));
                            let mean = get(format!("bn{tag}.mean"));
                            let var = get(format!("bn{tag}.var"));
                            let eps = weights.bn_eps(tag);
                            for o in 0..output {
                                let scale = gamma[o] / (var[o] + eps).sqrt();
                                for v in &mut w[o * input * 9..(o + 1) * input * 9] {
                                    *v *= scale;
                                }
                                b[o] = (b[o] - mean[o]) * scale + beta[o];
                            }
                        }
                        Op::Conv(FoldedConv {
                            cin: input,
                            cout: output,
                            w,
                            b,
                            relu,
                        })
                    }
                }
            })
            .collect();
        FringeNet { ops }
    }

    /// The library's trained weights.
    pub fn builtin() -> &'static FringeNet {
        static NET: OnceLock<FringeNet> = OnceLock::new();
        NET.get_or_init(|| {
            let w = FringeNetWeights::from_bytes(BUILTIN).expect("embedded weights are valid");
            FringeNet::new(&w)
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(FringeNet::new(&FringeNetWeights::load(path)?))
    }

    /// Residual `φ(z_c, z_G)` of the same size as the inputs.
    pub fn forward(&self, z_c: &Plane, z_g: &Plane) -> Result<Plane> {
        if z_c.shape() != z_g.shape() {
            return Err(Error::invalid(format!(
                "fringe input shapes differ: {:?} vs {:?}",
                z_c.shape(),
                z_g.shape()
            )));
        }
        let (h, w) = z_c.shape();
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(Error::invalid(format!(
                "fringe input {h}x{w} below the {MIN_SIDE}x{MIN_SIDE} minimum"
            )));
        }
        let mut x = Padded::from_planes(&[z_c, z_g]);
        let mut outputs: Vec<Option<Padded>> = Vec::with_capacity(self.ops.len());
        for (i, op) in self.ops.iter().enumerate() {
            x = match op {
                Op::Conv(conv) => conv.apply(&x),
                Op::Add(src) => {
                    let skip = outputs[src - 1].as_ref().expect("skip source kept");
                    x.add_assign(skip);
                    x
                }
            };
            // only the sources of later skips need to be kept
            let keep = self.ops[i + 1..]
                .iter()
                .any(|o| matches!(o, Op::Add(s) if *s == i + 1));
            outputs.push(keep.then(|| x.clone()));
        }
        Ok(x.interior(0))
    }

    /// `clamp(z_c − φ(z_c, z_G), 0, 1)`.
    pub fn correct_channel(&self, z_c: &Plane, z_g: &Plane) -> Result<Plane> {
        let phi = self.forward(z_c, z_g)?;
        let mut out = z_c.clone();
        for (o, p) in out.data.iter_mut().zip(&phi.data) {
            *o = (*o - p).clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// Correct red and blue against green with the same weights; green is
    /// copied through.
    pub fn correct(&self, image: &PlanarImage) -> Result<PlanarImage> {
        if image.channels() != 3 {
            return Err(Error::invalid(format!(
                "fringe correction needs 3 channels, got {}",
                image.channels()
            )));
        }
        let g = image.plane(1);
        let mut out = image.clone();
        for c in [0, 2] {
            out.set_plane(c, &self.correct_channel(&image.plane(c), &g)?);
        }
        Ok(out)
    }
}

/// Channel-major activations with a one-pixel reflect border and two slack
/// values at the end so shifted reads stay in bounds.
#[derive(Debug, Clone)]
struct Padded {
    channels: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Padded {
    fn zeros(channels: usize, h: usize, w: usize) -> Self {
        Padded {
            channels,
            h,
            w,
            data: vec![0.0; channels * (h + 2) * (w + 2) + 2],
        }
    }

    fn plane_len(&self) -> usize {
        (self.h + 2) * (self.w + 2)
    }

    fn from_planes(planes: &[&Plane]) -> Self {
        let (h, w) = planes[0].shape();
        let mut p = Padded::zeros(planes.len(), h, w);
        let wp = w + 2;
        let len = p.plane_len();
        for (c, plane) in planes.iter().enumerate() {
            for r in 0..h {
                let dst = c * len + (r + 1) * wp + 1;
                p.data[dst..dst + w].copy_from_slice(&plane.data[r * w..(r + 1) * w]);
            }
            p.reflect(c);
        }
        p
    }

    /// Fill the border of channel `c` by whole-sample reflection.
    fn reflect(&mut self, c: usize) {
        let (h, w) = (self.h, self.w);
        let wp = w + 2;
        let len = self.plane_len();
        let d = &mut self.data[c * len..(c + 1) * len];
        for r in 1..=h {
            d[r * wp] = d[r * wp + 2];
            d[r * wp + w + 1] = d[r * wp + w - 1];
        }
        d.copy_within(2 * wp..3 * wp, 0);
        d.copy_within((h - 1) * wp..h * wp, (h + 1) * wp);
    }

    fn add_assign(&mut self, other: &Padded) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn interior(&self, c: usize) -> Plane {
        let (h, w) = (self.h, self.w);
        let wp = w + 2;
        let base = c * self.plane_len();
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            let s = base + (r + 1) * wp + 1;
            data.extend_from_slice(&self.data[s..s + w]);
        }
        Plane {
            height: h,
            width: w,
            data,
        }
    }
}

impl FoldedConv {
    fn apply(&self, x: &Padded) -> Padded {
        debug_assert_eq!(x.channels, self.cin);
        let (h, w) = (x.h, x.w);
        let wp = w + 2;
        let len = x.plane_len();
        let mut out = Padded::zeros(self.cout, h, w);
        for o in 0..self.cout {
            out.data[o * len..(o + 1) * len].fill(self.b[o]);
        }
        // Output pixel (r, c) lives at (r+1)·wp + c+1 and reads input
        // (r+ky)·wp + c+kx for tap (ky, kx). Over the padded-width grid
        // j = r·wp + c both are contiguous in j; the two spare columns per
        // row land on border cells, which `reflect` rewrites below.
        let n = h * wp;
        for t in 0..9 {
            let (ky, kx) = (t / 3, t % 3);
            // SAFETY: A spans cout×cin taps with strides inside `self.w`; B
            // reads cin rows of n values from offset ky·wp+kx, ending at most
            // at cin·len + 1 < x.data.len(); C writes cout rows of n values
            // from offset wp+1, ending below cout·len.
            unsafe {
                matrixmultiply::sgemm(
                    self.cout,
                    self.cin,
                    n,
                    1.0,
                    self.w.as_ptr().add(t),
                    (self.cin * 9) as isize,
                    9,
                    x.data.as_ptr().add(ky * wp + kx),
                    len as isize,
                    1,
                    1.0,
                    out.data.as_mut_ptr().add(wp + 1),
                    len as isize,
                    1,
                );
            }
        }
        for o in 0..self.cout {
            if self.relu {
                for v in &mut out.data[o * len..(o + 1) * len] {
                    *v = v.max(0.0);
                }
            }
            out.reflect(o);
        }
        out
    }
}
