//! FTBW: little-endian named-tensor weight files.
//!
//! ```text
//! "FTBW" | version u32 | count u32 | count × tensor
//! tensor: name_len u16 | name utf-8 | rank u8 | dims u32 × rank | f32 × Π dims
//! ```

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FTBW";
pub const VERSION: u32 = 1;
/// Batch-norm epsilon used when a file does not carry `bnN.eps`.
pub const DEFAULT_BN_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Weights {
                tensor: name,
                reason: format!("dims {dims:?} hold {n} values, got {}", data.len()),
            });
        }
        Ok(Tensor { name, dims, data })
    }
}

/// Kind of a node in the fringe network graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    /// 3×3 convolution, batch norm, ReLU.
    ConvBnRelu { input: usize, output: usize },
    /// Add the output of an earlier node, by 1-based tag.
    Add(usize),
    /// Plain 3×3 convolution.
    Conv { input: usize, output: usize },
}

/// The eleven tagged nodes of the network, in execution order.
pub const GRAPH: [Node; 11] = [
    Node::ConvBnRelu { input: 2, output: 16 },
    Node::ConvBnRelu { input: 16, output: 32 },
    Node::ConvBnRelu { input: 32, output: 64 },
    Node::ConvBnRelu { input: 64, output: 64 },
    Node::ConvBnRelu { input: 64, output: 64 },
    Node::Add(3),
    Node::ConvBnRelu { input: 64, output: 32 },
    Node::Add(2),
    Node::ConvBnRelu { input: 32, output: 16 },
    Node::Add(1),
    Node::Conv { input: 16, output: 1 },
];

/// Every tensor the network expects, with its shape, in file order.
pub fn expected_tensors() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (i, node) in GRAPH.iter().enumerate() {
        let tag = i + 1;
        match *node {
            Node::ConvBnRelu { input, output } => {
                out.push((format!("conv{tag}.w"), vec![output, input, 3, 3]));
                out.push((format!("conv{tag}.b"), vec![output]));
                for p in ["gamma", "beta", "mean", "var"] {
                    out.push((format!("bn{tag}.{p}"), vec![output]));
                }
            }
            Node::Conv { input, output } => {
                out.push((format!("conv{tag}.w"), vec![output, input, 3, 3]));
                out.push((format!("conv{tag}.b"), vec![output]));
            }
            Node::Add(_) => {}
        }
    }
    out
}

/// Learnable parameters: convolution weights and biases plus batch-norm
/// scale and shift (running statistics excluded).
pub fn parameter_count() -> usize {
    expected_tensors()
        .iter()
        .filter(|(name, _)| !name.ends_with(".mean") && !name.ends_with(".var"))
        .map(|(_, dims)| dims.iter().product::<usize>())
        .sum()
}

/// A validated set of network tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeNetWeights {
    tensors: Vec<Tensor>,
}

impl FringeNetWeights {
    /// Check names, shapes and finiteness against the graph. Extra tensors
    /// other than `bnN.eps` scalars are rejected.
    pub fn new(tensors: Vec<Tensor>) -> Result<Self> {
        let expected = expected_tensors();
        for (name, dims) in &expected {
            let t = tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| Error::Weights {
                    tensor: name.clone(),
                    reason: "missing".into(),
                })?;
            if &t.dims != dims {
                return Err(Error::Weights {
                    tensor: name.clone(),
                    reason: format!("shape {:?}, expected {dims:?}", t.dims),
                });
            }
        }
        for t in &tensors {
            let known = expected.iter().any(|(n, _)| n == &t.name);
            let eps = t.name.starts_with("bn")
                && t.name.ends_with(".eps")
                && expected.iter().any(|(n, _)| {
                    n.strip_suffix(".gamma") == t.name.strip_suffix(".eps")
                });
            if !known && !eps {
                return Err(Error::Weights {
                    tensor: t.name.clone(),
                    reason: "unexpected tensor".into(),
                });
            }
            if eps && t.data.len() != 1 {
                return Err(Error::Weights {
                    tensor: t.name.clone(),
                    reason: "epsilon must be a single value".into(),
                });
            }
            if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Weights {
                    tensor: t.name.clone(),
                    reason: format!("non-finite value at index {i}"),
                });
            }
            if (t.name.ends_with(".var") && t.data.iter().any(|&v| v < 0.0))
                || (eps && !(t.data[0] > 0.0))
            {
                return Err(Error::Weights {
                    tensor: t.name.clone(),
                    reason: "negative variance or epsilon".into(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::Weights {
                    tensor: t.name.clone(),
                    reason: "duplicate tensor".into(),
                });
            }
        }
        Ok(FringeNetWeights { tensors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::new(parse(&bytes).map_err(|e| relabel(e, path))?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::new(parse(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write(path, &self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn bn_eps(&self, tag: usize) -> f32 {
        self.get(&format!("bn{tag}.eps"))
            .map_or(DEFAULT_BN_EPS, |t| t.data[0])
    }

    /// All convolutions zero, batch norm at identity: the residual is zero.
    pub fn zeros() -> Self {
        Self::init(|name, n, _| {
            vec![if name.ends_with(".gamma") || name.ends_with(".var") { 1.0 } else { 0.0 }; n]
        })
    }

    /// Random weights with He-scaled convolutions and perturbed batch-norm
    /// statistics, reproducible from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init(move |name, n, dims| {
            let fan_in = dims.iter().skip(1).product::<usize>().max(1) as f32;
            let scale = (2.0 / fan_in).sqrt();
            (0..n)
                .map(|_| {
                    if name.ends_with(".w") {
                        scale * rng.random_range(-1.0f32..1.0) * 1.7
                    } else if name.ends_with(".gamma") {
                        rng.random_range(0.5f32..1.5)
                    } else if name.ends_with(".var") {
                        rng.random_range(0.5f32..2.0)
                    } else {
                        rng.random_range(-0.1f32..0.1)
                    }
                })
                .collect()
        })
    }

    fn init(mut fill: impl FnMut(&str, usize, &[usize]) -> Vec<f32>) -> Self {
        let tensors = expected_tensors()
            .into_iter()
            .map(|(name, dims)| {
                let n = dims.iter().product();
                let data = fill(&name, n, &dims);
                Tensor { name, dims, data }
            })
            .collect();
        FringeNetWeights { tensors }
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { reason, .. } => Error::io(path, reason),
        other => other,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::io(
                "<weights>",
                format!("truncated file while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Decode every tensor of an FTBW buffer, without graph validation.
pub fn parse(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Weights {
            tensor: "<header>".into(),
            reason: "bad magic, not an FTBW file".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Weights {
            tensor: "<header>".into(),
            reason: format!("unsupported version {version}"),
        });
    }
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Weights {
                tensor: format!("#{i}"),
                reason: "name is not UTF-8".into(),
            })?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= (bytes.len() - r.pos) / 4 + 1)
            .ok_or_else(|| Error::io("<weights>", format!("truncated file in `{name}` payload")))?;
        let payload = r.take(4 * n, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::io(
            "<weights>",
            format!("{} trailing bytes after the last tensor", bytes.len() - r.pos),
        ));
    }
    Ok(tensors)
}

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write(path: impl AsRef<Path>, tensors: &[Tensor]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(tensors)).map_err(|e| Error::io(path, e))
}
