//! PNG, binary PPM (P6/P5) and PFM reading and writing.
//!
//! Integer samples map to `[0, 1]` by division by `2^bits - 1`; writing is the
//! exact inverse with round-half-up. PFM is written little-endian, bottom row
//! first, as the format prescribes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{PlanarImage, Plane};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> f32 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Png,
    Ppm,
    Pfm,
}

fn format_of(path: &Path) -> Result<Format> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => Ok(Format::Png),
        Some("ppm") | Some("pgm") | Some("pnm") => Ok(Format::Ppm),
        Some("pfm") => Ok(Format::Pfm),
        _ => Err(Error::io(path, "unsupported image format (expected png, ppm or pfm)")),
    }
}

fn sniff(bytes: &[u8]) -> Option<Format> {
    if bytes.starts_with(b"\x89PNG") {
        Some(Format::Png)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        Some(Format::Ppm)
    } else if bytes.starts_with(b"PF") || bytes.starts_with(b"Pf") {
        Some(Format::Pfm)
    } else {
        None
    }
}

/// Read an image, dispatching on the file magic.
pub fn read_image(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let format = sniff(&bytes).ok_or_else(|| Error::io(path, "unrecognized image magic"))?;
    let decoded = match format {
        Format::Png => decode_png(&bytes),
        Format::Ppm => decode_pnm(&bytes),
        Format::Pfm => decode_pfm(&bytes),
    };
    decoded.map_err(|reason| Error::io(path, reason))
}

/// Write an image; format chosen by extension, integer formats at 8 bits.
pub fn write_image(image: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    write_image_with_depth(image, path, BitDepth::Eight)
}

pub fn write_image_with_depth(
    image: &PlanarImage,
    path: impl AsRef<Path>,
    depth: BitDepth,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format_of(path)? {
        Format::Png => encode_png(image, depth).map_err(|e| Error::io(path, e))?,
        Format::Ppm => encode_pnm(image, depth),
        Format::Pfm => encode_pfm(image),
    };
    File::create(path)
        .and_then(|f| {
            let mut w = BufWriter::new(f);
            w.write_all(&bytes)?;
            w.flush()
        })
        .map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes).map_err(|reason| Error::io(path, reason))
}

pub fn write_pfm(image: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm(image)).map_err(|e| Error::io(path, e))
}

#[inline]
fn quantize(v: f32, max: f32) -> u32 {
    (v.clamp(0.0, 1.0) * max + 0.5).floor() as u32
}

fn interleave(image: &PlanarImage, depth: BitDepth) -> Vec<u32> {
    let max = depth.max_value();
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let mut out = Vec::with_capacity(h * w * ch);
    for i in 0..h * w {
        for c in 0..ch {
            out.push(quantize(image.channel(c)[i], max));
        }
    }
    out
}

fn deinterleave(h: usize, w: usize, ch: usize, samples: &[f32]) -> std::result::Result<PlanarImage, String> {
    let mut data = vec![0.0f32; h * w * ch];
    for i in 0..h * w {
        for c in 0..ch {
            data[c * h * w + i] = samples[i * ch + c];
        }
    }
    PlanarImage::from_vec(h, w, ch, data).map_err(|e| e.to_string())
}

fn decode_png(bytes: &[u8]) -> std::result::Result<PlanarImage, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| "png too large".to_string())?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (h, w) = (info.height as usize, info.width as usize);
    let (src_ch, keep_ch) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err("indexed png not expanded".into()),
    };
    let samples: Vec<f32> = match info.bit_depth {
        png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
            .collect(),
        png::BitDepth::Eight => buf[..info.buffer_size()]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect(),
        other => return Err(format!("unsupported png bit depth {other:?}")),
    };
    if samples.len() < h * w * src_ch {
        return Err("truncated png payload".into());
    }
    let kept: Vec<f32> = if src_ch == keep_ch {
        samples
    } else {
        samples
            .chunks_exact(src_ch)
            .flat_map(|px| px[..keep_ch].to_vec())
            .collect()
    };
    deinterleave(h, w, keep_ch, &kept)
}

fn encode_png(image: &PlanarImage, depth: BitDepth) -> std::result::Result<Vec<u8>, String> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(if image.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(match depth {
            BitDepth::Eight => png::BitDepth::Eight,
            BitDepth::Sixteen => png::BitDepth::Sixteen,
        });
        let mut writer = enc.write_header().map_err(|e| e.to_string())?;
        let samples = interleave(image, depth);
        let raw: Vec<u8> = match depth {
            BitDepth::Eight => samples.iter().map(|&s| s as u8).collect(),
            BitDepth::Sixteen => samples
                .iter()
                .flat_map(|&s| (s as u16).to_be_bytes())
                .collect(),
        };
        writer.write_image_data(&raw).map_err(|e| e.to_string())?;
    }
    Ok(out)
}

/// Splits a netpbm-style header into `count` whitespace-separated tokens,
/// skipping `#` comments; returns the tokens and the payload offset.
fn header_tokens(bytes: &[u8], count: usize) -> std::result::Result<(Vec<String>, usize), String> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates header and payload
    if i >= bytes.len() {
        return Err("truncated header".into());
    }
    Ok((tokens, i + 1))
}

fn parse_dim(s: &str, what: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| format!("bad {what} `{s}`"))
}

fn decode_pnm(bytes: &[u8]) -> std::result::Result<PlanarImage, String> {
    let (tok, offset) = header_tokens(bytes, 4)?;
    let ch = match tok[0].as_str() {
        "P6" => 3,
        "P5" => 1,
        m => return Err(format!("unsupported netpbm magic {m}")),
    };
    let w = parse_dim(&tok[1], "width")?;
    let h = parse_dim(&tok[2], "height")?;
    let maxval = parse_dim(&tok[3], "maxval")?;
    if maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    let n = h * w * ch;
    let payload = &bytes[offset..];
    let samples: Vec<f32> = if maxval < 256 {
        if payload.len() < n {
            return Err("truncated ppm payload".into());
        }
        payload[..n].iter().map(|&b| b as f32 / maxval as f32).collect()
    } else {
        if payload.len() < 2 * n {
            return Err("truncated ppm payload".into());
        }
        payload[..2 * n]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / maxval as f32)
            .collect()
    };
    deinterleave(h, w, ch, &samples)
}

fn encode_pnm(image: &PlanarImage, depth: BitDepth) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let max = depth.max_value() as u32;
    let mut out = format!("{magic}\n{} {}\n{max}\n", image.width(), image.height()).into_bytes();
    for s in interleave(image, depth) {
        match depth {
            BitDepth::Eight => out.push(s as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(s as u16).to_be_bytes()),
        }
    }
    out
}

fn decode_pfm(bytes: &[u8]) -> std::result::Result<PlanarImage, String> {
    let (tok, offset) = header_tokens(bytes, 4)?;
    let ch = match tok[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(format!("unsupported pfm magic {m}")),
    };
    let w = parse_dim(&tok[1], "width")?;
    let h = parse_dim(&tok[2], "height")?;
    let scale: f32 = tok[3]
        .parse()
        .map_err(|_| format!("bad pfm scale `{}`", tok[3]))?;
    if scale == 0.0 {
        return Err("pfm scale must be nonzero".into());
    }
    let little = scale < 0.0;
    let n = h * w * ch;
    let payload = &bytes[offset..];
    if payload.len() < 4 * n {
        return Err(format!(
            "truncated pfm payload: {} of {} bytes",
            payload.len(),
            4 * n
        ));
    }
    let mut samples = vec![0.0f32; n];
    for (row_file, chunk) in payload[..4 * n].chunks_exact(4 * w * ch).enumerate() {
        let row = h - 1 - row_file;
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let arr = [b[0], b[1], b[2], b[3]];
            let v = if little {
                f32::from_le_bytes(arr)
            } else {
                f32::from_be_bytes(arr)
            };
            samples[row * w * ch + k] = v;
        }
    }
    deinterleave(h, w, ch, &samples)
}

fn encode_pfm(image: &PlanarImage) -> Vec<u8> {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let magic = if ch == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * h * w * ch);
    for row in (0..h).rev() {
        for col in 0..w {
            for c in 0..ch {
                out.extend_from_slice(&image.channel(c)[row * w + col].to_le_bytes());
            }
        }
    }
    out
}

impl Plane {
    /// Single-channel image view of this plane.
    pub fn to_image(&self) -> PlanarImage {
        PlanarImage::from_vec(self.height, self.width, 1, self.data.clone())
            .expect("plane of finite samples")
    }
}
