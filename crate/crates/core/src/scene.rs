//! Procedural test content: resolution charts and random color scenes,
//! rendered with 4×4 supersampling.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{Colorspace, PlanarImage, Plane};

const SUPERSAMPLE: usize = 4;

/// Point-sample `f` on an `ss × ss` subpixel grid and box-average.
fn supersampled(size_h: usize, size_w: usize, ss: usize, f: impl Fn(f64, f64) -> f32) -> Plane {
    let inv = 1.0 / ss as f64;
    let norm = 1.0 / (ss * ss) as f32;
    Plane::from_fn(size_h, size_w, |r, c| {
        let mut acc = 0.0;
        for sy in 0..ss {
            for sx in 0..ss {
                let y = r as f64 + (sy as f64 + 0.5) * inv - 0.5;
                let x = c as f64 + (sx as f64 + 0.5) * inv - 0.5;
                acc += f(y, x);
            }
        }
        acc * norm
    })
}

/// Binary Siemens star with `spokes` black/white sector pairs.
pub fn siemens_star(size: usize, spokes: usize) -> Plane {
    star(size, spokes, SUPERSAMPLE)
}

/// Siemens star point-sampled at pixel centers (no pixel-area blur).
pub fn siemens_star_sharp(size: usize, spokes: usize) -> Plane {
    star(size, spokes, 1)
}

fn star(size: usize, spokes: usize, ss: usize) -> Plane {
    let center = (size as f64 - 1.0) / 2.0;
    supersampled(size, size, ss, |y, x| {
        let a = (y - center).atan2(x - center);
        if (a * spokes as f64).sin() >= 0.0 {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone)]
enum Shape {
    Ellipse {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        cos: f64,
        sin: f64,
    },
    Rect {
        cy: f64,
        cx: f64,
        hy: f64,
        hx: f64,
        cos: f64,
        sin: f64,
    },
    Star {
        cy: f64,
        cx: f64,
        radius: f64,
        spokes: f64,
        phase: f64,
    },
    HalfPlane {
        cy: f64,
        cx: f64,
        ny: f64,
        nx: f64,
    },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, h: f64, w: f64) -> Shape {
        let cy = rng.random_range(0.0..h);
        let cx = rng.random_range(0.0..w);
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (sin, cos) = angle.sin_cos();
        let scale = h.min(w);
        match rng.random_range(0..10) {
            0..=3 => Shape::Ellipse {
                cy,
                cx,
                ry: rng.random_range(0.03..0.25) * scale,
                rx: rng.random_range(0.03..0.25) * scale,
                cos,
                sin,
            },
            4..=6 => Shape::Rect {
                cy,
                cx,
                hy: rng.random_range(0.02..0.25) * scale,
                hx: rng.random_range(0.02..0.25) * scale,
                cos,
                sin,
            },
            7..=8 => Shape::Star {
                cy,
                cx,
                radius: rng.random_range(0.15..0.4) * scale,
                spokes: rng.random_range(6..20) as f64,
                phase: angle,
            },
            _ => Shape::HalfPlane {
                cy,
                cx,
                ny: sin,
                nx: cos,
            },
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse {
                cy,
                cx,
                ry,
                rx,
                cos,
                sin,
            } => {
                let (dy, dx) = (y - cy, x - cx);
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Rect {
                cy,
                cx,
                hy,
                hx,
                cos,
                sin,
            } => {
                let (dy, dx) = (y - cy, x - cx);
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                u.abs() <= hx && v.abs() <= hy
            }
            Shape::Star {
                cy,
                cx,
                radius,
                spokes,
                phase,
            } => {
                let (dy, dx) = (y - cy, x - cx);
                dy * dy + dx * dx <= radius * radius
                    && (dy.atan2(dx) * spokes + phase).sin() >= 0.0
            }
            Shape::HalfPlane { cy, cx, ny, nx } => (y - cy) * ny + (x - cx) * nx >= 0.0,
        }
    }
}

/// Two-level contrasted chart (levels 0.1 and 0.9): a Siemens star overlaid
/// with random shapes, so edges of every orientation are present.
pub fn chart(size: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c4_a27e);
    let spokes = rng.random_range(8..28) as f64;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let center = (size as f64 - 1.0) / 2.0;
    let shapes: Vec<Shape> = (0..rng.random_range(4..10))
        .map(|_| Shape::random(&mut rng, size as f64, size as f64))
        .collect();
    supersampled(size, size, SUPERSAMPLE, |y, x| {
        let a = (y - center).atan2(x - center);
        let mut on = (a * spokes + phase).sin() >= 0.0;
        for s in &shapes {
            if s.contains(y, x) {
                on = !on;
            }
        }
        if on {
            0.9
        } else {
            0.1
        }
    })
}

/// Random display-referred color scene: layered shapes of random colors over
/// a shaded background. Values in `[0, 1]`, tagged gamma-encoded.
pub fn color_scene(height: usize, width: usize, seed: u64) -> PlanarImage {
    render_scene(height, width, seed, SUPERSAMPLE, DEFAULT_SATURATION)
}

/// [`color_scene`] with chroma deviations bounded by `saturation`; small
/// values give the strongly correlated channels of natural photographs.
pub fn color_scene_muted(height: usize, width: usize, seed: u64, saturation: f32) -> PlanarImage {
    render_scene(height, width, seed, SUPERSAMPLE, saturation.max(0.0))
}

/// [`color_scene`] point-sampled at pixel centers.
pub fn color_scene_sharp(height: usize, width: usize, seed: u64) -> PlanarImage {
    render_scene(height, width, seed, 1, DEFAULT_SATURATION)
}

const DEFAULT_SATURATION: f32 = 0.6;

fn render_scene(height: usize, width: usize, seed: u64, ss: usize, max_sat: f32) -> PlanarImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_e5ce);
    let color = |rng: &mut ChaCha8Rng| -> [f32; 3] {
        // saturated and gray colors, spanning dark to bright
        let base: f32 = rng.random_range(0.05..0.95);
        let sat: f32 = max_sat * rng.random_range(0.0f32..1.0);
        [
            (base + sat * rng.random_range(-1.0f32..1.0)).clamp(0.02, 0.98),
            (base + sat * rng.random_range(-1.0f32..1.0)).clamp(0.02, 0.98),
            (base + sat * rng.random_range(-1.0f32..1.0)).clamp(0.02, 0.98),
        ]
    };
    let background = color(&mut rng);
    let grad_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let grad_amp: f32 = rng.random_range(0.0..0.3);
    let n_shapes = rng.random_range(6..18);
    let layers: Vec<(Shape, [f32; 3])> = (0..n_shapes)
        .map(|_| {
            let s = Shape::random(&mut rng, height as f64, width as f64);
            (s, color(&mut rng))
        })
        .collect();
    let (gs, gc) = grad_angle.sin_cos();
    let diag = ((height * height + width * width) as f64).sqrt();
    let planes: Vec<Plane> = (0..3)
        .map(|ch| {
            supersampled(height, width, ss, |y, x| {
                let mut v = background[ch]
                    * (1.0 + grad_amp * ((gc * x + gs * y) / diag) as f32 - grad_amp / 2.0);
                for (s, col) in layers.iter().rev() {
                    if s.contains(y, x) {
                        v = col[ch];
                        break;
                    }
                }
                v.clamp(0.0, 1.0)
            })
        })
        .collect();
    PlanarImage::from_planes(&planes)
        .expect("equal-sized planes")
        .with_colorspace(Colorspace::Gamma22)
}
