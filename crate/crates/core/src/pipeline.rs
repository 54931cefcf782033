//! Patch-wise two-stage correction: blind Gaussian deblurring, then fringe
//! removal on red and blue against green, with Hamming-weighted fusion.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::Baseline;
use crate::blur::{self, AffineBlurModel, BlurEstimate};
use crate::deblur::{deblur_patch, InversePolynomial};
use crate::error::{Error, Result};
use crate::fringe::FringeNet;
use crate::image::{fuse, gamma_decode, gamma_encode, PatchGrid, PlanarImage, GAMMA};

pub const DEFAULT_PATCH: usize = 400;
pub const MIN_PATCH: usize = 100;
pub const DEFAULT_OVERLAP: f32 = 0.25;
/// Accepted overlaps. Zero gives plain tiling, which makes the stage-wise
/// and combined paths exactly comparable.
pub const OVERLAPS: [f32; 3] = [0.0, 0.25, 0.5];
pub const THREADS_ENV: &str = "ABERREX_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FringeMethod {
    Cnn,
    Baseline(Baseline),
}

impl fmt::Display for FringeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FringeMethod::Cnn => f.write_str("cnn"),
            FringeMethod::Baseline(b) => b.fmt(f),
        }
    }
}

impl FromStr for FringeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "cnn" {
            return Ok(FringeMethod::Cnn);
        }
        s.parse::<Baseline>()
            .map(FringeMethod::Baseline)
            .map_err(|_| {
                Error::invalid(format!(
                    "unknown fringe method '{s}' (cnn, radial, phasecorr, plk-t, plk-s)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub overlap: f32,
    /// Affine blur rule; `None` picks the JPEG rule for gamma-encoded input
    /// and the linear one otherwise.
    pub model: Option<AffineBlurModel>,
    pub poly: InversePolynomial,
    pub fringe: FringeMethod,
    /// Fringe weights; the embedded ones when `None`.
    pub weights: Option<PathBuf>,
    /// Worker count; `None` reads `ABERREX_THREADS`, then uses all cores.
    pub threads: Option<usize>,
    pub seed: u64,
    /// Input is gamma-encoded: decode before processing, encode after.
    pub jpeg: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            patch_size: DEFAULT_PATCH,
            overlap: DEFAULT_OVERLAP,
            model: None,
            poly: InversePolynomial::default(),
            fringe: FringeMethod::Cnn,
            weights: None,
            threads: None,
            seed: 0,
            jpeg: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < MIN_PATCH {
            return Err(Error::invalid(format!(
                "patch size {} below the minimum of {MIN_PATCH}",
                self.patch_size
            )));
        }
        if !OVERLAPS.contains(&self.overlap) {
            return Err(Error::invalid(format!(
                "overlap {} not one of 0, 0.25, 0.5",
                self.overlap
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("thread count must be positive"));
        }
        Ok(())
    }

    pub fn effective_model(&self) -> AffineBlurModel {
        self.model.unwrap_or(if self.jpeg {
            AffineBlurModel::JPEG
        } else {
            AffineBlurModel::LINEAR
        })
    }

    pub fn effective_threads(&self) -> Result<usize> {
        if let Some(n) = self.threads {
            return Ok(n);
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::invalid(format!("{THREADS_ENV}='{v}' is not a positive count"))),
            },
            Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

/// Which stages to run on each patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub deblur: bool,
    pub defringe: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { deblur: true, defringe: true };
    pub const DEBLUR: Stages = Stages { deblur: true, defringe: false };
    pub const DEFRINGE: Stages = Stages { deblur: false, defringe: true };
}

enum Net {
    Builtin(&'static FringeNet),
    Loaded(Box<FringeNet>),
}

impl Net {
    fn get(&self) -> &FringeNet {
        match self {
            Net::Builtin(n) => n,
            Net::Loaded(n) => n,
        }
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    model: AffineBlurModel,
    net: Option<Net>,
    pool: rayon::ThreadPool,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let net = match (&config.fringe, &config.weights) {
            (FringeMethod::Cnn, Some(path)) => Some(Net::Loaded(Box::new(FringeNet::load(path)?))),
            (FringeMethod::Cnn, None) => Some(Net::Builtin(FringeNet::builtin())),
            _ => None,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.effective_threads()?)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        Ok(Pipeline {
            model: config.effective_model(),
            config,
            net,
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn model(&self) -> &AffineBlurModel {
        &self.model
    }

    /// Deblur a single patch; returns the estimate used.
    pub fn deblur_patch(&self, patch: &PlanarImage) -> Result<(PlanarImage, BlurEstimate)> {
        let est = blur::estimate(patch, &self.model)?;
        Ok((deblur_patch(patch, &est, &self.config.poly)?, est))
    }

    pub fn defringe_patch(&self, patch: &PlanarImage) -> Result<PlanarImage> {
        match self.config.fringe {
            FringeMethod::Cnn => self.net.as_ref().expect("network loaded").get().correct(patch),
            FringeMethod::Baseline(b) => b.correct(patch),
        }
    }

    /// Run the selected stages on one patch. A stage that fails on the
    /// patch (flat content, degenerate fit) leaves it unchanged.
    pub fn process_patch(&self, patch: &PlanarImage, stages: Stages) -> PlanarImage {
        let mut out = patch.clone();
        if stages.deblur {
            if let Ok((d, _)) = self.deblur_patch(&out) {
                out = d;
            }
        }
        if stages.defringe {
            if let Ok(d) = self.defringe_patch(&out) {
                out = d;
            }
        }
        out
    }

    /// Tile, process patches in parallel and fuse in grid order.
    pub fn run(&self, image: &PlanarImage, stages: Stages) -> Result<PlanarImage> {
        if image.channels() != 3 {
            return Err(Error::invalid(format!(
                "correction needs an RGB image, got {} channel(s)",
                image.channels()
            )));
        }
        let input = if self.config.jpeg {
            gamma_decode(image, GAMMA)
        } else {
            image.clone()
        };
        let grid = PatchGrid::new(
            input.height(),
            input.width(),
            self.config.patch_size,
            self.config.overlap,
        )?;
        let patches = grid.extract(&input);
        let processed: Vec<PlanarImage> = self.pool.install(|| {
            patches
                .par_iter()
                .map(|p| self.process_patch(p, stages))
                .collect()
        });
        let mut fused = fuse(&processed, &grid)?;
        fused.clamp01();
        Ok(if self.config.jpeg {
            gamma_encode(&fused, GAMMA)
        } else {
            fused.with_colorspace(image.colorspace)
        })
    }

    pub fn correct(&self, image: &PlanarImage) -> Result<PlanarImage> {
        self.run(image, Stages::ALL)
    }

    pub fn deblur(&self, image: &PlanarImage) -> Result<PlanarImage> {
        self.run(image, Stages::DEBLUR)
    }

    pub fn defringe(&self, image: &PlanarImage) -> Result<PlanarImage> {
        self.run(image, Stages::DEFRINGE)
    }
}

/// One-shot correction with a fresh pipeline.
pub fn correct(image: &PlanarImage, config: &PipelineConfig) -> Result<PlanarImage> {
    Pipeline::new(config.clone())?.correct(image)
}
