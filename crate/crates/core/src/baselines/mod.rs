//! Classical chromatic fringe baselines: global translation by phase
//! correlation, block-wise pyramid Lucas–Kanade, and a global radial warp.
//! Each aligns the red and blue channels onto green.

pub mod lk;
pub mod phase;
pub mod radial;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{PlanarImage, Plane};

pub use lk::{lucas_kanade, LkConfig, LocalWarp, Motion};
pub use phase::phase_correlate;
pub use radial::{fit_radial, fit_radial_traced, RadialFit, RadialWarp};

#[derive(Debug, Clone, PartialEq)]
pub enum Warp {
    Radial(RadialWarp),
    Local(LocalWarp),
}

impl From<RadialWarp> for Warp {
    fn from(w: RadialWarp) -> Self {
        Warp::Radial(w)
    }
}

impl From<LocalWarp> for Warp {
    fn from(w: LocalWarp) -> Self {
        Warp::Local(w)
    }
}

/// Resample a channel with bicubic interpolation and mirror boundary.
pub fn apply_warp(channel: &Plane, warp: &Warp) -> Result<Plane> {
    match warp {
        Warp::Radial(w) => Ok(w.apply(channel)),
        Warp::Local(w) => {
            let (h, w_) = channel.shape();
            if w.row_bounds.last() != Some(&h) || w.col_bounds.last() != Some(&w_) {
                return Err(Error::invalid(format!(
                    "warp grid does not cover a {h}x{w_} channel"
                )));
            }
            Ok(w.apply(channel))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Radial,
    PhaseCorrelation,
    PlkTranslation,
    PlkSimilarity,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [
        Baseline::Radial,
        Baseline::PhaseCorrelation,
        Baseline::PlkTranslation,
        Baseline::PlkSimilarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Radial => "radial",
            Baseline::PhaseCorrelation => "phasecorr",
            Baseline::PlkTranslation => "plk-t",
            Baseline::PlkSimilarity => "plk-s",
        }
    }

    /// Estimate the warp bringing `moving` onto `fixed`.
    pub fn estimate(self, moving: &Plane, fixed: &Plane) -> Result<Warp> {
        let (h, w) = fixed.shape();
        Ok(match self {
            Baseline::Radial => fit_radial(moving, fixed)?.into(),
            Baseline::PhaseCorrelation => {
                let (dx, dy) = phase_correlate(moving, fixed)?;
                LocalWarp::translation(h, w, dx, dy).into()
            }
            Baseline::PlkTranslation => {
                lucas_kanade(moving, fixed, Motion::Translation, &LkConfig::default())?.into()
            }
            Baseline::PlkSimilarity => {
                lucas_kanade(moving, fixed, Motion::Similarity, &LkConfig::default())?.into()
            }
        })
    }

    /// Align red and blue onto green; output clamped to `[0, 1]`.
    pub fn correct(self, image: &PlanarImage) -> Result<PlanarImage> {
        if image.channels() != 3 {
            return Err(Error::invalid("fringe correction needs an RGB image"));
        }
        let green = image.plane(1);
        let aligned: Vec<Plane> = [0usize, 2]
            .par_iter()
            .map(|&c| {
                let moving = image.plane(c);
                let warp = self.estimate(&moving, &green)?;
                let mut out = apply_warp(&moving, &warp)?;
                out.clamp01();
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut out = image.clone();
        out.set_plane(0, &aligned[0]);
        out.set_plane(2, &aligned[1]);
        Ok(out)
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline '{s}'")))
    }
}
