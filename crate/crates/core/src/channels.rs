//! Named input-channel configurations and per-frame feature extraction.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{contrast_descriptors, hsv_planes, rgb_to_hsi, CONTRAST_CHANNELS};
use crate::error::{Error, Result};
use crate::motion::residual_motion_sequence;
use crate::plane::PlaneStack;

/// One block of feature channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelSource {
    Rgb,
    Hsv,
    Contrasts,
    Motion,
}

impl ChannelSource {
    pub fn channel_count(self) -> usize {
        match self {
            ChannelSource::Rgb | ChannelSource::Hsv => 3,
            ChannelSource::Contrasts => CONTRAST_CHANNELS,
            ChannelSource::Motion => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelConfig {
    #[serde(rename = "3k")]
    K3,
    #[serde(rename = "4k")]
    K4,
    #[serde(rename = "8k")]
    K8,
    #[serde(rename = "rgb8k")]
    Rgb8k,
    #[serde(rename = "hsv8k")]
    Hsv8k,
}

impl ChannelConfig {
    pub const ALL: [ChannelConfig; 5] = [
        ChannelConfig::K3,
        ChannelConfig::K4,
        ChannelConfig::K8,
        ChannelConfig::Rgb8k,
        ChannelConfig::Hsv8k,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelConfig::K3 => "3k",
            ChannelConfig::K4 => "4k",
            ChannelConfig::K8 => "8k",
            ChannelConfig::Rgb8k => "rgb8k",
            ChannelConfig::Hsv8k => "hsv8k",
        }
    }

    /// Channel blocks in stacking order; motion is always last.
    pub fn sources(self) -> &'static [ChannelSource] {
        use ChannelSource::*;
        match self {
            ChannelConfig::K3 => &[Rgb],
            ChannelConfig::K4 => &[Rgb, Motion],
            ChannelConfig::K8 => &[Contrasts, Motion],
            ChannelConfig::Rgb8k => &[Rgb, Contrasts, Motion],
            ChannelConfig::Hsv8k => &[Hsv, Contrasts, Motion],
        }
    }

    pub fn channel_count(self) -> usize {
        self.sources().iter().map(|s| s.channel_count()).sum()
    }

    pub fn uses_motion(self) -> bool {
        self.sources().contains(&ChannelSource::Motion)
    }
}

impl fmt::Display for ChannelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ChannelConfig::ALL
            .into_iter()
            .find(|c| c.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown channel configuration {s:?} (3k, 4k, 8k, rgb8k, hsv8k)")))
    }
}

/// Feature stacks for every frame of a sequence of RGB frames.
pub fn extract_features(config: ChannelConfig, frames: &[PlaneStack]) -> Result<Vec<PlaneStack>> {
    let motion = if config.uses_motion() {
        Some(residual_motion_sequence(frames)?)
    } else {
        None
    };
    frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let mut parts: Vec<PlaneStack> = Vec::with_capacity(config.sources().len());
            for source in config.sources() {
                parts.push(match source {
                    ChannelSource::Rgb => rgb_only(frame)?,
                    ChannelSource::Hsv => hsv_planes(frame)?,
                    ChannelSource::Contrasts => contrast_descriptors(&rgb_to_hsi(frame)?).v,
                    ChannelSource::Motion => motion.as_ref().unwrap()[i].to_plane_stack(),
                });
            }
            let refs: Vec<&PlaneStack> = parts.iter().collect();
            PlaneStack::concat(&refs)
        })
        .collect()
}

fn rgb_only(frame: &PlaneStack) -> Result<PlaneStack> {
    match frame.channels() {
        3 => Ok(frame.clone()),
        c if c > 3 => {
            let (r, g, b) = (frame.channel(0), frame.channel(1), frame.channel(2));
            PlaneStack::from_planes(frame.width(), frame.height(), &[&r, &g, &b])
        }
        c => Err(Error::Shape(format!("expected RGB frames, got {c} channels"))),
    }
}
