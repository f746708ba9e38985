use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NoiseProfile, StyleProfile};
use crate::error::Result;

const FROZEN: &str = include_str!("../../profiles/phantom_profiles.toml");

/// Closed interval `[min, max]` sampled uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl From<[f64; 2]> for Range {
    fn from([min, max]: [f64; 2]) -> Self {
        Self { min, max }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.min, r.max]
    }
}

impl Range {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max <= self.min {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Echogenicity {
    pub lumen: f64,
    pub intima_media: f64,
    pub adventitia: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRange {
    pub reverb_amplitude: Range,
    pub reverb_band: Range,
    pub haze_correlation_px: Range,
}

impl NoiseRange {
    pub fn sample(&self, rng: &mut impl Rng) -> NoiseProfile {
        NoiseProfile {
            reverb_amplitude: self.reverb_amplitude.sample(rng),
            reverb_band: self.reverb_band.sample(rng),
            haze_correlation_px: self.haze_correlation_px.sample(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryRanges {
    pub reference_size: usize,
    pub lumen_top_frac: Range,
    pub lumen_height_frac: Range,
    pub wall_thickness_px: Range,
    pub background_echogenicity: Range,
    pub plaque_center_frac: Range,
    pub plaque_lateral_axis_px: Range,
    pub plaque_axial_axis_px: Range,
    pub plaque_echogenicity: Range,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomProfiles {
    pub version: u32,
    pub envelope_reference: f64,
    pub echogenicity: Echogenicity,
    pub styles: BTreeMap<String, StyleProfile>,
    pub noise: BTreeMap<String, NoiseRange>,
    pub geometry: GeometryRanges,
}

impl PhantomProfiles {
    pub fn parse(text: &str) -> Result<Self> {
        let profiles: Self = toml::from_str(text)?;
        for style in profiles.styles.values() {
            style.validate()?;
        }
        Ok(profiles)
    }
}

/// The versioned profile constants compiled into the crate.
pub fn frozen_profiles() -> &'static PhantomProfiles {
    static CELL: OnceLock<PhantomProfiles> = OnceLock::new();
    CELL.get_or_init(|| PhantomProfiles::parse(FROZEN).expect("bundled profiles are valid"))
}
