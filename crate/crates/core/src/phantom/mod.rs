//! Synthetic longitudinal carotid B-mode phantoms with ground-truth masks.
//!
//! Each phantom is a horizontal lumen band bounded by a near and a far wall.
//! Every wall is split into an intima-media layer next to the lumen and an
//! adventitia layer outside it; an optional elliptical plaque sits on the far
//! wall. Echogenicity is multiplied by speckle, reverberation haze is added
//! inside the lumen, and the envelope is log-compressed to 8 bits.

mod experiment;
mod profiles;
mod speckle;

use ndarray::Array2;

pub use experiment::{
    image_seed, make_experiment_datasets, make_test_split, sample_phantom, ExperimentKind,
    ExperimentSplit,
};
pub use profiles::{frozen_profiles, NoiseRange, PhantomProfiles, Range};
pub use speckle::synth_speckle_field;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{RoiLabel, RoiMaskSet};

/// Seed offset separating the haze field from the tissue speckle.
const HAZE_STREAM: u64 = 0x6a09_e667_f3bc_c909;

#[derive(Clone, Debug, PartialEq)]
pub struct Plaque {
    /// Lateral position of the plaque centre as a fraction of the width.
    pub center_frac: f64,
    /// `(lateral, axial)` semi-axes in pixels.
    pub axes_px: (f64, f64),
    pub echogenicity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub size: (usize, usize),
    /// `(top, bottom)` lumen boundaries as fractions of the height.
    pub lumen_band: (f64, f64),
    pub wall_thickness_px: usize,
    pub plaque: Option<Plaque>,
    pub background_echogenicity: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StyleProfile {
    pub psf_sigma_lateral: f64,
    pub psf_sigma_axial: f64,
    pub log_compression_db: f64,
    pub gamma: f64,
    pub grain_gain: f64,
}

impl StyleProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.psf_sigma_lateral,
            self.psf_sigma_axial,
            self.log_compression_db,
            self.gamma,
            self.grain_gain,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Profile("style parameters must be strictly positive".into()));
        }
        if !(0.3..=3.0).contains(&self.gamma) {
            return Err(Error::Profile(format!("gamma {} outside [0.3, 3]", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseProfile {
    /// Haze amplitude relative to adventitia echogenicity; zero is "clear".
    pub reverb_amplitude: f64,
    /// Fraction of the lumen height, from the near wall down, that is hazed.
    pub reverb_band: f64,
    pub haze_correlation_px: f64,
}

impl NoiseProfile {
    pub fn clear() -> Self {
        Self {
            reverb_amplitude: 0.0,
            reverb_band: 0.0,
            haze_correlation_px: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.reverb_amplitude) || !(0.0..=1.0).contains(&self.reverb_band) {
            return Err(Error::Profile("reverb amplitude and band must lie in [0, 1]".into()));
        }
        if !(self.haze_correlation_px > 0.0) {
            return Err(Error::Profile("haze correlation must be positive".into()));
        }
        Ok(())
    }
}

/// Row/column extents derived from a [`PhantomSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomGeometry {
    pub size: (usize, usize),
    pub lumen_top: usize,
    pub lumen_bottom: usize,
    pub im_thickness: usize,
    pub adventitia_thickness: usize,
    pub plaque: Option<Plaque>,
}

impl PhantomGeometry {
    pub fn from_spec(spec: &PhantomSpec) -> Result<Self> {
        let (h, w) = spec.size;
        let (tf, bf) = spec.lumen_band;
        if !(0.0 < tf && tf < bf && bf < 1.0) {
            return Err(Error::Geometry(format!("lumen band {tf}..{bf} not strictly inside (0, 1)")));
        }
        let top = (tf * h as f64).round() as usize;
        let bottom = (bf * h as f64).round() as usize;
        let wall = spec.wall_thickness_px;
        if wall < 2 {
            return Err(Error::Geometry("wall thickness must be at least 2 px".into()));
        }
        if bottom <= top || top < wall || bottom + wall > h {
            return Err(Error::Geometry(format!(
                "lumen rows {top}..{bottom} with {wall} px walls do not fit in height {h}"
            )));
        }
        if let Some(p) = &spec.plaque {
            let (a, b) = p.axes_px;
            let cx = p.center_frac * w as f64;
            if !(a > 0.0 && b > 0.0) || cx - a < 0.0 || cx + a > w as f64 {
                return Err(Error::Geometry("plaque extends outside the image".into()));
            }
            if b >= (bottom - top) as f64 {
                return Err(Error::Geometry("plaque occludes the whole lumen".into()));
            }
            if !(0.0..=1.0).contains(&p.echogenicity) {
                return Err(Error::Geometry("plaque echogenicity outside [0, 1]".into()));
            }
        }
        let im = wall / 2;
        Ok(Self {
            size: spec.size,
            lumen_top: top,
            lumen_bottom: bottom,
            im_thickness: im,
            adventitia_thickness: wall - im,
            plaque: spec.plaque.clone(),
        })
    }

    fn in_plaque(&self, r: usize, c: usize) -> bool {
        let Some(p) = &self.plaque else { return false };
        if r >= self.lumen_bottom {
            return false;
        }
        let cx = p.center_frac * self.size.1 as f64;
        let dx = (c as f64 + 0.5 - cx) / p.axes_px.0;
        let dy = (r as f64 + 0.5 - self.lumen_bottom as f64) / p.axes_px.1;
        dx * dx + dy * dy <= 1.0
    }

    pub fn label_at(&self, r: usize, c: usize) -> RoiLabel {
        let (top, bottom) = (self.lumen_top, self.lumen_bottom);
        let (im, adv) = (self.im_thickness, self.adventitia_thickness);
        if (top..bottom).contains(&r) {
            if self.in_plaque(r, c) {
                RoiLabel::PlaqueOrIm
            } else {
                RoiLabel::Lumen
            }
        } else if (top - im..top).contains(&r) || (bottom..bottom + im).contains(&r) {
            RoiLabel::PlaqueOrIm
        } else if (top - im - adv..top - im).contains(&r) || (bottom + im..bottom + im + adv).contains(&r) {
            RoiLabel::Adventitia
        } else {
            RoiLabel::Background
        }
    }

    pub fn mask(&self) -> RoiMaskSet {
        let labels = Array2::from_shape_fn(self.size, |(r, c)| self.label_at(r, c) as u8);
        RoiMaskSet::new(labels).expect("labels in range")
    }
}

/// Renders one phantom image and its label mask with the frozen
/// echogenicity and envelope constants.
pub fn render_phantom(
    spec: &PhantomSpec,
    style: &StyleProfile,
    noise: &NoiseProfile,
) -> Result<(Image, RoiMaskSet)> {
    style.validate()?;
    noise.validate()?;
    if !(0.0..=1.0).contains(&spec.background_echogenicity) {
        return Err(Error::Geometry("background echogenicity outside [0, 1]".into()));
    }
    let geom = PhantomGeometry::from_spec(spec)?;
    let profiles = frozen_profiles();
    let echo = &profiles.echogenicity;
    let mask = geom.mask();

    let speckle = synth_speckle_field(spec.size, style, spec.seed);
    let haze = (noise.reverb_amplitude > 0.0).then(|| {
        speckle::synth_envelope(
            spec.size,
            noise.haze_correlation_px,
            noise.haze_correlation_px,
            spec.seed ^ HAZE_STREAM,
        )
    });
    let band_end = geom.lumen_top as f64
        + noise.reverb_band * (geom.lumen_bottom - geom.lumen_top) as f64;

    let reference = profiles.envelope_reference;
    let pixels = Array2::from_shape_fn(spec.size, |(r, c)| {
        let label = geom.label_at(r, c);
        let e = match label {
            RoiLabel::Background => spec.background_echogenicity,
            RoiLabel::Lumen => echo.lumen,
            RoiLabel::PlaqueOrIm => match &geom.plaque {
                Some(p) if geom.in_plaque(r, c) => p.echogenicity,
                _ => echo.intima_media,
            },
            RoiLabel::Adventitia => echo.adventitia,
        };
        let mut env = e * speckle[[r, c]];
        if let (Some(h), RoiLabel::Lumen) = (&haze, label) {
            if (r as f64) < band_end {
                env += noise.reverb_amplitude * h[[r, c]];
            }
        }
        compress(env, reference, style)
    });
    Ok((Image::Stored(pixels), mask))
}

/// Log compression over the style's dynamic range, gamma and display gain.
fn compress(envelope: f64, reference: f64, style: &StyleProfile) -> u8 {
    if envelope <= 0.0 {
        return 0;
    }
    let db = 20.0 * (envelope / reference).log10();
    let y = (1.0 + db / style.log_compression_db).clamp(0.0, 1.0);
    (255.0 * style.grain_gain * y.powf(style.gamma)).round().clamp(0.0, 255.0) as u8
}
