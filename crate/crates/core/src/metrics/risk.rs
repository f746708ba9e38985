//! Image-based risk markers: grey scale median, blood-to-tissue contrast and
//! threshold reclassification.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{RoiLabel, RoiMaskSet};

/// Adventitia reference level of the GSM normalization.
pub const GSM_ADVENTITIA_LEVEL: f64 = 190.0;
/// Published GSM classification threshold.
pub const GSM_THRESHOLD: f64 = 25.0;
/// Floor applied to a zero lumen mean before taking the contrast logarithm.
pub const LUMEN_FLOOR: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GsmRegion {
    /// Median over the plaque / intima-media ROI.
    #[default]
    PlaqueIm,
    WholeImage,
}

impl std::str::FromStr for GsmRegion {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plaque_im" | "plaque" | "im" => Ok(Self::PlaqueIm),
            "whole_image" | "whole" => Ok(Self::WholeImage),
            other => Err(format!("unknown GSM region `{other}`")),
        }
    }
}

pub fn region_values(px: &Array2<f64>, mask: &Array2<bool>) -> Vec<f64> {
    px.iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect()
}

/// Mean intensity inside a mask; `None` when the mask is empty.
pub fn region_mean(px: &Array2<f64>, mask: &Array2<bool>) -> Option<f64> {
    let vals = region_values(px, mask);
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn roi(px: &Array2<f64>, masks: &RoiMaskSet, label: RoiLabel) -> Result<Vec<f64>> {
    if masks.dim() != px.dim() {
        return Err(Error::ShapeMismatch(masks.dim(), px.dim()));
    }
    let vals = region_values(px, &masks.region(label));
    if vals.is_empty() {
        return Err(Error::EmptyRegion(label.name()));
    }
    Ok(vals)
}

/// Grey scale median: the median of `190 * (I - mean(lumen)) / max(adventitia)`
/// over the chosen region. Values may be negative or exceed 190.
pub fn gsm(img: &Image, masks: &RoiMaskSet, region: GsmRegion) -> Result<f64> {
    let px = img.stored_f64()?;
    let lumen = roi(&px, masks, RoiLabel::Lumen)?;
    let adventitia = roi(&px, masks, RoiLabel::Adventitia)?;
    let lumen_mean = lumen.iter().sum::<f64>() / lumen.len() as f64;
    let adv_max = adventitia.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if adv_max <= 0.0 {
        return Err(Error::Undefined("GSM with a zero adventitia maximum"));
    }
    let mut values = match region {
        GsmRegion::PlaqueIm => roi(&px, masks, RoiLabel::PlaqueOrIm)?,
        GsmRegion::WholeImage => px.iter().copied().collect(),
    };
    values
        .iter_mut()
        .for_each(|v| *v = GSM_ADVENTITIA_LEVEL * (*v - lumen_mean) / adv_max);
    Ok(median(&mut values).expect("region checked non-empty"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub db: f64,
    /// The lumen mean was below [`LUMEN_FLOOR`] and was floored.
    pub lumen_floored: bool,
}

/// Blood-to-tissue contrast `20 log10(mean(lumen) / mean(adventitia))`;
/// a dark lumen gives strongly negative values.
pub fn contrast_db(img: &Image, masks: &RoiMaskSet) -> Result<Contrast> {
    let px = img.stored_f64()?;
    let lumen = roi(&px, masks, RoiLabel::Lumen)?;
    let adventitia = roi(&px, masks, RoiLabel::Adventitia)?;
    let lumen_mean = lumen.iter().sum::<f64>() / lumen.len() as f64;
    let adv_mean = adventitia.iter().sum::<f64>() / adventitia.len() as f64;
    contrast_from_means(lumen_mean, adv_mean)
}

pub fn contrast_from_means(lumen_mean: f64, adventitia_mean: f64) -> Result<Contrast> {
    if adventitia_mean <= 0.0 {
        return Err(Error::Undefined("contrast with a zero adventitia mean"));
    }
    let lumen_floored = lumen_mean < LUMEN_FLOOR;
    let lumen = if lumen_floored { LUMEN_FLOOR } else { lumen_mean };
    Ok(Contrast {
        db: 20.0 * (lumen / adventitia_mean).log10(),
        lumen_floored,
    })
}

/// Number and fraction of cases whose GSM class (below threshold or not)
/// changes. A value equal to the threshold is not below it.
pub fn reclassification_rate(gsm_in: &[f64], gsm_out: &[f64], threshold: f64) -> Result<(usize, f64)> {
    if gsm_in.len() != gsm_out.len() {
        return Err(Error::LengthMismatch(gsm_in.len(), gsm_out.len()));
    }
    let count = gsm_in
        .iter()
        .zip(gsm_out)
        .filter(|(&a, &b)| (a < threshold) != (b < threshold))
        .count();
    let fraction = if gsm_in.is_empty() {
        0.0
    } else {
        count as f64 / gsm_in.len() as f64
    };
    Ok((count, fraction))
}
