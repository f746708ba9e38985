use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::histogram::{bhattacharyya, hist_correlation, histogram_of, Histogram, DEFAULT_BINS};
use super::risk::{contrast_db, gsm, reclassification_rate, GsmRegion, GSM_THRESHOLD};
use super::similarity::{histogram_similarity, MeanSd, Pairing, SetSimilarity, SimilarityMode};
use super::ssim::{roi_ssim, ssim_map};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{RoiLabel, RoiMaskSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub bins: usize,
    pub pairing: Pairing,
    pub gsm_region: GsmRegion,
    pub gsm_threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            pairing: Pairing::AllPairs,
            gsm_region: GsmRegion::PlaqueIm,
            gsm_threshold: GSM_THRESHOLD,
        }
    }
}

/// Metrics of one source image and its translation. `None` marks a value
/// that is undefined for the image (for example an empty ROI).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    /// Translated image vs target set, averaged over target images.
    pub bd: Option<f64>,
    pub hc: Option<f64>,
    /// Untranslated source image vs target set.
    pub bd_source: Option<f64>,
    pub hc_source: Option<f64>,
    pub ssim_whole: f64,
    pub ssim_lumen: Option<f64>,
    pub ssim_plaque_im: Option<f64>,
    pub ssim_adventitia: Option<f64>,
    pub gsm_in: Option<f64>,
    pub gsm_out: Option<f64>,
    pub contrast_in_db: Option<f64>,
    pub contrast_out_db: Option<f64>,
}

pub const FIELD_NAMES: [&str; 12] = [
    "bd",
    "hc",
    "bd_source",
    "hc_source",
    "ssim_whole",
    "ssim_lumen",
    "ssim_plaque_im",
    "ssim_adventitia",
    "gsm_in",
    "gsm_out",
    "contrast_in_db",
    "contrast_out_db",
];

impl ImageMetrics {
    pub fn fields(&self) -> [Option<f64>; 12] {
        [
            self.bd,
            self.hc,
            self.bd_source,
            self.hc_source,
            Some(self.ssim_whole),
            self.ssim_lumen,
            self.ssim_plaque_im,
            self.ssim_adventitia,
            self.gsm_in,
            self.gsm_out,
            self.contrast_in_db,
            self.contrast_out_db,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub options: EvalOptions,
    pub per_image: Vec<ImageMetrics>,
    /// Mean(SD) of every per-image field over the rows where it is defined.
    pub aggregates: BTreeMap<String, MeanSd>,
    pub source_vs_target: Option<SetSimilarity>,
    pub translated_vs_target: Option<SetSimilarity>,
    pub reclassified_count: usize,
    pub reclassified_fraction: f64,
}

pub fn aggregate(rows: &[ImageMetrics]) -> BTreeMap<String, MeanSd> {
    let mut out = BTreeMap::new();
    for (k, name) in FIELD_NAMES.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r.fields()[k]).collect();
        if let Some(stat) = MeanSd::of(&vals) {
            out.insert((*name).to_string(), stat);
        }
    }
    out
}

fn mean_against(h: &Histogram, targets: &[Histogram]) -> (Option<f64>, Option<f64>) {
    let bd: Result<Vec<f64>> = targets.iter().map(|t| bhattacharyya(h, t)).collect();
    let hc: Result<Vec<f64>> = targets.iter().map(|t| hist_correlation(h, t)).collect();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    (bd.ok().map(mean), hc.ok().map(mean))
}

fn evaluate_one(
    name: &str,
    source: &Image,
    translated: &Image,
    mask: &RoiMaskSet,
    h_src: &Histogram,
    h_out: &Histogram,
    targets: &[Histogram],
    opts: &EvalOptions,
) -> Result<ImageMetrics> {
    let map = ssim_map(source, translated)?;
    let roi = |label| roi_ssim(&map, &mask.region(label)).ok();
    let (bd, hc) = mean_against(h_out, targets);
    let (bd_source, hc_source) = mean_against(h_src, targets);
    Ok(ImageMetrics {
        name: name.to_string(),
        bd,
        hc,
        bd_source,
        hc_source,
        ssim_whole: map.mean().expect("non-empty"),
        ssim_lumen: roi(RoiLabel::Lumen),
        ssim_plaque_im: roi(RoiLabel::PlaqueOrIm),
        ssim_adventitia: roi(RoiLabel::Adventitia),
        gsm_in: gsm(source, mask, opts.gsm_region).ok(),
        gsm_out: gsm(translated, mask, opts.gsm_region).ok(),
        contrast_in_db: contrast_db(source, mask).ok().map(|c| c.db),
        contrast_out_db: contrast_db(translated, mask).ok().map(|c| c.db),
    })
}

/// Full evaluation of a translated set. `source`, `translated`, `masks` and
/// `names` are index-aligned; `target` is an unpaired reference set.
pub fn evaluate_experiment(
    names: &[String],
    source: &[Image],
    translated: &[Image],
    target: &[Image],
    masks: &[RoiMaskSet],
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let n = source.len();
    for len in [translated.len(), masks.len(), names.len()] {
        if len != n {
            return Err(Error::LengthMismatch(n, len));
        }
    }
    if n == 0 || target.is_empty() {
        return Err(Error::InsufficientPairs);
    }
    let hist = |set: &[Image]| -> Result<Vec<Histogram>> {
        set.par_iter().map(|im| histogram_of(im, None, opts.bins)).collect()
    };
    let (h_src, h_out, h_tgt) = (hist(source)?, hist(translated)?, hist(target)?);

    let per_image = (0..n)
        .into_par_iter()
        .map(|i| {
            evaluate_one(
                &names[i],
                &source[i],
                &translated[i],
                &masks[i],
                &h_src[i],
                &h_out[i],
                &h_tgt,
                opts,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let (gin, gout): (Vec<f64>, Vec<f64>) = per_image
        .iter()
        .filter_map(|r| Some((r.gsm_in?, r.gsm_out?)))
        .unzip();
    let (reclassified_count, reclassified_fraction) =
        reclassification_rate(&gin, &gout, opts.gsm_threshold)?;

    Ok(MetricReport {
        n,
        options: opts.clone(),
        aggregates: aggregate(&per_image),
        source_vs_target: histogram_similarity(&h_src, &h_tgt, opts.pairing, SimilarityMode::Cross).ok(),
        translated_vs_target: histogram_similarity(&h_out, &h_tgt, opts.pairing, SimilarityMode::Cross).ok(),
        per_image,
        reclassified_count,
        reclassified_fraction,
    })
}

impl MetricReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// One row per image; undefined values are left empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["name"];
        header.extend(FIELD_NAMES);
        w.write_record(&header)?;
        for row in &self.per_image {
            let mut rec = vec![row.name.clone()];
            rec.extend(row.fields().iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
