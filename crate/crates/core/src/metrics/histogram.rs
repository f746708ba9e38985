use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_BINS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub counts: Vec<f64>,
    pub normalized: bool,
    /// Whether the histogram was restricted to an ROI.
    pub source_mask: bool,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn from_counts(counts: Vec<f64>) -> Self {
        Self {
            counts,
            normalized: false,
            source_mask: false,
        }
    }

    pub fn normalize(mut self) -> Self {
        let total: f64 = self.counts.iter().sum();
        if total > 0.0 {
            self.counts.iter_mut().for_each(|c| *c /= total);
        }
        self.normalized = true;
        self
    }
}

/// Normalized intensity histogram over `[0, 255]`, optionally restricted to
/// the pixels where `mask` is true.
pub fn histogram_of(img: &Image, mask: Option<&Array2<bool>>, bins: usize) -> Result<Histogram> {
    let px = img.as_stored()?;
    if bins < 2 {
        return Err(Error::BinMismatch(bins, 2));
    }
    if let Some(m) = mask {
        if m.dim() != px.dim() {
            return Err(Error::ShapeMismatch(m.dim(), px.dim()));
        }
    }
    let mut counts = vec![0.0; bins];
    let mut n = 0usize;
    for (idx, &v) in px.indexed_iter() {
        if mask.is_none_or(|m| m[idx]) {
            counts[usize::from(v) * bins / 256] += 1.0;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion("histogram mask"));
    }
    Ok(Histogram {
        counts,
        normalized: false,
        source_mask: mask.is_some(),
    }
    .normalize())
}

/// Bhattacharyya distance, in `[0, 1]`.
///
/// The `1 / sqrt(mean1 * mean2 * N^2)` factor equals `1 / sqrt(sum1 * sum2)`,
/// which is evaluated directly so identical inputs give exactly zero.
pub fn bhattacharyya(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    if h1.bins() != h2.bins() {
        return Err(Error::BinMismatch(h1.bins(), h2.bins()));
    }
    let (mut s1, mut s2, mut overlap) = (0.0, 0.0, 0.0);
    for (&a, &b) in h1.counts.iter().zip(&h2.counts) {
        s1 += a;
        s2 += b;
        overlap += (a * b).sqrt();
    }
    if s1 <= 0.0 || s2 <= 0.0 {
        return Err(Error::Undefined("Bhattacharyya distance of an empty histogram"));
    }
    Ok((1.0 - overlap / (s1 * s2).sqrt()).max(0.0).sqrt())
}

/// Pearson correlation between the bin vectors, in `[-1, 1]`.
pub fn hist_correlation(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    if h1.bins() != h2.bins() {
        return Err(Error::BinMismatch(h1.bins(), h2.bins()));
    }
    let n = h1.bins() as f64;
    let m1 = h1.counts.iter().sum::<f64>() / n;
    let m2 = h2.counts.iter().sum::<f64>() / n;
    let (mut num, mut v1, mut v2) = (0.0, 0.0, 0.0);
    for (&a, &b) in h1.counts.iter().zip(&h2.counts) {
        let (da, db) = (a - m1, b - m2);
        num += da * db;
        v1 += da * da;
        v2 += db * db;
    }
    if v1 == 0.0 || v2 == 0.0 {
        return Err(Error::Undefined("histogram correlation of a constant histogram"));
    }
    Ok((num / (v1 * v2).sqrt()).clamp(-1.0, 1.0))
}
