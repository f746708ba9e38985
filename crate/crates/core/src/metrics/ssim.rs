//! Gaussian-windowed SSIM with a full-resolution map so tissue ROIs can be
//! averaged separately.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::Image;

pub const WINDOW_SIDE: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn window_taps() -> [f64; WINDOW_SIDE] {
    let r = (WINDOW_SIDE / 2) as f64;
    let mut taps = [0.0; WINDOW_SIDE];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - r;
        *t = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

fn filter(src: &Array2<f64>, taps: &[f64; WINDOW_SIDE]) -> Array2<f64> {
    let (h, w) = src.dim();
    let r = (WINDOW_SIDE / 2) as isize;
    let rows = Array2::from_shape_fn((h, w), |(i, j)| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * src[[i, reflect(j as isize + k as isize - r, w)]])
            .sum::<f64>()
    });
    Array2::from_shape_fn((h, w), |(i, j)| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * rows[[reflect(i as isize + k as isize - r, h), j]])
            .sum::<f64>()
    })
}

/// Per-pixel SSIM between two stored images of equal size.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Array2<f64>> {
    let (a, b) = (a.stored_f64()?, b.stored_f64()?);
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(a.dim(), b.dim()));
    }
    let taps = window_taps();
    let mu_a = filter(&a, &taps);
    let mu_b = filter(&b, &taps);
    let e_aa = filter(&(&a * &a), &taps);
    let e_bb = filter(&(&b * &b), &taps);
    let e_ab = filter(&(&a * &b), &taps);
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    Ok(Array2::from_shape_fn(a.dim(), |idx| {
        let (ma, mb) = (mu_a[idx], mu_b[idx]);
        let var_a = e_aa[idx] - ma * ma;
        let var_b = e_bb[idx] - mb * mb;
        let cov = e_ab[idx] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        num / den
    }))
}

/// Mean of an SSIM map over an ROI.
pub fn roi_ssim(map: &Array2<f64>, mask: &Array2<bool>) -> Result<f64> {
    if map.dim() != mask.dim() {
        return Err(Error::ShapeMismatch(map.dim(), mask.dim()));
    }
    let (sum, n) = map
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    if n == 0 {
        return Err(Error::EmptyRegion("SSIM ROI"));
    }
    Ok(sum / n as f64)
}

/// Whole-image SSIM: the mean of the full map.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let map = ssim_map(a, b)?;
    Ok(map.mean().expect("non-empty image"))
}
