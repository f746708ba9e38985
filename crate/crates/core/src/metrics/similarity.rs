use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::histogram::{bhattacharyya, hist_correlation, histogram_of, Histogram};
use crate::error::{Error, Result};
use crate::image::Image;

/// Which image pairs enter a set-level similarity estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    AllPairs,
    /// `k` pairs drawn without replacement with a fixed seed.
    Sampled(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Every image of X against every image of Y.
    Cross,
    /// Distinct pairs within X; Y is ignored.
    Within,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ({:.3})", self.mean, self.sd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSimilarity {
    pub bd: MeanSd,
    pub hc: MeanSd,
    pub n_pairs: usize,
}

const SAMPLING_SEED: u64 = 0x5eed_0f_b4_11c3;

fn pair_indices(nx: usize, ny: usize, mode: SimilarityMode, pairing: Pairing) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = match mode {
        SimilarityMode::Cross => (0..nx).flat_map(|i| (0..ny).map(move |j| (i, j))).collect(),
        SimilarityMode::Within => (0..nx).flat_map(|i| (i + 1..nx).map(move |j| (i, j))).collect(),
    };
    match pairing {
        Pairing::Sampled(k) if k < all.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(SAMPLING_SEED);
            let mut picked = sample(&mut rng, all.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i]).collect()
        }
        _ => all,
    }
}

/// BD and HC mean(SD) over image pairs drawn from two sets.
pub fn domain_similarity(
    set_x: &[Image],
    set_y: &[Image],
    pairing: Pairing,
    mode: SimilarityMode,
    bins: usize,
) -> Result<SetSimilarity> {
    let hx = set_x
        .iter()
        .map(|im| histogram_of(im, None, bins))
        .collect::<Result<Vec<_>>>()?;
    let hy = match mode {
        SimilarityMode::Cross => set_y
            .iter()
            .map(|im| histogram_of(im, None, bins))
            .collect::<Result<Vec<_>>>()?,
        SimilarityMode::Within => Vec::new(),
    };
    histogram_similarity(&hx, &hy, pairing, mode)
}

pub fn histogram_similarity(
    hx: &[Histogram],
    hy: &[Histogram],
    pairing: Pairing,
    mode: SimilarityMode,
) -> Result<SetSimilarity> {
    let pairs = pair_indices(hx.len(), hy.len(), mode, pairing);
    if pairs.is_empty() {
        return Err(Error::InsufficientPairs);
    }
    let other = |j: usize| match mode {
        SimilarityMode::Cross => &hy[j],
        SimilarityMode::Within => &hx[j],
    };
    let mut bds = Vec::with_capacity(pairs.len());
    let mut hcs = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        bds.push(bhattacharyya(&hx[i], other(j))?);
        hcs.push(hist_correlation(&hx[i], other(j))?);
    }
    Ok(SetSimilarity {
        bd: MeanSd::of(&bds).expect("non-empty"),
        hc: MeanSd::of(&hcs).expect("non-empty"),
        n_pairs: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn ramp(offset: u8) -> Image {
        Image::Stored(Array2::from_shape_fn((8, 8), |(r, c)| (r * 8 + c) as u8 * 2 + offset))
    }

    #[test]
    fn single_image_within_is_insufficient() {
        let x = vec![ramp(0)];
        assert!(matches!(
            domain_similarity(&x, &x, Pairing::AllPairs, SimilarityMode::Within, 256),
            Err(Error::InsufficientPairs)
        ));
    }

    #[test]
    fn identical_single_image_cross() {
        let x = vec![ramp(3)];
        let s = domain_similarity(&x, &x.clone(), Pairing::AllPairs, SimilarityMode::Cross, 256).unwrap();
        assert_eq!(s.bd.mean, 0.0);
        assert_eq!(s.hc.mean, 1.0);
        assert_eq!(s.n_pairs, 1);
    }

    #[test]
    fn pair_counts() {
        assert_eq!(pair_indices(3, 4, SimilarityMode::Cross, Pairing::AllPairs).len(), 12);
        assert_eq!(pair_indices(4, 0, SimilarityMode::Within, Pairing::AllPairs).len(), 6);
        let s = pair_indices(30, 30, SimilarityMode::Cross, Pairing::Sampled(50));
        assert_eq!(s.len(), 50);
        assert_eq!(s, pair_indices(30, 30, SimilarityMode::Cross, Pairing::Sampled(50)));
        assert_eq!(pair_indices(2, 2, SimilarityMode::Cross, Pairing::Sampled(50)).len(), 4);
    }

    #[test]
    fn mean_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.sd), (2.0, 1.0));
        assert_eq!(MeanSd::of(&[5.0]).unwrap().sd, 0.0);
        assert!(MeanSd::of(&[]).is_none());
    }
}
