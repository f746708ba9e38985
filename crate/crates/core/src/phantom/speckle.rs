//! Fully developed speckle: white complex scatterers blurred by an
//! anisotropic Gaussian point-spread function.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::StyleProfile;

/// Unit-energy 1-D Gaussian taps (sum of squares equals one).
pub(crate) fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let energy = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.into_iter().map(|t| t / energy).collect()
}

fn convolve_rows(src: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    let (h, w) = src.dim();
    let r = taps.len() / 2;
    let out_w = w - 2 * r;
    Array2::from_shape_fn((h, out_w), |(i, j)| {
        taps.iter().enumerate().map(|(k, t)| t * src[[i, j + k]]).sum()
    })
}

fn convolve_cols(src: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    let (h, w) = src.dim();
    let r = taps.len() / 2;
    let out_h = h - 2 * r;
    Array2::from_shape_fn((out_h, w), |(i, j)| {
        taps.iter().enumerate().map(|(k, t)| t * src[[i + k, j]]).sum()
    })
}

/// Speckle envelope of shape `(height, width)`.
///
/// Real and imaginary scatterer amplitudes are independent `N(0, 1/2)`; after
/// filtering with unit-energy taps the envelope has unit mean square and a
/// Rayleigh marginal. Lateral blur runs along columns, axial blur along rows.
pub fn synth_speckle_field(size: (usize, usize), psf: &StyleProfile, seed: u64) -> Array2<f64> {
    synth_envelope(size, psf.psf_sigma_axial, psf.psf_sigma_lateral, seed)
}

pub(crate) fn synth_envelope(
    size: (usize, usize),
    sigma_axial: f64,
    sigma_lateral: f64,
    seed: u64,
) -> Array2<f64> {
    let (h, w) = size;
    let lat = gaussian_taps(sigma_lateral);
    let ax = gaussian_taps(sigma_axial);
    let (pad_h, pad_w) = (ax.len() / 2, lat.len() / 2);
    let (fh, fw) = (h + 2 * pad_h, w + 2 * pad_w);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut draw = || Array2::from_shape_fn((fh, fw), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * scale
    });
    let re = draw();
    let im = draw();

    let blur = |f: &Array2<f64>| convolve_cols(&convolve_rows(f, &lat), &ax);
    let re = blur(&re);
    let im = blur(&im);
    ndarray::Zip::from(&re)
        .and(&im)
        .map_collect(|a, b| a.hypot(*b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(lat: f64, ax: f64) -> StyleProfile {
        StyleProfile {
            psf_sigma_lateral: lat,
            psf_sigma_axial: ax,
            log_compression_db: 50.0,
            gamma: 1.0,
            grain_gain: 1.0,
        }
    }

    #[test]
    fn taps_have_unit_energy() {
        for s in [0.3, 1.0, 2.5] {
            let t = gaussian_taps(s);
            approx::assert_abs_diff_eq!(t.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_eq!(t.len() % 2, 1);
        }
    }

    #[test]
    fn same_seed_same_field() {
        let p = profile(1.5, 0.8);
        let a = synth_speckle_field((40, 50), &p, 99);
        let b = synth_speckle_field((40, 50), &p, 99);
        assert_eq!(a.dim(), (40, 50));
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synth_speckle_field((40, 50), &p, 100);
        assert_ne!(a, c);
    }

    /// Lateral lag at which the mean intensity autocorrelation coefficient
    /// first drops below one half, linearly interpolated.
    fn half_width(p: &StyleProfile) -> f64 {
        let mut acf = [0.0; 16];
        for seed in 0..20 {
            let f = synth_speckle_field((64, 96), p, seed).mapv(|v| v * v);
            let mean = f.mean().unwrap();
            let g = f.mapv(|v| v - mean);
            let var = g.mapv(|v| v * v).mean().unwrap();
            for (lag, slot) in acf.iter_mut().enumerate() {
                let (h, w) = g.dim();
                let mut s = 0.0;
                for r in 0..h {
                    for c in 0..w - lag {
                        s += g[[r, c]] * g[[r, c + lag]];
                    }
                }
                *slot += s / ((h * (w - lag)) as f64 * var) / 20.0;
            }
        }
        let k = acf.iter().position(|&v| v < 0.5).expect("decorrelates within 16 px");
        (k - 1) as f64 + (acf[k - 1] - 0.5) / (acf[k - 1] - acf[k])
    }

    #[test]
    fn correlation_length_grows_with_psf() {
        let widths: Vec<f64> = [0.6, 1.2, 2.4].iter().map(|&s| half_width(&profile(s, 1.0))).collect();
        assert!(widths.windows(2).all(|w| w[1] > w[0]), "{widths:?}");
    }

    #[test]
    fn envelope_is_rayleigh() {
        let f = synth_speckle_field((320, 320), &profile(0.7, 0.7), 7);
        let mut xs: Vec<f64> = f.iter().copied().collect();
        let n = xs.len() as f64;
        assert!(n >= 1e5);
        // maximum-likelihood Rayleigh scale
        let sigma2 = xs.iter().map(|x| x * x).sum::<f64>() / (2.0 * n);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-x * x / (2.0 * sigma2)).exp();
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS statistic {ks}");
        approx::assert_abs_diff_eq!(2.0 * sigma2, 1.0, epsilon = 0.05);
    }
}
