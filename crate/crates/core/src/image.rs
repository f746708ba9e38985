//! Single-channel intensity rasters in their 8-bit storage form and the
//! [-1, 1] working form consumed by the networks.

use std::path::Path;

use image::{DynamicImage, GrayImage};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Smallest accepted side length for [`resample_to_canonical`].
pub const MIN_CANONICAL_SIDE: usize = 16;

/// Default canonical side length of the training and evaluation rasters.
pub const DEFAULT_CANONICAL_SIDE: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelForm {
    Stored8Bit,
    Normalized,
}

impl PixelForm {
    fn name(self) -> &'static str {
        match self {
            PixelForm::Stored8Bit => "stored 8-bit",
            PixelForm::Normalized => "normalized",
        }
    }
}

/// A grayscale image, indexed `[row, column]`.
///
/// The stored form holds integer intensities in `[0, 255]`; the normalized
/// form holds reals in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Image {
    Stored(Array2<u8>),
    Normalized(Array2<f32>),
}

impl Image {
    /// Wraps normalized pixels, rejecting values outside `[-1, 1]`.
    pub fn normalized(pixels: Array2<f32>) -> Result<Self> {
        if pixels.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::WrongForm {
                expected: "values in [-1, 1]",
                actual: "out-of-range values",
            });
        }
        Ok(Image::Normalized(pixels))
    }

    pub fn form(&self) -> PixelForm {
        match self {
            Image::Stored(_) => PixelForm::Stored8Bit,
            Image::Normalized(_) => PixelForm::Normalized,
        }
    }

    /// `(height, width)` in pixels.
    pub fn dim(&self) -> (usize, usize) {
        match self {
            Image::Stored(p) => p.dim(),
            Image::Normalized(p) => p.dim(),
        }
    }

    pub fn height(&self) -> usize {
        self.dim().0
    }

    pub fn width(&self) -> usize {
        self.dim().1
    }

    pub fn as_stored(&self) -> Result<&Array2<u8>> {
        match self {
            Image::Stored(p) => Ok(p),
            other => Err(wrong_form(PixelForm::Stored8Bit, other.form())),
        }
    }

    pub fn as_normalized(&self) -> Result<&Array2<f32>> {
        match self {
            Image::Normalized(p) => Ok(p),
            other => Err(wrong_form(PixelForm::Normalized, other.form())),
        }
    }

    /// Intensities of the stored form as `f64`.
    pub fn stored_f64(&self) -> Result<Array2<f64>> {
        Ok(self.as_stored()?.mapv(f64::from))
    }

    /// Writes the stored form as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let pixels = self.as_stored()?;
        let (h, w) = pixels.dim();
        let buf: Vec<u8> = pixels.iter().copied().collect();
        let img = GrayImage::from_raw(w as u32, h as u32, buf)
            .expect("buffer length matches dimensions");
        img.save(path.as_ref())?;
        Ok(())
    }
}

fn wrong_form(expected: PixelForm, actual: PixelForm) -> Error {
    Error::WrongForm {
        expected: expected.name(),
        actual: actual.name(),
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Convert RGB(A) captures to luminance with Rec. 601 weights.
    pub to_grayscale: bool,
}

/// Loads an 8-bit grayscale raster (PNG or TIFF).
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    load_image_with(path, LoadOptions::default())
}

pub fn load_image_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Image> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let decoded = image::open(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let gray = match decoded {
        DynamicImage::ImageLuma8(g) => g,
        DynamicImage::ImageRgb8(rgb) if opts.to_grayscale => {
            luminance_601(rgb.pixels().map(|p| [p[0], p[1], p[2]]), rgb.width(), rgb.height())
        }
        DynamicImage::ImageRgba8(rgba) if opts.to_grayscale => {
            luminance_601(rgba.pixels().map(|p| [p[0], p[1], p[2]]), rgba.width(), rgba.height())
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            return Err(Error::MultiChannel {
                path: path.to_path_buf(),
                channels: decoded.color().channel_count(),
            })
        }
        other => {
            let color = other.color();
            return Err(Error::BitDepth {
                path: path.to_path_buf(),
                bits: color.bits_per_pixel() / u16::from(color.channel_count()),
            });
        }
    };
    let (w, h) = gray.dimensions();
    let pixels = Array2::from_shape_vec((h as usize, w as usize), gray.into_raw())
        .expect("raw buffer matches dimensions");
    Ok(Image::Stored(pixels))
}

fn luminance_601(pixels: impl Iterator<Item = [u8; 3]>, w: u32, h: u32) -> GrayImage {
    let buf = pixels
        .map(|[r, g, b]| {
            let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::from_raw(w, h, buf).expect("buffer length matches dimensions")
}

/// Bilinear resampling of a stored image onto a `(height, width)` grid with
/// corner pixels aligned. Output is rounded and clipped to `[0, 255]`.
///
/// Aspect ratio is not preserved: the source is stretched onto the target.
pub fn resample_bilinear(img: &Image, size: (usize, usize)) -> Result<Image> {
    let src = img.as_stored()?;
    let (out_h, out_w) = size;
    if out_h == 0 || out_w == 0 {
        return Err(Error::DegenerateSize(out_h, out_w));
    }
    let (in_h, in_w) = src.dim();
    if (in_h, in_w) == size {
        return Ok(img.clone());
    }
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|c| coord(c, out_w, in_w)).collect();
    let out = Array2::from_shape_fn((out_h, out_w), |(r, c)| {
        let (r0, r1, fy) = coord(r, out_h, in_h);
        let (c0, c1, fx) = cols[c];
        let v = |rr: usize, cc: usize| f64::from(src[[rr, cc]]);
        let top = v(r0, c0) * (1.0 - fx) + v(r0, c1) * fx;
        let bottom = v(r1, c0) * (1.0 - fx) + v(r1, c1) * fx;
        let value = top * (1.0 - fy) + bottom * fy;
        value.round().clamp(0.0, 255.0) as u8
    });
    Ok(Image::Stored(out))
}

/// Resamples onto the canonical training grid (default 400x400).
pub fn resample_to_canonical(img: &Image, size: (usize, usize)) -> Result<Image> {
    if size.0 < MIN_CANONICAL_SIDE || size.1 < MIN_CANONICAL_SIDE {
        return Err(Error::DegenerateSize(size.0, size.1));
    }
    resample_bilinear(img, size)
}

/// Maps stored intensities to `[-1, 1]` via `v / 127.5 - 1`.
pub fn normalize_intensity(img: &Image) -> Result<Image> {
    let src = img.as_stored()?;
    Ok(Image::Normalized(src.mapv(|v| f32::from(v) / 127.5 - 1.0)))
}

/// Inverse of [`normalize_intensity`], clipping to `[0, 255]` and rounding.
pub fn denormalize(img: &Image) -> Result<Image> {
    let src = img.as_normalized()?;
    Ok(Image::Stored(src.mapv(denormalize_value)))
}

pub fn denormalize_value(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}
