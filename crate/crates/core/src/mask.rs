use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{load_image, Image};

/// Tissue classes carried by a label raster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum RoiLabel {
    Background = 0,
    Lumen = 1,
    PlaqueOrIm = 2,
    Adventitia = 3,
}

impl RoiLabel {
    pub const ALL: [RoiLabel; 4] = [
        RoiLabel::Background,
        RoiLabel::Lumen,
        RoiLabel::PlaqueOrIm,
        RoiLabel::Adventitia,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RoiLabel::Background => "background",
            RoiLabel::Lumen => "lumen",
            RoiLabel::PlaqueOrIm => "plaque/IM",
            RoiLabel::Adventitia => "adventitia",
        }
    }
}

/// Per-pixel tissue labels for one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoiMaskSet {
    labels: Array2<u8>,
}

impl RoiMaskSet {
    pub fn new(labels: Array2<u8>) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&v| v > 3) {
            return Err(Error::BadLabel {
                stem: String::new(),
                label: bad,
            });
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// Boolean raster selecting one tissue class.
    pub fn region(&self, label: RoiLabel) -> Array2<bool> {
        let code = label as u8;
        self.labels.mapv(|v| v == code)
    }

    pub fn count(&self, label: RoiLabel) -> usize {
        let code = label as u8;
        self.labels.iter().filter(|&&v| v == code).count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = load_image(path)?;
        let labels = img.as_stored()?.clone();
        Self::new(labels).map_err(|e| match e {
            Error::BadLabel { label, .. } => Error::BadLabel {
                stem: stem_of(path),
                label,
            },
            other => other,
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        Image::Stored(self.labels.clone()).save_png(path)
    }
}

pub(crate) fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
