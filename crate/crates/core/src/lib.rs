//! Data handling, synthetic carotid phantoms and evaluation metrics for
//! unpaired ultrasound harmonization and denoising.

pub mod dataset;
pub mod error;
pub mod image;
pub mod mask;
pub mod metrics;
pub mod phantom;

pub use dataset::{build_dataset, build_named_dataset, DomainDataset, ManifestRow};
pub use error::{Error, Result};
pub use image::{
    denormalize, load_image, load_image_with, normalize_intensity, resample_to_canonical, Image,
    LoadOptions, PixelForm,
};
pub use mask::{RoiLabel, RoiMaskSet};
