use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{frozen_profiles, render_phantom, NoiseProfile, PhantomSpec, Plaque, StyleProfile};
use crate::dataset::{build_named_dataset, DomainDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// System A plaque images translated towards system B.
    Harmonization,
    /// Noisy lumen images translated towards clear ones.
    Denoising,
}

impl ExperimentKind {
    /// `(source, target)` domain names.
    pub fn domains(self) -> (&'static str, &'static str) {
        match self {
            ExperimentKind::Harmonization => ("A", "B"),
            ExperimentKind::Denoising => ("C", "D"),
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "harmonization" => Ok(Self::Harmonization),
            "denoising" => Ok(Self::Denoising),
            other => Err(format!("unknown experiment kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentSplit {
    SourceTrain,
    TargetTrain,
    SourceTest,
}

impl ExperimentSplit {
    fn tag(self) -> u64 {
        match self {
            ExperimentSplit::SourceTrain => 1,
            ExperimentSplit::TargetTrain => 2,
            ExperimentSplit::SourceTest => 3,
        }
    }

    fn is_source(self) -> bool {
        !matches!(self, ExperimentSplit::TargetTrain)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-image seed. Distinct `(split, index)` pairs never share a seed for a
/// given base seed (`index < 2^40`).
pub fn image_seed(base_seed: u64, split: ExperimentSplit, index: usize) -> u64 {
    splitmix64(base_seed ^ (split.tag() << 40) ^ index as u64)
}

/// Draws geometry, style and noise for one phantom of a domain.
pub fn sample_phantom(
    kind: ExperimentKind,
    split: ExperimentSplit,
    size: (usize, usize),
    seed: u64,
) -> (PhantomSpec, StyleProfile, NoiseProfile) {
    let profiles = frozen_profiles();
    let g = &profiles.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    let scale_h = size.0 as f64 / g.reference_size as f64;
    let scale_w = size.1 as f64 / g.reference_size as f64;

    let top = g.lumen_top_frac.sample(&mut rng);
    let height = g.lumen_height_frac.sample(&mut rng);
    let wall = (g.wall_thickness_px.sample(&mut rng) * scale_h).round().max(2.0) as usize;
    let background = g.background_echogenicity.sample(&mut rng);

    let (style_key, noise_key, with_plaque) = match (kind, split.is_source()) {
        (ExperimentKind::Harmonization, true) => ("system_a", "mixed", true),
        (ExperimentKind::Harmonization, false) => ("system_b", "mixed", true),
        (ExperimentKind::Denoising, source) => {
            let style = if rng.random_bool(0.5) { "system_a" } else { "system_b" };
            (style, if source { "noisy" } else { "clear" }, false)
        }
    };
    let lumen_px = height * size.0 as f64;
    let plaque = with_plaque.then(|| Plaque {
        center_frac: g.plaque_center_frac.sample(&mut rng),
        axes_px: (
            g.plaque_lateral_axis_px.sample(&mut rng) * scale_w,
            (g.plaque_axial_axis_px.sample(&mut rng) * scale_h).min(0.6 * lumen_px),
        ),
        echogenicity: g.plaque_echogenicity.sample(&mut rng),
    });
    let noise = profiles.noise[noise_key].sample(&mut rng);

    let spec = PhantomSpec {
        size,
        lumen_band: (top, top + height),
        wall_thickness_px: wall,
        plaque,
        background_echogenicity: background,
        seed,
    };
    (spec, profiles.styles[style_key].clone(), noise)
}

fn write_domain(
    name: &str,
    kind: ExperimentKind,
    split: ExperimentSplit,
    n: usize,
    size: (usize, usize),
    out_dir: &Path,
    base_seed: u64,
) -> Result<DomainDataset> {
    let images_dir = out_dir.join(name).join("images");
    let masks_dir = out_dir.join(name).join("masks");
    fs::create_dir_all(&images_dir)?;
    fs::create_dir_all(&masks_dir)?;
    (0..n).into_par_iter().try_for_each(|i| -> Result<()> {
        let (spec, style, noise) = sample_phantom(kind, split, size, image_seed(base_seed, split, i));
        let (img, mask) = render_phantom(&spec, &style, &noise)?;
        let file = format!("{name}_{i:04}.png");
        img.save_png(images_dir.join(&file))?;
        mask.save_png(masks_dir.join(&file))
    })?;
    build_named_dataset(name, &images_dir, Some(&masks_dir))
}

/// Generates the unpaired training domains of one experiment under
/// `out_dir/<domain>/{images,masks}`.
pub fn make_experiment_datasets(
    kind: ExperimentKind,
    n_per_domain: usize,
    size: (usize, usize),
    out_dir: impl AsRef<Path>,
    base_seed: u64,
) -> Result<(DomainDataset, DomainDataset)> {
    if n_per_domain == 0 {
        return Err(Error::EmptyDataset(out_dir.as_ref().to_path_buf()));
    }
    let out_dir = out_dir.as_ref();
    let (src, tgt) = kind.domains();
    let source = write_domain(src, kind, ExperimentSplit::SourceTrain, n_per_domain, size, out_dir, base_seed)?;
    let target = write_domain(tgt, kind, ExperimentSplit::TargetTrain, n_per_domain, size, out_dir, base_seed)?;
    Ok((source, target))
}

/// Held-out source-domain images (`<domain>_test`) drawn from a seed range
/// disjoint from the training splits.
pub fn make_test_split(
    kind: ExperimentKind,
    n: usize,
    size: (usize, usize),
    out_dir: impl AsRef<Path>,
    base_seed: u64,
) -> Result<DomainDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset(out_dir.as_ref().to_path_buf()));
    }
    let name = format!("{}_test", kind.domains().0);
    write_domain(&name, kind, ExperimentSplit::SourceTest, n, size, out_dir.as_ref(), base_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn seeds_are_disjoint_across_splits() {
        let mut seen = HashSet::new();
        for split in [ExperimentSplit::SourceTrain, ExperimentSplit::TargetTrain, ExperimentSplit::SourceTest] {
            for i in 0..500 {
                assert!(seen.insert(image_seed(42, split, i)));
            }
        }
    }

    #[test]
    fn denoising_cardinality_and_masks() {
        let tmp = tempfile::tempdir().unwrap();
        let (c, d) = make_experiment_datasets(ExperimentKind::Denoising, 8, (64, 64), tmp.path(), 5).unwrap();
        assert_eq!((c.len(), d.len()), (8, 8));
        assert_eq!((c.name.as_str(), d.name.as_str()), ("C", "D"));
        assert_eq!(c.masks.as_ref().unwrap().len(), 8);
        assert_eq!(d.masks.as_ref().unwrap().len(), 8);
        assert_eq!(c.dims, (64, 64));
    }

    #[test]
    fn harmonization_domains_are_unpaired() {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = make_experiment_datasets(ExperimentKind::Harmonization, 6, (48, 48), tmp.path(), 1).unwrap();
        let a_imgs = a.load_all().unwrap();
        let b_imgs = b.load_all().unwrap();
        for x in &a_imgs {
            for y in &b_imgs {
                assert_ne!(x, y);
            }
        }
    }

    #[test]
    fn zero_images_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(make_experiment_datasets(ExperimentKind::Denoising, 0, (32, 32), tmp.path(), 0).is_err());
    }
}
