//! Directory-backed image sets for one acquisition domain.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{load_image, Image};
use crate::mask::{stem_of, RoiMaskSet};

pub const MANIFEST_NAME: &str = "manifest.csv";

/// One row of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub filename: String,
    pub sha256: String,
    pub height: usize,
    pub width: usize,
    pub has_mask: bool,
}

/// An ordered set of same-sized images, optionally with parallel masks.
#[derive(Clone, Debug)]
pub struct DomainDataset {
    pub name: String,
    pub images: Vec<PathBuf>,
    pub masks: Option<Vec<PathBuf>>,
    pub manifest_path: PathBuf,
    pub dims: (usize, usize),
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn load(&self, index: usize) -> Result<Image> {
        load_image(&self.images[index])
    }

    pub fn load_mask(&self, index: usize) -> Result<Option<RoiMaskSet>> {
        match &self.masks {
            Some(masks) => RoiMaskSet::load(&masks[index]).map(Some),
            None => Ok(None),
        }
    }

    pub fn load_all(&self) -> Result<Vec<Image>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }

    pub fn load_all_masks(&self) -> Result<Option<Vec<RoiMaskSet>>> {
        match &self.masks {
            Some(masks) => masks.iter().map(RoiMaskSet::load).collect::<Result<Vec<_>>>().map(Some),
            None => Ok(None),
        }
    }

    pub fn stems(&self) -> Vec<String> {
        self.images.iter().map(|p| stem_of(p)).collect()
    }
}

fn is_raster(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff"))
            .unwrap_or(false)
}

fn list_rasters(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| is_raster(p))
        .collect();
    files.sort();
    Ok(files)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Scans `dir` for images (lexicographic order), pairs masks from
/// `mask_dir` by file stem and writes `manifest.csv` into `dir`.
///
/// The dataset is named after the directory.
pub fn build_dataset(dir: impl AsRef<Path>, mask_dir: Option<&Path>) -> Result<DomainDataset> {
    let dir = dir.as_ref();
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    build_named_dataset(&name, dir, mask_dir)
}

pub fn build_named_dataset(
    name: &str,
    dir: impl AsRef<Path>,
    mask_dir: Option<&Path>,
) -> Result<DomainDataset> {
    let dir = dir.as_ref();
    let images = list_rasters(dir)?;
    if images.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()));
    }

    let mut dims = None;
    let mut rows = Vec::with_capacity(images.len());
    for path in &images {
        let img = load_image(path)?;
        let d = img.dim();
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => return Err(Error::ShapeMismatch(first, d)),
            _ => {}
        }
        rows.push(ManifestRow {
            filename: path.file_name().unwrap().to_string_lossy().into_owned(),
            sha256: sha256_file(path)?,
            height: d.0,
            width: d.1,
            has_mask: false,
        });
    }
    let dims = dims.expect("non-empty");

    let masks = match mask_dir {
        None => None,
        Some(mdir) => {
            let by_stem: BTreeMap<String, PathBuf> =
                list_rasters(mdir)?.into_iter().map(|p| (stem_of(&p), p)).collect();
            let image_stems: Vec<String> = images.iter().map(|p| stem_of(p)).collect();
            if let Some(orphan) = by_stem.keys().find(|s| !image_stems.contains(s)) {
                return Err(Error::UnmatchedMask(orphan.clone()));
            }
            let mut paired = Vec::with_capacity(images.len());
            for (stem, row) in image_stems.iter().zip(rows.iter_mut()) {
                let mpath = by_stem
                    .get(stem)
                    .ok_or_else(|| Error::MissingMask(stem.clone()))?;
                let mask = RoiMaskSet::load(mpath)?;
                if mask.dim() != dims {
                    return Err(Error::MaskSize {
                        stem: stem.clone(),
                        mask: mask.dim(),
                        image: dims,
                    });
                }
                row.has_mask = true;
                paired.push(mpath.clone());
            }
            Some(paired)
        }
    };

    let manifest_path = dir.join(MANIFEST_NAME);
    write_manifest(&manifest_path, &rows)?;

    Ok(DomainDataset {
        name: name.to_string(),
        images,
        masks,
        manifest_path,
        dims,
    })
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn put(dir: &Path, name: &str, h: usize, w: usize, v: u8) {
        fs::create_dir_all(dir).unwrap();
        Image::Stored(Array2::from_elem((h, w), v)).save_png(dir.join(name)).unwrap();
    }

    #[test]
    fn three_images_no_masks() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("A");
        for (i, n) in ["c.png", "a.png", "b.png"].iter().enumerate() {
            put(&dir, n, 16, 16, i as u8);
        }
        let ds = build_dataset(&dir, None).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.masks.is_none());
        assert_eq!(ds.name, "A");
        assert_eq!(ds.stems(), vec!["a", "b", "c"]);
        let rows = read_manifest(&ds.manifest_path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].filename, "a.png");
        assert_eq!((rows[0].height, rows[0].width, rows[0].has_mask), (16, 16, false));
        assert_eq!(rows[0].sha256.len(), 64);

        // rebuilding ignores the manifest and reproduces it exactly
        let first = fs::read(&ds.manifest_path).unwrap();
        let again = build_dataset(&dir, None).unwrap();
        assert_eq!(again.images, ds.images);
        assert_eq!(fs::read(&again.manifest_path).unwrap(), first);
    }

    #[test]
    fn parallel_masks() {
        let tmp = tempfile::tempdir().unwrap();
        let (idir, mdir) = (tmp.path().join("img"), tmp.path().join("mask"));
        for n in ["x.png", "y.png"] {
            put(&idir, n, 16, 16, 100);
            put(&mdir, n, 16, 16, 2);
        }
        let ds = build_dataset(&idir, Some(&mdir)).unwrap();
        assert_eq!(ds.masks.as_ref().unwrap().len(), 2);
        assert!(read_manifest(&ds.manifest_path).unwrap().iter().all(|r| r.has_mask));
        assert_eq!(ds.load_mask(1).unwrap().unwrap().dim(), (16, 16));
    }

    #[test]
    fn mask_size_mismatch_names_stem() {
        let tmp = tempfile::tempdir().unwrap();
        let (idir, mdir) = (tmp.path().join("img"), tmp.path().join("mask"));
        put(&idir, "good.png", 16, 16, 1);
        put(&idir, "offender.png", 16, 16, 1);
        put(&mdir, "good.png", 16, 16, 1);
        put(&mdir, "offender.png", 20, 16, 1);
        match build_dataset(&idir, Some(&mdir)) {
            Err(Error::MaskSize { stem, .. }) => assert_eq!(stem, "offender"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_and_unmatched() {
        let tmp = tempfile::tempdir().unwrap();
        let empty = tmp.path().join("empty");
        fs::create_dir_all(&empty).unwrap();
        assert!(matches!(build_dataset(&empty, None), Err(Error::EmptyDataset(_))));

        let (idir, mdir) = (tmp.path().join("img"), tmp.path().join("mask"));
        put(&idir, "a.png", 16, 16, 1);
        put(&mdir, "a.png", 16, 16, 1);
        put(&mdir, "stray.png", 16, 16, 1);
        assert!(matches!(build_dataset(&idir, Some(&mdir)), Err(Error::UnmatchedMask(s)) if s == "stray"));
    }

    #[test]
    fn mixed_image_sizes_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        put(tmp.path(), "a.png", 16, 16, 1);
        put(tmp.path(), "b.png", 32, 16, 1);
        assert!(matches!(build_dataset(tmp.path(), None), Err(Error::ShapeMismatch(..))));
    }
}
