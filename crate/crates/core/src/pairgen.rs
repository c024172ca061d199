//! Side-by-side (clean | degraded) composites for paired translation training.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    derive_manifest, write_text, DatasetManifest, ManifestEntry, Split, Transform,
};
use crate::error::{Error, Result};
use crate::parallel::map_bounded;
use crate::raster::RasterImage;
use crate::resample::degrade;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairLayout {
    /// Clean target view on the left, degraded input view on the right.
    #[default]
    ALeftBRight,
}

/// Degradation levels for pair synthesis, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    resolutions: Vec<u32>,
    layout: PairLayout,
}

impl PairSpec {
    pub fn new(resolutions: Vec<u32>) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::InvalidPairSpec("no resolutions given".into()));
        }
        if resolutions[0] == 0 {
            return Err(Error::InvalidPairSpec("resolution 0".into()));
        }
        if let Some(w) = resolutions.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPairSpec(format!(
                "resolutions must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        Ok(PairSpec {
            resolutions,
            layout: PairLayout::ALeftBRight,
        })
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn layout(&self) -> PairLayout {
        self.layout
    }

    pub fn check_source(&self, width: u32, height: u32) -> Result<()> {
        let max = *self.resolutions.last().expect("non-empty");
        if max >= width || max >= height {
            return Err(Error::InvalidPairSpec(format!(
                "resolution {max} does not reduce {width}x{height} sources"
            )));
        }
        Ok(())
    }
}

/// A `2w x h` composite of a source image and its degraded view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairImage {
    pub source_id: String,
    pub low: u32,
    pub composite: RasterImage,
}

impl PairImage {
    pub fn left(&self) -> RasterImage {
        let w = self.composite.width() / 2;
        self.composite.crop(0, 0, w, self.composite.height())
    }

    pub fn right(&self) -> RasterImage {
        let w = self.composite.width() / 2;
        self.composite.crop(w, 0, w, self.composite.height())
    }
}

pub fn make_pair(source_id: &str, img: &RasterImage, low: u32) -> Result<PairImage> {
    let degraded = degrade(img, low, low)?;
    let (w, h) = img.dims();
    let mut composite = RasterImage::filled(2 * w, h, [0, 0, 0], img.gsd_cm())?;
    composite.paste(img, 0, 0);
    composite.paste(&degraded, w, 0);
    Ok(PairImage {
        source_id: source_id.to_owned(),
        low,
        composite,
    })
}

pub fn pair_id(source_id: &str, low: u32) -> String {
    format!("{source_id}_r{low}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub source: String,
    pub low: u32,
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub name: String,
    pub layout: PairLayout,
    pub resolutions: Vec<u32>,
    pub pairs: Vec<PairRecord>,
}

/// Output of [`generate_pairs`]: a dataset manifest whose images are the
/// composites, plus the per-pair records.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub manifest: DatasetManifest,
    pub pairs: PairManifest,
}

impl PairSet {
    /// Writes `manifest.json` and `pairs.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.manifest.save(&dir.join("manifest.json"))?;
        let base = std::path::absolute(dir).map_err(|e| Error::io(dir, e))?;
        let mut portable = self.pairs.clone();
        for p in &mut portable.pairs {
            p.path = crate::dataset::relative_to(&base, &p.path)?;
        }
        let path = dir.join("pairs.json");
        let mut text = serde_json::to_string_pretty(&portable).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        text.push('\n');
        write_text(&path, &text)
    }
}

pub fn planned_pair_count(manifest: &DatasetManifest, spec: &PairSpec) -> usize {
    manifest.len() * spec.resolutions.len()
}

/// One composite per (entry, resolution), written to `<out_dir>/pairs/<id>_r<low>.png`.
pub fn generate_pairs(
    manifest: &DatasetManifest,
    spec: &PairSpec,
    name: &str,
    out_dir: &Path,
    workers: usize,
) -> Result<PairSet> {
    manifest.require_assigned_splits()?;
    if manifest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pair_dir = out_dir.join("pairs");
    let produced = map_bounded(
        workers,
        &manifest.entries,
        |entry| -> Result<Vec<(ManifestEntry, PairRecord)>> {
            let img = RasterImage::read_png(&entry.image_path, manifest.gsd_cm)?;
            spec.check_source(img.width(), img.height())
                .map_err(|e| Error::InvalidPairSpec(format!("{}: {e}", entry.id)))?;
            let split = entry.split.expect("splits checked");
            let mut out = Vec::with_capacity(spec.resolutions.len());
            for &low in &spec.resolutions {
                let pair = make_pair(&entry.id, &img, low)?;
                let id = pair_id(&entry.id, low);
                let path = pair_dir.join(format!("{id}.png"));
                pair.composite.write_png(&path)?;
                let derived = ManifestEntry::new(id.clone(), path.clone(), entry.mask_path.clone())
                    .with_parent(entry.id.clone());
                out.push((
                    derived,
                    PairRecord {
                        id,
                        source: entry.id.clone(),
                        low,
                        path,
                        split,
                    },
                ));
            }
            Ok(out)
        },
    );

    let mut entries = Vec::with_capacity(planned_pair_count(manifest, spec));
    let mut records = Vec::with_capacity(entries.capacity());
    for batch in produced {
        for (e, r) in batch? {
            entries.push(e);
            records.push(r);
        }
    }
    let transform = Transform::new("pairs")
        .param("resolutions", &spec.resolutions)
        .param("layout", spec.layout)
        .param("upscale", "nearest")
        .param("downscale", "lanczos3");
    let manifest = derive_manifest(manifest, name, manifest.gsd_cm, transform, entries)?;
    Ok(PairSet {
        manifest,
        pairs: PairManifest {
            name: name.to_owned(),
            layout: spec.layout,
            resolutions: spec.resolutions.clone(),
            pairs: records,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;

    fn gradient(w: u32, h: u32) -> RasterImage {
        let px = (0..h)
            .flat_map(|y| {
                (0..w).flat_map(move |x| {
                    [
                        (x * 255 / w) as u8,
                        (y * 255 / h) as u8,
                        ((x ^ y) & 0xff) as u8,
                    ]
                })
            })
            .collect();
        RasterImage::new(w, h, px, Rational::integer(20).unwrap()).unwrap()
    }

    #[test]
    fn spec_invariants() {
        assert!(PairSpec::new(vec![32, 64, 96, 128, 192]).is_ok());
        assert!(PairSpec::new(vec![]).is_err());
        assert!(PairSpec::new(vec![64, 32]).is_err());
        assert!(PairSpec::new(vec![32, 32]).is_err());
        let s = PairSpec::new(vec![16, 256]).unwrap();
        assert!(s.check_source(256, 256).is_err());
        assert!(s.check_source(512, 512).is_ok());
    }

    #[test]
    fn halves_are_source_and_degraded_view() {
        let img = gradient(256, 256);
        let pair = make_pair("a", &img, 32).unwrap();
        assert_eq!(pair.composite.dims(), (512, 256));
        assert_eq!(pair.left(), img);
        assert_eq!(pair.right(), degrade(&img, 32, 32).unwrap());
        assert!(make_pair("a", &img, 256).is_err());
    }

    fn mean_degradation(img: &RasterImage, low: u32) -> f64 {
        img.mean_abs_diff(&degrade(img, low, low).unwrap()).unwrap()
    }

    #[test]
    fn coarser_levels_lose_more() {
        let img = gradient(256, 256);
        let levels = [32, 64, 96, 128, 192];
        let d: Vec<f64> = levels.iter().map(|&l| mean_degradation(&img, l)).collect();
        assert!(d.windows(2).all(|w| w[0] >= w[1]), "{d:?}");
    }
}
