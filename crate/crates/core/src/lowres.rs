//! Low-resolution scenario: degrade a dataset, then run enhancers over the
//! degraded copy, keeping the source geometry and masks throughout.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{derive_manifest, DatasetManifest, ManifestEntry, Transform};
use crate::enhance::{run_enhancer, EnhanceFailure, EnhanceOptions, EnhancerSpec};
use crate::error::{Error, Result};
use crate::parallel::map_bounded;
use crate::raster::{png_dimensions, RasterImage};
use crate::resample::degrade;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnhancerRef {
    Inline(EnhancerSpec),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEnhancer {
    /// Output dataset name, e.g. `P20lG`.
    pub name: String,
    pub enhancer: EnhancerRef,
}

/// Contents of `scenario.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub source_manifest: PathBuf,
    pub degrade_to: u32,
    /// Name of the degraded dataset; defaults to `<source>lr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_name: Option<String>,
    #[serde(default)]
    pub enhancers: Vec<ScenarioEnhancer>,
}

impl ScenarioSpec {
    /// Reads the spec; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ScenarioSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if spec.source_manifest.is_relative() {
            spec.source_manifest = base.join(&spec.source_manifest);
        }
        for e in &mut spec.enhancers {
            if let EnhancerRef::File(p) = &e.enhancer {
                let p = if p.is_relative() {
                    base.join(p)
                } else {
                    p.clone()
                };
                e.enhancer = EnhancerRef::Inline(EnhancerSpec::load(&p)?);
            }
        }
        Ok(spec)
    }

    pub fn lr_name(&self, source: &str) -> String {
        self.lr_name
            .clone()
            .unwrap_or_else(|| format!("{source}lr"))
    }

    pub fn validate(&self, source: &DatasetManifest) -> Result<()> {
        let mut names = HashSet::new();
        names.insert(self.lr_name(&source.name));
        for e in &self.enhancers {
            if !names.insert(e.name.clone()) {
                return Err(Error::InvalidScenario(format!(
                    "output name `{}` used twice",
                    e.name
                )));
            }
            match &e.enhancer {
                EnhancerRef::Inline(spec) => spec.validate()?,
                EnhancerRef::File(p) => {
                    return Err(Error::InvalidScenario(format!(
                        "unresolved enhancer file {}",
                        p.display()
                    )))
                }
            }
        }
        if self.degrade_to == 0 {
            return Err(Error::InvalidScenario("degrade_to must be positive".into()));
        }
        Ok(())
    }

    pub fn output_names(&self, source: &str) -> Vec<String> {
        std::iter::once(self.lr_name(source))
            .chain(self.enhancers.iter().map(|e| e.name.clone()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    /// Degraded dataset first, then one per enhancer in spec order.
    pub manifests: Vec<DatasetManifest>,
    pub failed: Vec<(String, EnhanceFailure)>,
}

/// Degrades `source` to `degrade_to` and back, storing the result as its own
/// dataset with the source masks.
pub fn degrade_manifest(
    source: &DatasetManifest,
    degrade_to: u32,
    name: &str,
    out_dir: &Path,
    workers: usize,
) -> Result<DatasetManifest> {
    source.require_assigned_splits()?;
    let first = source.entries.first().ok_or(Error::EmptyDataset)?;
    let (w, h) = png_dimensions(&first.image_path)?;
    if degrade_to >= w || degrade_to >= h || degrade_to == 0 {
        return Err(Error::InvalidDegradeTarget {
            low_w: degrade_to,
            low_h: degrade_to,
            width: w,
            height: h,
        });
    }
    let entries = map_bounded(workers, &source.entries, |entry| -> Result<ManifestEntry> {
        let img = RasterImage::read_png(&entry.image_path, source.gsd_cm)?;
        let low = degrade(&img, degrade_to, degrade_to)?;
        let image_path = out_dir.join("images").join(format!("{}.png", entry.id));
        low.write_png(&image_path)?;
        Ok(ManifestEntry::new(
            entry.id.clone(),
            image_path,
            entry.mask_path.clone(),
        ))
    });
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    let transform = Transform::new("degrade")
        .param("low", [degrade_to, degrade_to])
        .param("downscale", "lanczos3")
        .param("upscale", "nearest");
    derive_manifest(source, name, source.gsd_cm, transform, entries)
}

/// Runs the scenario and saves every output as `<out_root>/<name>/manifest.json`.
pub fn run_scenario(
    spec: &ScenarioSpec,
    out_root: &Path,
    opts: &EnhanceOptions,
) -> Result<ScenarioOutcome> {
    let source = DatasetManifest::load(&spec.source_manifest)?;
    spec.validate(&source)?;
    let first = source.entries.first().ok_or(Error::EmptyDataset)?;
    let dims = png_dimensions(&first.image_path)?;

    let lr_name = spec.lr_name(&source.name);
    let lr_dir = out_root.join(&lr_name);
    let lr = degrade_manifest(&source, spec.degrade_to, &lr_name, &lr_dir, opts.workers)?;
    lr.save(&lr_dir.join("manifest.json"))?;

    let mut manifests = vec![lr];
    let mut failed = Vec::new();
    for e in &spec.enhancers {
        let EnhancerRef::Inline(enhancer) = &e.enhancer else {
            unreachable!("validated above");
        };
        let dir = out_root.join(&e.name);
        let outcome = run_enhancer(&manifests[0], enhancer, dims, &e.name, &dir, opts)?;
        outcome.manifest.save(&dir.join("manifest.json"))?;
        failed.extend(outcome.failed.into_iter().map(|f| (e.name.clone(), f)));
        manifests.push(outcome.manifest);
    }
    Ok(ScenarioOutcome { manifests, failed })
}
