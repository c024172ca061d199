//! GSD harmonization: bring a dataset to a target GSD by Lanczos resizing or
//! an external enhancer, then cut the enlarged images into a patch grid.

use std::path::Path;

use serde::Serialize;

use crate::dataset::{derive_manifest, DatasetManifest, ManifestEntry, SplitCounts, Transform};
use crate::enhance::{run_enhancer, EnhanceFailure, EnhanceOptions, EnhancerSpec};
use crate::error::{Error, Result};
use crate::parallel::map_bounded;
use crate::raster::{png_dimensions, LabelMask, RasterImage};
use crate::rational::Rational;
use crate::resample::{anisotropy_warning, resize_image, resize_mask, resized_gsd, ResampleFilter};
use crate::tiler::{extract_patches, patch_id, plan_grid, TileGrid};

#[derive(Clone, Debug)]
pub enum Method {
    Lanczos,
    Enhancer(EnhancerSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridConfig {
    /// Patch side; defaults to the source image width.
    pub patch: Option<u32>,
    pub rows: u32,
    pub cols: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            patch: None,
            rows: 3,
            cols: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HarmonizeConfig {
    pub target_gsd_cm: Rational,
    pub grid: GridConfig,
    pub name: Option<String>,
    pub enhance: EnhanceOptions,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HarmonizePlan {
    pub name: String,
    pub source_dims: (u32, u32),
    pub target_dims: (u32, u32),
    pub target_gsd_cm: Rational,
    /// Patch grid over the resized images, when they grow.
    #[serde(skip)]
    pub grid: Option<TileGrid>,
    pub factor: usize,
    pub planned_entries: usize,
    pub planned_splits: SplitCounts,
}

#[derive(Clone, Debug)]
pub struct HarmonizeOutcome {
    pub manifest: DatasetManifest,
    pub failed: Vec<EnhanceFailure>,
}

/// Validates everything that can be checked without touching pixels.
pub fn plan_harmonize(
    manifest: &DatasetManifest,
    method: &Method,
    config: &HarmonizeConfig,
) -> Result<HarmonizePlan> {
    manifest.validate()?;
    manifest.require_assigned_splits()?;
    let first = manifest.entries.first().ok_or(Error::EmptyDataset)?;
    let source_dims = png_dimensions(&first.image_path)?;
    let ratio = manifest.gsd_cm / config.target_gsd_cm;
    let target_dims = match (
        ratio.times_integer(u64::from(source_dims.0)),
        ratio.times_integer(u64::from(source_dims.1)),
    ) {
        (Some(w), Some(h))
            if w > 0 && h > 0 && w <= u64::from(u32::MAX) && h <= u64::from(u32::MAX) =>
        {
            (w as u32, h as u32)
        }
        _ => {
            return Err(Error::Geometry(format!(
                "{}x{} at {} cm cannot be resampled to a whole number of pixels at {} cm",
                source_dims.0, source_dims.1, manifest.gsd_cm, config.target_gsd_cm
            )))
        }
    };
    let grows = target_dims.0 > source_dims.0 || target_dims.1 > source_dims.1;
    let grid = if grows {
        let patch = config.grid.patch.unwrap_or(source_dims.0);
        Some(plan_grid(
            target_dims.0,
            target_dims.1,
            patch,
            config.grid.rows,
            config.grid.cols,
        )?)
    } else {
        None
    };
    if target_dims == source_dims && matches!(method, Method::Lanczos) {
        return Err(Error::InvalidValue(format!(
            "{} is already at {} cm",
            manifest.name, config.target_gsd_cm
        )));
    }
    if let Method::Enhancer(spec) = method {
        spec.validate()?;
        spec.output_dims(source_dims)?;
        if spec.mode == crate::enhance::EnhanceMode::Tiled {
            spec.tile_grid(source_dims)?;
        }
    }
    let name = match (&config.name, method) {
        (Some(n), _) => n.clone(),
        (None, Method::Lanczos) => format!("{}-lanczos", manifest.name),
        (None, Method::Enhancer(spec)) => spec.derived_name(&manifest.name),
    };
    let factor = grid.as_ref().map_or(1, TileGrid::len);
    Ok(HarmonizePlan {
        name,
        source_dims,
        target_dims,
        target_gsd_cm: resized_gsd(manifest.gsd_cm, source_dims.0, target_dims.0)?,
        grid,
        factor,
        planned_entries: manifest.len() * factor,
        planned_splits: manifest.split_counts().scaled(factor),
    })
}

fn tile_entry(
    entry: &ManifestEntry,
    img: &RasterImage,
    mask: &LabelMask,
    grid: &TileGrid,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>> {
    extract_patches(img, mask, grid)?
        .into_iter()
        .map(|p| {
            let id = patch_id(&entry.id, p.index);
            let image_path = out_dir.join("images").join(format!("{id}.png"));
            let mask_path = out_dir.join("masks").join(format!("{id}.png"));
            p.image.write_png(&image_path)?;
            p.mask.write_png(&mask_path)?;
            Ok(ManifestEntry::new(id, image_path, mask_path).with_patch(entry.id.clone(), p.index))
        })
        .collect()
}

fn collect(per_entry: Vec<Result<Vec<ManifestEntry>>>) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for r in per_entry {
        out.extend(r?);
    }
    Ok(out)
}

fn grid_transform(grid: &TileGrid) -> Transform {
    Transform::new("tile")
        .param("patch", grid.patch())
        .param("rows", grid.rows())
        .param("cols", grid.cols())
        .param("x_offsets", grid.x_offsets())
        .param("y_offsets", grid.y_offsets())
}

/// Runs the harmonization pipeline and writes images and masks under
/// `out_dir`. The returned manifest is not saved.
pub fn harmonize(
    manifest: &DatasetManifest,
    method: &Method,
    config: &HarmonizeConfig,
    out_dir: &Path,
) -> Result<HarmonizeOutcome> {
    let plan = plan_harmonize(manifest, method, config)?;
    let (tw, th) = plan.target_dims;
    let workers = config.enhance.workers;

    match method {
        Method::Lanczos => {
            let mut resize = Transform::new("resize")
                .param("filter", "lanczos3")
                .param("target", [tw, th])
                .param("gsd_cm", plan.target_gsd_cm);
            if let Some(w) = anisotropy_warning(plan.source_dims, plan.target_dims) {
                resize.warn(w);
            }
            let mut resized = manifest.clone();
            resized.gsd_cm = plan.target_gsd_cm;
            resized.lineage.push(resize);
            let entries = map_bounded(workers, &manifest.entries, |entry| {
                let img = RasterImage::read_png(&entry.image_path, manifest.gsd_cm)?;
                let mask = LabelMask::read_png(&entry.mask_path)?;
                if img.dims() != plan.source_dims || mask.dims() != plan.source_dims {
                    return Err(Error::Geometry(format!(
                        "{}: unexpected image or mask size",
                        entry.id
                    )));
                }
                let big = resize_image(&img, tw, th, ResampleFilter::Lanczos3)?;
                let big_mask = resize_mask(&mask, tw, th)?;
                match &plan.grid {
                    Some(grid) => tile_entry(entry, &big, &big_mask, grid, out_dir),
                    None => {
                        let image_path = out_dir.join("images").join(format!("{}.png", entry.id));
                        let mask_path = out_dir.join("masks").join(format!("{}.png", entry.id));
                        big.write_png(&image_path)?;
                        big_mask.write_png(&mask_path)?;
                        Ok(vec![ManifestEntry::new(
                            entry.id.clone(),
                            image_path,
                            mask_path,
                        )])
                    }
                }
            });
            let entries = collect(entries)?;
            let (transform, parent) = match &plan.grid {
                Some(grid) => (grid_transform(grid), resized),
                None => {
                    let mut parent = resized;
                    let t = parent.lineage.pop().expect("resize pushed");
                    (t, parent)
                }
            };
            let derived =
                derive_manifest(&parent, &plan.name, plan.target_gsd_cm, transform, entries)?;
            Ok(HarmonizeOutcome {
                manifest: derived,
                failed: Vec::new(),
            })
        }
        Method::Enhancer(spec) => {
            let Some(grid) = &plan.grid else {
                let outcome = run_enhancer(
                    manifest,
                    spec,
                    plan.target_dims,
                    &plan.name,
                    out_dir,
                    &config.enhance,
                )?;
                return Ok(HarmonizeOutcome {
                    manifest: outcome.manifest,
                    failed: outcome.failed,
                });
            };
            let full_dir = out_dir.join("full");
            let full_name = format!("{}-full", plan.name);
            let enhanced = run_enhancer(
                manifest,
                spec,
                plan.target_dims,
                &full_name,
                &full_dir,
                &config.enhance,
            )?;
            enhanced.manifest.save(&full_dir.join("manifest.json"))?;
            let full = &enhanced.manifest;
            let entries = map_bounded(workers, &full.entries, |entry| {
                let img = RasterImage::read_png(&entry.image_path, full.gsd_cm)?;
                let mask = LabelMask::read_png(&entry.mask_path)?;
                tile_entry(entry, &img, &mask, grid, out_dir)
            });
            let entries = collect(entries)?;
            let derived =
                derive_manifest(full, &plan.name, full.gsd_cm, grid_transform(grid), entries)?;
            Ok(HarmonizeOutcome {
                manifest: derived,
                failed: enhanced.failed,
            })
        }
    }
}
