//! Uniform-stride patch grids, patch extraction and reassembly.

use crate::error::{Error, Result};
use crate::raster::{LabelMask, RasterImage};

/// Placement of `rows x cols` square patches with uniform stride.
///
/// The first patch on each axis starts at 0 and the last ends flush with the
/// image border; patches may overlap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    image_w: u32,
    image_h: u32,
    patch: u32,
    x_offsets: Vec<u32>,
    y_offsets: Vec<u32>,
}

fn axis_offsets(dim: u32, patch: u32, n: u32, axis: &str) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(Error::Grid(format!(
            "{axis} patch count must be at least 1"
        )));
    }
    let span = dim - patch;
    if n == 1 {
        if span != 0 {
            return Err(Error::Grid(format!(
                "a single {axis} patch of {patch} cannot cover {dim} pixels"
            )));
        }
        return Ok(vec![0]);
    }
    if span % (n - 1) != 0 {
        return Err(Error::Grid(format!(
            "{axis}: free span {span} is not divisible into {} equal strides",
            n - 1
        )));
    }
    let stride = span / (n - 1);
    if stride == 0 {
        return Err(Error::Grid(format!(
            "{axis}: {n} patches of {patch} on {dim} pixels would coincide"
        )));
    }
    Ok((0..n).map(|i| i * stride).collect())
}

/// Deterministic uniform-stride grid, e.g. `(640, 640, 256, 3, 3)` gives
/// offsets `0, 192, 384` on both axes.
pub fn plan_grid(image_w: u32, image_h: u32, patch: u32, rows: u32, cols: u32) -> Result<TileGrid> {
    if patch == 0 || patch > image_w || patch > image_h {
        return Err(Error::Geometry(format!(
            "patch {patch} does not fit in {image_w}x{image_h}"
        )));
    }
    Ok(TileGrid {
        image_w,
        image_h,
        patch,
        x_offsets: axis_offsets(image_w, patch, cols, "horizontal")?,
        y_offsets: axis_offsets(image_h, patch, rows, "vertical")?,
    })
}

impl TileGrid {
    pub fn image_dims(&self) -> (u32, u32) {
        (self.image_w, self.image_h)
    }

    pub fn patch(&self) -> u32 {
        self.patch
    }

    pub fn rows(&self) -> u32 {
        self.y_offsets.len() as u32
    }

    pub fn cols(&self) -> u32 {
        self.x_offsets.len() as u32
    }

    pub fn len(&self) -> usize {
        self.x_offsets.len() * self.y_offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_offsets(&self) -> &[u32] {
        &self.x_offsets
    }

    pub fn y_offsets(&self) -> &[u32] {
        &self.y_offsets
    }

    /// Top-left corner of the patch with row-major index `k`.
    pub fn origin(&self, k: usize) -> (u32, u32) {
        let cols = self.x_offsets.len();
        (self.x_offsets[k % cols], self.y_offsets[k / cols])
    }

    /// The same layout with every length multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> TileGrid {
        TileGrid {
            image_w: self.image_w * factor,
            image_h: self.image_h * factor,
            patch: self.patch * factor,
            x_offsets: self.x_offsets.iter().map(|o| o * factor).collect(),
            y_offsets: self.y_offsets.iter().map(|o| o * factor).collect(),
        }
    }

    fn check_dims(&self, what: &str, dims: (u32, u32)) -> Result<()> {
        if dims != (self.image_w, self.image_h) {
            return Err(Error::Geometry(format!(
                "{what} is {}x{} but the grid was planned for {}x{}",
                dims.0, dims.1, self.image_w, self.image_h
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    pub index: u32,
    pub image: RasterImage,
    pub mask: LabelMask,
}

/// Naming convention for patch ids: `<parent>_p<k>`.
pub fn patch_id(parent: &str, index: u32) -> String {
    format!("{parent}_p{index}")
}

/// Cuts image patches in row-major index order.
pub fn extract_image_patches(img: &RasterImage, grid: &TileGrid) -> Result<Vec<RasterImage>> {
    grid.check_dims("image", img.dims())?;
    Ok((0..grid.len())
        .map(|k| {
            let (x, y) = grid.origin(k);
            img.crop(x, y, grid.patch, grid.patch)
        })
        .collect())
}

/// Cuts co-registered image and mask patches in row-major index order.
pub fn extract_patches(img: &RasterImage, mask: &LabelMask, grid: &TileGrid) -> Result<Vec<Patch>> {
    grid.check_dims("mask", mask.dims())?;
    let images = extract_image_patches(img, grid)?;
    Ok(images
        .into_iter()
        .enumerate()
        .map(|(k, image)| {
            let (x, y) = grid.origin(k);
            Patch {
                index: k as u32,
                image,
                mask: mask.crop(x, y, grid.patch, grid.patch),
            }
        })
        .collect())
}

/// Pastes a complete patch set back together. Patches are written in
/// ascending index order, so later patches win on overlaps.
pub fn reassemble(patches: &[(u32, RasterImage)], grid: &TileGrid) -> Result<RasterImage> {
    let n = grid.len();
    let mut slots: Vec<Option<&RasterImage>> = vec![None; n];
    for (index, img) in patches {
        let k = *index as usize;
        if k >= n {
            return Err(Error::Grid(format!(
                "patch index {k} outside a {n}-patch grid"
            )));
        }
        if slots[k].is_some() {
            return Err(Error::Grid(format!("duplicate patch index {k}")));
        }
        if img.dims() != (grid.patch, grid.patch) {
            return Err(Error::Geometry(format!(
                "patch {k} is {}x{}, grid expects {}x{}",
                img.width(),
                img.height(),
                grid.patch,
                grid.patch
            )));
        }
        slots[k] = Some(img);
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        return Err(Error::Grid(format!("patch index {missing} is missing")));
    }
    let first = slots[0].expect("checked above");
    let gsd = first.gsd_cm();
    if let Some(k) = slots
        .iter()
        .position(|p| p.is_some_and(|p| p.gsd_cm() != gsd))
    {
        return Err(Error::Geometry(format!("patch {k} has a different GSD")));
    }
    let mut out = RasterImage::filled(grid.image_w, grid.image_h, [0, 0, 0], gsd)?;
    for (k, patch) in slots.into_iter().enumerate() {
        let (x, y) = grid.origin(k);
        out.paste(patch.expect("checked above"), x, y);
    }
    Ok(out)
}
