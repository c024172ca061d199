//! Pixel containers and their PNG encodings.
//!
//! Images are 8-bit RGB, masks are 8-bit single-channel with class values
//! `0` (background) and `1` (tree).

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use image::{ImageEncoder, RgbImage};

use crate::error::{Error, Result};
use crate::rational::Rational;

pub const CHANNELS: usize = 3;

pub const BACKGROUND: u8 = 0;
pub const TREE: u8 = 1;

/// Row-major 8-bit RGB image with its ground sample distance in centimeters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    gsd_cm: Rational,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, gsd_cm: Rational) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Geometry(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * CHANNELS;
        if pixels.len() != expected {
            return Err(Error::Geometry(format!(
                "pixel buffer holds {} samples, {width}x{height} RGB needs {expected}",
                pixels.len()
            )));
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
            gsd_cm,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3], gsd_cm: Rational) -> Result<Self> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * CHANNELS)
            .collect();
        Self::new(width, height, pixels, gsd_cm)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn gsd_cm(&self) -> Rational {
        self.gsd_cm
    }

    pub fn with_gsd(mut self, gsd_cm: Rational) -> Self {
        self.gsd_cm = gsd_cm;
        self
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * CHANNELS;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Copy of one row-major window; the caller guarantees it lies inside the image.
    pub(crate) fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> RasterImage {
        let row_len = w as usize * CHANNELS;
        let mut pixels = Vec::with_capacity(row_len * h as usize);
        for y in y0..y0 + h {
            let start = (y as usize * self.width as usize + x0 as usize) * CHANNELS;
            pixels.extend_from_slice(&self.pixels[start..start + row_len]);
        }
        RasterImage {
            width: w,
            height: h,
            pixels,
            gsd_cm: self.gsd_cm,
        }
    }

    /// Writes `src` with its top-left corner at `(x0, y0)`.
    pub(crate) fn paste(&mut self, src: &RasterImage, x0: u32, y0: u32) {
        let row_len = src.width as usize * CHANNELS;
        for y in 0..src.height {
            let dst = ((y0 + y) as usize * self.width as usize + x0 as usize) * CHANNELS;
            let s = y as usize * row_len;
            self.pixels[dst..dst + row_len].copy_from_slice(&src.pixels[s..s + row_len]);
        }
    }

    /// Mean absolute per-sample difference; images must share dimensions.
    pub fn mean_abs_diff(&self, other: &RasterImage) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Geometry(format!(
                "cannot compare {}x{} with {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let total: u64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| u64::from(a.abs_diff(b)))
            .sum();
        Ok(total as f64 / self.pixels.len() as f64)
    }

    /// Reads any PNG and converts it to 8-bit RGB.
    pub fn read_png(path: &Path, gsd_cm: Rational) -> Result<Self> {
        let img = image::open(path).map_err(|source| image_error(path, source))?;
        let rgb = img.into_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw(), gsd_cm)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let buf = RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction");
        write_encoded(
            path,
            buf.as_raw(),
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
        )
    }
}

/// Per-pixel class indices co-registered with a [`RasterImage`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    classes: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32, classes: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Geometry(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if classes.len() != width as usize * height as usize {
            return Err(Error::Geometry(format!(
                "mask buffer holds {} values, {width}x{height} needs {}",
                classes.len(),
                width as usize * height as usize
            )));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c > TREE) {
            return Err(Error::InvalidMask("<buffer>".into(), bad));
        }
        Ok(LabelMask {
            width,
            height,
            classes,
        })
    }

    pub fn filled(width: u32, height: u32, class: u8) -> Result<Self> {
        Self::new(width, height, vec![class; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.classes[y as usize * self.width as usize + x as usize]
    }

    pub(crate) fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> LabelMask {
        let mut classes = Vec::with_capacity(w as usize * h as usize);
        for y in y0..y0 + h {
            let start = y as usize * self.width as usize + x0 as usize;
            classes.extend_from_slice(&self.classes[start..start + w as usize]);
        }
        LabelMask {
            width: w,
            height: h,
            classes,
        }
    }

    /// Reads an 8-bit single-channel PNG; any value outside `{0, 1}` is rejected.
    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| image_error(path, source))?;
        let luma = match img {
            image::DynamicImage::ImageLuma8(l) => l,
            other => {
                return Err(Error::Geometry(format!(
                    "{}: mask must be 8-bit single-channel, found {:?}",
                    path.display(),
                    other.color()
                )))
            }
        };
        let (w, h) = luma.dimensions();
        let classes = luma.into_raw();
        if let Some(&bad) = classes.iter().find(|&&c| c > TREE) {
            return Err(Error::InvalidMask(path.display().to_string(), bad));
        }
        Self::new(w, h, classes)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_encoded(
            path,
            &self.classes,
            self.width,
            self.height,
            image::ExtendedColorType::L8,
        )
    }
}

/// Width and height from the PNG header without decoding pixels.
pub fn png_dimensions(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|source| image_error(path, source))
}

fn image_error(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    }
}

fn write_encoded(
    path: &Path,
    data: &[u8],
    width: u32,
    height: u32,
    color: image::ExtendedColorType,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = image::codecs::png::PngEncoder::new(BufWriter::new(file));
    encoder
        .write_image(data, width, height, color)
        .map_err(|source| image_error(path, source))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gsd() -> Rational {
        Rational::integer(20).unwrap()
    }

    #[test]
    fn buffer_length_is_checked() {
        assert!(RasterImage::new(2, 2, vec![0; 12], gsd()).is_ok());
        assert!(matches!(
            RasterImage::new(2, 2, vec![0; 11], gsd()),
            Err(Error::Geometry(_))
        ));
        assert!(RasterImage::new(0, 2, vec![], gsd()).is_err());
    }

    #[test]
    fn mask_rejects_foreign_classes() {
        assert!(LabelMask::new(2, 1, vec![0, 1]).is_ok());
        assert!(matches!(
            LabelMask::new(2, 1, vec![0, 2]),
            Err(Error::InvalidMask(_, 2))
        ));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..5 * 3 * 3).map(|i| (i * 7) as u8).collect();
        let img = RasterImage::new(5, 3, pixels, gsd()).unwrap();
        let path = dir.path().join("a/img.png");
        img.write_png(&path).unwrap();
        assert_eq!(png_dimensions(&path).unwrap(), (5, 3));
        assert_eq!(RasterImage::read_png(&path, gsd()).unwrap(), img);

        let mask = LabelMask::new(3, 2, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let mpath = dir.path().join("m.png");
        mask.write_png(&mpath).unwrap();
        assert_eq!(LabelMask::read_png(&mpath).unwrap(), mask);
    }

    #[test]
    fn mask_png_with_255_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        image::GrayImage::from_raw(2, 1, vec![0, 255])
            .unwrap()
            .save(&path)
            .unwrap();
        assert!(matches!(
            LabelMask::read_png(&path),
            Err(Error::InvalidMask(_, 255))
        ));
    }

    #[test]
    fn crop_and_paste_are_inverse() {
        let pixels: Vec<u8> = (0..4 * 4 * 3).map(|i| i as u8).collect();
        let img = RasterImage::new(4, 4, pixels, gsd()).unwrap();
        let tile = img.crop(1, 2, 3, 2);
        assert_eq!(tile.pixel(0, 0), img.pixel(1, 2));
        assert_eq!(tile.pixel(2, 1), img.pixel(3, 3));
        let mut blank = RasterImage::filled(4, 4, [0, 0, 0], gsd()).unwrap();
        blank.paste(&tile, 1, 2);
        assert_eq!(blank.pixel(3, 3), img.pixel(3, 3));
        assert_eq!(blank.pixel(0, 0), [0, 0, 0]);
    }
}
