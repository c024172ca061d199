//! Deterministic synthetic aerial tiles for tests and benchmarks.
//!
//! Each sample is a textured ground layer with roads and round tree crowns;
//! the crowns are the tree class of the mask.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::parallel::map_bounded;
use crate::raster::{LabelMask, RasterImage, TREE};
use crate::rational::Rational;

pub fn sample(size: u32, seed: u64, gsd_cm: Rational) -> Result<(RasterImage, LabelMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size as usize;
    let f = f64::from(size);

    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..4.0) / f,
                rng.random_range(0.5..4.0) / f,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(8.0..30.0),
            )
        })
        .collect();
    let base = [
        rng.random_range(90.0..150.0),
        rng.random_range(90.0..140.0),
        rng.random_range(70.0..120.0),
    ];
    let road_y = rng.random_range(0..size);
    let road_w = rng.random_range(3..(size / 16).max(4));
    let crowns: Vec<(f64, f64, f64)> = (0..rng.random_range(3..12))
        .map(|_| {
            (
                rng.random_range(0.0..f),
                rng.random_range(0.0..f),
                rng.random_range(f / 40.0..f / 10.0),
            )
        })
        .collect();

    let mut pixels = Vec::with_capacity(n * n * 3);
    let mut classes = Vec::with_capacity(n * n);
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (f64::from(x), f64::from(y));
            let shade: f64 = waves
                .iter()
                .map(|&(fx, fy, ph, amp)| {
                    amp * (std::f64::consts::TAU * (fx * xf + fy * yf) + ph).sin()
                })
                .sum();
            let grain = f64::from(rng.random_range(0u8..24)) - 12.0;
            let mut rgb = [
                base[0] + shade + grain,
                base[1] + shade + grain,
                base[2] + shade + grain,
            ];
            let mut class = 0;
            if y.abs_diff(road_y) < road_w {
                rgb = [170.0 + grain, 168.0 + grain, 160.0 + grain];
            }
            if let Some(&(cx, cy, r)) = crowns
                .iter()
                .find(|&&(cx, cy, r)| (xf - cx).hypot(yf - cy) < r)
            {
                let depth = 1.0 - (xf - cx).hypot(yf - cy) / r;
                rgb = [
                    40.0 + 20.0 * depth + grain,
                    90.0 + 50.0 * depth + grain,
                    35.0 + grain,
                ];
                class = TREE;
            }
            pixels.extend(rgb.iter().map(|v| v.clamp(0.0, 255.0) as u8));
            classes.push(class);
        }
    }
    Ok((
        RasterImage::new(size, size, pixels, gsd_cm)?,
        LabelMask::new(size, size, classes)?,
    ))
}

pub fn sample_id(index: usize) -> String {
    format!("img_{index:04}")
}

/// Writes `count` samples as `<root>/images/img_NNNN.png` and
/// `<root>/masks/img_NNNN.png`; returns the two directories.
pub fn write_corpus(
    root: &Path,
    count: usize,
    size: u32,
    seed: u64,
    workers: usize,
) -> Result<(PathBuf, PathBuf)> {
    let images = root.join("images");
    let masks = root.join("masks");
    let gsd = Rational::integer(1)?;
    let indices: Vec<usize> = (0..count).collect();
    map_bounded(workers, &indices, |&i| -> Result<()> {
        let (img, mask) = sample(size, seed.wrapping_add(i as u64), gsd)?;
        img.write_png(&images.join(format!("{}.png", sample_id(i))))?;
        mask.write_png(&masks.join(format!("{}.png", sample_id(i))))
    })
    .into_iter()
    .collect::<Result<Vec<()>>>()?;
    Ok((images, masks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_deterministic_and_contain_both_classes() {
        let g = Rational::integer(20).unwrap();
        let (a, ma) = sample(64, 3, g).unwrap();
        let (b, mb) = sample(64, 3, g).unwrap();
        assert_eq!((&a, &ma), (&b, &mb));
        assert!(ma.classes().contains(&0));
        assert!(ma.classes().contains(&1));
        assert_ne!(sample(64, 4, g).unwrap().0, a);
    }
}
