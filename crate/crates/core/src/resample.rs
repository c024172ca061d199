//! Separable image resampling.
//!
//! Images are filtered horizontally then vertically through a precomputed
//! [`ResamplePlan`] per axis. Borders are clamped (edge samples replicate),
//! intermediate values stay in `f64`, and the final samples are clamped to
//! `[0, 255]` and rounded half-up.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::raster::{LabelMask, RasterImage, CHANNELS};
use crate::rational::Rational;

/// Lobes of the Lanczos window used for image resampling.
pub const LANCZOS_RADIUS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResampleFilter {
    Lanczos3,
    NearestNeighbor,
    Box,
}

impl ResampleFilter {
    fn support(self) -> f64 {
        match self {
            ResampleFilter::Lanczos3 => f64::from(LANCZOS_RADIUS),
            ResampleFilter::Box | ResampleFilter::NearestNeighbor => 0.5,
        }
    }

    fn weight(self, x: f64) -> f64 {
        match self {
            ResampleFilter::Lanczos3 => lanczos_kernel(x, LANCZOS_RADIUS),
            ResampleFilter::Box | ResampleFilter::NearestNeighbor => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Lanczos window `sinc(x) * sinc(x / a)` on `|x| < a`, zero elsewhere.
///
/// Integer arguments other than zero return exactly `0.0` (floating-point
/// `sin(n * PI)` does not), which keeps integer-aligned resampling exact.
pub fn lanczos_kernel(x: f64, a: u32) -> f64 {
    let a = f64::from(a.max(1));
    let ax = x.abs();
    if ax >= a {
        0.0
    } else if ax == 0.0 {
        1.0
    } else if ax.fract() == 0.0 {
        0.0
    } else {
        sinc(ax) * sinc(ax / a)
    }
}

/// Contributing source samples for every output coordinate along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ResamplePlan {
    src_len: u32,
    // taps for output `o` are `indices[offsets[o]..offsets[o + 1]]`
    offsets: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
}

impl ResamplePlan {
    pub fn new(src_len: u32, dst_len: u32, filter: ResampleFilter) -> Result<Self> {
        if src_len == 0 || dst_len == 0 {
            return Err(Error::Geometry(format!(
                "cannot resample {src_len} samples to {dst_len}"
            )));
        }
        let mut plan = ResamplePlan {
            src_len,
            offsets: Vec::with_capacity(dst_len as usize + 1),
            indices: Vec::new(),
            weights: Vec::new(),
        };
        plan.offsets.push(0);
        if filter == ResampleFilter::NearestNeighbor {
            for o in 0..u64::from(dst_len) {
                // floor((o + 0.5) * src / dst) in integers
                let idx = ((2 * o + 1) * u64::from(src_len)) / (2 * u64::from(dst_len));
                plan.indices.push(idx.min(u64::from(src_len) - 1) as u32);
                plan.weights.push(1.0);
                plan.offsets.push(plan.indices.len());
            }
            return Ok(plan);
        }

        let scale = f64::from(src_len) / f64::from(dst_len);
        let filter_scale = scale.max(1.0);
        let support = filter.support() * filter_scale;
        let last = i64::from(src_len) - 1;
        for o in 0..dst_len {
            let center = (f64::from(o) + 0.5) * scale;
            let left = (center - support).floor() as i64;
            let right = (center + support).ceil() as i64;
            let start = plan.weights.len();
            let mut sum = 0.0;
            for j in left..=right {
                let w = filter.weight((j as f64 + 0.5 - center) / filter_scale);
                if w != 0.0 {
                    plan.indices.push(j.clamp(0, last) as u32);
                    plan.weights.push(w);
                    sum += w;
                }
            }
            if sum == 0.0 || plan.weights.len() == start {
                plan.weights.truncate(start);
                plan.indices.truncate(start);
                plan.indices
                    .push((center.floor() as i64).clamp(0, last) as u32);
                plan.weights.push(1.0);
            } else {
                for w in &mut plan.weights[start..] {
                    *w /= sum;
                }
            }
            plan.offsets.push(plan.weights.len());
        }
        Ok(plan)
    }

    pub fn src_len(&self) -> u32 {
        self.src_len
    }

    pub fn dst_len(&self) -> u32 {
        (self.offsets.len() - 1) as u32
    }

    /// `(source index, normalized weight)` pairs for output coordinate `o`.
    pub fn taps(&self, o: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[o]..self.offsets[o + 1];
        self.indices[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&i, &w)| (i as usize, w))
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5).floor() as u8
}

/// GSD after resampling `in_w` columns to `out_w` columns.
pub fn resized_gsd(gsd_cm: Rational, in_w: u32, out_w: u32) -> Result<Rational> {
    gsd_cm.scaled(u64::from(in_w), u64::from(out_w))
}

/// Describes a resize whose horizontal and vertical scale factors differ.
pub fn anisotropy_warning(in_dims: (u32, u32), out_dims: (u32, u32)) -> Option<String> {
    let (iw, ih) = (u64::from(in_dims.0), u64::from(in_dims.1));
    let (ow, oh) = (u64::from(out_dims.0), u64::from(out_dims.1));
    (iw * oh != ih * ow)
        .then(|| format!("anisotropic resize {iw}x{ih} -> {ow}x{oh}; GSD follows the width ratio"))
}

/// Resamples an image to `out_w` x `out_h`; the GSD follows the width ratio.
pub fn resize_image(
    img: &RasterImage,
    out_w: u32,
    out_h: u32,
    filter: ResampleFilter,
) -> Result<RasterImage> {
    let (in_w, in_h) = img.dims();
    let gsd = resized_gsd(img.gsd_cm(), in_w, out_w)?;
    let xplan = ResamplePlan::new(in_w, out_w, filter)?;
    let yplan = ResamplePlan::new(in_h, out_h, filter)?;
    let src = img.pixels();

    if filter == ResampleFilter::NearestNeighbor {
        let mut out = Vec::with_capacity(out_w as usize * out_h as usize * CHANNELS);
        for oy in 0..out_h as usize {
            let (sy, _) = yplan.taps(oy).next().expect("one tap per output");
            let row = sy * in_w as usize * CHANNELS;
            for ox in 0..out_w as usize {
                let (sx, _) = xplan.taps(ox).next().expect("one tap per output");
                let i = row + sx * CHANNELS;
                out.extend_from_slice(&src[i..i + CHANNELS]);
            }
        }
        return RasterImage::new(out_w, out_h, out, gsd);
    }

    // horizontal pass: in_h rows of out_w pixels
    let (ow, oh) = (out_w as usize, out_h as usize);
    let mut tmp = vec![0.0f64; ow * in_h as usize * CHANNELS];
    for y in 0..in_h as usize {
        let src_row = &src[y * in_w as usize * CHANNELS..(y + 1) * in_w as usize * CHANNELS];
        let dst_row = &mut tmp[y * ow * CHANNELS..(y + 1) * ow * CHANNELS];
        for ox in 0..ow {
            let mut acc = [0.0f64; CHANNELS];
            for (sx, w) in xplan.taps(ox) {
                let p = &src_row[sx * CHANNELS..sx * CHANNELS + CHANNELS];
                for c in 0..CHANNELS {
                    acc[c] += w * f64::from(p[c]);
                }
            }
            dst_row[ox * CHANNELS..ox * CHANNELS + CHANNELS].copy_from_slice(&acc);
        }
    }

    // vertical pass
    let stride = ow * CHANNELS;
    let mut out = vec![0u8; oh * stride];
    let mut acc = vec![0.0f64; stride];
    for oy in 0..oh {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (sy, w) in yplan.taps(oy) {
            let row = &tmp[sy * stride..(sy + 1) * stride];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += w * v;
            }
        }
        for (dst, &v) in out[oy * stride..(oy + 1) * stride].iter_mut().zip(&acc) {
            *dst = quantize(v);
        }
    }
    RasterImage::new(out_w, out_h, out, gsd)
}

/// Nearest-neighbor mask resampling; class values are copied, never blended.
pub fn resize_mask(mask: &LabelMask, out_w: u32, out_h: u32) -> Result<LabelMask> {
    let xplan = ResamplePlan::new(mask.width(), out_w, ResampleFilter::NearestNeighbor)?;
    let yplan = ResamplePlan::new(mask.height(), out_h, ResampleFilter::NearestNeighbor)?;
    let xs: Vec<u32> = (0..out_w as usize)
        .map(|o| xplan.taps(o).next().expect("one tap").0 as u32)
        .collect();
    let mut classes = Vec::with_capacity(out_w as usize * out_h as usize);
    for oy in 0..out_h as usize {
        let sy = yplan.taps(oy).next().expect("one tap").0 as u32;
        classes.extend(xs.iter().map(|&sx| mask.get(sx, sy)));
    }
    LabelMask::new(out_w, out_h, classes)
}

/// Lanczos downscale to `low_w` x `low_h`, then nearest-neighbor back to the
/// original size. Geometry and GSD are unchanged; only detail is lost.
pub fn degrade(img: &RasterImage, low_w: u32, low_h: u32) -> Result<RasterImage> {
    let (w, h) = img.dims();
    if low_w == 0 || low_h == 0 || low_w >= w || low_h >= h {
        return Err(Error::InvalidDegradeTarget {
            low_w,
            low_h,
            width: w,
            height: h,
        });
    }
    let low = resize_image(img, low_w, low_h, ResampleFilter::Lanczos3)?;
    let up = resize_image(&low, w, h, ResampleFilter::NearestNeighbor)?;
    Ok(up.with_gsd(img.gsd_cm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gsd(v: u64) -> Rational {
        Rational::integer(v).unwrap()
    }

    fn random_image(w: u32, h: u32, seed: u64) -> RasterImage {
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let pixels = (0..w as usize * h as usize * CHANNELS)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                (state >> 56) as u8
            })
            .collect();
        RasterImage::new(w, h, pixels, gsd(20)).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(lanczos_kernel(0.0, 3), 1.0);
        assert_eq!(lanczos_kernel(3.0, 3), 0.0);
        assert_eq!(lanczos_kernel(-3.5, 3), 0.0);
        assert_eq!(lanczos_kernel(1.0, 3), 0.0);
        assert_eq!(lanczos_kernel(-2.0, 3), 0.0);
        // oracle: sin(1.5 pi)/(1.5 pi) * sin(0.5 pi)/(0.5 pi)
        let oracle = (1.5 * PI).sin() / (1.5 * PI) * ((0.5 * PI).sin() / (0.5 * PI));
        assert!((lanczos_kernel(1.5, 3) - oracle).abs() < 1e-15);
        assert!((lanczos_kernel(1.5, 3) - (-0.13509)).abs() < 1e-5);
    }

    #[test]
    fn plan_weights_sum_to_one() {
        for &(s, d) in &[
            (256, 640),
            (640, 256),
            (256, 32),
            (7, 3),
            (3, 7),
            (256, 256),
        ] {
            let plan = ResamplePlan::new(s, d, ResampleFilter::Lanczos3).unwrap();
            for o in 0..d as usize {
                let sum: f64 = plan.taps(o).map(|(_, w)| w).sum();
                assert!((sum - 1.0).abs() < 1e-9, "{s}->{d} o={o} sum={sum}");
                assert!(plan.taps(o).all(|(i, _)| i < s as usize));
            }
        }
    }

    #[test]
    fn p50_to_p20_geometry() {
        let img = random_image(256, 256, 1).with_gsd(gsd(50));
        let out = resize_image(&img, 640, 640, ResampleFilter::Lanczos3).unwrap();
        assert_eq!(out.dims(), (640, 640));
        assert_eq!(out.gsd_cm(), gsd(20));
        assert!(anisotropy_warning((256, 256), (640, 640)).is_none());
        assert!(anisotropy_warning((256, 256), (640, 320)).is_some());
    }

    #[test]
    fn identity_resize_is_exact() {
        for seed in 0..5 {
            let img = random_image(64, 48, seed);
            for f in [
                ResampleFilter::Lanczos3,
                ResampleFilter::NearestNeighbor,
                ResampleFilter::Box,
            ] {
                assert_eq!(resize_image(&img, 64, 48, f).unwrap(), img);
            }
        }
    }

    #[test]
    fn constant_images_stay_constant() {
        let img = RasterImage::filled(37, 23, [128, 0, 255], gsd(20)).unwrap();
        for &(w, h) in &[(91, 50), (5, 4), (37, 23), (640, 1)] {
            let out = resize_image(&img, w, h, ResampleFilter::Lanczos3).unwrap();
            assert!(out.pixels().chunks(3).all(|p| p == [128, 0, 255]));
        }
    }

    #[test]
    fn mask_checkerboard_doubles_into_blocks() {
        let mask = LabelMask::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let out = resize_mask(&mask, 4, 4).unwrap();
        // oracle: nearest source index per output pixel is o / 2
        let src = &mask;
        let expected: Vec<u8> = (0..4)
            .flat_map(|y| (0..4).map(move |x| src.get(x / 2, y / 2)))
            .collect();
        assert_eq!(out.classes(), &expected[..]);
        assert_eq!(
            out.classes(),
            &[0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0]
        );
    }

    #[test]
    fn mask_upsample_keeps_class_set() {
        let classes: Vec<u8> = (0..256 * 256).map(|i| ((i / 7) % 2) as u8).collect();
        let mask = LabelMask::new(256, 256, classes).unwrap();
        let out = resize_mask(&mask, 640, 640).unwrap();
        assert_eq!(out.dims(), (640, 640));
        assert!(out.classes().contains(&0) && out.classes().contains(&1));
        let zeros = resize_mask(&LabelMask::filled(256, 256, 0).unwrap(), 640, 640).unwrap();
        assert!(zeros.classes().iter().all(|&c| c == 0));
    }

    #[test]
    fn degrade_keeps_geometry() {
        let img = random_image(256, 256, 9);
        let low = degrade(&img, 32, 32).unwrap();
        assert_eq!(low.dims(), (256, 256));
        assert_eq!(low.gsd_cm(), img.gsd_cm());
        // 8x8 blocks after nearest upscale from 32
        assert_eq!(low.pixel(0, 0), low.pixel(7, 7));
        assert_eq!(degrade(&img, 192, 192).unwrap().dims(), (256, 256));
        assert!(matches!(
            degrade(&img, 256, 256),
            Err(Error::InvalidDegradeTarget { .. })
        ));
        assert!(degrade(&img, 0, 10).is_err());
    }

    #[test]
    fn degrade_matches_explicit_composition() {
        let img = random_image(40, 40, 3);
        let low = resize_image(&img, 10, 10, ResampleFilter::Lanczos3).unwrap();
        let up = resize_image(&low, 40, 40, ResampleFilter::NearestNeighbor).unwrap();
        assert_eq!(degrade(&img, 10, 10).unwrap().pixels(), up.pixels());
    }

    proptest! {
        #[test]
        fn kernel_is_even(x in -4.0f64..4.0) {
            prop_assert_eq!(lanczos_kernel(x, 3), lanczos_kernel(-x, 3));
        }

        #[test]
        fn gsd_times_width_is_conserved(in_w in 1u32..2000, out_w in 1u32..2000, g in 1u64..100) {
            let gsd_in = gsd(g);
            let out = resized_gsd(gsd_in, in_w, out_w).unwrap();
            prop_assert_eq!(out.scaled(u64::from(out_w), 1).unwrap(), gsd_in.scaled(u64::from(in_w), 1).unwrap());
        }

        #[test]
        fn mask_resize_is_closed(w in 1u32..20, h in 1u32..20, ow in 1u32..40, oh in 1u32..40, seed in any::<u64>()) {
            let classes = (0..w * h).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let mask = LabelMask::new(w, h, classes).unwrap();
            let out = resize_mask(&mask, ow, oh).unwrap();
            prop_assert!(out.classes().iter().all(|&c| c <= 1));
            prop_assert_eq!(out.dims(), (ow, oh));
        }
    }
}
