//! Harmonize the ground sample distance of aerial segmentation datasets.
//!
//! The crate covers the whole data path: manifests with reproducible splits
//! ([`dataset`]), Lanczos resampling ([`resample`]), 3x3 patch tiling
//! ([`tiler`]), degradation pairs for translation models ([`pairgen`]),
//! external enhancer orchestration ([`enhance`]), the composed pipelines
//! ([`harmonize`], [`lowres`]) and pixel IoU evaluation ([`eval`]).

pub mod dataset;
pub mod enhance;
pub mod error;
pub mod eval;
pub mod harmonize;
pub mod lowres;
pub mod pairgen;
pub mod parallel;
pub mod raster;
pub mod rational;
pub mod resample;
pub mod synth;
pub mod tiler;

pub use dataset::{
    assign_splits, build_manifest, derive_manifest, DatasetManifest, ManifestEntry, Split,
    SplitCounts, Transform,
};
pub use error::{Error, Result};
pub use raster::{LabelMask, RasterImage};
pub use rational::Rational;
pub use resample::{degrade, lanczos_kernel, resize_image, resize_mask, ResampleFilter};
pub use tiler::{extract_patches, plan_grid, reassemble, TileGrid};
