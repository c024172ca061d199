//! Process-and-files bridge to external enhancement models.
//!
//! For every job the bridge writes a JSON job file, runs the configured
//! command with the job file path on its command line, and collects one PNG
//! per input (same stem) from the job's output directory. Outputs whose size
//! differs from the requested target are brought there with Lanczos-3.
//!
//! Job file layout:
//!
//! ```json
//! {"enhancer": "realesrgan", "scale": 2.5, "prompt": "...",
//!  "inputs": ["/abs/a.png", "/abs/b.png"], "output_dir": "/abs/out"}
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{derive_manifest, DatasetManifest, ManifestEntry, Transform};
use crate::error::{Error, Result};
use crate::parallel::map_bounded;
use crate::raster::{png_dimensions, LabelMask, RasterImage};
use crate::rational::Rational;
use crate::resample::{anisotropy_warning, resize_image, resize_mask, resized_gsd, ResampleFilter};
use crate::tiler::{extract_image_patches, plan_grid, reassemble, TileGrid};

pub const JOB_FILE_PLACEHOLDER: &str = "{job_file}";

const STDERR_EXCERPT: usize = 2000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhanceMode {
    #[default]
    WholeImage,
    /// Split into non-overlapping `tile` x `tile` patches, enhance each, reassemble.
    Tiled,
}

fn default_timeout() -> u64 {
    3600
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhancerSpec {
    pub name: String,
    /// Command line with exactly one `{job_file}` placeholder, split with
    /// POSIX shell quoting rules (no shell is involved).
    pub command_template: String,
    #[serde(default)]
    pub mode: EnhanceMode,
    pub scale: Rational,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Per-invocation limit in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: u64,
    /// Appended to the source dataset name, e.g. `G` for `P50G`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix: Option<String>,
}

impl EnhancerSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: EnhancerSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEnhancerSpec(format!("{}: {m}", self.name)));
        if self.name.is_empty() {
            return Err(Error::InvalidEnhancerSpec("empty enhancer name".into()));
        }
        let occurrences = self.command_template.matches(JOB_FILE_PLACEHOLDER).count();
        if occurrences != 1 {
            return bad(format!(
                "command_template must contain {JOB_FILE_PLACEHOLDER} exactly once, found {occurrences}"
            ));
        }
        match shlex::split(&self.command_template) {
            Some(args) if !args.is_empty() => {}
            _ => return bad("command_template cannot be parsed".into()),
        }
        if self.timeout == 0 {
            return bad("timeout must be positive".into());
        }
        match (self.mode, self.tile) {
            (EnhanceMode::Tiled, None) => return bad("tiled mode needs a tile size".into()),
            (EnhanceMode::Tiled, Some(0)) => return bad("tile size must be positive".into()),
            (EnhanceMode::Tiled, Some(_)) => {
                if !self.scale.is_integer() {
                    return bad(format!(
                        "tiled mode needs an integer scale >= 1, got {}",
                        self.scale
                    ));
                }
            }
            (EnhanceMode::WholeImage, Some(_)) => {
                return bad("tile is only meaningful in tiled mode".into())
            }
            (EnhanceMode::WholeImage, None) => {}
        }
        Ok(())
    }

    /// Name of the dataset this enhancer derives from `source`.
    pub fn derived_name(&self, source: &str) -> String {
        format!("{source}{}", self.suffix.as_deref().unwrap_or(&self.name))
    }

    pub fn command(&self, job_file: &Path) -> Result<Vec<String>> {
        let job = job_file.display().to_string();
        let args = shlex::split(&self.command_template).ok_or_else(|| {
            Error::InvalidEnhancerSpec(format!("{}: unparsable command", self.name))
        })?;
        Ok(args
            .into_iter()
            .map(|a| a.replace(JOB_FILE_PLACEHOLDER, &job))
            .collect())
    }

    /// Enhancer output size for an input of `dims`.
    pub fn output_dims(&self, dims: (u32, u32)) -> Result<(u32, u32)> {
        let w = self.scale.times_integer(u64::from(dims.0));
        let h = self.scale.times_integer(u64::from(dims.1));
        match (w, h) {
            (Some(w), Some(h)) => Ok((w as u32, h as u32)),
            _ => Err(Error::Geometry(format!(
                "scale {} applied to {}x{} is not a whole number of pixels",
                self.scale, dims.0, dims.1
            ))),
        }
    }

    /// Non-overlapping tile grid for a tiled enhancer on `dims` inputs.
    pub fn tile_grid(&self, dims: (u32, u32)) -> Result<TileGrid> {
        let tile = self
            .tile
            .ok_or_else(|| Error::InvalidEnhancerSpec(format!("{}: not tiled", self.name)))?;
        if tile > dims.0 || tile > dims.1 || dims.0 % tile != 0 || dims.1 % tile != 0 {
            return Err(Error::Geometry(format!(
                "tile {tile} does not divide {}x{}",
                dims.0, dims.1
            )));
        }
        plan_grid(dims.0, dims.1, tile, dims.1 / tile, dims.0 / tile)
    }
}

/// The JSON document handed to an enhancer process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobFile {
    pub enhancer: String,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhanceJob {
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub scale: Rational,
    pub prompt: Option<String>,
    pub expected_out_dims: (u32, u32),
}

impl EnhanceJob {
    fn job_file(&self, spec: &EnhancerSpec) -> JobFile {
        JobFile {
            enhancer: spec.name.clone(),
            scale: self.scale.to_f64(),
            prompt: self.prompt.clone(),
            inputs: self.inputs.clone(),
            output_dir: self.output_dir.clone(),
        }
    }

    /// Expected output location for an input, same stem as the input.
    pub fn output_for(&self, input: &Path) -> PathBuf {
        let stem = input.file_stem().unwrap_or_default();
        self.output_dir.join(stem).with_extension("png")
    }
}

/// Writes the job file into `job_dir`, runs the enhancer and waits for it.
pub fn run_job(
    spec: &EnhancerSpec,
    job: &EnhanceJob,
    job_dir: &Path,
    timeout: Duration,
) -> Result<()> {
    fs::create_dir_all(&job.output_dir).map_err(|e| Error::io(&job.output_dir, e))?;
    let job_path = absolute(&job_dir.join("job.json"))?;
    let text = serde_json::to_string_pretty(&job.job_file(spec)).map_err(|source| Error::Json {
        path: job_path.clone(),
        source,
    })?;
    crate::dataset::write_text(&job_path, &text)?;

    let argv = spec.command(&job_path)?;
    let stdout_path = job_dir.join("stdout.log");
    let stderr_path = job_dir.join("stderr.log");
    let stdout = fs::File::create(&stdout_path).map_err(|e| Error::io(&stdout_path, e))?;
    let stderr = fs::File::create(&stderr_path).map_err(|e| Error::io(&stderr_path, e))?;
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(|e| Error::EnhancerFailed {
            enhancer: spec.name.clone(),
            status: "spawn failed".into(),
            stderr: format!("{}: {e}", argv[0]),
        })?;

    let start = Instant::now();
    let status = loop {
        match child.try_wait().map_err(|e| Error::io(&job_path, e))? {
            Some(status) => break status,
            None if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::EnhancerTimeout {
                    enhancer: spec.name.clone(),
                    seconds: timeout.as_secs(),
                });
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };
    if !status.success() {
        let raw = fs::read(&stderr_path).unwrap_or_default();
        let tail = &raw[raw.len().saturating_sub(STDERR_EXCERPT)..];
        return Err(Error::EnhancerFailed {
            enhancer: spec.name.clone(),
            status: status.to_string(),
            stderr: String::from_utf8_lossy(tail).trim().to_owned(),
        });
    }
    Ok(())
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn tile_stem(id: &str, k: usize) -> String {
    format!("{id}_t{k}")
}

fn stage_tiles(
    img: &RasterImage,
    id: &str,
    grid: &TileGrid,
    in_dir: &Path,
) -> Result<Vec<PathBuf>> {
    extract_image_patches(img, grid)?
        .iter()
        .enumerate()
        .map(|(k, tile)| {
            let path = in_dir.join(format!("{}.png", tile_stem(id, k)));
            tile.write_png(&path)?;
            absolute(&path)
        })
        .collect()
}

fn read_output(path: &Path, id: &str, expected: (u32, u32), gsd: Rational) -> Result<RasterImage> {
    if !path.is_file() {
        return Err(Error::OutputMissing(id.to_owned()));
    }
    let img = RasterImage::read_png(path, gsd)?;
    if img.dims() != expected {
        return Err(Error::Geometry(format!(
            "{id}: enhancer output {} is {}x{}, expected {}x{}",
            path.display(),
            img.width(),
            img.height(),
            expected.0,
            expected.1
        )));
    }
    Ok(img)
}

fn collect_tiles(
    spec: &EnhancerSpec,
    id: &str,
    grid: &TileGrid,
    out_dir: &Path,
    gsd: Rational,
) -> Result<RasterImage> {
    let factor = spec.scale.numer() as u32;
    let scaled = grid.scaled(factor);
    let tile_out = (scaled.patch(), scaled.patch());
    let tiles = (0..grid.len())
        .map(|k| {
            let path = out_dir.join(format!("{}.png", tile_stem(id, k)));
            Ok((k as u32, read_output(&path, id, tile_out, gsd)?))
        })
        .collect::<Result<Vec<_>>>()?;
    reassemble(&tiles, &scaled)
}

/// Enhances one image tile by tile and stitches the results.
///
/// The image is cut on the spec's non-overlapping tile grid, every tile goes
/// through the enhancer in a single job, and the outputs are reassembled to
/// `width * scale` x `height * scale`. The caller resizes to the final target.
pub fn tiled_enhance(
    img: &RasterImage,
    id: &str,
    spec: &EnhancerSpec,
    work_dir: &Path,
    timeout: Option<Duration>,
) -> Result<RasterImage> {
    spec.validate()?;
    if spec.mode != EnhanceMode::Tiled {
        return Err(Error::InvalidEnhancerSpec(format!(
            "{}: not a tiled enhancer",
            spec.name
        )));
    }
    let grid = spec.tile_grid(img.dims())?;
    let in_dir = work_dir.join("in");
    let out_dir = absolute(&work_dir.join("out"))?;
    let inputs = stage_tiles(img, id, &grid, &in_dir)?;
    let tile = grid.patch();
    let job = EnhanceJob {
        inputs,
        output_dir: out_dir.clone(),
        scale: spec.scale,
        prompt: spec.prompt.clone(),
        expected_out_dims: spec.output_dims((tile, tile))?,
    };
    run_job(
        spec,
        &job,
        work_dir,
        timeout.unwrap_or(Duration::from_secs(spec.timeout)),
    )?;
    let out = collect_tiles(spec, id, &grid, &out_dir, img.gsd_cm())?;
    let gsd = resized_gsd(img.gsd_cm(), img.width(), out.width())?;
    Ok(out.with_gsd(gsd))
}

#[derive(Clone, Debug)]
pub struct EnhanceOptions {
    pub workers: usize,
    /// Upper bound on images per enhancer invocation.
    pub batch_size: usize,
    /// Skip failed images instead of aborting the run.
    pub keep_going: bool,
    /// Overrides the spec's per-invocation timeout, in seconds.
    pub timeout: Option<u64>,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        EnhanceOptions {
            workers: crate::parallel::default_workers(),
            batch_size: 16,
            keep_going: false,
            timeout: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnhanceFailure {
    pub id: String,
    pub kind: String,
    pub message: String,
}

impl EnhanceFailure {
    fn new(id: &str, err: &Error) -> Self {
        EnhanceFailure {
            id: id.to_owned(),
            kind: err.kind().to_owned(),
            message: err.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnhanceOutcome {
    pub manifest: DatasetManifest,
    /// Images skipped under `keep_going`, in manifest order.
    pub failed: Vec<EnhanceFailure>,
}

struct Run<'a> {
    manifest: &'a DatasetManifest,
    spec: &'a EnhancerSpec,
    in_dims: (u32, u32),
    target_dims: (u32, u32),
    grid: Option<TileGrid>,
    out_gsd: Rational,
    out_dir: PathBuf,
    work_dir: PathBuf,
    timeout: Duration,
    keep_going: bool,
    abort: AtomicBool,
}

enum Staged {
    Ready(Vec<PathBuf>),
    Failed(Error),
}

impl Run<'_> {
    fn stage(&self, entry: &ManifestEntry, in_dir: &Path) -> Result<Vec<PathBuf>> {
        let dims = png_dimensions(&entry.image_path)?;
        if dims != self.in_dims {
            return Err(Error::Geometry(format!(
                "{}: image is {}x{}, dataset images are {}x{}",
                entry.id, dims.0, dims.1, self.in_dims.0, self.in_dims.1
            )));
        }
        match &self.grid {
            Some(grid) => {
                let img = RasterImage::read_png(&entry.image_path, self.manifest.gsd_cm)?;
                stage_tiles(&img, &entry.id, grid, in_dir)
            }
            None => {
                let stem = entry.image_path.file_stem().and_then(|s| s.to_str());
                if stem == Some(entry.id.as_str()) {
                    Ok(vec![absolute(&entry.image_path)?])
                } else {
                    let staged = in_dir.join(format!("{}.png", entry.id));
                    fs::create_dir_all(in_dir).map_err(|e| Error::io(in_dir, e))?;
                    fs::copy(&entry.image_path, &staged)
                        .map_err(|e| Error::io(&entry.image_path, e))?;
                    Ok(vec![absolute(&staged)?])
                }
            }
        }
    }

    fn finish(&self, entry: &ManifestEntry, job_out: &Path) -> Result<ManifestEntry> {
        let mut img = match &self.grid {
            Some(grid) => collect_tiles(self.spec, &entry.id, grid, job_out, self.manifest.gsd_cm)?,
            None => {
                let expected = self.spec.output_dims(self.in_dims)?;
                let path = job_out.join(format!("{}.png", entry.id));
                read_output(&path, &entry.id, expected, self.manifest.gsd_cm)?
            }
        };
        if img.dims() != self.target_dims {
            img = resize_image(
                &img,
                self.target_dims.0,
                self.target_dims.1,
                ResampleFilter::Lanczos3,
            )?;
        }
        if img.dims() != self.target_dims {
            return Err(Error::Geometry(format!(
                "{}: could not reach target size",
                entry.id
            )));
        }
        let img = img.with_gsd(self.out_gsd);
        let image_path = self
            .out_dir
            .join("images")
            .join(format!("{}.png", entry.id));
        img.write_png(&image_path)?;

        let mask_path = if self.target_dims == self.in_dims {
            entry.mask_path.clone()
        } else {
            let mask = LabelMask::read_png(&entry.mask_path)?;
            if mask.dims() != self.in_dims {
                return Err(Error::Geometry(format!(
                    "{}: mask does not match image size",
                    entry.id
                )));
            }
            let resized = resize_mask(&mask, self.target_dims.0, self.target_dims.1)?;
            let path = self.out_dir.join("masks").join(format!("{}.png", entry.id));
            resized.write_png(&path)?;
            path
        };
        let mut derived = ManifestEntry::new(entry.id.clone(), image_path, mask_path);
        derived.split = entry.split;
        Ok(derived)
    }

    /// Runs one enhancer invocation over `idx`; under keep-going a failed
    /// batch is retried image by image so failures are attributed exactly.
    fn execute(&self, label: &str, idx: &[usize]) -> Vec<(usize, Option<Result<ManifestEntry>>)> {
        if !self.keep_going && self.abort.load(Ordering::Relaxed) {
            return idx.iter().map(|&i| (i, None)).collect();
        }
        let job_dir = self.work_dir.join(label);
        let in_dir = job_dir.join("in");
        let staged: Vec<(usize, Staged)> = idx
            .iter()
            .map(|&i| {
                let s = match self.stage(&self.manifest.entries[i], &in_dir) {
                    Ok(p) => Staged::Ready(p),
                    Err(e) => Staged::Failed(e),
                };
                (i, s)
            })
            .collect();
        let ready: Vec<usize> = staged
            .iter()
            .filter_map(|(i, s)| matches!(s, Staged::Ready(_)).then_some(*i))
            .collect();

        let mut results: Vec<(usize, Option<Result<ManifestEntry>>)> = Vec::new();
        let mut inputs = Vec::new();
        for (i, s) in staged {
            match s {
                Staged::Ready(p) => inputs.extend(p),
                Staged::Failed(e) => results.push((i, Some(Err(e)))),
            }
        }
        if !ready.is_empty() {
            let out_dir = match absolute(&job_dir.join("out")) {
                Ok(p) => p,
                Err(e) => {
                    results.extend(ready.iter().map(|&i| (i, Some(Err(clone_error(&e))))));
                    return self.settle(results);
                }
            };
            let job = EnhanceJob {
                inputs,
                output_dir: out_dir.clone(),
                scale: self.spec.scale,
                prompt: self.spec.prompt.clone(),
                expected_out_dims: self.spec.output_dims(self.in_dims).unwrap_or(self.in_dims),
            };
            match run_job(self.spec, &job, &job_dir, self.timeout) {
                Ok(()) => {
                    for &i in &ready {
                        results.push((i, Some(self.finish(&self.manifest.entries[i], &out_dir))));
                    }
                }
                Err(_) if self.keep_going && ready.len() > 1 => {
                    for (k, &i) in ready.iter().enumerate() {
                        results.extend(self.execute(&format!("{label}_{k}"), &[i]));
                    }
                }
                Err(e) => {
                    results.extend(ready.iter().map(|&i| (i, Some(Err(clone_error(&e))))));
                }
            }
        }
        self.settle(results)
    }

    fn settle(
        &self,
        results: Vec<(usize, Option<Result<ManifestEntry>>)>,
    ) -> Vec<(usize, Option<Result<ManifestEntry>>)> {
        if results.iter().any(|(_, r)| matches!(r, Some(Err(_)))) {
            self.abort.store(true, Ordering::Relaxed);
        }
        results
    }
}

// Errors carry io sources that are not Clone; a batch failure is reported on
// every image of the batch with the same message.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::EnhancerFailed {
            enhancer,
            status,
            stderr,
        } => Error::EnhancerFailed {
            enhancer: enhancer.clone(),
            status: status.clone(),
            stderr: stderr.clone(),
        },
        Error::EnhancerTimeout { enhancer, seconds } => Error::EnhancerTimeout {
            enhancer: enhancer.clone(),
            seconds: *seconds,
        },
        Error::OutputMissing(id) => Error::OutputMissing(id.clone()),
        Error::Geometry(m) => Error::Geometry(m.clone()),
        Error::InvalidEnhancerSpec(m) => Error::InvalidEnhancerSpec(m.clone()),
        other => Error::EnhancerFailed {
            enhancer: String::new(),
            status: other.kind().to_owned(),
            stderr: other.to_string(),
        },
    }
}

/// Runs `spec` over every image of `manifest` and registers the results as
/// dataset `name` under `out_dir` (`images/`, and `masks/` when the target
/// size differs from the source size).
///
/// The manifest is returned but not written; a failed run therefore never
/// leaves a registered manifest behind.
pub fn run_enhancer(
    manifest: &DatasetManifest,
    spec: &EnhancerSpec,
    target_dims: (u32, u32),
    name: &str,
    out_dir: &Path,
    opts: &EnhanceOptions,
) -> Result<EnhanceOutcome> {
    spec.validate()?;
    manifest.validate()?;
    let first = manifest.entries.first().ok_or(Error::EmptyDataset)?;
    if target_dims.0 == 0 || target_dims.1 == 0 {
        return Err(Error::Geometry("target size must be positive".into()));
    }
    let in_dims = png_dimensions(&first.image_path)?;
    spec.output_dims(in_dims)?;
    let grid = match spec.mode {
        EnhanceMode::Tiled => Some(spec.tile_grid(in_dims)?),
        EnhanceMode::WholeImage => None,
    };
    let out_gsd = resized_gsd(manifest.gsd_cm, in_dims.0, target_dims.0)?;
    let work_dir = out_dir.join(".jobs");
    let run = Run {
        manifest,
        spec,
        in_dims,
        target_dims,
        grid,
        out_gsd,
        out_dir: out_dir.to_path_buf(),
        work_dir: work_dir.clone(),
        timeout: Duration::from_secs(opts.timeout.unwrap_or(spec.timeout)),
        keep_going: opts.keep_going,
        abort: AtomicBool::new(false),
    };

    let indices: Vec<usize> = (0..manifest.len()).collect();
    let batches: Vec<&[usize]> = indices.chunks(opts.batch_size.max(1)).collect();
    let labelled: Vec<(String, &[usize])> = batches
        .iter()
        .enumerate()
        .map(|(k, b)| (format!("job_{k:05}"), *b))
        .collect();
    let mut results: Vec<(usize, Option<Result<ManifestEntry>>)> =
        map_bounded(opts.workers, &labelled, |(label, idx)| {
            run.execute(label, idx)
        })
        .into_iter()
        .flatten()
        .collect();
    results.sort_by_key(|(i, _)| *i);

    let mut entries = Vec::with_capacity(manifest.len());
    let mut failed = Vec::new();
    for (i, r) in results {
        let id = &manifest.entries[i].id;
        match r {
            Some(Ok(e)) => entries.push(e),
            Some(Err(e)) if opts.keep_going => failed.push(EnhanceFailure::new(id, &e)),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    if !opts.keep_going && entries.len() != manifest.len() {
        return Err(Error::EnhancerFailed {
            enhancer: spec.name.clone(),
            status: "aborted".into(),
            stderr: "run aborted after an earlier failure".into(),
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut transform = Transform::new("enhance")
        .param("enhancer", &spec.name)
        .param("mode", spec.mode)
        .param("scale", spec.scale)
        .param("target", [target_dims.0, target_dims.1]);
    if let Some(tile) = spec.tile {
        transform = transform.param("tile", tile);
    }
    if let Some(prompt) = &spec.prompt {
        transform = transform.param("prompt", prompt);
    }
    if let Some(w) = anisotropy_warning(in_dims, target_dims) {
        transform.warn(w);
    }
    for f in &failed {
        transform.warn(format!("skipped {}: {}", f.id, f.kind));
    }
    let derived = derive_manifest(manifest, name, out_gsd, transform, entries)?;
    if failed.is_empty() {
        let _ = fs::remove_dir_all(&work_dir);
    }
    Ok(EnhanceOutcome {
        manifest: derived,
        failed,
    })
}

/// Minimal enhancer implementing the job protocol with a plain resampler.
///
/// Each input is resized by the job's scale with `filter`. Inputs whose stem
/// contains `fail_on` make the whole job fail, which is how failure handling
/// is exercised.
pub fn reference_enhance(
    job_file: &Path,
    filter: ResampleFilter,
    fail_on: Option<&str>,
) -> Result<()> {
    let text = fs::read_to_string(job_file).map_err(|e| Error::io(job_file, e))?;
    let job: JobFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: job_file.to_path_buf(),
        source,
    })?;
    let scale: Rational = format!("{}", job.scale).parse()?;
    let one = Rational::integer(1)?;
    if let Some(pattern) = fail_on {
        if let Some(bad) = job.inputs.iter().find(|p| {
            p.file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.contains(pattern))
        }) {
            return Err(Error::InvalidValue(format!(
                "refusing to enhance {}",
                bad.display()
            )));
        }
    }
    fs::create_dir_all(&job.output_dir).map_err(|e| Error::io(&job.output_dir, e))?;
    for input in &job.inputs {
        let img = RasterImage::read_png(input, one)?;
        let w = scale.times_integer(u64::from(img.width()));
        let h = scale.times_integer(u64::from(img.height()));
        let (Some(w), Some(h)) = (w, h) else {
            return Err(Error::Geometry(format!(
                "scale {scale} does not fit {}",
                input.display()
            )));
        };
        let out = resize_image(&img, w as u32, h as u32, filter)?;
        let stem = input.file_stem().unwrap_or_default();
        out.write_png(&job.output_dir.join(stem).with_extension("png"))?;
    }
    Ok(())
}
