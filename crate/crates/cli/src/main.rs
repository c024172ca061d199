//! `gsdkit`: GSD harmonization pipelines for aerial segmentation datasets.

mod config;
mod log;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsdkit_core::dataset::write_json;
use gsdkit_core::enhance::{run_enhancer, EnhanceFailure, EnhanceOptions, EnhancerSpec};
use gsdkit_core::eval::{evaluate_directory, CrossMatrix};
use gsdkit_core::harmonize::{harmonize, plan_harmonize, GridConfig, HarmonizeConfig, Method};
use gsdkit_core::lowres::{run_scenario, ScenarioSpec};
use gsdkit_core::pairgen::{generate_pairs, planned_pair_count, PairSpec};
use gsdkit_core::raster::png_dimensions;
use gsdkit_core::{
    assign_splits, build_manifest, DatasetManifest, Error, Rational, Result, Split, SplitCounts,
};
use serde_json::{json, Value};

use crate::config::PipelineConfig;

/// Exit status when `--keep-going` skipped some images.
const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "gsdkit",
    version,
    about = "Ground-sample-distance harmonization for aerial segmentation datasets"
)]
struct Cli {
    /// Base directory for relative paths.
    #[arg(long, global = true, env = "GSDKIT_WORKSPACE")]
    workspace: Option<PathBuf>,
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print planned counts without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// error | info | debug
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pair image and mask folders into a manifest with seeded splits.
    Ingest(IngestArgs),
    /// Resample (Lanczos or enhancer) to a target GSD and tile into patches.
    Harmonize(HarmonizeArgs),
    /// Build clean|degraded side-by-side pairs.
    Pairs(PairsArgs),
    /// Run an external enhancer over a manifest.
    Enhance(EnhanceArgs),
    /// Pixel IoU of a prediction folder against a manifest.
    Eval(EvalArgs),
    /// Low-resolution scenario from a scenario.json.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    /// Centimeters per pixel, e.g. 20, 2.5 or 5/2.
    #[arg(long)]
    gsd: Rational,
    /// Dataset name; defaults to the parent folder name of the images.
    #[arg(long)]
    name: Option<String>,
    /// Manifest file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EnhancerArgs {
    /// Enhancer spec JSON.
    #[arg(long)]
    enhancer: Option<PathBuf>,
    /// Per-invocation timeout in seconds; overrides the spec.
    #[arg(long)]
    timeout: Option<u64>,
    /// Skip images whose enhancement fails instead of aborting.
    #[arg(long)]
    keep_going: bool,
    /// Images per enhancer invocation.
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Lanczos,
    Enhancer,
}

#[derive(Debug, Args)]
struct HarmonizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "lanczos")]
    method: MethodArg,
    #[arg(long)]
    target_gsd: Option<Rational>,
    #[arg(long)]
    patch: Option<u32>,
    #[arg(long)]
    rows: Option<u32>,
    #[arg(long)]
    cols: Option<u32>,
    #[arg(long)]
    name: Option<String>,
    /// Output directory (manifest.json, images/, masks/).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    enhancer: EnhancerArgs,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Degradation sizes, strictly increasing.
    #[arg(long, num_args = 1..)]
    resolutions: Option<Vec<u32>>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `W` or `WxH`; defaults to the enhancer's native output size.
    #[arg(long)]
    target_size: Option<String>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    enhancer: EnhancerArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Folder of `<id>.png` prediction masks.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Manifest of the evaluated (target) dataset.
    #[arg(long)]
    manifest: PathBuf,
    /// Name of the dataset the model was trained on.
    #[arg(long)]
    source: String,
    /// train | val | test | all
    #[arg(long, default_value = "test")]
    split: String,
    /// Report folder; existing reports there are kept and extended.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output root; each dataset lands in `<out>/<name>/`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    keep_going: bool,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
}

struct Ctx {
    workspace: Option<PathBuf>,
    config: PipelineConfig,
    dry_run: bool,
    seed: u64,
    workers: usize,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.workspace {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn enhance_options(
        &self,
        timeout: Option<u64>,
        keep_going: bool,
        batch_size: usize,
    ) -> EnhanceOptions {
        EnhanceOptions {
            workers: self.workers,
            batch_size: batch_size.max(1),
            keep_going,
            timeout: timeout.or(self.config.timeout),
        }
    }
}

enum Done {
    Complete,
    Partial,
}

fn print(value: Value) {
    println!("{value}");
}

fn splits_json(c: SplitCounts) -> Value {
    json!({"train": c.train, "val": c.val, "test": c.test})
}

fn report_failures(out_dir: &Path, failed: &[EnhanceFailure]) -> Result<()> {
    write_json(&out_dir.join("failed.json"), &failed)?;
    for f in failed {
        eprintln!(
            "{}",
            json!({"level": "error", "kind": f.kind, "id": f.id, "message": f.message})
        );
    }
    Ok(())
}

fn cmd_ingest(ctx: &Ctx, args: &IngestArgs) -> Result<Done> {
    let t = Instant::now();
    let images = ctx.path(&args.images);
    let name = args.name.clone().unwrap_or_else(|| {
        images
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .unwrap_or("dataset")
            .to_owned()
    });
    let manifest = build_manifest(&name, &images, &ctx.path(&args.masks), args.gsd)?;
    log::stage(
        "build_manifest",
        t.elapsed().as_millis(),
        json!({"entries": manifest.len()}),
    );
    if ctx.dry_run {
        if manifest.len() < 3 {
            return Err(Error::TooFewEntries(manifest.len()));
        }
        print(json!({
            "command": "ingest", "dry_run": true, "name": name,
            "planned_entries": manifest.len(),
            "planned_splits": splits_json(SplitCounts::planned(manifest.len())),
        }));
        return Ok(Done::Complete);
    }
    let t = Instant::now();
    let manifest = assign_splits(manifest, ctx.seed)?;
    let out = ctx.path(&args.out);
    manifest.save(&out)?;
    let counts = manifest.split_counts();
    log::stage(
        "assign_splits",
        t.elapsed().as_millis(),
        json!({"seed": ctx.seed, "splits": splits_json(counts)}),
    );
    print(json!({
        "command": "ingest", "name": manifest.name, "entries": manifest.len(),
        "splits": splits_json(counts), "manifest": out.display().to_string(),
    }));
    Ok(Done::Complete)
}

fn load_enhancer(ctx: &Ctx, path: Option<&PathBuf>) -> Result<EnhancerSpec> {
    let path =
        path.ok_or_else(|| Error::InvalidValue("--enhancer <spec.json> is required".into()))?;
    EnhancerSpec::load(&ctx.path(path))
}

fn cmd_harmonize(ctx: &Ctx, args: &HarmonizeArgs) -> Result<Done> {
    let manifest = DatasetManifest::load(&ctx.path(&args.manifest))?;
    let method = match args.method {
        MethodArg::Lanczos => Method::Lanczos,
        MethodArg::Enhancer => {
            Method::Enhancer(load_enhancer(ctx, args.enhancer.enhancer.as_ref())?)
        }
    };
    let target_gsd_cm = args
        .target_gsd
        .or(ctx.config.target_gsd_cm)
        .ok_or_else(|| Error::InvalidValue("--target-gsd is required".into()))?;
    let grid = GridConfig {
        patch: args.patch.or(ctx.config.grid.patch),
        rows: args.rows.or(ctx.config.grid.rows).unwrap_or(3),
        cols: args.cols.or(ctx.config.grid.cols).unwrap_or(3),
    };
    let config = HarmonizeConfig {
        target_gsd_cm,
        grid,
        name: args.name.clone(),
        enhance: ctx.enhance_options(
            args.enhancer.timeout,
            args.enhancer.keep_going,
            args.enhancer.batch_size,
        ),
    };
    let plan = plan_harmonize(&manifest, &method, &config)?;
    if ctx.dry_run {
        print(json!({
            "command": "harmonize", "dry_run": true, "name": plan.name,
            "target_dims": [plan.target_dims.0, plan.target_dims.1],
            "gsd_cm": plan.target_gsd_cm, "factor": plan.factor,
            "planned_entries": plan.planned_entries,
            "planned_splits": splits_json(plan.planned_splits),
        }));
        return Ok(Done::Complete);
    }
    let t = Instant::now();
    let out = ctx.path(&args.out);
    let outcome = harmonize(&manifest, &method, &config, &out)?;
    outcome.manifest.save(&out.join("manifest.json"))?;
    let counts = outcome.manifest.split_counts();
    log::stage(
        "harmonize",
        t.elapsed().as_millis(),
        json!({"entries": outcome.manifest.len(), "failed": outcome.failed.len()}),
    );
    print(json!({
        "command": "harmonize", "name": outcome.manifest.name, "entries": outcome.manifest.len(),
        "gsd_cm": outcome.manifest.gsd_cm, "splits": splits_json(counts),
        "failed": outcome.failed.iter().map(|f| &f.id).collect::<Vec<_>>(),
    }));
    if outcome.failed.is_empty() {
        Ok(Done::Complete)
    } else {
        report_failures(&out, &outcome.failed)?;
        Ok(Done::Partial)
    }
}

fn cmd_pairs(ctx: &Ctx, args: &PairsArgs) -> Result<Done> {
    let manifest = DatasetManifest::load(&ctx.path(&args.manifest))?;
    let resolutions = args
        .resolutions
        .clone()
        .or_else(|| ctx.config.pair_resolutions.clone())
        .ok_or_else(|| Error::InvalidValue("--resolutions is required".into()))?;
    let spec = PairSpec::new(resolutions)?;
    manifest.require_assigned_splits()?;
    let first = manifest.entries.first().ok_or(Error::EmptyDataset)?;
    let (w, h) = png_dimensions(&first.image_path)?;
    spec.check_source(w, h)?;
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| format!("{}-pairs", manifest.name));
    let planned = planned_pair_count(&manifest, &spec);
    if ctx.dry_run {
        print(json!({
            "command": "pairs", "dry_run": true, "name": name,
            "planned_entries": planned,
            "planned_splits": splits_json(manifest.split_counts().scaled(spec.resolutions().len())),
        }));
        return Ok(Done::Complete);
    }
    let t = Instant::now();
    let out = ctx.path(&args.out);
    let set = generate_pairs(&manifest, &spec, &name, &out, ctx.workers)?;
    set.save(&out)?;
    log::stage(
        "pairs",
        t.elapsed().as_millis(),
        json!({"entries": set.manifest.len()}),
    );
    print(json!({
        "command": "pairs", "name": name, "entries": set.manifest.len(),
        "splits": splits_json(set.manifest.split_counts()),
    }));
    Ok(Done::Complete)
}

fn parse_size(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::InvalidValue(format!("`{s}` is not a size (W or WxH)"));
    let (w, h) = match s.split_once(['x', 'X']) {
        Some((w, h)) => (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?),
        None => {
            let v: u32 = s.parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn cmd_enhance(ctx: &Ctx, args: &EnhanceArgs) -> Result<Done> {
    let manifest = DatasetManifest::load(&ctx.path(&args.manifest))?;
    let spec = load_enhancer(ctx, args.enhancer.enhancer.as_ref())?;
    let first = manifest.entries.first().ok_or(Error::EmptyDataset)?;
    let dims = png_dimensions(&first.image_path)?;
    let native = spec.output_dims(dims)?;
    let target = match &args.target_size {
        Some(s) => parse_size(s)?,
        None => native,
    };
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| spec.derived_name(&manifest.name));
    if ctx.dry_run {
        print(json!({
            "command": "enhance", "dry_run": true, "name": name,
            "target_dims": [target.0, target.1],
            "planned_entries": manifest.len(),
            "planned_splits": splits_json(manifest.split_counts()),
        }));
        return Ok(Done::Complete);
    }
    let t = Instant::now();
    let out = ctx.path(&args.out);
    let opts = ctx.enhance_options(
        args.enhancer.timeout,
        args.enhancer.keep_going,
        args.enhancer.batch_size,
    );
    let outcome = run_enhancer(&manifest, &spec, target, &name, &out, &opts)?;
    outcome.manifest.save(&out.join("manifest.json"))?;
    log::stage(
        "enhance",
        t.elapsed().as_millis(),
        json!({"enhancer": spec.name, "entries": outcome.manifest.len(), "failed": outcome.failed.len()}),
    );
    print(json!({
        "command": "enhance", "name": name, "entries": outcome.manifest.len(),
        "gsd_cm": outcome.manifest.gsd_cm, "splits": splits_json(outcome.manifest.split_counts()),
        "failed": outcome.failed.iter().map(|f| &f.id).collect::<Vec<_>>(),
    }));
    if outcome.failed.is_empty() {
        Ok(Done::Complete)
    } else {
        report_failures(&out, &outcome.failed)?;
        Ok(Done::Partial)
    }
}

fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> Result<Done> {
    let manifest = DatasetManifest::load(&ctx.path(&args.manifest))?;
    let split = match args.split.as_str() {
        "all" => None,
        s => Some(s.parse::<Split>()?),
    };
    let pred_dir = ctx.path(&args.pred_dir);
    let selected: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| split.is_none() || e.split == split)
        .collect();
    if let Some(missing) = selected
        .iter()
        .find(|e| !pred_dir.join(format!("{}.png", e.id)).is_file())
    {
        return Err(Error::MissingPrediction(missing.id.clone()));
    }
    if ctx.dry_run {
        print(json!({
            "command": "eval", "dry_run": true, "source": args.source, "target": manifest.name,
            "planned_entries": selected.len(),
        }));
        return Ok(Done::Complete);
    }
    let t = Instant::now();
    let report = evaluate_directory(&manifest, &pred_dir, &args.source, split)?;
    let out = ctx.path(&args.out);
    let existing = out.join("reports.json");
    let mut matrix = if existing.is_file() {
        CrossMatrix::load(&existing)?
    } else {
        CrossMatrix::default()
    };
    matrix.upsert(report.clone());
    matrix.save(&out)?;
    log::stage(
        "eval",
        t.elapsed().as_millis(),
        json!({"entries": selected.len(), "pixels": report.pixels}),
    );
    print(json!({
        "command": "eval", "source": report.source, "target": report.target, "entries": selected.len(),
        "background": report.iou(0).map(|p| p.to_string()),
        "trees": report.iou(1).map(|p| p.to_string()),
        "average": report.macro_average.map(|p| p.to_string()),
    }));
    Ok(Done::Complete)
}

fn cmd_scenario(ctx: &Ctx, args: &ScenarioArgs) -> Result<Done> {
    let spec = ScenarioSpec::load(&ctx.path(&args.spec))?;
    let source = DatasetManifest::load(&spec.source_manifest)?;
    spec.validate(&source)?;
    source.require_assigned_splits()?;
    let first = source.entries.first().ok_or(Error::EmptyDataset)?;
    let (w, h) = png_dimensions(&first.image_path)?;
    if spec.degrade_to >= w || spec.degrade_to >= h {
        return Err(Error::InvalidDegradeTarget {
            low_w: spec.degrade_to,
            low_h: spec.degrade_to,
            width: w,
            height: h,
        });
    }
    let names = spec.output_names(&source.name);
    if ctx.dry_run {
        print(json!({
            "command": "scenario", "dry_run": true, "manifests": names,
            "planned_entries": names.len() * source.len(),
        }));
        return Ok(Done::Complete);
    }
    let t = Instant::now();
    let opts = ctx.enhance_options(args.timeout, args.keep_going, args.batch_size);
    let out = ctx.path(&args.out);
    let outcome = run_scenario(&spec, &out, &opts)?;
    let total: usize = outcome.manifests.iter().map(DatasetManifest::len).sum();
    log::stage(
        "scenario",
        t.elapsed().as_millis(),
        json!({"manifests": outcome.manifests.len(), "entries": total}),
    );
    print(json!({
        "command": "scenario",
        "manifests": outcome.manifests.iter().map(|m| json!({"name": m.name, "entries": m.len()})).collect::<Vec<_>>(),
        "entries": total,
        "failed": outcome.failed.iter().map(|(n, f)| json!({"dataset": n, "id": f.id})).collect::<Vec<_>>(),
    }));
    if outcome.failed.is_empty() {
        Ok(Done::Complete)
    } else {
        let failed: Vec<_> = outcome.failed.into_iter().map(|(_, f)| f).collect();
        report_failures(&out, &failed)?;
        Ok(Done::Partial)
    }
}

fn run(cli: Cli) -> Result<Done> {
    let workspace = cli.workspace.clone();
    let config = match &cli.config {
        Some(p) => {
            let p = match &workspace {
                Some(root) if p.is_relative() => root.join(p),
                _ => p.clone(),
            };
            PipelineConfig::load(&p)?
        }
        None => PipelineConfig::default(),
    };
    let level = cli
        .log_level
        .clone()
        .or_else(|| config.log_level.clone())
        .map(|l| l.parse::<log::Level>())
        .transpose()?
        .unwrap_or(log::Level::Info);
    log::set_level(level);
    let workers = cli
        .workers
        .or(config.workers)
        .unwrap_or_else(gsdkit_core::parallel::default_workers);
    if workers == 0 {
        return Err(Error::InvalidValue("--workers must be at least 1".into()));
    }
    if let Some(root) = &workspace {
        fs::metadata(root).map_err(|source| Error::Io {
            path: root.clone(),
            source,
        })?;
    }
    let ctx = Ctx {
        workspace,
        seed: cli.seed.or(config.seed).unwrap_or(0),
        config,
        dry_run: cli.dry_run,
        workers,
    };
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Harmonize(a) => cmd_harmonize(&ctx, a),
        Command::Pairs(a) => cmd_pairs(&ctx, a),
        Command::Enhance(a) => cmd_enhance(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Scenario(a) => cmd_scenario(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Done::Complete) => ExitCode::SUCCESS,
        Ok(Done::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            log::error(&e);
            ExitCode::FAILURE
        }
    }
}
