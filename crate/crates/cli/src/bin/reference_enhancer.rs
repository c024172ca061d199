//! Reference implementation of the enhancer job protocol.
//!
//! Resizes every job input by the job's scale factor and writes it to the
//! job's output directory under the same stem. Useful as a stand-in for a
//! real model when wiring up pipelines.
//!
//! ```text
//! reference-enhancer [--filter nearest|lanczos3] [--fail-on <substring>] <job.json>
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gsdkit_core::enhance::reference_enhance;
use gsdkit_core::ResampleFilter;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Filter {
    Nearest,
    Lanczos3,
}

#[derive(Debug, Parser)]
#[command(
    version,
    about = "Reference enhancer: resamples job inputs by the job scale"
)]
struct Args {
    #[arg(long, value_enum, default_value = "nearest")]
    filter: Filter,
    /// Fail the job when an input stem contains this substring.
    #[arg(long)]
    fail_on: Option<String>,
    job_file: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let filter = match args.filter {
        Filter::Nearest => ResampleFilter::NearestNeighbor,
        Filter::Lanczos3 => ResampleFilter::Lanczos3,
    };
    match reference_enhance(&args.job_file, filter, args.fail_on.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reference-enhancer: {e}");
            ExitCode::FAILURE
        }
    }
}
