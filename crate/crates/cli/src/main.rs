use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use pano_reduce::io::{read_config, read_mask, write_mask, write_rgb};
use pano_reduce::pipeline::{compare_baseline, run, static_band_mask, PipelineError, STATIC_BAND_FRACTION};
use pano_reduce::scene::{fixture, render, FIXTURE_NAMES};

/// Plane-guided region reduction for panoramic privacy blurring.
#[derive(Parser)]
#[command(name = "pano-reduce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `ransac.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `outputs.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a catalog scene to rgb.ppm, depth.pfm and truth.json.
    RenderFixture {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Depth noise standard deviation in metres.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
    },
    /// Compare the coverage of two masks; prints a JSON report.
    CompareBaseline {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Writes the difference image (white both, red a only, blue b only).
        #[arg(long)]
        diff: Option<PathBuf>,
    },
    /// Write the static band mask that covers a fixed share of the sphere.
    BaselineMask {
        #[arg(long, default_value_t = 4096)]
        width: usize,
        #[arg(long, default_value_t = 2048)]
        height: usize,
        #[arg(long, default_value_t = STATIC_BAND_FRACTION)]
        fraction: f64,
        /// Elevation below which rows belong to the vehicle.
        #[arg(long, default_value_t = -62.0, allow_hyphen_values = true)]
        cutoff_deg: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    fn stage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 3,
            error: error.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Self {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

fn run_config(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = read_config(config).map_err(Failure::config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    if let Some(seed) = seed {
        cfg.ransac.seed = seed;
    }
    cfg.resolve_paths(base);
    if let Some(out) = out {
        cfg.outputs.dir = out;
    }
    let output = run(&cfg)?;
    let m = &output.metrics;
    println!(
        "coverage {:.4}, {} patches, {} detections ({} before merge), written to {}",
        m.coverage_fraction,
        m.patch_count,
        m.detection_count_post_merge,
        m.detection_count_pre_merge,
        cfg.outputs.dir.display()
    );
    Ok(())
}

fn render_fixture(
    name: &str,
    out: &Path,
    width: Option<usize>,
    height: Option<usize>,
    noise: Option<f64>,
    noise_seed: u64,
) -> Result<(), Failure> {
    let mut spec = fixture(name).ok_or_else(|| {
        Failure::config(anyhow::anyhow!(
            "unknown fixture {name:?}; known: {}",
            FIXTURE_NAMES.join(", ")
        ))
    })?;
    let width = width.unwrap_or(spec.render.width);
    let height = height.unwrap_or(width / 2);
    spec = spec.with_resolution(width, height);
    if let Some(sigma) = noise {
        spec = spec.with_noise(sigma, noise_seed);
    }
    let scene = render(&spec).map_err(Failure::config)?;
    scene.write_to(out, spec.camera_height).map_err(Failure::stage)?;
    println!(
        "{name}: {width}x{height}, {} objects, {} planes, written to {}",
        scene.gt_objects.len(),
        scene.gt_planes.len(),
        out.display()
    );
    Ok(())
}

fn compare(a: &Path, b: &Path, diff: Option<&Path>) -> Result<(), Failure> {
    let read = |p: &Path| read_mask(p).map_err(Failure::stage);
    let (report, image) = compare_baseline(&read(a)?, &read(b)?).map_err(Failure::stage)?;
    if let Some(path) = diff {
        write_rgb(&image, path).map_err(Failure::stage)?;
    }
    let text = serde_json::to_string_pretty(&report)
        .context("serializing report")
        .map_err(Failure::stage)?;
    // A closed pipe (e.g. `| head`) is not an error.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn baseline_mask(width: usize, height: usize, fraction: f64, cutoff_deg: f64, out: &Path) -> Result<(), Failure> {
    if width == 0 || height == 0 || width != 2 * height {
        return Err(Failure::config(anyhow::anyhow!(
            "need width = 2 x height > 0, got {width}x{height}"
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Failure::config(anyhow::anyhow!(
            "fraction must be in [0, 1], got {fraction}"
        )));
    }
    let mask = static_band_mask(width, height, fraction, cutoff_deg);
    write_mask(&mask, out).map_err(Failure::stage)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => run_config(&config, seed, out),
        Command::RenderFixture {
            name,
            out,
            width,
            height,
            noise,
            noise_seed,
        } => render_fixture(&name, &out, width, height, noise, noise_seed),
        Command::CompareBaseline { a, b, diff } => compare(&a, &b, diff.as_deref()),
        Command::BaselineMask {
            width,
            height,
            fraction,
            cutoff_deg,
            out,
        } => baseline_mask(width, height, fraction, cutoff_deg, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
