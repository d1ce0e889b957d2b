//! `holocolor` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use holocolor::autofocus::FocusSearch;
use holocolor::metrics::MetricReport;
use holocolor::pipeline::{
    self, io, prepare_network_input,
    scenario::{write_scenario, ScenarioConfig},
    FocusDistance, Mode, PipelineConfig, PsrSettings, ShiftSource, TilingConfig,
};
use holocolor::superres::CrosstalkMatrix;

#[derive(Parser)]
#[command(name = "holocolor", version, about = "Lensfree holographic color microscopy reconstruction")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set with a ready-to-run reconstruction config.
    Simulate(SimulateArgs),
    /// Reconstruct a color image from recorded frames.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstruction against a reference image.
    Metrics(MetricsArgs),
    /// Build the six-channel network input tensor from one multiplexed height.
    PrepareInput(PrepareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML; defaults are used when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Mode when no scenario file is given.
    #[arg(long, value_parser = parse_mode, default_value = "multiheight-multiplexed")]
    mode: Mode,
    /// Override the phantom side length in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Override the phantom seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Directory holding frames.toml.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Cross-talk (W) matrix file.
    #[arg(long)]
    crosstalk: Option<PathBuf>,
    /// Reference image for the metric report.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated illumination wavelengths, nm.
    #[arg(long, value_delimiter = ',')]
    wavelengths: Option<Vec<f64>>,
    /// Comma-separated sample-to-sensor distances, µm.
    #[arg(long, value_delimiter = ',')]
    heights: Option<Vec<f64>>,
    /// Estimate heights by autofocus over this window (µm), e.g. `100,500`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    autofocus: Option<Vec<f64>>,
    #[arg(long)]
    psr_factor: Option<usize>,
    /// Bayer pattern such as RGGB.
    #[arg(long)]
    bayer: Option<String>,
    /// Register frames by cross-correlation instead of stage metadata.
    #[arg(long)]
    estimate_shifts: bool,
    /// Treat the field of view as periodic during super-resolution.
    #[arg(long)]
    wrap: bool,
    /// Object plane relative to the sample plane, µm.
    #[arg(long)]
    object_z: Option<f64>,
    #[arg(long)]
    refractive_index: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Relative-update stopping tolerance of phase recovery.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Skip the 8-bit PNG renderings.
    #[arg(long)]
    no_png: bool,
    /// Tile side in pixels; enables tiled processing.
    #[arg(long)]
    tile_size: Option<usize>,
    /// Tile overlap fraction (with --tile-size).
    #[arg(long, default_value_t = 0.1)]
    overlap: f64,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Write the key=value report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PrepareArgs {
    /// Directory holding frames.toml.
    #[arg(long)]
    frames: PathBuf,
    /// Height to use when the frame set holds several.
    #[arg(long)]
    height_index: Option<usize>,
    #[arg(long)]
    crosstalk: PathBuf,
    /// Known sample-to-sensor distance, µm; autofocus when absent.
    #[arg(long)]
    z: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    z_min: f64,
    #[arg(long, default_value_t = 500.0)]
    z_max: f64,
    #[arg(long, default_value_t = 3)]
    psr_factor: usize,
    /// Treat the field of view as periodic.
    #[arg(long)]
    wrap: bool,
    #[arg(long, default_value_t = 1.0)]
    refractive_index: f64,
    /// Output tensor file.
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut scenario = match &a.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::new(a.mode),
    };
    if let Some(size) = a.size {
        scenario.phantom.size = size;
    }
    if let Some(seed) = a.seed {
        scenario.phantom.seed = seed;
    }
    let art = write_scenario(&scenario, &a.out)?;
    println!("frames={}", art.frame_count);
    println!("config={}", art.config.display());
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if a.frames.is_some() {
        cfg.input.frames = a.frames;
    }
    if a.crosstalk.is_some() {
        cfg.input.crosstalk = a.crosstalk;
    }
    if a.reference.is_some() {
        cfg.input.reference = a.reference;
    }
    if let Some(out) = a.out {
        cfg.output.directory = out;
    }
    if a.wavelengths.is_some() {
        cfg.acquisition.wavelengths = a.wavelengths;
    }
    if a.heights.is_some() {
        cfg.acquisition.heights = a.heights;
    }
    if let Some(window) = a.autofocus {
        let mut af = cfg.autofocus.unwrap_or_default();
        af.z_min = window[0];
        af.z_max = window[1];
        cfg.autofocus = Some(af);
        cfg.acquisition.heights = None;
    }
    if let Some(f) = a.psr_factor {
        cfg.acquisition.psr_factor = f;
    }
    if let Some(b) = a.bayer {
        cfg.acquisition.bayer = b;
    }
    if a.estimate_shifts {
        cfg.acquisition.shifts = ShiftSource::Estimate;
    }
    if a.wrap {
        cfg.acquisition.wrap = true;
    }
    if let Some(z) = a.object_z {
        cfg.acquisition.object_z = z;
    }
    if let Some(n) = a.refractive_index {
        cfg.refractive_index = n;
    }
    if let Some(n) = a.max_iterations {
        cfg.recovery.max_iterations = n;
    }
    if let Some(t) = a.tolerance {
        cfg.recovery.tolerance = t;
    }
    if a.no_png {
        cfg.output.png = false;
    }
    if let Some(t) = a.tile_size {
        cfg.tiling = Some(TilingConfig {
            tile_size: t,
            overlap: a.overlap,
        });
    }
    cfg.validate()?;
    let art = pipeline::run(&cfg)?;
    if let Some(m) = &art.metrics {
        print!("{}", m.to_text());
    }
    for p in &art.written {
        log::debug!("wrote {}", p.display());
    }
    println!("output={}", cfg.output.directory.display());
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let reference = io::read_rgb(&a.reference).with_context(|| format!("reading {}", a.reference.display()))?;
    let output = io::read_rgb(&a.output).with_context(|| format!("reading {}", a.output.display()))?;
    let report = MetricReport::compare(&reference, &output)?;
    print!("{}", report.to_text());
    if let Some(p) = a.report {
        std::fs::write(&p, report.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn prepare_input(a: PrepareArgs) -> Result<()> {
    let mut frames = io::read_frame_set(&a.frames)?;
    if let Some(k) = a.height_index {
        frames.retain(|f| f.height_index == k);
        if frames.is_empty() {
            bail!("no frames recorded at height index {k}");
        }
    } else if frames.iter().any(|f| f.height_index != frames[0].height_index) {
        bail!("the frame set holds several heights; choose one with --height-index");
    }
    let w = CrosstalkMatrix::from_file(&a.crosstalk)?;
    let z = match a.z {
        Some(z) => FocusDistance::Known(z),
        None => FocusDistance::Auto(FocusSearch::new(a.z_min, a.z_max, 10.0, 0.5)?),
    };
    let mut psr = PsrSettings::new(a.psr_factor);
    psr.wrap = a.wrap;
    let tensor = prepare_network_input(&frames, &w, z, a.refractive_index, &psr)?;
    tensor.write(&a.out)?;
    println!("z={}", tensor.z);
    println!("output={}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Metrics(a) => metrics(a),
        Command::PrepareInput(a) => prepare_input(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
