//! `touchpipe` command-line front end.
//!
//! Exit codes: 0 on success, 2 when the configuration (config file, scene
//! spec, calibration files, flags) is unusable, 3 when input data is.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use touchpipe::bench::{bench_dir, DEFAULT_RUNS, DEFAULT_THREADS};
use touchpipe::calibration::{build_map, CalibrationGrid};
use touchpipe::config::{PipelineConfig, CONFIG_ENV};
use touchpipe::eval::{evaluate, read_log, DEFAULT_MATCH_RADIUS};
use touchpipe::mser::build_tree;
use touchpipe::pipeline::{preprocess_serial, run_replay, Pipeline, PipelineError, ReplayOptions, Resources};
use touchpipe::roi::detect_rois;
use touchpipe::synth::{write_scene, GroundTruth, SceneDir, SceneSpec, SynthError};
use touchpipe::tuio::UdpSender;

#[derive(Parser)]
#[command(name = "touchpipe", version, about = "Optical multi-touch processing pipeline")]
struct Cli {
    /// Pipeline config JSON; falls back to $TOUCHPIPE_CONFIG, then the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an undistortion map from a calibration grid.
    Calibrate(CalibrateArgs),
    /// Replay a directory of PGM frames.
    Run(RunArgs),
    /// Render a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Score an event log against ground truth.
    Eval(EvalArgs),
    /// Time the pipeline on a directory of PGM frames.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibration grid JSON.
    grid: PathBuf,
    /// Output map file.
    #[arg(long, short)]
    out: PathBuf,
    /// Corrected frame width; defaults to the config frame width.
    #[arg(long)]
    width: Option<usize>,
    /// Corrected frame height; defaults to the config frame height.
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Directory of PGM frames, processed in file name order.
    frames: PathBuf,
    /// Write the JSON event log here, one line per frame.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    tuio_host: Option<String>,
    #[arg(long)]
    tuio_port: Option<u16>,
    /// Do not send TUIO bundles.
    #[arg(long)]
    no_tuio: bool,
    /// Pace playback at this frame rate instead of running at full speed.
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the component trees of this frame index instead of replaying.
    #[arg(long, value_name = "FRAME")]
    dump_tree: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec JSON.
    spec: PathBuf,
    /// Output directory for frames, truth.json, illumination images and config.json.
    out: PathBuf,
    /// Mirror the scene about the vertical center line.
    #[arg(long)]
    mirror: bool,
    /// Override the scene's frame count.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON event log from `run --log`.
    log: PathBuf,
    /// Ground truth JSON from `synth`.
    truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MATCH_RADIUS)]
    radius: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of PGM frames.
    frames: PathBuf,
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THREADS)]
    threads: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
}

enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

type Outcome = Result<(), Failure>;

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Data(e.into())
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { .. } => Failure::Data(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let source = match (&cli.config, std::env::var_os(CONFIG_ENV)) {
        (Some(p), _) => p.display().to_string(),
        (None, Some(p)) => PathBuf::from(p).display().to_string(),
        (None, None) => "built-in defaults".into(),
    };
    PipelineConfig::resolve(cli.config.as_deref())
        .with_context(|| format!("config from {source}"))
        .config()
}

fn calibrate(cfg: &PipelineConfig, a: &CalibrateArgs) -> Outcome {
    let grid = CalibrationGrid::load(&a.grid).with_context(|| a.grid.display().to_string()).config()?;
    let (w, h) = (a.width.unwrap_or(cfg.frame.width), a.height.unwrap_or(cfg.frame.height));
    let map = build_map(&grid, w, h).config()?;
    map.save(&a.out).with_context(|| a.out.display().to_string()).data()?;
    log::info!("wrote {w}x{h} map, {} pixels outside the source frame", map.flagged_count());
    Ok(())
}

fn dump_trees(cfg: &PipelineConfig, res: &Resources, dir: &Path, k: usize) -> Outcome {
    let files = touchpipe::pgm::list_frames(dir).with_context(|| dir.display().to_string()).data()?;
    let path = files
        .get(k)
        .ok_or_else(|| anyhow!("{} has {} frames, no frame {k}", dir.display(), files.len()))
        .data()?;
    let img = touchpipe::pgm::read(path).with_context(|| path.display().to_string()).data()?;
    let img = preprocess_serial(&img, res);
    let det = detect_rois(&img, cfg.roi.threshold, cfg.roi.min_pixels);
    let mut out = std::io::stdout().lock();
    for roi in &det.rois {
        let tree = build_tree(&img, &det.raster, roi, cfg.mser.delta).data()?;
        writeln!(out, "roi {} ({} pixels)", roi.label, roi.pixel_count).data()?;
        write!(out, "{}", tree.dump()).data()?;
    }
    Ok(())
}

fn run(mut cfg: PipelineConfig, a: &RunArgs) -> Outcome {
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    if let Some(h) = &a.tuio_host {
        cfg.tuio.host = h.clone();
    }
    if let Some(p) = a.tuio_port {
        cfg.tuio.port = p;
    }
    let res = Resources::load(&cfg)?;
    if let Some(k) = a.dump_tree {
        return dump_trees(&cfg, &res, &a.frames, k);
    }
    let sender = if a.no_tuio {
        None
    } else {
        Some(
            UdpSender::new(&cfg.tuio.host, cfg.tuio.port)
                .with_context(|| format!("TUIO destination {}:{}", cfg.tuio.host, cfg.tuio.port))
                .config()?,
        )
    };
    let mut log_file = match &a.log {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| p.display().to_string()).data()?,
        )),
        None => None,
    };
    let mut pipeline = Pipeline::new(cfg, res)?;
    let summary = run_replay(
        &mut pipeline,
        &a.frames,
        ReplayOptions {
            log: log_file.as_mut().map(|w| w as &mut dyn Write),
            sender: sender.as_ref(),
            pace: a.fps,
        },
    )?;
    if let Some(mut w) = log_file {
        w.flush().data()?;
    }
    let total: u64 = summary.timings.iter().map(|t| t.total).sum();
    log::info!(
        "{} frames, {} fingertip reports, {:.3} ms/frame on {} threads",
        summary.frames,
        summary.fingertips,
        total as f64 / 1000.0 / summary.frames.max(1) as f64,
        pipeline.threads()
    );
    Ok(())
}

fn synth(cfg: &PipelineConfig, a: &SynthArgs) -> Outcome {
    let mut spec = SceneSpec::load(&a.spec)?;
    if a.mirror {
        spec = spec.mirrored();
    }
    if let Some(n) = a.frames {
        spec.frames = n;
        spec.validate()?;
    }
    write_scene(&spec, &a.out)?;
    let dir = SceneDir::new(&a.out);
    let mut scene_cfg = cfg.clone();
    scene_cfg.frame.width = spec.width;
    scene_cfg.frame.height = spec.height;
    scene_cfg.calibration.map = None;
    let file_name = |p: PathBuf| p.file_name().map(PathBuf::from);
    scene_cfg.calibration.illumination_min = file_name(dir.illumination_min());
    scene_cfg.calibration.illumination_max = file_name(dir.illumination_max());
    let path = a.out.join("config.json");
    std::fs::write(&path, scene_cfg.to_json() + "\n")
        .with_context(|| path.display().to_string())
        .data()?;
    log::info!("wrote {} frames to {}", spec.frames, dir.frames().display());
    Ok(())
}

fn eval(a: &EvalArgs) -> Outcome {
    let log = read_log(&a.log).data()?;
    let truth = GroundTruth::load(&a.truth).data()?;
    let metrics = evaluate(&log, &truth, a.radius).data()?;
    println!("{}", serde_json::to_string_pretty(&metrics).data()?);
    Ok(())
}

fn bench(cfg: &PipelineConfig, a: &BenchArgs) -> Outcome {
    let res = Resources::load(cfg)?;
    let report = bench_dir(&a.frames, cfg, &res, &a.threads, a.runs)?;
    println!("{}", serde_json::to_string_pretty(&report).data()?);
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    if let Command::Eval(a) = &cli.command {
        return eval(a);
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Calibrate(a) => calibrate(&cfg, a),
        Command::Run(a) => run(cfg, a),
        Command::Synth(a) => synth(&cfg, a),
        Command::Bench(a) => bench(&cfg, a),
        Command::Eval(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("data error: {e:#}");
            ExitCode::from(3)
        }
    }
}
