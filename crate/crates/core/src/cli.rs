//! The `bevmotion` command line: scenario generation, rasterization,
//! training, evaluation and reliability reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::class::ActorClass;
use crate::error::{Error, Result};
use crate::metrics::{reliability_svg, EvalReport};
use crate::raster::{rasterize_sweeps_with_threads, write_bvg, GridConfig};
use crate::synth::{generate, load_sweeps, read_scenario, simulate_all_sweeps, write_scenario_files, ScenarioSpec};
use crate::trainer::{
    build_dataset, evaluate, load_scene_dir, load_scenes, loss_csv, train, EvalConfig, Model, OraclePredictor,
    Predictor, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "bevmotion", version, about = "BEV motion forecasting toolkit")]
pub struct Cli {
    /// Seed overriding the one in the config or spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for rasterization, dataset building and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenarios (scn-1 JSON plus PTS1 sweeps) from a TOML spec.
    Generate(GenerateArgs),
    /// Rasterize one frame of a scenario into a BVG1 grid.
    Rasterize(RasterizeArgs),
    /// Train prediction heads from a TOML config.
    Train(TrainArgs),
    /// Evaluate a model on held-out scenarios and write the report CSV.
    Eval(EvalArgs),
    /// Write reliability diagrams (CSV and SVG) for a model.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of scenarios; scenario `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Grid TOML; the 150 m x 100 m x 3.2 m long-range grid when omitted.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Frame to rasterize; the scenario's current frame when omitted.
    #[arg(long)]
    pub frame: Option<usize>,
    /// Output file, or `-` for stdout.
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Scenario directory, overriding `[data] scenario_dir`.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Output directory for the model, loss curve and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model JSON written by `train`.
    #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
    pub model: Option<PathBuf>,
    /// Use the ground-truth futures instead of a model.
    #[arg(long)]
    pub oracle: bool,
    /// Scenario directory or file.
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Evaluation TOML (horizon, target recall, detection noise).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report CSV path, or `-` for stdout.
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

/// SHA-256 (hex) of `value` serialized as JSON with sorted keys.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("config serializes");
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes to `out`, or to stdout when it is `-`.
fn write_out(out: &str, bytes: &[u8]) -> Result<()> {
    if out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout
            .write_all(bytes)
            .and_then(|_| stdout.flush())
            .map_err(|e| Error::io(Path::new("<stdout>"), e))
    } else {
        write_file(Path::new(out), bytes)
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

struct Run {
    command: &'static str,
    start: Instant,
    seed: u64,
    hash: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Run {
    fn new<T: Serialize>(command: &'static str, seed: u64, config: &T) -> Self {
        Self {
            command,
            start: Instant::now(),
            seed,
            hash: config_hash(config),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Writes the manifest to `dest`, or to stderr when there is none.
    fn finish(self, dest: Option<&Path>) -> Result<RunManifest> {
        let m = RunManifest {
            command: self.command.to_string(),
            config_hash: self.hash,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        match dest {
            Some(p) => write_file(p, text.as_bytes())?,
            None => eprint!("{text}"),
        }
        Ok(m)
    }
}

/// Manifest location for a file output: `<out>.manifest.json`.
fn manifest_for(out: &str) -> Option<PathBuf> {
    (out != "-").then(|| PathBuf::from(format!("{out}.manifest.json")))
}

pub fn cmd_generate(args: &GenerateArgs, seed: Option<u64>) -> Result<RunManifest> {
    let mut spec = ScenarioSpec::from_toml(&read_text(&args.spec)?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if args.count == 0 {
        return Err(Error::InvalidArgument("--count must be at least 1".into()));
    }
    let mut run = Run::new("generate", spec.seed, &(&spec, args.count));
    run.inputs.push(path_string(&args.spec));
    create_dir(&args.out)?;
    for i in 0..args.count {
        let s = ScenarioSpec { seed: spec.seed.wrapping_add(i as u64), ..spec.clone() };
        let scenario = generate(&s)?;
        let sweeps = simulate_all_sweeps(&scenario)?;
        let stem = format!("scene_{i:04}");
        let json = write_scenario_files(&args.out, &stem, &scenario, &sweeps)?;
        run.outputs.push(path_string(&json));
        run.outputs.push(path_string(&json.with_extension("pts")));
    }
    run.finish(Some(&args.out.join("manifest.json")))
}

pub fn cmd_rasterize(args: &RasterizeArgs, threads: usize) -> Result<RunManifest> {
    let grid = match &args.grid {
        Some(p) => {
            let g: GridConfig =
                toml::from_str(&read_text(p)?).map_err(|e| Error::Input(format!("grid config: {e}")))?;
            g.validate()?;
            g
        }
        None => GridConfig::long_range(),
    };
    let scenario = read_scenario(&args.scenario)?;
    let frame = args.frame.unwrap_or(scenario.current_frame);
    let t = grid.num_sweeps;
    if frame >= scenario.num_frames() || frame + 1 < t {
        return Err(Error::InvalidArgument(format!(
            "frame {frame} is out of range: need {} <= frame < {}",
            t - 1,
            scenario.num_frames()
        )));
    }
    let mut run = Run::new("rasterize", scenario.seed, &(&grid, frame));
    run.inputs.push(path_string(&args.scenario));
    let sweeps = load_sweeps(&args.scenario, &scenario)?;
    let bev = rasterize_sweeps_with_threads(&sweeps[frame + 1 - t..=frame], &scenario.sensor_pose(frame), &grid, threads)?;
    let mut bytes = Vec::new();
    write_bvg(&bev, &mut bytes).expect("in-memory write");
    write_out(&args.out, &bytes)?;
    run.outputs.push(args.out.clone());
    run.finish(manifest_for(&args.out).as_deref())
}

pub fn cmd_train(args: &TrainArgs, seed: Option<u64>) -> Result<RunManifest> {
    let mut config = TrainConfig::from_toml(&read_text(&args.config)?)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let dir = match (&args.scenarios, &config.data.scenario_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) if d.is_relative() => args.config.parent().unwrap_or(Path::new(".")).join(d),
        (None, Some(d)) => d.clone(),
        (None, None) => {
            return Err(Error::config("data.scenario_dir", "no scenario directory given"));
        }
    };
    let mut run = Run::new("train", config.seed, &config);
    run.inputs.push(path_string(&args.config));
    run.inputs.push(path_string(&dir));
    let scenes = load_scene_dir(&dir)?;
    let dataset = build_dataset(&scenes, &config.features, &config.detection)?;
    let out = train(&dataset, &config)?;
    create_dir(&args.out)?;
    let files = [
        ("model.json", out.model.to_json()),
        ("loss.csv", loss_csv(&out.curve)),
        ("config.toml", config.to_toml()),
    ];
    for (name, text) in files {
        let p = args.out.join(name);
        write_file(&p, text.as_bytes())?;
        run.outputs.push(path_string(&p));
    }
    eprintln!(
        "trained on {} actors; loss {:.4} -> {:.4}",
        dataset.samples.len(),
        out.curve.first().map_or(f64::NAN, |r| r.loss),
        out.curve.last().map_or(f64::NAN, |r| r.loss)
    );
    run.finish(Some(&args.out.join("manifest.json")))
}

fn run_eval(args: &ModelArgs, command: &'static str) -> Result<(EvalReport, Run, bool)> {
    let config = match &args.config {
        Some(p) => {
            let c: EvalConfig =
                toml::from_str(&read_text(p)?).map_err(|e| Error::Input(format!("eval config: {e}")))?;
            c.validate()?;
            c
        }
        None => EvalConfig::default(),
    };
    let model = match &args.model {
        Some(p) => Some(Model::from_json(&read_text(p)?).map_err(|e| match e {
            Error::Format { message, .. } => Error::Parse { path: p.clone(), message },
            other => other,
        })?),
        None => None,
    };
    let scenes = load_scenes(&args.scenarios)?;
    let seed = scenes.first().map_or(0, |(s, _)| s.seed);
    let mut run = Run::new(command, seed, &config);
    if let Some(p) = &args.model {
        run.inputs.push(path_string(p));
    }
    run.inputs.push(path_string(&args.scenarios));
    let predictor: &dyn Predictor = match &model {
        Some(m) => m,
        None => &OraclePredictor,
    };
    let report = evaluate(predictor, &scenes, &config)?;
    let probabilistic = model.as_ref().is_some_and(|m| m.loss_profile.is_probabilistic());
    Ok((report, run, probabilistic))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<RunManifest> {
    let (report, mut run, _) = run_eval(&args.model, "eval")?;
    write_out(&args.out, report.to_csv().as_bytes())?;
    run.outputs.push(args.out.clone());
    let table = report.to_text();
    eprint!("{table}");
    if args.out != "-" {
        let p = Path::new(&args.out).with_extension("txt");
        write_file(&p, table.as_bytes())?;
        run.outputs.push(path_string(&p));
    }
    run.finish(manifest_for(&args.out).as_deref())
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<RunManifest> {
    let (report, mut run, probabilistic) = run_eval(&args.model, "calibrate")?;
    if !probabilistic {
        return Err(Error::Input(
            "calibration needs predicted diversities; train with a kl_* or nll_* loss profile".into(),
        ));
    }
    create_dir(&args.out)?;
    let csv = args.out.join("reliability.csv");
    write_file(&csv, report.reliability_csv().as_bytes())?;
    run.outputs.push(path_string(&csv));
    for class in ActorClass::ALL {
        let Some(r) = &report.class(class).reliability else {
            continue;
        };
        for (axis, label, curve) in [("at", "along-track", &r.along_track), ("ct", "cross-track", &r.cross_track)] {
            let title = format!("{class} {label}, n = {}, max dev {:.3}", r.count, r.max_deviation());
            let p = args.out.join(format!("reliability_{class}_{axis}.svg"));
            write_file(&p, reliability_svg(&title, curve).as_bytes())?;
            run.outputs.push(path_string(&p));
        }
        eprintln!("{class}: n = {}, max |empirical - nominal| = {:.4}", r.count, r.max_deviation());
    }
    run.finish(Some(&args.out.join("manifest.json")))
}

/// Runs a parsed command line on a pool of `cli.threads` workers.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    if cli.threads == 0 {
        return Err(Error::InvalidArgument("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.seed),
        Command::Rasterize(a) => cmd_rasterize(a, cli.threads),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Eval(a) => cmd_eval(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    })
}

/// Process exit code for an error: 2 for usage and configuration problems,
/// 3 for failures at run time.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        2
    } else {
        3
    }
}
