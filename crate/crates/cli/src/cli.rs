use std::ffi::OsString;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use diwsim_core::env::{Env, EpisodeConfig};
use diwsim_core::eval::{average_offset, bench, deposition_profile, infill_uniformity, BenchConfig, Histogram, OffsetReport};
use diwsim_core::geom::{plan_layer, polyjson, rasterize_target};
use diwsim_core::noise::{burg_fit, calibrate_gain, load_width_csv, DEFAULT_INTERVAL, DEFAULT_ORDER};
use diwsim_core::policy::{calibrate_baseline, BaselineParams, PolicySpec};

use crate::config::Config;
use crate::dataset::{gen_dataset, load_file, load_slice, slice_stl, Dataset};
use crate::error::{runtime, CliError};
use crate::protocol::ServerContext;
use crate::render::{coverage_image, observation_image, plan_preview};
use crate::server::{serve_stdio, serve_tcp, Transport};

#[derive(Debug, Parser)]
#[command(name = "diwsim", version, about = "Direct ink writing simulation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set episode.mode=infill`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<Config, CliError> {
        Config::load(self.config.as_deref(), &self.set)?.resolve()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut a mesh at height z and write the cross-section as polygon JSON.
    Slice {
        mesh: PathBuf,
        /// Cutting height (mm); mid-height of the mesh by default.
        #[arg(long)]
        z: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Plan the baseline outline and infill paths of a slice.
    Plan {
        /// Polygon JSON, STL or `procedural:<seed>`.
        slice: String,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fit an autoregressive flow-noise model to a measured width CSV.
    FitNoise {
        csv: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        /// Resampling interval (mm).
        #[arg(long, default_value_t = DEFAULT_INTERVAL)]
        interval: f64,
        /// Rescale the model gain so synthesized series have this std (mm).
        #[arg(long)]
        target_std: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Grid-search the baseline pressure and velocity for the planned width.
    Calibrate {
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print one slice with one policy.
    Run {
        #[arg(long)]
        slice: String,
        #[arg(long, default_value = "baseline")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
        /// Save every k-th observation as PNG.
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate policies on every slice of a dataset directory.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated policy list; may be repeated.
        #[arg(long, default_value = "baseline,oracle")]
        policies: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write procedural slices as polygon JSON.
    GenDataset {
        #[arg(long, short)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the environment server for external trainers.
    Serve {
        /// `stdio` or `tcp:PORT`.
        #[arg(long, default_value = "stdio")]
        transport: String,
        /// Directory whose slice files can be reset by id.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", CliError::Usage(e.kind().to_string()).to_json());
            }
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| runtime("Io", e))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

/// The configured baseline, calibrated on demand. The result is stored in
/// the config so the snapshot replays without calibrating again.
pub fn ensure_baseline(config: &mut Config) -> Result<BaselineParams, CliError> {
    if let Some(b) = config.baseline {
        return Ok(b);
    }
    eprintln!(
        "calibrating baseline over {} lattice points",
        config.calibration.pressures.len() * config.calibration.velocities.len()
    );
    let e = &config.episode;
    let cal = calibrate_baseline(&e.material, &e.sim, e.plan.width, &config.calibration)?;
    eprintln!("baseline P = {}, v = {} (width {:.4} mm)", cal.params.pressure, cal.params.velocity, cal.width);
    config.baseline = Some(cal.params);
    Ok(cal.params)
}

fn parse_policy(s: &str) -> Result<PolicySpec, CliError> {
    let spec: PolicySpec = s.parse()?;
    if spec == PolicySpec::External {
        return Err(CliError::Usage("external policies connect through `diwsim serve`".into()));
    }
    Ok(spec)
}

/// Splits `baseline,constant:0.5,0.2,oracle` at the commas that separate
/// policies; a numeric piece belongs to the `constant:` before it.
pub fn parse_policy_list(args: &[String]) -> Result<Vec<PolicySpec>, CliError> {
    let mut names: Vec<String> = Vec::new();
    for arg in args {
        for piece in arg.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match names.last_mut() {
                Some(prev) if prev.starts_with("constant:") && !prev.contains(',') && piece.parse::<f64>().is_ok() => {
                    prev.push(',');
                    prev.push_str(piece);
                }
                _ => names.push(piece.to_string()),
            }
        }
    }
    if names.is_empty() {
        return Err(CliError::Usage("no policies given".into()));
    }
    names.iter().map(|n| parse_policy(n)).collect()
}

fn needs_baseline(spec: &PolicySpec) -> bool {
    matches!(spec, PolicySpec::Baseline | PolicySpec::Oracle)
}

#[derive(Serialize)]
struct RunMetrics {
    slice: String,
    policy: String,
    seed: u64,
    total_steps: usize,
    initial_reward: f64,
    final_reward: f64,
    offset: OffsetReport,
    #[serde(rename = "O_um")]
    o_um: f64,
    hist_std_um: f64,
    hist_skew: f64,
    infill_std_um: f64,
    histogram: Histogram,
}

fn run_command(slice: &str, policy: &str, seed: u64, out: &Path, frames: Option<usize>, mut config: Config) -> Result<(), CliError> {
    let spec = parse_policy(policy)?;
    let slices = load_slice(slice, config.episode.plan, None)?;
    if needs_baseline(&spec) {
        ensure_baseline(&mut config)?;
    }
    let episode: EpisodeConfig = config.episode();
    std::fs::create_dir_all(out)?;
    config.write_snapshot(out)?;
    let params = config.baseline.unwrap_or(BaselineParams {
        pressure: episode.pressure,
        velocity: 1.0,
    });
    let mut policy_impl = spec.build(params, episode.plan.width, seed)?;
    let (mut env, mut obs) = Env::reset(slices, episode, seed)?;
    let frame_dir = out.join("frames");
    if frames.is_some() {
        std::fs::create_dir_all(&frame_dir)?;
    }
    let mut t = 0;
    loop {
        if frames.is_some_and(|k| k > 0 && t % k == 0) {
            observation_image(&obs).save(&frame_dir.join(format!("step_{t:05}.png")))?;
        }
        if env.is_done() {
            break;
        }
        let action = policy_impl.act(&env, &obs);
        obs = env.step(action)?.obs;
        t += 1;
    }
    let mut trace = Vec::new();
    env.write_trace(&mut trace)?;
    std::fs::write(out.join("trace.jsonl"), trace)?;
    let c = env.canvas().occupancy();
    let target = env.target();
    coverage_image(&c, target).save(&out.join("final.png"))?;
    let offset = average_offset(&c, target).map_err(|e| runtime("Metrics", e))?;
    let profile = deposition_profile(&c, target).map_err(|e| runtime("Metrics", e))?;
    let infill = infill_uniformity(&env.canvas().height, target).map_err(|e| runtime("Metrics", e))?;
    let metrics = RunMetrics {
        slice: slice.to_string(),
        policy: spec.to_string(),
        seed,
        total_steps: env.total_steps(),
        initial_reward: env.initial_reward(),
        final_reward: env.bed_reward(),
        o_um: offset.offset_um(),
        offset,
        hist_std_um: profile.std_um,
        hist_skew: profile.skewness,
        infill_std_um: infill,
        histogram: profile.histogram,
    };
    write_json(&out.join("metrics.json"), &metrics)?;
    eprintln!(
        "{} steps, O = {:.2} um, histogram std = {:.2} um",
        metrics.total_steps, metrics.o_um, metrics.hist_std_um
    );
    Ok(())
}

fn bench_command(dataset: &Path, policies: &[String], seed: u64, out: &Path, mut config: Config) -> Result<(), CliError> {
    let specs = parse_policy_list(policies)?;
    let data = Dataset::open(dataset)?;
    if data.entries.is_empty() {
        return Err(runtime("EmptyDataset", format!("no .json or .stl slices in {}", dataset.display())));
    }
    let baseline = ensure_baseline(&mut config)?;
    let mut slices = Vec::new();
    let mut load_failures = Vec::new();
    for (id, path) in &data.entries {
        match load_file(path, None) {
            Ok(s) => slices.push((id.clone(), s)),
            Err(e) => load_failures.push(diwsim_core::eval::BenchFailure {
                slice_id: id.clone(),
                policy: "*".into(),
                error: format!("UnknownSlice: {e}"),
            }),
        }
    }
    std::fs::create_dir_all(out)?;
    config.write_snapshot(out)?;
    let cfg = BenchConfig {
        episode: config.episode(),
        baseline,
        policies: specs,
        seed,
    };
    let mut report = bench(&slices, &cfg);
    load_failures.append(&mut report.failures);
    report.failures = load_failures;
    let file = std::fs::File::create(out.join("bench.csv"))?;
    report.write_csv(std::io::BufWriter::new(file)).map_err(|e| runtime("Io", e))?;
    std::fs::write(out.join("histograms.json"), report.histograms_json() + "\n")?;
    write_json(&out.join("failures.json"), &report.failures)?;
    eprintln!("{} rows, {} failures", report.rows.len(), report.failures.len());
    Ok(())
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Slice { mesh, z, out } => {
            let slices = slice_stl(&mesh, z)?;
            emit(out.as_deref(), &polyjson::to_json(&slices))
        }
        Command::Plan {
            slice,
            width,
            out,
            config,
        } => {
            let config = config.load()?;
            let mut plan_cfg = config.episode.plan;
            if let Some(w) = width {
                if !(w > 0.0) {
                    return Err(CliError::Usage("width must be positive".into()));
                }
                plan_cfg.width = w;
            }
            let slices = load_slice(&slice, plan_cfg, None)?;
            let plan = plan_layer(&slices, &plan_cfg).map_err(|e| runtime("UnprintableSlice", e))?;
            let target = rasterize_target(&slices, &config.episode.grid)?;
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("plan.json"), &plan)?;
            plan_preview(&target, &plan).save(&out.join("plan.png"))?;
            Ok(())
        }
        Command::FitNoise {
            csv,
            order,
            interval,
            target_std,
            out,
        } => {
            if !(interval > 0.0) {
                return Err(CliError::Usage("interval must be positive".into()));
            }
            let series = load_width_csv(&csv, interval)?;
            let mut model = burg_fit(&series, order)?;
            if let Some(s) = target_std {
                model = calibrate_gain(&model, s)?;
            }
            emit(out.as_deref(), &model.to_json())
        }
        Command::Calibrate { out, config } => {
            let config = config.load()?;
            let e = &config.episode;
            let cal = calibrate_baseline(&e.material, &e.sim, e.plan.width, &config.calibration)?;
            if let Some(p) = out {
                write_json(&p, &cal)?;
            }
            println!("[baseline]\npressure = {:?}\nvelocity = {:?}", cal.params.pressure, cal.params.velocity);
            eprintln!("width {:.4} mm for target {} mm", cal.width, cal.target_width);
            Ok(())
        }
        Command::Run {
            slice,
            policy,
            seed,
            out,
            frames,
            config,
        } => run_command(&slice, &policy, seed, &out, frames, config.load()?),
        Command::Bench {
            dataset,
            policies,
            seed,
            out,
            config,
        } => bench_command(&dataset, &policies, seed, &out, config.load()?),
        Command::GenDataset { n, seed, out, config } => {
            let config = config.load()?;
            let files = gen_dataset(n, seed, &out, config.episode.plan)?;
            eprintln!("wrote {} slices to {}", files.len(), out.display());
            Ok(())
        }
        Command::Serve {
            transport,
            dataset,
            config,
        } => {
            let transport: Transport = transport.parse().map_err(CliError::Usage)?;
            let config = config.load()?;
            let ctx = ServerContext {
                episode: config.episode(),
                dataset: match dataset {
                    Some(d) => Dataset::open(&d)?,
                    None => Dataset::default(),
                },
            };
            match transport {
                Transport::Stdio => serve_stdio(&ctx)?,
                Transport::Tcp(port) => {
                    let listener = TcpListener::bind(("127.0.0.1", port))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    serve_tcp(Arc::new(ctx), listener)?;
                }
            }
            Ok(())
        }
    }
}
