use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use nsdreg::gaussian::sample_fbm_at;
use nsdreg::montecarlo::{
    histogram, render_tables, run_convergence, run_experiment, write_convergence_csv, write_records_csv,
    write_summary_csv, ConvergenceConfig, ConvergenceNoise, ExperimentConfig, NoiseMode, DEFAULT_BINS,
};
use nsdreg::nsd::{run_battery, BatteryConfig};
use nsdreg::regression::{make_sample, EstimatorKind};
use nsdreg::report::{write_json, SCHEMA_VERSION};
use nsdreg::rng::root_rng;
use nsdreg::times::{generate, BlockLayout, JitterDist, RenewalDist, TimeModel, TimeModelSpec};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "nsdreg", version, about = "Trend estimation at random sampling times under fBm noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one regression sample and write it as CSV.
    Simulate(SimulateArgs),
    /// Replicate the estimator and summarize bias, L1 risk and variance.
    Montecarlo(MonteCarloArgs),
    /// Run the negative-dependence checks on the duration model.
    Verify(VerifyArgs),
    /// Track the scaled error of fixed noise paths as N grows.
    Convergence(ConvergenceArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelKind {
    NsdLognormal,
    Jittered,
    Fixed,
    Renewal,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum JitterKind {
    Zero,
    Uniform,
    Beta,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RenewalKind {
    Exponential,
    Gamma,
    Uniform,
    Lognormal,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Design {
    Stopped,
    Full,
}

impl From<Design> for EstimatorKind {
    fn from(d: Design) -> Self {
        match d {
            Design::Stopped => EstimatorKind::Stopped,
            Design::Full => EstimatorKind::Full,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Noise {
    FbmPath,
    FbmProjected,
    Zero,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum FixedW {
    /// W(t) = t^2.
    T2,
    /// One interpolated fBm path per seed (needs --hurst).
    Interpolated,
}

/// Sampling-time model options shared by the subcommands.
#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "nsd-lognormal")]
    time_model: ModelKind,
    /// Within-block correlation of the log-durations.
    #[arg(long, default_value_t = -0.25, allow_negative_numbers = true)]
    rho: f64,
    /// Correlation block length.
    #[arg(long, default_value_t = 5)]
    block: usize,
    /// One correlation block over the whole initial batch.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value = "uniform")]
    jitter: JitterKind,
    /// Shape of the symmetric beta jitter.
    #[arg(long, default_value_t = 2.0)]
    jitter_alpha: f64,
    #[arg(long, value_enum, default_value = "exponential")]
    renewal: RenewalKind,
    /// Shape of the gamma renewal durations.
    #[arg(long, default_value_t = 2.0)]
    gamma_shape: f64,
    /// End of the observation window.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

impl ModelArgs {
    fn model(&self) -> TimeModel {
        match self.time_model {
            ModelKind::NsdLognormal => TimeModel::NsdLognormal {
                rho: self.rho,
                layout: if self.strict { BlockLayout::Global } else { BlockLayout::Blocks(self.block) },
            },
            ModelKind::Jittered => TimeModel::Jittered(match self.jitter {
                JitterKind::Zero => JitterDist::Zero,
                JitterKind::Uniform => JitterDist::Uniform,
                JitterKind::Beta => JitterDist::Beta(self.jitter_alpha),
            }),
            ModelKind::Fixed => TimeModel::Fixed,
            ModelKind::Renewal => TimeModel::IidRenewal(match self.renewal {
                RenewalKind::Exponential => RenewalDist::Exponential,
                RenewalKind::Gamma => RenewalDist::Gamma(self.gamma_shape),
                RenewalKind::Uniform => RenewalDist::Uniform,
                RenewalKind::Lognormal => RenewalDist::LogNormal,
            }),
        }
    }

    fn spec(&self, n: usize) -> nsdreg::Result<TimeModelSpec> {
        TimeModelSpec::new(self.model(), n, self.horizon)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Sampling rate N.
    #[arg(long)]
    n: usize,
    /// Hurst index of the fBm noise.
    #[arg(long)]
    hurst: f64,
    /// Trend slope.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    a: f64,
    #[command(flatten)]
    model: ModelArgs,
    /// Observations to emit: up to the horizon, or the first N.
    #[arg(long, value_enum, default_value = "stopped")]
    design: Design,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "nsdreg-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MonteCarloArgs {
    #[arg(long, required_unless_present = "grid")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "grid")]
    hurst: Option<f64>,
    /// Sweep instead of one cell, as `N1,N2,...:H1,H2,...`.
    #[arg(long, conflicts_with_all = ["n", "hurst"])]
    grid: Option<String>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    a: f64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "stopped")]
    estimator: Design,
    #[arg(long, value_enum, default_value = "fbm-path")]
    noise: Noise,
    #[arg(long, default_value_t = 1000)]
    replications: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Format of the per-cell summary.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Bins of the histogram files.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value = "nsdreg-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Length of the probed duration vector.
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = -0.25, allow_negative_numbers = true)]
    rho: f64,
    #[arg(long, default_value_t = 5)]
    block: usize,
    /// Put all m durations in one correlation block.
    #[arg(long)]
    strict: bool,
    /// Sampling rate of the duration model.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    /// Sampling rates, e.g. `250,500,1000`.
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    /// Hurst index of an interpolated fBm path.
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long, value_enum)]
    deterministic_w: Option<FixedW>,
    /// Number of seeds, starting at --first-seed.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, value_enum, default_value = "stopped")]
    estimator: Design,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    a: f64,
    /// log2 of the number of panels of the interpolated path.
    #[arg(long, default_value_t = 14)]
    resolution: u32,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value = "nsdreg-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Debug)]
struct Manifest {
    schema_version: u32,
    tool_version: String,
    subcommand: String,
    /// Command line after the program name.
    args: Vec<String>,
    seed: u64,
    config: serde_json::Value,
    outputs: Vec<String>,
}

/// Writes the manifest before any computation starts.
fn write_manifest(
    out: &Path,
    args: &[String],
    subcommand: &str,
    seed: u64,
    config: serde_json::Value,
    outputs: &[PathBuf],
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        args: args.to_vec(),
        seed,
        config,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(create(&out.join("manifest.json"))?, &manifest)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn simulate(args: &SimulateArgs, argv: &[String]) -> Result<u8> {
    let spec = args.model.spec(args.n)?;
    let design = EstimatorKind::from(args.design);
    let sample_path = args.out.join("sample.csv");
    let times_path = args.out.join("times.csv");
    let config = serde_json::json!({ "time": spec, "hurst": args.hurst, "a": args.a, "design": design });
    write_manifest(&args.out, argv, "simulate", args.seed, config, &[sample_path.clone(), times_path.clone()])?;

    let mut rng = root_rng(args.seed);
    let times = generate(&spec, &mut rng)?;
    let count = design.count(&times);
    if count == 0 {
        bail!(nsdreg::Error::NoObservations);
    }
    let path = sample_fbm_at(&times.tau()[..count], args.hurst, 1.0, &mut rng)?;
    let sample = make_sample(args.a, &times, &path, design)?;
    sample.write_csv(create(&sample_path)?)?;
    times.write_csv(create(&times_path)?)?;
    Ok(0)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| anyhow::anyhow!("invalid {what} `{s}` in --grid")))
        .collect()
}

fn parse_grid(grid: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let Some((ns, hs)) = grid.split_once(':') else {
        bail!("--grid must look like `100,1000:0.1,0.5`");
    };
    Ok((parse_list(ns, "N")?, parse_list(hs, "Hurst index")?))
}

fn cell_dir(out: &Path, n: usize, hurst: f64) -> PathBuf {
    out.join(format!("N{n}_H{hurst}"))
}

fn montecarlo(args: &MonteCarloArgs, argv: &[String]) -> Result<u8> {
    let (ns, hs) = match &args.grid {
        Some(g) => parse_grid(g)?,
        None => (vec![args.n.expect("required by clap")], vec![args.hurst.expect("required by clap")]),
    };
    let noise = match args.noise {
        Noise::FbmPath => NoiseMode::FbmPath,
        Noise::FbmProjected => NoiseMode::FbmProjected,
        Noise::Zero => NoiseMode::Zero,
    };
    let mut configs = Vec::new();
    for &n in &ns {
        for &hurst in &hs {
            let config = ExperimentConfig {
                time: args.model.spec(n)?,
                hurst,
                a: args.a,
                replications: args.replications,
                seed: args.seed,
                estimator: args.estimator.into(),
                noise,
            };
            config.validate()?;
            configs.push(config);
        }
    }
    let ext = match args.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let mut outputs = Vec::new();
    for c in &configs {
        let dir = cell_dir(&args.out, c.time.n, c.hurst);
        for name in [format!("summary.{ext}"), "replications.csv".into(), "hist_scaled_error.csv".into(), "hist_ratio.csv".into()] {
            outputs.push(dir.join(name));
        }
    }
    outputs.push(args.out.join("tables.txt"));
    write_manifest(&args.out, argv, "montecarlo", args.seed, serde_json::to_value(&configs)?, &outputs)?;

    let mut summaries = Vec::new();
    for config in &configs {
        let experiment = run_experiment(config)?;
        let dir = cell_dir(&args.out, config.time.n, config.hurst);
        fs::create_dir_all(&dir)?;
        match args.format {
            Format::Json => write_json(create(&dir.join("summary.json"))?, &experiment.summary)?,
            Format::Csv => write_summary_csv(&experiment.summary, create(&dir.join("summary.csv"))?)?,
        }
        write_records_csv(&experiment.records, create(&dir.join("replications.csv"))?)?;
        let errors: Vec<f64> = experiment.records.iter().map(|r| r.scaled_error).collect();
        histogram(&errors, args.bins, None)?.write_csv(create(&dir.join("hist_scaled_error.csv"))?)?;
        let n = config.time.n as f64;
        let ratios: Vec<f64> = experiment.records.iter().map(|r| r.n1 as f64 / n).collect();
        histogram(&ratios, args.bins, None)?.write_csv(create(&dir.join("hist_ratio.csv"))?)?;
        summaries.push(experiment.summary);
    }
    let tables = render_tables(&summaries);
    fs::write(args.out.join("tables.txt"), &tables)?;
    print!("{tables}");
    Ok(0)
}

fn verify(args: &VerifyArgs, argv: &[String]) -> Result<u8> {
    let config = BatteryConfig {
        n: args.n,
        m: args.m,
        rho: args.rho,
        block: args.block,
        strict: args.strict,
        draws: args.draws,
        seed: args.seed,
    };
    nsdreg::nsd::battery_model(&config)?;
    if let Some(out) = &args.out {
        write_manifest(out, argv, "verify", args.seed, serde_json::to_value(config)?, &[out.join("report.json")])?;
    }
    let records = run_battery(&config)?;
    match &args.out {
        Some(out) => write_json(create(&out.join("report.json"))?, &records)?,
        None => write_json(io::stdout().lock(), &records)?,
    }
    let failed: Vec<&str> = records.iter().filter(|r| !r.pass).map(|r| r.test.as_str()).collect();
    if failed.is_empty() {
        eprintln!("all {} checks passed", records.len());
        Ok(0)
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        Ok(EXIT_VERIFY_FAILED)
    }
}

fn convergence(args: &ConvergenceArgs, argv: &[String]) -> Result<u8> {
    let noise = match (args.deterministic_w, args.hurst) {
        (Some(FixedW::T2), None) => ConvergenceNoise::Quadratic,
        (Some(FixedW::T2), Some(_)) => bail!("--hurst does not apply to --deterministic-w t2"),
        (Some(FixedW::Interpolated) | None, Some(hurst)) => {
            ConvergenceNoise::InterpolatedFbm { hurst, resolution_log2: args.resolution }
        }
        (Some(FixedW::Interpolated), None) => bail!("--deterministic-w interpolated needs --hurst"),
        (None, None) => bail!("one of --hurst or --deterministic-w is required"),
    };
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    for &n in &args.n_list {
        args.model.spec(n)?;
    }
    let config = ConvergenceConfig {
        time: args.model.model(),
        n_list: args.n_list.clone(),
        seeds: (args.first_seed..args.first_seed + args.seeds).collect(),
        noise,
        estimator: args.estimator.into(),
        a: args.a,
    };
    let table = args.out.join("convergence.csv");
    let mut outputs = vec![table.clone()];
    outputs.extend(args.n_list.iter().map(|n| args.out.join(format!("hist_ratio_N{n}.csv"))));
    write_manifest(&args.out, argv, "convergence", args.first_seed, serde_json::to_value(&config)?, &outputs)?;

    let rows = run_convergence(&config)?;
    write_convergence_csv(&rows, create(&table)?)?;
    for &n in &args.n_list {
        let ratios: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.n1 as f64 / n as f64).collect();
        histogram(&ratios, args.bins, None)?.write_csv(create(&args.out.join(format!("hist_ratio_N{n}.csv")))?)?;
    }
    Ok(0)
}

fn replay(args: &ReplayArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema_version != SCHEMA_VERSION {
        bail!("manifest schema {} is not supported (expected {SCHEMA_VERSION})", manifest.schema_version);
    }
    let mut recorded = manifest.args;
    if recorded.first().map(String::as_str) == Some("replay") {
        bail!("a manifest cannot replay another replay");
    }
    if let Some(out) = &args.out {
        let out = out.display().to_string();
        match recorded.iter().position(|a| a == "--out") {
            Some(i) if i + 1 < recorded.len() => recorded[i + 1] = out,
            _ => recorded.extend(["--out".to_string(), out]),
        }
    }
    let cli = Cli::try_parse_from(std::iter::once("nsdreg".to_string()).chain(recorded.iter().cloned()))?;
    dispatch(&cli, &recorded)
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<u8> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Montecarlo(a) => montecarlo(a, argv),
        Command::Verify(a) => verify(a, argv),
        Command::Convergence(a) => convergence(a, argv),
        Command::Replay(a) => replay(a),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("NSDREG_THREADS") {
        let threads: usize = value
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .with_context(|| format!("NSDREG_THREADS must be a positive integer, got `{value}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let result = configure_threads().and_then(|()| dispatch(&cli, &argv));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
