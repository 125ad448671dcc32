//! `rotlab`: regenerates bound tables, excess-risk curves, trajectories and
//! metric grids, and runs the verification suites.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use rotlab::experiments::verify::{run_suite, Suite};
use rotlab::experiments::{
    fmt_f64, run_curves, run_trajectories, CurvesConfig, TrajectoriesConfig, CURVES_HEADER, POINTS_HEADER,
    TRAJECTORIES_HEADER,
};
use rotlab::flows::{metric_grid, MetricKind};
use rotlab::problem::evaluate_bounds;

use config::{flag_values, resolve, usage, FileConfig, UsageError};
use output::{Artifacts, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "rotlab", version, about = "Seeded experiments on rotation invariance in sparse linear regression")]
struct Cli {
    /// Base seed; every dataset and rotation is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "rotlab-out")]
    out_dir: PathBuf,
    /// Flat TOML file, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// curves: fig2b, fig2b-full. trajectories: fig2a, fig4.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate the closed-form lower and upper bounds.
    Bounds(BoundsFlags),
    /// Mean excess-risk curves over many seeded datasets.
    Curves(CurvesFlags),
    /// Two-dimensional weight trajectories.
    Trajectories(TrajectoriesFlags),
    /// Run the fixed-seed property suites.
    Verify(VerifyFlags),
    /// Tabulate a diagonal metric on a 2-d grid.
    MetricGrid(MetricFlags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bounds(_) => "bounds",
            Command::Curves(_) => "curves",
            Command::Trajectories(_) => "trajectories",
            Command::Verify(_) => "verify",
            Command::MetricGrid(_) => "metric-grid",
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct BoundsFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct CurvesFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    /// Number of datasets averaged.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_points: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    /// Comma-separated list.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    algorithms: Option<String>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct TrajectoriesFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<usize>,
    /// Comma-separated list.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    algorithms: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_points: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    /// Column scale `s1,s2`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rotate_input: Option<bool>,
}

#[derive(Args, Debug, Serialize)]
struct VerifyFlags {
    /// all, invariance, flows, equivalence or bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<String>,
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
struct MetricFlags {
    /// egu or euclidean.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<String>,
    /// Box `lo1,hi1,lo2,hi2`.
    #[arg(long = "box", allow_hyphen_values = true)]
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    bounds: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    resolution: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundsConfig {
    d: usize,
    m: usize,
    sigma: f64,
    eta: f64,
    delta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct VerifyConfig {
    suite: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetricConfig {
    metric: MetricKind,
    #[serde(rename = "box")]
    bounds: [f64; 4],
    resolution: usize,
}

struct Run<'a> {
    cli: &'a Cli,
    file: FileConfig,
    started: Instant,
}

impl Run<'_> {
    fn seed(&self, default: u64) -> u64 {
        self.cli.seed.or(self.file.seed).unwrap_or(default)
    }

    fn preset(&self) -> Option<&str> {
        self.cli.preset.as_deref().or(self.file.preset.as_deref())
    }

    fn resolve<T: Serialize + serde::de::DeserializeOwned>(&self, defaults: &T, flags: &impl Serialize) -> Result<T> {
        let flags = flag_values(flags)?;
        resolve(defaults, &[&self.file.values, &flags])
    }

    fn manifest(&self, seed: u64, config: &impl Serialize, hyperparameters: Value) -> Result<RunManifest> {
        Ok(RunManifest {
            tool: "rotlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.cli.command.name().into(),
            preset: self.preset().map(String::from),
            seed,
            config: serde_json::to_value(config)?,
            hyperparameters,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            outputs: Vec::new(),
        })
    }

    fn artifacts(&self) -> Result<Artifacts> {
        Artifacts::new(&self.cli.out_dir)
    }
}

fn with_seed(values: &mut Map<String, Value>, seed: Option<u64>) {
    if let Some(s) = seed {
        values.insert("seed".into(), s.into());
    }
}

fn cmd_bounds(run: &Run, flags: &BoundsFlags) -> Result<()> {
    let defaults = BoundsConfig {
        d: 1024,
        m: 4,
        sigma: 1.0,
        eta: 1.0,
        delta: 0.001,
    };
    let cfg: BoundsConfig = run.resolve(&defaults, flags)?;
    let report = evaluate_bounds(cfg.d, cfg.m, cfg.sigma, cfg.eta, cfg.delta)?;
    println!("d={} m={} sigma={} eta={} delta={}", cfg.d, cfg.m, cfg.sigma, cfg.eta, cfg.delta);
    for (name, value) in [
        ("invariant lower", report.invariant_lower),
        ("iid-start lower", report.iid_init_lower),
        ("eg-pm one-step upper", report.eg_pm_one_step_upper),
        ("approx egu-pm upper", report.approx_egu_pm_upper),
        ("spindly upper", report.spindly_upper),
        ("priming upper", report.priming_upper),
    ] {
        println!("  {name:<22} {value:.6e}");
    }
    let mut art = run.artifacts()?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    art.write("bounds.json", text.as_bytes(), None)?;
    let seed = run.seed(0);
    art.finish(run.manifest(seed, &cfg, Value::Null)?)?;
    Ok(())
}

fn cmd_curves(run: &Run, flags: &CurvesFlags) -> Result<()> {
    let defaults = match run.preset().unwrap_or("fig2b") {
        "fig2b" => CurvesConfig::desk_scale(),
        "fig2b-full" => CurvesConfig::full_scale(),
        p => return Err(usage(format!("unknown curves preset `{p}` (known: fig2b, fig2b-full)"))),
    };
    let mut flag_map = flag_values(flags)?;
    with_seed(&mut flag_map, run.cli.seed);
    let cfg: CurvesConfig = resolve(&defaults, &[&run.file.values, &flag_map])?;
    let methods = cfg.validate().map_err(|e| usage(e.to_string()))?;
    let table = run_curves(&cfg)?;
    for m in &methods {
        println!("{:<14} min mean excess risk {:.6}", m.name(), table.min_mean(m.name()).unwrap_or(f64::NAN));
    }
    let mut art = run.artifacts()?;
    art.write("curves.csv", table.to_csv().as_bytes(), Some(CURVES_HEADER))?;
    let hyper: Map<String, Value> = methods
        .iter()
        .map(|m| Ok((m.name().to_string(), serde_json::to_value(m)?)))
        .collect::<Result<_>>()?;
    art.finish(run.manifest(cfg.seed, &cfg, Value::Object(hyper))?)?;
    Ok(())
}

fn cmd_trajectories(run: &Run, flags: &TrajectoriesFlags) -> Result<()> {
    let defaults = match run.preset().unwrap_or("fig2a") {
        "fig2a" => TrajectoriesConfig::isotropic_flows(),
        "fig4" => TrajectoriesConfig::anisotropic(),
        p => return Err(usage(format!("unknown trajectories preset `{p}` (known: fig2a, fig4)"))),
    };
    let mut flag_map = flag_values(flags)?;
    with_seed(&mut flag_map, run.cli.seed);
    let cfg: TrajectoriesConfig = resolve(&defaults, &[&run.file.values, &flag_map])?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let table = run_trajectories(&cfg)?;
    println!("{} trajectory rows over {} seeds", table.rows.len(), cfg.seeds);
    let mut art = run.artifacts()?;
    art.write("trajectories.csv", table.to_csv().as_bytes(), Some(TRAJECTORIES_HEADER))?;
    art.write("points.csv", table.points_csv().as_bytes(), Some(POINTS_HEADER))?;
    let hyper = json!({ "beta": cfg.beta, "eta": cfg.eta, "algorithms": cfg.algorithms });
    art.finish(run.manifest(cfg.seed, &cfg, hyper)?)?;
    Ok(())
}

#[derive(Debug)]
struct VerificationFailed(Vec<String>);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for VerificationFailed {}

fn cmd_verify(run: &Run, flags: &VerifyFlags) -> Result<()> {
    let cfg: VerifyConfig = run.resolve(&VerifyConfig { suite: "all".into() }, flags)?;
    let suite: Suite = cfg.suite.parse().map_err(|e: rotlab::Error| usage(e.to_string()))?;
    let seed = run.seed(0);
    let checks = run_suite(suite, seed);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{}/{}", c.suite, c.name)).collect();
    println!("{} of {} checks passed", checks.len() - failed.len(), checks.len());
    let mut art = run.artifacts()?;
    let mut text = serde_json::to_string_pretty(&checks)?;
    text.push('\n');
    art.write("verify.json", text.as_bytes(), None)?;
    art.finish(run.manifest(seed, &cfg, Value::Null)?)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(VerificationFailed(failed).into())
    }
}

fn cmd_metric_grid(run: &Run, flags: &MetricFlags) -> Result<()> {
    let defaults = MetricConfig {
        metric: MetricKind::Egu,
        bounds: [0.5, 2.0, 0.5, 2.0],
        resolution: 21,
    };
    let cfg: MetricConfig = run.resolve(&defaults, flags)?;
    let [a, b, c, d] = cfg.bounds;
    let grid = metric_grid(cfg.metric, [(a, b), (c, d)], cfg.resolution)?;
    let mut csv = String::from("w1,w2,g11,g22\n");
    for s in &grid {
        csv.push_str(&format!("{},{},{},{}\n", fmt_f64(s.w1), fmt_f64(s.w2), fmt_f64(s.g11), fmt_f64(s.g22)));
    }
    println!("{} grid points", grid.len());
    let mut art = run.artifacts()?;
    art.write("metric.csv", csv.as_bytes(), Some("w1,w2,g11,g22"))?;
    art.finish(run.manifest(run.seed(0), &cfg, Value::Null)?)?;
    Ok(())
}

fn load_file(path: Option<&Path>, command: &str) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let file = config::load(path)?;
    if let Some(recorded) = &file.command {
        if recorded != command {
            return Err(usage(format!(
                "manifest {} was written by `{recorded}`, not `{command}`",
                path.display()
            )));
        }
    }
    Ok(file)
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let run = Run {
        cli,
        file: load_file(cli.config.as_deref(), cli.command.name())?,
        started: Instant::now(),
    };
    match &cli.command {
        Command::Bounds(f) => cmd_bounds(&run, f),
        Command::Curves(f) => cmd_curves(&run, f),
        Command::Trajectories(f) => cmd_trajectories(&run, f),
        Command::Verify(f) => cmd_verify(&run, f),
        Command::MetricGrid(f) => cmd_metric_grid(&run, f),
    }
}

/// 2 for bad input, 1 for failed verification or a numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<rotlab::Error>() {
        Some(
            rotlab::Error::InvalidParameter { .. }
            | rotlab::Error::DimensionMismatch { .. }
            | rotlab::Error::InvalidRotation { .. }
            | rotlab::Error::Domain(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
