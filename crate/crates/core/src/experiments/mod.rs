//! Seeded experiment drivers behind the command-line tool: excess-risk curves
//! over many datasets, two-dimensional trajectories and the verification
//! suites. Everything here is deterministic in the base seed.

pub mod verify;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{FlowKind, FlowParams};
use crate::invariance::{anisotropic_demo, AnisotropicConfig};
use crate::numerics::rng::Rng;
use crate::optimizers::{
    log_step_grid, priming_solve, ridge_solve, run_on, Algorithm, RecordSchedule, ADAGRAD_BETA, ADAGRAD_EPS,
};
use crate::problem::{build_dataset, evaluate_bounds, excess_risk, least_squares, Dataset, ProblemConfig};

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn seed_rng(seed: u64, index: usize) -> Rng {
    Rng::new(seed).substream(index as u64)
}

/// One curve source, resolved from its name and the shared hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum CurveMethod {
    Optimizer(Algorithm),
    /// Ridge path with `λ(s) = n/(2ηs)` so that it tracks the gradient-flow clock.
    Ridge { eta: f64 },
    /// Priming path with the same `λ(s)`.
    Priming { eta: f64 },
}

impl CurveMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CurveMethod::Optimizer(a) => a.name(),
            CurveMethod::Ridge { .. } => "ridge",
            CurveMethod::Priming { .. } => "priming",
        }
    }
}

pub const CURVE_ALGORITHMS: &[&str] = &[
    "gd",
    "ridge",
    "priming",
    "approx-egu-pm",
    "eg-pm",
    "spindly",
    "adagrad",
    "inc-priming",
    "primed-gd",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvesConfig {
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub seeds: usize,
    pub steps: usize,
    pub grid_points: usize,
    pub eta: f64,
    /// Scale of the two-sided updates; `None` means `1/(2d)`.
    pub beta: Option<f64>,
    /// Failure probability used by the overlaid upper bound.
    pub delta: f64,
    pub algorithms: Vec<String>,
}

impl CurvesConfig {
    /// Desk-scale version of the many-seed comparison: `d = 256`.
    pub fn desk_scale() -> Self {
        CurvesConfig {
            d: 256,
            m: 4,
            sigma: 1.0,
            seed: 0,
            seeds: 100,
            steps: 10_000,
            grid_points: 120,
            eta: 0.05,
            beta: None,
            delta: 0.001,
            algorithms: ["gd", "ridge", "priming", "approx-egu-pm", "spindly", "adagrad"]
                .map(String::from)
                .to_vec(),
        }
    }

    /// The same comparison at `d = 1024`.
    pub fn full_scale() -> Self {
        CurvesConfig {
            d: 1024,
            ..Self::desk_scale()
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0 / (2.0 * self.d as f64))
    }

    /// Every problem with the configuration, collected before any work starts.
    pub fn validate(&self) -> Result<Vec<CurveMethod>> {
        let mut problems = Vec::new();
        if self.seeds == 0 {
            problems.push("seeds: must be at least 1".to_string());
        }
        if self.steps == 0 {
            problems.push("steps: must be at least 1".to_string());
        }
        if self.grid_points < 2 {
            problems.push("grid_points: must be at least 2".to_string());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            problems.push(format!("eta: must be positive, got {}", self.eta));
        }
        if !(self.beta() > 0.0) {
            problems.push(format!("beta: must be positive, got {}", self.beta()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            problems.push(format!("delta: must lie in (0, 1), got {}", self.delta));
        }
        if let Err(e) = ProblemConfig::new(self.d, self.m, self.sigma, self.seed).validate() {
            problems.push(e.to_string());
        }
        if self.algorithms.is_empty() {
            problems.push("algorithms: at least one is required".to_string());
        }
        let mut methods = Vec::new();
        for name in &self.algorithms {
            match self.method(name) {
                Some(m) => methods.push(m),
                None => problems.push(format!(
                    "algorithms: unknown `{name}` (known: {})",
                    CURVE_ALGORITHMS.join(", ")
                )),
            }
        }
        if problems.is_empty() {
            Ok(methods)
        } else {
            Err(Error::InvalidParameter {
                name: "config",
                reason: problems.join("; "),
            })
        }
    }

    fn method(&self, name: &str) -> Option<CurveMethod> {
        let eta = self.eta;
        Some(match name {
            "gd" => CurveMethod::Optimizer(Algorithm::Gd { eta }),
            "ridge" => CurveMethod::Ridge { eta },
            "priming" => CurveMethod::Priming { eta },
            "approx-egu-pm" => CurveMethod::Optimizer(Algorithm::ApproxEguPm { eta, beta: self.beta() }),
            "eg-pm" => CurveMethod::Optimizer(Algorithm::EgPm { eta }),
            "spindly" => CurveMethod::Optimizer(Algorithm::Spindly { eta }),
            "adagrad" => CurveMethod::Optimizer(Algorithm::Adagrad {
                eta,
                beta_pre: ADAGRAD_BETA,
                eps: ADAGRAD_EPS,
            }),
            "inc-priming" => CurveMethod::Optimizer(Algorithm::IncPriming { eta, p0: 1.0 }),
            "primed-gd" => CurveMethod::Optimizer(Algorithm::PrimedGd { eta }),
            _ => return None,
        })
    }

    /// Recorded steps, starting at 0.
    pub fn step_grid(&self) -> Vec<usize> {
        let mut grid = vec![0];
        grid.extend(log_step_grid(self.steps, self.grid_points));
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub algorithm: String,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub runmin: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

pub const CURVES_HEADER: &str = "algorithm,t,mean,stderr,runmin";

impl CurveTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CURVES_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.algorithm,
                fmt_f64(r.t),
                fmt_f64(r.mean),
                fmt_f64(r.stderr),
                fmt_f64(r.runmin)
            ));
        }
        out
    }

    pub fn rows_for<'a>(&'a self, algorithm: &'a str) -> impl Iterator<Item = &'a CurveRow> + 'a {
        self.rows.iter().filter(move |r| r.algorithm == algorithm)
    }

    /// Smallest mean over the curve of `algorithm`.
    pub fn min_mean(&self, algorithm: &str) -> Option<f64> {
        self.rows_for(algorithm).map(|r| r.mean).reduce(f64::min)
    }
}

pub const LOWER_BOUND_ROW: &str = "bound-invariant-lower";
pub const UPPER_BOUND_ROW: &str = "bound-egu-pm-upper";

fn method_risks(method: &CurveMethod, ds: &Dataset, grid: &[usize], steps: usize) -> Result<Vec<f64>> {
    match method {
        CurveMethod::Optimizer(algo) => {
            let ls = least_squares(ds)?;
            let tr = run_on(algo, &ls, &ds.target, steps, &RecordSchedule::Steps(grid[1..].to_vec()))?;
            Ok(tr.points.iter().map(|p| p.excess_risk).collect())
        }
        CurveMethod::Ridge { eta } | CurveMethod::Priming { eta } => grid
            .iter()
            .map(|&s| {
                if s == 0 {
                    return Ok(excess_risk(&vec![0.0; ds.d()], &ds.target));
                }
                let lambda = ds.n() as f64 / (2.0 * eta * s as f64);
                let w = match method {
                    CurveMethod::Ridge { .. } => ridge_solve(ds, lambda)?,
                    _ => priming_solve(ds, lambda)?,
                };
                Ok(excess_risk(&w, &ds.target))
            })
            .collect(),
    }
}

/// Runs every method on `seeds` datasets and aggregates the excess risk on the
/// log-spaced grid. Seeds run in parallel and are merged in seed order.
pub fn run_curves(cfg: &CurvesConfig) -> Result<CurveTable> {
    let methods = cfg.validate()?;
    let grid = cfg.step_grid();
    let per_seed = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let pc = ProblemConfig::new(cfg.d, cfg.m, cfg.sigma, cfg.seed);
            let ds = build_dataset(&pc, &seed_rng(cfg.seed, i))?;
            methods.iter().map(|m| method_risks(m, &ds, &grid, cfg.steps)).collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let n = cfg.seeds as f64;
    let mut table = CurveTable::default();
    for (k, method) in methods.iter().enumerate() {
        let mut runmin = f64::INFINITY;
        for (g, &step) in grid.iter().enumerate() {
            let mean = per_seed.iter().map(|s| s[k][g]).sum::<f64>() / n;
            let stderr = if cfg.seeds > 1 {
                let var = per_seed.iter().map(|s| (s[k][g] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            runmin = runmin.min(mean);
            table.rows.push(CurveRow {
                algorithm: method.name().to_string(),
                t: cfg.eta * step as f64,
                mean,
                stderr,
                runmin,
            });
        }
    }
    let bounds = evaluate_bounds(cfg.d, cfg.m, cfg.sigma, cfg.eta, cfg.delta)?;
    for (name, value) in [(LOWER_BOUND_ROW, bounds.invariant_lower), (UPPER_BOUND_ROW, bounds.approx_egu_pm_upper)] {
        for &step in &grid {
            table.rows.push(CurveRow {
                algorithm: name.to_string(),
                t: cfg.eta * step as f64,
                mean: value,
                stderr: 0.0,
                runmin: value,
            });
        }
    }
    Ok(table)
}

/// How two-dimensional trajectories are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryMode {
    /// Closed-form gradient flows on isotropic data, log-spaced in time.
    Flows,
    /// Discrete updates on `H·Diag(scale)`, optionally rotated.
    Anisotropic,
}

pub const FLOW_ALGORITHMS: &[&str] = &["gd", "egu-pm", "primed", "adagrad", "egu", "burg"];
pub const ANISOTROPIC_ALGORITHMS: &[&str] = &["gd", "approx-egu-pm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoriesConfig {
    pub mode: TrajectoryMode,
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub seeds: usize,
    pub algorithms: Vec<String>,
    /// Scale of the two-sided flows and updates.
    pub beta: f64,
    /// Flows: last time on the grid.
    pub t_max: f64,
    /// Flows: number of log-spaced times after `t = 0`.
    pub grid_points: usize,
    /// Flows: constant start for EGU and Burg, whose zero start is stationary.
    pub positive_start: f64,
    /// Anisotropic: step size and horizon.
    pub eta: f64,
    pub steps: usize,
    pub scale: [f64; 2],
    pub rotate_input: bool,
}

impl TrajectoriesConfig {
    pub fn isotropic_flows() -> Self {
        TrajectoriesConfig {
            mode: TrajectoryMode::Flows,
            d: 2,
            m: 1,
            sigma: 0.5,
            seed: 0,
            seeds: 10,
            algorithms: ["gd", "egu-pm", "primed", "adagrad"].map(String::from).to_vec(),
            beta: 0.01,
            t_max: 1e6,
            grid_points: 200,
            positive_start: 0.01,
            eta: 0.05,
            steps: 2000,
            scale: [1.0, 1.0],
            rotate_input: false,
        }
    }

    pub fn anisotropic() -> Self {
        TrajectoriesConfig {
            mode: TrajectoryMode::Anisotropic,
            m: 4,
            sigma: 0.3,
            beta: 1e-6,
            steps: 4000,
            algorithms: ["gd", "approx-egu-pm"].map(String::from).to_vec(),
            scale: [2.0, 1.0],
            rotate_input: true,
            ..Self::isotropic_flows()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.d != 2 {
            problems.push(format!("d: trajectory presets are two-dimensional, got {}", self.d));
        }
        if self.seeds == 0 {
            problems.push("seeds: must be at least 1".to_string());
        }
        if self.m == 0 {
            problems.push("m: must be at least 1".to_string());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            problems.push(format!("sigma: must be finite and >= 0, got {}", self.sigma));
        }
        if !(self.beta > 0.0) {
            problems.push(format!("beta: must be positive, got {}", self.beta));
        }
        let known = match self.mode {
            TrajectoryMode::Flows => {
                if !(self.t_max > 1e-3) {
                    problems.push(format!("t_max: must exceed 1e-3, got {}", self.t_max));
                }
                if self.grid_points < 2 {
                    problems.push("grid_points: must be at least 2".to_string());
                }
                if !(self.positive_start > 0.0) {
                    problems.push("positive_start: must be positive".to_string());
                }
                FLOW_ALGORITHMS
            }
            TrajectoryMode::Anisotropic => {
                if self.steps == 0 {
                    problems.push("steps: must be at least 1".to_string());
                }
                if !(self.eta > 0.0) {
                    problems.push(format!("eta: must be positive, got {}", self.eta));
                }
                if !self.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    problems.push("scale: entries must be positive".to_string());
                }
                ANISOTROPIC_ALGORITHMS
            }
        };
        if self.algorithms.is_empty() {
            problems.push("algorithms: at least one is required".to_string());
        }
        for a in &self.algorithms {
            if !known.contains(&a.as_str()) {
                problems.push(format!("algorithms: unknown `{a}` (known: {})", known.join(", ")));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "config",
                reason: problems.join("; "),
            })
        }
    }

    /// `0` followed by `grid_points` log-spaced times from `10⁻³` to `t_max`.
    pub fn time_grid(&self) -> Vec<f64> {
        let (lo, ratio) = (1e-3, self.t_max / 1e-3);
        let k = self.grid_points - 1;
        let mut times = vec![0.0];
        times.extend((0..=k).map(|i| lo * ratio.powf(i as f64 / k as f64)));
        *times.last_mut().unwrap() = self.t_max;
        times
    }

    fn flow_kind(&self, name: &str) -> (FlowKind, bool) {
        match name {
            "gd" => (FlowKind::Gd, false),
            "egu-pm" => (FlowKind::EguPm { beta: self.beta }, false),
            "primed" => (FlowKind::Primed, false),
            "adagrad" => (
                FlowKind::Adagrad {
                    beta: ADAGRAD_BETA,
                    eps: ADAGRAD_EPS,
                },
                false,
            ),
            "egu" => (FlowKind::Egu, true),
            _ => (FlowKind::Burg, true),
        }
    }

    fn anisotropic_algorithm(&self, name: &str) -> Algorithm {
        match name {
            "gd" => Algorithm::Gd { eta: self.eta },
            _ => Algorithm::ApproxEguPm {
                eta: self.eta,
                beta: self.beta,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub algorithm: String,
    pub seed: usize,
    pub t: f64,
    pub w1: f64,
    pub w2: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryTable {
    pub rows: Vec<TrajectoryRow>,
    /// Least-squares solution of each seed's dataset.
    pub points: Vec<[f64; 2]>,
}

pub const TRAJECTORIES_HEADER: &str = "algorithm,seed,t,w1,w2";
pub const POINTS_HEADER: &str = "seed,w1,w2";

impl TrajectoryTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORIES_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.algorithm,
                r.seed,
                fmt_f64(r.t),
                fmt_f64(r.w1),
                fmt_f64(r.w2)
            ));
        }
        out
    }

    pub fn points_csv(&self) -> String {
        let mut out = String::from(POINTS_HEADER);
        out.push('\n');
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", fmt_f64(p[0]), fmt_f64(p[1])));
        }
        out
    }
}

/// Two-dimensional trajectories for every seed and algorithm, seed-major.
pub fn run_trajectories(cfg: &TrajectoriesConfig) -> Result<TrajectoryTable> {
    cfg.validate()?;
    let per_seed = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| match cfg.mode {
            TrajectoryMode::Flows => flow_seed(cfg, i),
            TrajectoryMode::Anisotropic => anisotropic_seed(cfg, i),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = TrajectoryTable::default();
    for (rows, point) in per_seed {
        table.rows.extend(rows);
        table.points.push(point);
    }
    Ok(table)
}

fn flow_seed(cfg: &TrajectoriesConfig, seed: usize) -> Result<(Vec<TrajectoryRow>, [f64; 2])> {
    let pc = ProblemConfig::new(cfg.d, cfg.m, cfg.sigma, cfg.seed);
    let ds = build_dataset(&pc, &seed_rng(cfg.seed, seed))?;
    let w_ls = least_squares(&ds)?.w_ls;
    let times = cfg.time_grid();
    let mut rows = Vec::new();
    for name in &cfg.algorithms {
        let (kind, positive) = cfg.flow_kind(name);
        let w0 = vec![if positive { cfg.positive_start } else { 0.0 }; cfg.d];
        let params = FlowParams::new(kind, &w_ls, &w0)?;
        for &t in &times {
            let w = params.at(t)?;
            rows.push(TrajectoryRow {
                algorithm: name.clone(),
                seed,
                t,
                w1: w[0],
                w2: w[1],
            });
        }
    }
    Ok((rows, [w_ls[0], w_ls[1]]))
}

fn anisotropic_seed(cfg: &TrajectoriesConfig, seed: usize) -> Result<(Vec<TrajectoryRow>, [f64; 2])> {
    let demo = AnisotropicConfig {
        scale: cfg.scale,
        m: cfg.m,
        sigma: cfg.sigma,
        rotate_input: cfg.rotate_input,
        algorithms: cfg.algorithms.iter().map(|a| cfg.anisotropic_algorithm(a)).collect(),
        horizon: cfg.steps,
    };
    let report = anisotropic_demo(&demo, &seed_rng(cfg.seed, seed))?;
    let mut rows = Vec::new();
    for (name, run) in cfg.algorithms.iter().zip(&report.runs) {
        for (step, w) in run.trajectory.iter().enumerate() {
            rows.push(TrajectoryRow {
                algorithm: name.clone(),
                seed,
                t: run.eta * step as f64,
                w1: w[0],
                w2: w[1],
            });
        }
    }
    Ok((rows, [report.w_ls[0], report.w_ls[1]]))
}
