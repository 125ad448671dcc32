//! Fixed-seed property suites run by `rotlab verify`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{check_equivalences, flow_reference, FlowKind, FlowParams, PreconditionerSpec, SpindlyCase};
use crate::invariance::{pc_counterexample, rotation_invariance_check, LearnerHandle};
use crate::numerics::rng::Rng;
use crate::optimizers::Algorithm;
use crate::problem::{build_dataset, evaluate_bounds, sparse_bound_min_copies, Dataset, ProblemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Invariance,
    Flows,
    Equivalence,
    Bounds,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "invariance" => Suite::Invariance,
            "flows" => Suite::Flows,
            "equivalence" => Suite::Equivalence,
            "bounds" => Suite::Bounds,
            _ => {
                return Err(Error::invalid(
                    "suite",
                    format!("unknown `{s}` (known: all, invariance, flows, equivalence, bounds)"),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    AtMost,
    Above,
    Equal,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparison::AtMost => "<=",
            Comparison::Above => ">",
            Comparison::Equal => "==",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub passed: bool,
    /// Error text when the check could not be evaluated.
    pub error: Option<String>,
}

impl CheckResult {
    fn from_value(suite: &str, name: impl Into<String>, value: Result<f64>, cmp: Comparison, threshold: f64) -> Self {
        let name = name.into();
        match value {
            Ok(value) => {
                let passed = match cmp {
                    Comparison::AtMost => value <= threshold,
                    Comparison::Above => value > threshold,
                    Comparison::Equal => value == threshold,
                };
                CheckResult {
                    suite: suite.into(),
                    name,
                    value,
                    comparison: cmp,
                    threshold,
                    passed,
                    error: None,
                }
            }
            Err(e) => CheckResult {
                suite: suite.into(),
                name,
                value: f64::NAN,
                comparison: cmp,
                threshold,
                passed: false,
                error: Some(e.to_string()),
            },
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {}/{}: {:e} {} {:e}",
            self.suite, self.name, self.value, self.comparison, self.threshold
        )?;
        if let Some(e) = &self.error {
            write!(f, " ({e})")?;
        }
        Ok(())
    }
}

pub const FLOW_NAMES: &[&str] = &["gd", "egu", "egu-pm", "primed", "adagrad", "burg"];

/// Samples one scalar instance `(kind, w_ls, w0)` inside the flow's domain.
pub fn random_flow_instance(name: &str, rng: &mut Rng) -> Result<(FlowKind, f64, f64)> {
    let signed = |rng: &mut Rng| {
        let mag = rng.uniform_range(0.1, 2.0);
        if rng.uniform() < 0.5 {
            -mag
        } else {
            mag
        }
    };
    Ok(match name {
        "gd" => (FlowKind::Gd, signed(rng), rng.uniform_range(-2.0, 2.0)),
        "primed" => (FlowKind::Primed, signed(rng), rng.uniform_range(-2.0, 2.0)),
        "egu" => {
            let l = signed(rng);
            let w0 = if l > 0.0 {
                l * rng.uniform_range(0.05, 0.95)
            } else {
                rng.uniform_range(0.05, 2.0)
            };
            (FlowKind::Egu, l, w0)
        }
        "egu-pm" => (
            FlowKind::EguPm {
                beta: rng.log_uniform(1e-3, 1.0),
            },
            signed(rng),
            rng.uniform_range(-2.0, 2.0),
        ),
        "adagrad" => (
            FlowKind::Adagrad {
                beta: rng.uniform_range(0.5, 2.0),
                eps: rng.log_uniform(1e-8, 1e-2),
            },
            signed(rng),
            rng.uniform_range(-2.0, 2.0),
        ),
        "burg" => {
            let l = rng.uniform_range(0.2, 2.0);
            (FlowKind::Burg, l, l * rng.uniform_range(0.1, 3.0))
        }
        _ => return Err(Error::invalid("flow", format!("unknown `{name}`"))),
    })
}

/// Largest `|closed form − converged RK4|` on `t ∈ {0, 0.1, …, 5}` over
/// `instances` random scalar problems.
pub fn flow_oracle_deviation(name: &str, instances: usize, seed: u64) -> Result<f64> {
    let times: Vec<f64> = (0..=50).map(|i| 0.1 * i as f64).collect();
    let mut dev = 0.0f64;
    for i in 0..instances {
        let mut rng = Rng::new(seed).substream(i as u64);
        let (kind, l, w0) = random_flow_instance(name, &mut rng)?;
        let params = FlowParams::new(kind, &[l], &[w0])?;
        let reference = flow_reference(kind, &[l], &[w0], &times, 1e-11)?;
        for (t, r) in times.iter().zip(&reference) {
            dev = dev.max((params.at(*t)?[0] - r[0]).abs());
        }
    }
    Ok(dev)
}

/// Points in `[0.1, 3]^d` for the Jacobian identities.
pub fn equivalence_points(count: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|_| (0..d).map(|_| rng.uniform_range(0.1, 3.0)).collect())
        .collect()
}

pub fn spindly_case(seed: u64) -> SpindlyCase {
    let mut rng = Rng::new(seed).substream(7);
    let w_ls: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
    // EGU needs 0 < w0 < w_ls on positive coordinates.
    let w0 = w_ls
        .iter()
        .map(|&l| if l > 0.0 { l * rng.uniform_range(0.05, 0.9) } else { rng.uniform_range(0.05, 1.0) })
        .collect();
    SpindlyCase {
        w_ls,
        w0,
        times: (0..=20).map(|i| 0.1 * i as f64).collect(),
    }
}

/// Dataset used for the non-invariance witnesses: `d = 8`, `m = 4`, `σ = 1`.
pub fn witness_dataset(seed: u64) -> Result<Dataset> {
    build_dataset(&ProblemConfig::new(8, 4, 1.0, seed), &Rng::new(seed))
}

/// Learners expected to break rotation invariance, with their settings.
pub fn witness_learners(d: usize) -> Vec<LearnerHandle> {
    let beta = 1.0 / (4.0 * d as f64);
    vec![
        LearnerHandle::iterative(Algorithm::ApproxEguPm { eta: 0.25, beta }, 16),
        LearnerHandle::iterative(Algorithm::Spindly { eta: 0.25 }, 16),
        LearnerHandle::priming((d as f64).sqrt()),
        LearnerHandle::iterative(
            Algorithm::Adagrad {
                eta: 0.05,
                beta_pre: 1.0,
                eps: 1e-8,
            },
            50,
        ),
        LearnerHandle::iterative(Algorithm::IncPriming { eta: 0.1, p0: 1.0 }, 50),
    ]
}

/// Learners expected to be rotation invariant.
pub fn invariant_learners(d: usize, sigma: f64) -> Vec<LearnerHandle> {
    vec![
        LearnerHandle::iterative(Algorithm::Gd { eta: 0.05 }, 100),
        LearnerHandle::ridge(sigma * sigma * d as f64),
    ]
}

fn invariance_checks(seed: u64) -> Vec<CheckResult> {
    const S: &str = "invariance";
    let mut out = Vec::new();
    for d in [4, 16] {
        let ds = build_dataset(&ProblemConfig::new(d, 4, 1.0, seed), &Rng::new(seed).substream(d as u64));
        for learner in invariant_learners(d, 1.0) {
            let value = ds.as_ref().map_err(Clone::clone).and_then(|ds| {
                Ok(rotation_invariance_check(&learner, ds, 20, 1e-8, &Rng::new(seed + 1))?.max_deviation)
            });
            out.push(CheckResult::from_value(
                S,
                format!("{}-invariant-d{d}", learner.name()),
                value,
                Comparison::AtMost,
                1e-8,
            ));
        }
    }
    let ds = witness_dataset(seed);
    for learner in witness_learners(8) {
        let value = ds.as_ref().map_err(Clone::clone).and_then(|ds| {
            Ok(rotation_invariance_check(&learner, ds, 5, 1e-2, &Rng::new(seed + 2))?.max_deviation)
        });
        out.push(CheckResult::from_value(
            S,
            format!("{}-witness", learner.name()),
            value,
            Comparison::Above,
            1e-2,
        ));
    }
    let pc = pc_counterexample(8, 2, 0.0, &Rng::new(seed + 3));
    out.push(CheckResult::from_value(
        S,
        "pc-original-risk",
        pc.as_ref().map(|r| r.original_risk).map_err(Clone::clone),
        Comparison::AtMost,
        1e-8,
    ));
    out.push(CheckResult::from_value(
        S,
        "pc-rotated-risk",
        pc.map(|r| r.rotated_risk),
        Comparison::Above,
        0.1,
    ));
    out
}

fn flow_checks(seed: u64) -> Vec<CheckResult> {
    FLOW_NAMES
        .iter()
        .map(|name| {
            CheckResult::from_value(
                "flows",
                format!("{name}-closed-form-vs-rk4"),
                flow_oracle_deviation(name, 5, seed),
                Comparison::AtMost,
                1e-6,
            )
        })
        .collect()
}

fn equivalence_checks(seed: u64) -> Vec<CheckResult> {
    const S: &str = "equivalence";
    let points = equivalence_points(50, 3, seed);
    let case = spindly_case(seed);
    let egu = check_equivalences(PreconditionerSpec::Egu, &points, Some(&case));
    let euclid = check_equivalences(PreconditionerSpec::Euclidean, &points, None);
    vec![
        CheckResult::from_value(
            S,
            "egu-jacobian-identities",
            egu.as_ref().map(|r| r.jacobian_mismatch).map_err(Clone::clone),
            Comparison::AtMost,
            1e-6,
        ),
        CheckResult::from_value(
            S,
            "euclidean-jacobian-identities",
            euclid.map(|r| r.jacobian_mismatch),
            Comparison::AtMost,
            1e-6,
        ),
        CheckResult::from_value(
            S,
            "spindly-flow-vs-egu",
            egu.and_then(|r| r.spindly_deviation.ok_or_else(|| Error::Domain("no spindly case".into()))),
            Comparison::AtMost,
            1e-8,
        ),
    ]
}

fn bounds_checks() -> Vec<CheckResult> {
    const S: &str = "bounds";
    let paper_scale = evaluate_bounds(1024, 4, 1.0, 1.0, 0.001);
    let noiseless = evaluate_bounds(64, 4, 0.0, 1.0, 0.01);
    let noise_terms = noiseless.map(|b| {
        [b.invariant_lower, b.iid_init_lower, b.priming_upper]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    });
    let bad_delta = match evaluate_bounds(64, 4, 1.0, 1.0, 1.5) {
        Err(e) if e.to_string().contains("delta") => Ok(0.0),
        Err(e) => Err(e),
        Ok(_) => Ok(1.0),
    };
    vec![
        CheckResult::from_value(
            S,
            "invariant-lower-d1024",
            // (d − 1)/d · σ²/(σ² + m) = 1023/5120 exactly.
            paper_scale.map(|b| (b.invariant_lower - 1023.0 / 5120.0).abs()),
            Comparison::AtMost,
            1e-15,
        ),
        CheckResult::from_value(S, "noiseless-bounds-vanish", noise_terms, Comparison::AtMost, 0.0),
        CheckResult::from_value(S, "delta-out-of-range-rejected", bad_delta, Comparison::Equal, 0.0),
        CheckResult::from_value(
            S,
            "min-copies-d16",
            Ok(sparse_bound_min_copies(16, 1.0, 0.01) as f64),
            Comparison::Equal,
            65.0,
        ),
    ]
}

/// Runs `suite` with the fixed base `seed`; a check that errors counts as failed.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckResult> {
    match suite {
        Suite::All => [Suite::Flows, Suite::Invariance, Suite::Equivalence, Suite::Bounds]
            .into_iter()
            .flat_map(|s| run_suite(s, seed))
            .collect(),
        Suite::Invariance => invariance_checks(seed),
        Suite::Flows => flow_checks(seed),
        Suite::Equivalence => equivalence_checks(seed),
        Suite::Bounds => bounds_checks(),
    }
}
