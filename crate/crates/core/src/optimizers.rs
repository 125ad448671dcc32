//! Discrete learners and closed-form estimators.
//!
//! Every step function is pure: it takes a state by reference and returns the
//! next state.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::cholesky_solve;
use crate::numerics::matrix::Matrix;
use crate::problem::{excess_risk, least_squares, loss_gradient, Dataset, LeastSquares};

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("eta", format!("must be finite and > 0, got {eta}")))
    }
}

fn finite_or(step: &'static str, w: &[f64]) -> Result<()> {
    if w.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericConsistency(format!("{step} produced a non-finite weight")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdState {
    pub w: Vec<f64>,
    pub eta: f64,
}

impl GdState {
    pub fn zeros(d: usize, eta: f64) -> Self {
        GdState { w: vec![0.0; d], eta }
    }
}

/// `w ← w − η∇L(w)`.
pub fn gd_step(s: &GdState, ls: &LeastSquares) -> Result<GdState> {
    check_eta(s.eta)?;
    let g = loss_gradient(&s.w, ls)?;
    let w: Vec<f64> = s.w.iter().zip(&g).map(|(w, g)| w - s.eta * g).collect();
    finite_or("gd", &w)?;
    Ok(GdState { w, eta: s.eta })
}

/// Preconditioned step with the fixed preconditioner `Diag(w_ls²)`.
pub fn primed_gd_step(s: &GdState, ls: &LeastSquares) -> Result<GdState> {
    check_eta(s.eta)?;
    let g = loss_gradient(&s.w, ls)?;
    let w: Vec<f64> = s
        .w
        .iter()
        .zip(&g)
        .zip(&ls.w_ls)
        .map(|((w, g), l)| w - s.eta * l * l * g)
        .collect();
    finite_or("primed gd", &w)?;
    Ok(GdState { w, eta: s.eta })
}

/// Normalized two-sided exponentiated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgPmState {
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub eta: f64,
}

impl EgPmState {
    /// Uniform start `v± = 1/(2d)`.
    pub fn uniform(d: usize, eta: f64) -> Self {
        let v = 1.0 / (2.0 * d as f64);
        EgPmState {
            v_plus: vec![v; d],
            v_minus: vec![v; d],
            eta,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.v_plus.iter().zip(&self.v_minus).map(|(p, m)| p - m).collect()
    }

    pub fn mass(&self) -> f64 {
        self.v_plus.iter().chain(&self.v_minus).sum()
    }
}

/// `v± ← v±·exp(∓η∇L)` followed by joint ℓ₁ normalization. Exponents are
/// shifted by their maximum so large `η` cannot overflow.
pub fn eg_pm_step(s: &EgPmState, ls: &LeastSquares) -> Result<EgPmState> {
    check_eta(s.eta)?;
    let d = s.v_plus.len();
    check_dim(d, s.v_minus.len())?;
    let g = loss_gradient(&s.weights(), ls)?;
    let log_v = |v: f64| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    let lp: Vec<f64> = s.v_plus.iter().zip(&g).map(|(v, g)| log_v(*v) - s.eta * g).collect();
    let lm: Vec<f64> = s.v_minus.iter().zip(&g).map(|(v, g)| log_v(*v) + s.eta * g).collect();
    let shift = lp.iter().chain(&lm).copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::NumericConsistency("eg± weights collapsed to zero".into()));
    }
    let mut v_plus: Vec<f64> = lp.iter().map(|l| (l - shift).exp()).collect();
    let mut v_minus: Vec<f64> = lm.iter().map(|l| (l - shift).exp()).collect();
    let z: f64 = v_plus.iter().chain(&v_minus).sum();
    v_plus.iter_mut().chain(v_minus.iter_mut()).for_each(|v| *v /= z);
    Ok(EgPmState {
        v_plus,
        v_minus,
        eta: s.eta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxEguState {
    pub w: Vec<f64>,
    pub beta: f64,
    pub eta: f64,
}

impl ApproxEguState {
    pub fn zeros(d: usize, beta: f64, eta: f64) -> Self {
        ApproxEguState {
            w: vec![0.0; d],
            beta,
            eta,
        }
    }
}

/// `w ← w − η·√(w² + 4β²)·∇L(w)`.
pub fn approx_egu_pm_step(s: &ApproxEguState, ls: &LeastSquares) -> Result<ApproxEguState> {
    check_eta(s.eta)?;
    if !(s.beta > 0.0) {
        return Err(Error::invalid("beta", format!("must be > 0, got {}", s.beta)));
    }
    let four_b2 = 4.0 * s.beta * s.beta;
    let g = loss_gradient(&s.w, ls)?;
    let w: Vec<f64> = s
        .w
        .iter()
        .zip(&g)
        .map(|(w, g)| w - s.eta * (w * w + four_b2).sqrt() * g)
        .collect();
    finite_or("approximated egu±", &w)?;
    Ok(ApproxEguState {
        w,
        beta: s.beta,
        eta: s.eta,
    })
}

/// Exact unnormalized two-sided update `v± = β·exp(∓η·Σ∇L)`, kept as the
/// accumulated gradient sum so that `v⁺·v⁻ = β²` holds to rounding.
#[doc(hidden)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactEguPmState {
    pub grad_sum: Vec<f64>,
    pub beta: f64,
    pub eta: f64,
}

impl ExactEguPmState {
    pub fn new(d: usize, beta: f64, eta: f64) -> Self {
        ExactEguPmState {
            grad_sum: vec![0.0; d],
            beta,
            eta,
        }
    }

    pub fn v_plus(&self) -> Vec<f64> {
        self.grad_sum.iter().map(|s| self.beta * (-self.eta * s).exp()).collect()
    }

    pub fn v_minus(&self) -> Vec<f64> {
        self.grad_sum.iter().map(|s| self.beta * (self.eta * s).exp()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        // β(e^{-x} − e^{x}) = −2β·sinh(x)
        self.grad_sum.iter().map(|s| -2.0 * self.beta * (self.eta * s).sinh()).collect()
    }
}

#[doc(hidden)]
pub fn exact_egu_pm_step(s: &ExactEguPmState, ls: &LeastSquares) -> Result<ExactEguPmState> {
    check_eta(s.eta)?;
    let g = loss_gradient(&s.weights(), ls)?;
    let grad_sum = s.grad_sum.iter().zip(&g).map(|(a, b)| a + b).collect();
    Ok(ExactEguPmState {
        grad_sum,
        beta: s.beta,
        eta: s.eta,
    })
}

/// Unnormalized exponentiated gradient `w ← w⊙exp(−η∇L)` on positive weights.
pub fn egu_step(w: &[f64], ls: &LeastSquares, eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    if let Some(i) = w.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("egu requires positive weights, coordinate {i} is {}", w[i])));
    }
    let g = loss_gradient(w, ls)?;
    let out: Vec<f64> = w.iter().zip(&g).map(|(w, g)| w * (-eta * g).exp()).collect();
    finite_or("egu", &out)?;
    Ok(out)
}

/// Two-layer diagonal network `w = u⊙v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpindlyState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub eta: f64,
}

impl SpindlyState {
    /// `u = √(2/d)·1`, `v = 0`.
    pub fn standard(d: usize, eta: f64) -> Self {
        SpindlyState {
            u: vec![(2.0 / d as f64).sqrt(); d],
            v: vec![0.0; d],
            eta,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(u, v)| u * v).collect()
    }

    /// `v± = (u ± v)²/4`.
    pub fn v_pm(&self) -> (Vec<f64>, Vec<f64>) {
        let plus = self.u.iter().zip(&self.v).map(|(u, v)| (u + v).powi(2) / 4.0).collect();
        let minus = self.u.iter().zip(&self.v).map(|(u, v)| (u - v).powi(2) / 4.0).collect();
        (plus, minus)
    }
}

/// Simultaneous gradient step on `u` and `v`, both using the old values.
pub fn spindly_step(s: &SpindlyState, ls: &LeastSquares) -> Result<SpindlyState> {
    check_eta(s.eta)?;
    check_dim(s.u.len(), s.v.len())?;
    let g = loss_gradient(&s.weights(), ls)?;
    let u: Vec<f64> = s.u.iter().zip(&s.v).zip(&g).map(|((u, v), g)| u - s.eta * g * v).collect();
    let v: Vec<f64> = s.v.iter().zip(&s.u).zip(&g).map(|((v, u), g)| v - s.eta * g * u).collect();
    finite_or("spindly", &u)?;
    finite_or("spindly", &v)?;
    Ok(SpindlyState { u, v, eta: s.eta })
}

pub const ADAGRAD_EPS: f64 = 1e-8;
pub const ADAGRAD_BETA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdagradState {
    pub w: Vec<f64>,
    pub g_acc: Vec<f64>,
    pub beta_pre: f64,
    pub eps: f64,
    pub eta: f64,
}

impl AdagradState {
    pub fn zeros(d: usize, eta: f64, beta_pre: f64, eps: f64) -> Self {
        AdagradState {
            w: vec![0.0; d],
            g_acc: vec![eps; d],
            beta_pre,
            eps,
            eta,
        }
    }
}

/// `G ← G + β(∇L)²`, then `w ← w − η·G^{−1/2}⊙∇L`.
pub fn adagrad_step(s: &AdagradState, ls: &LeastSquares) -> Result<AdagradState> {
    check_eta(s.eta)?;
    if !(s.eps > 0.0) {
        return Err(Error::invalid("eps", format!("must be > 0, got {}", s.eps)));
    }
    if !(s.beta_pre > 0.0) {
        return Err(Error::invalid("beta_pre", format!("must be > 0, got {}", s.beta_pre)));
    }
    let g = loss_gradient(&s.w, ls)?;
    let g_acc: Vec<f64> = s
        .g_acc
        .iter()
        .zip(&g)
        .map(|(a, g)| (a + s.beta_pre * g * g).max(s.eps))
        .collect();
    let w: Vec<f64> = s
        .w
        .iter()
        .zip(&g)
        .zip(&g_acc)
        .map(|((w, g), a)| w - s.eta * g / a.sqrt())
        .collect();
    finite_or("adagrad", &w)?;
    Ok(AdagradState {
        w,
        g_acc,
        beta_pre: s.beta_pre,
        eps: s.eps,
        eta: s.eta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncPrimingState {
    pub p: Vec<f64>,
    pub eta: f64,
}

/// `p ← p − η·p²⊙∇L(p)`.
pub fn inc_priming_step(s: &IncPrimingState, ls: &LeastSquares) -> Result<IncPrimingState> {
    check_eta(s.eta)?;
    let g = loss_gradient(&s.p, ls)?;
    let p: Vec<f64> = s.p.iter().zip(&g).map(|(p, g)| p - s.eta * p * p * g).collect();
    finite_or("incremental priming", &p)?;
    Ok(IncPrimingState { p, eta: s.eta })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("lambda", format!("must be finite and >= 0, got {lambda}")))
    }
}

/// `(XᵀX + λI)⁻¹Xᵀy`.
pub fn ridge_solve(ds: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if ds.isotropic {
        let ls = least_squares(ds)?;
        return Ok(ridge_isotropic(&ls.w_ls, ds.n(), lambda));
    }
    ridge_solve_xy(&ds.x, &ds.y, lambda)
}

/// Ridge on an isotropic design from its least-squares solution:
/// `n·w_ls / (n + λ)`.
pub fn ridge_isotropic(w_ls: &[f64], n: usize, lambda: f64) -> Vec<f64> {
    let n = n as f64;
    let f = n / (n + lambda);
    w_ls.iter().map(|w| f * w).collect()
}

pub fn ridge_solve_xy(x: &Matrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let mut a = x.gram();
    for i in 0..a.rows() {
        a[(i, i)] += lambda;
    }
    cholesky_solve(&a, &x.tr_matvec(y)?)
}

/// Two-stage priming predictor `(XᵀX + λ·Diag(w_ls)⁻²)⁻¹Xᵀy`, evaluated as
/// `W(WXᵀXW + λI)⁻¹WXᵀy` with `W = Diag(w_ls)`.
pub fn priming_solve(ds: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if ds.isotropic {
        let ls = least_squares(ds)?;
        return Ok(priming_isotropic(&ls.w_ls, ds.n(), lambda));
    }
    priming_solve_xy(&ds.x, &ds.y, lambda)
}

/// Per-coordinate priming on an isotropic design: `n·w³ / (n·w² + λ)`.
pub fn priming_isotropic(w_ls: &[f64], n: usize, lambda: f64) -> Vec<f64> {
    let n = n as f64;
    w_ls.iter()
        .map(|&w| {
            let den = n * w * w + lambda;
            if den == 0.0 {
                0.0
            } else {
                n * w * w * w / den
            }
        })
        .collect()
}

pub fn priming_solve_xy(x: &Matrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let ls = crate::problem::least_squares_xy(x, y)?;
    let w = &ls.w_ls;
    let d = w.len();
    let gram = x.gram();
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = w[i] * gram[(i, j)] * w[j];
        }
        a[(i, i)] += lambda;
    }
    let b: Vec<f64> = x.tr_matvec(y)?.iter().zip(w).map(|(v, w)| v * w).collect();
    let z = cholesky_solve(&a, &b)?;
    Ok(z.iter().zip(w).map(|(z, w)| z * w).collect())
}

/// Iterative learner with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Algorithm {
    Gd { eta: f64 },
    EgPm { eta: f64 },
    ApproxEguPm { eta: f64, beta: f64 },
    /// Plain EGU from the constant start `w0·1`.
    Egu { eta: f64, w0: f64 },
    Spindly { eta: f64 },
    Adagrad { eta: f64, beta_pre: f64, eps: f64 },
    /// Incremental priming from the constant start `p0·1`.
    IncPriming { eta: f64, p0: f64 },
    PrimedGd { eta: f64 },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Gd { .. } => "gd",
            Algorithm::EgPm { .. } => "eg-pm",
            Algorithm::ApproxEguPm { .. } => "approx-egu-pm",
            Algorithm::Egu { .. } => "egu",
            Algorithm::Spindly { .. } => "spindly",
            Algorithm::Adagrad { .. } => "adagrad",
            Algorithm::IncPriming { .. } => "inc-priming",
            Algorithm::PrimedGd { .. } => "primed-gd",
        }
    }

    pub fn eta(&self) -> f64 {
        match *self {
            Algorithm::Gd { eta }
            | Algorithm::EgPm { eta }
            | Algorithm::ApproxEguPm { eta, .. }
            | Algorithm::Egu { eta, .. }
            | Algorithm::Spindly { eta }
            | Algorithm::Adagrad { eta, .. }
            | Algorithm::IncPriming { eta, .. }
            | Algorithm::PrimedGd { eta } => eta,
        }
    }

    /// Starting state for dimension `d`.
    pub fn init(&self, d: usize) -> OptimizerState {
        match *self {
            Algorithm::Gd { eta } => OptimizerState::Gd(GdState::zeros(d, eta)),
            Algorithm::PrimedGd { eta } => OptimizerState::PrimedGd(GdState::zeros(d, eta)),
            Algorithm::EgPm { eta } => OptimizerState::EgPm(EgPmState::uniform(d, eta)),
            Algorithm::ApproxEguPm { eta, beta } => {
                OptimizerState::ApproxEguPm(ApproxEguState::zeros(d, beta, eta))
            }
            Algorithm::Egu { eta, w0 } => OptimizerState::Egu {
                w: vec![w0; d],
                eta,
            },
            Algorithm::Spindly { eta } => OptimizerState::Spindly(SpindlyState::standard(d, eta)),
            Algorithm::Adagrad { eta, beta_pre, eps } => {
                OptimizerState::Adagrad(AdagradState::zeros(d, eta, beta_pre, eps))
            }
            Algorithm::IncPriming { eta, p0 } => OptimizerState::IncPriming(IncPrimingState {
                p: vec![p0; d],
                eta,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Gd(GdState),
    PrimedGd(GdState),
    EgPm(EgPmState),
    ApproxEguPm(ApproxEguState),
    Egu { w: Vec<f64>, eta: f64 },
    Spindly(SpindlyState),
    Adagrad(AdagradState),
    IncPriming(IncPrimingState),
}

impl OptimizerState {
    pub fn weights(&self) -> Vec<f64> {
        match self {
            OptimizerState::Gd(s) | OptimizerState::PrimedGd(s) => s.w.clone(),
            OptimizerState::EgPm(s) => s.weights(),
            OptimizerState::ApproxEguPm(s) => s.w.clone(),
            OptimizerState::Egu { w, .. } => w.clone(),
            OptimizerState::Spindly(s) => s.weights(),
            OptimizerState::Adagrad(s) => s.w.clone(),
            OptimizerState::IncPriming(s) => s.p.clone(),
        }
    }

    pub fn step(&self, ls: &LeastSquares) -> Result<OptimizerState> {
        Ok(match self {
            OptimizerState::Gd(s) => OptimizerState::Gd(gd_step(s, ls)?),
            OptimizerState::PrimedGd(s) => OptimizerState::PrimedGd(primed_gd_step(s, ls)?),
            OptimizerState::EgPm(s) => OptimizerState::EgPm(eg_pm_step(s, ls)?),
            OptimizerState::ApproxEguPm(s) => OptimizerState::ApproxEguPm(approx_egu_pm_step(s, ls)?),
            OptimizerState::Egu { w, eta } => OptimizerState::Egu {
                w: egu_step(w, ls, *eta)?,
                eta: *eta,
            },
            OptimizerState::Spindly(s) => OptimizerState::Spindly(spindly_step(s, ls)?),
            OptimizerState::Adagrad(s) => OptimizerState::Adagrad(adagrad_step(s, ls)?),
            OptimizerState::IncPriming(s) => OptimizerState::IncPriming(inc_priming_step(s, ls)?),
        })
    }
}

/// Which steps of a run are recorded. Step 0 and the final step are always kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RecordSchedule {
    Every(usize),
    Steps(Vec<usize>),
}

impl RecordSchedule {
    fn wants(&self, step: usize, last: usize) -> bool {
        if step == 0 || step == last {
            return true;
        }
        match self {
            RecordSchedule::Every(n) => *n > 0 && step.is_multiple_of(*n),
            RecordSchedule::Steps(list) => list.binary_search(&step).is_ok(),
        }
    }
}

/// Log-spaced integer grid on `[1, last]`, deduplicated, always containing `last`.
pub fn log_step_grid(last: usize, points: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..points)
        .map(|i| {
            let f = if points <= 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
            (last as f64).powf(f).round() as usize
        })
        .filter(|&s| s >= 1 && s <= last)
        .collect();
    out.push(last);
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub w: Vec<f64>,
    pub excess_risk: f64,
    /// Minimum excess risk over all steps up to and including this one.
    pub running_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub algorithm: String,
    pub points: Vec<TrajectoryPoint>,
    /// Minimum excess risk over every step of the run.
    pub min_risk: f64,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least two points")
    }
}

/// Runs `algo` for `steps` iterations on `ds`.
pub fn run_optimizer(
    algo: &Algorithm,
    ds: &Dataset,
    steps: usize,
    schedule: &RecordSchedule,
) -> Result<Trajectory> {
    let ls = least_squares(ds)?;
    run_on(algo, &ls, &ds.target, steps, schedule)
}

/// Runs `algo` against a precomputed least-squares hub.
pub fn run_on(
    algo: &Algorithm,
    ls: &LeastSquares,
    target: &[f64],
    steps: usize,
    schedule: &RecordSchedule,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    check_dim(ls.dim(), target.len())?;
    let mut state = algo.init(ls.dim());
    let mut points = Vec::new();
    let w0 = state.weights();
    let mut running_min = excess_risk(&w0, target);
    points.push(TrajectoryPoint {
        step: 0,
        excess_risk: running_min,
        running_min,
        w: w0,
    });
    for step in 1..=steps {
        state = state.step(ls).map_err(|e| Error::Step {
            step,
            source: Box::new(e),
        })?;
        let w = state.weights();
        let risk = excess_risk(&w, target);
        running_min = running_min.min(risk);
        if schedule.wants(step, steps) {
            points.push(TrajectoryPoint {
                step,
                w,
                excess_risk: risk,
                running_min,
            });
        }
    }
    Ok(Trajectory {
        algorithm: algo.name().to_string(),
        points,
        min_risk: running_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;
    use crate::problem::{build_dataset, ProblemConfig, Rotation};

    fn noiseless(d: usize) -> LeastSquares {
        let mut w = vec![0.0; d];
        w[0] = 1.0;
        LeastSquares::from_w_ls(w, d)
    }

    #[test]
    fn gd_one_step() {
        let s = gd_step(&GdState::zeros(3, 0.25), &noiseless(3)).unwrap();
        assert_eq!(s.w, vec![0.5, 0.0, 0.0]);
        let fixed = gd_step(&GdState { w: vec![1.0, 0.0, 0.0], eta: 0.25 }, &noiseless(3)).unwrap();
        assert_eq!(fixed.w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn eg_pm_two_dim_is_tanh() {
        let s = eg_pm_step(&EgPmState::uniform(2, 1.0), &noiseless(2)).unwrap();
        let w = s.weights();
        assert!((w[0] - 1f64.tanh()).abs() < 1e-15);
        assert_eq!(w[1], 0.0);
        assert!((s.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eg_pm_large_eta_does_not_overflow() {
        let s = eg_pm_step(&EgPmState::uniform(8, 200.0), &noiseless(8)).unwrap();
        assert!((s.mass() - 1.0).abs() < 1e-12);
        assert!(excess_risk(&s.weights(), &noiseless(8).w_ls) <= 1e-80);
    }

    #[test]
    fn approx_egu_zero_start_rate() {
        let d = 4;
        let beta = 1.0 / (2.0 * d as f64);
        let s = approx_egu_pm_step(&ApproxEguState::zeros(d, beta, 0.1), &noiseless(d)).unwrap();
        // effective rate η·2β on gradient −2
        assert!((s.w[0] - 0.1 / d as f64 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn egu_rejects_non_positive() {
        assert!(matches!(egu_step(&[1.0, 0.0], &noiseless(2), 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn spindly_matches_squared_factor_recursion() {
        let ds = build_dataset(&ProblemConfig::new(5, 2, 1.0, 3), &Rng::new(3)).unwrap();
        let ls = least_squares(&ds).unwrap();
        let mut s = SpindlyState::standard(5, 0.1);
        let (vp0, vm0) = s.v_pm();
        assert!(vp0.iter().chain(&vm0).all(|v| (v - 0.1).abs() < 1e-15));
        for _ in 0..100 {
            let (vp, vm) = s.v_pm();
            let g = loss_gradient(&s.weights(), &ls).unwrap();
            let next = spindly_step(&s, &ls).unwrap();
            for i in 0..5 {
                let p = (1.0 - s.eta * g[i]).powi(2) * vp[i];
                let m = (1.0 + s.eta * g[i]).powi(2) * vm[i];
                assert!((next.weights()[i] - (p - m)).abs() < 1e-12);
            }
            s = next;
        }
    }

    #[test]
    fn exact_egu_pm_product_invariant() {
        let ds = build_dataset(&ProblemConfig::new(6, 2, 1.0, 1), &Rng::new(1)).unwrap();
        let ls = least_squares(&ds).unwrap();
        let beta = 0.05;
        let mut s = ExactEguPmState::new(6, beta, 0.05);
        for _ in 0..200 {
            s = exact_egu_pm_step(&s, &ls).unwrap();
            for (p, m) in s.v_plus().iter().zip(s.v_minus()) {
                assert!((p * m - beta * beta).abs() <= 1e-12 * beta * beta);
            }
        }
    }

    #[test]
    fn adagrad_first_step() {
        let eta = 0.1;
        let s = adagrad_step(&AdagradState::zeros(2, eta, 1.0, 1e-8), &noiseless(2)).unwrap();
        assert_eq!(s.g_acc[0], 1e-8 + 4.0);
        assert!((s.w[0] - 2.0 * eta / (1e-8f64 + 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.w[1], 0.0);
    }

    #[test]
    fn inc_priming_fixed_points() {
        let ls = LeastSquares::from_w_ls(vec![0.8, -0.3], 4);
        let s = IncPrimingState { p: vec![0.0, -0.3], eta: 0.2 };
        let next = inc_priming_step(&s, &ls).unwrap();
        assert_eq!(next.p, vec![0.0, -0.3]);
    }

    #[test]
    fn ridge_limits() {
        let ds = build_dataset(&ProblemConfig::new(8, 2, 1.0, 2), &Rng::new(2)).unwrap();
        let ls = least_squares(&ds).unwrap();
        let r0 = ridge_solve(&ds, 0.0).unwrap();
        assert!(crate::numerics::matrix::max_abs_diff(&r0, &ls.w_ls) < 1e-10);
        assert!(crate::numerics::norm(&ridge_solve(&ds, 1e12).unwrap()) < 1e-6);
        let general = ridge_solve_xy(&ds.x, &ds.y, 8.0).unwrap();
        let fast = ridge_solve(&ds, 8.0).unwrap();
        assert!(crate::numerics::matrix::max_abs_diff(&general, &fast) < 1e-12);
    }

    #[test]
    fn priming_noiseless_and_general_path() {
        let cfg = ProblemConfig::new(4, 3, 0.0, 0).with_rotation(Rotation::HaarRandom);
        let ds = build_dataset(&cfg, &Rng::new(0)).unwrap();
        let lam = 5.0;
        let w = priming_solve(&ds, lam).unwrap();
        assert!((w[0] - 12.0 / 17.0).abs() < 1e-12);
        assert!(w[1..].iter().all(|v| v.abs() < 1e-12));
        assert!((priming_solve(&ds, 0.0).unwrap()[0] - 1.0).abs() < 1e-12);

        let noisy = build_dataset(&ProblemConfig::new(4, 3, 1.0, 1), &Rng::new(1)).unwrap();
        let a = priming_solve(&noisy, 2.0).unwrap();
        let b = priming_solve_xy(&noisy.x, &noisy.y, 2.0).unwrap();
        assert!(crate::numerics::matrix::max_abs_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn run_records_schedule_and_minimum() {
        let cfg = ProblemConfig::new(3, 1, 0.0, 0);
        let ds = build_dataset(&cfg, &Rng::new(0)).unwrap();
        let algo = Algorithm::Gd { eta: 0.25 };
        assert!(run_optimizer(&algo, &ds, 0, &RecordSchedule::Every(1)).is_err());
        let tr = run_optimizer(&algo, &ds, 7, &RecordSchedule::Every(3)).unwrap();
        let steps: Vec<usize> = tr.points.iter().map(|p| p.step).collect();
        assert_eq!(steps, vec![0, 3, 6, 7]);
        for p in &tr.points {
            let expect = 0.5f64.powi(2 * p.step as i32);
            assert!((p.excess_risk - expect).abs() < 1e-12);
        }
        assert!(tr.min_risk <= tr.last().excess_risk);
    }

    #[test]
    fn step_errors_carry_index() {
        let ls = LeastSquares::from_w_ls(vec![1.0, -1.0], 2);
        let algo = Algorithm::Egu { eta: 0.1, w0: 0.0 };
        match run_on(&algo, &ls, &[1.0, 0.0], 3, &RecordSchedule::Every(1)) {
            Err(Error::Step { step: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_grid_contains_endpoints() {
        let g = log_step_grid(10_000, 50);
        assert_eq!(g[0], 1);
        assert_eq!(*g.last().unwrap(), 10_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
