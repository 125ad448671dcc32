//! Closed-form continuous-time trajectories on the isotropic quadratic loss
//! `L(w) = ‖w − w_ls‖²`, their ODE right-hand sides, and the equivalence checks
//! between preconditioners, mirror maps, reparameterizations and metrics.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::lambert::{lambert_w0, lambert_w0_branch, lambert_w0_exp, v_plus_log1m};
use crate::numerics::linalg::cholesky_solve;
use crate::numerics::matrix::Matrix;
use crate::numerics::ode::{rk4_endpoint, OdeSystem};

/// Continuous-time learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flow", rename_all = "kebab-case")]
pub enum FlowKind {
    /// `ẇ = 2(w_ls − w)`.
    Gd,
    /// `ẇ = 2w(w_ls − w)`.
    Egu,
    /// `ẇ = 2√(w² + 4β²)(w_ls − w)`.
    EguPm { beta: f64 },
    /// `ẇ = 2w_ls²(w_ls − w)`.
    Primed,
    /// `ẇ = 2G^{−1/2}(w_ls − w)`, `Ġ = 4β(w_ls − w)²`, `G(0) = ε`.
    Adagrad { beta: f64, eps: f64 },
    /// `ẇ = 2w²(w_ls − w)`.
    Burg,
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Gd => "gd",
            FlowKind::Egu => "egu",
            FlowKind::EguPm { .. } => "egu-pm",
            FlowKind::Primed => "primed",
            FlowKind::Adagrad { .. } => "adagrad",
            FlowKind::Burg => "burg",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            FlowKind::EguPm { beta } if !(beta > 0.0) => {
                Err(Error::invalid("beta", format!("must be > 0, got {beta}")))
            }
            FlowKind::Adagrad { beta, eps } => {
                if !(beta > 0.0) {
                    return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
                }
                if !(eps > 0.0) {
                    return Err(Error::invalid("eps", format!("must be > 0, got {eps}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Integration constants of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coordinate {
    /// Stationary coordinate.
    Fixed,
    /// Exponential relaxation at rate `rate`.
    Linear { rate: f64 },
    /// EGU, `w = w_ls/(1 + e^{−2(w_ls·t + c)})`.
    EguTanh { c: f64 },
    /// EGU with `w_ls < 0 < w0`: `w = w_ls·E/(E − 1)`, `E = e^{2(w_ls·t + c)}`.
    EguCoth { c: f64 },
    /// EGU with `w_ls = 0`: `w = w0/(1 + 2w0·t)`.
    EguDecay,
    /// EGU±: `sinh`-offset `tau0` and direction `s`, in units where `2β = 1`.
    EguPm { tau0: f64, s: f64 },
    /// Adagrad: `k`, `ℓ`, and `k·ℓ − 1` kept separately for precision.
    Adagrad { k: f64, ell: f64, shift0: f64, sign: f64 },
    /// Burg: `y = w_ls/w0 − 1`; `b` is defined only when `y > 0`.
    Burg { y: f64, b: Option<f64> },
}

/// A closed-form trajectory with per-coordinate constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub kind: FlowKind,
    pub w_ls: Vec<f64>,
    pub w0: Vec<f64>,
    pub coords: Vec<Coordinate>,
}

impl FlowParams {
    pub fn new(kind: FlowKind, w_ls: &[f64], w0: &[f64]) -> Result<Self> {
        check_dim(w_ls.len(), w0.len())?;
        kind.validate()?;
        let coords = w_ls
            .iter()
            .zip(w0)
            .enumerate()
            .map(|(i, (&l, &x))| coordinate(kind, i, l, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowParams {
            kind,
            w_ls: w_ls.to_vec(),
            w0: w0.to_vec(),
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.w_ls.len()
    }

    /// Weights at time `t ≥ 0`.
    pub fn at(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::invalid("t", format!("must be >= 0, got {t}")));
        }
        (0..self.dim()).map(|i| self.coordinate_at(i, t)).collect()
    }

    fn coordinate_at(&self, i: usize, t: f64) -> Result<f64> {
        let (l, x0) = (self.w_ls[i], self.w0[i]);
        Ok(match self.coords[i] {
            Coordinate::Fixed => x0,
            Coordinate::Linear { rate } => l + (x0 - l) * (-rate * t).exp(),
            Coordinate::EguTanh { c } => l / (1.0 + (-2.0 * (l * t + c)).exp()),
            Coordinate::EguCoth { c } => {
                let u2 = 2.0 * (l * t + c);
                l * u2.exp() / u2.exp_m1()
            }
            Coordinate::EguDecay => x0 / (1.0 + 2.0 * x0 * t),
            Coordinate::EguPm { tau0, s } => {
                let FlowKind::EguPm { beta } = self.kind else { unreachable!() };
                let a = 2.0 * beta;
                let z = l / a;
                let tau = tau0 + 2.0 * a * t * s * (z * z + 1.0).sqrt();
                // w = (z·sinh τ + 1)/(sinh τ − z), rewritten to avoid cancellation.
                a * (z + (1.0 + z * z) / (tau.sinh() - z))
            }
            Coordinate::Adagrad { k, shift0, sign, .. } => {
                let FlowKind::Adagrad { beta, .. } = self.kind else { unreachable!() };
                let w = adagrad_lambert(k * t + shift0, i)?;
                let a = 4.0 / k;
                l - sign * ((2.0 / beta) * a * (-w)).sqrt()
            }
            Coordinate::Burg { y, .. } => {
                let w = if y > 0.0 {
                    lambert_w0_exp(y.ln() + y - 2.0 * l * l * t)?
                } else {
                    lambert_w0(y * y.exp() * (-2.0 * l * l * t).exp())?
                };
                l / (w + 1.0)
            }
        })
    }

    /// Adagrad accumulator `G(t)`; `None` for other flows.
    pub fn adagrad_accumulator_at(&self, t: f64) -> Result<Option<Vec<f64>>> {
        let FlowKind::Adagrad { eps, .. } = self.kind else {
            return Ok(None);
        };
        let mut out = Vec::with_capacity(self.dim());
        for (i, c) in self.coords.iter().enumerate() {
            out.push(match *c {
                Coordinate::Adagrad { k, shift0, .. } => {
                    let r = 4.0 / k * (1.0 + adagrad_lambert(k * t + shift0, i)?);
                    r * r
                }
                _ => eps,
            });
        }
        Ok(Some(out))
    }
}

/// `W(−e^{−(1+δ)})` with the consistency check on the sign of `δ`.
fn adagrad_lambert(delta: f64, coordinate: usize) -> Result<f64> {
    if delta < -1e-12 {
        return Err(Error::NumericConsistency(format!(
            "adagrad lambert argument below -1/e on coordinate {coordinate} (offset {delta:e})"
        )));
    }
    lambert_w0_branch(delta.max(0.0))
}

fn coordinate(kind: FlowKind, i: usize, l: f64, x0: f64) -> Result<Coordinate> {
    if !l.is_finite() || !x0.is_finite() {
        return Err(Error::invalid("w0", "flow inputs must be finite"));
    }
    Ok(match kind {
        FlowKind::Gd => Coordinate::Linear { rate: 2.0 },
        FlowKind::Primed => Coordinate::Linear { rate: 2.0 * l * l },
        FlowKind::Egu => {
            if !(x0 > 0.0) {
                return Err(Error::Domain(format!(
                    "egu flow needs positive start, coordinate {i} is {x0}"
                )));
            }
            if l == 0.0 {
                Coordinate::EguDecay
            } else if l < 0.0 {
                Coordinate::EguCoth {
                    c: 0.5 * (x0 / (x0 - l)).ln(),
                }
            } else if x0 == l {
                Coordinate::Fixed
            } else if x0 < l {
                Coordinate::EguTanh {
                    c: (2.0 * x0 / l - 1.0).atanh(),
                }
            } else {
                return Err(Error::Branch {
                    coordinate: i,
                    detail: format!("egu start {x0} lies outside (0, {l})"),
                });
            }
        }
        FlowKind::EguPm { beta } => {
            if x0 == l {
                Coordinate::Fixed
            } else {
                let a = 2.0 * beta;
                let (z, z0) = (l / a, x0 / a);
                Coordinate::EguPm {
                    tau0: ((1.0 + z * z0) / (z0 - z)).asinh(),
                    s: (z0 - z).signum(),
                }
            }
        }
        FlowKind::Adagrad { beta, eps } => {
            let d0 = l - x0;
            if d0 == 0.0 {
                Coordinate::Fixed
            } else {
                let root_eps = eps.sqrt();
                let k = 8.0 / (beta * d0 * d0 + 2.0 * root_eps);
                let u = k * root_eps / 4.0;
                let ell = 1.0 / k - root_eps / 4.0 - (-u).ln_1p() / k;
                // k·ℓ − 1 = −u − ln(1 − u)
                let shift0 = -v_plus_log1m(u);
                Coordinate::Adagrad {
                    k,
                    ell,
                    shift0,
                    sign: d0.signum(),
                }
            }
        }
        FlowKind::Burg => {
            if !(x0 > 0.0) || !(l > 0.0) {
                return Err(Error::Domain(format!(
                    "burg flow needs positive start and target, coordinate {i} has w0 = {x0}, w_ls = {l}"
                )));
            }
            let y = l / x0 - 1.0;
            if y == 0.0 {
                Coordinate::Fixed
            } else {
                let b = (y > 0.0).then(|| (y.ln() + y) / (2.0 * l * l));
                Coordinate::Burg { y, b }
            }
        }
    })
}

fn check_kind(params: &FlowParams, want: &str) -> Result<()> {
    if params.kind.name() == want {
        Ok(())
    } else {
        Err(Error::invalid("params", format!("expected {want} flow, got {}", params.kind.name())))
    }
}

pub fn egu_flow_at(params: &FlowParams, t: f64) -> Result<Vec<f64>> {
    check_kind(params, "egu")?;
    params.at(t)
}

pub fn egu_pm_flow_at(params: &FlowParams, t: f64) -> Result<Vec<f64>> {
    check_kind(params, "egu-pm")?;
    params.at(t)
}

pub fn adagrad_flow_at(params: &FlowParams, t: f64) -> Result<Vec<f64>> {
    check_kind(params, "adagrad")?;
    params.at(t)
}

pub fn gd_flow_at(w_ls: &[f64], w0: &[f64], t: f64) -> Result<Vec<f64>> {
    FlowParams::new(FlowKind::Gd, w_ls, w0)?.at(t)
}

pub fn primed_flow_at(w_ls: &[f64], w0: &[f64], t: f64) -> Result<Vec<f64>> {
    FlowParams::new(FlowKind::Primed, w_ls, w0)?.at(t)
}

pub fn burg_flow_at(w_ls: &[f64], w0: &[f64], t: f64) -> Result<Vec<f64>> {
    FlowParams::new(FlowKind::Burg, w_ls, w0)?.at(t)
}

/// The flow's ODE. Adagrad carries `(w, G)`; every other flow carries `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOde {
    pub kind: FlowKind,
    pub w_ls: Vec<f64>,
}

impl FlowOde {
    pub fn new(kind: FlowKind, w_ls: &[f64]) -> Self {
        FlowOde {
            kind,
            w_ls: w_ls.to_vec(),
        }
    }

    pub fn initial_state(&self, w0: &[f64]) -> Vec<f64> {
        let mut x = w0.to_vec();
        if let FlowKind::Adagrad { eps, .. } = self.kind {
            x.extend(std::iter::repeat_n(eps, w0.len()));
        }
        x
    }
}

impl OdeSystem for FlowOde {
    fn dim(&self) -> usize {
        match self.kind {
            FlowKind::Adagrad { .. } => 2 * self.w_ls.len(),
            _ => self.w_ls.len(),
        }
    }

    fn derivative(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.w_ls.len();
        for i in 0..d {
            let (w, l) = (x[i], self.w_ls[i]);
            let r = l - w;
            let factor = match self.kind {
                FlowKind::Gd => 1.0,
                FlowKind::Egu => w,
                FlowKind::EguPm { beta } => (w * w + 4.0 * beta * beta).sqrt(),
                FlowKind::Primed => l * l,
                FlowKind::Burg => w * w,
                FlowKind::Adagrad { beta, .. } => {
                    out[d + i] = 4.0 * beta * r * r;
                    1.0 / x[d + i].sqrt()
                }
            };
            out[i] = 2.0 * r * factor;
        }
    }
}

/// Spindly network flow `u̇ = −∇L⊙v`, `v̇ = −∇L⊙u` with state `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpindlyOde {
    pub w_ls: Vec<f64>,
}

impl OdeSystem for SpindlyOde {
    fn dim(&self) -> usize {
        2 * self.w_ls.len()
    }

    fn derivative(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.w_ls.len();
        for i in 0..d {
            let (u, v) = (x[i], x[d + i]);
            let g = 2.0 * (u * v - self.w_ls[i]);
            out[i] = -g * v;
            out[d + i] = -g * u;
        }
    }
}

const MIN_STEPS: usize = 16;
const MAX_STEPS: usize = 1 << 14;
/// Geometric refinement levels toward `t = 0` on the first segment.
const GEOMETRIC_LEVELS: i32 = 40;

/// Integrates `sys` from `x0` and returns the state at each of the sorted
/// `times`. Steps per segment are doubled until consecutive answers agree to
/// `tol` in max-norm. The first segment is split into geometrically shrinking
/// pieces toward zero, which resolves fast initial transients such as the
/// Adagrad accumulator starting at `ε`.
pub fn rk4_reference<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    times: &[f64],
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    check_dim(sys.dim(), x0.len())?;
    if times.windows(2).any(|w| !(w[0] <= w[1])) || times.first().is_some_and(|t| !(*t >= 0.0)) {
        return Err(Error::invalid("times", "must be sorted and non-negative"));
    }
    let mut segments: Vec<(f64, Option<usize>)> = Vec::new();
    let mut prev = 0.0;
    for (idx, &t) in times.iter().enumerate() {
        if prev == 0.0 && t > 0.0 {
            for j in (1..=GEOMETRIC_LEVELS).rev() {
                segments.push((t * 2f64.powi(-j), None));
            }
        }
        segments.push((t, Some(idx)));
        prev = t;
    }

    let run = |steps: usize| -> Result<Vec<Vec<f64>>> {
        let mut x = x0.to_vec();
        let mut t = 0.0;
        let mut out = vec![Vec::new(); times.len()];
        for &(t_next, idx) in &segments {
            if t_next > t {
                x = rk4_endpoint(sys, &x, t_next - t, steps)?;
                t = t_next;
            }
            if let Some(i) = idx {
                out[i] = x.clone();
            }
        }
        Ok(out)
    };

    let mut steps = MIN_STEPS;
    let mut previous = run(steps)?;
    while steps < MAX_STEPS {
        steps *= 2;
        let current = run(steps)?;
        let diff = previous
            .iter()
            .zip(&current)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        if diff <= tol {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::IterationFailure {
        routine: "rk4 reference refinement",
        iterations: steps,
    })
}

/// Converged RK4 weights of a flow at the given times.
pub fn flow_reference(kind: FlowKind, w_ls: &[f64], w0: &[f64], times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    check_dim(w_ls.len(), w0.len())?;
    let sys = FlowOde::new(kind, w_ls);
    let states = rk4_reference(&sys, &sys.initial_state(w0), times, tol)?;
    Ok(states.into_iter().map(|mut s| {
        s.truncate(w_ls.len());
        s
    }).collect())
}

/// Family of equivalent descriptions of a modified gradient flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerSpec {
    /// `P = Diag(w)`, `f(w) = log w`, `w = (ŵ/2)²`, `Γ = Diag(w)⁻¹`.
    Egu,
    /// Everything is the identity.
    Euclidean,
}

impl PreconditionerSpec {
    pub fn preconditioner(&self, w: &[f64]) -> Matrix {
        match self {
            PreconditionerSpec::Egu => Matrix::diagonal(w),
            PreconditionerSpec::Euclidean => Matrix::identity(w.len()),
        }
    }

    pub fn mirror(&self, w: &[f64]) -> Vec<f64> {
        match self {
            PreconditionerSpec::Egu => w.iter().map(|v| v.ln()).collect(),
            PreconditionerSpec::Euclidean => w.to_vec(),
        }
    }

    pub fn mirror_inverse(&self, dual: &[f64]) -> Vec<f64> {
        match self {
            PreconditionerSpec::Egu => dual.iter().map(|v| v.exp()).collect(),
            PreconditionerSpec::Euclidean => dual.to_vec(),
        }
    }

    /// `ŵ = g(w)`.
    pub fn reparam(&self, w: &[f64]) -> Vec<f64> {
        match self {
            PreconditionerSpec::Egu => w.iter().map(|v| 2.0 * v.sqrt()).collect(),
            PreconditionerSpec::Euclidean => w.to_vec(),
        }
    }

    /// `w = g⁻¹(ŵ)`.
    pub fn reparam_inverse(&self, hat: &[f64]) -> Vec<f64> {
        match self {
            PreconditionerSpec::Egu => hat.iter().map(|v| (v / 2.0).powi(2)).collect(),
            PreconditionerSpec::Euclidean => hat.to_vec(),
        }
    }

    pub fn metric(&self, w: &[f64]) -> Matrix {
        match self {
            PreconditionerSpec::Egu => Matrix::diagonal(&w.iter().map(|v| 1.0 / v).collect::<Vec<_>>()),
            PreconditionerSpec::Euclidean => Matrix::identity(w.len()),
        }
    }
}

/// Central finite-difference step for the Jacobian checks.
pub const FD_STEP: f64 = 1e-6;

fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, at: &[f64]) -> Matrix {
    let n = at.len();
    let mut jac = Matrix::zeros(n, n);
    let mut x = at.to_vec();
    for j in 0..n {
        x[j] = at[j] + FD_STEP;
        let hi = f(&x);
        x[j] = at[j] - FD_STEP;
        let lo = f(&x);
        x[j] = at[j];
        for i in 0..n {
            jac[(i, j)] = (hi[i] - lo[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}

fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = cholesky_solve(a, &e)?;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

/// Spindly-versus-EGU comparison: `u = v = √w0`, compared on `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpindlyCase {
    pub w_ls: Vec<f64>,
    pub w0: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub points: usize,
    /// Largest entry of `|P − JJᵀ|`, `|P − ∂w/∂w̃|`, `|P − Γ⁻¹|` over all points.
    pub jacobian_mismatch: f64,
    /// Largest `|w_spindly(t) − w_egu(2t)|` over the case's grid.
    pub spindly_deviation: Option<f64>,
}

/// Checks `P = (∂w/∂ŵ)(∂w/∂ŵ)ᵀ = ∂w/∂w̃ = Γ⁻¹` by central differences at each
/// point and, when a case is given, that the spindly flow started at
/// `u = v` runs the EGU flow at twice the speed.
pub fn check_equivalences(
    spec: PreconditionerSpec,
    points: &[Vec<f64>],
    spindly: Option<&SpindlyCase>,
) -> Result<EquivalenceReport> {
    let mut mismatch = 0.0f64;
    for (k, w) in points.iter().enumerate() {
        if let Some(i) = w.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Domain(format!(
                "sample point {k} has non-positive coordinate {i}"
            )));
        }
        let p = spec.preconditioner(w);
        let mirror_jac = fd_jacobian(|x| spec.mirror_inverse(x), &spec.mirror(w));
        let j = fd_jacobian(|x| spec.reparam_inverse(x), &spec.reparam(w));
        let jjt = j.matmul_transposed(&j)?;
        let metric_inv = inverse_spd(&spec.metric(w))?;
        for other in [&mirror_jac, &jjt, &metric_inv] {
            mismatch = mismatch.max(p.max_abs_diff(other));
        }
    }
    let spindly_deviation = match spindly {
        Some(case) => Some(spindly_egu_deviation(case)?),
        None => None,
    };
    Ok(EquivalenceReport {
        points: points.len(),
        jacobian_mismatch: mismatch,
        spindly_deviation,
    })
}

fn spindly_egu_deviation(case: &SpindlyCase) -> Result<f64> {
    let d = case.w_ls.len();
    check_dim(d, case.w0.len())?;
    let egu = FlowParams::new(FlowKind::Egu, &case.w_ls, &case.w0)?;
    let sys = SpindlyOde {
        w_ls: case.w_ls.clone(),
    };
    let root: Vec<f64> = case.w0.iter().map(|v| v.sqrt()).collect();
    let x0: Vec<f64> = root.iter().chain(&root).copied().collect();
    let states = rk4_reference(&sys, &x0, &case.times, 1e-12)?;
    let mut dev = 0.0f64;
    for (state, &t) in states.iter().zip(&case.times) {
        let closed = egu.at(2.0 * t)?;
        for i in 0..d {
            dev = dev.max((state[i] * state[d + i] - closed[i]).abs());
        }
    }
    Ok(dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Egu,
    Euclidean,
}

/// Diagonal metric tensor at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub w1: f64,
    pub w2: f64,
    pub g11: f64,
    pub g22: f64,
}

/// Tabulates the 2-d metric on a `resolution × resolution` grid over
/// `[lo1, hi1] × [lo2, hi2]`, first axis outermost.
pub fn metric_grid(metric: MetricKind, bounds: [(f64, f64); 2], resolution: usize) -> Result<Vec<MetricSample>> {
    if resolution == 0 {
        return Err(Error::invalid("resolution", "must be at least 1"));
    }
    for &(lo, hi) in &bounds {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("box", format!("invalid interval [{lo}, {hi}]")));
        }
        if metric == MetricKind::Egu && !(lo > 0.0) {
            return Err(Error::Domain(format!(
                "egu metric needs a box inside the positive quadrant, got lower edge {lo}"
            )));
        }
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if resolution == 1 {
            vec![lo]
        } else {
            (0..resolution)
                .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
                .collect()
        }
    };
    let mut out = Vec::with_capacity(resolution * resolution);
    for &w1 in &axis(bounds[0]) {
        for &w2 in &axis(bounds[1]) {
            let (g11, g22) = match metric {
                MetricKind::Egu => (1.0 / w1, 1.0 / w2),
                MetricKind::Euclidean => (1.0, 1.0),
            };
            out.push(MetricSample { w1, w2, g11, g22 });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ode::rk4_integrate;

    fn scalar(kind: FlowKind, l: f64, x0: f64, t: f64) -> f64 {
        FlowParams::new(kind, &[l], &[x0]).unwrap().at(t).unwrap()[0]
    }

    fn rk4_scalar(kind: FlowKind, l: f64, x0: f64, t: f64) -> f64 {
        flow_reference(kind, &[l], &[x0], &[t], 1e-12).unwrap()[0][0]
    }

    #[test]
    fn egu_values() {
        assert!((scalar(FlowKind::Egu, 1.0, 0.5, 0.0) - 0.5).abs() < 1e-15);
        assert!((scalar(FlowKind::Egu, 1.0, 0.5, 1e3) - 1.0).abs() < 1e-9);
        let v = scalar(FlowKind::Egu, 1.0, 0.5, 1.0);
        assert!((v - 0.5 * (1.0 + 1f64.tanh())).abs() < 1e-15);
        assert!((v - rk4_scalar(FlowKind::Egu, 1.0, 0.5, 1.0)).abs() < 1e-6);
    }

    #[test]
    fn egu_degenerate_branches() {
        assert_eq!(scalar(FlowKind::Egu, 0.0, 0.4, 2.0), 0.4 / (1.0 + 1.6));
        let neg = scalar(FlowKind::Egu, -0.5, 0.3, 1.5);
        assert!((neg - rk4_scalar(FlowKind::Egu, -0.5, 0.3, 1.5)).abs() < 1e-9);
        assert!((scalar(FlowKind::Egu, -0.5, 0.3, 0.0) - 0.3).abs() < 1e-15);
        assert!(matches!(
            FlowParams::new(FlowKind::Egu, &[1.0, 1.0], &[0.5, 1.5]),
            Err(Error::Branch { coordinate: 1, .. })
        ));
        assert!(FlowParams::new(FlowKind::Egu, &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn egu_pm_matches_rk4() {
        let k = FlowKind::EguPm { beta: 0.5 };
        assert!((scalar(k, 1.0, 0.0, 0.0)).abs() < 1e-15);
        assert!((scalar(k, 1.0, 0.0, 0.5) - rk4_scalar(k, 1.0, 0.0, 0.5)).abs() < 1e-6);
        assert!((scalar(k, 1.0, 0.0, 1e3) - 1.0).abs() < 1e-12);
        let small = FlowKind::EguPm { beta: 1.0 / 64.0 };
        for &(l, x0) in &[(0.9, 0.0), (-0.7, 0.3), (0.02, -0.5)] {
            let a = scalar(small, l, x0, 2.0);
            assert!((a - rk4_scalar(small, l, x0, 2.0)).abs() < 1e-8, "{l} {x0}");
        }
    }

    #[test]
    fn primed_and_gd_values() {
        let e = 1.0 - (-1.0f64).exp();
        assert!((primed_flow_at(&[1.0], &[0.0], 0.5).unwrap()[0] - e).abs() < 1e-15);
        assert_eq!(primed_flow_at(&[0.0], &[0.7], 3.0).unwrap(), vec![0.7]);
        let g = gd_flow_at(&[1.0, 0.0], &[0.0, 0.0], 0.5).unwrap();
        assert!((g[0] - e).abs() < 1e-15 && g[1] == 0.0);
    }

    #[test]
    fn adagrad_initial_condition_and_oracle() {
        let k = FlowKind::Adagrad { beta: 1.0, eps: 1e-8 };
        let p = FlowParams::new(k, &[1.0, -0.4], &[0.0, 0.2]).unwrap();
        let w = p.at(0.0).unwrap();
        assert!((w[0]).abs() < 1e-8 && (w[1] - 0.2).abs() < 1e-8);
        let g = p.adagrad_accumulator_at(0.0).unwrap().unwrap();
        assert!((g[0] - 1e-8).abs() < 1e-14);
        let v = p.at(1.0).unwrap()[0];
        assert!((v - rk4_scalar(k, 1.0, 0.0, 1.0)).abs() < 1e-5);
        assert!((p.at(1e3).unwrap()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn burg_values() {
        assert!((burg_flow_at(&[1.0], &[0.1], 0.0).unwrap()[0] - 0.1).abs() < 1e-12);
        let v = burg_flow_at(&[1.0], &[0.1], 2.0).unwrap()[0];
        assert!((v - rk4_scalar(FlowKind::Burg, 1.0, 0.1, 2.0)).abs() < 1e-6);
        assert!((burg_flow_at(&[1.0], &[0.1], 1e3).unwrap()[0] - 1.0).abs() < 1e-9);
        let above = burg_flow_at(&[0.5], &[2.0], 1.0).unwrap()[0];
        assert!((above - rk4_scalar(FlowKind::Burg, 0.5, 2.0, 1.0)).abs() < 1e-9);
        assert!(matches!(burg_flow_at(&[1.0], &[-0.1], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn flows_satisfy_their_odes() {
        let cases = [
            (FlowKind::Gd, 0.7, -0.2),
            (FlowKind::Egu, 0.8, 0.1),
            (FlowKind::EguPm { beta: 0.1 }, -0.6, 0.4),
            (FlowKind::Primed, 1.3, 0.0),
            (FlowKind::Burg, 0.9, 0.2),
        ];
        for (kind, l, x0) in cases {
            let p = FlowParams::new(kind, &[l], &[x0]).unwrap();
            let sys = FlowOde::new(kind, &[l]);
            for &t in &[0.1, 0.7, 2.3] {
                let h = 1e-5;
                let fd = (p.at(t + h).unwrap()[0] - p.at(t - h).unwrap()[0]) / (2.0 * h);
                let mut rhs = [0.0];
                sys.derivative(t, &p.at(t).unwrap(), &mut rhs);
                assert!((fd - rhs[0]).abs() <= 1e-5 * rhs[0].abs().max(1e-3), "{kind:?} t={t}");
            }
        }
    }

    #[test]
    fn equivalence_identities() {
        let r = check_equivalences(PreconditionerSpec::Egu, &[vec![1.0, 1.0]], None).unwrap();
        assert!(r.jacobian_mismatch < 1e-8);
        let r = check_equivalences(PreconditionerSpec::Euclidean, &[vec![0.3, 4.0]], None).unwrap();
        assert!(r.jacobian_mismatch < 1e-8);
        assert!(check_equivalences(PreconditionerSpec::Egu, &[vec![1.0, -1.0]], None).is_err());
    }

    #[test]
    fn spindly_runs_egu_at_double_speed() {
        let case = SpindlyCase {
            w_ls: vec![1.0, 0.3],
            w0: vec![0.1, 0.05],
            times: (0..=30).map(|i| i as f64 * 0.1).collect(),
        };
        let r = check_equivalences(PreconditionerSpec::Egu, &[], Some(&case)).unwrap();
        assert!(r.spindly_deviation.unwrap() < 1e-8);
    }

    #[test]
    fn metric_grid_values() {
        let g = metric_grid(MetricKind::Egu, [(0.5, 2.0), (0.5, 2.0)], 2).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[1], MetricSample { w1: 0.5, w2: 2.0, g11: 2.0, g22: 0.5 });
        let e = metric_grid(MetricKind::Euclidean, [(-1.0, 1.0), (-1.0, 1.0)], 3).unwrap();
        assert!(e.iter().all(|s| s.g11 == 1.0 && s.g22 == 1.0));
        assert!(metric_grid(MetricKind::Egu, [(0.0, 1.0), (0.5, 1.0)], 2).is_err());
    }

    #[test]
    fn rk4_reference_records_requested_times() {
        let sys = FlowOde::new(FlowKind::Gd, &[1.0]);
        let out = rk4_reference(&sys, &[0.0], &[0.0, 0.5], 1e-13).unwrap();
        assert_eq!(out[0], vec![0.0]);
        assert!((out[1][0] - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let path = rk4_integrate(&sys, &[0.0], 0.5, 64).unwrap();
        assert!((path.last().unwrap().1[0] - out[1][0]).abs() < 1e-9);
    }
}
