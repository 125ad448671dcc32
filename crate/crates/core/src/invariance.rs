//! Rotation-invariance harnesses: rotated problems, paired train/predict
//! comparisons, the principal-component counterexample and the anisotropic
//! two-dimensional demonstration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::{power_iteration, sample_haar_orthogonal, EigenPair};
use crate::numerics::matrix::{dot, norm, Matrix};
use crate::numerics::rng::Rng;
use crate::optimizers::{priming_solve_xy, ridge_solve_xy, run_on, Algorithm, RecordSchedule};
use crate::problem::{
    build_dataset, excess_risk, labels, least_squares, least_squares_xy, Dataset, ProblemConfig, ROTATION_TOL,
};

/// Power-iteration settings for the principal-component learner.
pub const PC_TOL: f64 = 1e-12;
pub const PC_MAX_ITER: usize = 10_000;

/// A learning rule that maps a training set to a weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "kebab-case")]
pub enum Learner {
    Iterative { algorithm: Algorithm, steps: usize },
    Ridge { lambda: f64 },
    Priming { lambda: f64 },
    /// Top principal component of `XᵀX` used directly as the weight vector.
    PcWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerHandle {
    pub learner: Learner,
}

impl LearnerHandle {
    pub fn iterative(algorithm: Algorithm, steps: usize) -> Self {
        LearnerHandle {
            learner: Learner::Iterative { algorithm, steps },
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        LearnerHandle {
            learner: Learner::Ridge { lambda },
        }
    }

    pub fn priming(lambda: f64) -> Self {
        LearnerHandle {
            learner: Learner::Priming { lambda },
        }
    }

    pub fn pc_weight() -> Self {
        LearnerHandle {
            learner: Learner::PcWeight,
        }
    }

    pub fn name(&self) -> String {
        match &self.learner {
            Learner::Iterative { algorithm, .. } => algorithm.name().to_string(),
            Learner::Ridge { .. } => "ridge".into(),
            Learner::Priming { .. } => "priming".into(),
            Learner::PcWeight => "pc-weight".into(),
        }
    }

    pub fn train(&self, x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
        match &self.learner {
            Learner::Iterative { algorithm, steps } => {
                let ls = least_squares_xy(x, y)?;
                let target = vec![0.0; x.cols()];
                let tr = run_on(algorithm, &ls, &target, *steps, &RecordSchedule::Steps(Vec::new()))?;
                Ok(tr.last().w.clone())
            }
            Learner::Ridge { lambda } => ridge_solve_xy(x, y, *lambda),
            Learner::Priming { lambda } => priming_solve_xy(x, y, *lambda),
            Learner::PcWeight => Ok(power_iteration(&x.gram(), PC_TOL, PC_MAX_ITER)?.vector),
        }
    }

    pub fn predict(w: &[f64], x: &[f64]) -> f64 {
        dot(w, x)
    }
}

fn check_rotation(u: &Matrix, d: usize) -> Result<()> {
    check_dim(d, u.rows())?;
    check_dim(d, u.cols())?;
    let deviation = u.orthogonality_deviation();
    if deviation <= ROTATION_TOL {
        Ok(())
    } else {
        Err(Error::InvalidRotation { deviation })
    }
}

/// `X → XUᵀ` with labels unchanged; the equivalent target becomes `U·target`.
pub fn rotate_problem(ds: &Dataset, u: &Matrix) -> Result<Dataset> {
    check_rotation(u, ds.d())?;
    Ok(Dataset {
        x: ds.x.matmul_transposed(u)?,
        y: ds.y.clone(),
        v: ds.v.matmul_transposed(u)?,
        h: ds.h.matmul_transposed(u)?,
        target: u.matvec(&ds.target)?,
        sigma: ds.sigma,
        m: ds.m,
        noise: ds.noise.clone(),
        isotropic: ds.isotropic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub learner: String,
    /// Largest prediction deviation for each rotation.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub invariant: bool,
}

impl InvarianceReport {
    pub fn rotations(&self) -> usize {
        self.deviations.len()
    }
}

/// Unit vectors whose direction is uniform on the sphere.
fn random_unit_vectors(rng: &Rng, d: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut r = rng.substream(i as u64);
            let v: Vec<f64> = (0..d).map(|_| r.standard_normal()).collect();
            let n = norm(&v);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Test inputs used by the invariance check: the rows of one block plus eight
/// random unit vectors.
pub fn invariance_test_points(ds: &Dataset, rng: &Rng) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = (0..ds.h.rows()).map(|i| ds.h.row(i).to_vec()).collect();
    points.extend(random_unit_vectors(&rng.substream(0x7e57), ds.d(), 8));
    points
}

/// Compares `predict(train(XUᵀ, y), Ux)` with `predict(train(X, y), x)` over
/// `rotations` Haar-random `U`.
pub fn rotation_invariance_check(
    learner: &LearnerHandle,
    ds: &Dataset,
    rotations: usize,
    tol: f64,
    rng: &Rng,
) -> Result<InvarianceReport> {
    if rotations == 0 {
        return Err(Error::invalid("rotations", "must be at least 1"));
    }
    let d = ds.d();
    let points = invariance_test_points(ds, rng);
    let w = learner.train(&ds.x, &ds.y)?;
    let base: Vec<f64> = points.iter().map(|x| LearnerHandle::predict(&w, x)).collect();
    let deviations = (0..rotations)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let wrap = |e: Error| Error::Training {
                rotation: r,
                source: Box::new(e),
            };
            let u = sample_haar_orthogonal(&mut rng.substream(1_000 + r as u64), d).map_err(wrap)?;
            let xr = ds.x.matmul_transposed(&u).map_err(wrap)?;
            let wr = learner.train(&xr, &ds.y).map_err(wrap)?;
            let mut dev = 0.0f64;
            for (x, b) in points.iter().zip(&base) {
                let ux = u.matvec(x).map_err(wrap)?;
                dev = dev.max((LearnerHandle::predict(&wr, &ux) - b).abs());
            }
            Ok(dev)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(InvarianceReport {
        learner: learner.name(),
        deviations,
        max_deviation,
        tolerance: tol,
        invariant: max_deviation <= tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcReport {
    pub original_risk: f64,
    pub rotated_risk: f64,
    pub top_eigenvalue: f64,
    pub second_eigenvalue: f64,
    /// The top eigenvalue is not separated, so the learner's output is arbitrary.
    pub degenerate: bool,
    /// `|U₁₁|` of the rotation applied.
    pub u11: f64,
}

/// Spectral gap below this fraction of `λ₁` counts as degenerate.
const DEGENERATE_GAP: f64 = 1e-9;

fn second_eigenvalue(a: &Matrix, top: &EigenPair) -> Result<f64> {
    let n = a.rows();
    let mut deflated = a.clone();
    for i in 0..n {
        for j in 0..n {
            deflated[(i, j)] -= top.value * top.vector[i] * top.vector[j];
        }
    }
    Ok(power_iteration(&deflated, PC_TOL, PC_MAX_ITER)?.value)
}

/// The principal-component learner on `X = [H;…;H]·Diag(p)` with `p = (2, 1, …, 1)`.
pub fn pc_counterexample(d: usize, m: usize, sigma: f64, rng: &Rng) -> Result<PcReport> {
    let mut scale = vec![1.0; d];
    if d > 0 {
        scale[0] = 2.0;
    }
    pc_counterexample_with(d, m, sigma, &scale, rng)
}

/// As [`pc_counterexample`] with an explicit column scale `p`. The rotated
/// instance uses inputs `XUᵀ` with labels regenerated from `e₁`.
pub fn pc_counterexample_with(d: usize, m: usize, sigma: f64, scale: &[f64], rng: &Rng) -> Result<PcReport> {
    if d < 2 {
        return Err(Error::invalid("d", "must be at least 2"));
    }
    let cfg = ProblemConfig::new(d, m, sigma, rng.seed()).with_column_scale(scale.to_vec());
    let ds = build_dataset(&cfg, rng)?;
    let learner = LearnerHandle::pc_weight();

    let gram = ds.x.gram();
    let top = power_iteration(&gram, PC_TOL, PC_MAX_ITER)?;
    let second = second_eigenvalue(&gram, &top)?;
    let degenerate = top.value - second < DEGENERATE_GAP * top.value;
    let original_risk = excess_risk(&top.vector, &ds.target);

    let u = sample_haar_orthogonal(&mut rng.substream(2), d)?;
    let xr = ds.x.matmul_transposed(&u)?;
    let y_rotated = labels(&xr, &ds.target, &ds.noise)?;
    let w = learner.train(&xr, &y_rotated)?;
    // Align the sign with the target so the risk measures direction only.
    let w: Vec<f64> = if w[0] < 0.0 { w.iter().map(|v| -v).collect() } else { w };
    Ok(PcReport {
        original_risk,
        rotated_risk: excess_risk(&w, &ds.target),
        top_eigenvalue: top.value,
        second_eigenvalue: second,
        degenerate,
        u11: u[(0, 0)].abs(),
    })
}

/// Settings of the two-dimensional anisotropic demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicConfig {
    pub scale: [f64; 2],
    pub m: usize,
    pub sigma: f64,
    pub rotate_input: bool,
    pub algorithms: Vec<Algorithm>,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicRun {
    pub algorithm: String,
    pub eta: f64,
    /// Weights at every step, starting with step 0.
    pub trajectory: Vec<Vec<f64>>,
    /// `min_t ‖w_t − e₁‖`.
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropicReport {
    pub w_ls: Vec<f64>,
    pub rotation: Option<Matrix>,
    pub runs: Vec<AnisotropicRun>,
}

/// Runs each algorithm on `X = H·Diag(scale)`, optionally replaced by `XUᵀ`
/// for a Haar `U`; labels always come from `e₁`.
pub fn anisotropic_demo(cfg: &AnisotropicConfig, rng: &Rng) -> Result<AnisotropicReport> {
    if cfg.horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    let pc = ProblemConfig::new(2, cfg.m, cfg.sigma, rng.seed()).with_column_scale(cfg.scale.to_vec());
    let mut ds = build_dataset(&pc, rng)?;
    let rotation = if cfg.rotate_input {
        let u = sample_haar_orthogonal(&mut rng.substream(3), 2)?;
        ds.x = ds.x.matmul_transposed(&u)?;
        ds.h = ds.h.matmul_transposed(&u)?;
        ds.v = ds.v.matmul_transposed(&u)?;
        ds.y = labels(&ds.x, &ds.target, &ds.noise)?;
        Some(u)
    } else {
        None
    };
    let ls = least_squares(&ds)?;
    let runs = cfg
        .algorithms
        .iter()
        .map(|algo| {
            let tr = run_on(algo, &ls, &ds.target, cfg.horizon, &RecordSchedule::Every(1))?;
            Ok(AnisotropicRun {
                algorithm: algo.name().to_string(),
                eta: algo.eta(),
                min_distance: tr.min_risk.sqrt(),
                trajectory: tr.points.into_iter().map(|p| p.w).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnisotropicReport {
        w_ls: ls.w_ls,
        rotation,
        runs,
    })
}

/// Largest pointwise gap between the trajectory on the rotated problem
/// `(XUᵀ, y)` and `U` times the trajectory on `(X, y)`.
pub fn trajectory_rotation_deviation(
    algo: &Algorithm,
    ds: &Dataset,
    u: &Matrix,
    steps: usize,
) -> Result<f64> {
    let rotated = rotate_problem(ds, u)?;
    let a = run_on(algo, &least_squares(ds)?, &ds.target, steps, &RecordSchedule::Every(1))?;
    let b = run_on(algo, &least_squares(&rotated)?, &rotated.target, steps, &RecordSchedule::Every(1))?;
    let mut dev = 0.0f64;
    for (pa, pb) in a.points.iter().zip(&b.points) {
        let uw = u.matvec(&pa.w)?;
        for (x, y) in uw.iter().zip(&pb.w) {
            dev = dev.max((x - y).abs());
        }
    }
    Ok(dev)
}
