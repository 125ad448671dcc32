//! The stacked-rotation regression problem, its least-squares hub, and the
//! closed-form risk bounds.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::{cholesky_solve, sample_haar_orthogonal};
use crate::numerics::matrix::{dot, norm_sq, Matrix};
use crate::numerics::rng::{sample_gaussian_vector, Rng};

/// Tolerance for accepting an explicit rotation as orthogonal.
pub const ROTATION_TOL: f64 = 1e-8;

/// How the orthogonal factor `V` of the design is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Rotation {
    HaarRandom,
    Identity,
    Explicit(Matrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
    pub rotation: Rotation,
    /// Per-column scaling of the design; `None` means all ones.
    pub column_scale: Option<Vec<f64>>,
}

impl ProblemConfig {
    pub fn new(d: usize, m: usize, sigma: f64, seed: u64) -> Self {
        ProblemConfig {
            d,
            m,
            sigma,
            seed,
            rotation: Rotation::HaarRandom,
            column_scale: None,
        }
    }

    pub fn with_rotation(mut self, rotation: Rotation) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn with_column_scale(mut self, scale: Vec<f64>) -> Self {
        self.column_scale = Some(scale);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if let Some(scale) = &self.column_scale {
            check_dim(self.d, scale.len())?;
            if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(Error::invalid("column_scale", "entries must be finite and positive"));
            }
        }
        if let Rotation::Explicit(v) = &self.rotation {
            check_dim(self.d, v.rows())?;
            check_dim(self.d, v.cols())?;
        }
        Ok(())
    }

    fn is_isotropic(&self) -> bool {
        self.column_scale
            .as_ref()
            .is_none_or(|s| s.iter().all(|&c| c == 1.0))
    }
}

/// A sampled problem instance: `X` is `m` stacked copies of `H = √d·V·Diag(scale)`
/// and `y = X·e₁ + ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Orthogonal factor of one block.
    pub v: Matrix,
    /// One `d × d` block of `X`.
    pub h: Matrix,
    /// Weight vector the labels were generated from, in this dataset's coordinates.
    pub target: Vec<f64>,
    pub sigma: f64,
    pub m: usize,
    /// Label noise `ξ`, kept for diagnostics.
    pub noise: Vec<f64>,
    /// `XᵀX = md·I` by construction.
    pub isotropic: bool,
}

impl Dataset {
    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Number of training examples `n = md`.
    pub fn n(&self) -> usize {
        self.x.rows()
    }
}

/// Samples `V` from its own sub-stream and the noise from another, so the
/// noise draw does not depend on the rotation choice.
pub fn build_dataset(cfg: &ProblemConfig, rng: &Rng) -> Result<Dataset> {
    cfg.validate()?;
    let d = cfg.d;
    let v = match &cfg.rotation {
        Rotation::HaarRandom => sample_haar_orthogonal(&mut rng.substream(0), d)?,
        Rotation::Identity => Matrix::identity(d),
        Rotation::Explicit(v) => {
            let deviation = v.orthogonality_deviation();
            if !(deviation <= ROTATION_TOL) {
                return Err(Error::InvalidRotation { deviation });
            }
            v.clone()
        }
    };
    let ones = vec![1.0; d];
    let scale = cfg.column_scale.as_deref().unwrap_or(&ones);
    let h = v.scaled((d as f64).sqrt()).scale_columns(scale)?;
    let x = h.vstack_copies(cfg.m);
    let mut target = vec![0.0; d];
    target[0] = 1.0;
    let noise = sample_gaussian_vector(&mut rng.substream(1), x.rows(), 0.0, cfg.sigma)?;
    let y = labels(&x, &target, &noise)?;
    Ok(Dataset {
        x,
        y,
        v,
        h,
        target,
        sigma: cfg.sigma,
        m: cfg.m,
        noise,
        isotropic: cfg.is_isotropic(),
    })
}

pub(crate) fn labels(x: &Matrix, target: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    let mut y = x.matvec(target)?;
    check_dim(y.len(), noise.len())?;
    for (yi, xi) in y.iter_mut().zip(noise) {
        *yi += xi;
    }
    Ok(y)
}

/// Least-squares solution and the normalized Gram matrix when it is not a
/// multiple of the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    pub w_ls: Vec<f64>,
    /// `w_ls − e₁`.
    pub zeta: Vec<f64>,
    /// `XᵀX / n` when the design is not isotropic.
    pub gram: Option<Matrix>,
    pub n: usize,
}

impl LeastSquares {
    pub fn dim(&self) -> usize {
        self.w_ls.len()
    }

    /// Isotropic hub built directly from a known solution.
    pub fn from_w_ls(w_ls: Vec<f64>, n: usize) -> Self {
        let zeta = zeta_of(&w_ls);
        LeastSquares {
            w_ls,
            zeta,
            gram: None,
            n,
        }
    }
}

fn zeta_of(w_ls: &[f64]) -> Vec<f64> {
    let mut z = w_ls.to_vec();
    if let Some(first) = z.first_mut() {
        *first -= 1.0;
    }
    z
}

pub fn least_squares(ds: &Dataset) -> Result<LeastSquares> {
    if ds.isotropic {
        let n = ds.n() as f64;
        let w_ls: Vec<f64> = ds.x.tr_matvec(&ds.y)?.into_iter().map(|v| v / n).collect();
        return Ok(LeastSquares::from_w_ls(w_ls, ds.n()));
    }
    least_squares_xy(&ds.x, &ds.y)
}

/// General normal-equation solve for an arbitrary design.
pub fn least_squares_xy(x: &Matrix, y: &[f64]) -> Result<LeastSquares> {
    check_dim(x.rows(), y.len())?;
    let n = x.rows() as f64;
    let gram = x.gram().scaled(1.0 / n);
    let b: Vec<f64> = x.tr_matvec(y)?.into_iter().map(|v| v / n).collect();
    let w_ls = cholesky_solve(&gram, &b)?;
    Ok(LeastSquares {
        zeta: zeta_of(&w_ls),
        w_ls,
        gram: Some(gram),
        n: x.rows(),
    })
}

/// `‖w − target‖²`.
pub fn excess_risk(w: &[f64], target: &[f64]) -> f64 {
    w.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `‖X(w − target)‖² / n`, the prediction-space excess risk. Equals
/// [`excess_risk`] on isotropic designs.
pub fn prediction_risk(ds: &Dataset, w: &[f64]) -> Result<f64> {
    check_dim(ds.d(), w.len())?;
    let diff: Vec<f64> = w.iter().zip(&ds.target).map(|(a, b)| a - b).collect();
    Ok(norm_sq(&ds.h.matvec(&diff)?) / ds.h.rows() as f64)
}

/// Training loss `‖Xw − y‖² / n`.
pub fn training_loss(ds: &Dataset, w: &[f64]) -> Result<f64> {
    let r = ds.x.matvec(w)?;
    Ok(r.iter().zip(&ds.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / ds.n() as f64)
}

/// `∇L(w) = 2C(w − w_ls)`, with `C = I` on isotropic designs.
pub fn loss_gradient(w: &[f64], ls: &LeastSquares) -> Result<Vec<f64>> {
    let mut g = vec![0.0; w.len()];
    loss_gradient_into(w, ls, &mut g)?;
    Ok(g)
}

pub(crate) fn loss_gradient_into(w: &[f64], ls: &LeastSquares, out: &mut [f64]) -> Result<()> {
    check_dim(ls.dim(), w.len())?;
    match &ls.gram {
        None => {
            for ((o, &wi), &li) in out.iter_mut().zip(w).zip(&ls.w_ls) {
                *o = 2.0 * (wi - li);
            }
        }
        Some(c) => {
            let diff: Vec<f64> = w.iter().zip(&ls.w_ls).map(|(a, b)| a - b).collect();
            for (i, o) in out.iter_mut().enumerate() {
                *o = 2.0 * dot(c.row(i), &diff);
            }
        }
    }
    Ok(())
}

/// Closed-form lower and upper bounds, with their inputs echoed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub eta: f64,
    pub delta: f64,
    pub invariant_lower: f64,
    pub iid_init_lower: f64,
    pub eg_pm_one_step_upper: f64,
    pub approx_egu_pm_upper: f64,
    pub spindly_upper: f64,
    pub priming_upper: f64,
}

/// `exp(-a / σ²)` with the `σ = 0` limit taken as 0.
fn noise_exp(a: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        (-a / (sigma * sigma)).exp()
    }
}

pub fn evaluate_bounds(d: usize, m: usize, sigma: f64, eta: f64, delta: f64) -> Result<BoundsReport> {
    if d < 2 {
        return Err(Error::invalid("d", format!("must be at least 2, got {d}")));
    }
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid("eta", format!("must be finite and > 0, got {eta}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let df = d as f64;
    let mf = m as f64;
    let md = mf * df;
    let s2 = sigma * sigma;
    let log_term = (2.0 * df / delta).ln();
    let sparse_tail = (-(8.0 / 3.0) * df.sqrt() + 2.0 * df.ln()).exp();

    let invariant_lower = (df - 1.0) / df * s2 / (s2 + mf);
    let iid_init_lower = if sigma == 0.0 {
        0.0
    } else {
        (s2 / (std::f64::consts::E * (s2 + mf / 2.0))).powf(df / (df - 1.0))
    };
    let eg_pm_one_step_upper = 2.0 * df * (-eta).exp() + 8.0 * df * noise_exp(md / 32.0, sigma);
    let approx_egu_pm_upper = 10.0 * s2 * log_term / md + 9.0 * sparse_tail;
    let spindly_upper = 33.0 * s2 * log_term / (4.0 * md) + 16.0 * sparse_tail;
    let priming_upper = 17.0 * s2 / md
        + 32.0 * s2 * s2 / (mf * mf * df)
        + 4.0 * sigma * noise_exp(md / 8.0, sigma) / (2.0 * std::f64::consts::PI * md).sqrt();

    Ok(BoundsReport {
        d,
        m,
        sigma,
        eta,
        delta,
        invariant_lower,
        iid_init_lower,
        eg_pm_one_step_upper,
        approx_egu_pm_upper,
        spindly_upper,
        priming_upper,
    })
}

/// Smallest `m` with `m ≥ 8σ² ln(2d/δ)`.
pub fn sparse_bound_min_copies(d: usize, sigma: f64, delta: f64) -> usize {
    (8.0 * sigma * sigma * (2.0 * d as f64 / delta).ln()).ceil().max(1.0) as usize
}

/// Hypotheses of the sparse upper bounds: `√d` integral and enough copies.
pub fn validate_sparse_bound_setting(d: usize, m: usize, sigma: f64, delta: f64) -> Result<()> {
    let r = (d as f64).sqrt().round() as usize;
    if r * r != d {
        return Err(Error::invalid("d", format!("sqrt(d) must be an integer, got d = {d}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let need = 8.0 * sigma * sigma * (2.0 * d as f64 / delta).ln();
    if (m as f64) < need {
        return Err(Error::invalid("m", format!("must be >= 8 sigma^2 ln(2d/delta) = {need:.3}, got {m}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rotation_small_case() {
        let cfg = ProblemConfig::new(2, 1, 0.0, 1).with_rotation(Rotation::Identity);
        let ds = build_dataset(&cfg, &Rng::new(1)).unwrap();
        let s = 2f64.sqrt();
        assert_eq!(ds.x, Matrix::diagonal(&[s, s]));
        assert_eq!(ds.y, vec![s, 0.0]);
    }

    #[test]
    fn stacked_gram_is_scaled_identity() {
        let ds = build_dataset(&ProblemConfig::new(4, 3, 1.0, 9), &Rng::new(9)).unwrap();
        assert_eq!(ds.x.rows(), 12);
        assert!(ds.x.gram().max_abs_diff(&Matrix::identity(4).scaled(12.0)) < 1e-8 * 12.0);
    }

    #[test]
    fn explicit_rotation_checked() {
        let bad = Matrix::from_rows(&[vec![1.0, 0.1], vec![0.0, 1.0]]).unwrap();
        let cfg = ProblemConfig::new(2, 1, 0.0, 0).with_rotation(Rotation::Explicit(bad));
        assert!(matches!(build_dataset(&cfg, &Rng::new(0)), Err(Error::InvalidRotation { .. })));
    }

    #[test]
    fn noiseless_least_squares_is_target() {
        let ds = build_dataset(&ProblemConfig::new(8, 2, 0.0, 3), &Rng::new(3)).unwrap();
        let ls = least_squares(&ds).unwrap();
        assert!(excess_risk(&ls.w_ls, &ds.target) < 1e-24);
    }

    #[test]
    fn zeta_matches_projected_noise() {
        let ds = build_dataset(&ProblemConfig::new(6, 3, 0.7, 4), &Rng::new(4)).unwrap();
        let ls = least_squares(&ds).unwrap();
        let proj = ds.x.tr_matvec(&ds.noise).unwrap();
        for (z, p) in ls.zeta.iter().zip(proj) {
            assert!((z - p / ds.n() as f64).abs() < 1e-10);
        }
        assert!((excess_risk(&ls.w_ls, &ds.target) - norm_sq(&ls.zeta)).abs() < 1e-14);
    }

    #[test]
    fn general_path_agrees_on_isotropic_data() {
        let ds = build_dataset(&ProblemConfig::new(5, 2, 1.0, 8), &Rng::new(8)).unwrap();
        let a = least_squares(&ds).unwrap();
        let b = least_squares_xy(&ds.x, &ds.y).unwrap();
        assert!(crate::numerics::matrix::max_abs_diff(&a.w_ls, &b.w_ls) < 1e-12);
    }

    #[test]
    fn gradient_against_matrix_form() {
        let ds = build_dataset(&ProblemConfig::new(4, 2, 1.0, 5), &Rng::new(5)).unwrap();
        let ls = least_squares(&ds).unwrap();
        let w = [0.3, -0.2, 0.9, 0.1];
        let g = loss_gradient(&w, &ls).unwrap();
        let r: Vec<f64> = ds.x.matvec(&w).unwrap().iter().zip(&ds.y).map(|(a, b)| a - b).collect();
        let direct = ds.x.tr_matvec(&r).unwrap();
        for (gi, di) in g.iter().zip(direct) {
            assert!((gi - 2.0 * di / ds.n() as f64).abs() < 1e-9);
        }
        assert!(loss_gradient(&ls.w_ls, &ls).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn bounds_arithmetic() {
        let b = evaluate_bounds(2, 1, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(b.invariant_lower, 0.25);
        let b = evaluate_bounds(1024, 4, 1.0, 1.0, 0.001).unwrap();
        assert!((b.invariant_lower - 1023.0 / 1024.0 * 0.2).abs() < 1e-15);
        let z = evaluate_bounds(64, 4, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(z.invariant_lower, 0.0);
        assert_eq!(z.iid_init_lower, 0.0);
        assert_eq!(z.priming_upper, 0.0);
        assert_eq!(z.eg_pm_one_step_upper, 2.0 * 64.0 * (-1.0f64).exp());
        assert!(matches!(
            evaluate_bounds(4, 1, 1.0, 1.0, 1.5),
            Err(Error::InvalidParameter { name: "delta", .. })
        ));
    }

    #[test]
    fn sparse_bound_setting() {
        let m = sparse_bound_min_copies(16, 1.0, 0.01);
        assert_eq!(m, 65);
        assert!(validate_sparse_bound_setting(16, m, 1.0, 0.01).is_ok());
        assert!(validate_sparse_bound_setting(15, m, 1.0, 0.01).is_err());
        assert!(validate_sparse_bound_setting(16, 10, 1.0, 0.01).is_err());
    }
}
