//! Fixed-step classical Runge–Kutta integration.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Autonomous or time-dependent first-order system `ẋ = f(t, x)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn derivative(&self, t: f64, state: &[f64], out: &mut [f64]);
}

/// Diagonal preconditioner `P(w)` in `ẇ = −P(w)·∇L(w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Preconditioner {
    /// Plain gradient flow.
    Identity,
    /// `P = Diag(w)`, unnormalized exponentiated gradient.
    Egu,
    /// `P = Diag(√(w² + 4β²))`.
    EguPm { beta: f64 },
    /// `P = Diag(w_ls²)`.
    Primed,
    /// `P = Diag(w²)`, Burg mirror map.
    Burg,
}

impl Preconditioner {
    pub fn diag(&self, w: f64, w_ls: f64) -> f64 {
        match *self {
            Preconditioner::Identity => 1.0,
            Preconditioner::Egu => w,
            Preconditioner::EguPm { beta } => (w * w + 4.0 * beta * beta).sqrt(),
            Preconditioner::Primed => w_ls * w_ls,
            Preconditioner::Burg => w * w,
        }
    }
}

/// Preconditioned gradient flow on the quadratic loss with `∇L = 2(w − w_ls)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSpec {
    pub w_ls: Vec<f64>,
    pub preconditioner: Preconditioner,
}

impl OdeSpec {
    pub fn new(w_ls: Vec<f64>, preconditioner: Preconditioner) -> Self {
        OdeSpec {
            w_ls,
            preconditioner,
        }
    }
}

impl OdeSystem for OdeSpec {
    fn dim(&self) -> usize {
        self.w_ls.len()
    }

    fn derivative(&self, _t: f64, w: &[f64], out: &mut [f64]) {
        for ((o, &wi), &li) in out.iter_mut().zip(w).zip(&self.w_ls) {
            *o = -self.preconditioner.diag(wi, li) * 2.0 * (wi - li);
        }
    }
}

/// Adapts a closure `f(t, x, out)` into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnSystem { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivative(&self, t: f64, state: &[f64], out: &mut [f64]) {
        (self.f)(t, state, out)
    }
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, h: f64, x: &mut [f64]) -> Result<()> {
        let eval = |t: f64, state: &[f64], out: &mut [f64]| -> Result<()> {
            sys.derivative(t, state, out);
            if out.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::IntegrationDiverged { t })
            }
        };
        eval(t, x, &mut self.k1)?;
        for ((o, &xi), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *o = xi + 0.5 * h * k;
        }
        eval(t + 0.5 * h, &self.tmp, &mut self.k2)?;
        for ((o, &xi), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *o = xi + 0.5 * h * k;
        }
        eval(t + 0.5 * h, &self.tmp, &mut self.k3)?;
        for ((o, &xi), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *o = xi + h * k;
        }
        eval(t + h, &self.tmp, &mut self.k4)?;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn validate<S: OdeSystem + ?Sized>(sys: &S, x0: &[f64], t_end: f64, steps: usize) -> Result<()> {
    check_dim(sys.dim(), x0.len())?;
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("t_end", format!("must be finite and >= 0, got {t_end}")));
    }
    Ok(())
}

/// Integrates from `t = 0` to `t_end` with `steps` uniform RK4 steps and
/// returns every step boundary, including both endpoints. `t_end = 0` yields
/// the single sample `(0, x0)`.
pub fn rk4_integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    validate(sys, x0, t_end, steps)?;
    if t_end == 0.0 {
        return Ok(vec![(0.0, x0.to_vec())]);
    }
    let h = t_end / steps as f64;
    let mut ws = Workspace::new(x0.len());
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, x.clone()));
    for k in 0..steps {
        let t = k as f64 * h;
        ws.step(sys, t, h, &mut x)?;
        let t_next = if k + 1 == steps { t_end } else { (k + 1) as f64 * h };
        out.push((t_next, x.clone()));
    }
    Ok(out)
}

/// Same integration as [`rk4_integrate`] but keeps only the final state.
pub fn rk4_endpoint<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    validate(sys, x0, t_end, steps)?;
    let mut x = x0.to_vec();
    if t_end == 0.0 {
        return Ok(x);
    }
    let h = t_end / steps as f64;
    let mut ws = Workspace::new(x0.len());
    for k in 0..steps {
        ws.step(sys, k as f64 * h, h, &mut x)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relax() -> OdeSpec {
        OdeSpec::new(vec![1.0], Preconditioner::Identity)
    }

    #[test]
    fn exponential_relaxation() {
        let path = rk4_integrate(&relax(), &[0.0], 0.5, 2048).unwrap();
        assert_eq!(path.len(), 2049);
        assert_eq!(path[0], (0.0, vec![0.0]));
        let (t, w) = path.last().unwrap();
        assert_eq!(*t, 0.5);
        assert!((w[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn zero_horizon_single_sample() {
        let path = rk4_integrate(&relax(), &[0.3], 0.0, 10).unwrap();
        assert_eq!(path, vec![(0.0, vec![0.3])]);
    }

    #[test]
    fn fourth_order_convergence() {
        // Coarse grids keep the error well above rounding.
        let exact = 1.0 - (-1.0f64).exp();
        let err = |n| (rk4_endpoint(&relax(), &[0.0], 0.5, n).unwrap()[0] - exact).abs();
        let (e1, e2) = (err(8), err(16));
        let order = (e1 / e2).log2();
        assert!((3.7..=4.3).contains(&order), "order {order}");
    }

    #[test]
    fn divergence_reports_time() {
        let blowup = FnSystem::new(1, |_t, x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0]);
        match rk4_integrate(&blowup, &[1.0], 2.0, 200) {
            Err(Error::IntegrationDiverged { t }) => assert!(t > 0.9 && t <= 2.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(rk4_integrate(&relax(), &[0.0, 1.0], 1.0, 4).is_err());
        assert!(rk4_integrate(&relax(), &[0.0], 1.0, 0).is_err());
        assert!(rk4_integrate(&relax(), &[0.0], -1.0, 4).is_err());
    }
}
