//! Principal branch of the Lambert W function.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Branch point `−1/e`.
pub const BRANCH_POINT: f64 = -1.0 / E;

const MAX_HALLEY: usize = 40;
const REL_TOL: f64 = 1e-12;

/// Principal-branch `W₀(x)` for `x ≥ −1/e`: the `w ≥ −1` with `w·eʷ = x`.
///
/// Initial guess from the branch-point series, a Padé-type form near zero or
/// the asymptotic expansion, refined by Halley iteration.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("lambert_w0 of NaN".into()));
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // 1 + e·x, computed with the two-term split of e to soften cancellation.
    let q = branch_offset(x);
    if q < 0.0 {
        if q > -1e-15 {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!(
            "lambert_w0 requires x >= -1/e, got {x:e}"
        )));
    }
    if q == 0.0 {
        return Ok(-1.0);
    }

    let mut w = initial_guess(x, q);
    if q < 1e-6 {
        // Series about the branch point is already accurate to O(p^5).
        return Ok(w);
    }
    for _ in 0..MAX_HALLEY {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        if (next - w).abs() <= REL_TOL * next.abs().max(1e-300) * 1e-3 || step == 0.0 {
            return Ok(next);
        }
        w = next;
    }
    let ew = w.exp();
    if (w * ew - x).abs() <= REL_TOL * x.abs().max(1e-300) {
        return Ok(w);
    }
    Err(Error::IterationFailure {
        routine: "lambert_w0 Halley",
        iterations: MAX_HALLEY,
    })
}

/// `W₀(e^L)` without forming `e^L`, so very large `L` does not overflow.
pub fn lambert_w0_exp(log_x: f64) -> Result<f64> {
    if log_x.is_nan() {
        return Err(Error::Domain("lambert_w0_exp of NaN".into()));
    }
    if log_x < 700.0 {
        return lambert_w0(log_x.exp());
    }
    // Solve w + ln w = L by Newton; converges quadratically from L − ln L.
    let mut w = log_x - log_x.ln();
    for _ in 0..MAX_HALLEY {
        let f = w + w.ln() - log_x;
        let next = w - f / (1.0 + 1.0 / w);
        if (next - w).abs() <= 1e-15 * next {
            return Ok(next);
        }
        w = next;
    }
    Err(Error::IterationFailure {
        routine: "lambert_w0_exp Newton",
        iterations: MAX_HALLEY,
    })
}

/// `W₀(−e^{−(1+δ)})` for `δ ≥ 0`, accurate when the argument sits next to the
/// branch point and `δ` is known more precisely than `1 + δ`.
pub fn lambert_w0_branch(delta: f64) -> Result<f64> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Domain(format!("lambert_w0_branch requires delta >= 0, got {delta:e}")));
    }
    if delta == 0.0 {
        return Ok(-1.0);
    }
    if delta > 1.0 {
        return lambert_w0(-(-1.0 - delta).exp());
    }
    // v = 1 + W solves v + ln(1 − v) = −δ.
    let q = -(-delta).exp_m1();
    let p = (2.0 * q).sqrt();
    let mut v = (p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))).clamp(1e-300, 0.999);
    for _ in 0..MAX_HALLEY {
        let f = v_plus_log1m(v) + delta;
        let fp = -v / (1.0 - v);
        let next = (v - f / fp).clamp(v * 0.5, 0.5 * (1.0 + v));
        if (next - v).abs() <= 4.0 * f64::EPSILON * next {
            return Ok(next - 1.0);
        }
        v = next;
    }
    if (v_plus_log1m(v) + delta).abs() <= 1e-14 * delta {
        return Ok(v - 1.0);
    }
    Err(Error::IterationFailure {
        routine: "lambert_w0_branch Newton",
        iterations: MAX_HALLEY,
    })
}

/// `v + ln(1 − v)`, summed as a series for small `v` to avoid cancellation.
pub(crate) fn v_plus_log1m(v: f64) -> f64 {
    if v < 0.05 {
        let mut term = v * v;
        let mut sum = 0.0;
        for n in 2..40 {
            let t = term / n as f64;
            sum += t;
            if t < 1e-18 * sum {
                break;
            }
            term *= v;
        }
        -sum
    } else {
        v + (-v).ln_1p()
    }
}

fn branch_offset(x: f64) -> f64 {
    // e = E_HI + E_LO exactly enough for the product near the branch point.
    const E_HI: f64 = std::f64::consts::E;
    const E_LO: f64 = 1.4456468917292502e-16;
    x.mul_add(E_HI, 1.0) + x * E_LO
}

fn initial_guess(x: f64, q: f64) -> f64 {
    if q < 0.3 {
        // Puiseux series in p = sqrt(2(1 + e x)).
        let p = (2.0 * q).sqrt();
        return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))));
    }
    if x < 3.0 {
        // Winitzki-style rational approximation.
        let l = x.ln_1p();
        return l * (1.0 - (1.0 + l).ln() / (2.0 + l));
    }
    let l1 = x.ln();
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}
