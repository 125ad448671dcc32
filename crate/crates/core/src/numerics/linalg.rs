//! Dense factorizations used by the problem builder and the learners.

use crate::error::{check_dim, Error, Result};
use crate::numerics::matrix::{dot, norm, Matrix};
use crate::numerics::rng::Rng;

/// Householder QR of a square matrix. `r_diag` holds the diagonal of R.
#[derive(Debug, Clone)]
pub struct Qr {
    pub q: Matrix,
    pub r_diag: Vec<f64>,
}

pub fn householder_qr(a: &Matrix) -> Result<Qr> {
    let n = a.rows();
    check_dim(n, a.cols())?;
    let mut r = a.clone();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n);
    let mut r_diag = vec![0.0; n];

    for k in 0..n {
        let x: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let xnorm = norm(&x);
        if xnorm == 0.0 {
            r_diag[k] = 0.0;
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = norm(&v);
        if vnorm == 0.0 {
            r_diag[k] = alpha;
            continue;
        }
        for vi in &mut v {
            *vi /= vnorm;
        }
        // R[k.., k..] -= 2 v (vᵀ R[k.., k..])
        reflect(&mut r, k, k, &v);
        r_diag[k] = alpha;
        reflectors.push((k, v));
    }

    // Q = H_0 H_1 ... H_{n-1}, accumulated right to left onto the identity.
    let mut q = Matrix::identity(n);
    for (k, v) in reflectors.iter().rev() {
        reflect(&mut q, *k, *k, v);
    }
    Ok(Qr { q, r_diag })
}

/// Applies `I − 2vvᵀ` to rows `row0..` of `a`, touching columns `col0..` only.
/// Works row by row so the row-major storage is read contiguously.
fn reflect(a: &mut Matrix, row0: usize, col0: usize, v: &[f64]) {
    let n = a.cols();
    let mut s = vec![0.0; n - col0];
    for (i, vi) in v.iter().enumerate() {
        let row = &a.row(row0 + i)[col0..];
        for (sj, x) in s.iter_mut().zip(row) {
            *sj += vi * x;
        }
    }
    for (i, vi) in v.iter().enumerate() {
        let f = 2.0 * vi;
        let row = &mut a.row_mut(row0 + i)[col0..];
        for (x, sj) in row.iter_mut().zip(&s) {
            *x -= f * sj;
        }
    }
}

/// Haar-distributed `d × d` orthogonal matrix.
///
/// QR-decomposes a standard Gaussian matrix and multiplies column `j` of Q by
/// `sign(R_jj)`, which makes the factorization unique and the law exactly Haar.
pub fn sample_haar_orthogonal(rng: &mut Rng, d: usize) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    let data: Vec<f64> = (0..d * d).map(|_| rng.standard_normal()).collect();
    let g = Matrix::from_vec(d, d, data)?;
    let Qr { q, r_diag } = householder_qr(&g)?;
    let signs: Vec<f64> = r_diag
        .iter()
        .map(|&r| if r < 0.0 { -1.0 } else { 1.0 })
        .collect();
    q.scale_columns(&signs)
}

/// Determinant by LU with partial pivoting.
pub fn determinant(a: &Matrix) -> Result<f64> {
    let n = a.rows();
    check_dim(n, a.cols())?;
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pivot == 0.0 {
            return Ok(0.0);
        }
        if p != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = tmp;
            }
            det = -det;
        }
        let akk = m[(k, k)];
        det *= akk;
        for i in k + 1..n {
            let f = m[(i, k)] / akk;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
        }
    }
    Ok(det)
}

/// Largest condition number accepted by [`cholesky_solve`].
pub const MAX_CONDITION: f64 = 1e12;

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// Fails when a pivot is non-positive or when the Cholesky diagonal implies a
/// condition number above [`MAX_CONDITION`].
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    check_dim(n, a.cols())?;
    check_dim(n, b.len())?;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) {
            return Err(Error::RankDeficient {
                detail: format!("non-positive pivot {s:e} at column {j}"),
            });
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
        (lo.min(l[(i, i)]), hi.max(l[(i, i)]))
    });
    let cond = (hi / lo).powi(2);
    if cond > MAX_CONDITION {
        return Err(Error::RankDeficient {
            detail: format!("condition number estimate {cond:e} exceeds {MAX_CONDITION:e}"),
        });
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (b[i] - s) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (y[i] - s) / l[(i, i)];
    }
    Ok(x)
}

/// Dominant eigenpair of a symmetric positive semi-definite matrix.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Power iteration from a fixed, generic start vector. Converged when the
/// residual `‖Av − λv‖` falls below `tol·|λ|`. The sign is fixed so that the
/// first non-negligible coordinate is positive.
pub fn power_iteration(a: &Matrix, tol: f64, max_iter: usize) -> Result<EigenPair> {
    let n = a.rows();
    check_dim(n, a.cols())?;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * ((i as f64 + 1.0) * 0.618).fract()).collect();
    let vn = norm(&v);
    v.iter_mut().for_each(|x| *x /= vn);
    for it in 1..=max_iter {
        let av = a.matvec(&v)?;
        let lambda = dot(&v, &av);
        let resid = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid <= tol * lambda.abs() || lambda == 0.0 && resid == 0.0 {
            return Ok(EigenPair {
                value: lambda,
                vector: fix_sign(v),
                iterations: it,
            });
        }
        let nrm = norm(&av);
        if nrm == 0.0 {
            return Ok(EigenPair {
                value: 0.0,
                vector: fix_sign(v),
                iterations: it,
            });
        }
        v = av.into_iter().map(|x| x / nrm).collect();
    }
    Err(Error::IterationFailure {
        routine: "power iteration",
        iterations: max_iter,
    })
}

fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}
