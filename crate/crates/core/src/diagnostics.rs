//! Exhaustive restricted-eigenvalue computations for small designs.
//!
//! `delta_min(u)` is the smallest eigenvalue of `X_T'X_T / n` over column sets
//! `|T| = u`. `delta_max(u, u')` is the largest eigenvalue of
//! `X_(G),T' X_(G),T / n` over column sets `|T| <= u` and row sets `|G| <= u'`.
//! Both extremes sit at the largest admissible sets (eigenvalue interlacing
//! and monotonicity under adding rows), so only those are enumerated.
//!
//! Enumeration is combinatorial, hence the guards `p <= 12` and `n <= 14`.

use itertools::Itertools;
use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::float::Float;

pub const MAX_P: usize = 12;
pub const MAX_N: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport<F> {
    pub delta_min: F,
    pub delta_max: F,
    /// `2 delta_max / kappa`.
    pub rho: F,
    /// Geometric decay is not guaranteed when `rho >= 1`.
    pub rho_at_least_one: bool,
    /// `max_ij x_ij^2 * u * u' / n`, an upper bound on `delta_max`.
    pub bound_35: F,
    pub supports_examined: usize,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<F: Float>(a: &Array2<F>) -> Array1<F> {
    let m = a.nrows();
    assert_eq!(m, a.ncols(), "matrix must be square");
    let mut a = a.clone();
    let tol = F::cast(1e-12).max(F::epsilon() * F::cast(10.0));
    let frob = a.iter().map(|v| *v * *v).sum::<F>().sqrt();
    let scale = frob.max(F::one());
    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..m {
            for q in (p + 1)..m {
                off = off + a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() <= tol * scale {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let two = F::cast(2.0);
                let theta = (a[[q, q]] - a[[p, p]]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<F> = (0..m).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Array1::from(ev)
}

fn gram<F: Float>(x: ArrayView2<F>, rows: &[usize], cols: &[usize], n: F) -> Array2<F> {
    let k = cols.len();
    let mut g = Array2::zeros((k, k));
    for a in 0..k {
        for b in a..k {
            let v = rows.iter().map(|&i| x[[i, cols[a]]] * x[[i, cols[b]]]).sum::<F>() / n;
            g[[a, b]] = v;
            g[[b, a]] = v;
        }
    }
    g
}

fn check_columns(p: usize, u: usize) -> Result<()> {
    if p > MAX_P {
        return Err(Error::TooLarge(format!(
            "p = {p} exceeds {MAX_P}; restricted eigenvalues enumerate all column subsets, use a column subset of at most {MAX_P}"
        )));
    }
    if u == 0 || u > p {
        return Err(Error::InvalidParameter(format!("u must lie in 1..={p}, got {u}")));
    }
    Ok(())
}

fn check_rows(n: usize, u_prime: usize) -> Result<()> {
    if n > MAX_N {
        return Err(Error::TooLarge(format!(
            "n = {n} exceeds {MAX_N}; row subsets are enumerated exhaustively, use at most {MAX_N} rows"
        )));
    }
    if u_prime == 0 || u_prime > n {
        return Err(Error::InvalidParameter(format!("u' must lie in 1..={n}, got {u_prime}")));
    }
    Ok(())
}

/// `(delta_min(u), column supports examined)`.
fn min_eigen_counted<F: Float>(x: ArrayView2<F>, u: usize) -> Result<(F, usize)> {
    let (n, p) = x.dim();
    check_columns(p, u)?;
    let nf = F::from_usize(n).expect("n fits in F");
    let rows: Vec<usize> = (0..n).collect();
    let supports: Vec<Vec<usize>> = (0..p).combinations(u).collect();
    let min = supports
        .par_iter()
        .map(|t| symmetric_eigenvalues(&gram(x, &rows, t, nf))[0])
        .reduce(|| F::infinity(), F::min);
    Ok((min, supports.len()))
}

fn max_eigen_counted<F: Float>(x: ArrayView2<F>, u: usize, u_prime: usize) -> Result<(F, usize)> {
    let (n, p) = x.dim();
    check_columns(p, u)?;
    check_rows(n, u_prime)?;
    let nf = F::from_usize(n).expect("n fits in F");
    let col_sets: Vec<Vec<usize>> = (0..p).combinations(u).collect();
    let row_sets: Vec<Vec<usize>> = (0..n).combinations(u_prime).collect();
    let max = col_sets
        .par_iter()
        .map(|t| {
            row_sets
                .iter()
                .map(|g| *symmetric_eigenvalues(&gram(x, g, t, nf)).last().expect("u >= 1"))
                .fold(F::neg_infinity(), F::max)
        })
        .reduce(|| F::neg_infinity(), F::max);
    Ok((max, col_sets.len() * row_sets.len()))
}

pub fn restricted_min_eigenvalue<F: Float>(x: ArrayView2<F>, u: usize) -> Result<F> {
    min_eigen_counted(x, u).map(|(v, _)| v)
}

pub fn restricted_max_eigenvalue<F: Float>(x: ArrayView2<F>, u: usize, u_prime: usize) -> Result<F> {
    max_eigen_counted(x, u, u_prime).map(|(v, _)| v)
}

/// `max_ij x_ij^2 * u * u' / n`.
pub fn delta_max_bound<F: Float>(x: ArrayView2<F>, u: usize, u_prime: usize) -> F {
    let n = F::from_usize(x.nrows()).expect("n fits in F");
    let m = x.iter().map(|v| *v * *v).fold(F::zero(), F::max);
    m * F::from_usize(u * u_prime).expect("fits in F") / n
}

/// `rho = 2 delta_max(s~, g~) / kappa`.
pub fn contraction_factor<F: Float>(x: ArrayView2<F>, s_tilde: usize, g_tilde: usize, kappa: F) -> Result<F> {
    if !(kappa > F::zero()) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let d = restricted_max_eigenvalue(x, s_tilde, g_tilde)?;
    Ok(F::cast(2.0) * d / kappa)
}

pub fn eigen_report<F: Float>(x: ArrayView2<F>, u: usize, u_prime: usize, kappa: F) -> Result<EigenReport<F>> {
    if !(kappa > F::zero()) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let (delta_min, c1) = min_eigen_counted(x, u)?;
    let (delta_max, c2) = max_eigen_counted(x, u, u_prime)?;
    let rho = F::cast(2.0) * delta_max / kappa;
    Ok(EigenReport {
        delta_min,
        delta_max,
        rho,
        rho_at_least_one: rho >= F::one(),
        bound_35: delta_max_bound(x, u, u_prime),
        supports_examined: c1 + c2,
    })
}
