//! Weighted-l1 coordinate descent.
//!
//! Solves `min_b (1/2n)||y - X b||^2 + lambda sum_j w_j |b_j|` by cyclic
//! coordinate descent with naive residual updates. Sweeps run in ascending
//! column order; with `active_set` on, full sweeps alternate with sweeps over
//! the current nonzeros until a full sweep moves no coordinate by more than
//! `tol`.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::float::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<F> {
    /// Convergence threshold on the largest coordinate change in a full sweep.
    pub tol: F,
    /// Budget of sweeps (full and active-set sweeps both count).
    pub max_iter: usize,
    pub active_set: bool,
}

impl<F: Float> Default for SolverOptions<F> {
    fn default() -> Self {
        SolverOptions {
            tol: F::cast(1e-7),
            max_iter: 10_000,
            active_set: true,
        }
    }
}

impl<F: Float> SolverOptions<F> {
    pub fn with_tol(tol: F) -> Self {
        SolverOptions {
            tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > F::zero()) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution<F> {
    pub coef: Array1<F>,
    pub sweeps: usize,
    pub converged: bool,
}

#[inline]
pub(crate) fn soft_threshold<F: Float>(z: F, t: F) -> F {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        F::zero()
    }
}

fn check_finite<F: Float>(v: impl IntoIterator<Item = F>, what: &'static str) -> Result<()> {
    if v.into_iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

pub fn solve_weighted_lasso<F: Float>(
    x: ArrayView2<F>,
    y: ArrayView1<F>,
    lambda: F,
    w: ArrayView1<F>,
    warm_start: Option<ArrayView1<F>>,
    opts: &SolverOptions<F>,
) -> Result<LassoSolution<F>> {
    opts.validate()?;
    let (n, m) = x.dim();
    if y.len() != n || w.len() != m {
        return Err(Error::Dimension(format!(
            "X is {n}x{m}, y has {} entries, w has {}",
            y.len(),
            w.len()
        )));
    }
    check_finite(x.iter().copied(), "X")?;
    check_finite(y.iter().copied(), "y")?;
    check_finite(w.iter().copied(), "weights")?;
    if !(lambda >= F::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if w.iter().any(|&v| v < F::zero()) {
        return Err(Error::InvalidParameter("weights must be nonnegative".into()));
    }

    let nf = F::from_usize(n).expect("n fits in F");
    let col_sq: Vec<F> = x.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    if let Some(j) = col_sq.iter().position(|&s| s == F::zero()) {
        return Err(Error::ZeroColumn { column: j });
    }
    let thresholds: Vec<F> = (0..m).map(|j| nf * lambda * w[j] / col_sq[j]).collect();

    let mut b = match warm_start {
        Some(ws) => {
            if ws.len() != m {
                return Err(Error::Dimension("warm start has wrong length".into()));
            }
            check_finite(ws.iter().copied(), "warm start")?;
            ws.to_owned()
        }
        None => Array1::zeros(m),
    };
    let mut r = y.to_owned();
    if b.iter().any(|&v| v != F::zero()) {
        r = &r - &x.dot(&b);
    }

    let sweep = |coords: &mut dyn Iterator<Item = usize>, b: &mut Array1<F>, r: &mut Array1<F>| -> F {
        let mut max_change = F::zero();
        for j in coords {
            let xj = x.column(j);
            let old = b[j];
            let z = xj.dot(r) / col_sq[j] + old;
            let new = soft_threshold(z, thresholds[j]);
            let delta = new - old;
            if delta != F::zero() {
                r.scaled_add(-delta, &xj);
                b[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    };

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_iter {
        let change = sweep(&mut (0..m), &mut b, &mut r);
        sweeps += 1;
        if change <= opts.tol {
            converged = true;
            break;
        }
        if opts.active_set {
            let active: Vec<usize> = (0..m).filter(|&j| b[j] != F::zero()).collect();
            while sweeps < opts.max_iter {
                let change = sweep(&mut active.iter().copied(), &mut b, &mut r);
                sweeps += 1;
                if change <= opts.tol {
                    break;
                }
            }
        }
    }
    Ok(LassoSolution {
        coef: b,
        sweeps,
        converged,
    })
}

/// Weighted-lasso objective `(1/2n)||y - X b||^2 + lambda sum_j w_j |b_j|`.
pub fn lasso_objective<F: Float>(x: ArrayView2<F>, y: ArrayView1<F>, b: ArrayView1<F>, lambda: F, w: ArrayView1<F>) -> F {
    let nf = F::from_usize(x.nrows()).expect("n fits in F");
    let r = &y - &x.dot(&b);
    let pen: F = b.iter().zip(w.iter()).map(|(&bj, &wj)| wj * bj.abs()).sum();
    r.dot(&r) / (F::cast(2.0) * nf) + lambda * pen
}

/// Largest violation of the lasso optimality conditions at `b`.
pub fn kkt_residual<F: Float>(x: ArrayView2<F>, y: ArrayView1<F>, b: ArrayView1<F>, lambda: F, w: ArrayView1<F>) -> F {
    let nf = F::from_usize(x.nrows()).expect("n fits in F");
    let r = &y - &x.dot(&b);
    let mut worst = F::zero();
    for (j, xj) in x.axis_iter(Axis(1)).enumerate() {
        let g = -xj.dot(&r) / nf;
        let lw = lambda * w[j];
        let v = if b[j] != F::zero() {
            (g + lw * b[j].signum()).abs()
        } else {
            (g.abs() - lw).max(F::zero())
        };
        worst = worst.max(v);
    }
    worst
}

/// Smallest lambda whose solution is identically zero: `max_j |<x_j, y>| / (n w_j)`
/// over penalized columns.
pub fn lambda_max<F: Float>(x: ArrayView2<F>, y: ArrayView1<F>, w: ArrayView1<F>) -> F {
    let nf = F::from_usize(x.nrows()).expect("n fits in F");
    x.axis_iter(Axis(1))
        .zip(w.iter())
        .filter(|(_, &wj)| wj > F::zero())
        .map(|(xj, &wj)| xj.dot(&y).abs() / (nf * wj))
        .fold(F::zero(), F::max)
}

/// Default smallest-to-largest ratio of a lambda path.
pub fn default_min_ratio<F: Float>(n: usize, m: usize) -> F {
    if n > m {
        F::cast(1e-3)
    } else {
        F::cast(1e-2)
    }
}

/// `count` values log-spaced from `top` down to `min_ratio * top`.
pub fn log_grid<F: Float>(top: F, count: usize, min_ratio: F) -> Vec<F> {
    if count <= 1 {
        return vec![top];
    }
    let last = F::from_usize(count - 1).expect("count fits in F");
    (0..count)
        .map(|k| top * min_ratio.powf(F::from_usize(k).expect("k fits in F") / last))
        .collect()
}

/// Descending log-spaced lambda path starting at [`lambda_max`]. An all-zero
/// response yields the single-point grid `[0]`.
pub fn lambda_grid<F: Float>(x: ArrayView2<F>, y: ArrayView1<F>, w: ArrayView1<F>, count: usize, min_ratio: F) -> Result<Vec<F>> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!("grid needs at least 2 points, got {count}")));
    }
    if !(min_ratio > F::zero() && min_ratio < F::one()) {
        return Err(Error::InvalidParameter(format!("min_ratio must lie in (0, 1), got {min_ratio}")));
    }
    let top = lambda_max(x, y, w);
    if top == F::zero() {
        log::warn!("response is orthogonal to every penalized column; lambda grid collapses to {{0}}");
        return Ok(vec![F::zero()]);
    }
    Ok(log_grid(top, count, min_ratio))
}

/// Warm-started solves along `grid` (expected descending).
pub fn lasso_path<F: Float>(
    x: ArrayView2<F>,
    y: ArrayView1<F>,
    w: ArrayView1<F>,
    grid: &[F],
    opts: &SolverOptions<F>,
) -> Result<Vec<LassoSolution<F>>> {
    let mut out: Vec<LassoSolution<F>> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let warm = out.last().map(|s| s.coef.view());
        let sol = solve_weighted_lasso(x, y, lambda, w, warm, opts)?;
        out.push(sol);
    }
    Ok(out)
}
