//! Preliminary estimator: a unit-weight lasso on the extended design
//! `Z = (X, sqrt(n) I_n)` with coefficients `theta = (beta, gamma)`, and its
//! hard-thresholded refinement.
//!
//! `Z` is never materialized. Its identity block makes the outlier coordinate
//! update closed form, `gamma_i <- S(r_i / sqrt(n) + gamma_i, lambda)` with
//! `r` the current full residual.

use ndarray::{Array1, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::lasso::{log_grid, soft_threshold, SolverOptions};
use crate::model::{support, Dataset};
use crate::selection::bic_score;

/// Default candidates for the threshold multiplier `tau_theta`.
pub const DEFAULT_TAU_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq)]
pub struct PreliminaryFit<F> {
    pub beta_tilde: Array1<F>,
    pub gamma_tilde: Array1<F>,
    pub s_tilde: Vec<usize>,
    pub g_tilde: Vec<usize>,
    pub lambda_theta: F,
    pub tau_theta: F,
    pub thresholded: bool,
    pub converged: bool,
    pub bic: F,
}

impl<F: Float> PreliminaryFit<F> {
    fn from_parts(dataset: &Dataset<F>, beta: Array1<F>, gamma: Array1<F>, lambda_theta: F, converged: bool) -> Self {
        let bic = bic_score(dataset, beta.view(), gamma.view());
        PreliminaryFit {
            s_tilde: support(beta.view()),
            g_tilde: support(gamma.view()),
            beta_tilde: beta,
            gamma_tilde: gamma,
            lambda_theta,
            tau_theta: F::zero(),
            thresholded: false,
            converged,
            bic,
        }
    }

    /// No coefficient survived; the robust stage has nothing to estimate.
    pub fn is_degenerate(&self) -> bool {
        self.s_tilde.is_empty()
    }

    /// `s~ + g~`.
    pub fn support_size(&self) -> usize {
        self.s_tilde.len() + self.g_tilde.len()
    }
}

/// `lambda_max` of the extended design: `max(max_j |<x_j, y>| / n, max_i |y_i| / sqrt(n))`.
pub fn extended_lambda_max<F: Float>(dataset: &Dataset<F>) -> F {
    let nf = F::from_usize(dataset.n()).expect("n fits in F");
    let y = dataset.y();
    let x_part = dataset
        .x()
        .axis_iter(Axis(1))
        .map(|c| c.dot(&y).abs() / nf)
        .fold(F::zero(), F::max);
    let g_part = y.iter().map(|v| v.abs()).fold(F::zero(), F::max) / dataset.sqrt_n();
    x_part.max(g_part)
}

/// Default descending `lambda_theta` grid for the extended problem.
pub fn default_lambda_theta_grid<F: Float>(dataset: &Dataset<F>, count: usize) -> Vec<F> {
    let top = extended_lambda_max(dataset);
    if top == F::zero() {
        return vec![F::zero()];
    }
    let ratio = crate::lasso::default_min_ratio(dataset.n(), dataset.n() + dataset.p());
    log_grid(top, count.max(2), ratio)
}

pub fn fit_preliminary<F: Float>(dataset: &Dataset<F>, lambda_theta: F, opts: &SolverOptions<F>) -> Result<PreliminaryFit<F>> {
    fit_preliminary_from(dataset, lambda_theta, None, opts)
}

/// Like [`fit_preliminary`], started from `(beta, gamma)`.
pub fn fit_preliminary_from<F: Float>(
    dataset: &Dataset<F>,
    lambda_theta: F,
    warm: Option<(ArrayView1<F>, ArrayView1<F>)>,
    opts: &SolverOptions<F>,
) -> Result<PreliminaryFit<F>> {
    if !(lambda_theta >= F::zero()) || !lambda_theta.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda_theta must be finite and >= 0, got {lambda_theta}")));
    }
    if !(opts.tol > F::zero()) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter("invalid solver options".into()));
    }
    let (n, p) = (dataset.n(), dataset.p());
    let x = dataset.x();
    let nf = F::from_usize(n).expect("n fits in F");
    let sqrt_n = dataset.sqrt_n();
    let col_sq: Vec<F> = x.axis_iter(Axis(1)).map(|c| c.dot(&c)).collect();
    let beta_thr: Vec<F> = col_sq.iter().map(|&s| nf * lambda_theta / s).collect();

    let (mut beta, mut gamma) = match warm {
        Some((b, g)) => {
            if b.len() != p || g.len() != n {
                return Err(Error::Dimension("warm start has wrong shape".into()));
            }
            (b.to_owned(), g.to_owned())
        }
        None => (Array1::zeros(p), Array1::zeros(n)),
    };
    let mut r = dataset.residuals(beta.view(), gamma.view());

    // Coordinates 0..p are beta, p..p+n are gamma, matching the column order of Z.
    let update = |k: usize, beta: &mut Array1<F>, gamma: &mut Array1<F>, r: &mut Array1<F>| -> F {
        if k < p {
            let xj = x.column(k);
            let old = beta[k];
            let new = soft_threshold(xj.dot(r) / col_sq[k] + old, beta_thr[k]);
            let delta = new - old;
            if delta != F::zero() {
                r.scaled_add(-delta, &xj);
                beta[k] = new;
            }
            delta.abs()
        } else {
            let i = k - p;
            let old = gamma[i];
            let new = soft_threshold(r[i] / sqrt_n + old, lambda_theta);
            let delta = new - old;
            if delta != F::zero() {
                r[i] = r[i] - sqrt_n * delta;
                gamma[i] = new;
            }
            delta.abs()
        }
    };

    let m = p + n;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_iter {
        let mut change = F::zero();
        for k in 0..m {
            change = change.max(update(k, &mut beta, &mut gamma, &mut r));
        }
        sweeps += 1;
        if change <= opts.tol {
            converged = true;
            break;
        }
        if opts.active_set {
            let active: Vec<usize> = (0..m)
                .filter(|&k| if k < p { beta[k] != F::zero() } else { gamma[k - p] != F::zero() })
                .collect();
            while sweeps < opts.max_iter {
                let mut change = F::zero();
                for &k in &active {
                    change = change.max(update(k, &mut beta, &mut gamma, &mut r));
                }
                sweeps += 1;
                if change <= opts.tol {
                    break;
                }
            }
        }
    }
    Ok(PreliminaryFit::from_parts(dataset, beta, gamma, lambda_theta, converged))
}

/// Zeroes every coordinate with `|theta_j| <= tau_theta * lambda_theta`.
pub fn threshold_preliminary<F: Float>(dataset: &Dataset<F>, fit: &PreliminaryFit<F>, tau_theta: F) -> Result<PreliminaryFit<F>> {
    if fit.thresholded {
        return Err(Error::InvalidParameter("preliminary fit is already thresholded".into()));
    }
    if !(tau_theta >= F::zero()) {
        return Err(Error::InvalidParameter(format!("tau_theta must be >= 0, got {tau_theta}")));
    }
    let cut = tau_theta * fit.lambda_theta;
    let keep = |v: &F| if v.abs() > cut { *v } else { F::zero() };
    let beta = fit.beta_tilde.map(keep);
    let gamma = fit.gamma_tilde.map(keep);
    let mut out = PreliminaryFit::from_parts(dataset, beta, gamma, fit.lambda_theta, fit.converged);
    out.tau_theta = tau_theta;
    out.thresholded = true;
    if out.is_degenerate() {
        log::debug!("thresholding at {cut} removed every coefficient");
    }
    Ok(out)
}

/// BIC-selected preliminary fit over a warm-started `lambda_theta` path, and
/// jointly over `tau_theta` when `use_threshold` is set. Ties go to the larger
/// `lambda_theta`, then the larger `tau_theta`.
pub fn select_preliminary<F: Float>(
    dataset: &Dataset<F>,
    grid_lambda_theta: &[F],
    grid_tau_theta: &[F],
    use_threshold: bool,
    opts: &SolverOptions<F>,
) -> Result<PreliminaryFit<F>> {
    if grid_lambda_theta.is_empty() || (use_threshold && grid_tau_theta.is_empty()) {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let mut lambdas = grid_lambda_theta.to_vec();
    lambdas.sort_by(|a, b| b.partial_cmp(a).expect("finite grid"));
    let mut taus = grid_tau_theta.to_vec();
    taus.sort_by(|a, b| b.partial_cmp(a).expect("finite grid"));

    let mut best: Option<PreliminaryFit<F>> = None;
    let mut all_empty = true;
    let mut last: Option<PreliminaryFit<F>> = None;
    for &lambda in &lambdas {
        let warm = last.as_ref().map(|f| (f.beta_tilde.view(), f.gamma_tilde.view()));
        let fit = fit_preliminary_from(dataset, lambda, warm, opts)?;
        let candidates = if use_threshold {
            taus.iter()
                .map(|&t| threshold_preliminary(dataset, &fit, t))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![fit.clone()]
        };
        for c in candidates {
            if c.support_size() > 0 {
                all_empty = false;
            }
            if best.as_ref().is_none_or(|b| c.bic < b.bic) {
                best = Some(c);
            }
        }
        last = Some(fit);
    }
    if all_empty {
        log::warn!("every preliminary grid point has empty support; returning the least-penalized fit");
        let fit = last.expect("nonempty grid");
        return Ok(if use_threshold {
            threshold_preliminary(dataset, &fit, *taus.last().expect("nonempty"))?
        } else {
            fit
        });
    }
    Ok(best.expect("nonempty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::solve_weighted_lasso;
    use ndarray::{array, s, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| if i < p { 1.0 } else { 0.0 } + rng.random_range(-0.5..0.5));
        Dataset::new(x.view(), y).unwrap()
    }

    fn extended_design(ds: &Dataset<f64>) -> Array2<f64> {
        let (n, p) = (ds.n(), ds.p());
        let mut z = Array2::zeros((n, n + p));
        z.slice_mut(s![.., ..p]).assign(&ds.x());
        for i in 0..n {
            z[[i, p + i]] = ds.sqrt_n();
        }
        z
    }

    #[test]
    fn zero_response_gives_zero() {
        let x = array![[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]];
        let ds = Dataset::new(x.view(), Array1::zeros(3)).unwrap();
        let fit = fit_preliminary(&ds, 0.1, &SolverOptions::default()).unwrap();
        assert!(fit.beta_tilde.iter().chain(fit.gamma_tilde.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_above_lambda_max() {
        let ds = random_dataset(15, 3, 3);
        let lmax = extended_lambda_max(&ds);
        let fit = fit_preliminary(&ds, lmax, &SolverOptions::default()).unwrap();
        assert_eq!(fit.support_size(), 0);
        let fit = fit_preliminary(&ds, 0.9 * lmax, &SolverOptions::default()).unwrap();
        assert!(fit.support_size() > 0);
    }

    #[test]
    fn matches_materialized_extended_lasso() {
        for seed in 0..5 {
            let ds = random_dataset(20, 4, seed);
            let z = extended_design(&ds);
            let w = Array1::ones(24);
            let lambda = 0.3 * extended_lambda_max(&ds);
            let opts = SolverOptions::with_tol(1e-12);
            let fast = fit_preliminary(&ds, lambda, &opts).unwrap();
            let generic = solve_weighted_lasso(z.view(), ds.y(), lambda, w.view(), None, &opts).unwrap();
            for j in 0..4 {
                assert!((fast.beta_tilde[j] - generic.coef[j]).abs() <= 1e-6);
            }
            for i in 0..20 {
                assert!((fast.gamma_tilde[i] - generic.coef[4 + i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn flags_injected_outlier() {
        let mut ds_y = random_dataset(20, 2, 11).y().to_owned();
        ds_y[7] += 8.0;
        let x = random_dataset(20, 2, 11).x().to_owned();
        let ds = Dataset::new(x.view(), ds_y).unwrap();
        let fit = fit_preliminary(&ds, 0.05, &SolverOptions::with_tol(1e-10)).unwrap();
        assert!(fit.g_tilde.contains(&7));
        let z = extended_design(&ds);
        let generic = solve_weighted_lasso(z.view(), ds.y(), 0.05, Array1::ones(22).view(), None, &SolverOptions::with_tol(1e-10)).unwrap();
        assert!(generic.coef[2 + 7] != 0.0);
    }

    #[test]
    fn threshold_examples() {
        let x = array![[1.0], [1.0]];
        let ds = Dataset::new(x.view(), array![0.0, 0.0]).unwrap();
        let base = PreliminaryFit::from_parts(&ds, array![0.5], array![0.05, 0.0], 0.1, true);
        let same = threshold_preliminary(&ds, &base, 0.0).unwrap();
        assert_eq!(same.beta_tilde, base.beta_tilde);
        assert_eq!(same.gamma_tilde, base.gamma_tilde);
        let cut = threshold_preliminary(&ds, &base, 1.0).unwrap();
        assert_eq!(cut.beta_tilde, array![0.5]);
        assert_eq!(cut.gamma_tilde, array![0.0, 0.0]);
        assert!(cut.g_tilde.is_empty());
        let gone = threshold_preliminary(&ds, &base, 10.0).unwrap();
        assert!(gone.is_degenerate() && gone.support_size() == 0);
        assert!(threshold_preliminary(&ds, &cut, 1.0).is_err());
    }

    #[test]
    fn single_point_grid() {
        let ds = random_dataset(20, 3, 5);
        let opts = SolverOptions::default();
        let sel = select_preliminary(&ds, &[0.1], &[1.0], true, &opts).unwrap();
        assert_eq!(sel.lambda_theta, 0.1);
        assert_eq!(sel.tau_theta, 1.0);
        let direct = threshold_preliminary(&ds, &fit_preliminary(&ds, 0.1, &opts).unwrap(), 1.0).unwrap();
        assert_eq!(sel, direct);
    }

    #[test]
    fn selection_minimizes_bic() {
        let ds = random_dataset(30, 4, 9);
        let grid = default_lambda_theta_grid(&ds, 10);
        let opts = SolverOptions::with_tol(1e-9);
        let sel = select_preliminary(&ds, &grid, &[], false, &opts).unwrap();
        for &l in &grid {
            let f = fit_preliminary(&ds, l, &opts).unwrap();
            assert!(sel.bic <= f.bic + 1e-9);
        }
    }
}
