//! Alternating minimization over `(beta, gamma)`.
//!
//! Starting from `beta0` (the preliminary estimate by default):
//!
//! ```text
//! gamma0 = h(beta0)
//! repeat:
//!     beta_k  = argmin_b (1/2n)||y - sqrt(n) gamma_{k-1} - X b||^2 + lambda_b sum_j w_bj |b_j|
//!     gamma_k = h(beta_k)
//! until ||beta_k - beta_{k-1}||_1 / s~ <= stop_tol
//! ```
//!
//! where `h(b)_i = theta(y_i - x_i'b; lambda_g w_gi) / sqrt(n)`. Both steps
//! only touch the preliminary supports; every other coordinate stays zero.

use ndarray::{Array1, Array2, ArrayView1, Axis, ShapeBuilder};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::lasso::{solve_weighted_lasso, SolverOptions};
use crate::model::{objective, Dataset, FitResult, TuningParams, Weights};
use crate::preliminary::PreliminaryFit;
use crate::thresholding::ThresholdingRule;

pub const DEFAULT_R_W: f64 = 100.0;
pub const DEFAULT_STOP_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_OUTER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustOptions<F> {
    /// Threshold on `||beta_k - beta_{k-1}||_1 / s~`.
    pub stop_tol: F,
    pub max_outer: usize,
    /// Options for each beta-step lasso.
    pub solver: SolverOptions<F>,
}

impl<F: Float> Default for RobustOptions<F> {
    fn default() -> Self {
        RobustOptions {
            stop_tol: F::cast(DEFAULT_STOP_TOL),
            max_outer: DEFAULT_MAX_OUTER,
            solver: SolverOptions::default(),
        }
    }
}

impl<F: Float> RobustOptions<F> {
    /// Tight tolerances for fixed-point certification.
    pub fn tight(stop_tol: F) -> Self {
        RobustOptions {
            stop_tol,
            max_outer: 10_000,
            solver: SolverOptions::with_tol(F::cast(1e-13)),
        }
    }
}

/// `w_bj = max(1/|b~_j|, 1/R_w)` on `S~`, `w_gi = min(1/|g~_i|, R_w)` on `G~`.
pub fn compute_weights<F: Float>(prelim: &PreliminaryFit<F>, r_w: F) -> Result<Weights<F>> {
    if !(r_w > F::zero()) {
        return Err(Error::InvalidParameter(format!("R_w must be positive, got {r_w}")));
    }
    if prelim.is_degenerate() {
        return Err(Error::Degenerate("preliminary coefficient support is empty".into()));
    }
    let floor = F::one() / r_w;
    let w_beta = prelim
        .beta_tilde
        .iter()
        .map(|&b| (b != F::zero()).then(|| (F::one() / b.abs()).max(floor)))
        .collect();
    let w_gamma = prelim
        .gamma_tilde
        .iter()
        .map(|&g| (g != F::zero()).then(|| (F::one() / g.abs()).min(r_w)))
        .collect();
    Weights::new(w_beta, w_gamma, r_w)
}

/// Closed-form outlier update `gamma_i = theta(r_i; lambda_g w_gi) / sqrt(n)` on
/// the weighted support, zero elsewhere.
pub fn gamma_step<F: Float>(residuals: ArrayView1<F>, rule: &ThresholdingRule<F>, lambda_gamma: F, weights: &Weights<F>) -> Array1<F> {
    let sqrt_n = F::from_usize(residuals.len()).expect("n fits in F").sqrt();
    Array1::from_iter(residuals.iter().enumerate().map(|(i, &r)| match weights.gamma(i) {
        Some(w) => rule.theta(r, lambda_gamma * w) / sqrt_n,
        None => F::zero(),
    }))
}

/// Runs the alternating algorithm with weights derived from `prelim`.
pub fn fit<F: Float>(
    dataset: &Dataset<F>,
    prelim: &PreliminaryFit<F>,
    rule: &ThresholdingRule<F>,
    tuning: &TuningParams<F>,
    r_w: F,
    beta_init: Option<ArrayView1<F>>,
    opts: &RobustOptions<F>,
) -> Result<FitResult<F>> {
    let weights = compute_weights(prelim, r_w)?;
    let init = beta_init.unwrap_or(prelim.beta_tilde.view());
    fit_with_weights(dataset, &weights, rule, tuning, init, opts)
}

/// Column-restricted design reused across many fits on the same support.
pub(crate) struct RestrictedDesign<F> {
    pub(crate) cols: Vec<usize>,
    pub(crate) x: Array2<F>,
    pub(crate) w: Array1<F>,
}

impl<F: Float> RestrictedDesign<F> {
    pub(crate) fn new(dataset: &Dataset<F>, weights: &Weights<F>) -> Result<Self> {
        let cols = weights.beta_support();
        if cols.is_empty() {
            return Err(Error::Degenerate("no coefficient carries a weight".into()));
        }
        let mut x = Array2::zeros((dataset.n(), cols.len()).f());
        for (k, &j) in cols.iter().enumerate() {
            x.column_mut(k).assign(&dataset.x().column(j));
        }
        let w = cols.iter().map(|&j| weights.beta(j).expect("support has weights")).collect();
        Ok(RestrictedDesign { cols, x, w })
    }
}

pub fn fit_with_weights<F: Float>(
    dataset: &Dataset<F>,
    weights: &Weights<F>,
    rule: &ThresholdingRule<F>,
    tuning: &TuningParams<F>,
    beta_init: ArrayView1<F>,
    opts: &RobustOptions<F>,
) -> Result<FitResult<F>> {
    let design = RestrictedDesign::new(dataset, weights)?;
    fit_restricted(dataset, &design, weights, rule, tuning, beta_init, opts)
}

pub(crate) fn fit_restricted<F: Float>(
    dataset: &Dataset<F>,
    design: &RestrictedDesign<F>,
    weights: &Weights<F>,
    rule: &ThresholdingRule<F>,
    tuning: &TuningParams<F>,
    beta_init: ArrayView1<F>,
    opts: &RobustOptions<F>,
) -> Result<FitResult<F>> {
    let (n, p) = (dataset.n(), dataset.p());
    if beta_init.len() != p {
        return Err(Error::Dimension(format!("beta_init has {} entries, expected {p}", beta_init.len())));
    }
    if opts.max_outer == 0 || !(opts.stop_tol >= F::zero()) {
        return Err(Error::InvalidParameter("invalid outer-loop options".into()));
    }
    if let Some(j) = (0..p).find(|&j| beta_init[j] != F::zero() && weights.beta(j).is_none()) {
        return Err(Error::OutsideSupport { block: "beta", index: j });
    }
    let cols = &design.cols;
    let s_tilde = F::from_usize(cols.len()).expect("s fits in F");
    let sqrt_n = dataset.sqrt_n();
    let y = dataset.y();

    let scatter = |b: &Array1<F>| {
        let mut full = Array1::zeros(p);
        for (k, &j) in cols.iter().enumerate() {
            full[j] = b[k];
        }
        full
    };
    let residual = |b: &Array1<F>| &y - &design.x.dot(b);
    let eval = |b: &Array1<F>, g: &Array1<F>| objective(dataset, scatter(b).view(), g.view(), rule, weights, tuning);

    let mut b: Array1<F> = beta_init.select(Axis(0), cols);
    let mut g = gamma_step(residual(&b).view(), rule, tuning.lambda_gamma, weights);
    let mut trace = vec![eval(&b, &g)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_outer {
        iterations += 1;
        let mut working = y.to_owned();
        working.scaled_add(-sqrt_n, &g);
        let sol = solve_weighted_lasso(design.x.view(), working.view(), tuning.lambda_beta, design.w.view(), Some(b.view()), &opts.solver)?;
        let step: F = sol.coef.iter().zip(b.iter()).map(|(a, c)| (*a - *c).abs()).sum();
        b = sol.coef;
        trace.push(eval(&b, &g)?);
        g = gamma_step(residual(&b).view(), rule, tuning.lambda_gamma, weights);
        trace.push(eval(&b, &g)?);
        if step / s_tilde <= opts.stop_tol {
            converged = true;
            break;
        }
    }
    debug_assert_eq!(g.len(), n);
    Ok(FitResult::new(scatter(&b), g, trace, iterations, converged, *tuning, rule.name()))
}

/// Largest violation of the estimating equations
/// `-(1/n) sum_i x_ij psi(r_i; lambda_g w_gi) + lambda_b w_bj d|b_j| = 0` over
/// `j` in the coefficient support of `weights`, with `r = y - X b` and
/// `psi(r_i) = r_i` for observations outside the outlier support.
pub fn estimating_equation_residual<F: Float>(
    dataset: &Dataset<F>,
    fit: &FitResult<F>,
    rule: &ThresholdingRule<F>,
    tuning: &TuningParams<F>,
    weights: &Weights<F>,
) -> F {
    let nf = F::from_usize(dataset.n()).expect("n fits in F");
    let r = &dataset.y() - &dataset.x().dot(&fit.beta);
    let psi = Array1::from_iter(r.iter().enumerate().map(|(i, &ri)| match weights.gamma(i) {
        Some(w) => rule.psi(ri, tuning.lambda_gamma * w),
        None => ri,
    }));
    let mut worst = F::zero();
    for j in weights.beta_support() {
        let lw = tuning.lambda_beta * weights.beta(j).expect("support has weights");
        let score = -dataset.x().column(j).dot(&psi) / nf;
        let b = fit.beta[j];
        let v = if b != F::zero() {
            (score + lw * b.signum()).abs()
        } else {
            (score.abs() - lw).max(F::zero())
        };
        worst = worst.max(v);
    }
    worst
}
