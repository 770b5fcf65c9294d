//! Data model shared by every solver: the column-normalized dataset, tuning
//! parameters, adaptive weights, fit results and the penalized objective.
//!
//! Columns of `X` are rescaled to have Euclidean norm `sqrt(n)`, which puts
//! them on the same scale as the outlier block `sqrt(n) * I_n`. There is no
//! intercept: center `y` and `X` (or add a constant column) before fitting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::thresholding::ThresholdingRule;

/// Response and column-normalized covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    y: Array1<F>,
    x: Array2<F>,
    column_scales: Array1<F>,
}

impl<F: Float> Dataset<F> {
    /// Normalizes the columns of `x_raw` and pairs them with `y`.
    pub fn new(x_raw: ArrayView2<F>, y: Array1<F>) -> Result<Self> {
        if x_raw.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "X has {} rows but y has {} entries",
                x_raw.nrows(),
                y.len()
            )));
        }
        if x_raw.nrows() == 0 || x_raw.ncols() == 0 {
            return Err(Error::Dimension("need n >= 1 and p >= 1".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "y" });
        }
        let (x, column_scales) = normalize_columns(x_raw)?;
        Ok(Dataset { y, x, column_scales })
    }

    /// Wraps a design whose columns already have norm `sqrt(n)`.
    pub(crate) fn from_normalized(x: Array2<F>, y: Array1<F>) -> Self {
        let column_scales = Array1::ones(x.ncols());
        Dataset { y, x, column_scales }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> ArrayView1<'_, F> {
        self.y.view()
    }

    /// Normalized design, stored column-major.
    pub fn x(&self) -> ArrayView2<'_, F> {
        self.x.view()
    }

    pub fn column_scales(&self) -> ArrayView1<'_, F> {
        self.column_scales.view()
    }

    pub fn sqrt_n(&self) -> F {
        F::from_usize(self.n()).expect("n fits in F").sqrt()
    }

    /// Converts coefficients on the normalized design back to raw-covariate units.
    pub fn to_original_units(&self, beta: ArrayView1<F>) -> Array1<F> {
        &beta * &self.column_scales
    }

    /// Keeps only the listed rows and re-normalizes the columns. The returned
    /// scales map coefficients of the new dataset back to the units of `self`.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select(Axis(0), rows);
        let y = self.y.select(Axis(0), rows);
        Dataset::new(x.view(), y)
    }

    /// `y - X beta - sqrt(n) gamma`.
    pub fn residuals(&self, beta: ArrayView1<F>, gamma: ArrayView1<F>) -> Array1<F> {
        let mut r = &self.y - &self.x.dot(&beta);
        r.scaled_add(-self.sqrt_n(), &gamma);
        r
    }
}

/// Rescales every column to Euclidean norm `sqrt(n)`; returns the design in
/// column-major layout with the per-column factors `sqrt(n) / ||x_j||`.
pub fn normalize_columns<F: Float>(x_raw: ArrayView2<F>) -> Result<(Array2<F>, Array1<F>)> {
    let (n, p) = x_raw.dim();
    if x_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "X" });
    }
    let sqrt_n = F::from_usize(n).expect("n fits in F").sqrt();
    let mut x = Array2::zeros((n, p).f());
    let mut scales = Array1::zeros(p);
    for (j, col) in x_raw.axis_iter(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm == F::zero() {
            return Err(Error::ZeroColumn { column: j });
        }
        let s = sqrt_n / norm;
        scales[j] = s;
        x.column_mut(j).assign(&(&col * s));
    }
    Ok((x, scales))
}

/// Nonzero indices of `v`.
pub fn support<F: Float>(v: ArrayView1<F>) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != F::zero())
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningParams<F> {
    pub lambda_beta: F,
    pub lambda_gamma: F,
    pub lambda_theta: F,
    pub tau_theta: F,
}

impl<F: Float> TuningParams<F> {
    pub fn new(lambda_beta: F, lambda_gamma: F, lambda_theta: F, tau_theta: F) -> Result<Self> {
        for (name, v) in [
            ("lambda_beta", lambda_beta),
            ("lambda_gamma", lambda_gamma),
            ("lambda_theta", lambda_theta),
            ("tau_theta", tau_theta),
        ] {
            if !(v >= F::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(TuningParams {
            lambda_beta,
            lambda_gamma,
            lambda_theta,
            tau_theta,
        })
    }
}

/// Adaptive weights. `None` marks a coordinate outside the preliminary
/// support; such coefficients are structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<F> {
    w_beta: Vec<Option<F>>,
    w_gamma: Vec<Option<F>>,
    r_w: F,
}

impl<F: Float> Weights<F> {
    pub fn new(w_beta: Vec<Option<F>>, w_gamma: Vec<Option<F>>, r_w: F) -> Result<Self> {
        if !(r_w > F::zero()) || !r_w.is_finite() {
            return Err(Error::InvalidParameter(format!("R_w must be positive, got {r_w}")));
        }
        let floor = F::one() / r_w;
        for w in w_beta.iter().flatten() {
            if !w.is_finite() || *w < floor {
                return Err(Error::InvalidParameter(format!("beta weight {w} below 1/R_w")));
            }
        }
        for w in w_gamma.iter().flatten() {
            if !w.is_finite() || *w < F::zero() || *w > r_w {
                return Err(Error::InvalidParameter(format!("gamma weight {w} outside [0, R_w]")));
            }
        }
        Ok(Weights { w_beta, w_gamma, r_w })
    }

    /// All coordinates active with weight one.
    pub fn unit(p: usize, n: usize) -> Self {
        Weights {
            w_beta: vec![Some(F::one()); p],
            w_gamma: vec![Some(F::one()); n],
            r_w: F::one(),
        }
    }

    pub fn r_w(&self) -> F {
        self.r_w
    }

    pub fn beta(&self, j: usize) -> Option<F> {
        self.w_beta[j]
    }

    pub fn gamma(&self, i: usize) -> Option<F> {
        self.w_gamma[i]
    }

    pub fn beta_weights(&self) -> &[Option<F>] {
        &self.w_beta
    }

    pub fn gamma_weights(&self) -> &[Option<F>] {
        &self.w_gamma
    }

    pub fn beta_support(&self) -> Vec<usize> {
        active(&self.w_beta)
    }

    pub fn gamma_support(&self) -> Vec<usize> {
        active(&self.w_gamma)
    }
}

fn active<F>(w: &[Option<F>]) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, w)| w.is_some())
        .map(|(i, _)| i)
        .collect()
}

/// Output of the alternating robust fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<F> {
    /// Coefficients on the normalized design.
    pub beta: Array1<F>,
    pub gamma: Array1<F>,
    pub support_beta: Vec<usize>,
    pub support_gamma: Vec<usize>,
    /// `L(b0,g0), L(b1,g0), L(b1,g1), ...`
    pub objective_trace: Vec<F>,
    pub iterations: usize,
    pub converged: bool,
    pub tuning: TuningParams<F>,
    pub rule_name: String,
}

impl<F: Float> FitResult<F> {
    pub(crate) fn new(
        beta: Array1<F>,
        gamma: Array1<F>,
        objective_trace: Vec<F>,
        iterations: usize,
        converged: bool,
        tuning: TuningParams<F>,
        rule_name: &str,
    ) -> Self {
        FitResult {
            support_beta: support(beta.view()),
            support_gamma: support(gamma.view()),
            beta,
            gamma,
            objective_trace,
            iterations,
            converged,
            tuning,
            rule_name: rule_name.to_string(),
        }
    }
}

/// Penalized objective
/// `(1/2n)||y - X b - sqrt(n) g||^2 + lambda_b sum_j w_bj |b_j| + (1/n) sum_i P(sqrt(n) g_i; lambda_g w_gi)`.
///
/// The outlier penalty is `rule.penalty` evaluated on the scale where the
/// closed-form update `g_i = theta(r_i; lambda_g w_gi) / sqrt(n)` is the exact
/// coordinate minimizer. For the soft rule this is
/// `lambda_g sum_i w_gi |g_i| / sqrt(n)`; at `n = 1` it is `lambda_g sum_i w_gi P(g_i)`.
pub fn objective<F: Float>(
    dataset: &Dataset<F>,
    beta: ArrayView1<F>,
    gamma: ArrayView1<F>,
    rule: &ThresholdingRule<F>,
    weights: &Weights<F>,
    tuning: &TuningParams<F>,
) -> Result<F> {
    let (n, p) = (dataset.n(), dataset.p());
    if beta.len() != p || gamma.len() != n {
        return Err(Error::Dimension(format!(
            "beta has {} entries (p = {p}), gamma has {} (n = {n})",
            beta.len(),
            gamma.len()
        )));
    }
    if weights.w_beta.len() != p || weights.w_gamma.len() != n {
        return Err(Error::Dimension("weights do not match dataset".into()));
    }
    let nf = F::from_usize(n).expect("n fits in F");
    let sqrt_n = nf.sqrt();
    let r = dataset.residuals(beta, gamma);
    let loss = r.dot(&r) / (F::cast(2.0) * nf);

    let mut beta_pen = F::zero();
    for (j, &b) in beta.iter().enumerate() {
        if b != F::zero() {
            let w = weights.w_beta[j].ok_or(Error::OutsideSupport { block: "beta", index: j })?;
            beta_pen = beta_pen + w * b.abs();
        }
    }
    let mut gamma_pen = F::zero();
    for (i, &g) in gamma.iter().enumerate() {
        if g != F::zero() {
            let w = weights.w_gamma[i].ok_or(Error::OutsideSupport { block: "gamma", index: i })?;
            gamma_pen = gamma_pen + rule.penalty(sqrt_n * g, tuning.lambda_gamma * w);
        }
    }
    Ok(loss + tuning.lambda_beta * beta_pen + gamma_pen / nf)
}
