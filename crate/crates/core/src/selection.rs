//! BIC tuning of `(lambda_beta, lambda_gamma)` and the two-stage pipeline.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::float::Float;
use crate::lasso::{default_min_ratio, lambda_grid, log_grid, SolverOptions};
use crate::model::{Dataset, FitResult, TuningParams, Weights};
use crate::preliminary::{default_lambda_theta_grid, select_preliminary, PreliminaryFit, DEFAULT_TAU_GRID};
use crate::robust::{compute_weights, fit_restricted, RestrictedDesign, RobustOptions, DEFAULT_R_W};
use crate::thresholding::ThresholdingRule;

pub const DEFAULT_GRID_SIZE: usize = 20;

/// `(residual term, complexity term)` of [`bic_score`].
pub fn bic_components<F: Float>(dataset: &Dataset<F>, beta: ArrayView1<F>, gamma: ArrayView1<F>) -> (F, F) {
    let nf = F::from_usize(dataset.n()).expect("n fits in F");
    let r = dataset.residuals(beta, gamma);
    let nnz = beta.iter().chain(gamma.iter()).filter(|v| **v != F::zero()).count();
    let k = F::from_usize(nnz).expect("count fits in F");
    (r.dot(&r) / (F::cast(2.0) * nf), nf.ln() / nf * k)
}

/// `(1/2n)||y - X b - sqrt(n) g||^2 + (log n / n)(|supp b| + |supp g|)`.
pub fn bic_score<F: Float>(dataset: &Dataset<F>, beta: ArrayView1<F>, gamma: ArrayView1<F>) -> F {
    let (fit, pen) = bic_components(dataset, beta, gamma);
    fit + pen
}

/// Default `lambda_beta` candidates: a lasso path on the preliminary support
/// against the working response `y - sqrt(n) g~`.
pub fn default_beta_grid<F: Float>(dataset: &Dataset<F>, prelim: &PreliminaryFit<F>, weights: &Weights<F>, count: usize) -> Result<Vec<F>> {
    let design = RestrictedDesign::new(dataset, weights)?;
    let mut working = dataset.y().to_owned();
    working.scaled_add(-dataset.sqrt_n(), &prelim.gamma_tilde);
    let ratio = default_min_ratio(dataset.n(), design.cols.len());
    lambda_grid(design.x.view(), working.view(), design.w.view(), count.max(2), ratio)
}

/// Default `lambda_gamma` candidates: log-spaced so that `lambda_gamma * max w_g`
/// runs from `max |r|` down to `median |r|`, with `r = y - X b~`.
pub fn default_gamma_grid<F: Float>(dataset: &Dataset<F>, prelim: &PreliminaryFit<F>, weights: &Weights<F>, count: usize) -> Vec<F> {
    let w_max = weights
        .gamma_weights()
        .iter()
        .flatten()
        .fold(F::zero(), |a, &b| a.max(b));
    if w_max == F::zero() {
        return vec![F::zero()];
    }
    let r = &dataset.y() - &dataset.x().dot(&prelim.beta_tilde);
    let mut abs: Vec<F> = r.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let hi = *abs.last().expect("n >= 1");
    if hi == F::zero() {
        return vec![F::zero()];
    }
    let mid = abs.len() / 2;
    let median = if abs.len() % 2 == 1 {
        abs[mid]
    } else {
        (abs[mid - 1] + abs[mid]) * F::cast(0.5)
    };
    let lo = if median > F::zero() { median } else { hi * F::cast(1e-3) };
    log_grid(hi / w_max, count.max(2), (lo / hi).min(F::one()))
}

/// Winner of a BIC grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedFit<F> {
    pub fit: FitResult<F>,
    pub bic: F,
    pub grid_beta: Vec<F>,
    pub grid_gamma: Vec<F>,
    /// Grid points whose outer loop hit `max_outer`.
    pub nonconverged: usize,
}

/// Fits every `(lambda_beta, lambda_gamma)` pair from the preliminary
/// coefficients and keeps the BIC minimizer. Ties go to the larger
/// `lambda_beta`, then the larger `lambda_gamma`.
pub fn select_fit<F: Float>(
    dataset: &Dataset<F>,
    prelim: &PreliminaryFit<F>,
    rule: &ThresholdingRule<F>,
    grid_beta: &[F],
    grid_gamma: &[F],
    r_w: F,
    opts: &RobustOptions<F>,
) -> Result<SelectedFit<F>> {
    if grid_beta.is_empty() || grid_gamma.is_empty() {
        return Err(Error::InvalidParameter("empty tuning grid".into()));
    }
    let weights = compute_weights(prelim, r_w)?;
    let design = RestrictedDesign::new(dataset, &weights)?;
    let mut gb = grid_beta.to_vec();
    gb.sort_by(|a, b| b.partial_cmp(a).expect("finite grid"));
    let mut gg = grid_gamma.to_vec();
    gg.sort_by(|a, b| b.partial_cmp(a).expect("finite grid"));

    let points: Vec<(F, F)> = gb.iter().flat_map(|&lb| gg.iter().map(move |&lg| (lb, lg))).collect();
    let results: Vec<Result<(FitResult<F>, F)>> = points
        .par_iter()
        .map(|&(lb, lg)| {
            let tuning = TuningParams::new(lb, lg, prelim.lambda_theta, prelim.tau_theta)?;
            let fit = fit_restricted(dataset, &design, &weights, rule, &tuning, prelim.beta_tilde.view(), opts)?;
            let bic = bic_score(dataset, fit.beta.view(), fit.gamma.view());
            Ok((fit, bic))
        })
        .collect();

    let mut best: Option<(FitResult<F>, F)> = None;
    let mut fallback: Option<(FitResult<F>, F)> = None;
    let mut nonconverged = 0;
    let mut last_error = String::new();
    for r in results {
        match r {
            Ok((fit, bic)) if fit.converged => {
                if best.as_ref().is_none_or(|(_, b)| bic < *b) {
                    best = Some((fit, bic));
                }
            }
            Ok((fit, bic)) => {
                nonconverged += 1;
                last_error = format!("outer loop hit {} iterations at {:?}", opts.max_outer, fit.tuning);
                if fallback.as_ref().is_none_or(|(_, b)| bic < *b) {
                    fallback = Some((fit, bic));
                }
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    if best.is_none() && fallback.is_some() {
        log::warn!("no grid point converged; {last_error}");
    }
    let (fit, bic) = best.ok_or(Error::NoConvergence {
        points: points.len(),
        detail: last_error,
    })?;
    Ok(SelectedFit {
        fit,
        bic,
        grid_beta: gb,
        grid_gamma: gg,
        nonconverged,
    })
}

/// Which preliminary estimator feeds the robust stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrelimVariant {
    /// Plain lasso on the extended design.
    Pre,
    /// Lasso followed by hard thresholding at `tau_theta * lambda_theta`.
    ThPre,
}

impl PrelimVariant {
    pub fn name(&self) -> &'static str {
        match self {
            PrelimVariant::Pre => "pre",
            PrelimVariant::ThPre => "thpre",
        }
    }
}

impl fmt::Display for PrelimVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrelimVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pre" => Ok(PrelimVariant::Pre),
            "thpre" => Ok(PrelimVariant::ThPre),
            other => Err(Error::InvalidParameter(format!("unknown preliminary variant `{other}`; expected pre or thpre"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<F> {
    /// Points per tuning grid.
    pub grid_size: usize,
    pub r_w: F,
    pub variant: PrelimVariant,
    pub tau_grid: Vec<F>,
    pub robust: RobustOptions<F>,
    pub solver: SolverOptions<F>,
}

impl<F: Float> Default for PipelineConfig<F> {
    fn default() -> Self {
        PipelineConfig {
            grid_size: DEFAULT_GRID_SIZE,
            r_w: F::cast(DEFAULT_R_W),
            variant: PrelimVariant::Pre,
            tau_grid: DEFAULT_TAU_GRID.iter().map(|&t| F::cast(t)).collect(),
            robust: RobustOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl<F: Float> PipelineConfig<F> {
    pub fn with_variant(variant: PrelimVariant) -> Self {
        PipelineConfig {
            variant,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult<F> {
    pub prelim: PreliminaryFit<F>,
    pub weights: Weights<F>,
    pub selected: SelectedFit<F>,
}

/// BIC-selected preliminary fit for `config.variant` over the default grids.
pub fn preliminary_stage<F: Float>(dataset: &Dataset<F>, config: &PipelineConfig<F>) -> Result<PreliminaryFit<F>> {
    let grid = default_lambda_theta_grid(dataset, config.grid_size);
    select_preliminary(
        dataset,
        &grid,
        &config.tau_grid,
        config.variant == PrelimVariant::ThPre,
        &config.solver,
    )
}

/// Robust stage given a preliminary fit, over the default grids.
pub fn robust_stage<F: Float>(
    dataset: &Dataset<F>,
    prelim: &PreliminaryFit<F>,
    rule: &ThresholdingRule<F>,
    config: &PipelineConfig<F>,
) -> Result<(Weights<F>, SelectedFit<F>)> {
    let weights = compute_weights(prelim, config.r_w).map_err(|e| e.at_stage("weights"))?;
    let grid_beta = default_beta_grid(dataset, prelim, &weights, config.grid_size).map_err(|e| e.at_stage("selection"))?;
    let grid_gamma = default_gamma_grid(dataset, prelim, &weights, config.grid_size);
    let selected = select_fit(dataset, prelim, rule, &grid_beta, &grid_gamma, config.r_w, &config.robust)
        .map_err(|e| e.at_stage("selection"))?;
    Ok((weights, selected))
}

/// Preliminary selection, adaptive weights, then BIC selection of the robust fit.
pub fn full_pipeline<F: Float>(dataset: &Dataset<F>, rule: &ThresholdingRule<F>, config: &PipelineConfig<F>) -> Result<PipelineResult<F>> {
    let prelim = preliminary_stage(dataset, config).map_err(|e| e.at_stage("preliminary"))?;
    let (weights, selected) = robust_stage(dataset, &prelim, rule, config)?;
    Ok(PipelineResult {
        prelim,
        weights,
        selected,
    })
}

/// Convenience: the BIC of an already computed fit.
pub fn fit_bic<F: Float>(dataset: &Dataset<F>, fit: &FitResult<F>) -> F {
    bic_score(dataset, fit.beta.view(), fit.gamma.view())
}
