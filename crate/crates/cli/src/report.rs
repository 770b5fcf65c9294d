use serde::{Deserialize, Serialize};

use robust_sparse::EigenReport;
use robust_sparse::robust::estimating_equation_residual;
use robust_sparse::selection::bic_components;
use robust_sparse::{Dataset, PipelineConfig, PipelineResult, Rule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub lambda_beta: f64,
    pub lambda_gamma: f64,
    pub lambda_theta: f64,
    pub tau_theta: f64,
    pub r_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicReport {
    pub total: f64,
    pub residual_term: f64,
    pub complexity_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub grid_size: usize,
    pub lambda_beta: Vec<f64>,
    pub lambda_gamma: Vec<f64>,
    /// Grid points whose alternating iterations hit the outer cap.
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreliminaryReport {
    pub variant: String,
    pub support_beta: Vec<usize>,
    pub support_gamma: Vec<usize>,
    pub bic: f64,
}

/// Everything `fit` emits. `beta` is in the units of the input columns;
/// `beta_normalized` and `gamma` refer to the design with columns scaled to
/// norm `sqrt(n)`, on which the BIC terms are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub p: usize,
    pub rule: String,
    pub seed: u64,
    pub beta: Vec<f64>,
    pub beta_normalized: Vec<f64>,
    pub gamma: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub support_beta: Vec<usize>,
    pub support_gamma: Vec<usize>,
    pub tuning: TuningReport,
    pub bic: BicReport,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub estimating_equation_residual: f64,
    pub preliminary: PreliminaryReport,
    pub grid: GridReport,
}

impl FitReport {
    pub fn new(dataset: &Dataset, rule: &Rule, config: &PipelineConfig, seed: u64, res: &PipelineResult) -> Self {
        let fit = &res.selected.fit;
        let (residual_term, complexity_term) = bic_components(dataset, fit.beta.view(), fit.gamma.view());
        FitReport {
            n: dataset.n(),
            p: dataset.p(),
            rule: rule.to_string(),
            seed,
            beta: dataset.to_original_units(fit.beta.view()).to_vec(),
            beta_normalized: fit.beta.to_vec(),
            gamma: fit.gamma.to_vec(),
            column_scales: dataset.column_scales().to_vec(),
            support_beta: fit.support_beta.clone(),
            support_gamma: fit.support_gamma.clone(),
            tuning: TuningReport {
                lambda_beta: fit.tuning.lambda_beta,
                lambda_gamma: fit.tuning.lambda_gamma,
                lambda_theta: fit.tuning.lambda_theta,
                tau_theta: fit.tuning.tau_theta,
                r_w: config.r_w,
            },
            bic: BicReport {
                total: res.selected.bic,
                residual_term,
                complexity_term,
            },
            iterations: fit.iterations,
            converged: fit.converged,
            objective_trace: fit.objective_trace.clone(),
            estimating_equation_residual: estimating_equation_residual(dataset, fit, rule, &fit.tuning, &res.weights),
            preliminary: PreliminaryReport {
                variant: config.variant.name().to_string(),
                support_beta: res.prelim.s_tilde.clone(),
                support_gamma: res.prelim.g_tilde.clone(),
                bic: res.prelim.bic,
            },
            grid: GridReport {
                grid_size: config.grid_size,
                lambda_beta: res.selected.grid_beta.clone(),
                lambda_gamma: res.selected.grid_gamma.clone(),
                nonconverged: res.selected.nonconverged,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub p: usize,
    pub u: usize,
    pub u_prime: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    pub bound_35: f64,
    pub kappa: Option<f64>,
    pub rho: Option<f64>,
    pub rho_at_least_one: Option<bool>,
    pub supports_examined: usize,
}

impl DiagnosticsReport {
    pub fn new(n: usize, p: usize, u: usize, u_prime: usize, kappa: Option<f64>, r: &EigenReport) -> Self {
        DiagnosticsReport {
            n,
            p,
            u,
            u_prime,
            delta_min: r.delta_min,
            delta_max: r.delta_max,
            bound_35: r.bound_35,
            kappa,
            rho: kappa.map(|_| r.rho),
            rho_at_least_one: kappa.map(|_| r.rho_at_least_one),
            supports_examined: r.supports_examined,
        }
    }
}
