//! Monte Carlo harness for the mean-shift regression design.
//!
//! Rows of `X` are drawn from `N_p(0, Sigma)` with `Sigma_ij = rho^|i-j|` via
//! the exact AR(1) recursion `w_1 = z_1`, `w_t = rho w_{t-1} + sqrt(1 - rho^2) z_t`.
//! Columns are then scaled to norm `sqrt(n)`. `beta*_j = sgn(u_j)` on a
//! uniformly drawn support, outliers add `outlier_magnitude` to `y_i` on a
//! uniformly drawn row set, and `eps ~ N(0, sigma^2)`.
//!
//! Standard normals come from `rand_distr::StandardNormal` (ziggurat) on a
//! ChaCha8 stream. Results are reproducible for a given build; bit-identical
//! output across languages is not a goal.

use std::io::Write;

use ndarray::{Array1, Array2, ShapeBuilder};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{default_min_ratio, lasso_path, lambda_grid, SolverOptions};
use crate::model::{normalize_columns, support, Dataset};
use crate::preliminary::PreliminaryFit;
use crate::selection::{bic_score, preliminary_stage, robust_stage, PipelineConfig, PrelimVariant};
use crate::thresholding::ThresholdingRule;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub s_star: usize,
    pub g_star: usize,
    /// Shift added to an outlying response, i.e. `sqrt(n) gamma*_i`.
    pub outlier_magnitude: f64,
    pub rho_cov: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(n: usize, p: usize, s_star: usize, g_star: usize, seed: u64) -> Self {
        Scenario {
            n,
            p,
            s_star,
            g_star,
            outlier_magnitude: 8.0,
            rho_cov: 0.3,
            sigma: 1.0,
            seed,
        }
    }

    /// `g* = round(pct * n / 100)`.
    pub fn with_outlier_pct(n: usize, p: usize, s_star: usize, pct: f64, seed: u64) -> Self {
        let g = (pct * n as f64 / 100.0).round() as usize;
        Scenario::new(n, p, s_star, g.min(n), seed)
    }

    pub fn outlier_pct(&self) -> f64 {
        100.0 * self.g_star as f64 / self.n as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParameter("scenario needs n, p >= 1".into()));
        }
        if self.s_star > self.p || self.g_star > self.n {
            return Err(Error::InvalidParameter(format!(
                "need s* <= p and g* <= n, got s* = {}, p = {}, g* = {}, n = {}",
                self.s_star, self.p, self.g_star, self.n
            )));
        }
        if !self.outlier_magnitude.is_finite() || !(self.sigma >= 0.0) || !(self.rho_cov.abs() < 1.0) {
            return Err(Error::InvalidParameter("need finite magnitude, sigma >= 0, |rho| < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta_star: Array1<f64>,
    pub gamma_star: Array1<f64>,
    pub s_star: Vec<usize>,
    pub g_star: Vec<usize>,
}

/// Draws one dataset and its ground truth from `scenario`.
pub fn generate(scenario: &Scenario) -> Result<(Dataset<f64>, GroundTruth)> {
    scenario.validate()?;
    let Scenario { n, p, s_star, g_star, .. } = *scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let rho = scenario.rho_cov;
    let innov = (1.0 - rho * rho).sqrt();

    let mut raw = Array2::<f64>::zeros((n, p).f());
    for i in 0..n {
        let mut w: f64 = rng.sample(StandardNormal);
        raw[[i, 0]] = w;
        for t in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            w = rho * w + innov * z;
            raw[[i, t]] = w;
        }
    }
    let mut s: Vec<usize> = sample(&mut rng, p, s_star).into_vec();
    s.sort_unstable();
    let mut beta_star = Array1::zeros(p);
    for &j in &s {
        let u: f64 = rng.sample(StandardNormal);
        beta_star[j] = if u < 0.0 { -1.0 } else { 1.0 };
    }
    let mut g: Vec<usize> = sample(&mut rng, n, g_star).into_vec();
    g.sort_unstable();
    let sqrt_n = (n as f64).sqrt();
    let mut gamma_star = Array1::zeros(n);
    for &i in &g {
        gamma_star[i] = scenario.outlier_magnitude / sqrt_n;
    }
    let eps: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));

    let (x, _) = normalize_columns(raw.view())?;
    let mut y = x.dot(&beta_star) + &eps * scenario.sigma;
    for &i in &g {
        y[i] += scenario.outlier_magnitude;
    }
    // Drop any outliers of magnitude zero from the reported support.
    let g_support = if scenario.outlier_magnitude == 0.0 { Vec::new() } else { g };
    let truth = GroundTruth {
        s_star: support(beta_star.view()),
        g_star: g_support,
        beta_star,
        gamma_star,
    };
    Ok((Dataset::from_normalized(x, y), truth))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub sq_l2_error: f64,
    pub fp: usize,
    pub tp: usize,
    /// `s~ + g~` of the preliminary fit, or `|supp beta|` without one.
    pub support_size_prelim: usize,
    /// `S* within S~ and G* within G~`; `None` without a preliminary fit.
    pub coverage: Option<bool>,
}

pub fn evaluate(fit_beta: &Array1<f64>, prelim: Option<&PreliminaryFit<f64>>, truth: &GroundTruth) -> Metrics {
    let sq_l2_error = fit_beta
        .iter()
        .zip(truth.beta_star.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mut fp = 0;
    let mut tp = 0;
    for (b, t) in fit_beta.iter().zip(truth.beta_star.iter()) {
        if *b != 0.0 {
            if *t != 0.0 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let (support_size_prelim, coverage) = match prelim {
        Some(pre) => {
            let covered = truth.s_star.iter().all(|j| pre.beta_tilde[*j] != 0.0)
                && truth.g_star.iter().all(|i| pre.gamma_tilde[*i] != 0.0);
            (pre.support_size(), Some(covered))
        }
        None => (support(fit_beta.view()).len(), None),
    };
    Metrics {
        sq_l2_error,
        fp,
        tp,
        support_size_prelim,
        coverage,
    }
}

/// BIC-tuned unit-weight lasso ignoring outliers.
pub fn lasso_baseline(dataset: &Dataset<f64>, grid_size: usize, opts: &SolverOptions<f64>) -> Result<Array1<f64>> {
    let (n, p) = (dataset.n(), dataset.p());
    let w = Array1::ones(p);
    let grid = lambda_grid(dataset.x(), dataset.y(), w.view(), grid_size.max(2), default_min_ratio(n, p))?;
    let path = lasso_path(dataset.x(), dataset.y(), w.view(), &grid, opts)?;
    let zero = Array1::zeros(n);
    let mut best: Option<(f64, Array1<f64>)> = None;
    for sol in path {
        let bic = bic_score(dataset, sol.coef.view(), zero.view());
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, sol.coef));
        }
    }
    Ok(best.expect("nonempty grid").1)
}

/// [`lasso_baseline`] after deleting the true outlying rows; coefficients are
/// returned on the scale of `dataset`'s design.
pub fn oracle_baseline(dataset: &Dataset<f64>, truth: &GroundTruth, grid_size: usize, opts: &SolverOptions<f64>) -> Result<Array1<f64>> {
    if truth.g_star.len() >= dataset.n() {
        return Err(Error::Degenerate("every observation is an outlier".into()));
    }
    if truth.g_star.is_empty() {
        return lasso_baseline(dataset, grid_size, opts);
    }
    let keep: Vec<usize> = (0..dataset.n()).filter(|i| truth.g_star.binary_search(i).is_err()).collect();
    let sub = dataset.select_rows(&keep)?;
    let beta = lasso_baseline(&sub, grid_size, opts)?;
    Ok(sub.to_original_units(beta.view()))
}

/// Per-replication seed, independent of execution order.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio stride.
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One Monte Carlo cell set: a scenario run `replications` times through the
/// requested preliminary variants, rules and baselines.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// `seed` acts as the master seed.
    pub scenario: Scenario,
    pub replications: usize,
    pub rules: Vec<ThresholdingRule<f64>>,
    pub variants: Vec<PrelimVariant>,
    /// Emit rows for the preliminary estimates themselves.
    pub prelim_rows: bool,
    pub baselines: bool,
    pub config: PipelineConfig<f64>,
}

impl Experiment {
    pub fn new(scenario: Scenario, replications: usize) -> Self {
        Experiment {
            scenario,
            replications,
            rules: Vec::new(),
            variants: vec![PrelimVariant::Pre],
            prelim_rows: false,
            baselines: false,
            config: PipelineConfig::default(),
        }
    }
}

/// Outcome of a single replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// `(variant, rule name, metrics)`; rule `"prelim"` holds the preliminary fit itself.
    pub cells: Vec<(String, String, std::result::Result<Metrics, String>)>,
}

pub fn run_replication(exp: &Experiment, index: usize) -> Replication {
    let seed = replication_seed(exp.scenario.seed, index as u64);
    let scenario = Scenario {
        seed,
        ..exp.scenario.clone()
    };
    let mut cells = Vec::new();
    let (dataset, truth) = match generate(&scenario) {
        Ok(v) => v,
        Err(e) => {
            cells.push(("-".into(), "generate".into(), Err(e.to_string())));
            return Replication { index, seed, cells };
        }
    };
    for &variant in &exp.variants {
        let config = PipelineConfig {
            variant,
            ..exp.config.clone()
        };
        let prelim = preliminary_stage(&dataset, &config);
        if exp.prelim_rows {
            let m = prelim
                .as_ref()
                .map(|p| evaluate(&p.beta_tilde, Some(p), &truth))
                .map_err(|e| e.to_string());
            cells.push((variant.name().into(), "prelim".into(), m));
        }
        for rule in &exp.rules {
            let m = match &prelim {
                Ok(p) => robust_stage(&dataset, p, rule, &config)
                    .map(|(_, sel)| evaluate(&sel.fit.beta, Some(p), &truth))
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            cells.push((variant.name().into(), rule.name().into(), m));
        }
    }
    if exp.baselines {
        let opts = exp.config.solver;
        let grid = exp.config.grid_size;
        let lasso = lasso_baseline(&dataset, grid, &opts)
            .map(|b| evaluate(&b, None, &truth))
            .map_err(|e| e.to_string());
        cells.push(("-".into(), "lasso".into(), lasso));
        let oracle = oracle_baseline(&dataset, &truth, grid, &opts)
            .map(|b| evaluate(&b, None, &truth))
            .map_err(|e| e.to_string());
        cells.push(("-".into(), "oracle".into(), oracle));
    }
    Replication { index, seed, cells }
}

/// Mean metrics of one `(variant, rule)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub prelim: String,
    pub outlier_pct: f64,
    pub magnitude: f64,
    pub rule: String,
    pub sq_l2_error: f64,
    pub fp: f64,
    pub tp: f64,
    pub support_size: f64,
    /// Fraction of replications with coverage; `None` for baselines.
    pub coverage: Option<f64>,
    pub replications: usize,
    pub failures: usize,
}

/// Runs all replications (in parallel on the current rayon pool) and averages
/// each cell over its successful replications, in replication order.
pub fn run_monte_carlo(exp: &Experiment) -> Result<Vec<SummaryRow>> {
    if exp.replications == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    exp.scenario.validate()?;
    let reps: Vec<Replication> = (0..exp.replications)
        .into_par_iter()
        .map(|i| run_replication(exp, i))
        .collect();
    Ok(summarize(exp, &reps))
}

pub fn summarize(exp: &Experiment, reps: &[Replication]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for rep in reps {
        for (v, r, _) in &rep.cells {
            if !keys.iter().any(|(kv, kr)| kv == v && kr == r) {
                keys.push((v.clone(), r.clone()));
            }
        }
    }
    keys.into_iter()
        .map(|(variant, rule)| {
            let mut ok: Vec<Metrics> = Vec::new();
            let mut failures = 0;
            for rep in reps {
                for (v, r, m) in &rep.cells {
                    if *v == variant && *r == rule {
                        match m {
                            Ok(m) => ok.push(*m),
                            Err(e) => {
                                log::warn!("replication {} ({variant}, {rule}) failed: {e}", rep.index);
                                failures += 1;
                            }
                        }
                    }
                }
            }
            let k = ok.len() as f64;
            let mean = |f: &dyn Fn(&Metrics) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(f).sum::<f64>() / k
                }
            };
            let coverage = if ok.iter().all(|m| m.coverage.is_some()) && !ok.is_empty() {
                Some(mean(&|m| if m.coverage == Some(true) { 1.0 } else { 0.0 }))
            } else {
                None
            };
            SummaryRow {
                prelim: variant,
                outlier_pct: exp.scenario.outlier_pct(),
                magnitude: exp.scenario.outlier_magnitude,
                sq_l2_error: mean(&|m| m.sq_l2_error),
                fp: mean(&|m| m.fp as f64),
                tp: mean(&|m| m.tp as f64),
                support_size: mean(&|m| m.support_size_prelim as f64),
                coverage,
                rule,
                replications: ok.len(),
                failures,
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "prelim",
    "outlier_pct",
    "rule",
    "sq_l2_error",
    "fp",
    "tp",
    "support_size",
    "coverage",
    "magnitude",
    "replications",
    "failures",
];

/// Writes summary rows as CSV. Baseline rows leave `coverage` empty.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.prelim.clone(),
            r.outlier_pct.to_string(),
            r.rule.clone(),
            r.sq_l2_error.to_string(),
            r.fp.to_string(),
            r.tp.to_string(),
            r.support_size.to_string(),
            r.coverage.map(|c| c.to_string()).unwrap_or_default(),
            r.magnitude.to_string(),
            r.replications.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The published experiment layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reproduction {
    /// Outlier percentage sweep, `(n, p, s*) = (200, 200, 10)`.
    Table1,
    /// Outlier percentage sweep, `(200, 400, 20)`; `(100, 200, 10)` at desk scale.
    Table2,
    /// Preliminary support size and coverage over outlier percentages 1..35.
    Figure1,
    /// Outlier magnitude sweep 2..14 at 10% outliers, soft and hard rules.
    Figure2,
}

impl std::str::FromStr for Reproduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table1" => Ok(Reproduction::Table1),
            "table2" => Ok(Reproduction::Table2),
            "figure1" => Ok(Reproduction::Figure1),
            "figure2" => Ok(Reproduction::Figure2),
            other => Err(Error::InvalidParameter(format!(
                "unknown target `{other}`; expected table1, table2, figure1 or figure2"
            ))),
        }
    }
}

pub const TABLE_OUTLIER_PCTS: [f64; 4] = [5.0, 10.0, 20.0, 30.0];
pub const FIGURE1_OUTLIER_PCTS: [f64; 8] = [1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0];
pub const FIGURE2_MAGNITUDES: [f64; 7] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0];

impl Reproduction {
    pub fn name(&self) -> &'static str {
        match self {
            Reproduction::Table1 => "table1",
            Reproduction::Table2 => "table2",
            Reproduction::Figure1 => "figure1",
            Reproduction::Figure2 => "figure2",
        }
    }

    /// One experiment per sweep point, each using `seed` as master seed.
    pub fn experiments(&self, replications: usize, seed: u64, full_scale: bool) -> Vec<Experiment> {
        let table_rules = vec![
            ThresholdingRule::Soft,
            ThresholdingRule::Hard,
            ThresholdingRule::default_scad(),
            ThresholdingRule::Garrote,
        ];
        let both = vec![PrelimVariant::Pre, PrelimVariant::ThPre];
        match self {
            Reproduction::Table1 | Reproduction::Table2 => {
                let (n, p, s) = match (self, full_scale) {
                    (Reproduction::Table1, _) => (200, 200, 10),
                    (_, true) => (200, 400, 20),
                    (_, false) => (100, 200, 10),
                };
                TABLE_OUTLIER_PCTS
                    .iter()
                    .map(|&pct| Experiment {
                        rules: table_rules.clone(),
                        variants: both.clone(),
                        baselines: true,
                        ..Experiment::new(Scenario::with_outlier_pct(n, p, s, pct, seed), replications)
                    })
                    .collect()
            }
            Reproduction::Figure1 => FIGURE1_OUTLIER_PCTS
                .iter()
                .map(|&pct| Experiment {
                    variants: both.clone(),
                    prelim_rows: true,
                    ..Experiment::new(Scenario::with_outlier_pct(200, 200, 10, pct, seed), replications)
                })
                .collect(),
            Reproduction::Figure2 => {
                let (n, p, s, g) = if full_scale { (200, 400, 20, 20) } else { (100, 200, 10, 10) };
                FIGURE2_MAGNITUDES
                    .iter()
                    .map(|&m| Experiment {
                        rules: vec![ThresholdingRule::Soft, ThresholdingRule::Hard],
                        ..Experiment::new(
                            Scenario {
                                outlier_magnitude: m,
                                ..Scenario::new(n, p, s, g, seed)
                            },
                            replications,
                        )
                    })
                    .collect()
            }
        }
    }
}
