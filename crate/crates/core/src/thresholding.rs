//! Thresholding rules and their robust-loss companions.
//!
//! A rule maps a residual `z` and a threshold `lambda` to
//! `theta(z; lambda) = argmin_x (z - x)^2 / 2 + P(x; lambda)`. The matching
//! influence function is `psi(z; lambda) = z - theta(z; lambda)` and the
//! implied robust loss `Psi` is its antiderivative with `Psi(0) = 0`.
//!
//! | rule    | loss analogue | redescending |
//! |---------|---------------|--------------|
//! | soft    | Huber         | no           |
//! | hard    | skipped mean  | yes          |
//! | scad    | Hampel        | yes          |
//! | mcp     | -             | yes          |
//! | garrote | -             | only as `|z| -> inf` |

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::float::Float;

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MCP_A: f64 = 3.0;

/// Names accepted by [`ThresholdingRule::from_str`].
pub const RULE_NAMES: [&str; 5] = ["soft", "hard", "scad", "garrote", "mcp"];

/// Anything that behaves like `theta(z; lambda)`.
pub trait Thresholder<F: Float> {
    fn theta(&self, z: F, lambda: F) -> F;
}

/// Adapts a plain closure into a [`Thresholder`], mainly for certification of
/// candidate rules.
pub struct FnThresholder<T>(pub T);

impl<F: Float, T: Fn(F, F) -> F> Thresholder<F> for FnThresholder<T> {
    fn theta(&self, z: F, lambda: F) -> F {
        (self.0)(z, lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdingRule<F> {
    Soft,
    Hard,
    Scad { a: F },
    Garrote,
    Mcp { a: F },
}

fn soft<F: Float>(z: F, lambda: F) -> F {
    z.signum() * (z.abs() - lambda).max(F::zero())
}

impl<F: Float> ThresholdingRule<F> {
    pub fn scad(a: F) -> Result<Self> {
        if !(a > F::cast(2.0)) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("scad requires a > 2, got {a}")));
        }
        Ok(ThresholdingRule::Scad { a })
    }

    pub fn mcp(a: F) -> Result<Self> {
        if !(a > F::one()) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("mcp requires a > 1, got {a}")));
        }
        Ok(ThresholdingRule::Mcp { a })
    }

    pub fn default_scad() -> Self {
        ThresholdingRule::Scad {
            a: F::cast(DEFAULT_SCAD_A),
        }
    }

    pub fn default_mcp() -> Self {
        ThresholdingRule::Mcp {
            a: F::cast(DEFAULT_MCP_A),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThresholdingRule::Soft => "soft",
            ThresholdingRule::Hard => "hard",
            ThresholdingRule::Scad { .. } => "scad",
            ThresholdingRule::Garrote => "garrote",
            ThresholdingRule::Mcp { .. } => "mcp",
        }
    }

    pub fn shape_param(&self) -> Option<F> {
        match *self {
            ThresholdingRule::Scad { a } | ThresholdingRule::Mcp { a } => Some(a),
            _ => None,
        }
    }

    /// Whether `psi` vanishes identically beyond some finite multiple of lambda.
    pub fn redescends_finitely(&self) -> bool {
        matches!(
            self,
            ThresholdingRule::Hard | ThresholdingRule::Scad { .. } | ThresholdingRule::Mcp { .. }
        )
    }

    pub fn theta(&self, z: F, lambda: F) -> F {
        let az = z.abs();
        match *self {
            ThresholdingRule::Soft => soft(z, lambda),
            ThresholdingRule::Hard => {
                if az > lambda {
                    z
                } else {
                    F::zero()
                }
            }
            ThresholdingRule::Scad { a } => {
                let two = F::cast(2.0);
                if az <= two * lambda {
                    soft(z, lambda)
                } else if az < a * lambda {
                    ((a - F::one()) * z - a * lambda * z.signum()) / (a - two)
                } else {
                    z
                }
            }
            ThresholdingRule::Garrote => {
                if az > lambda {
                    z - lambda * lambda / z
                } else {
                    F::zero()
                }
            }
            ThresholdingRule::Mcp { a } => {
                // The identity branch owns the knot so psi vanishes exactly there.
                if az < a * lambda {
                    soft(z, lambda) / (F::one() - F::one() / a)
                } else {
                    z
                }
            }
        }
    }

    /// `z - theta(z; lambda)`, evaluated in closed form where one exists.
    pub fn psi(&self, z: F, lambda: F) -> F {
        match *self {
            ThresholdingRule::Soft => z.max(-lambda).min(lambda),
            ThresholdingRule::Garrote if z.abs() > lambda => lambda * lambda / z,
            _ => z - self.theta(z, lambda),
        }
    }

    /// Penalty `P(t; lambda)` whose scalar proximal problem
    /// `argmin_x (z - x)^2 / 2 + P(x; lambda)` is solved by [`Self::theta`].
    pub fn penalty(&self, t: F, lambda: F) -> F {
        let at = t.abs();
        let half = F::cast(0.5);
        if at == F::zero() {
            return F::zero();
        }
        match *self {
            ThresholdingRule::Soft => lambda * at,
            ThresholdingRule::Hard => half * lambda * lambda,
            ThresholdingRule::Scad { a } => {
                if at <= lambda {
                    lambda * at
                } else if at <= a * lambda {
                    (F::cast(2.0) * a * lambda * at - at * at - lambda * lambda)
                        / (F::cast(2.0) * (a - F::one()))
                } else {
                    half * (a + F::one()) * lambda * lambda
                }
            }
            ThresholdingRule::Mcp { a } => {
                if at <= a * lambda {
                    lambda * at - at * at / (F::cast(2.0) * a)
                } else {
                    half * a * lambda * lambda
                }
            }
            ThresholdingRule::Garrote => {
                if lambda == F::zero() {
                    return F::zero();
                }
                // P'(t) = (sqrt(t^2 + 4 lambda^2) - t) / 2 for t > 0.
                let two_l = F::cast(2.0) * lambda;
                let root = (at * at + two_l * two_l).sqrt();
                half * (half * at * root + F::cast(2.0) * lambda * lambda * (at / two_l).asinh()
                    - half * at * at)
            }
        }
    }

    /// Knots of `psi` on the positive half line.
    fn knots(&self, lambda: F) -> Vec<F> {
        let mut k = vec![lambda];
        match *self {
            ThresholdingRule::Scad { a } => {
                k.push(F::cast(2.0) * lambda);
                k.push(a * lambda);
            }
            ThresholdingRule::Mcp { a } => k.push(a * lambda),
            _ => {}
        }
        k
    }

    /// `Psi(z; lambda) = int_0^z psi(t; lambda) dt`, by adaptive Simpson
    /// quadrature on the smooth pieces between the rule's knots.
    pub fn robust_loss(&self, z: F, lambda: F) -> F {
        if z == F::zero() {
            return F::zero();
        }
        // psi is odd, so Psi is even.
        let end = z.abs();
        let mut cuts: Vec<F> = self
            .knots(lambda)
            .into_iter()
            .filter(|&k| k > F::zero() && k < end)
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        let mut total = F::zero();
        let mut lo = F::zero();
        let tol = F::cast(1e-13).max(F::epsilon() * F::cast(16.0));
        for hi in cuts.into_iter().chain(std::iter::once(end)) {
            total = total + adaptive_simpson(|t| self.psi(t, lambda), lo, hi, tol, 40);
            lo = hi;
        }
        total
    }
}

impl<F: Float> Thresholder<F> for ThresholdingRule<F> {
    fn theta(&self, z: F, lambda: F) -> F {
        ThresholdingRule::theta(self, z, lambda)
    }
}

impl<F: Float> fmt::Display for ThresholdingRule<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape_param() {
            Some(a) => write!(f, "{}:a={}", self.name(), a),
            None => f.write_str(self.name()),
        }
    }
}

impl<F: Float> FromStr for ThresholdingRule<F> {
    type Err = Error;

    /// Parses `name` or `name:a=<real>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (s, None),
        };
        let a = match param {
            None => None,
            Some(p) => {
                let value = p
                    .strip_prefix("a=")
                    .ok_or_else(|| Error::InvalidParameter(format!("expected `a=<real>`, got `{p}`")))?;
                let v: f64 = value
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad shape parameter `{value}`")))?;
                Some(F::cast(v))
            }
        };
        let rule = match name.to_ascii_lowercase().as_str() {
            "soft" => ThresholdingRule::Soft,
            "hard" => ThresholdingRule::Hard,
            "garrote" => ThresholdingRule::Garrote,
            "scad" => return ThresholdingRule::scad(a.unwrap_or(F::cast(DEFAULT_SCAD_A))),
            "mcp" => return ThresholdingRule::mcp(a.unwrap_or(F::cast(DEFAULT_MCP_A))),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown rule `{other}`; valid rules: {}",
                    RULE_NAMES.join(", ")
                )))
            }
        };
        if a.is_some() {
            return Err(Error::InvalidParameter(format!(
                "rule `{name}` takes no shape parameter"
            )));
        }
        Ok(rule)
    }
}

fn simpson<F: Float>(fa: F, fm: F, fb: F, a: F, b: F) -> F {
    (b - a) / F::cast(6.0) * (fa + F::cast(4.0) * fm + fb)
}

fn adaptive_simpson<F: Float>(f: impl Fn(F) -> F, a: F, b: F, tol: F, depth: u32) -> F {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Float>(
        f: &impl Fn(F) -> F,
        a: F,
        b: F,
        fa: F,
        fm: F,
        fb: F,
        whole: F,
        tol: F,
        depth: u32,
    ) -> F {
        let half = F::cast(0.5);
        let m = half * (a + b);
        let lm = half * (a + m);
        let rm = half * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= F::cast(15.0) * tol {
            return left + right + delta / F::cast(15.0);
        }
        recurse(f, a, m, fa, flm, fm, left, half * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, half * tol, depth - 1)
    }
    if b <= a {
        return F::zero();
    }
    let m = F::cast(0.5) * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, depth)
}

/// Outcome of [`check_condition2`].
#[derive(Debug, Clone, PartialEq)]
pub struct Condition2Report<F> {
    pub samples: usize,
    /// Largest `|theta(z)|` seen with `|z| <= lambda`; must be zero.
    pub max_inside: F,
    /// Largest `|theta(z) - z| - lambda`; must be at most zero.
    pub max_bias_slack: F,
    pub passed: bool,
    /// The `(z, lambda)` pair with the worst violation, when the check fails.
    pub witness: Option<(F, F)>,
}

const CONDITION2_TOL: f64 = 1e-12;

/// Certifies `theta(x; l) = 0` for `|x| <= l` and `|theta(x; l) - x| <= l` on a
/// deterministic grid plus seeded random pairs, `sample_count` pairs in total.
pub fn check_condition2<F: Float, T: Thresholder<F>>(
    rule: &T,
    sample_count: usize,
) -> Condition2Report<F> {
    let sample_count = sample_count.max(1);
    let grid_count = sample_count / 2;
    let side = ((grid_count as f64).sqrt().floor() as usize).max(1);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(sample_count);
    if grid_count > 0 {
        for li in 0..side {
            let lambda = 0.05 + 5.0 * li as f64 / side as f64;
            for zi in 0..side {
                // z from -12 lambda to 12 lambda, hitting |z| = lambda exactly.
                let z = lambda * (-12.0 + 24.0 * zi as f64 / (side.max(2) - 1) as f64);
                pairs.push((z, lambda));
            }
            pairs.push((lambda, lambda));
            pairs.push((-lambda, lambda));
        }
    }
    pairs.truncate(sample_count);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    while pairs.len() < sample_count {
        let lambda: f64 = rng.random_range(0.0..10.0);
        let z: f64 = rng.random_range(-50.0..50.0);
        pairs.push((z, lambda));
    }

    let tol = F::cast(CONDITION2_TOL);
    let mut max_inside = F::zero();
    let mut max_bias_slack = F::neg_infinity();
    let mut worst = F::zero();
    let mut witness = None;
    for &(z, lambda) in &pairs {
        let (z, lambda) = (F::cast(z), F::cast(lambda));
        let t = rule.theta(z, lambda);
        let mut violation = F::zero();
        if z.abs() <= lambda {
            max_inside = max_inside.max(t.abs());
            violation = violation.max(t.abs());
        }
        let slack = (t - z).abs() - lambda;
        if slack > max_bias_slack || max_bias_slack.is_nan() {
            max_bias_slack = slack;
        }
        violation = violation.max(slack);
        if !t.is_finite() {
            violation = F::infinity();
        }
        if violation > tol && violation > worst {
            worst = violation;
            witness = Some((z, lambda));
        }
    }
    Condition2Report {
        samples: pairs.len(),
        max_inside,
        max_bias_slack,
        passed: witness.is_none(),
        witness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_rules() -> Vec<ThresholdingRule<f64>> {
        vec![
            ThresholdingRule::Soft,
            ThresholdingRule::Hard,
            ThresholdingRule::default_scad(),
            ThresholdingRule::Garrote,
            ThresholdingRule::default_mcp(),
        ]
    }

    #[test]
    fn theta_examples() {
        assert_eq!(ThresholdingRule::Soft.theta(3.0, 1.0), 2.0);
        let scad = ThresholdingRule::<f64>::default_scad();
        assert_abs_diff_eq!(scad.theta(3.0, 1.0), (2.7 * 3.0 - 3.7) / 1.7, epsilon = 1e-14);
        assert_abs_diff_eq!(scad.theta(3.0, 1.0), 2.5882, epsilon = 1e-4);
        assert_eq!(ThresholdingRule::Hard.theta(0.5, 1.0), 0.0);
        assert_eq!(ThresholdingRule::Hard.theta(2.0, 1.0), 2.0);
        assert_eq!(ThresholdingRule::Hard.theta(1.0, 1.0), 0.0);
        assert_eq!(ThresholdingRule::Garrote.theta(2.0, 1.0), 1.5);
    }

    #[test]
    fn garrote_bias_is_lambda_squared_over_z() {
        let rule = ThresholdingRule::<f64>::Garrote;
        for i in 0..200 {
            let z = -20.0 + 0.2 * i as f64 + 0.01;
            let lambda = 1.3;
            let bias = (rule.theta(z, lambda) - z).abs();
            if z.abs() > lambda {
                assert_abs_diff_eq!(bias, lambda * lambda / z.abs(), epsilon = 1e-12);
            }
            assert!(bias <= lambda + 1e-12);
        }
    }

    #[test]
    fn psi_examples() {
        assert_eq!(ThresholdingRule::Soft.psi(3.0, 1.0), 1.0);
        assert_eq!(ThresholdingRule::Hard.psi(5.0, 1.0), 0.0);
        assert_eq!(ThresholdingRule::default_scad().psi(10.0, 1.0), 0.0);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(ThresholdingRule::Soft.penalty(0.5, 2.0), 1.0);
        assert_eq!(ThresholdingRule::Hard.penalty(3.0, 2.0), 2.0);
        for rule in all_rules() {
            assert_eq!(rule.penalty(0.0, 1.7), 0.0);
        }
    }

    /// Brute-force argmin of (z - x)^2 / 2 + P(x) over a grid.
    fn grid_argmin(rule: &ThresholdingRule<f64>, z: f64, lambda: f64, pitch: f64) -> f64 {
        let span = z.abs() + 2.0 * lambda + 1.0;
        let steps = (2.0 * span / pitch) as i64;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=steps {
            let x = -span + k as f64 * pitch;
            let v = 0.5 * (z - x) * (z - x) + rule.penalty(x, lambda);
            if v < best.0 {
                best = (v, x);
            }
        }
        // x = 0 is a candidate the grid may straddle.
        if 0.5 * z * z < best.0 {
            best = (0.5 * z * z, 0.0);
        }
        best.1
    }

    #[test]
    fn theta_is_the_scalar_argmin_of_its_penalty() {
        let lambda = 1.0;
        for rule in all_rules() {
            for k in 0..=80 {
                let z = -10.0 + 0.25 * k as f64 + 0.013;
                let brute = grid_argmin(&rule, z, lambda, 1e-4);
                assert!(
                    (brute - rule.theta(z, lambda)).abs() <= 1e-3,
                    "{rule}: z={z} brute={brute} theta={}",
                    rule.theta(z, lambda)
                );
            }
        }
    }

    #[test]
    fn robust_loss_examples() {
        assert_abs_diff_eq!(ThresholdingRule::Soft.robust_loss(2.0, 1.0), 1.5, epsilon = 1e-12);
        for rule in all_rules() {
            assert_eq!(rule.robust_loss(0.0, 1.0), 0.0);
        }
        // Skipped-mean plateau.
        for z in [2.0, 3.0, 5.0, -3.0] {
            assert_abs_diff_eq!(ThresholdingRule::Hard.robust_loss(z, 1.0), 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn robust_loss_matches_closed_forms() {
        // Huber: z^2/2 inside, lambda|z| - lambda^2/2 outside.
        for k in 0..40 {
            let z = -4.0 + 0.2 * k as f64 + 0.01;
            let huber = if z.abs() <= 1.5 { 0.5 * z * z } else { 1.5 * z.abs() - 1.125 };
            assert_abs_diff_eq!(ThresholdingRule::Soft.robust_loss(z, 1.5), huber, epsilon = 1e-10);
        }
        // Garrote: Psi(z) = lambda^2/2 + lambda^2 ln(|z|/lambda) beyond lambda.
        let g = ThresholdingRule::<f64>::Garrote;
        assert_abs_diff_eq!(g.robust_loss(5.0, 1.0), 0.5 + 5.0f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn condition2_soft_has_zero_slack() {
        let report = check_condition2(&ThresholdingRule::<f64>::Soft, 10_000);
        assert!(report.passed);
        assert_eq!(report.samples, 10_000);
        assert_abs_diff_eq!(report.max_bias_slack, 0.0, epsilon = 1e-12);
        assert_eq!(report.max_inside, 0.0);
    }

    #[test]
    fn condition2_all_rules_pass() {
        for rule in all_rules() {
            assert!(check_condition2(&rule, 10_000).passed, "{rule}");
        }
    }

    #[test]
    fn condition2_detects_broken_rule() {
        let broken = FnThresholder(|z: f64, _l: f64| z / 2.0);
        let report = check_condition2(&broken, 1000);
        assert!(!report.passed);
        let (z, l) = report.witness.unwrap();
        let t = broken.theta(z, l);
        assert!(((z.abs() <= l) && t != 0.0) || (t - z).abs() > l);
    }

    #[test]
    fn parse_rules() {
        let r: ThresholdingRule<f64> = "scad".parse().unwrap();
        assert_eq!(r, ThresholdingRule::Scad { a: 3.7 });
        let r: ThresholdingRule<f64> = "mcp:a=2.5".parse().unwrap();
        assert_eq!(r, ThresholdingRule::Mcp { a: 2.5 });
        assert!("scad:a=1.5".parse::<ThresholdingRule<f64>>().is_err());
        assert!("soft:a=2".parse::<ThresholdingRule<f64>>().is_err());
        let err = "huber".parse::<ThresholdingRule<f64>>().unwrap_err().to_string();
        assert!(err.contains("soft, hard, scad, garrote, mcp"));
        assert_eq!(ThresholdingRule::<f64>::default_mcp().to_string(), "mcp:a=3");
    }

    #[test]
    fn works_in_single_precision() {
        let r = ThresholdingRule::<f32>::default_scad();
        assert!((r.theta(3.0f32, 1.0) - 2.5882).abs() < 1e-4);
    }
}
