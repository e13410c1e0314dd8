//! Estimators of the proportion of true null hypotheses for discrete
//! p-values.
//!
//! The main estimator averages a set of trial estimators, one per tuning
//! parameter `tau_j`. Each test `i` gets its own threshold `lambda_ij`, the
//! smallest attainable p-value at or above `tau_j`, so that the null CDF at
//! the threshold equals the threshold itself. The largest threshold `eta_j`
//! sets the scale:
//!
//! ```text
//! beta(tau_j) = [1 + (1 - tau_j) * sum_i I(p_i > lambda_ij) / (1 - lambda_ij)]
//!               / (m (1 - eta_j))
//! ```
//!
//! truncated at 1. Storey's threshold estimators are provided as baselines,
//! together with closed-form expectations used as simulation oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_tests::PValueSupport;

/// Tuning parameters and the per-test thresholds derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    taus: Vec<f64>,
    /// Row-major `m x n`: `lambdas[i * n + j]`.
    lambdas: Vec<f64>,
    etas: Vec<f64>,
    nu: f64,
    m: usize,
}

impl TuningGrid {
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    /// Largest of the per-test minimum attainable p-values.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Number of tests.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of tuning parameters.
    pub fn n(&self) -> usize {
        self.taus.len()
    }

    pub fn lambda(&self, i: usize, j: usize) -> f64 {
        self.lambdas[i * self.n() + j]
    }

    /// Thresholds of test `i` across all tuning parameters.
    pub fn lambdas_for_test(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.lambdas[i * n..(i + 1) * n]
    }
}

/// `max_i inf S_i` over a set of supports.
pub fn nu<S: AsRef<PValueSupport>>(supports: &[S]) -> f64 {
    supports
        .iter()
        .map(|s| s.as_ref().min_value())
        .fold(0.0, f64::max)
}

/// Default tuning parameters: `max(nu, 0.05 j)` for `j = 1..=19`, with
/// duplicates removed.
pub fn default_taus(nu: f64) -> Vec<f64> {
    let mut taus: Vec<f64> = (1..=19).map(|j| nu.max(j as f64 / 20.0)).collect();
    taus.dedup();
    taus.retain(|&t| t < 1.0);
    taus
}

pub fn build_grid<S: AsRef<PValueSupport>>(supports: &[S], taus: &[f64]) -> Result<TuningGrid> {
    if supports.is_empty() {
        return Err(Error::input("no tests to build a tuning grid over"));
    }
    let nu = nu(supports);
    if nu >= 1.0 {
        return Err(Error::Degenerate(
            "some test can only attain p = 1; remove uninformative rows first".into(),
        ));
    }
    for (j, &tau) in taus.iter().enumerate() {
        if !(tau >= nu && tau < 1.0) {
            return Err(Error::TauOutOfRange { tau, nu });
        }
        if j > 0 && tau < taus[j - 1] {
            return Err(Error::config(format!(
                "tuning parameters must be non-decreasing: {} follows {}",
                tau,
                taus[j - 1]
            )));
        }
    }

    let m = supports.len();
    let n = taus.len();
    let mut lambdas = Vec::with_capacity(m * n);
    for s in supports {
        lambdas.extend(taus.iter().map(|&tau| s.as_ref().smallest_at_least(tau)));
    }
    let etas = (0..n)
        .map(|j| (0..m).map(|i| lambdas[i * n + j]).fold(0.0, f64::max))
        .collect();
    Ok(TuningGrid {
        taus: taus.to_vec(),
        lambdas,
        etas,
        nu,
        m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pi0Method {
    /// Mean of the truncated trial estimators.
    H,
    /// Trial estimators with `eta_j` replaced by `tau_j`.
    Substituted,
    Storey,
    StoreyS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pi0Estimate {
    pub method: Pi0Method,
    pub taus: Vec<f64>,
    /// Truncated per-parameter estimates; one entry for the Storey baselines.
    pub betas: Vec<f64>,
    pub pi0_hat: f64,
}

fn check_pvalues(pvalues: &[f64], m: usize) -> Result<()> {
    if pvalues.len() != m {
        return Err(Error::input(format!(
            "expected {m} p-values, got {}",
            pvalues.len()
        )));
    }
    Ok(())
}

/// `sum_i I(p_i > lambda_ij) (1 - tau_j) / (1 - lambda_ij)`.
///
/// Each term is formed as a ratio so that `lambda_ij = tau_j` contributes
/// exactly 1. A threshold of 1 can never be exceeded and contributes nothing.
fn weighted_exceedances(pvalues: &[f64], grid: &TuningGrid, j: usize) -> f64 {
    let tau = grid.taus[j];
    pvalues
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| {
            let lambda = grid.lambda(i, j);
            (p > lambda && lambda < 1.0).then(|| (1.0 - tau) / (1.0 - lambda))
        })
        .sum()
}

/// Trial estimator before truncation. Infinite when `eta_j = 1`.
pub fn beta_trial_raw(pvalues: &[f64], grid: &TuningGrid, j: usize) -> Result<f64> {
    check_pvalues(pvalues, grid.m)?;
    let eta = grid.etas[j];
    if eta >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let sum = weighted_exceedances(pvalues, grid, j);
    Ok((1.0 + sum) / (grid.m as f64 * (1.0 - eta)))
}

/// Trial estimator `beta(tau_j)`, truncated at 1. When `eta_j = 1` the raw
/// value diverges and the truncated value 1 is returned.
pub fn beta_trial(pvalues: &[f64], grid: &TuningGrid, j: usize) -> Result<f64> {
    Ok(beta_trial_raw(pvalues, grid, j)?.min(1.0))
}

pub fn pi0_hat_h(pvalues: &[f64], grid: &TuningGrid) -> Result<Pi0Estimate> {
    if grid.n() == 0 {
        return Err(Error::config("tuning grid is empty"));
    }
    let betas = (0..grid.n())
        .map(|j| beta_trial(pvalues, grid, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pi0Estimate {
        method: Pi0Method::H,
        taus: grid.taus.clone(),
        pi0_hat: mean(&betas),
        betas,
    })
}

/// Trial estimator with `eta_j` replaced by `tau_j`, thresholds kept.
/// Never exceeds [`beta_trial_raw`].
pub fn substituted_beta_raw(pvalues: &[f64], grid: &TuningGrid, j: usize) -> Result<f64> {
    check_pvalues(pvalues, grid.m)?;
    let tau = grid.taus[j];
    let sum = weighted_exceedances(pvalues, grid, j);
    Ok((1.0 + sum) / (grid.m as f64 * (1.0 - tau)))
}

pub fn pi0_hat_substituted(pvalues: &[f64], grid: &TuningGrid) -> Result<Pi0Estimate> {
    if grid.n() == 0 {
        return Err(Error::config("tuning grid is empty"));
    }
    let betas = (0..grid.n())
        .map(|j| Ok(substituted_beta_raw(pvalues, grid, j)?.min(1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pi0Estimate {
        method: Pi0Method::Substituted,
        taus: grid.taus.clone(),
        pi0_hat: mean(&betas),
        betas,
    })
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "tuning parameter must lie in (0, 1), got {tau}"
        )))
    }
}

fn count_above(pvalues: &[f64], tau: f64) -> f64 {
    pvalues.iter().filter(|&&p| p > tau).count() as f64
}

/// `#{p_i > tau} / (m (1 - tau))`, untruncated.
pub fn storey_pi0_raw(pvalues: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if pvalues.is_empty() {
        return Err(Error::input("no p-values"));
    }
    Ok(count_above(pvalues, tau) / (pvalues.len() as f64 * (1.0 - tau)))
}

/// `(1 + #{p_i > tau}) / (m (1 - tau))`, untruncated.
pub fn storey_pi0_s_raw(pvalues: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if pvalues.is_empty() {
        return Err(Error::input("no p-values"));
    }
    Ok((1.0 + count_above(pvalues, tau)) / (pvalues.len() as f64 * (1.0 - tau)))
}

/// Storey's threshold estimator, truncated at 1.
pub fn storey_pi0(pvalues: &[f64], tau: f64) -> Result<f64> {
    Ok(storey_pi0_raw(pvalues, tau)?.min(1.0))
}

/// Storey's estimator with the additive `1 / (m (1 - tau))` term, truncated
/// at 1.
pub fn storey_pi0_s(pvalues: &[f64], tau: f64) -> Result<f64> {
    Ok(storey_pi0_s_raw(pvalues, tau)?.min(1.0))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Closed-form expectations and biases at one tuning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasOracle {
    pub tau: f64,
    pub eta: f64,
    /// Expected proportion of true nulls the biases are measured against.
    pub pi0: f64,
    /// Bias of the Storey estimator with the additive term if every null
    /// p-value were uniform.
    pub b1: f64,
    /// Bias of the same estimator under the actual discrete null laws.
    pub b2: f64,
    /// Expected untruncated trial estimator; infinite when `eta = 1`.
    pub expected_beta: f64,
    /// `expected_beta - pi0`.
    pub beta_bias: f64,
}

/// Exact biases for fixed truth labels. `alt_odds[i]` must be present for
/// every false null `i`.
pub fn bias_oracles<S: AsRef<PValueSupport>>(
    supports: &[S],
    alt_odds: &[Option<f64>],
    truth: &[bool],
    grid: &TuningGrid,
) -> Result<Vec<BiasOracle>> {
    if truth.len() != supports.len() || alt_odds.len() != supports.len() {
        return Err(Error::input(
            "supports, odds ratios and truth labels differ in length",
        ));
    }
    let weights: Vec<f64> = truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    oracles_weighted(supports, alt_odds, &weights, grid)
}

/// Exact biases when each test is independently a true null with
/// probability `pi0` and otherwise follows odds ratio `alt_odds[i]`.
pub fn bias_oracles_mixture<S: AsRef<PValueSupport>>(
    supports: &[S],
    alt_odds: &[f64],
    pi0: f64,
    grid: &TuningGrid,
) -> Result<Vec<BiasOracle>> {
    if alt_odds.len() != supports.len() {
        return Err(Error::input("supports and odds ratios differ in length"));
    }
    if !(pi0 > 0.0 && pi0 <= 1.0) {
        return Err(Error::config(format!("pi0 must lie in (0, 1], got {pi0}")));
    }
    let odds: Vec<Option<f64>> = alt_odds.iter().map(|&o| Some(o)).collect();
    let weights = vec![pi0; supports.len()];
    oracles_weighted(supports, &odds, &weights, grid)
}

fn oracles_weighted<S: AsRef<PValueSupport>>(
    supports: &[S],
    alt_odds: &[Option<f64>],
    null_weight: &[f64],
    grid: &TuningGrid,
) -> Result<Vec<BiasOracle>> {
    let m = supports.len();
    if grid.m != m {
        return Err(Error::input(
            "tuning grid was built over a different number of tests",
        ));
    }
    for (i, (&w, odds)) in null_weight.iter().zip(alt_odds).enumerate() {
        if w < 1.0 && odds.is_none() {
            return Err(Error::config(format!(
                "missing alternative odds ratio for false null {i}"
            )));
        }
    }
    let mf = m as f64;
    let pi0 = null_weight.iter().sum::<f64>() / mf;

    // Survival 1 - H_i(t) of each test's p-value mixed over its null status.
    let survival = |i: usize, t: f64| -> Result<(f64, f64)> {
        let s = supports[i].as_ref();
        let w = null_weight[i];
        let null_part = w * (1.0 - s.null_cdf(t));
        let alt_part = match alt_odds[i] {
            Some(psi) if w < 1.0 => (1.0 - w) * (1.0 - s.alt_cdf(psi, t)?),
            _ => 0.0,
        };
        Ok((null_part, alt_part))
    };

    let mut out = Vec::with_capacity(grid.n());
    for j in 0..grid.n() {
        let tau = grid.taus[j];
        let eta = grid.etas[j];
        let scale = 1.0 / (mf * (1.0 - tau));

        let mut discreteness = 0.0;
        let mut alternatives = 0.0;
        let mut beta_sum = 0.0;
        for i in 0..m {
            let s = supports[i].as_ref();
            discreteness += null_weight[i] * (tau - s.null_cdf(tau));
            alternatives += survival(i, tau)?.1;

            let lambda = grid.lambda(i, j);
            if lambda < 1.0 {
                let (null_part, alt_part) = survival(i, lambda)?;
                beta_sum += (null_part + alt_part) / (1.0 - lambda);
            }
        }
        let b1 = scale + scale * alternatives;
        let b2 = b1 + scale * discreteness;
        let expected_beta = if eta >= 1.0 {
            f64::INFINITY
        } else {
            (1.0 + (1.0 - tau) * beta_sum) / (mf * (1.0 - eta))
        };
        out.push(BiasOracle {
            tau,
            eta,
            pi0,
            b1,
            b2,
            expected_beta,
            beta_bias: expected_beta - pi0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_tests::fet_support;

    fn example_supports() -> Vec<PValueSupport> {
        [2, 3, 4]
            .iter()
            .map(|&c| fet_support(5, 5, c).unwrap())
            .collect()
    }

    fn round4(v: f64) -> f64 {
        (v * 1e4).round() / 1e4
    }

    #[test]
    fn thresholds_scan_the_support() {
        let s3 = fet_support(5, 5, 4).unwrap();
        let grid = build_grid(std::slice::from_ref(&s3), &[0.5]).unwrap();
        assert_eq!(round4(grid.lambda(0, 0)), 0.5238);
        let q = s3.min_value();
        let grid = build_grid(&[s3], &[q]).unwrap();
        assert_eq!(grid.lambda(0, 0), q);
    }

    #[test]
    fn worked_example_grid_is_degenerate() {
        let grid = build_grid(&example_supports(), &[0.5]).unwrap();
        let column: Vec<f64> = (0..3).map(|i| round4(grid.lambda(i, 0))).collect();
        assert_eq!(column, vec![1.0, 1.0, 0.5238]);
        assert_eq!(grid.etas(), &[1.0]);
        assert_eq!(beta_trial(&[0.4, 0.2, 0.05], &grid, 0).unwrap(), 1.0);
        assert!(beta_trial_raw(&[0.4, 0.2, 0.05], &grid, 0)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn tau_below_nu_is_rejected() {
        let err = build_grid(&example_supports(), &[0.3]).unwrap_err();
        match err {
            Error::TauOutOfRange { tau, nu } => {
                assert_eq!(tau, 0.3);
                assert_eq!(round4(nu), 0.4444);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_grid(&example_supports(), &[1.0]).is_err());
        assert!(build_grid(&example_supports(), &[0.6, 0.5]).is_err());
    }

    #[test]
    fn trivial_support_is_degenerate() {
        let s = vec![fet_support(5, 5, 1).unwrap()];
        assert!(matches!(build_grid(&s, &[0.5]), Err(Error::Degenerate(_))));
    }

    /// Supports with exactly the attainable values {0.25, 1}, built from the
    /// binomial test: c = 3 gives pmf (1, 3, 3, 1) / 8, so p in {0.25, 1}.
    fn quarter_supports(m: usize) -> Vec<PValueSupport> {
        (0..m).map(|_| crate::exact_tests::bt_support(3)).collect()
    }

    #[test]
    fn beta_trial_additive_term_only() {
        // Ten tests, eta = 0.5: support {0.5, 1} from the sign test with c = 2.
        let supports: Vec<_> = (0..10).map(|_| crate::exact_tests::bt_support(2)).collect();
        let grid = build_grid(&supports, &[0.5]).unwrap();
        assert_eq!(grid.etas(), &[0.5]);
        let p = vec![0.5; 10];
        assert_eq!(beta_trial(&p, &grid, 0).unwrap(), 0.2);
    }

    #[test]
    fn beta_trial_caps_at_one() {
        let supports = quarter_supports(2);
        assert_eq!(supports[0].values(), &[0.25, 1.0]);
        let grid = build_grid(&supports, &[0.25]).unwrap();
        let raw = beta_trial_raw(&[1.0, 1.0], &grid, 0).unwrap();
        assert!((raw - 2.0).abs() < 1e-15, "{raw}");
        assert_eq!(beta_trial(&[1.0, 1.0], &grid, 0).unwrap(), 1.0);
    }

    #[test]
    fn pi0_hat_is_mean_of_trials() {
        let supports = quarter_supports(1);
        let grid = build_grid(&supports, &[0.25]).unwrap();
        let est = pi0_hat_h(&[0.25], &grid).unwrap();
        assert_eq!(est.pi0_hat, beta_trial(&[0.25], &grid, 0).unwrap());

        let supports: Vec<_> = (0..10).map(|_| crate::exact_tests::bt_support(2)).collect();
        let grid = build_grid(&supports, &[0.5, 0.5]).unwrap();
        let est = pi0_hat_h(&[0.5; 10], &grid).unwrap();
        assert_eq!(est.betas, vec![0.2, 0.2]);
        assert_eq!(est.pi0_hat, 0.2);
        assert!(pi0_hat_h(&[0.5; 10], &build_grid(&supports, &[]).unwrap()).is_err());
    }

    #[test]
    fn storey_examples() {
        assert_eq!(storey_pi0(&[0.9, 0.8, 0.1, 0.2], 0.5).unwrap(), 1.0);
        assert_eq!(storey_pi0_raw(&[0.9, 0.8, 0.1, 0.2], 0.5).unwrap(), 1.0);
        assert_eq!(storey_pi0_s(&[0.1; 10], 0.5).unwrap(), 0.2);
        let raw = storey_pi0_raw(&[0.6, 0.7, 0.1], 0.5).unwrap();
        assert!((raw - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(storey_pi0(&[0.6, 0.7, 0.1], 0.5).unwrap(), 1.0);
        assert!(storey_pi0(&[0.5], 1.0).is_err());
        assert!(storey_pi0(&[0.5], 0.0).is_err());
    }

    #[test]
    fn substituted_never_exceeds_h() {
        let supports = example_supports();
        let grid = build_grid(&supports, &[0.5, 0.6]).unwrap();
        let p = [1.0, 0.1667, 0.5238];
        let h = pi0_hat_h(&p, &grid).unwrap().pi0_hat;
        let g = pi0_hat_substituted(&p, &grid).unwrap().pi0_hat;
        assert!(h >= g);
    }

    #[test]
    fn default_taus_respect_nu() {
        let taus = default_taus(0.0476);
        assert_eq!(taus.len(), 19);
        assert_eq!(taus[0], 0.05);
        assert_eq!(*taus.last().unwrap(), 0.95);
        let taus = default_taus(0.4444);
        assert_eq!(taus[0], 0.4444);
        assert_eq!(taus[1], 0.45);
        assert!(taus.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(default_taus(0.97), vec![0.97]);
    }

    #[test]
    fn all_null_oracles_with_tau_on_every_support() {
        // tau = 0.25 is attainable by every test, so F_i(tau) = tau.
        let supports = quarter_supports(4);
        let grid = build_grid(&supports, &[0.25]).unwrap();
        let oracle = bias_oracles(&supports, &[None; 4], &[true; 4], &grid).unwrap();
        let o = oracle[0];
        assert_eq!(o.b1, o.b2);
        let expected = 1.0 / (4.0 * 0.75) + 1.0;
        assert!((o.expected_beta - expected).abs() < 1e-12);
        assert!((o.beta_bias - 1.0 / (4.0 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn missing_alternative_is_a_config_error() {
        let supports = quarter_supports(2);
        let grid = build_grid(&supports, &[0.25]).unwrap();
        let err = bias_oracles(&supports, &[None, None], &[true, false], &grid).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn discreteness_bias_is_non_negative() {
        let supports: Vec<_> = (2..=8).map(|c| fet_support(5, 6, c).unwrap()).collect();
        let nu = nu(&supports);
        let grid = build_grid(&supports, &default_taus(nu)).unwrap();
        let odds = vec![3.0; supports.len()];
        for pi0 in [0.3, 0.7, 1.0] {
            for o in bias_oracles_mixture(&supports, &odds, pi0, &grid).unwrap() {
                assert!(o.b2 - o.b1 >= 0.0);
            }
        }
    }

    #[test]
    fn replacing_lambda_as_well_breaks_dominance() {
        // Replacing lambda_ij by tau_j too gives Storey's estimator with the
        // +1 term, which can exceed the estimator here: p-values sitting at
        // lambda = 0.5238 count for Storey at tau = 0.3 but not for beta.
        let s = fet_support(5, 5, 4).unwrap();
        let supports = vec![s.clone(); 10];
        let p = vec![s.values()[1]; 10];
        let grid = build_grid(&supports, &[0.3]).unwrap();
        let h = pi0_hat_h(&p, &grid).unwrap().pi0_hat;
        assert!((h - 1.0 / (10.0 * (1.0 - s.values()[1]))).abs() < 1e-12);
        assert_eq!(storey_pi0_s(&p, 0.3).unwrap(), 1.0);
        assert!(pi0_hat_substituted(&p, &grid).unwrap().pi0_hat <= h);
    }
}
