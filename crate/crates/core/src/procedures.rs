//! Step-up FDR procedures: Benjamini-Hochberg, its adaptive version with a
//! plug-in estimate of the null proportion, and Heyse's discrete variant.
//!
//! Every procedure is driven by adjusted p-values. For sorted p-values
//! `p_(1) <= ... <= p_(m)` and a score `s_(i)`,
//!
//! ```text
//! adjusted_(i) = min_{k >= i} min(1, pi0 * s_(k) / k)
//! ```
//!
//! with `s_(k) = m p_(k)` for BH and `s_(k) = sum_j F_j(p_(k))` for BHH. The
//! rejection set is every hypothesis whose adjusted p-value is at most alpha.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{pi0_hat_h, TuningGrid};
use crate::exact_tests::PValueSupport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub alpha: f64,
    /// Hypothesis indices sorted by p-value; ties keep input order.
    pub order: Vec<usize>,
    /// Adjusted p-value of each hypothesis, in input order.
    pub adjusted: Vec<f64>,
    /// Number of rejections; 0 when nothing is rejected.
    pub k_hat: usize,
    /// Rejected hypothesis indices, ascending.
    pub rejected: Vec<usize>,
}

impl RejectionReport {
    pub fn is_rejected(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }

    pub fn rejection_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.adjusted.len()];
        for &i in &self.rejected {
            flags[i] = true;
        }
        flags
    }
}

/// Null distribution function of one test's p-value.
pub trait NullCdf {
    fn null_cdf(&self, t: f64) -> f64;
}

impl NullCdf for PValueSupport {
    fn null_cdf(&self, t: f64) -> f64 {
        PValueSupport::null_cdf(self, t)
    }
}

impl<T: NullCdf + ?Sized> NullCdf for &T {
    fn null_cdf(&self, t: f64) -> f64 {
        (**self).null_cdf(t)
    }
}

impl<T: NullCdf + ?Sized> NullCdf for Arc<T> {
    fn null_cdf(&self, t: f64) -> f64 {
        (**self).null_cdf(t)
    }
}

/// Continuous uniform null, `F(t) = t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Uniform;

impl NullCdf for Uniform {
    fn null_cdf(&self, t: f64) -> f64 {
        t.clamp(0.0, 1.0)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn check_pvalues(pvalues: &[f64]) -> Result<()> {
    match pvalues.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(i) => Err(Error::input(format!(
            "p-value {} at position {i} is outside [0, 1]",
            pvalues[i]
        ))),
        None => Ok(()),
    }
}

fn check_pi0(pi0_hat: f64) -> Result<()> {
    if pi0_hat > 0.0 && pi0_hat <= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "plug-in pi0 must lie in (0, 1], got {pi0_hat}"
        )))
    }
}

fn sort_order(pvalues: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pvalues.len()).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    order
}

/// Step-up from sorted scores. `scores[r]` belongs to rank `r + 1`.
fn step_up(order: Vec<usize>, scores: &[f64], pi0: f64, alpha: f64) -> RejectionReport {
    let m = order.len();
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for r in (0..m).rev() {
        let raw = (pi0 * scores[r] / (r + 1) as f64).min(1.0);
        running = running.min(raw);
        adjusted[order[r]] = running;
    }
    let mut rejected: Vec<usize> = (0..m).filter(|&i| adjusted[i] <= alpha).collect();
    rejected.sort_unstable();
    RejectionReport {
        alpha,
        k_hat: rejected.len(),
        order,
        adjusted,
        rejected,
    }
}

fn bh_scaled(pvalues: &[f64], pi0: f64, alpha: f64) -> Result<RejectionReport> {
    check_alpha(alpha)?;
    check_pvalues(pvalues)?;
    let m = pvalues.len() as f64;
    let order = sort_order(pvalues);
    let scores: Vec<f64> = order.iter().map(|&i| m * pvalues[i]).collect();
    Ok(step_up(order, &scores, pi0, alpha))
}

/// Benjamini-Hochberg linear step-up at level `alpha`.
pub fn bh(pvalues: &[f64], alpha: f64) -> Result<RejectionReport> {
    bh_scaled(pvalues, 1.0, alpha)
}

/// Adaptive BH: the cutoffs `i alpha / m` are divided by `pi0_hat`.
pub fn adaptive_bh(pvalues: &[f64], pi0_hat: f64, alpha: f64) -> Result<RejectionReport> {
    check_pi0(pi0_hat)?;
    bh_scaled(pvalues, pi0_hat, alpha)
}

fn bhh_scaled<S: NullCdf>(
    pvalues: &[f64],
    supports: &[S],
    pi0: f64,
    alpha: f64,
) -> Result<RejectionReport> {
    check_alpha(alpha)?;
    check_pvalues(pvalues)?;
    if supports.len() != pvalues.len() {
        return Err(Error::input(format!(
            "{} p-values but {} supports",
            pvalues.len(),
            supports.len()
        )));
    }
    let order = sort_order(pvalues);
    let mut scores = Vec::with_capacity(order.len());
    for (r, &i) in order.iter().enumerate() {
        let p = pvalues[i];
        let score = match r.checked_sub(1).map(|prev| order[prev]) {
            Some(prev) if pvalues[prev] == p => scores[r - 1],
            _ => supports.iter().map(|s| s.null_cdf(p)).sum(),
        };
        scores.push(score);
    }
    Ok(step_up(order, &scores, pi0, alpha))
}

/// Heyse's step-up for discrete p-values: `m p_(i)` is replaced by the sum
/// of every test's null CDF at `p_(i)`.
pub fn bhh<S: NullCdf>(pvalues: &[f64], supports: &[S], alpha: f64) -> Result<RejectionReport> {
    bhh_scaled(pvalues, supports, 1.0, alpha)
}

pub fn adaptive_bhh<S: NullCdf>(
    pvalues: &[f64],
    supports: &[S],
    pi0_hat: f64,
    alpha: f64,
) -> Result<RejectionReport> {
    check_pi0(pi0_hat)?;
    bhh_scaled(pvalues, supports, pi0_hat, alpha)
}

/// Procedure selector shared by the analysis and simulation drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureTag {
    Bh,
    /// Adaptive BH with the discrete estimator plugged in.
    AbhH,
    /// Adaptive BH with Storey's estimator (additive term) plugged in.
    AbhStorey,
    Bhh,
    /// Adaptive BHH with the discrete estimator plugged in.
    AbhhH,
    /// Adaptive BH with a fixed plug-in value.
    AbhConstant(f64),
}

pub const PROCEDURE_TAGS: &[&str] = &["bh", "abh_H", "abh_storey", "bhh", "abhh_H"];

impl std::str::FromStr for ProcedureTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bh" => Ok(ProcedureTag::Bh),
            "abh" | "abh_h" => Ok(ProcedureTag::AbhH),
            "abh_storey" => Ok(ProcedureTag::AbhStorey),
            "bhh" => Ok(ProcedureTag::Bhh),
            "abhh" | "abhh_h" => Ok(ProcedureTag::AbhhH),
            _ => Err(Error::config(format!(
                "unknown procedure '{s}'; valid tags: {}",
                PROCEDURE_TAGS.join(", ")
            ))),
        }
    }
}

impl std::fmt::Display for ProcedureTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProcedureTag::Bh => f.write_str("bh"),
            ProcedureTag::AbhH => f.write_str("abh_H"),
            ProcedureTag::AbhStorey => f.write_str("abh_storey"),
            ProcedureTag::Bhh => f.write_str("bhh"),
            ProcedureTag::AbhhH => f.write_str("abhh_H"),
            ProcedureTag::AbhConstant(v) => write!(f, "abh_const({v})"),
        }
    }
}

/// Plug-in estimates available to the adaptive procedures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlugIns {
    pub pi0_h: f64,
    pub pi0_storey_s: f64,
}

impl ProcedureTag {
    pub fn is_adaptive(&self) -> bool {
        !matches!(self, ProcedureTag::Bh | ProcedureTag::Bhh)
    }

    pub fn run<S: NullCdf>(
        &self,
        pvalues: &[f64],
        supports: &[S],
        plug: PlugIns,
        alpha: f64,
    ) -> Result<RejectionReport> {
        match *self {
            ProcedureTag::Bh => bh(pvalues, alpha),
            ProcedureTag::AbhH => adaptive_bh(pvalues, plug.pi0_h, alpha),
            ProcedureTag::AbhStorey => adaptive_bh(pvalues, plug.pi0_storey_s, alpha),
            ProcedureTag::Bhh => bhh(pvalues, supports, alpha),
            ProcedureTag::AbhhH => adaptive_bhh(pvalues, supports, plug.pi0_h, alpha),
            ProcedureTag::AbhConstant(v) => adaptive_bh(pvalues, v, alpha),
        }
    }
}

/// The estimator recomputed with the `k`-th p-value set to 0, for every `k`.
pub fn leave_one_out_estimates(pvalues: &[f64], grid: &TuningGrid) -> Result<Vec<f64>> {
    let mut work = pvalues.to_vec();
    (0..pvalues.len())
        .map(|k| {
            work[k] = 0.0;
            let est = pi0_hat_h(&work, grid).map(|e| e.pi0_hat);
            work[k] = pvalues[k];
            est
        })
        .collect()
}
