//! Exact two-sided p-values for Fisher's exact test and the conditional
//! binomial test, together with the full set of attainable p-values.
//!
//! Both tests condition on the total count `c` and reduce to a single
//! integer outcome `y` (the count in group 1) with a known null law:
//!
//! * Fisher: `P(y) ∝ C(n1, y) C(n2, c - y)` (central hypergeometric).
//! * Binomial: `P(y) ∝ C(c, y)`, i.e. `y ~ Binomial(c, 1/2)`.
//!
//! The two-sided p-value of an outcome is the total null probability of all
//! outcomes that are no more likely than it. Outcomes with equal probability
//! form one class and share one p-value. Under an alternative with odds ratio
//! `psi` the weights are multiplied by `psi^y`, which gives Fisher's
//! noncentral hypergeometric law (or `Binomial(c, psi / (1 + psi))`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this many trials the weights no longer fit exactly in `u128` and
/// the support is built in log space.
const EXACT_LIMIT: u64 = 64;

/// Relative tolerance for declaring two floating-point probabilities tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Observed counts of one two-group comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPair {
    pub x1: u64,
    pub x2: u64,
    pub n1: u64,
    pub n2: u64,
}

impl CountPair {
    pub fn new(x1: u64, x2: u64, n1: u64, n2: u64) -> Result<Self> {
        if x1 > n1 || x2 > n2 {
            return Err(Error::input(format!(
                "counts exceed trials: x1={x1}, n1={n1}, x2={x2}, n2={n2}"
            )));
        }
        Ok(Self { x1, x2, n1, n2 })
    }

    pub fn total(&self) -> u64 {
        self.x1 + self.x2
    }

    pub fn support(&self) -> PValueSupport {
        fet_support_unchecked(self.n1, self.n2, self.total())
    }
}

/// The conditioning design behind a support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "lowercase")]
pub enum Design {
    Fisher { n1: u64, n2: u64, c: u64 },
    Binomial { c: u64 },
}

impl Design {
    pub fn total(&self) -> u64 {
        match *self {
            Design::Fisher { c, .. } | Design::Binomial { c } => c,
        }
    }

    /// Smallest and largest attainable outcome `y`.
    fn outcome_range(&self) -> (u64, u64) {
        match *self {
            Design::Fisher { n1, n2, c } => (c.saturating_sub(n2), c.min(n1)),
            Design::Binomial { c } => (0, c),
        }
    }

    fn uses_exact_weights(&self) -> bool {
        match *self {
            Design::Fisher { n1, n2, .. } => n1 + n2 <= EXACT_LIMIT,
            Design::Binomial { c } => c <= EXACT_LIMIT,
        }
    }

    fn exact_weight(&self, y: u64) -> u128 {
        match *self {
            Design::Fisher { n1, n2, c } => binomial_u128(n1, y) * binomial_u128(n2, c - y),
            Design::Binomial { c } => binomial_u128(c, y),
        }
    }

    fn log_weight(&self, y: u64) -> f64 {
        match *self {
            Design::Fisher { n1, n2, c } => ln_binomial(n1, y) + ln_binomial(n2, c - y),
            Design::Binomial { c } => ln_binomial(c, y),
        }
    }
}

/// Attainable two-sided p-values of one discrete test with their null masses.
///
/// `values` is strictly increasing and ends with exactly `1.0`. Because every
/// p-value is the cumulative mass of its own and all smaller classes, the
/// null CDF evaluated at a support point returns that point.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueSupport {
    design: Design,
    y_min: u64,
    log_weights: Vec<f64>,
    outcome_class: Vec<usize>,
    values: Vec<f64>,
    masses: Vec<f64>,
}

impl AsRef<PValueSupport> for PValueSupport {
    fn as_ref(&self) -> &PValueSupport {
        self
    }
}

struct Class {
    value: f64,
    mass: f64,
    outcomes: Vec<usize>,
}

impl PValueSupport {
    fn build(design: Design) -> Self {
        let (y_min, y_max) = design.outcome_range();
        let count = (y_max - y_min + 1) as usize;
        let classes = if design.uses_exact_weights() {
            exact_classes(&design, y_min, count)
        } else {
            float_classes(&design, y_min, count)
        };
        let log_weights = (0..count)
            .map(|k| design.log_weight(y_min + k as u64))
            .collect();

        let mut outcome_class = vec![0; count];
        let mut values = Vec::with_capacity(classes.len());
        let mut masses = Vec::with_capacity(classes.len());
        for (idx, class) in classes.into_iter().enumerate() {
            for k in class.outcomes {
                outcome_class[k] = idx;
            }
            values.push(class.value);
            masses.push(class.mass);
        }
        Self {
            design,
            y_min,
            log_weights,
            outcome_class,
            values,
            masses,
        }
    }

    pub fn design(&self) -> Design {
        self.design
    }

    /// Attainable p-values, ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Null probability of each attainable p-value.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Smallest attainable p-value (`inf S`).
    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    /// True when the only attainable p-value is 1, so the test carries no
    /// information.
    pub fn is_trivial(&self) -> bool {
        self.values.len() == 1
    }

    /// Inclusive range of attainable outcomes `y` (count in group 1).
    pub fn outcome_range(&self) -> (u64, u64) {
        (self.y_min, self.y_min + self.outcome_class.len() as u64 - 1)
    }

    /// P-value of outcome `y`, or `None` when `y` is not attainable.
    pub fn pvalue_of_outcome(&self, y: u64) -> Option<f64> {
        let k = y.checked_sub(self.y_min)? as usize;
        self.outcome_class.get(k).map(|&c| self.values[c])
    }

    /// Smallest attainable p-value that is `>= t`. Always exists for `t <= 1`.
    pub fn smallest_at_least(&self, t: f64) -> f64 {
        let k = self.values.partition_point(|&v| v < t);
        self.values.get(k).copied().unwrap_or(1.0)
    }

    /// Null CDF `P(p <= t)`: the total mass of support values at or below
    /// `t`. As a right-continuous step function it equals the largest support
    /// value not exceeding `t`.
    pub fn null_cdf(&self, t: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= t);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    /// Probability of every outcome (indexed from `outcome_range().0`) under
    /// odds ratio `psi`. `psi = 1` gives the null law.
    pub fn outcome_pmf(&self, psi: f64) -> Result<Vec<f64>> {
        check_psi(psi)?;
        let ln_psi = psi.ln();
        let shifted: Vec<f64> = self
            .log_weights
            .iter()
            .enumerate()
            .map(|(k, lw)| lw + (self.y_min + k as u64) as f64 * ln_psi)
            .collect();
        let top = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut pmf: Vec<f64> = shifted.iter().map(|s| (s - top).exp()).collect();
        let total: f64 = pmf.iter().sum();
        for w in &mut pmf {
            *w /= total;
        }
        Ok(pmf)
    }

    /// `P(p <= t)` when the outcome follows the noncentral law with odds
    /// ratio `psi`. Reduces to [`null_cdf`](Self::null_cdf) at `psi = 1`.
    pub fn alt_cdf(&self, psi: f64, t: f64) -> Result<f64> {
        check_psi(psi)?;
        if psi == 1.0 {
            return Ok(self.null_cdf(t));
        }
        let pmf = self.outcome_pmf(psi)?;
        let cdf = pmf
            .iter()
            .zip(&self.outcome_class)
            .filter(|(_, &class)| self.values[class] <= t)
            .map(|(w, _)| w)
            .sum::<f64>();
        Ok(cdf.min(1.0))
    }
}

fn check_psi(psi: f64) -> Result<()> {
    if psi.is_finite() && psi > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "odds ratio must be positive and finite, got {psi}"
        )))
    }
}

/// Group outcomes by exact integer weight.
fn exact_classes(design: &Design, y_min: u64, count: usize) -> Vec<Class> {
    let weights: Vec<u128> = (0..count)
        .map(|k| design.exact_weight(y_min + k as u64))
        .collect();
    let total: u128 = weights.iter().sum();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by_key(|&k| (weights[k], k));

    let mut classes: Vec<(u128, u128, Vec<usize>)> = Vec::new();
    for k in order {
        match classes.last_mut() {
            Some((w, sum, members)) if *w == weights[k] => {
                *sum += weights[k];
                members.push(k);
            }
            _ => classes.push((weights[k], weights[k], vec![k])),
        }
    }

    let mut cumulative = 0u128;
    classes
        .into_iter()
        .map(|(_, sum, outcomes)| {
            cumulative += sum;
            Class {
                value: cumulative as f64 / total as f64,
                mass: sum as f64 / total as f64,
                outcomes,
            }
        })
        .collect()
}

/// Group outcomes by probability in floating point with a relative tie
/// tolerance, then merge classes whose p-values collapse onto one float.
fn float_classes(design: &Design, y_min: u64, count: usize) -> Vec<Class> {
    let log_weights: Vec<f64> = (0..count)
        .map(|k| design.log_weight(y_min + k as u64))
        .collect();
    let top = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut pmf: Vec<f64> = log_weights.iter().map(|lw| (lw - top).exp()).collect();
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| pmf[a].total_cmp(&pmf[b]).then(a.cmp(&b)));

    // Summing in sorted order makes the result independent of outcome
    // orientation, so mirrored designs give bit-identical supports.
    let total: f64 = order.iter().map(|&k| pmf[k]).sum();
    for w in &mut pmf {
        *w /= total;
    }

    let mut groups: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for k in order {
        match groups.last_mut() {
            Some((head, sum, members)) if pmf[k] - *head <= TIE_TOLERANCE * pmf[k] => {
                *sum += pmf[k];
                members.push(k);
            }
            _ => groups.push((pmf[k], pmf[k], vec![k])),
        }
    }

    let mut cumulative = 0.0;
    let raw: Vec<(f64, Vec<usize>)> = groups
        .into_iter()
        .map(|(_, sum, members)| {
            cumulative += sum;
            (cumulative, members)
        })
        .collect();
    let last = raw.len() - 1;

    let mut classes: Vec<Class> = Vec::with_capacity(raw.len());
    let mut carried: Vec<usize> = Vec::new();
    for (idx, (cum, mut members)) in raw.into_iter().enumerate() {
        let value = if idx == last {
            1.0
        } else {
            (cum / cumulative).min(1.0)
        };
        members.append(&mut carried);
        if value <= 0.0 {
            carried = members;
            continue;
        }
        match classes.last_mut() {
            Some(prev) if prev.value >= value => {
                prev.value = value;
                prev.outcomes.extend(members);
            }
            _ => classes.push(Class {
                value,
                mass: 0.0,
                outcomes: members,
            }),
        }
    }
    let mut below = 0.0;
    for class in &mut classes {
        class.mass = class.value - below;
        below = class.value;
    }
    classes
}

/// Exact binomial coefficient. Callers keep `n <= 64`, where every value and
/// intermediate product fits in `u128`.
pub(crate) fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

pub(crate) fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let (lo, hi) = (k.min(n - k), k.max(n - k));
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(lo as f64 + 1.0) - libm::lgamma(hi as f64 + 1.0)
}

fn fet_support_unchecked(n1: u64, n2: u64, c: u64) -> PValueSupport {
    PValueSupport::build(Design::Fisher { n1, n2, c })
}

/// Attainable two-sided Fisher p-values for group sizes `n1`, `n2` and total
/// count `c`.
pub fn fet_support(n1: u64, n2: u64, c: u64) -> Result<PValueSupport> {
    if c > n1 + n2 {
        return Err(Error::input(format!(
            "total count {c} exceeds n1 + n2 = {}",
            n1 + n2
        )));
    }
    Ok(fet_support_unchecked(n1, n2, c))
}

/// Two-sided Fisher's exact test p-value. Degenerate margins give 1.
pub fn fet_pvalue(pair: &CountPair) -> f64 {
    pair.support()
        .pvalue_of_outcome(pair.x1)
        .expect("x1 lies in the attainable range of its own margin")
}

/// Attainable two-sided p-values of the sign test `y ~ Binomial(c, 1/2)`.
pub fn bt_support(c: u64) -> PValueSupport {
    PValueSupport::build(Design::Binomial { c })
}

/// Two-sided exact binomial (sign) test p-value of `x` out of `c`.
pub fn bt_pvalue(x: u64, c: u64) -> Result<f64> {
    if x > c {
        return Err(Error::input(format!(
            "binomial count {x} exceeds total {c}"
        )));
    }
    Ok(bt_support(c).pvalue_of_outcome(x).expect("x lies in 0..=c"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round4(v: f64) -> f64 {
        (v * 1e4).round() / 1e4
    }

    fn rounded(s: &PValueSupport) -> Vec<f64> {
        s.values().iter().map(|&v| round4(v)).collect()
    }

    #[test]
    fn worked_example_supports() {
        assert_eq!(rounded(&fet_support(5, 5, 2).unwrap()), vec![0.4444, 1.0]);
        assert_eq!(rounded(&fet_support(5, 5, 3).unwrap()), vec![0.1667, 1.0]);
        assert_eq!(
            rounded(&fet_support(5, 5, 4).unwrap()),
            vec![0.0476, 0.5238, 1.0]
        );
        assert_eq!(fet_support(5, 5, 1).unwrap().values(), &[1.0]);
    }

    #[test]
    fn fet_pvalue_examples() {
        let p = fet_pvalue(&CountPair::new(0, 2, 5, 5).unwrap());
        assert_eq!(round4(p), 0.4444);
        assert_eq!(fet_pvalue(&CountPair::new(1, 1, 5, 5).unwrap()), 1.0);
        let p = fet_pvalue(&CountPair::new(0, 4, 5, 5).unwrap());
        assert_eq!(round4(p), 0.0476);
    }

    #[test]
    fn degenerate_margins_give_one() {
        assert_eq!(fet_pvalue(&CountPair::new(0, 0, 5, 5).unwrap()), 1.0);
        assert_eq!(fet_pvalue(&CountPair::new(5, 5, 5, 5).unwrap()), 1.0);
        assert_eq!(fet_support(5, 5, 0).unwrap().values(), &[1.0]);
        assert_eq!(fet_support(5, 5, 10).unwrap().values(), &[1.0]);
        assert!(fet_support(5, 5, 1).unwrap().is_trivial());
    }

    #[test]
    fn invalid_counts_rejected() {
        assert!(CountPair::new(6, 0, 5, 5).is_err());
        assert!(CountPair::new(0, 6, 5, 5).is_err());
        assert!(fet_support(2, 2, 5).is_err());
        assert!(bt_pvalue(3, 2).is_err());
    }

    #[test]
    fn binomial_supports() {
        // pmf (1/4, 1/2, 1/4): tails tie at 1/4 + 1/4.
        assert_eq!(bt_support(2).values(), &[0.5, 1.0]);
        assert_eq!(bt_pvalue(1, 2).unwrap(), 1.0);
        assert_eq!(bt_pvalue(0, 2).unwrap(), 0.5);
        assert_eq!(bt_support(1).values(), &[1.0]);
    }

    #[test]
    fn null_cdf_steps() {
        let s = fet_support(5, 5, 4).unwrap();
        let first = s.values()[0];
        assert_eq!(s.null_cdf(first), first);
        assert_eq!(s.null_cdf(1.0), 1.0);
        assert_eq!(s.null_cdf(0.03), 0.0);
        assert_eq!(s.null_cdf(0.5), first);
    }

    #[test]
    fn smallest_at_least_scans_support() {
        let s = fet_support(5, 5, 4).unwrap();
        assert_eq!(round4(s.smallest_at_least(0.5)), 0.5238);
        assert_eq!(s.smallest_at_least(s.values()[0]), s.values()[0]);
        assert_eq!(s.smallest_at_least(0.9), 1.0);
    }

    #[test]
    fn alt_cdf_matches_direct_enumeration() {
        // Three tables for c = 2: weights C(5,y) C(5,2-y) psi^y = 10, 25 psi, 10 psi^2.
        let s = fet_support(5, 5, 2).unwrap();
        let psi: f64 = 2.0;
        let w = [10.0, 25.0 * psi, 10.0 * psi * psi];
        let total: f64 = w.iter().sum();
        // Outcomes 0 and 2 carry p = 0.4444, outcome 1 carries p = 1.
        let expected = (w[0] + w[2]) / total;
        let got = s.alt_cdf(psi, 0.5).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
        assert_eq!(s.alt_cdf(psi, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn alt_cdf_concentrates_for_large_odds() {
        let s = fet_support(5, 5, 4).unwrap();
        let v = s.alt_cdf(1e6, s.values()[0]).unwrap();
        assert!(v > 1.0 - 1e-5, "{v}");
    }

    #[test]
    fn alt_cdf_rejects_bad_odds() {
        let s = fet_support(5, 5, 4).unwrap();
        assert!(s.alt_cdf(0.0, 0.5).is_err());
        assert!(s.alt_cdf(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn float_path_agrees_with_exact_path() {
        // n1 + n2 = 64 is the last exact size; 65 switches to log space.
        for (n1, n2) in [(32u64, 33u64), (40, 40), (30, 50)] {
            for c in 0..=(n1 + n2) {
                let s = fet_support(n1, n2, c).unwrap();
                let total: f64 = s.masses().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert_eq!(*s.values().last().unwrap(), 1.0);
                assert!(s.values().windows(2).all(|w| w[0] < w[1]));
                for &v in s.values() {
                    assert!((s.null_cdf(v) - v).abs() < 1e-9);
                }
            }
        }
        // Equal margins produce symmetric ties that must not split.
        let s = fet_support(40, 40, 20).unwrap();
        assert_eq!(s.pvalue_of_outcome(3), s.pvalue_of_outcome(17));
        assert_eq!(s.pvalue_of_outcome(0), s.pvalue_of_outcome(20));
    }

    #[test]
    fn large_counts_stay_valid() {
        let s = fet_support(5000, 7000, 3000).unwrap();
        assert_eq!(*s.values().last().unwrap(), 1.0);
        assert!(s.values()[0] > 0.0);
        assert!(s.masses().iter().all(|&m| m > 0.0));
        assert!(s.values().windows(2).all(|w| w[0] < w[1]));
        let b = bt_support(2000);
        assert_eq!(b.pvalue_of_outcome(10), b.pvalue_of_outcome(1990));
    }
}
