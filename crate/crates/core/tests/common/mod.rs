//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use discfdr::exact_tests::{fet_support, PValueSupport};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A non-trivial Fisher support with group sizes in `2..=max_n`.
pub fn random_support(rng: &mut ChaCha8Rng, max_n: u64) -> PValueSupport {
    loop {
        let n1 = rng.random_range(2..=max_n);
        let n2 = rng.random_range(2..=max_n);
        let c = rng.random_range(2..n1 + n2);
        let s = fet_support(n1, n2, c).unwrap();
        if !s.is_trivial() {
            return s;
        }
    }
}

/// Draws a p-value from the support's law at odds ratio `psi`.
pub fn draw_pvalue(rng: &mut ChaCha8Rng, support: &PValueSupport, psi: f64) -> f64 {
    let pmf = support.outcome_pmf(psi).unwrap();
    let (lo, _) = support.outcome_range();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in pmf.iter().enumerate() {
        acc += w;
        if u < acc {
            return support.pvalue_of_outcome(lo + k as u64).unwrap();
        }
    }
    support
        .pvalue_of_outcome(lo + pmf.len() as u64 - 1)
        .unwrap()
}

pub struct Instance {
    pub supports: Vec<PValueSupport>,
    pub pvalues: Vec<f64>,
}

/// `m` tests, each null with probability one half, otherwise odds ratio 5.
pub fn random_instance(rng: &mut ChaCha8Rng, m: usize, max_n: u64) -> Instance {
    let supports: Vec<PValueSupport> = (0..m).map(|_| random_support(rng, max_n)).collect();
    let pvalues = supports
        .iter()
        .map(|s| {
            let psi = if rng.random_bool(0.5) { 1.0 } else { 5.0 };
            draw_pvalue(rng, s, psi)
        })
        .collect();
    Instance { supports, pvalues }
}

/// Tests that all share one support: the same design, its group-swapped
/// mirror, or the complementary margin. Every support value is then common
/// to all tests.
pub fn common_support_instance(rng: &mut ChaCha8Rng, m: usize) -> Instance {
    let (n1, n2, c) = loop {
        let n1 = rng.random_range(2..=15u64);
        let n2 = rng.random_range(2..=15u64);
        let c = rng.random_range(2..n1 + n2 - 1);
        if fet_support(n1, n2, c).unwrap().values().len() >= 3 {
            break (n1, n2, c);
        }
    };
    let supports: Vec<PValueSupport> = (0..m)
        .map(|_| match rng.random_range(0..3) {
            0 => fet_support(n1, n2, c).unwrap(),
            1 => fet_support(n2, n1, c).unwrap(),
            _ => fet_support(n1, n2, n1 + n2 - c).unwrap(),
        })
        .collect();
    let pvalues = supports
        .iter()
        .map(|s| {
            let psi = if rng.random_bool(0.5) { 1.0 } else { 4.0 };
            draw_pvalue(rng, s, psi)
        })
        .collect();
    Instance { supports, pvalues }
}

/// Number of BH rejections by direct search: the largest `k` with
/// `m * p_(k) / k <= alpha`.
pub fn bh_linear_scan(pvalues: &[f64], alpha: f64) -> usize {
    let m = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (1..=m)
        .rev()
        .find(|&k| m as f64 * sorted[k - 1] / k as f64 <= alpha)
        .unwrap_or(0)
}
