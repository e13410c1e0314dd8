//! Monte Carlo engine for two-group count data with known truth.
//!
//! Each replicate draws its own random stream from `(seed, replicate)`, so
//! replicates can run in any order and on any number of threads. Results are
//! reduced in fixed-size chunks, in replicate order, which keeps every
//! aggregate bit-for-bit reproducible.

use std::sync::Arc;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    beta_trial_raw, bias_oracles_mixture, build_grid, default_taus, nu, pi0_hat_h,
    pi0_hat_substituted, storey_pi0_raw, storey_pi0_s, storey_pi0_s_raw, TuningGrid,
};
use crate::exact_tests::{binomial_u128, fet_support, ln_binomial, CountPair, PValueSupport};
use crate::procedures::{PlugIns, ProcedureTag};

/// Replicates folded into one partial aggregate before merging.
const CHUNK: usize = 1024;
/// Stream reserved for drawing the designed margins.
const MARGIN_STREAM: u64 = u64::MAX;
const MAX_MARGIN_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginMode {
    /// Margins are drawn once and held fixed; each replicate draws the table
    /// cell from the (non)central hypergeometric law given those margins.
    FixedMargins,
    /// Each replicate draws both binomial counts afresh.
    Unconditional,
}

impl std::str::FromStr for MarginMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "fixed-margins" | "fixed_margins" => Ok(MarginMode::FixedMargins),
            "unconditional" => Ok(MarginMode::Unconditional),
            _ => Err(Error::config(format!(
                "unknown margin mode '{s}'; valid: fixed-margins, unconditional"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    /// Number of hypotheses (rows) per replicate.
    pub m: usize,
    /// Probability that each hypothesis is a true null.
    pub pi0: f64,
    pub n1: u64,
    pub n2: u64,
    /// Odds ratio of group 1 against group 2 for false nulls.
    pub effect: f64,
    /// Success probability in group 2, and in both groups under the null.
    pub base_rate: f64,
    pub alpha: f64,
    /// Explicit tuning parameters; values below a replicate's `nu` are raised
    /// to `nu`. `None` uses [`default_taus`].
    pub taus: Option<Vec<f64>>,
    /// Tuning parameter of the Storey baselines.
    pub storey_tau: f64,
    pub reps: usize,
    pub seed: u64,
    pub margin_mode: MarginMode,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            m: 200,
            pi0: 0.8,
            n1: 20,
            n2: 20,
            effect: 4.0,
            base_rate: 0.3,
            alpha: 0.05,
            taus: None,
            storey_tau: 0.5,
            reps: 1000,
            seed: 1,
            margin_mode: MarginMode::FixedMargins,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.m == 0 {
            return fail("m must be at least 1".into());
        }
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if !(self.pi0 > 0.0 && self.pi0 <= 1.0) {
            return fail(format!("pi0 must lie in (0, 1], got {}", self.pi0));
        }
        if !(self.effect.is_finite() && self.effect > 0.0) {
            return fail(format!(
                "effect odds ratio must be positive, got {}",
                self.effect
            ));
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return fail(format!(
                "base rate must lie in (0, 1), got {}",
                self.base_rate
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.storey_tau > 0.0 && self.storey_tau < 1.0) {
            return fail(format!(
                "storey tau must lie in (0, 1), got {}",
                self.storey_tau
            ));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return fail("group sizes must be positive".into());
        }
        if let Some(taus) = &self.taus {
            if taus.is_empty() {
                return fail("explicit tuning grid is empty".into());
            }
            if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                return fail(format!("tuning parameter {t} outside (0, 1)"));
            }
            if taus.windows(2).any(|w| w[1] < w[0]) {
                return fail("tuning parameters must be non-decreasing".into());
            }
        }
        Ok(())
    }

    /// Group-1 success probability giving odds ratio `effect` against the
    /// base rate.
    pub fn alt_rate(&self) -> f64 {
        let q = self.base_rate;
        self.effect * q / (1.0 - q + self.effect * q)
    }

    fn resolve_taus(&self, nu: f64) -> Vec<f64> {
        match &self.taus {
            None => default_taus(nu),
            Some(taus) => {
                let mut out: Vec<f64> = taus.iter().map(|&t| t.max(nu)).collect();
                out.dedup();
                out
            }
        }
    }
}

/// One simulated data set after removal of uninformative rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub counts: Vec<CountPair>,
    /// `true` for a true null.
    pub truth: Vec<bool>,
    pub pvalues: Vec<f64>,
    pub supports: Vec<Arc<PValueSupport>>,
    /// Rows dropped because their support is `{1}` (total count at most 1,
    /// or otherwise uninformative).
    pub removed: usize,
}

impl Dataset {
    pub fn m0(&self) -> usize {
        self.truth.iter().filter(|&&t| t).count()
    }
}

/// Draws uniform variates from one replicate's stream.
struct Stream(ChaCha8Rng);

impl Stream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Stream(rng)
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Inverse-CDF draw; `cdf` is non-decreasing and ends at (about) 1.
    fn draw_index(&mut self, cdf: &[f64]) -> usize {
        let u = self.uniform();
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
    }
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn binomial_cdf(n: u64, q: f64) -> Vec<f64> {
    let pmf: Vec<f64> = (0..=n)
        .map(|k| {
            let coef = if n <= 64 {
                binomial_u128(n, k) as f64
            } else {
                ln_binomial(n, k).exp()
            };
            coef * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32)
        })
        .collect();
    cumulative(&pmf)
}

/// Per-total sampling tables for the conditional outcome.
struct MarginTables {
    support: Arc<PValueSupport>,
    null_cdf: Vec<f64>,
    alt_cdf: Vec<f64>,
}

/// Precomputed state shared by every replicate of one scenario.
pub struct Simulator {
    scenario: SimScenario,
    by_total: Vec<MarginTables>,
    /// Designed totals in fixed-margins mode.
    fixed_totals: Option<Vec<u64>>,
    fixed_grid: Option<TuningGrid>,
    group1_null: Vec<f64>,
    group1_alt: Vec<f64>,
    group2: Vec<f64>,
}

impl Simulator {
    pub fn new(scenario: SimScenario) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.n1 + scenario.n2;
        let by_total = (0..=n)
            .map(|c| {
                let support = fet_support(scenario.n1, scenario.n2, c)?;
                let null_cdf = cumulative(&support.outcome_pmf(1.0)?);
                let alt_cdf = cumulative(&support.outcome_pmf(scenario.effect)?);
                Ok(MarginTables {
                    support: Arc::new(support),
                    null_cdf,
                    alt_cdf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if by_total.iter().all(|t| t.support.is_trivial()) {
            return Err(Error::Degenerate(format!(
                "every total count is uninformative for n1 = {}, n2 = {}",
                scenario.n1, scenario.n2
            )));
        }

        let group1_null = binomial_cdf(scenario.n1, scenario.base_rate);
        let group1_alt = binomial_cdf(scenario.n1, scenario.alt_rate());
        let group2 = binomial_cdf(scenario.n2, scenario.base_rate);

        let mut sim = Self {
            scenario,
            by_total,
            fixed_totals: None,
            fixed_grid: None,
            group1_null,
            group1_alt,
            group2,
        };
        if sim.scenario.margin_mode == MarginMode::FixedMargins {
            let totals = sim.draw_designed_totals()?;
            let supports: Vec<_> = totals
                .iter()
                .map(|&c| sim.by_total[c as usize].support.clone())
                .collect();
            let taus = sim.scenario.resolve_taus(nu(&supports));
            sim.fixed_grid = Some(build_grid(&supports, &taus)?);
            sim.fixed_totals = Some(totals);
        }
        Ok(sim)
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    /// Designed totals (fixed-margins mode only).
    pub fn designed_totals(&self) -> Option<&[u64]> {
        self.fixed_totals.as_deref()
    }

    /// Supports of the designed margins (fixed-margins mode only).
    pub fn designed_supports(&self) -> Option<Vec<Arc<PValueSupport>>> {
        self.fixed_totals.as_ref().map(|totals| {
            totals
                .iter()
                .map(|&c| self.by_total[c as usize].support.clone())
                .collect()
        })
    }

    /// Draws null-rate totals row by row, redrawing uninformative ones.
    fn draw_designed_totals(&self) -> Result<Vec<u64>> {
        let mut stream = Stream::new(self.scenario.seed, MARGIN_STREAM);
        (0..self.scenario.m)
            .map(|_| {
                for _ in 0..MAX_MARGIN_ATTEMPTS {
                    let c = stream.draw_index(&self.group1_null) + stream.draw_index(&self.group2);
                    if !self.by_total[c].support.is_trivial() {
                        return Ok(c as u64);
                    }
                }
                Err(Error::Degenerate(
                    "could not draw an informative margin; raise the base rate or group sizes"
                        .into(),
                ))
            })
            .collect()
    }

    pub fn gen_dataset(&self, replicate: usize) -> Result<Dataset> {
        let sc = &self.scenario;
        let mut stream = Stream::new(sc.seed, replicate as u64);
        let mut data = Dataset {
            counts: Vec::with_capacity(sc.m),
            truth: Vec::with_capacity(sc.m),
            pvalues: Vec::with_capacity(sc.m),
            supports: Vec::with_capacity(sc.m),
            removed: 0,
        };
        for row in 0..sc.m {
            let is_null = stream.bernoulli(sc.pi0);
            let (x1, x2) = match &self.fixed_totals {
                Some(totals) => {
                    let c = totals[row];
                    let tables = &self.by_total[c as usize];
                    let cdf = if is_null {
                        &tables.null_cdf
                    } else {
                        &tables.alt_cdf
                    };
                    let y = tables.support.outcome_range().0 + stream.draw_index(cdf) as u64;
                    (y, c - y)
                }
                None => {
                    let g1 = if is_null {
                        &self.group1_null
                    } else {
                        &self.group1_alt
                    };
                    (
                        stream.draw_index(g1) as u64,
                        stream.draw_index(&self.group2) as u64,
                    )
                }
            };
            let tables = &self.by_total[(x1 + x2) as usize];
            if tables.support.is_trivial() {
                data.removed += 1;
                continue;
            }
            let pvalue = tables
                .support
                .pvalue_of_outcome(x1)
                .expect("outcome drawn from its own margin");
            data.counts.push(CountPair {
                x1,
                x2,
                n1: sc.n1,
                n2: sc.n2,
            });
            data.truth.push(is_null);
            data.pvalues.push(pvalue);
            data.supports.push(tables.support.clone());
        }
        if data.pvalues.is_empty() {
            return Err(Error::Degenerate(format!(
                "replicate {replicate}: every row was removed as uninformative"
            )));
        }
        Ok(data)
    }

    /// The tuning grid used for a replicate.
    pub fn grid_for(&self, data: &Dataset) -> Result<TuningGrid> {
        match &self.fixed_grid {
            Some(grid) => Ok(grid.clone()),
            None => {
                let taus = self.scenario.resolve_taus(nu(&data.supports));
                build_grid(&data.supports, &taus)
            }
        }
    }

    fn with_grid<T>(&self, data: &Dataset, f: impl FnOnce(&TuningGrid) -> Result<T>) -> Result<T> {
        match &self.fixed_grid {
            Some(grid) => f(grid),
            None => f(&self.grid_for(data)?),
        }
    }

    /// Runs `per_rep` over every replicate in parallel and folds the results
    /// in replicate order.
    fn fold_replicates<A, F, G>(
        &self,
        init: impl Fn() -> A + Sync,
        per_rep: F,
        merge: G,
    ) -> Result<A>
    where
        A: Send,
        F: Fn(&mut A, usize, Dataset) -> Result<()> + Sync,
        G: Fn(&mut A, A),
    {
        let reps = self.scenario.reps;
        let chunks: Vec<A> = (0..reps.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for r in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                    per_rep(&mut acc, r, self.gen_dataset(r)?)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = init();
        for chunk in chunks {
            merge(&mut total, chunk);
        }
        Ok(total)
    }
}

/// Running sums for a sample mean and its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean; 0 with fewer than two samples.
    pub fn se(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            se: self.se(),
            samples: self.n,
        }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub m: usize,
    pub m0: usize,
    /// False rejections.
    pub v: usize,
    /// Total rejections.
    pub r: usize,
    pub pi0_h: f64,
    pub pi0_substituted: f64,
    pub pi0_storey_s: f64,
}

impl ReplicateRecord {
    pub fn fdp(&self) -> f64 {
        self.v as f64 / self.r.max(1) as f64
    }

    /// True-discovery proportion; `None` when every hypothesis is null.
    pub fn power(&self) -> Option<f64> {
        let m1 = self.m - self.m0;
        (m1 > 0).then(|| (self.r - self.v) as f64 / m1 as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub estimate: Estimate,
    /// Mean estimate minus the scenario's `pi0`.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub procedure: String,
    pub reps: usize,
    pub fdr: Estimate,
    /// Over replicates with at least one false null; `None` if there are none.
    pub power: Option<Estimate>,
    pub estimators: Vec<EstimatorSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

pub fn run_fdr_experiment(scenario: &SimScenario, procedure: ProcedureTag) -> Result<SimResult> {
    let sim = Simulator::new(scenario.clone())?;
    sim.run_fdr_experiment(procedure)
}

impl Simulator {
    pub fn replicate_record(
        &self,
        procedure: ProcedureTag,
        data: &Dataset,
    ) -> Result<ReplicateRecord> {
        let (pi0_h, pi0_substituted) = self.with_grid(data, |grid| {
            Ok((
                pi0_hat_h(&data.pvalues, grid)?.pi0_hat,
                pi0_hat_substituted(&data.pvalues, grid)?.pi0_hat,
            ))
        })?;
        let pi0_storey_s = storey_pi0_s(&data.pvalues, self.scenario.storey_tau)?;
        let plug = PlugIns {
            pi0_h,
            pi0_storey_s,
        };
        let report = procedure.run(&data.pvalues, &data.supports, plug, self.scenario.alpha)?;
        let v = report.rejected.iter().filter(|&&i| data.truth[i]).count();
        Ok(ReplicateRecord {
            m: data.pvalues.len(),
            m0: data.m0(),
            v,
            r: report.k_hat,
            pi0_h,
            pi0_substituted,
            pi0_storey_s,
        })
    }

    pub fn run_fdr_experiment(&self, procedure: ProcedureTag) -> Result<SimResult> {
        let records = self.fold_replicates(
            Vec::new,
            |acc: &mut Vec<ReplicateRecord>, _, data| {
                acc.push(self.replicate_record(procedure, &data)?);
                Ok(())
            },
            |total, chunk| total.extend(chunk),
        )?;

        let mut fdr = Moments::default();
        let mut power = Moments::default();
        let mut est = [Moments::default(); 3];
        for rec in &records {
            fdr.push(rec.fdp());
            if let Some(p) = rec.power() {
                power.push(p);
            }
            est[0].push(rec.pi0_h);
            est[1].push(rec.pi0_substituted);
            est[2].push(rec.pi0_storey_s);
        }
        let names = ["pi0_h", "pi0_substituted", "pi0_storey_s"];
        let estimators = names
            .iter()
            .zip(&est)
            .map(|(name, m)| EstimatorSummary {
                name: name.to_string(),
                estimate: m.estimate(),
                bias: m.mean() - self.scenario.pi0,
            })
            .collect();
        Ok(SimResult {
            procedure: procedure.to_string(),
            reps: records.len(),
            fdr: fdr.estimate(),
            power: (power.n > 0).then(|| power.estimate()),
            estimators,
            replicates: records,
        })
    }
}

/// A Monte Carlo mean of an inverse estimator compared with `1 / pi0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseBound {
    pub estimate: Estimate,
    /// Mean is at most the bound plus three standard errors.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauBound {
    pub tau: f64,
    /// `E[1 / beta_k(tau)]` with the trial estimator truncated at 1.
    pub truncated: InverseBound,
    /// `E[1 / beta_k(tau)]` with the untruncated trial estimator.
    pub untruncated: InverseBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTwoEntry {
    pub k: usize,
    /// `E[1 / pi0_hat_k]` for the estimator as defined (mean of truncated
    /// trial estimators), over replicates where `k` is null.
    pub truncated: InverseBound,
    /// Same with the mean of the untruncated trial estimators.
    pub untruncated: InverseBound,
    pub per_tau: Vec<TauBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTwoReport {
    pub pi0: f64,
    /// `1 / pi0`.
    pub bound: f64,
    pub taus: Vec<f64>,
    pub etas: Vec<f64>,
    pub entries: Vec<ConditionTwoEntry>,
    /// Every truncated entry passes.
    pub all_pass: bool,
    /// Every untruncated entry, and every per-parameter bound, passes.
    pub all_pass_untruncated: bool,
}

/// Monte Carlo check that `E[1 / pi0_hat_k] <= 1 / pi0` for every true null
/// `k`, where `pi0_hat_k` is the estimator with `p_k` set to 0. Each trial
/// estimator is also checked on its own.
///
/// Both the truncated estimator and its untruncated counterpart are
/// reported. Truncation keeps `pi0_hat_k <= 1`, so with `pi0 = 1` the
/// truncated check can only pass when `pi0_hat_k = 1` almost surely.
pub fn check_condition_two(scenario: &SimScenario) -> Result<ConditionTwoReport> {
    if scenario.m > 10 {
        return Err(Error::config(format!(
            "condition check is limited to m <= 10, got {}",
            scenario.m
        )));
    }
    if scenario.reps < 100_000 {
        return Err(Error::config(format!(
            "condition check needs at least 100000 replicates, got {}",
            scenario.reps
        )));
    }
    if scenario.margin_mode != MarginMode::FixedMargins {
        return Err(Error::config(
            "condition check needs fixed margins so every row stays in the data",
        ));
    }
    let sim = Simulator::new(scenario.clone())?;
    let grid = sim
        .fixed_grid
        .as_ref()
        .expect("fixed-margins mode builds a grid");
    let (m, n) = (scenario.m, grid.n());

    // Slots: [truncated, untruncated] per k, and per (k, j).
    struct Acc {
        pi0: Vec<[Moments; 2]>,
        beta: Vec<[Moments; 2]>,
    }
    let acc = sim.fold_replicates(
        || Acc {
            pi0: vec![[Moments::default(); 2]; m],
            beta: vec![[Moments::default(); 2]; m * n],
        },
        |acc, _, data| {
            let mut work = data.pvalues.clone();
            for k in (0..m).filter(|&k| data.truth[k]) {
                work[k] = 0.0;
                let mut truncated_sum = 0.0;
                let mut raw_sum = 0.0;
                for j in 0..n {
                    let raw = beta_trial_raw(&work, grid, j)?;
                    let truncated = raw.min(1.0);
                    truncated_sum += truncated;
                    raw_sum += raw;
                    acc.beta[k * n + j][0].push(1.0 / truncated);
                    acc.beta[k * n + j][1].push(1.0 / raw);
                }
                acc.pi0[k][0].push(n as f64 / truncated_sum);
                acc.pi0[k][1].push(n as f64 / raw_sum);
                work[k] = data.pvalues[k];
            }
            Ok(())
        },
        |total, chunk| {
            for (t, c) in total.pi0.iter_mut().zip(&chunk.pi0) {
                t[0].merge(&c[0]);
                t[1].merge(&c[1]);
            }
            for (t, c) in total.beta.iter_mut().zip(&chunk.beta) {
                t[0].merge(&c[0]);
                t[1].merge(&c[1]);
            }
        },
    )?;

    let bound = 1.0 / scenario.pi0;
    let check = |m: &Moments| {
        let estimate = m.estimate();
        InverseBound {
            pass: estimate.samples == 0 || estimate.mean <= bound + 3.0 * estimate.se,
            estimate,
        }
    };
    let entries: Vec<ConditionTwoEntry> = (0..m)
        .map(|k| ConditionTwoEntry {
            k,
            truncated: check(&acc.pi0[k][0]),
            untruncated: check(&acc.pi0[k][1]),
            per_tau: (0..n)
                .map(|j| TauBound {
                    tau: grid.taus()[j],
                    truncated: check(&acc.beta[k * n + j][0]),
                    untruncated: check(&acc.beta[k * n + j][1]),
                })
                .collect(),
        })
        .collect();
    Ok(ConditionTwoReport {
        pi0: scenario.pi0,
        bound,
        taus: grid.taus().to_vec(),
        etas: grid.etas().to_vec(),
        all_pass: entries.iter().all(|e| e.truncated.pass),
        all_pass_untruncated: entries
            .iter()
            .all(|e| e.untruncated.pass && e.per_tau.iter().all(|t| t.untruncated.pass)),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check {
    pub m0: u64,
    pub eta: f64,
    /// `(1 - eta^m0) / (m0 (1 - eta))`.
    pub closed_form: f64,
    /// `sum_b P(B = b) / (1 + b)` for `B ~ Binomial(m0 - 1, 1 - eta)`.
    pub summed: f64,
    /// `1 / (m0 (1 - eta))`.
    pub bound: f64,
}

impl Lemma1Check {
    pub fn within_bound(&self) -> bool {
        self.closed_form <= self.bound && self.summed <= self.bound * (1.0 + 1e-12)
    }
}

pub fn lemma1_bound_check(m0: u64, eta: f64) -> Result<Lemma1Check> {
    if m0 == 0 {
        return Err(Error::input("m0 must be at least 1"));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::input(format!("eta must lie in [0, 1), got {eta}")));
    }
    let mf = m0 as f64;
    let closed_form = (1.0 - eta.powi(m0 as i32)) / (mf * (1.0 - eta));
    let trials = m0 - 1;
    let success = 1.0 - eta;
    let summed = (0..=trials)
        .map(|b| {
            let coef = if trials <= 64 {
                binomial_u128(trials, b) as f64
            } else {
                ln_binomial(trials, b).exp()
            };
            coef * success.powi(b as i32) * eta.powi((trials - b) as i32) / (1 + b) as f64
        })
        .sum();
    Ok(Lemma1Check {
        m0,
        eta,
        closed_form,
        summed,
        bound: 1.0 / (mf * (1.0 - eta)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub tau: f64,
    pub eta: f64,
    /// Empirical mean of the untruncated trial estimator; `None` when
    /// `eta = 1` and the estimator is unbounded.
    pub beta: Option<Estimate>,
    pub beta_oracle: f64,
    pub beta_agrees: bool,
    /// Empirical mean of the untruncated Storey estimator with the additive
    /// term, at this tuning parameter.
    pub storey_s: Estimate,
    /// Empirical mean of the untruncated Storey estimator without it.
    pub storey: Estimate,
    pub b1: f64,
    pub b2: f64,
    /// `storey_s.mean - pi0`: the empirical counterpart of `b2`.
    pub storey_s_bias: f64,
    pub storey_s_agrees: bool,
    /// `storey_s_bias - b1`; the extra bias due to discreteness.
    pub extra_bias: f64,
    pub extra_bias_non_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub pi0: f64,
    pub rows: Vec<BiasRow>,
    /// Truncated final estimators for reference.
    pub pi0_h: Estimate,
    pub pi0_substituted: Estimate,
    pub all_agree: bool,
}

/// Compares empirical bias of the trial estimators and the Storey
/// estimators with their closed-form values. Agreement means within three
/// standard errors.
pub fn bias_experiment(scenario: &SimScenario) -> Result<BiasReport> {
    if scenario.margin_mode != MarginMode::FixedMargins {
        return Err(Error::config(
            "bias oracles are conditional on margins; use fixed-margins mode",
        ));
    }
    let sim = Simulator::new(scenario.clone())?;
    let grid = sim
        .fixed_grid
        .as_ref()
        .expect("fixed-margins mode builds a grid");
    let supports = sim.designed_supports().expect("fixed-margins mode");
    let odds = vec![scenario.effect; supports.len()];
    let oracles = bias_oracles_mixture(&supports, &odds, scenario.pi0, grid)?;
    let n = grid.n();

    #[derive(Clone)]
    struct Acc {
        beta: Vec<Moments>,
        storey_s: Vec<Moments>,
        storey: Vec<Moments>,
        pi0_h: Moments,
        pi0_g: Moments,
    }
    let acc = sim.fold_replicates(
        || Acc {
            beta: vec![Moments::default(); n],
            storey_s: vec![Moments::default(); n],
            storey: vec![Moments::default(); n],
            pi0_h: Moments::default(),
            pi0_g: Moments::default(),
        },
        |acc, _, data| {
            let p = &data.pvalues;
            for j in 0..n {
                let tau = grid.taus()[j];
                let raw = beta_trial_raw(p, grid, j)?;
                if raw.is_finite() {
                    acc.beta[j].push(raw);
                }
                acc.storey_s[j].push(storey_pi0_s_raw(p, tau)?);
                acc.storey[j].push(storey_pi0_raw(p, tau)?);
            }
            acc.pi0_h.push(pi0_hat_h(p, grid)?.pi0_hat);
            acc.pi0_g.push(pi0_hat_substituted(p, grid)?.pi0_hat);
            Ok(())
        },
        |total, chunk| {
            for (t, c) in total.beta.iter_mut().zip(&chunk.beta) {
                t.merge(c);
            }
            for (t, c) in total.storey_s.iter_mut().zip(&chunk.storey_s) {
                t.merge(c);
            }
            for (t, c) in total.storey.iter_mut().zip(&chunk.storey) {
                t.merge(c);
            }
            total.pi0_h.merge(&chunk.pi0_h);
            total.pi0_g.merge(&chunk.pi0_g);
        },
    )?;

    let pi0 = scenario.pi0;
    let rows: Vec<BiasRow> = oracles
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let beta = (o.eta < 1.0).then(|| acc.beta[j].estimate());
            let beta_agrees = beta
                .map(|b| (b.mean - o.expected_beta).abs() <= 3.0 * b.se)
                .unwrap_or(true);
            let storey_s = acc.storey_s[j].estimate();
            let storey_s_bias = storey_s.mean - pi0;
            let extra_bias = storey_s_bias - o.b1;
            BiasRow {
                tau: o.tau,
                eta: o.eta,
                beta,
                beta_oracle: o.expected_beta,
                beta_agrees,
                storey: acc.storey[j].estimate(),
                b1: o.b1,
                b2: o.b2,
                storey_s_bias,
                storey_s_agrees: (storey_s_bias - o.b2).abs() <= 3.0 * storey_s.se,
                extra_bias,
                extra_bias_non_negative: extra_bias >= -3.0 * storey_s.se,
                storey_s,
            }
        })
        .collect();
    Ok(BiasReport {
        pi0,
        all_agree: rows
            .iter()
            .all(|r| r.beta_agrees && r.storey_s_agrees && r.extra_bias_non_negative),
        rows,
        pi0_h: acc.pi0_h.estimate(),
        pi0_substituted: acc.pi0_g.estimate(),
    })
}
