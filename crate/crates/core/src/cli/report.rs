use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Experiment, Format, RunConfig, DEFAULT_ALPHA, DEFAULT_STOREY_TAU};
use super::input::CheckedRow;
use super::number::{fmt_sig, round_json};
use crate::error::{Error, Result};
use crate::estimator::{
    build_grid, default_taus, nu, pi0_hat_h, pi0_hat_substituted, storey_pi0, storey_pi0_s,
    TuningGrid,
};
use crate::exact_tests::PValueSupport;
use crate::procedures::{PlugIns, ProcedureTag};
use crate::simulate::{bias_experiment, check_condition_two, SimResult, Simulator};

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self, digits: usize) -> String {
        match self {
            Cell::Num(x) => fmt_sig(*x, digits),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// A rendered command result: JSON document plus a flat table for CSV.
#[derive(Debug, Clone)]
pub struct Report {
    command: &'static str,
    config: Value,
    result: Value,
    meta: Vec<(String, Cell)>,
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Report {
    fn new(command: &'static str, cfg: &RunConfig, result: Value) -> Result<Self> {
        Ok(Self {
            command,
            config: echo_config(cfg)?,
            result,
            meta: Vec::new(),
            header: Vec::new(),
            rows: Vec::new(),
        })
    }

    fn meta(&mut self, key: &str, value: impl Into<Cell>) {
        self.meta.push((key.to_string(), value.into()));
    }

    pub fn render(&self, format: Format, digits: usize) -> Result<String> {
        match format {
            Format::Json => {
                let mut result = self.result.clone();
                round_json(&mut result, digits);
                let doc = json!({
                    "command": self.command,
                    "config": self.config,
                    "result": result,
                });
                let mut text = serde_json::to_string_pretty(&doc).map_err(io_error)?;
                text.push('\n');
                Ok(text)
            }
            Format::Csv => {
                let mut out = String::new();
                out.push_str(&format!("# command: {}\n", self.command));
                out.push_str(&format!("# config: {}\n", self.config));
                for (key, value) in &self.meta {
                    out.push_str(&format!("# {key}: {}\n", value.render(digits)));
                }
                let mut wtr = csv::Writer::from_writer(Vec::new());
                wtr.write_record(&self.header).map_err(csv_error)?;
                for row in &self.rows {
                    wtr.write_record(row.iter().map(|c| c.render(digits)))
                        .map_err(csv_error)?;
                }
                let bytes = wtr.into_inner().map_err(|e| io_error(e.into_error()))?;
                out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
                Ok(out)
            }
        }
    }
}

fn io_error(e: impl Into<std::io::Error>) -> Error {
    Error::Io(e.into())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.into())
}

fn to_value<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(io_error)
}

/// The effective configuration: user values verbatim, defaults filled in.
fn echo_config(cfg: &RunConfig) -> Result<Value> {
    let mut echo = cfg.clone();
    echo.format = Some(cfg.format());
    echo.digits = Some(cfg.digits()?);
    echo.alpha = Some(cfg.alpha.unwrap_or(DEFAULT_ALPHA));
    echo.storey_tau = Some(cfg.storey_tau.unwrap_or(DEFAULT_STOREY_TAU));
    to_value(&echo)
}

fn kept(rows: &[CheckedRow]) -> Vec<&CheckedRow> {
    rows.iter().filter(|r| r.removal.is_none()).collect()
}

fn joined(values: &[f64]) -> impl Fn(usize) -> String + '_ {
    move |digits| {
        values
            .iter()
            .map(|&v| fmt_sig(v, digits))
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub fn support(cfg: &RunConfig, rows: &[CheckedRow]) -> Result<Report> {
    let digits = cfg.digits()?;
    let records: Vec<Value> = rows
        .iter()
        .map(|r| {
            let c = r.row.counts;
            json!({
                "id": r.row.id,
                "line": r.row.line,
                "x1": c.x1, "x2": c.x2, "n1": c.n1, "n2": c.n2,
                "total": c.total(),
                "pvalue": r.pvalue,
                "status": status(r),
                "reason": r.removal.map(|x| x.as_str()),
                "support": r.support.values(),
                "masses": r.support.masses(),
            })
        })
        .collect();
    let mut report = Report::new("support", cfg, json!({ "rows": records }))?;
    report.meta("rows", rows.len());
    report.meta("removed", rows.len() - kept(rows).len());
    report.header = vec![
        "id", "x1", "x2", "n1", "n2", "total", "pvalue", "status", "reason", "support", "masses",
    ];
    for r in rows {
        let c = r.row.counts;
        report.rows.push(vec![
            r.row.id.as_str().into(),
            c.x1.into(),
            c.x2.into(),
            c.n1.into(),
            c.n2.into(),
            c.total().into(),
            r.pvalue.into(),
            status(r).into(),
            r.removal.map_or(Cell::Empty, |x| x.as_str().into()),
            joined(r.support.values())(digits).into(),
            joined(r.support.masses())(digits).into(),
        ]);
    }
    Ok(report)
}

fn status(r: &CheckedRow) -> &'static str {
    if r.removal.is_some() {
        "removed"
    } else {
        "kept"
    }
}

/// P-values and supports of the kept rows, and their tuning grid.
struct Analysis<'a> {
    kept: Vec<&'a CheckedRow>,
    pvalues: Vec<f64>,
    supports: Vec<&'a PValueSupport>,
}

impl<'a> Analysis<'a> {
    fn new(rows: &'a [CheckedRow]) -> Result<Self> {
        let kept = kept(rows);
        if kept.is_empty() {
            return Err(Error::Input(
                "no informative rows left after cleaning".into(),
            ));
        }
        Ok(Self {
            pvalues: kept.iter().map(|r| r.pvalue).collect(),
            supports: kept.iter().map(|r| &r.support).collect(),
            kept,
        })
    }

    fn nu(&self) -> f64 {
        nu(&self.supports)
    }

    fn grid(&self, cfg: &RunConfig) -> Result<TuningGrid> {
        let taus = match &cfg.taus {
            Some(taus) => taus.clone(),
            None => default_taus(self.nu()),
        };
        build_grid(&self.supports, &taus)
    }
}

pub fn estimate(cfg: &RunConfig, rows: &[CheckedRow]) -> Result<Report> {
    let data = Analysis::new(rows)?;
    let grid = data.grid(cfg)?;
    let h = pi0_hat_h(&data.pvalues, &grid)?;
    let sub = pi0_hat_substituted(&data.pvalues, &grid)?;
    let storey_tau = cfg.storey_tau()?;
    let storey = storey_pi0(&data.pvalues, storey_tau)?;
    let storey_s = storey_pi0_s(&data.pvalues, storey_tau)?;

    let mut per_tau = Vec::with_capacity(grid.n());
    let mut table = Vec::with_capacity(grid.n());
    for (j, &tau) in grid.taus().iter().enumerate() {
        let (s, ss) = (
            storey_pi0(&data.pvalues, tau)?,
            storey_pi0_s(&data.pvalues, tau)?,
        );
        per_tau.push(json!({
            "tau": tau,
            "eta": grid.etas()[j],
            "beta": h.betas[j],
            "beta_substituted": sub.betas[j],
            "storey": s,
            "storey_s": ss,
        }));
        table.push(vec![
            tau.into(),
            grid.etas()[j].into(),
            h.betas[j].into(),
            sub.betas[j].into(),
            s.into(),
            ss.into(),
        ]);
    }

    let result = json!({
        "m": data.kept.len(),
        "removed": rows.len() - data.kept.len(),
        "nu": grid.nu(),
        "pi0_h": h.pi0_hat,
        "pi0_substituted": sub.pi0_hat,
        "storey_tau": storey_tau,
        "storey": storey,
        "storey_s": storey_s,
        "per_tau": per_tau,
    });
    let mut report = Report::new("estimate", cfg, result)?;
    report.meta("m", data.kept.len());
    report.meta("removed", rows.len() - data.kept.len());
    report.meta("nu", grid.nu());
    report.meta("pi0_h", h.pi0_hat);
    report.meta("pi0_substituted", sub.pi0_hat);
    report.meta("storey_tau", storey_tau);
    report.meta("storey", storey);
    report.meta("storey_s", storey_s);
    report.header = vec![
        "tau",
        "eta",
        "beta",
        "beta_substituted",
        "storey",
        "storey_s",
    ];
    report.rows = table;
    Ok(report)
}

pub fn analyze(cfg: &RunConfig, rows: &[CheckedRow]) -> Result<Report> {
    let procedure = match cfg.procedures(&[super::default_analyze_procedure()])?[..] {
        [tag] => tag,
        _ => return Err(Error::config("analyze takes exactly one procedure")),
    };
    let alpha = cfg.alpha()?;
    let data = Analysis::new(rows)?;

    let pi0_h = match procedure {
        ProcedureTag::AbhH | ProcedureTag::AbhhH => {
            Some(pi0_hat_h(&data.pvalues, &data.grid(cfg)?)?.pi0_hat)
        }
        _ => None,
    };
    let pi0_storey_s = match procedure {
        ProcedureTag::AbhStorey => Some(storey_pi0_s(&data.pvalues, cfg.storey_tau()?)?),
        _ => None,
    };
    let plug = PlugIns {
        pi0_h: pi0_h.unwrap_or(1.0),
        pi0_storey_s: pi0_storey_s.unwrap_or(1.0),
    };
    let rejection = procedure.run(&data.pvalues, &data.supports, plug, alpha)?;

    let mut records = Vec::with_capacity(rows.len());
    let mut table = Vec::with_capacity(rows.len());
    let mut k = 0;
    for r in rows {
        let (adjusted, rejected) = if r.removal.is_none() {
            let out = (Some(rejection.adjusted[k]), rejection.is_rejected(k));
            k += 1;
            out
        } else {
            (None, false)
        };
        records.push(json!({
            "id": r.row.id,
            "pvalue": r.pvalue,
            "adjusted": adjusted,
            "rejected": rejected,
            "status": status(r),
        }));
        table.push(vec![
            r.row.id.as_str().into(),
            r.pvalue.into(),
            adjusted.into(),
            rejected.into(),
            status(r).into(),
        ]);
    }

    let result = json!({
        "procedure": procedure.to_string(),
        "alpha": alpha,
        "m": data.kept.len(),
        "removed": rows.len() - data.kept.len(),
        "pi0_h": pi0_h,
        "pi0_storey_s": pi0_storey_s,
        "k_hat": rejection.k_hat,
        "rows": records,
    });
    let mut report = Report::new("analyze", cfg, result)?;
    report.meta("procedure", procedure.to_string());
    report.meta("alpha", alpha);
    report.meta("m", data.kept.len());
    report.meta("removed", rows.len() - data.kept.len());
    if let Some(v) = pi0_h {
        report.meta("pi0_h", v);
    }
    if let Some(v) = pi0_storey_s {
        report.meta("pi0_storey_s", v);
    }
    report.meta("k_hat", rejection.k_hat);
    report.header = vec!["id", "pvalue", "adjusted", "rejected", "status"];
    report.rows = table;
    Ok(report)
}

const ALL_PROCEDURES: [ProcedureTag; 5] = [
    ProcedureTag::Bh,
    ProcedureTag::AbhH,
    ProcedureTag::AbhStorey,
    ProcedureTag::Bhh,
    ProcedureTag::AbhhH,
];

const LONG_HEADER: [&str; 7] = [
    "experiment",
    "procedure",
    "tau",
    "k",
    "metric",
    "value",
    "se",
];

/// One long-format line: `(procedure, tau, k)` identify the cell.
fn long_row(
    experiment: &str,
    procedure: &str,
    tau: Option<f64>,
    k: Option<usize>,
    metric: &str,
    value: impl Into<Cell>,
    se: Option<f64>,
) -> Vec<Cell> {
    vec![
        experiment.into(),
        procedure.into(),
        tau.into(),
        k.map_or(Cell::Empty, Cell::from),
        metric.into(),
        value.into(),
        se.into(),
    ]
}

pub fn simulate(cfg: &RunConfig) -> Result<Report> {
    let scenario = cfg.scenario()?;
    let experiment = cfg.experiment.unwrap_or_default();
    let scenario_value = to_value(&scenario)?;
    let mut rows = Vec::new();
    let (name, result) = match experiment {
        Experiment::Fdr => {
            let procedures = cfg.procedures(&ALL_PROCEDURES)?;
            let sim = Simulator::new(scenario)?;
            let results = procedures
                .iter()
                .map(|&tag| sim.run_fdr_experiment(tag))
                .collect::<Result<Vec<SimResult>>>()?;
            for r in &results {
                let row = |metric: &str, mean: f64, se: f64| {
                    long_row("fdr", &r.procedure, None, None, metric, mean, Some(se))
                };
                rows.push(row("fdr", r.fdr.mean, r.fdr.se));
                if let Some(p) = r.power {
                    rows.push(row("power", p.mean, p.se));
                }
                for e in &r.estimators {
                    rows.push(row(&e.name, e.estimate.mean, e.estimate.se));
                    rows.push(long_row(
                        "fdr",
                        &r.procedure,
                        None,
                        None,
                        &format!("{}_bias", e.name),
                        e.bias,
                        None,
                    ));
                }
            }
            (
                "fdr",
                json!({ "scenario": scenario_value, "results": to_value(&results)? }),
            )
        }
        Experiment::Bias => {
            let bias = bias_experiment(&scenario)?;
            let est = |metric: &str, e: crate::simulate::Estimate| {
                long_row("bias", "", None, None, metric, e.mean, Some(e.se))
            };
            rows.push(est("pi0_h", bias.pi0_h));
            rows.push(est("pi0_substituted", bias.pi0_substituted));
            for row in &bias.rows {
                let t = Some(row.tau);
                let line = |metric: &str, value: f64, se: Option<f64>| {
                    long_row("bias", "", t, None, metric, value, se)
                };
                rows.push(line("eta", row.eta, None));
                if let Some(b) = row.beta {
                    rows.push(line("beta", b.mean, Some(b.se)));
                }
                rows.push(line("beta_oracle", row.beta_oracle, None));
                rows.push(line("storey", row.storey.mean, Some(row.storey.se)));
                rows.push(line("storey_s", row.storey_s.mean, Some(row.storey_s.se)));
                rows.push(line("b1", row.b1, None));
                rows.push(line("b2", row.b2, None));
                rows.push(line("extra_bias", row.extra_bias, None));
            }
            rows.push(long_row(
                "bias",
                "",
                None,
                None,
                "all_agree",
                bias.all_agree,
                None,
            ));
            (
                "bias",
                json!({ "scenario": scenario_value, "report": to_value(&bias)? }),
            )
        }
        Experiment::ConditionTwo => {
            let check = check_condition_two(&scenario)?;
            for e in &check.entries {
                let k = Some(e.k);
                let bound = |metric: &str, tau: Option<f64>, b: &crate::simulate::InverseBound| {
                    long_row(
                        "condition_two",
                        "",
                        tau,
                        k,
                        metric,
                        b.estimate.mean,
                        Some(b.estimate.se),
                    )
                };
                rows.push(bound("inverse_truncated", None, &e.truncated));
                rows.push(bound("inverse_untruncated", None, &e.untruncated));
                for t in &e.per_tau {
                    rows.push(bound("inverse_trial_truncated", Some(t.tau), &t.truncated));
                    rows.push(bound(
                        "inverse_trial_untruncated",
                        Some(t.tau),
                        &t.untruncated,
                    ));
                }
            }
            rows.push(long_row(
                "condition_two",
                "",
                None,
                None,
                "bound",
                check.bound,
                None,
            ));
            rows.push(long_row(
                "condition_two",
                "",
                None,
                None,
                "all_pass",
                check.all_pass,
                None,
            ));
            rows.push(long_row(
                "condition_two",
                "",
                None,
                None,
                "all_pass_untruncated",
                check.all_pass_untruncated,
                None,
            ));
            (
                "condition_two",
                json!({ "scenario": scenario_value, "report": to_value(&check)? }),
            )
        }
    };
    let mut result = result;
    result["experiment"] = json!(name);
    let mut report = Report::new("simulate", cfg, result)?;
    report.meta("experiment", name);
    report.header = LONG_HEADER.to_vec();
    report.rows = rows;
    Ok(report)
}
