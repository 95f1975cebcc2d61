//! Per-year estimation reports and panel reports.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{
    estimate_cumde, estimate_simple, CiMethod, ConfidenceInterval, EstimateOptions, TopShareTabulation,
};
use crate::panel_inference::{group_by_year_digit, PanelInterval, MAX_SIGNIFICANCE};
use crate::tail_moments::Subgrid;

/// Label attached to intervals computed from a user-supplied sample size.
pub const ASSUMED_N_NOTE: &str = "conservative, assumed n";

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest {
    pub subgrid: Subgrid,
    /// Assumed cross-sectional sample size; enables intervals and the test.
    pub n: Option<u64>,
    pub ci_method: CiMethod,
    pub level: f64,
    /// `(p, q)` fractions for a two-share estimate column.
    pub simple: Option<(f64, f64)>,
}

impl Default for EstimateRequest {
    fn default() -> Self {
        Self {
            subgrid: Subgrid::TopPercent(1),
            n: None,
            ci_method: CiMethod::Lr,
            level: 0.95,
            simple: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleColumn {
    pub p: f64,
    pub q: f64,
    pub alpha: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearReport {
    pub year: Option<i32>,
    pub subgrid: Subgrid,
    pub groups: Option<usize>,
    pub alpha_hat: Option<f64>,
    pub xi_hat: Option<f64>,
    pub objective: Option<f64>,
    pub ci_method: CiMethod,
    pub level: f64,
    pub ci: Option<ConfidenceInterval>,
    pub ci_note: Option<&'static str>,
    pub n: Option<u64>,
    /// `floor(n p_1)`
    pub top_count: Option<u64>,
    pub at_boundary: Option<bool>,
    pub spec_stat: Option<f64>,
    pub spec_pvalue: Option<f64>,
    pub spec_reject: Option<bool>,
    pub simple: Option<SimpleColumn>,
    /// Set when this year could not be estimated; other fields are empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub rows: Vec<YearReport>,
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

impl RunReport {
    /// One JSON object per year.
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("report rows serialise") + "\n")
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let with_simple = self.rows.iter().any(|r| r.simple.is_some());
        let _ = write!(
            s,
            "{:>6} {:>8} {:>8} {:>19} {:>9} {:>8}",
            "year", "subgrid", "alpha", "ci", "spec p", "boundary"
        );
        if with_simple {
            let _ = write!(s, " {:>8}", "simple");
        }
        s.push('\n');
        for r in &self.rows {
            let year = r.year.map_or_else(|| "-".into(), |y| y.to_string());
            if let Some(e) = &r.error {
                let _ = writeln!(s, "{year:>6} {:>8} error: {e}", r.subgrid.to_string());
                continue;
            }
            let ci =
                r.ci.map_or_else(|| "-".into(), |c| format!("({:.3}, {:.3})", c.lo, c.hi));
            let boundary = match r.at_boundary {
                Some(true) => "yes",
                _ => "",
            };
            let _ = write!(
                s,
                "{year:>6} {:>8} {:>8} {ci:>19} {:>9} {boundary:>8}",
                r.subgrid.to_string(),
                fmt_opt(r.alpha_hat, 4),
                fmt_opt(r.spec_pvalue, 3),
            );
            if with_simple {
                let v = r.simple.as_ref().and_then(|c| c.alpha);
                let _ = write!(s, " {:>8}", fmt_opt(v, 4));
            }
            s.push('\n');
        }
        if self.rows.iter().any(|r| r.ci_note.is_some()) {
            let _ = writeln!(s, "intervals and tests: {ASSUMED_N_NOTE}");
        }
        s
    }
}

fn simple_column(tab: &TopShareTabulation, (p, q): (f64, f64)) -> SimpleColumn {
    let res = match (tab.share_at(p), tab.share_at(q)) {
        (Some(sp), Some(sq)) => estimate_simple(sp, sq, p, q),
        _ => Err(Error::InvalidArgument(format!(
            "({p}, {q}) are not both grid percentiles"
        ))),
    };
    match res {
        Ok(a) => SimpleColumn {
            p,
            q,
            alpha: Some(a),
            error: None,
        },
        Err(e) => SimpleColumn {
            p,
            q,
            alpha: None,
            error: Some(e.to_string()),
        },
    }
}

fn estimate_year(tab: &TopShareTabulation, req: &EstimateRequest) -> YearReport {
    let mut row = YearReport {
        year: tab.year(),
        subgrid: req.subgrid,
        groups: None,
        alpha_hat: None,
        xi_hat: None,
        objective: None,
        ci_method: req.ci_method,
        level: req.level,
        ci: None,
        ci_note: None,
        n: req.n,
        top_count: None,
        at_boundary: None,
        spec_stat: None,
        spec_pvalue: None,
        spec_reject: None,
        simple: req.simple.map(|pq| simple_column(tab, pq)),
        error: None,
    };
    let fit = || -> Result<_> {
        let (first, last) = req.subgrid.bounds(tab.grid())?;
        let mut sub = tab.subgrid(first, last)?;
        sub = match req.n {
            Some(n) => sub.with_sample_size(n),
            None => sub.without_sample_size(),
        };
        estimate_cumde(&sub, &EstimateOptions { level: req.level })
    };
    match fit() {
        Ok(est) => {
            row.groups = Some(est.groups);
            row.alpha_hat = Some(est.alpha_hat);
            row.xi_hat = Some(est.xi_hat);
            row.objective = Some(est.objective_at_min);
            row.ci = est.ci(req.ci_method);
            row.ci_note = row.ci.map(|_| ASSUMED_N_NOTE);
            row.top_count = est.top_count;
            row.at_boundary = Some(est.at_boundary);
            row.spec_stat = est.spec_stat;
            row.spec_pvalue = est.spec_pvalue;
            row.spec_reject = est.spec_pvalue.map(|p| p < 1.0 - req.level);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Estimate every year; failures are recorded per year, not propagated.
pub fn cmd_estimate(tabs: &[TopShareTabulation], req: &EstimateRequest) -> Result<RunReport> {
    if tabs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(req.level > 0.0 && req.level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level {} must lie in (0, 1)",
            req.level
        )));
    }
    req.subgrid.bounds(tabs[0].grid())?;
    Ok(RunReport {
        rows: tabs.iter().map(|t| estimate_year(t, req)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// Ten groups by the last digit of the year.
    #[default]
    YearDigit,
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "year-digit" => Ok(Grouping::YearDigit),
            other => Err(Error::InvalidArgument(format!(
                "unknown grouping `{other}` (expected year-digit)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRequest {
    pub subgrid: Subgrid,
    pub grouping: Grouping,
    pub level: f64,
    /// `(p, q)` fractions for the two-share estimator intervals.
    pub simple: (f64, f64),
    /// Allow significance above 0.08.
    pub allow_unguaranteed: bool,
}

impl Default for PanelRequest {
    fn default() -> Self {
        Self {
            subgrid: Subgrid::TopPercent(1),
            grouping: Grouping::YearDigit,
            level: 0.95,
            simple: (0.001, 0.01),
            allow_unguaranteed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelGroupReport {
    pub label: String,
    pub years: Vec<i32>,
    /// Fewer than two usable years.
    pub flagged: bool,
    pub cmd: Option<PanelInterval>,
    pub simple: Option<PanelInterval>,
    pub cmd_estimates: Vec<(i32, f64)>,
    pub simple_estimates: Vec<(i32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelReport {
    pub subgrid: Subgrid,
    pub simple: (f64, f64),
    pub level: f64,
    pub groups: Vec<PanelGroupReport>,
    /// Years dropped because an estimator failed, with the reason.
    pub skipped: Vec<(i32, String)>,
}

impl PanelReport {
    pub fn to_jsonl(&self) -> String {
        self.groups
            .iter()
            .map(|g| serde_json::to_string(g).expect("panel rows serialise") + "\n")
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let iv = |c: &Option<PanelInterval>| c.map_or_else(|| "-".into(), |c| format!("({:.2}, {:.2})", c.lo, c.hi));
        let _ = writeln!(
            s,
            "{:>6} {:>3} {:>16} {:>16}",
            "group",
            "L",
            format!("cmd {}", self.subgrid),
            format!(
                "simple ({},{})",
                super::tabulation::fraction_to_percent(self.simple.0),
                super::tabulation::fraction_to_percent(self.simple.1)
            ),
        );
        for g in &self.groups {
            let flag = if g.flagged { "  (fewer than 2 years)" } else { "" };
            let _ = writeln!(
                s,
                "{:>6} {:>3} {:>16} {:>16}{flag}",
                g.label,
                g.years.len(),
                iv(&g.cmd),
                iv(&g.simple)
            );
        }
        for (y, e) in &self.skipped {
            let _ = writeln!(s, "skipped {y}: {e}");
        }
        s
    }
}

/// Point estimates per year, grouped by year digit, with a t-interval per
/// group for both estimators.
pub fn cmd_panel(tabs: &[TopShareTabulation], req: &PanelRequest) -> Result<PanelReport> {
    if tabs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let v = 1.0 - req.level;
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level {} must lie in (0, 1)",
            req.level
        )));
    }
    if v > MAX_SIGNIFICANCE + 1e-12 && !req.allow_unguaranteed {
        return Err(Error::GuaranteeViolation(v));
    }
    let (first, last) = req.subgrid.bounds(tabs[0].grid())?;
    let (p, q) = req.simple;
    let mut cmd = Vec::new();
    let mut simple = Vec::new();
    let mut skipped = Vec::new();
    for tab in tabs {
        let year = tab
            .year()
            .ok_or_else(|| Error::InvalidArgument("panel inference needs a year on every row".into()))?;
        let fit = tab
            .subgrid(first, last)
            .and_then(|s| estimate_cumde(&s.without_sample_size(), &EstimateOptions { level: req.level }));
        match fit {
            Ok(est) => cmd.push((year, est.alpha_hat)),
            Err(e) => skipped.push((year, format!("cmd: {e}"))),
        }
        let two = match (tab.share_at(p), tab.share_at(q)) {
            (Some(sp), Some(sq)) => estimate_simple(sp, sq, p, q),
            _ => Err(Error::InvalidArgument(format!(
                "({p}, {q}) are not both grid percentiles"
            ))),
        };
        match two {
            Ok(a) => simple.push((year, a)),
            Err(e) => skipped.push((year, format!("simple: {e}"))),
        }
    }
    let groups = match req.grouping {
        Grouping::YearDigit => {
            let years: Vec<(i32, f64)> = tabs.iter().filter_map(|t| t.year()).map(|y| (y, 0.0)).collect();
            let by_year = group_by_year_digit(&years)?;
            let cmd_groups = if cmd.is_empty() {
                None
            } else {
                Some(group_by_year_digit(&cmd)?)
            };
            let simple_groups = if simple.is_empty() {
                None
            } else {
                Some(group_by_year_digit(&simple)?)
            };
            let mut out = Vec::with_capacity(10);
            for (i, g) in by_year.into_iter().enumerate() {
                let c = cmd_groups.as_ref().map(|v| &v[i]);
                let sg = simple_groups.as_ref().map(|v| &v[i]);
                let cmd_iv = match c {
                    Some(c) => c.interval(req.level, req.allow_unguaranteed)?,
                    None => None,
                };
                let simple_iv = match sg {
                    Some(s) => s.interval(req.level, req.allow_unguaranteed)?,
                    None => None,
                };
                out.push(PanelGroupReport {
                    label: g.label,
                    years: g.estimates.iter().map(|(y, _)| *y).collect(),
                    flagged: cmd_iv.is_none() && simple_iv.is_none(),
                    cmd: cmd_iv,
                    simple: simple_iv,
                    cmd_estimates: c.map(|c| c.estimates.clone()).unwrap_or_default(),
                    simple_estimates: sg.map(|s| s.estimates.clone()).unwrap_or_default(),
                });
            }
            out
        }
    };
    Ok(PanelReport {
        subgrid: req.subgrid,
        simple: req.simple,
        level: req.level,
        groups,
        skipped,
    })
}
