//! Conservative t-statistic intervals from a handful of approximately
//! independent estimates (one per year), for use when the cross-sectional
//! sample size is unknown.
//!
//! With `L` estimates, `alpha_bar +- s_alpha / sqrt(L) * t_{L-1}(1 - v/2)`
//! covers the common exponent with probability at least `1 - v` even when
//! the estimates have unequal variances, provided `v <= 0.08`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantiles::student_t_critical;

/// Largest significance level with the conservativeness guarantee.
pub const MAX_SIGNIFICANCE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PanelInterval {
    pub count: usize,
    pub alpha_bar: f64,
    pub s_alpha: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl PanelInterval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Interval from the estimates at confidence `level`; rejects
/// `1 - level > 0.08`.
pub fn panel_ci(estimates: &[f64], level: f64) -> Result<PanelInterval> {
    panel_ci_with(estimates, level, false)
}

/// As [`panel_ci`]; `allow_unguaranteed` lifts the significance cap.
pub fn panel_ci_with(estimates: &[f64], level: f64, allow_unguaranteed: bool) -> Result<PanelInterval> {
    let l = estimates.len();
    if l < 2 {
        return Err(Error::TooFewEstimates { needed: 2, got: l });
    }
    if estimates.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("non-finite estimate".into()));
    }
    let v = 1.0 - level;
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level {level} must lie in (0, 1)"
        )));
    }
    if v > MAX_SIGNIFICANCE + 1e-12 && !allow_unguaranteed {
        return Err(Error::GuaranteeViolation(v));
    }
    let lf = l as f64;
    let alpha_bar = estimates.iter().sum::<f64>() / lf;
    let ss: f64 = estimates.iter().map(|a| (a - alpha_bar).powi(2)).sum();
    let s_alpha = (ss / (lf - 1.0)).sqrt();
    let half = s_alpha / lf.sqrt() * student_t_critical(v, l - 1)?;
    Ok(PanelInterval {
        count: l,
        alpha_bar,
        s_alpha,
        lo: alpha_bar - half,
        hi: alpha_bar + half,
        level,
    })
}

/// Estimates sharing the last digit of the year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelGroup {
    /// `"XXX0"` .. `"XXX9"`
    pub label: String,
    pub digit: u8,
    pub estimates: Vec<(i32, f64)>,
    /// Fewer than two members: no interval can be formed.
    pub flagged: bool,
}

impl PanelGroup {
    pub fn values(&self) -> Vec<f64> {
        self.estimates.iter().map(|(_, a)| *a).collect()
    }

    /// `None` for flagged groups.
    pub fn interval(&self, level: f64, allow_unguaranteed: bool) -> Result<Option<PanelInterval>> {
        if self.flagged {
            return Ok(None);
        }
        panel_ci_with(&self.values(), level, allow_unguaranteed).map(Some)
    }
}

/// Partition `(year, estimate)` pairs into ten groups by `year mod 10`.
/// Every digit gets a group; those with fewer than two members are flagged.
pub fn group_by_year_digit(series: &[(i32, f64)]) -> Result<Vec<PanelGroup>> {
    if series.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: Vec<PanelGroup> = (0..10u8)
        .map(|d| PanelGroup {
            label: format!("XXX{d}"),
            digit: d,
            estimates: Vec::new(),
            flagged: true,
        })
        .collect();
    for &(year, alpha) in series {
        groups[year.rem_euclid(10) as usize].estimates.push((year, alpha));
    }
    for g in &mut groups {
        g.estimates.sort_by_key(|(y, _)| *y);
        g.flagged = g.estimates.len() < 2;
    }
    Ok(groups)
}
