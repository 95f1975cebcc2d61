//! Continuously updated minimum distance (CUMD) estimation of the Pareto
//! exponent from top shares, the two-share closed-form estimator, and
//! cross-sectional inference: Wald and likelihood-ratio intervals and the
//! overidentification (specification) test.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{factor_spd, inverse_quadratic_form};
use crate::optimize::{polish_stationary, scan_then_refine};
use crate::quantiles::{chi2_1_quantile, chi2_upper_tail, normal_critical};
use crate::tail_moments::{check_xi, omega_unchecked, ratio_jacobian, PercentileGrid, XI_MAX, XI_MIN};

/// Number of points in the coarse scan over `xi`.
pub const SCAN_POINTS: usize = 201;
/// Absolute tolerance on `xi` for the local refinement.
pub const XI_TOLERANCE: f64 = 1e-9;
/// Difference step for the derivative used to polish the minimiser.
pub const POLISH_STEP: f64 = 1e-3;
/// Estimates closer than this to a clamp end are flagged.
pub const BOUNDARY_MARGIN: f64 = 1e-3;
/// Absolute tolerance on `alpha` for likelihood-ratio interval end points.
pub const LR_ALPHA_TOLERANCE: f64 = 1e-6;

/// Observed cumulative top shares `S_1 < ... < S_{K+1}` at the grid
/// percentiles, with optional year label and sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopShareTabulation {
    grid: PercentileGrid,
    shares: Vec<f64>,
    year: Option<i32>,
    n: Option<u64>,
}

impl TopShareTabulation {
    pub fn new(grid: PercentileGrid, shares: Vec<f64>) -> Result<Self> {
        if shares.len() != grid.points().len() {
            return Err(Error::InvalidShares(format!(
                "{} shares for {} percentiles",
                shares.len(),
                grid.points().len()
            )));
        }
        if let Some(s) = shares.iter().find(|s| !(s.is_finite() && **s > 0.0 && **s <= 1.0)) {
            return Err(Error::InvalidShares(format!("share {s} is outside (0, 1]")));
        }
        if let Some(i) = shares.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidShares(format!(
                "shares must be strictly increasing: S({}) = {} >= S({}) = {}",
                grid.points()[i],
                shares[i],
                grid.points()[i + 1],
                shares[i + 1]
            )));
        }
        Ok(Self {
            grid,
            shares,
            year: None,
            n: None,
        })
    }

    pub fn with_year(mut self, year: i32) -> Self {
        self.year = Some(year);
        self
    }

    pub fn with_sample_size(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }

    pub fn without_sample_size(mut self) -> Self {
        self.n = None;
        self
    }

    pub fn grid(&self) -> &PercentileGrid {
        &self.grid
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn year(&self) -> Option<i32> {
        self.year
    }

    pub fn sample_size(&self) -> Option<u64> {
        self.n
    }

    /// Restrict to the grid points with 0-based indices `first..=last`.
    pub fn subgrid(&self, first: usize, last: usize) -> Result<Self> {
        let grid = self.grid.subgrid(first, last)?;
        Ok(Self {
            grid,
            shares: self.shares[first..=last].to_vec(),
            year: self.year,
            n: self.n,
        })
    }

    /// The share at percentile `p`, if `p` is on the grid.
    pub fn share_at(&self, p: f64) -> Option<f64> {
        self.grid.index_of(p).map(|i| self.shares[i])
    }

    /// Multiply every share by `lambda` (used for invariance checks).
    pub fn rescaled(&self, lambda: f64) -> Result<Self> {
        let shares = self.shares.iter().map(|s| s * lambda).collect();
        Ok(Self {
            year: self.year,
            n: self.n,
            ..Self::new(self.grid.clone(), shares)?
        })
    }
}

/// `sbar_k = (S_{k+1} - S_k) / (S_{K+1} - S_K)`, `k = 1..K-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedShares(pub DVector<f64>);

impl NormalizedShares {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

pub fn normalize_shares(tab: &TopShareTabulation) -> Result<NormalizedShares> {
    let s = &tab.shares;
    let k = s.len() - 1;
    let last = s[k] - s[k - 1];
    if !(last > 0.0) {
        return Err(Error::InvalidShares("last group has no mass".into()));
    }
    let mut out = DVector::zeros(k - 1);
    for j in 0..k - 1 {
        let d = s[j + 1] - s[j];
        if !(d > 0.0) {
            return Err(Error::InvalidShares(format!("group {} has no mass", j + 1)));
        }
        out[j] = d / last;
    }
    Ok(NormalizedShares(out))
}

/// `G(xi) = (r(xi) - sbar)^T Omega(xi)^{-1} (r(xi) - sbar)`, evaluated by a
/// Cholesky solve.
pub fn cumde_objective(grid: &PercentileGrid, sbar: &NormalizedShares, xi: f64) -> Result<f64> {
    check_xi(xi)?;
    if sbar.0.len() + 1 != grid.groups() {
        return Err(Error::InvalidArgument(format!(
            "normalized shares have length {}, grid needs {}",
            sbar.0.len(),
            grid.groups() - 1
        )));
    }
    objective_unchecked(grid.points(), &sbar.0, xi)
}

fn objective_unchecked(p: &[f64], sbar: &DVector<f64>, xi: f64) -> Result<f64> {
    let r = crate::tail_moments::ratio_unchecked(p, xi);
    let chol = factor_spd(omega_unchecked(p, xi), "Omega")?;
    Ok(inverse_quadratic_form(&chol, &(r - sbar)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Invert the likelihood-ratio statistic.
    #[default]
    Lr,
    /// Asymptotic normality of the estimator.
    Wald,
}

impl std::str::FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(CiMethod::Lr),
            "wald" => Ok(CiMethod::Wald),
            other => Err(Error::InvalidArgument(format!(
                "unknown CI method `{other}` (expected lr or wald)"
            ))),
        }
    }
}

/// A confidence interval for `alpha`. An open end means the criterion was
/// not crossed before the edge of the parameter range; the stored value is
/// then that edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl ConfidenceInterval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, alpha: f64) -> bool {
        self.lo <= alpha && alpha <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Confidence level for the intervals, e.g. 0.95.
    pub level: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub xi_hat: f64,
    pub alpha_hat: f64,
    /// `G(xi_hat)`
    pub objective_at_min: f64,
    /// Number of groups `K` used.
    pub groups: usize,
    pub level: f64,
    pub wald_ci: Option<ConfidenceInterval>,
    pub lr_ci: Option<ConfidenceInterval>,
    pub se_alpha: Option<f64>,
    /// `n G(xi_hat)`, available when `n` is known and `K >= 3`.
    pub spec_stat: Option<f64>,
    pub spec_pvalue: Option<f64>,
    /// `xi_hat` is within [`BOUNDARY_MARGIN`] of the clamp.
    pub at_boundary: bool,
    /// `floor(n p_1)`: count of top observations excluded from the groups.
    pub top_count: Option<u64>,
}

impl EstimationResult {
    pub fn ci(&self, method: CiMethod) -> Option<ConfidenceInterval> {
        match method {
            CiMethod::Lr => self.lr_ci,
            CiMethod::Wald => self.wald_ci,
        }
    }
}

/// Minimise the CUMD objective over the clamped `xi` range and, when the
/// sample size is known, attach the Wald and LR intervals and the
/// specification test.
pub fn estimate_cumde(tab: &TopShareTabulation, opts: &EstimateOptions) -> Result<EstimationResult> {
    let sbar = normalize_shares(tab)?;
    let p = tab.grid.points();
    let min = scan_then_refine(
        |xi| objective_unchecked(p, &sbar.0, xi),
        XI_MIN,
        XI_MAX,
        SCAN_POINTS,
        XI_TOLERANCE,
    )?;
    let mut xi_hat = min.x;
    let mut objective_at_min = min.value;
    if let Some(x) = polish_stationary(
        |xi| objective_unchecked(p, &sbar.0, xi),
        xi_hat,
        XI_MIN,
        XI_MAX,
        POLISH_STEP,
    )? {
        let v = objective_unchecked(p, &sbar.0, x)?;
        // keep only the stationary point next to the located minimum
        if v <= min.value || (x - xi_hat).abs() <= 1e-7 {
            xi_hat = x;
            objective_at_min = v;
        }
    }
    let at_boundary = xi_hat - XI_MIN < BOUNDARY_MARGIN || XI_MAX - xi_hat < BOUNDARY_MARGIN;
    let mut result = EstimationResult {
        xi_hat,
        alpha_hat: 1.0 / xi_hat,
        objective_at_min,
        groups: tab.grid.groups(),
        level: opts.level,
        wald_ci: None,
        lr_ci: None,
        se_alpha: None,
        spec_stat: None,
        spec_pvalue: None,
        at_boundary,
        top_count: tab.n.map(|n| floor_count(n, p[0])),
    };
    if tab.n.is_some() {
        let (ci, se) = wald_interval(&result, tab, opts.level)?;
        result.wald_ci = Some(ci);
        result.se_alpha = Some(se);
        result.lr_ci = Some(lr_ci(tab, &result, opts.level)?);
        if result.groups >= 3 {
            let (stat, pvalue) = specification_test(tab, &result)?;
            result.spec_stat = Some(stat);
            result.spec_pvalue = Some(pvalue);
        }
    }
    Ok(result)
}

/// `floor(n p)` with tolerance for decimal fractions that land just below an
/// integer in binary (e.g. `0.29 * 100`).
pub fn floor_count(n: u64, p: f64) -> u64 {
    let x = n as f64 * p;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.floor() as u64
    }
}

/// `alpha = 1 / (1 - log(S_q/S_p) / log(q/p))` from two shares.
pub fn estimate_simple(s_p: f64, s_q: f64, p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && p < q && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < p < q <= 1, got p = {p}, q = {q}"
        )));
    }
    if !(s_p > 0.0 && s_p < s_q) {
        return Err(Error::InvalidShares(format!(
            "need 0 < S(p) < S(q), got S(p) = {s_p}, S(q) = {s_q}"
        )));
    }
    let slope = (s_q / s_p).ln() / (q / p).ln();
    if slope >= 1.0 {
        return Err(Error::TailViolation(format!(
            "log(S(q)/S(p)) / log(q/p) = {slope} >= 1"
        )));
    }
    Ok(1.0 / (1.0 - slope))
}

/// Wald interval `alpha_hat +- z sqrt((R^T Omega^{-1} R)^{-1} / n)`.
pub fn wald_ci(result: &EstimationResult, tab: &TopShareTabulation, level: f64) -> Result<ConfidenceInterval> {
    Ok(wald_interval(result, tab, level)?.0)
}

fn wald_interval(result: &EstimationResult, tab: &TopShareTabulation, level: f64) -> Result<(ConfidenceInterval, f64)> {
    let n = tab.n.ok_or(Error::MissingSampleSize("the Wald interval"))?;
    let z = normal_critical(level)?;
    let xi = result.xi_hat;
    let jac = ratio_jacobian(&tab.grid, xi)?;
    let chol = factor_spd(omega_unchecked(tab.grid.points(), xi), "Omega")?;
    let info = inverse_quadratic_form(&chol, &jac.d_alpha);
    if !(info > 0.0) {
        return Err(Error::Degenerate("Wald information R^T Omega^{-1} R".into()));
    }
    let se = (1.0 / (info * n as f64)).sqrt();
    let half = z * se;
    Ok((
        ConfidenceInterval {
            lo: result.alpha_hat - half,
            hi: result.alpha_hat + half,
            lo_open: false,
            hi_open: false,
        },
        se,
    ))
}

/// `{alpha : n (G(1/alpha) - G(xi_hat)) <= chi2_1(level)}`, located by
/// stepping outward from `alpha_hat` and bisecting each crossing.
pub fn lr_ci(tab: &TopShareTabulation, result: &EstimationResult, level: f64) -> Result<ConfidenceInterval> {
    let n = tab.n.ok_or(Error::MissingSampleSize("the likelihood-ratio interval"))? as f64;
    let threshold = chi2_1_quantile(level)?;
    let sbar = normalize_shares(tab)?;
    let p = tab.grid.points();
    let floor = result.objective_at_min;
    let excess =
        |alpha: f64| -> Result<f64> { Ok(n * (objective_unchecked(p, &sbar.0, 1.0 / alpha)? - floor) - threshold) };
    let alpha_min = 1.0 / XI_MAX;
    let alpha_max = 1.0 / XI_MIN;
    let (hi, hi_open) = lr_crossing(&excess, result.alpha_hat, alpha_max)?;
    let (lo, lo_open) = lr_crossing(&excess, result.alpha_hat, alpha_min)?;
    Ok(ConfidenceInterval {
        lo,
        hi,
        lo_open,
        hi_open,
    })
}

fn lr_crossing<F>(excess: &F, start: f64, limit: f64) -> Result<(f64, bool)>
where
    F: Fn(f64) -> Result<f64>,
{
    let dir = (limit - start).signum();
    let mut inside = start;
    let mut step = 1e-3 * start.max(1.0);
    loop {
        let cand = if dir > 0.0 {
            (inside + step).min(limit)
        } else {
            (inside - step).max(limit)
        };
        if excess(cand)? > 0.0 {
            let mut outside = cand;
            while (outside - inside).abs() > LR_ALPHA_TOLERANCE {
                let mid = 0.5 * (inside + outside);
                if excess(mid)? > 0.0 {
                    outside = mid;
                } else {
                    inside = mid;
                }
            }
            return Ok((0.5 * (inside + outside), false));
        }
        if cand == limit {
            return Ok((limit, true));
        }
        inside = cand;
        step *= 2.0;
    }
}

/// Overidentification test: `n G(xi_hat)` against `chi2(K-2)`.
pub fn specification_test(tab: &TopShareTabulation, result: &EstimationResult) -> Result<(f64, f64)> {
    let k = tab.grid.groups();
    if k < 3 {
        return Err(Error::TooFewGroups(k));
    }
    let n = tab.n.ok_or(Error::MissingSampleSize("the specification test"))?;
    let stat = n as f64 * result.objective_at_min;
    Ok((stat, chi2_upper_tail(stat, k - 2, 0.0)))
}
