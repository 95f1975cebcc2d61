//! Closed-form moments of sums of Pareto order statistics over
//! top-percentile groups.
//!
//! For a Pareto law with exponent `alpha = 1/xi` and minimum size `c`, the
//! scaled group sum `Ybar_k = (1/n) * sum of the order statistics between the
//! top `p_k` and top `p_{k+1}` fractions` is asymptotically normal with mean
//! `mu_k` and covariance `Sigma / n`. Normalising by the last group removes
//! `c`, leaving the ratio vector `r(xi)` and its covariance `Omega(xi)`.
//!
//! All `xi`-dependent functions accept `xi` in [`XI_MIN`, `XI_MAX`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::factor_spd;

/// Smallest admissible inverse exponent (alpha = 1e4).
pub const XI_MIN: f64 = 1e-4;
/// Largest admissible inverse exponent (alpha just above 1).
pub const XI_MAX: f64 = 1.0 - 1e-4;

/// Below this `|t|`, `(q^t - p^t)/t` switches to its Taylor expansion.
const TAYLOR_THRESHOLD: f64 = 1e-6;

/// Strictly increasing top-percentile fractions `0 < p_1 < ... < p_{K+1} <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileGrid {
    p: Vec<f64>,
}

impl PercentileGrid {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 percentiles (K >= 2 groups), got {}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite percentile".into()));
        }
        if p[0] <= 0.0 {
            return Err(Error::InvalidGrid(format!("p_1 = {} must be positive", p[0])));
        }
        if p[p.len() - 1] > 1.0 {
            return Err(Error::InvalidGrid(format!("p_{{K+1}} = {} exceeds 1", p[p.len() - 1])));
        }
        if let Some(w) = p.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "percentiles must be strictly increasing ({} >= {})",
                w[0], w[1]
            )));
        }
        Ok(Self { p })
    }

    /// The tabulation grid `(0.01, 0.1, 0.5, 1, 5, 10)` percent.
    pub fn standard() -> Self {
        Self {
            p: vec![0.0001, 0.001, 0.005, 0.01, 0.05, 0.1],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.p
    }

    /// Number of groups `K` (one less than the number of percentiles).
    pub fn groups(&self) -> usize {
        self.p.len() - 1
    }

    /// Contiguous sub-grid of the points with 0-based indices `first..=last`.
    pub fn subgrid(&self, first: usize, last: usize) -> Result<Self> {
        if first >= last || last >= self.p.len() {
            return Err(Error::InvalidGrid(format!(
                "sub-grid {}..={} out of range for {} points",
                first,
                last,
                self.p.len()
            )));
        }
        Self::new(self.p[first..=last].to_vec())
    }

    /// Index of the grid point equal to `p` (up to relative rounding).
    pub fn index_of(&self, p: f64) -> Option<usize> {
        self.p.iter().position(|&v| (v - p).abs() <= 1e-12 * v.max(p))
    }
}

/// Selection of a contiguous run of grid points.
///
/// Written `1pct`, `5pct`, `10pct` (every point up to that percentile) or
/// `i..j` (1-based inclusive point indices, e.g. `2..6`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subgrid {
    TopPercent(u32),
    Range(usize, usize),
}

impl Subgrid {
    /// 0-based inclusive `(first, last)` indices into `grid`.
    pub fn bounds(&self, grid: &PercentileGrid) -> Result<(usize, usize)> {
        let (first, last) = match *self {
            Subgrid::TopPercent(pct) => {
                let last = grid
                    .index_of(pct as f64 / 100.0)
                    .ok_or_else(|| Error::InvalidGrid(format!("{pct}% is not a grid percentile")))?;
                (0, last)
            }
            Subgrid::Range(i, j) => {
                if i == 0 {
                    return Err(Error::InvalidGrid("point indices start at 1".into()));
                }
                (i - 1, j.saturating_sub(1))
            }
        };
        if last <= first || last >= grid.points().len() {
            return Err(Error::InvalidGrid(format!(
                "sub-grid {self} needs at least two points inside a {}-point grid",
                grid.points().len()
            )));
        }
        Ok((first, last))
    }

    pub fn apply(&self, grid: &PercentileGrid) -> Result<PercentileGrid> {
        let (first, last) = self.bounds(grid)?;
        grid.subgrid(first, last)
    }
}

impl fmt::Display for Subgrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subgrid::TopPercent(pct) => write!(f, "{pct}pct"),
            Subgrid::Range(i, j) => write!(f, "{i}..{j}"),
        }
    }
}

impl FromStr for Subgrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("sub-grid `{s}`: expected 1pct, 5pct, 10pct or i..j"));
        let s = s.trim();
        if let Some(pct) = s.strip_suffix("pct") {
            return pct
                .parse::<u32>()
                .ok()
                .filter(|p| *p > 0)
                .map(Subgrid::TopPercent)
                .ok_or_else(bad);
        }
        let (i, j) = s.split_once("..").ok_or_else(bad)?;
        let i: usize = i.parse().map_err(|_| bad())?;
        let j: usize = j.parse().map_err(|_| bad())?;
        if i == 0 || j <= i {
            return Err(bad());
        }
        Ok(Subgrid::Range(i, j))
    }
}

impl Serialize for Subgrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subgrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tail shape: inverse exponent `xi = 1/alpha` and minimum size `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailShape {
    xi: f64,
    c: f64,
}

impl TailShape {
    pub fn from_xi(xi: f64) -> Result<Self> {
        check_xi(xi)?;
        Ok(Self { xi, c: 1.0 })
    }

    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} must be positive")));
        }
        Self::from_xi(1.0 / alpha)
    }

    pub fn with_scale(self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!("scale c = {c} must be positive")));
        }
        Ok(Self { c, ..self })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.xi
    }

    pub fn scale(&self) -> f64 {
        self.c
    }
}

pub(crate) fn check_xi(xi: f64) -> Result<()> {
    if (XI_MIN..=XI_MAX).contains(&xi) {
        Ok(())
    } else {
        Err(Error::XiOutOfRange(xi))
    }
}

fn check_pair(p: f64, q: f64) -> Result<()> {
    if p > 0.0 && p < q && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "need 0 < p < q <= 1, got p = {p}, q = {q}"
        )))
    }
}

/// `(q^t - p^t)/t`, with the removable singularity at `t = 0` filled by
/// `log(q/p)`.
pub fn stable_power_diff(p: f64, q: f64, t: f64) -> Result<f64> {
    check_pair(p, q)?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent t = {t} is not finite")));
    }
    Ok(power_diff(p, q, t))
}

#[inline]
pub(crate) fn power_diff(p: f64, q: f64, t: f64) -> f64 {
    let l = (q / p).ln();
    if t.abs() < TAYLOR_THRESHOLD {
        // log(q/p) + t (log^2 q - log^2 p)/2 + t^2 (log^3 q - log^3 p)/6,
        // with the common factor log(q/p) pulled out.
        let (lq, lp) = (q.ln(), p.ln());
        l * (1.0 + t * (lq + lp) / 2.0 + t * t * (lq * lq + lq * lp + lp * lp) / 6.0)
    } else {
        p.powf(t) * (t * l).exp_m1() / t
    }
}

/// Mean `mu(p, q) = c (q^{1-xi} - p^{1-xi}) / (1-xi)` of the scaled sum of
/// order statistics between the top `p` and top `q` fractions.
pub fn group_mean(p: f64, q: f64, shape: &TailShape) -> Result<f64> {
    check_pair(p, q)?;
    check_xi(shape.xi)?;
    Ok(mean_unchecked(p, q, shape.xi, shape.c))
}

#[inline]
fn mean_unchecked(p: f64, q: f64, xi: f64, c: f64) -> f64 {
    c * power_diff(p, q, 1.0 - xi)
}

/// Asymptotic variance `sigma^2(p, q)` of the scaled group sum.
pub fn group_variance(p: f64, q: f64, shape: &TailShape) -> Result<f64> {
    check_pair(p, q)?;
    check_xi(shape.xi)?;
    Ok(variance_unchecked(p, q, shape.xi, shape.c))
}

fn variance_unchecked(p: f64, q: f64, xi: f64, c: f64) -> f64 {
    let a = 1.0 - xi;
    // (q^{1-2xi} - p^{1-2xi})/(1-2xi), equal to log(q/p) at xi = 1/2
    let first = power_diff(p, q, 1.0 - 2.0 * xi);
    // p^{1-xi} (q^{-xi} - p^{-xi})/xi
    let second = -p.powf(a) * power_diff(p, q, -xi);
    // (2 p^a q^a - p^{2a} - q^{2a})/(2a) = -a D^2 / 2 with D = (q^a - p^a)/a
    let d = power_diff(p, q, a);
    let third = -0.5 * a * d * d;
    2.0 * c * c * xi * xi / a * (first + second + third)
}

/// Off-diagonal entry `Sigma_jk` for groups `[pj, pj1)` and `[pk, pk1)` with
/// `pj1 <= pk`.
fn covariance_unchecked(pj: f64, pj1: f64, pk: f64, pk1: f64, xi: f64, c: f64) -> f64 {
    let lower = power_diff(pj, pj1, 1.0 - xi);
    // (p_{k+1}^{-xi} - p_k^{-xi})/xi + (p_{k+1}^{1-xi} - p_k^{1-xi})/(1-xi)
    let bracket = -power_diff(pk, pk1, -xi) + power_diff(pk, pk1, 1.0 - xi);
    -c * c * xi * xi * lower * bracket
}

fn sigma_unchecked(p: &[f64], xi: f64, c: f64) -> DMatrix<f64> {
    let k = p.len() - 1;
    let mut sigma = DMatrix::zeros(k, k);
    for j in 0..k {
        sigma[(j, j)] = variance_unchecked(p[j], p[j + 1], xi, c);
        for l in (j + 1)..k {
            let v = covariance_unchecked(p[j], p[j + 1], p[l], p[l + 1], xi, c);
            sigma[(j, l)] = v;
            sigma[(l, j)] = v;
        }
    }
    sigma
}

/// The `K x K` asymptotic covariance `Sigma` of `sqrt(n) (Ybar - mu)`.
///
/// Fails with [`Error::Degenerate`] if the matrix does not factor as
/// symmetric positive definite.
pub fn group_covariance_matrix(grid: &PercentileGrid, shape: &TailShape) -> Result<DMatrix<f64>> {
    check_xi(shape.xi)?;
    let sigma = sigma_unchecked(&grid.p, shape.xi, shape.c);
    factor_spd(sigma.clone(), "group covariance matrix")?;
    Ok(sigma)
}

/// Group means `mu_1..mu_K`.
pub fn group_means(grid: &PercentileGrid, shape: &TailShape) -> Result<DVector<f64>> {
    check_xi(shape.xi)?;
    let p = &grid.p;
    Ok(DVector::from_fn(grid.groups(), |k, _| {
        mean_unchecked(p[k], p[k + 1], shape.xi, shape.c)
    }))
}

/// `r~_k(xi) = (p_{k+1}^{1-xi} - p_k^{1-xi}) / (p_{K+1}^{1-xi} - p_K^{1-xi})`
/// for `k = 1..K-1`. Independent of `c`.
pub fn ratio_vector(grid: &PercentileGrid, xi: f64) -> Result<DVector<f64>> {
    check_xi(xi)?;
    Ok(ratio_unchecked(&grid.p, xi))
}

pub(crate) fn ratio_unchecked(p: &[f64], xi: f64) -> DVector<f64> {
    let k = p.len() - 1;
    let a = 1.0 - xi;
    let last = power_diff(p[k - 1], p[k], a);
    DVector::from_fn(k - 1, |j, _| power_diff(p[j], p[j + 1], a) / last)
}

/// Derivatives of the ratio vector in both parameterisations.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioJacobian {
    /// `d r~ / d xi`
    pub d_xi: DVector<f64>,
    /// `d r / d alpha = -xi^2 d r~ / d xi`
    pub d_alpha: DVector<f64>,
}

pub fn ratio_jacobian(grid: &PercentileGrid, xi: f64) -> Result<RatioJacobian> {
    check_xi(xi)?;
    let p = &grid.p;
    let k = grid.groups();
    let a = 1.0 - xi;
    // (p_{j+1}^a log p_{j+1} - p_j^a log p_j) / (p_{j+1}^a - p_j^a)
    let log_slope = |j: usize| {
        let (lo, hi) = (p[j], p[j + 1]);
        let (plo, phi) = (lo.powf(a), hi.powf(a));
        (phi * hi.ln() - plo * lo.ln()) / (phi - plo)
    };
    let last = log_slope(k - 1);
    let r = ratio_unchecked(p, xi);
    let d_xi = DVector::from_fn(k - 1, |j, _| r[j] * (last - log_slope(j)));
    let d_alpha = &d_xi * (-xi * xi);
    Ok(RatioJacobian { d_xi, d_alpha })
}

/// `Omega = H Sigma H^T` with `H = [I_{K-1}, -r] / mu_K`.
fn omega_from(sigma: &DMatrix<f64>, r: &DVector<f64>, mu_last: f64) -> DMatrix<f64> {
    let m = r.len();
    let last = m;
    let scale = 1.0 / (mu_last * mu_last);
    DMatrix::from_fn(m, m, |i, j| {
        (sigma[(i, j)] - r[i] * sigma[(last, j)] - r[j] * sigma[(i, last)] + r[i] * r[j] * sigma[(last, last)]) * scale
    })
}

/// Covariance `Omega(xi)` of the limit of `sqrt(n) (sbar - r)`; computed at
/// `c = 1`, which is without loss since it is scale free.
pub fn omega_matrix(grid: &PercentileGrid, xi: f64) -> Result<DMatrix<f64>> {
    check_xi(xi)?;
    let omega = omega_unchecked(&grid.p, xi);
    factor_spd(omega.clone(), "Omega")?;
    Ok(omega)
}

pub(crate) fn omega_unchecked(p: &[f64], xi: f64) -> DMatrix<f64> {
    let k = p.len() - 1;
    let sigma = sigma_unchecked(p, xi, 1.0);
    let r = ratio_unchecked(p, xi);
    let mu_last = mean_unchecked(p[k - 1], p[k], xi, 1.0);
    omega_from(&sigma, &r, mu_last)
}

/// All moment objects for one grid and tail shape.
#[derive(Debug, Clone)]
pub struct GroupMomentModel {
    pub grid: PercentileGrid,
    pub shape: TailShape,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub r: DVector<f64>,
    pub omega: DMatrix<f64>,
}

impl GroupMomentModel {
    pub fn new(grid: &PercentileGrid, shape: &TailShape) -> Result<Self> {
        let mu = group_means(grid, shape)?;
        let sigma = group_covariance_matrix(grid, shape)?;
        let k = grid.groups();
        let r = DVector::from_fn(k - 1, |j, _| mu[j] / mu[k - 1]);
        let omega = omega_from(&sigma, &r, mu[k - 1]);
        factor_spd(omega.clone(), "Omega")?;
        Ok(Self {
            grid: grid.clone(),
            shape: *shape,
            mu,
            sigma,
            r,
            omega,
        })
    }

    /// The `(K-1) x K` matrix `H = [I, -r] / mu_K`.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let m = self.r.len();
        let mu_last = self.mu[m];
        DMatrix::from_fn(m, m + 1, |i, j| {
            if j == m {
                -self.r[i] / mu_last
            } else if i == j {
                1.0 / mu_last
            } else {
                0.0
            }
        })
    }
}
