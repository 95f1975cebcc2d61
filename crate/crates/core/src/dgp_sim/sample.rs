//! Data-generating processes and top-share extraction from raw samples.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{floor_count, TopShareTabulation};
use crate::tail_moments::PercentileGrid;

/// A positive heavy-tailed distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpSpec {
    /// `P(Y > y) = (y / scale)^(-alpha)` for `y >= scale`.
    Pareto {
        #[serde(default = "default_two")]
        alpha: f64,
        #[serde(default = "default_one")]
        scale: f64,
    },
    /// Absolute value of a Student t variable with `nu` degrees of freedom.
    AbsT {
        #[serde(default = "default_two")]
        nu: f64,
    },
    /// Double Pareto-lognormal: `exp(mu + sigma X1 + X2/alpha - X3/beta)`
    /// with `X1 ~ N(0,1)` and `X2, X3 ~ Exp(1)`.
    Dpln {
        #[serde(default)]
        mu: f64,
        #[serde(default = "default_half")]
        sigma: f64,
        #[serde(default = "default_two")]
        alpha: f64,
        #[serde(default = "default_one")]
        beta: f64,
    },
}

fn default_one() -> f64 {
    1.0
}
fn default_two() -> f64 {
    2.0
}
fn default_half() -> f64 {
    0.5
}

impl DgpSpec {
    pub fn pareto() -> Self {
        DgpSpec::Pareto { alpha: 2.0, scale: 1.0 }
    }

    pub fn abs_t() -> Self {
        DgpSpec::AbsT { nu: 2.0 }
    }

    pub fn dpln() -> Self {
        DgpSpec::Dpln {
            mu: 0.0,
            sigma: 0.5,
            alpha: 2.0,
            beta: 1.0,
        }
    }

    /// Short name used in output files and seed derivation.
    pub fn tag(&self) -> &'static str {
        match self {
            DgpSpec::Pareto { .. } => "pareto",
            DgpSpec::AbsT { .. } => "abs_t",
            DgpSpec::Dpln { .. } => "dpln",
        }
    }

    /// Exponent of the upper tail.
    pub fn tail_index(&self) -> f64 {
        match *self {
            DgpSpec::Pareto { alpha, .. } | DgpSpec::Dpln { alpha, .. } => alpha,
            DgpSpec::AbsT { nu } => nu,
        }
    }

    /// Check parameter ranges; the error names the offending field.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        fn need(ok: bool, field: &'static str, msg: &str) -> std::result::Result<(), (&'static str, String)> {
            if ok {
                Ok(())
            } else {
                Err((field, msg.to_string()))
            }
        }
        match *self {
            DgpSpec::Pareto { alpha, scale } => {
                need(alpha.is_finite() && alpha > 1.0, "alpha", "must be a finite number > 1")?;
                need(
                    scale.is_finite() && scale > 0.0,
                    "scale",
                    "must be a finite positive number",
                )
            }
            DgpSpec::AbsT { nu } => need(nu.is_finite() && nu > 0.0, "nu", "must be a finite positive number"),
            DgpSpec::Dpln { mu, sigma, alpha, beta } => {
                need(mu.is_finite(), "mu", "must be finite")?;
                need(
                    sigma.is_finite() && sigma > 0.0,
                    "sigma",
                    "must be a finite positive number",
                )?;
                need(alpha.is_finite() && alpha > 1.0, "alpha", "must be a finite number > 1")?;
                need(
                    beta.is_finite() && beta > 0.0,
                    "beta",
                    "must be a finite positive number",
                )
            }
        }
    }

    fn checked(&self) -> Result<()> {
        self.validate()
            .map_err(|(field, msg)| Error::InvalidArgument(format!("{} {field} {msg}", self.tag())))
    }

    fn kind_code(&self) -> u64 {
        match self {
            DgpSpec::Pareto { .. } => 1,
            DgpSpec::AbsT { .. } => 2,
            DgpSpec::Dpln { .. } => 3,
        }
    }
}

impl fmt::Display for DgpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DgpSpec::Pareto { alpha, scale } => write!(f, "Pareto(alpha={alpha}, scale={scale})"),
            DgpSpec::AbsT { nu } => write!(f, "|t|(nu={nu})"),
            DgpSpec::Dpln { mu, sigma, alpha, beta } => {
                write!(f, "dPlN(mu={mu}, sigma={sigma}, alpha={alpha}, beta={beta})")
            }
        }
    }
}

/// Generator for replication `rep` of a cell: the ChaCha key is the
/// concatenation of the base seed, the distribution kind, `n` and `rep`, so
/// streams are fixed by the cell and never by scheduling.
pub fn replication_rng(base_seed: u64, dgp: &DgpSpec, n: usize, rep: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key
        .chunks_exact_mut(8)
        .zip([base_seed, dgp.kind_code(), n as u64, rep as u64])
    {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Fill `out` with i.i.d. draws.
pub fn sample_into<R: Rng + ?Sized>(dgp: &DgpSpec, rng: &mut R, out: &mut [f64]) -> Result<()> {
    dgp.checked()?;
    match *dgp {
        DgpSpec::Pareto { alpha, scale } => {
            let inv = -1.0 / alpha;
            for y in out.iter_mut() {
                // 1 - u lies in (0, 1]
                let u: f64 = rng.random();
                *y = scale * (1.0 - u).powf(inv);
            }
        }
        DgpSpec::AbsT { nu } => {
            let chi2 = ChiSquared::new(nu).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for y in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                let w = chi2.sample(rng);
                *y = (z / (w / nu).sqrt()).abs();
            }
        }
        DgpSpec::Dpln { mu, sigma, alpha, beta } => {
            for y in out.iter_mut() {
                let x1: f64 = rng.sample(StandardNormal);
                let x2: f64 = rng.sample(Exp1);
                let x3: f64 = rng.sample(Exp1);
                *y = (mu + sigma * x1 + x2 / alpha - x3 / beta).exp();
            }
        }
    }
    Ok(())
}

/// `n` i.i.d. draws.
pub fn sample<R: Rng + ?Sized>(dgp: &DgpSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    sample_into(dgp, rng, &mut out)?;
    Ok(out)
}

/// Cumulative top shares `S_k = (sum of the floor(n p_k) largest) / total`.
///
/// Only the `floor(n p_{K+1})` largest values are sorted; the slice is
/// reordered in place.
pub fn top_shares_in_place(sample: &mut [f64], grid: &PercentileGrid) -> Result<TopShareTabulation> {
    let n = sample.len();
    let p = grid.points();
    let counts: Vec<usize> = p.iter().map(|&pk| floor_count(n as u64, pk) as usize).collect();
    if counts[0] < 1 {
        return Err(Error::InvalidArgument(format!(
            "n * p_1 = {} * {} < 1: the top group is empty",
            n, p[0]
        )));
    }
    if sample.iter().any(|y| !(y.is_finite() && *y > 0.0)) {
        return Err(Error::InvalidArgument(
            "sample values must be finite and positive".into(),
        ));
    }
    let total: f64 = sample.iter().sum();
    let m = counts[counts.len() - 1];
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if m < n {
        sample.select_nth_unstable_by(m - 1, desc);
    }
    let head = &mut sample[..m];
    head.sort_unstable_by(desc);

    let mut shares = Vec::with_capacity(counts.len());
    let mut acc = 0.0;
    let mut taken = 0;
    for &c in &counts {
        acc += head[taken..c].iter().sum::<f64>();
        taken = c;
        shares.push(if c == n { 1.0 } else { acc / total });
    }
    TopShareTabulation::new(grid.clone(), shares).map(|t| t.with_sample_size(n as u64))
}

/// As [`top_shares_in_place`] without modifying the input.
pub fn top_shares_from_sample(sample: &[f64], grid: &PercentileGrid) -> Result<TopShareTabulation> {
    top_shares_in_place(&mut sample.to_vec(), grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// `|est - want| <= k` binomial standard errors.
    fn within_se(hits: usize, n: usize, want: f64, k: f64) -> bool {
        let se = (want * (1.0 - want) / n as f64).sqrt();
        (hits as f64 / n as f64 - want).abs() <= k * se
    }

    #[test]
    fn pareto_survival_at_ten() {
        let n = 1_000_000;
        let y = sample(&DgpSpec::pareto(), n, &mut rng(1)).unwrap();
        assert!(y.iter().all(|v| *v >= 1.0));
        let hits = y.iter().filter(|v| **v > 10.0).count();
        assert!(within_se(hits, n, 0.01, 3.0), "{hits}");
    }

    #[test]
    fn abs_t_two_exceeds_one() {
        // t_2 cdf is 1/2 + t / (2 sqrt(2 + t^2)), so P(|T| > 1) = 1 - 1/sqrt(3)
        let want = 1.0 - 1.0 / 3f64.sqrt();
        assert!((want - 0.4226).abs() < 1e-4);
        let n = 200_000;
        let y = sample(&DgpSpec::abs_t(), n, &mut rng(2)).unwrap();
        let hits = y.iter().filter(|v| **v > 1.0).count();
        assert!(within_se(hits, n, want, 3.0), "{hits}");
    }

    #[test]
    fn dpln_log_mean() {
        // E log Y = mu + 1/alpha - 1/beta, Var log Y = sigma^2 + 1/alpha^2 + 1/beta^2
        let n = 200_000;
        let y = sample(&DgpSpec::dpln(), n, &mut rng(3)).unwrap();
        let mean = y.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
        let se = (1.5f64 / n as f64).sqrt();
        assert!((mean + 0.5).abs() <= 3.0 * se, "{mean}");
    }

    #[test]
    fn hand_countable_shares() {
        let g = PercentileGrid::new(vec![0.25, 0.5, 1.0]).unwrap();
        let t = top_shares_from_sample(&[1.0, 3.0, 4.0, 2.0], &g).unwrap();
        assert_eq!(t.shares(), &[0.4, 0.7, 1.0]);
        assert_eq!(t.sample_size(), Some(4));
    }

    #[test]
    fn floor_boundary_takes_one_value() {
        let g = PercentileGrid::new(vec![0.0015, 0.01, 0.1]).unwrap();
        let mut y: Vec<f64> = (1..=1000).map(f64::from).collect();
        let total: f64 = y.iter().sum();
        let t = top_shares_in_place(&mut y, &g).unwrap();
        assert_eq!(t.shares()[0], 1000.0 / total);
        let g = PercentileGrid::new(vec![0.0005, 0.01, 0.1]).unwrap();
        assert!(top_shares_from_sample(&y, &g).is_err());
    }

    #[test]
    fn pareto_top_one_percent_share() {
        let g = PercentileGrid::standard();
        let y = sample(&DgpSpec::pareto(), 1_000_000, &mut rng(4)).unwrap();
        let t = top_shares_from_sample(&y, &g).unwrap();
        let s = t.share_at(0.01).unwrap();
        // alpha = 2 has infinite variance, so allow a generous band
        assert!((s - 0.1).abs() < 0.02, "{s}");
    }

    #[test]
    fn replication_streams_differ() {
        let d = DgpSpec::pareto();
        let a: f64 = replication_rng(7, &d, 100, 0).random();
        let b: f64 = replication_rng(7, &d, 100, 1).random();
        let c: f64 = replication_rng(7, &DgpSpec::dpln(), 100, 0).random();
        let a2: f64 = replication_rng(7, &d, 100, 0).random();
        assert_eq!(a, a2);
        assert!(a != b && a != c);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert_eq!(DgpSpec::AbsT { nu: 0.0 }.validate().unwrap_err().0, "nu");
        assert_eq!(
            DgpSpec::Dpln {
                mu: 0.0,
                sigma: -1.0,
                alpha: 2.0,
                beta: 1.0
            }
            .validate()
            .unwrap_err()
            .0,
            "sigma"
        );
        assert!(sample(&DgpSpec::Pareto { alpha: 0.9, scale: 1.0 }, 3, &mut rng(0)).is_err());
    }
}
