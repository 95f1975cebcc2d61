//! Monte Carlo study of the estimator on simulated samples.
//!
//! Each replication draws one sample of size `n`, tabulates its top shares
//! on the full grid and then estimates on every requested sub-grid (and the
//! two-share estimator on every requested pair), so all sub-grids of a cell
//! see the same samples. Replications run in parallel; results are
//! collected in replication order and aggregated serially, which makes the
//! output independent of the number of workers.

mod density;
mod sample;

pub use density::{kernel_density, kolmogorov_distance_normal, standardize, Bandwidth, KernelDensity, DENSITY_POINTS};
pub use sample::{replication_rng, sample, sample_into, top_shares_from_sample, top_shares_in_place, DgpSpec};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{estimate_cumde, estimate_simple, floor_count, CiMethod, EstimateOptions, TopShareTabulation};
use crate::quantiles::chi2_upper_tail;
use crate::tail_moments::{PercentileGrid, Subgrid};

/// With two groups the specification statistic has a point-mass null; values
/// above this count as a rejection.
pub const ZERO_DF_TOLERANCE: f64 = 1e-6;

/// Two-share estimator pairs `(p, q)` compared against CMD by default.
pub const DEFAULT_SIMPLE_PAIRS: [(f64, f64); 3] = [(0.001, 0.01), (0.001, 0.005), (0.005, 0.01)];

/// One `(distribution, n)` cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub dgp: DgpSpec,
    pub n: usize,
    pub grid: PercentileGrid,
    pub subgrids: Vec<Subgrid>,
    pub replications: usize,
    pub seed: u64,
    pub ci_method: CiMethod,
    pub level: f64,
    /// `(p, q)` fractions for the two-share estimator; both must be grid points.
    pub simple_pairs: Vec<(f64, f64)>,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl SimConfig {
    /// Standard grid, 1% sub-grid, 1000 replications, LR intervals at 95%.
    pub fn new(dgp: DgpSpec, n: usize) -> Self {
        Self {
            dgp,
            n,
            grid: PercentileGrid::standard(),
            subgrids: vec![Subgrid::TopPercent(1)],
            replications: 1000,
            seed: 0,
            ci_method: CiMethod::Lr,
            level: 0.95,
            simple_pairs: Vec::new(),
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Err((field, msg)) = self.dgp.validate() {
            return Err(Error::InvalidArgument(format!("{} {field} {msg}", self.dgp.tag())));
        }
        if self.replications < 1 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        let p1 = self.grid.points()[0];
        if floor_count(self.n as u64, p1) < 1 {
            return Err(Error::InvalidArgument(format!(
                "n = {} leaves the top group empty (need n >= {})",
                self.n,
                (1.0 / p1).ceil()
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "level {} must lie in (0, 1)",
                self.level
            )));
        }
        if self.subgrids.is_empty() && self.simple_pairs.is_empty() {
            return Err(Error::InvalidArgument(
                "nothing to estimate: no sub-grids or pairs".into(),
            ));
        }
        for sg in &self.subgrids {
            sg.bounds(&self.grid)?;
        }
        for &(p, q) in &self.simple_pairs {
            if !(p < q) || self.grid.index_of(p).is_none() || self.grid.index_of(q).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "simple pair ({p}, {q}) must satisfy p < q with both on the grid"
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        Ok(())
    }
}

/// Summary of the CMD estimator on one sub-grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMetrics {
    pub dgp: String,
    pub n: usize,
    pub subgrid: Subgrid,
    pub true_alpha: f64,
    /// Successful replications.
    pub replications: usize,
    pub failures: usize,
    /// `xi_hat` near the clamp; such replications are kept.
    pub boundary_hits: usize,
    pub bias: f64,
    pub rmse: f64,
    pub variance: f64,
    pub coverage: f64,
    pub mean_length: f64,
    /// Share of replications where the specification test rejects at
    /// significance `1 - level`.
    pub rejection: f64,
}

/// Summary of the two-share estimator at one `(p, q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleMetrics {
    pub dgp: String,
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub true_alpha: f64,
    pub replications: usize,
    pub failures: usize,
    pub bias: f64,
    pub rmse: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStudyResult {
    pub config: SimConfig,
    /// One entry per configured sub-grid, in order.
    pub cells: Vec<CellMetrics>,
    /// Successful `alpha_hat` per sub-grid in replication order.
    pub draws: Vec<Vec<f64>>,
    /// One entry per configured pair, in order.
    pub simple: Vec<SimpleMetrics>,
    pub simple_draws: Vec<Vec<f64>>,
}

impl SimStudyResult {
    pub fn cell(&self, subgrid: Subgrid) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| c.subgrid == subgrid)
    }

    pub fn draws_for(&self, subgrid: Subgrid) -> Option<&[f64]> {
        let i = self.cells.iter().position(|c| c.subgrid == subgrid)?;
        Some(&self.draws[i])
    }

    pub fn simple_pair(&self, p: f64, q: f64) -> Option<&SimpleMetrics> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.max(b);
        self.simple.iter().find(|m| close(m.p, p) && close(m.q, q))
    }
}

/// CMD on the first four grid points next to the two-share estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleComparison {
    pub cmd: CellMetrics,
    pub simple: Vec<SimpleMetrics>,
}

#[derive(Debug, Clone, Copy)]
struct Fit {
    alpha: f64,
    covered: bool,
    length: f64,
    rejected: bool,
    boundary: bool,
}

struct Replication {
    fits: Vec<std::result::Result<Fit, String>>,
    simple: Vec<std::result::Result<f64, String>>,
}

fn fit_subgrid(tab: &TopShareTabulation, bounds: (usize, usize), cfg: &SimConfig) -> Result<Fit> {
    let sub = tab.subgrid(bounds.0, bounds.1)?;
    let est = estimate_cumde(&sub, &EstimateOptions { level: cfg.level })?;
    let ci = est
        .ci(cfg.ci_method)
        .ok_or_else(|| Error::InvalidArgument("interval unavailable".into()))?;
    let pvalue = match est.spec_pvalue {
        Some(pv) => pv,
        None => chi2_upper_tail(cfg.n as f64 * est.objective_at_min, 0, ZERO_DF_TOLERANCE),
    };
    let alpha = cfg.dgp.tail_index();
    Ok(Fit {
        alpha: est.alpha_hat,
        covered: ci.contains(alpha),
        length: ci.length(),
        rejected: pvalue < 1.0 - cfg.level,
        boundary: est.at_boundary,
    })
}

fn replicate(cfg: &SimConfig, bounds: &[(usize, usize)], buf: &mut [f64], rep: usize) -> Replication {
    let mut rng = replication_rng(cfg.seed, &cfg.dgp, cfg.n, rep);
    let tab = sample_into(&cfg.dgp, &mut rng, buf).and_then(|_| top_shares_in_place(buf, &cfg.grid));
    let tab = match tab {
        Ok(t) => t,
        Err(e) => {
            let msg = format!("replication {rep}: {e}");
            return Replication {
                fits: vec![Err(msg.clone()); bounds.len()],
                simple: vec![Err(msg); cfg.simple_pairs.len()],
            };
        }
    };
    let fits = bounds
        .iter()
        .map(|&b| fit_subgrid(&tab, b, cfg).map_err(|e| format!("replication {rep}: {e}")))
        .collect();
    let simple = cfg
        .simple_pairs
        .iter()
        .map(|&(p, q)| {
            let sp = tab.share_at(p).expect("validated grid point");
            let sq = tab.share_at(q).expect("validated grid point");
            estimate_simple(sp, sq, p, q).map_err(|e| format!("replication {rep}: {e}"))
        })
        .collect();
    Replication { fits, simple }
}

/// `(bias, rmse, variance)` of `estimates` around `truth`.
fn error_moments(estimates: &[f64], truth: f64) -> (f64, f64, f64) {
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let mse = estimates.iter().map(|a| (a - truth).powi(2)).sum::<f64>() / m;
    let variance = estimates.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / m;
    ((mean - truth), mse.sqrt(), variance)
}

fn check_failures(failures: usize, total: usize, first: Option<&String>) -> Result<()> {
    // abort when more than 1% fail, or when nothing succeeded
    if failures * 100 > total || failures == total {
        return Err(Error::TooManyFailures {
            failed: failures,
            total,
            first: first.cloned().unwrap_or_default(),
        });
    }
    Ok(())
}

fn run_replications(cfg: &SimConfig, bounds: &[(usize, usize)]) -> Result<Vec<Replication>> {
    let job = || {
        (0..cfg.replications)
            .into_par_iter()
            .map_init(|| vec![0.0; cfg.n], |buf, rep| replicate(cfg, bounds, buf, rep))
            .collect::<Vec<_>>()
    };
    match cfg.workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Run every replication of the cell and summarise each sub-grid and pair.
pub fn run_study(cfg: &SimConfig) -> Result<SimStudyResult> {
    cfg.validate()?;
    let bounds: Vec<(usize, usize)> = cfg
        .subgrids
        .iter()
        .map(|s| s.bounds(&cfg.grid))
        .collect::<Result<_>>()?;
    let reps = run_replications(cfg, &bounds)?;
    let truth = cfg.dgp.tail_index();
    let total = cfg.replications;

    let mut cells = Vec::with_capacity(bounds.len());
    let mut draws = Vec::with_capacity(bounds.len());
    for (j, &subgrid) in cfg.subgrids.iter().enumerate() {
        let mut fits = Vec::with_capacity(total);
        let mut first_err = None;
        for r in &reps {
            match &r.fits[j] {
                Ok(f) => fits.push(*f),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let failures = total - fits.len();
        check_failures(failures, total, first_err)?;
        let alphas: Vec<f64> = fits.iter().map(|f| f.alpha).collect();
        let (bias, rmse, variance) = error_moments(&alphas, truth);
        let m = fits.len() as f64;
        let count = |pred: fn(&Fit) -> bool| fits.iter().filter(|f| pred(f)).count();
        cells.push(CellMetrics {
            dgp: cfg.dgp.tag().to_string(),
            n: cfg.n,
            subgrid,
            true_alpha: truth,
            replications: fits.len(),
            failures,
            boundary_hits: count(|f| f.boundary),
            bias,
            rmse,
            variance,
            coverage: count(|f| f.covered) as f64 / m,
            mean_length: fits.iter().map(|f| f.length).sum::<f64>() / m,
            rejection: count(|f| f.rejected) as f64 / m,
        });
        draws.push(alphas);
    }

    let mut simple = Vec::with_capacity(cfg.simple_pairs.len());
    let mut simple_draws = Vec::with_capacity(cfg.simple_pairs.len());
    for (j, &(p, q)) in cfg.simple_pairs.iter().enumerate() {
        let mut alphas = Vec::with_capacity(total);
        let mut first_err = None;
        for r in &reps {
            match &r.simple[j] {
                Ok(a) => alphas.push(*a),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let failures = total - alphas.len();
        check_failures(failures, total, first_err)?;
        let (bias, rmse, variance) = error_moments(&alphas, truth);
        simple.push(SimpleMetrics {
            dgp: cfg.dgp.tag().to_string(),
            n: cfg.n,
            p,
            q,
            true_alpha: truth,
            replications: alphas.len(),
            failures,
            bias,
            rmse,
            variance,
        });
        simple_draws.push(alphas);
    }

    Ok(SimStudyResult {
        config: cfg.clone(),
        cells,
        draws,
        simple,
        simple_draws,
    })
}

/// CMD on grid points 1..4 against the two-share estimator on the configured
/// pairs (the default pairs if none are configured).
pub fn run_simple_comparison(cfg: &SimConfig) -> Result<SimpleComparison> {
    let mut cfg = cfg.clone();
    cfg.subgrids = vec![Subgrid::Range(1, 4)];
    if cfg.simple_pairs.is_empty() {
        cfg.simple_pairs = DEFAULT_SIMPLE_PAIRS.to_vec();
    }
    let mut res = run_study(&cfg)?;
    Ok(SimpleComparison {
        cmd: res.cells.remove(0),
        simple: res.simple,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dgp: DgpSpec) -> SimConfig {
        SimConfig {
            replications: 40,
            seed: 42,
            subgrids: vec![Subgrid::TopPercent(1), Subgrid::TopPercent(10), Subgrid::Range(4, 6)],
            simple_pairs: DEFAULT_SIMPLE_PAIRS.to_vec(),
            ..SimConfig::new(dgp, 20_000)
        }
    }

    #[test]
    fn single_replication_identities() {
        let cfg = SimConfig {
            replications: 1,
            ..SimConfig::new(DgpSpec::pareto(), 10_000)
        };
        let res = run_study(&cfg).unwrap();
        let c = &res.cells[0];
        assert_eq!(c.bias, res.draws[0][0] - 2.0);
        assert_eq!(c.rmse, c.bias.abs());
        assert_eq!(c.variance, 0.0);
        assert!(c.coverage == 0.0 || c.coverage == 1.0);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let mut cfg = small(DgpSpec::dpln());
        cfg.workers = Some(1);
        let serial = run_study(&cfg).unwrap();
        cfg.workers = Some(3);
        let parallel = run_study(&cfg).unwrap();
        assert_eq!(serial.cells, parallel.cells);
        assert_eq!(serial.draws, parallel.draws);
        assert_eq!(serial.simple, parallel.simple);
    }

    #[test]
    fn metrics_are_consistent() {
        let res = run_study(&small(DgpSpec::abs_t())).unwrap();
        for c in &res.cells {
            assert!(c.rmse >= c.bias.abs());
            let lhs = c.rmse * c.rmse;
            let rhs = c.bias * c.bias + c.variance;
            assert!((lhs - rhs).abs() <= 1e-12 * lhs, "{c:?}");
            assert!((0.0..=1.0).contains(&c.coverage) && (0.0..=1.0).contains(&c.rejection));
            assert_eq!(c.replications + c.failures, 40);
        }
        assert_eq!(res.simple.len(), 3);
    }

    #[test]
    fn sub_grids_share_samples() {
        let a = run_study(&small(DgpSpec::pareto())).unwrap();
        let cfg = SimConfig {
            subgrids: vec![Subgrid::TopPercent(1)],
            simple_pairs: vec![],
            ..small(DgpSpec::pareto())
        };
        let b = run_study(&cfg).unwrap();
        assert_eq!(a.draws[0], b.draws[0]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SimConfig::new(DgpSpec::pareto(), 10_000);
        let bad = [
            SimConfig {
                replications: 0,
                ..base.clone()
            },
            SimConfig {
                n: 9_999,
                ..base.clone()
            },
            SimConfig {
                level: 1.0,
                ..base.clone()
            },
            SimConfig {
                subgrids: vec![Subgrid::Range(5, 8)],
                ..base.clone()
            },
            SimConfig {
                simple_pairs: vec![(0.01, 0.001)],
                ..base.clone()
            },
            SimConfig {
                subgrids: vec![],
                ..base.clone()
            },
            SimConfig {
                dgp: DgpSpec::AbsT { nu: -1.0 },
                ..base.clone()
            },
        ];
        for cfg in bad {
            assert!(run_study(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn comparison_uses_first_four_points() {
        let cfg = SimConfig {
            replications: 5,
            ..SimConfig::new(DgpSpec::pareto(), 10_000)
        };
        let cmp = run_simple_comparison(&cfg).unwrap();
        assert_eq!(cmp.cmd.subgrid, Subgrid::Range(1, 4));
        assert_eq!(cmp.simple.len(), 3);
    }
}
