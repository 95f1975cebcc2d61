//! TOML description of a simulation study and the CSV files it produces.
//!
//! ```toml
//! replications = 1000
//! seed = 2024
//! level = 0.95
//! ci_method = "lr"
//! n = [10000, 100000, 1000000]
//! subgrid = ["10pct", "5pct", "1pct"]
//! simple = [[0.1, 1], [0.1, 0.5], [0.5, 1]]   # optional, percent
//! grid = [0.01, 0.1, 0.5, 1, 5, 10]            # optional, percent
//!
//! [[dgp]]
//! kind = "pareto"
//! alpha = 2
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::dgp_sim::{kernel_density, run_study, Bandwidth, DgpSpec, SimConfig, SimStudyResult};
use crate::error::{Error, Result};
use crate::estimator::CiMethod;
use crate::tail_moments::{PercentileGrid, Subgrid};

use super::tabulation::percent_to_fraction;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dgp: Vec<toml::Table>,
    n: Vec<i64>,
    subgrid: Vec<String>,
    replications: i64,
    seed: u64,
    #[serde(default = "default_level")]
    level: f64,
    #[serde(default)]
    ci_method: Option<String>,
    #[serde(default)]
    grid: Option<Vec<f64>>,
    #[serde(default)]
    simple: Vec<Vec<f64>>,
    #[serde(default)]
    workers: Option<i64>,
    #[serde(default = "default_true")]
    density: bool,
}

fn default_level() -> f64 {
    0.95
}
fn default_true() -> bool {
    true
}

/// A validated study: every `(dgp, n)` pair becomes one [`SimConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub dgps: Vec<DgpSpec>,
    pub sizes: Vec<usize>,
    pub subgrids: Vec<Subgrid>,
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
    pub ci_method: CiMethod,
    pub grid: PercentileGrid,
    /// `(p, q)` fractions.
    pub simple: Vec<(f64, f64)>,
    pub workers: Option<usize>,
    /// Write per-cell kernel-density CSVs.
    pub density: bool,
}

/// Percent to fraction through the shortest decimal text, so `0.01`
/// becomes exactly the double nearest 1e-4.
fn pct_fraction(p: f64) -> f64 {
    percent_to_fraction(&p.to_string()).unwrap_or(f64::NAN)
}

fn field(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| field("<document>", e.message().to_string()))?;

        if raw.dgp.is_empty() {
            return Err(field("dgp", "at least one distribution is required"));
        }
        let mut dgps = Vec::with_capacity(raw.dgp.len());
        for (i, table) in raw.dgp.into_iter().enumerate() {
            let spec: DgpSpec = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| field(format!("dgp[{i}]"), e.message().to_string()))?;
            spec.validate()
                .map_err(|(name, msg)| field(format!("dgp[{i}].{name}"), msg))?;
            dgps.push(spec);
        }

        let grid = match raw.grid {
            Some(pct) => PercentileGrid::new(pct.iter().map(|p| pct_fraction(*p)).collect())
                .map_err(|e| field("grid", e.to_string()))?,
            None => PercentileGrid::standard(),
        };

        if raw.n.is_empty() {
            return Err(field("n", "at least one sample size is required"));
        }
        let p1 = grid.points()[0];
        let min_n = (1.0 / p1).ceil() as i64;
        let mut sizes = Vec::with_capacity(raw.n.len());
        for (i, &n) in raw.n.iter().enumerate() {
            if n < min_n {
                return Err(field(
                    format!("n[{i}]"),
                    format!("{n} is below {min_n}, leaving the top group empty"),
                ));
            }
            sizes.push(n as usize);
        }

        let mut subgrids = Vec::with_capacity(raw.subgrid.len());
        for (i, s) in raw.subgrid.iter().enumerate() {
            let sg: Subgrid = s
                .parse()
                .map_err(|e: Error| field(format!("subgrid[{i}]"), e.to_string()))?;
            sg.bounds(&grid)
                .map_err(|e| field(format!("subgrid[{i}]"), e.to_string()))?;
            subgrids.push(sg);
        }

        let mut simple = Vec::with_capacity(raw.simple.len());
        for (i, pair) in raw.simple.iter().enumerate() {
            let path = format!("simple[{i}]");
            let [p, q] = pair[..] else {
                return Err(field(path, "expected a [p, q] pair in percent"));
            };
            let (p, q) = (pct_fraction(p), pct_fraction(q));
            let on_grid = |v: f64| grid.points().iter().find(|g| (*g - v).abs() <= 1e-12 * v).copied();
            match (on_grid(p), on_grid(q)) {
                (Some(p), Some(q)) if p < q => simple.push((p, q)),
                _ => return Err(field(path, "need p < q, both grid percentiles")),
            }
        }
        if subgrids.is_empty() && simple.is_empty() {
            return Err(field("subgrid", "at least one sub-grid (or simple pair) is required"));
        }

        if raw.replications < 1 {
            return Err(field("replications", "must be at least 1"));
        }
        if !(raw.level > 0.0 && raw.level < 1.0) {
            return Err(field("level", "must lie in (0, 1)"));
        }
        let ci_method = match raw.ci_method {
            Some(m) => m.parse().map_err(|e: Error| field("ci_method", e.to_string()))?,
            None => CiMethod::Lr,
        };
        let workers = match raw.workers {
            Some(w) if w < 1 => return Err(field("workers", "must be at least 1")),
            Some(w) => Some(w as usize),
            None => None,
        };

        Ok(Self {
            dgps,
            sizes,
            subgrids,
            replications: raw.replications as usize,
            seed: raw.seed,
            level: raw.level,
            ci_method,
            grid,
            simple,
            workers,
            density: raw.density,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Cells in `dgp`-major order.
    pub fn cells(&self) -> Vec<SimConfig> {
        let mut out = Vec::with_capacity(self.dgps.len() * self.sizes.len());
        for dgp in &self.dgps {
            for &n in &self.sizes {
                out.push(SimConfig {
                    dgp: *dgp,
                    n,
                    grid: self.grid.clone(),
                    subgrids: self.subgrids.clone(),
                    replications: self.replications,
                    seed: self.seed,
                    ci_method: self.ci_method,
                    level: self.level,
                    simple_pairs: self.simple.clone(),
                    workers: self.workers,
                });
            }
        }
        out
    }
}

/// Run every cell of the study.
pub fn run_study_config(cfg: &StudyConfig) -> Result<Vec<SimStudyResult>> {
    cfg.cells().iter().map(run_study).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Distinct labels for the distributions of a study: the tag, suffixed with
/// the position when a tag occurs more than once.
fn dgp_labels(results: &[SimStudyResult]) -> Vec<String> {
    let mut specs: Vec<DgpSpec> = Vec::new();
    for r in results {
        if !specs.contains(&r.config.dgp) {
            specs.push(r.config.dgp);
        }
    }
    let dup: BTreeSet<&str> = specs
        .iter()
        .enumerate()
        .filter(|(i, s)| specs[..*i].iter().any(|o| o.tag() == s.tag()))
        .map(|(_, s)| s.tag())
        .collect();
    results
        .iter()
        .map(|r| {
            let i = specs.iter().position(|s| *s == r.config.dgp).expect("collected above");
            if dup.contains(r.config.dgp.tag()) {
                format!("{}{}", r.config.dgp.tag(), i + 1)
            } else {
                r.config.dgp.tag().to_string()
            }
        })
        .collect()
}

/// Long-format metrics, one row per `(dgp, n, subgrid)`.
pub fn write_study_csv<W: Write>(results: &[SimStudyResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dgp",
        "n",
        "subgrid",
        "true_alpha",
        "replications",
        "failures",
        "boundary_hits",
        "bias",
        "rmse",
        "variance",
        "coverage",
        "mean_length",
        "rejection",
    ])
    .map_err(csv_err)?;
    for (res, label) in results.iter().zip(dgp_labels(results)) {
        for c in &res.cells {
            w.write_record([
                label.clone(),
                c.n.to_string(),
                c.subgrid.to_string(),
                c.true_alpha.to_string(),
                c.replications.to_string(),
                c.failures.to_string(),
                c.boundary_hits.to_string(),
                c.bias.to_string(),
                c.rmse.to_string(),
                c.variance.to_string(),
                c.coverage.to_string(),
                c.mean_length.to_string(),
                c.rejection.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wide layout: one block per metric with a row per `n` and a column per
/// `dgp/subgrid`, values rounded to two decimals.
pub fn write_table_csv<W: Write>(results: &[SimStudyResult], writer: W) -> Result<()> {
    let labels = dgp_labels(results);
    let mut columns: Vec<(String, Subgrid)> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for (res, label) in results.iter().zip(&labels) {
        for c in &res.cells {
            if !columns.iter().any(|(l, s)| l == label && *s == c.subgrid) {
                columns.push((label.clone(), c.subgrid));
            }
        }
        if !sizes.contains(&res.config.n) {
            sizes.push(res.config.n);
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["metric".to_string(), "n".to_string()];
    header.extend(columns.iter().map(|(l, s)| format!("{l}/{s}")));
    w.write_record(&header).map_err(csv_err)?;
    type Metric = fn(&crate::dgp_sim::CellMetrics) -> f64;
    let metrics: [(&str, Metric); 5] = [
        ("bias", |c| c.bias),
        ("rmse", |c| c.rmse),
        ("coverage", |c| c.coverage),
        ("length", |c| c.mean_length),
        ("rejection", |c| c.rejection),
    ];
    for (name, get) in metrics {
        for &n in &sizes {
            let mut row = vec![name.to_string(), n.to_string()];
            for (label, sg) in &columns {
                let v = results
                    .iter()
                    .zip(&labels)
                    .filter(|(r, l)| *l == label && r.config.n == n)
                    .find_map(|(r, _)| r.cell(*sg));
                row.push(v.map_or_else(String::new, |c| format!("{:.2}", get(c))));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-share estimator metrics, one row per `(dgp, n, pair)`; pairs in percent.
pub fn write_simple_csv<W: Write>(results: &[SimStudyResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dgp",
        "n",
        "p",
        "q",
        "replications",
        "failures",
        "bias",
        "rmse",
        "variance",
    ])
    .map_err(csv_err)?;
    for (res, label) in results.iter().zip(dgp_labels(results)) {
        for m in &res.simple {
            w.write_record([
                label.clone(),
                m.n.to_string(),
                super::tabulation::fraction_to_percent(m.p),
                super::tabulation::fraction_to_percent(m.q),
                m.replications.to_string(),
                m.failures.to_string(),
                m.bias.to_string(),
                m.rmse.to_string(),
                m.variance.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Run the study in `config_path` and write `study.csv`, `table.csv`,
/// `simple.csv` (when pairs are configured) and `density/<dgp>_<n>_<subgrid>.csv`
/// into `out_dir`. `workers` overrides the config value.
pub fn cmd_simulate(config_path: &Path, out_dir: &Path, workers: Option<usize>) -> Result<Vec<SimStudyResult>> {
    let mut cfg = StudyConfig::from_path(config_path)?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        cfg.workers = Some(w);
    }
    let results = run_study_config(&cfg)?;
    write_outputs(&results, &cfg, out_dir)?;
    Ok(results)
}

pub fn write_outputs(results: &[SimStudyResult], cfg: &StudyConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_study_csv(results, fs::File::create(out_dir.join("study.csv"))?)?;
    write_table_csv(results, fs::File::create(out_dir.join("table.csv"))?)?;
    if !cfg.simple.is_empty() {
        write_simple_csv(results, fs::File::create(out_dir.join("simple.csv"))?)?;
    }
    if cfg.density {
        let dir = out_dir.join("density");
        fs::create_dir_all(&dir)?;
        for (res, label) in results.iter().zip(dgp_labels(results)) {
            for (cell, draws) in res.cells.iter().zip(&res.draws) {
                // a single draw, or identical draws, has no density
                let Ok(kd) = kernel_density(draws, cell.true_alpha, Bandwidth::Silverman) else {
                    continue;
                };
                let name = format!("{label}_{}_{}.csv", cell.n, cell.subgrid.to_string().replace("..", "-"));
                let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_err)?;
                w.write_record(["x", "density"]).map_err(csv_err)?;
                for (x, d) in kd.x.iter().zip(&kd.density) {
                    w.write_record([x.to_string(), d.to_string()]).map_err(csv_err)?;
                }
                w.flush()?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
replications = 10
seed = 1
n = [10000]
subgrid = ["1pct", "4..6"]

[[dgp]]
kind = "pareto"

[[dgp]]
kind = "abs_t"
nu = 2
"#;

    #[test]
    fn parses_defaults() {
        let cfg = StudyConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.dgps, vec![DgpSpec::pareto(), DgpSpec::abs_t()]);
        assert_eq!(cfg.level, 0.95);
        assert_eq!(cfg.ci_method, CiMethod::Lr);
        assert_eq!(cfg.grid, PercentileGrid::standard());
        assert_eq!(cfg.subgrids, vec![Subgrid::TopPercent(1), Subgrid::Range(4, 6)]);
        assert_eq!(cfg.cells().len(), 2);
    }

    fn path_of(text: &str) -> String {
        match StudyConfig::from_toml_str(text) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(path_of(&BASE.replace("nu = 2", "nu = -2")), "dgp[1].nu");
        assert_eq!(path_of(&BASE.replace("kind = \"abs_t\"", "kind = \"gamma\"")), "dgp[1]");
        assert_eq!(path_of(&BASE.replace("n = [10000]", "n = [10000, 50]")), "n[1]");
        assert_eq!(path_of(&BASE.replace("\"4..6\"", "\"4..9\"")), "subgrid[1]");
        assert_eq!(
            path_of(&BASE.replace("replications = 10", "replications = 0")),
            "replications"
        );
        assert_eq!(path_of(&format!("level = 1.5\n{BASE}")), "level");
        assert_eq!(path_of(&format!("ci_method = \"boot\"\n{BASE}")), "ci_method");
        assert_eq!(path_of(&format!("simple = [[1, 0.1]]\n{BASE}")), "simple[0]");
        assert_eq!(path_of(&format!("bogus = 1\n{BASE}")), "<document>");
    }
}
