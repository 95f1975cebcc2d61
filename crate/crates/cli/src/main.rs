use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use topshare::cli_io::{
    cmd_estimate, cmd_panel, cmd_simulate, parse_tabulation, percent_to_fraction, EstimateRequest, Grouping,
    PanelRequest,
};
use topshare::estimator::CiMethod;
use topshare::tail_moments::Subgrid;

/// Pareto exponent estimation from tabulated top income shares.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ci {
    Lr,
    Wald,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the exponent for every year of a tabulation file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// 1pct, 5pct, 10pct or i..j (1-based grid points)
        #[arg(long, default_value = "1pct")]
        subgrid: String,
        /// Assumed number of units; enables intervals and the specification test.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long, value_enum, default_value = "lr")]
        ci: Ci,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Two-share estimate at P,Q percent, e.g. 0.1,1
        #[arg(long)]
        simple: Option<String>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Conservative intervals from per-year estimates grouped by year digit.
    Panel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "1pct")]
        subgrid: String,
        #[arg(long, default_value = "year-digit")]
        group: String,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Two-share estimator pair P,Q in percent.
        #[arg(long, default_value = "0.1,1")]
        simple: String,
        /// Allow 1 - level above 0.08, where coverage is not guaranteed.
        #[arg(long)]
        allow_unguaranteed: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Run a Monte Carlo study described by a TOML file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_pair(text: &str) -> Result<(f64, f64)> {
    let Some((p, q)) = text.split_once(',') else {
        bail!("expected P,Q in percent, got `{text}`");
    };
    let p = percent_to_fraction(p).with_context(|| format!("bad percentile `{p}`"))?;
    let q = percent_to_fraction(q).with_context(|| format!("bad percentile `{q}`"))?;
    Ok((p, q))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Estimate {
            input,
            subgrid,
            n,
            ci,
            level,
            simple,
            format,
        } => {
            let tabs = parse_tabulation(&input).with_context(|| format!("reading {}", input.display()))?;
            let req = EstimateRequest {
                subgrid: subgrid.parse::<Subgrid>()?,
                n,
                ci_method: match ci {
                    Ci::Lr => CiMethod::Lr,
                    Ci::Wald => CiMethod::Wald,
                },
                level,
                simple: simple.as_deref().map(parse_pair).transpose()?,
            };
            let report = cmd_estimate(&tabs, &req)?;
            match format {
                Format::Table => print!("{}", report.to_table()),
                Format::Jsonl => print!("{}", report.to_jsonl()),
            }
        }
        Command::Panel {
            input,
            subgrid,
            group,
            level,
            simple,
            allow_unguaranteed,
            format,
        } => {
            let tabs = parse_tabulation(&input).with_context(|| format!("reading {}", input.display()))?;
            let req = PanelRequest {
                subgrid: subgrid.parse::<Subgrid>()?,
                grouping: group.parse::<Grouping>()?,
                level,
                simple: parse_pair(&simple)?,
                allow_unguaranteed,
            };
            let report = cmd_panel(&tabs, &req)?;
            match format {
                Format::Table => print!("{}", report.to_table()),
                Format::Jsonl => print!("{}", report.to_jsonl()),
            }
        }
        Command::Simulate { config, out, workers } => {
            let results = cmd_simulate(&config, &out, workers)?;
            let cells: usize = results.iter().map(|r| r.cells.len()).sum();
            eprintln!("wrote {cells} cells to {}", out.display());
        }
    }
    Ok(())
}
