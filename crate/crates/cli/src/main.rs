use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use kesten_core::kesten::{check_kesten, solve_exponent};
use kesten_core::scenario::{
    feedback_law, input_law, network_analysis, read_csv_column, run_scenario, ScenarioConfig, PRESETS,
};
use kesten_core::tail::{hill_band_series, rank_regression_band, PositiveSample};

/// Simulate and analyse multiplicative stochastic recurrences of returns.
#[derive(Parser)]
#[command(name = "kesten", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV series plus summary.json.
    Simulate {
        /// Scenario file or preset name.
        config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Solve E|a|^mu = 1 for the scenario's multiplier.
    SolveExponent {
        config: String,
        /// Use Monte Carlo even when closed-form moments exist.
        #[arg(long)]
        monte_carlo: bool,
    },
    /// Estimate the tail exponent of one CSV column.
    EstimateTail {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, value_enum, default_value_t = Method::Hill)]
        method: Method,
        /// Order count for Hill; defaults to 2 sqrt(n).
        #[arg(long)]
        k: Option<usize>,
        /// Fraction of the sample used by rank regression.
        #[arg(long, default_value_t = 0.01)]
        tail_fraction: f64,
    },
    /// Check the conditions of the Kesten theorem for the scenario.
    CheckKesten {
        config: String,
        /// Exponent to test; defaults to the solver root.
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Structural and exponent analysis of a network scenario.
    Network { config: String },
    /// Parse and validate a scenario.
    Validate { config: String },
    /// List shipped presets.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Hill,
    RankRegression,
}

fn load(config: &str) -> Result<ScenarioConfig> {
    let cfg = ScenarioConfig::load(config).with_context(|| format!("invalid scenario {config}"))?;
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    Ok(cfg)
}

fn print(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed, length, replicas } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(n) = length {
                cfg.run.length = n;
            }
            if let Some(n) = replicas {
                if n == 0 {
                    bail!("--replicas must be positive");
                }
                cfg.run.replicas = n;
            }
            let artifacts = run_scenario(&cfg)?;
            let written = artifacts.write(&out).with_context(|| format!("writing to {}", out.display()))?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::SolveExponent { config, monte_carlo } => {
            let cfg = load(&config)?;
            let Some(law) = feedback_law(&cfg) else {
                bail!("scenario {} has no scalar multiplier; use `network` for matrix recurrences", cfg.name);
            };
            let mut opts = cfg.analysis.solver_options();
            opts.force_monte_carlo = monte_carlo;
            let sol = solve_exponent(law.as_ref(), opts, kesten_core::RngState::new(cfg.run.seed, u64::MAX).substream(1))?;
            print(&json!({ "law": law.describe(), "options": opts, "solution": sol }))?;
        }
        Command::EstimateTail { csv, column, method, k, tail_fraction } => {
            let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let values = read_csv_column(&text, &column).with_context(|| format!("in {}", csv.display()))?;
            let pos = PositiveSample::from_abs(&values);
            let band = match method {
                Method::Hill => hill_band_series(&values, k)?,
                Method::RankRegression => rank_regression_band(&pos.values, tail_fraction)?,
            };
            let (lo, hi) = band.interval();
            print(&json!({
                "column": column,
                "n": values.len(),
                "zeros_dropped": pos.dropped,
                "estimate": band.central,
                "band": band.estimates,
                "interval": [lo, hi],
                "dependence_stderr": band.dependence_std_error,
                "width_ratio": band.width_ratio,
                "drift_z": band.drift_z,
                "power_law": band.power_law,
            }))?;
        }
        Command::CheckKesten { config, mu } => {
            let cfg = load(&config)?;
            let (Some(a), Some(e)) = (feedback_law(&cfg), input_law(&cfg)) else {
                bail!("scenario {} has no scalar recurrence to check", cfg.name);
            };
            let rng = kesten_core::RngState::new(cfg.run.seed, u64::MAX);
            let mu = match mu.or(cfg.analysis.mu) {
                Some(m) => m,
                None => solve_exponent(a.as_ref(), cfg.analysis.solver_options(), rng.substream(1))?
                    .mu
                    .context("the moment equation has no root; pass --mu to test a specific exponent")?,
            };
            let report = check_kesten(a.as_ref(), e.as_ref(), mu, cfg.analysis.mc_budget.min(100_000), rng.substream(2))?;
            print(&json!({ "all_pass": report.all_pass(), "report": report }))?;
        }
        Command::Network { config } => {
            let cfg = load(&config)?;
            let Some(net) = &cfg.network else {
                bail!("scenario {} has no [network] section", cfg.name);
            };
            print(&network_analysis(&cfg, net)?)?;
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("ok: {}", cfg.name);
        }
        Command::Presets => {
            let width = PRESETS.iter().map(|p| p.name.len()).max().unwrap_or(0);
            for p in PRESETS {
                println!("{:width$}  {}", p.name, p.description);
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
