//! Scenario files and the end-to-end runs behind the command-line front end.
//!
//! A scenario is a text file of `key = value` lines grouped under `[run]`,
//! `[recurrence]`, `[market]`, `[network]` and `[analysis]` headers. Values
//! that describe random variables use the distribution grammar, e.g.
//! `jittered(two_point(2, 0.2, 0.5), 0.01)`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::distributions::{mean_and_se, DistributionSpec, RandomLaw};
use crate::error::{Error, Result};
use crate::kesten::{
    check_kesten, empirical_tail_ratio, grincevicius_predict, solve_exponent, ExponentSolution, SolverOptions,
};
use crate::market::{
    bubble_path, negative_feedback_path, simulate_market, volume_imbalance_relation, DemandSign,
    ExpectationModel, MarketConfig, MarketPath, PriceRule, MIN_VOLUME_PAIRS,
};
use crate::matrix::{
    component_tails, estimate_matrix_exponent, multiplier_matrix, simulate_vector_path,
    spectral_radius, strong_connectivity, InputGenerator, MatrixExponentOptions, MatrixGenerator, MatrixMode,
    MatrixRecurrenceSpec, WeightMatrix,
};
use crate::recurrence::{simulate_path_with_inputs, InputMode, Lag, RecurrenceSpec, SeriesSample};
use crate::rng::RngState;
use crate::tail::{hill_band_series, sample_shape, PositiveSample, StabilityBand};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "random-walk",
        description: "[clearing] market clearing turns averaged prediction errors into Gaussian returns",
        text: include_str!("../presets/random-walk.ini"),
    },
    Preset {
        name: "bubble",
        description: "[clearing, fundamentals] the price-value gap grows geometrically at rate 1 + gamma/alpha",
        text: include_str!("../presets/bubble.ini"),
    },
    Preset {
        name: "negative-feedback",
        description: "[law of demand] the price converges to the intrinsic value when |1 - rho| < 1",
        text: include_str!("../presets/negative-feedback.ini"),
    },
    Preset {
        name: "kesten-stock",
        description: "[price impact, confidence] power-law returns with exponent solving E(a^mu) = 1",
        text: include_str!("../presets/kesten-stock.ini"),
    },
    Preset {
        name: "grincevicius",
        description: "[heavy input] Pareto input dominates the feedback and its tail is amplified",
        text: include_str!("../presets/grincevicius.ini"),
    },
    Preset {
        name: "opinion-network",
        description: "[mimetic network] randomly weighted opinion averaging on a strongly connected network",
        text: include_str!("../presets/opinion-network.ini"),
    },
    Preset {
        name: "cross-asset",
        description: "[cross-asset] a matrix recurrence of returns with random self-feedback",
        text: include_str!("../presets/cross-asset.ini"),
    },
];

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    entries: Vec<Entry>,
}

const SECTIONS: &[&str] = &["run", "recurrence", "market", "network", "analysis"];

fn parse_ini(text: &str) -> Result<(Vec<Entry>, Vec<Section>)> {
    let mut top = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() || content.starts_with(';') {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse { line, msg: format!("malformed section header {content:?}") })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown section [{name}]; expected one of {}", SECTIONS.join(", ")),
                });
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::Parse { line, msg: format!("duplicate section [{name}]") });
            }
            sections.push(Section { name: name.to_string(), entries: Vec::new() });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, msg: format!("expected `key = value`, got {content:?}") })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Parse { line, msg: "empty key".into() });
        }
        let target = match sections.last_mut() {
            Some(s) => &mut s.entries,
            None => &mut top,
        };
        if target.iter().any(|e| e.key == key) {
            return Err(Error::Parse { line, msg: format!("duplicate key {key}") });
        }
        target.push(Entry { key: key.to_string(), value: value.to_string(), line });
    }
    Ok((top, sections))
}

/// Typed access to one section; keys never read are rejected by [`finish`].
struct Reader<'a> {
    section: &'a str,
    entries: &'a [Entry],
    used: HashSet<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(section: &'a str, entries: &'a [Entry]) -> Self {
        Self { section, entries, used: HashSet::new() }
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a Entry> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        self.used.insert(key);
        Some(e)
    }

    fn err(&self, e: &Entry, msg: impl fmt::Display) -> Error {
        Error::Parse { line: e.line, msg: format!("[{}].{}: {msg}", self.section, e.key) }
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config(format!("[{}].{key}: required key is missing", self.section))
    }

    fn parsed<T: FromStr>(&mut self, key: &'a str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| self.err(e, err)),
        }
    }

    fn f64(&mut self, key: &'a str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn req_f64(&mut self, key: &'a str) -> Result<f64> {
        self.parsed(key)?.ok_or_else(|| self.missing(key))
    }

    fn law(&mut self, key: &'a str) -> Result<Option<DistributionSpec>> {
        self.parsed(key)
    }

    fn req_law(&mut self, key: &'a str) -> Result<DistributionSpec> {
        self.law(key)?.ok_or_else(|| self.missing(key))
    }

    fn choice(&mut self, key: &'a str, options: &[&str]) -> Result<Option<String>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) if options.contains(&e.value.as_str()) => Ok(Some(e.value.clone())),
            Some(e) => Err(self.err(e, format!("expected one of {}, got {:?}", options.join(", "), e.value))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.iter().find(|e| !self.used.contains(e.key.as_str())) {
            Some(e) => Err(Error::Parse { line: e.line, msg: format!("[{}].{}: unknown key", self.section, e.key) }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub replicas: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    Simulate,
    Bubble,
    NegativeFeedback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSection {
    pub config: MarketConfig,
    pub dynamics: Dynamics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSection {
    pub spec: MatrixRecurrenceSpec,
    pub horizon: usize,
    pub chains: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub mu_max: f64,
    pub tol: f64,
    pub mc_budget: usize,
    pub hill_k: Option<usize>,
    /// Exponent at which to check the theorem conditions, if not the solver root.
    pub mu: Option<f64>,
    /// Tail exponent of a heavy input, enabling the Grincevičius analysis.
    pub mu_e: Option<f64>,
    pub quantile: f64,
}

impl AnalysisConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { mu_max: self.mu_max, tol: self.tol, mc_budget: self.mc_budget, force_monte_carlo: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub run: RunConfig,
    pub recurrence: Option<RecurrenceSpec>,
    pub market: Option<MarketSection>,
    pub network: Option<NetworkSection>,
    pub analysis: AnalysisConfig,
    /// Non-fatal findings of validation.
    pub warnings: Vec<String>,
}

/// A square matrix from `ring(n, w)`, `complete(n, w)`, `zeros(n)`,
/// `rows(a, b; c, d)` or `file(path.csv)`.
fn parse_matrix(s: &str, base_dir: Option<&Path>) -> std::result::Result<WeightMatrix, String> {
    let s = s.trim();
    let (kind, args) = s
        .split_once('(')
        .and_then(|(k, rest)| rest.strip_suffix(')').map(|a| (k.trim(), a)))
        .ok_or_else(|| format!("expected kind(args), got {s:?}"))?;
    let nums = |a: &str| -> std::result::Result<Vec<f64>, String> {
        a.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"))).collect()
    };
    let size = |x: f64| -> std::result::Result<usize, String> {
        if x >= 1.0 && x.fract() == 0.0 {
            Ok(x as usize)
        } else {
            Err(format!("matrix size must be a positive integer, got {x}"))
        }
    };
    match kind {
        "ring" | "complete" => match nums(args)?.as_slice() {
            [n, w] => {
                let n = size(*n)?;
                Ok(if kind == "ring" { WeightMatrix::ring(n, *w) } else { WeightMatrix::complete(n, *w) })
            }
            _ => Err(format!("{kind} takes (size, weight)")),
        },
        "zeros" => match nums(args)?.as_slice() {
            [n] => Ok(WeightMatrix::zeros(size(*n)?)),
            _ => Err("zeros takes (size)".into()),
        },
        "rows" => {
            let rows = args.split(';').map(nums).collect::<std::result::Result<Vec<_>, _>>()?;
            WeightMatrix::from_rows(&rows).map_err(|e| e.to_string())
        }
        "file" => {
            let p = PathBuf::from(args.trim());
            let p = match base_dir {
                Some(d) if p.is_relative() => d.join(p),
                _ => p,
            };
            let text = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
            WeightMatrix::from_csv(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
        _ => Err(format!("unknown matrix kind {kind:?}")),
    }
}

impl ScenarioConfig {
    /// Parses and validates scenario text; `base_dir` resolves relative matrix files.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let (top, sections) = parse_ini(text)?;
        let mut head = Reader::new("", &top);
        let name = head.raw("scenario").map(|e| e.value.clone()).unwrap_or_else(|| "unnamed".into());
        head.raw("description");
        head.finish()?;
        let section = |n: &str| sections.iter().find(|s| s.name == n).map(|s| s.entries.as_slice());

        let has_model = ["recurrence", "market", "network"].iter().any(|n| section(n).is_some());
        if !has_model {
            return Err(Error::Config("at least one of [recurrence], [market], [network] is required".into()));
        }

        let empty: &[Entry] = &[];
        let mut r = Reader::new("run", section("run").unwrap_or(empty));
        let default_burn = if section("recurrence").is_some() { 10_000 } else { 1_000 };
        let run = RunConfig {
            length: r.parsed("length")?.unwrap_or(100_000),
            burn_in: r.parsed("burn_in")?.unwrap_or(default_burn),
            seed: r.parsed("seed")?.unwrap_or(1),
            replicas: r.parsed("replicas")?.unwrap_or(1),
        };
        r.finish()?;
        if run.length == 0 || run.replicas == 0 {
            return Err(Error::Config("[run]: length and replicas must be positive".into()));
        }

        let mut a = Reader::new("analysis", section("analysis").unwrap_or(empty));
        let analysis = AnalysisConfig {
            mu_max: a.f64("mu_max", 10.0)?,
            tol: a.f64("tol", 1e-6)?,
            mc_budget: a.parsed("mc_budget")?.unwrap_or(1_000_000),
            hill_k: a.parsed("hill_k")?,
            mu: a.parsed("mu")?,
            mu_e: a.parsed("mu_e")?,
            quantile: a.f64("quantile", 0.999)?,
        };
        a.finish()?;
        if !(analysis.mu_max > 0.0) || !(analysis.tol > 0.0) || analysis.mc_budget < 2 {
            return Err(Error::Config("[analysis]: mu_max and tol must be positive, mc_budget at least 2".into()));
        }
        if !(0.0..1.0).contains(&analysis.quantile) {
            return Err(Error::Config("[analysis].quantile must lie in [0, 1)".into()));
        }

        let mut warnings = Vec::new();
        let recurrence = section("recurrence").map(parse_recurrence).transpose()?;
        let market = section("market").map(|e| parse_market(e, &mut warnings)).transpose()?;
        let network = section("network").map(|e| parse_network(e, base_dir)).transpose()?;
        Ok(Self { name, run, recurrence, market, network, analysis, warnings })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::parse(&text, path.parent())
    }

    /// A path to a scenario file, or the name of a shipped preset.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.exists() {
            return Self::from_path(path);
        }
        match find_preset(arg) {
            Some(p) => Self::parse(p.text, None),
            None => Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{arg}: no such file, and not a preset name"),
            ))),
        }
    }

    fn analysis_rng(&self, tag: u64) -> RngState {
        RngState::new(self.run.seed, u64::MAX).substream(tag)
    }
}

fn parse_recurrence(entries: &[Entry]) -> Result<RecurrenceSpec> {
    let mut r = Reader::new("recurrence", entries);
    let a_law = r.req_law("a")?;
    let e = r.law("e")?;
    let b = r.law("b")?;
    let lag = match r.parsed::<u32>("lag")?.unwrap_or(1) {
        0 => Lag::Instantaneous,
        1 => Lag::OneStep,
        other => return Err(Error::Config(format!("[recurrence].lag must be 0 or 1, got {other}"))),
    };
    let r0 = r.f64("r0", 0.0)?;
    r.finish()?;
    let input = match (e, b) {
        (Some(e), None) => InputMode::Direct(e),
        (None, Some(b)) => InputMode::Coupled(b),
        _ => return Err(Error::Config("[recurrence]: give exactly one of `e` (direct) or `b` (e = a b)".into())),
    };
    let spec = RecurrenceSpec { a_law, input, lag, r0 };
    spec.validate().map_err(|e| Error::Config(format!("[recurrence]: {e}")))?;
    Ok(spec)
}

fn parse_market(entries: &[Entry], warnings: &mut Vec<String>) -> Result<MarketSection> {
    let mut r = Reader::new("market", entries);
    let dynamics = match r.choice("dynamics", &["simulate", "bubble", "negative_feedback"])?.as_deref() {
        Some("bubble") => Dynamics::Bubble,
        Some("negative_feedback") => Dynamics::NegativeFeedback,
        _ => Dynamics::Simulate,
    };
    let simulate = dynamics == Dynamics::Simulate;
    let price_rule = match r.choice("price_rule", &["clearing", "impact"])?.as_deref() {
        Some("impact") => PriceRule::Impact,
        Some(_) => PriceRule::Clearing,
        None if simulate => return Err(r.missing("price_rule")),
        None => PriceRule::Clearing,
    };
    let expectation = match r.choice("expectation", &["prediction_error", "confidence"])?.as_deref() {
        Some("confidence") => ExpectationModel::Confidence(r.req_law("theta")?),
        Some(_) => ExpectationModel::PredictionError(r.req_law("eps")?),
        None if simulate => return Err(r.missing("expectation")),
        None => ExpectationModel::PredictionError(DistributionSpec::Constant(0.0)),
    };
    let n_law = match r.law("n")? {
        Some(l) => l,
        None if simulate => return Err(r.missing("n")),
        None => DistributionSpec::Constant(1.0),
    };
    let l_law = match r.law("l")? {
        Some(l) => l,
        None if simulate && price_rule == PriceRule::Impact => {
            return Err(Error::Config("[market].l: impact mode needs a liquidity law".into()))
        }
        None => DistributionSpec::Constant(1.0),
    };
    let fundamental_value = r.f64("fundamental_value", 100.0)?;
    let cfg = MarketConfig {
        alpha: r.f64("alpha", 1.0)?,
        gamma: r.f64("gamma", 0.0)?,
        beta: r.f64("beta", 0.5)?,
        price_rule,
        expectation,
        fundamental_value,
        guess_law: r.law("guess")?.unwrap_or(DistributionSpec::Constant(0.0)),
        n_law,
        l_law,
        p0: r.f64("p0", fundamental_value)?,
        demand_sign: match r.choice("demand", &["speculative", "law_of_demand"])?.as_deref() {
            Some("law_of_demand") => DemandSign::LawOfDemand,
            _ => DemandSign::Speculative,
        },
    };
    r.finish()?;
    cfg.validate().map_err(|e| Error::Config(format!("[market]: {e}")))?;
    if simulate && cfg.price_rule == PriceRule::Impact {
        let law = cfg.multiplier_law();
        let mut g = RngState::new(0, 0).generator();
        let (mean_a, _) = mean_and_se((0..10_000).map(|_| law.draw(&mut g)));
        if mean_a >= 1.0 {
            warnings.push(format!("[market]: E(a) = E(alpha beta N / L) is estimated at {mean_a:.4} >= 1"));
        }
    }
    Ok(MarketSection { config: cfg, dynamics })
}

fn parse_network(entries: &[Entry], base_dir: Option<&Path>) -> Result<NetworkSection> {
    let mut r = Reader::new("network", entries);
    let mode = match r.choice("mode", &["opinion_network", "cross_asset"])?.as_deref() {
        Some("opinion_network") => MatrixMode::OpinionNetwork,
        Some(_) => MatrixMode::CrossAsset,
        None => return Err(r.missing("mode")),
    };
    let generator = r
        .choice("generator", &["constant", "jittered", "scalar_diagonal", "independent_diagonal"])?
        .ok_or_else(|| r.missing("generator"))?;
    let matrix_key = |r: &mut Reader<'_>, key: &'static str| -> Result<Option<WeightMatrix>> {
        match r.raw(key) {
            None => Ok(None),
            Some(e) => parse_matrix(&e.value, base_dir).map(Some).map_err(|m| r.err(e, m)),
        }
    };
    let matrix = match generator.as_str() {
        "constant" => MatrixGenerator::Constant(matrix_key(&mut r, "matrix")?.ok_or_else(|| r.missing("matrix"))?),
        "jittered" => MatrixGenerator::Jittered {
            base: matrix_key(&mut r, "matrix")?.ok_or_else(|| r.missing("matrix"))?,
            jitter_sd: r.req_f64("jitter")?,
        },
        "scalar_diagonal" => MatrixGenerator::ScalarDiagonal {
            law: r.req_law("diagonal")?,
            size: r.parsed("size")?.ok_or_else(|| r.missing("size"))?,
        },
        _ => {
            let e = r.raw("diagonals").ok_or_else(|| r.missing("diagonals"))?;
            let laws = e
                .value
                .split(';')
                .map(|s| s.trim().parse::<DistributionSpec>())
                .collect::<Result<Vec<_>>>()
                .map_err(|err| r.err(e, err))?;
            let n = laws.len();
            let off_diagonal = matrix_key(&mut r, "off_diagonal")?.unwrap_or_else(|| WeightMatrix::zeros(n));
            MatrixGenerator::IndependentDiagonal { laws, off_diagonal }
        }
    };
    let input_mode = r.choice("input_mode", &["iid", "coupled", "constant"])?.unwrap_or_else(|| "iid".into());
    let input = match input_mode.as_str() {
        "constant" => {
            let e = r.raw("input").ok_or_else(|| r.missing("input"))?;
            let v = e
                .value
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|err| r.err(e, err))?;
            InputGenerator::Constant(v)
        }
        "coupled" => InputGenerator::Coupled(r.req_law("input")?),
        _ => InputGenerator::Iid(r.req_law("input")?),
    };
    let horizon = r.parsed("horizon")?.unwrap_or(50);
    let chains = r.parsed("chains")?.unwrap_or(10_000);
    r.finish()?;
    let spec = MatrixRecurrenceSpec { mode, matrix, input };
    spec.validate().map_err(|e| Error::Config(format!("[network]: {e}")))?;
    Ok(NetworkSection { spec, horizon, chains })
}

/// Files to write and the summary report of one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    /// `(file name, contents)`.
    pub files: Vec<(String, String)>,
    pub summary: Value,
}

impl RunArtifacts {
    /// Writes every file and `summary.json` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir)?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let p = out_dir.join(name);
            std::fs::write(&p, contents)?;
            written.push(p);
        }
        let p = out_dir.join("summary.json");
        std::fs::write(&p, serde_json::to_string_pretty(&self.summary)? + "\n")?;
        written.push(p);
        Ok(written)
    }
}

/// Mean and standard error over replicas.
fn aggregate(xs: &[f64]) -> Value {
    let (mean, se) = mean_and_se(xs.iter().copied());
    json!({ "n": xs.len(), "mean": mean, "se": if xs.len() > 1 { json!(se) } else { Value::Null } })
}

fn replica_file(stem: &str, i: usize) -> String {
    if i == 0 {
        format!("{stem}.csv")
    } else {
        format!("{stem}_r{i}.csv")
    }
}

fn band_json(band: &StabilityBand) -> Value {
    let (lo, hi) = band.interval();
    json!({
        "central": band.central,
        "estimates": band.estimates,
        "interval": [lo, hi],
        "dependence_stderr": band.dependence_std_error,
        "width_ratio": band.width_ratio,
        "drift_z": band.drift_z,
        "power_law": band.power_law,
    })
}

/// Hill band per replica on `|x|` plus the across-replica aggregate.
fn tail_summary(samples: &[Vec<f64>], k: Option<usize>, root: Option<f64>) -> Result<Value> {
    let mut bands = Vec::with_capacity(samples.len());
    let mut dropped = Vec::with_capacity(samples.len());
    for s in samples {
        dropped.push(PositiveSample::from_abs(s).dropped);
        bands.push(hill_band_series(s, k)?);
    }
    let exps: Vec<f64> = bands.iter().map(|b| b.central.exponent).collect();
    Ok(json!({
        "method": "hill",
        "band": band_json(&bands[0]),
        "zeros_dropped": dropped,
        "replica_exponents": exps,
        "aggregate": aggregate(&exps),
        "contains_solver_root": root.map(|mu| bands.iter().all(|b| b.contains(mu))),
    }))
}

fn solver_json(law: &dyn RandomLaw, sol: &ExponentSolution) -> Value {
    json!({ "law": law.describe(), "solution": sol })
}

/// Runs every model section of the scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifacts> {
    let mut files = Vec::new();
    let mut summary = json!({
        "scenario": cfg.name,
        "run": cfg.run,
        "series": [],
        "solver": null,
        "tail": null,
        "kesten": null,
        "grincevicius": null,
        "market": null,
        "network": null,
        "bubble": null,
        "warnings": cfg.warnings,
    });
    let mut series = Vec::new();
    let mut warnings: Vec<String> = cfg.warnings.clone();

    if let Some(spec) = &cfg.recurrence {
        run_recurrence(cfg, spec, &mut files, &mut summary, &mut warnings)?;
        series.push("series");
    }
    if let Some(m) = &cfg.market {
        match m.dynamics {
            Dynamics::Simulate => {
                run_market(cfg, &m.config, &mut files, &mut summary, &mut warnings)?;
                series.push("market");
            }
            Dynamics::Bubble => {
                let rho = m.config.rho();
                let b0 = m.config.p0 - m.config.fundamental_value;
                let b = bubble_path(rho, b0, cfg.run.length)?;
                let mut csv = String::from("t,P,B\n");
                for (t, x) in b.iter().enumerate() {
                    csv.push_str(&format!("{t},{},{x}\n", m.config.fundamental_value + x));
                }
                files.push(("bubble.csv".into(), csv));
                let growth = if b0 != 0.0 && b.len() > 1 { Some((b[1] / b[0]).ln()) } else { None };
                summary["bubble"] = json!({
                    "dynamics": "bubble",
                    "rho": rho,
                    "b0": b0,
                    "growth_rate": growth,
                    "ln_one_plus_rho": (1.0 + rho).ln(),
                    "final_gap": b.last(),
                });
                series.push("bubble");
            }
            Dynamics::NegativeFeedback => {
                let rho = m.config.rho();
                let f = m.config.fundamental_value;
                let p = negative_feedback_path(rho, f, m.config.p0, cfg.run.length)?;
                let mut csv = String::from("t,P\n");
                for (t, x) in p.iter().enumerate() {
                    csv.push_str(&format!("{t},{x}\n"));
                }
                files.push(("negative_feedback.csv".into(), csv));
                summary["bubble"] = json!({
                    "dynamics": "negative_feedback",
                    "rho": rho,
                    "contraction": (1.0 - rho).abs(),
                    "converges": (1.0 - rho).abs() < 1.0,
                    "initial_gap": m.config.p0 - f,
                    "final_gap": p.last().map(|x| x - f),
                });
                series.push("negative_feedback");
            }
        }
    }
    if let Some(n) = &cfg.network {
        run_network(cfg, n, &mut files, &mut summary, &mut warnings)?;
        series.push("network");
    }
    summary["series"] = json!(files.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>());
    summary["warnings"] = json!(warnings);
    log::debug!("ran scenario {} producing {:?}", cfg.name, series);
    Ok(RunArtifacts { files, summary })
}

fn run_recurrence(
    cfg: &ScenarioConfig,
    spec: &RecurrenceSpec,
    files: &mut Vec<(String, String)>,
    summary: &mut Value,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let run = cfg.run;
    let paths: Vec<(SeriesSample, Vec<f64>)> = (0..run.replicas)
        .into_par_iter()
        .map(|i| simulate_path_with_inputs(spec, run.length, run.burn_in, RngState::new(run.seed, i as u64)))
        .collect::<Result<_>>()?;
    for (i, (s, _)) in paths.iter().enumerate() {
        files.push((replica_file("series", i), s.to_csv()));
        warnings.extend(s.warnings.iter().cloned());
    }
    let a_law = &spec.a_law;
    let sol = solve_exponent(a_law, cfg.analysis.solver_options(), cfg.analysis_rng(1))?;
    summary["solver"] = solver_json(a_law, &sol);
    let samples: Vec<Vec<f64>> = paths.iter().map(|(s, _)| s.values.clone()).collect();
    summary["tail"] = tail_summary(&samples, cfg.analysis.hill_k, sol.mu)?;

    let mu = cfg.analysis.mu.or(sol.mu).or(cfg.analysis.mu_e);
    if let Some(mu) = mu {
        let report = check_kesten(a_law, &spec.input_law(), mu, cfg.analysis.mc_budget.min(100_000), cfg.analysis_rng(2))?;
        summary["kesten"] = json!(report);
    }
    if let Some(mu_e) = cfg.analysis.mu_e {
        let coupled = matches!(spec.input, InputMode::Coupled(_));
        let pred = grincevicius_predict(a_law, mu_e, coupled, cfg.analysis.mc_budget, cfg.analysis_rng(3))?;
        let ratios = paths
            .iter()
            .map(|(s, e)| empirical_tail_ratio(&s.values, e, cfg.analysis.quantile))
            .collect::<Result<Vec<f64>>>()?;
        summary["grincevicius"] = json!({
            "mu_e": mu_e,
            "prediction": pred,
            "quantile": cfg.analysis.quantile,
            "empirical_ratio": aggregate(&ratios),
            "replica_ratios": ratios,
        });
    }
    Ok(())
}

fn run_market(
    cfg: &ScenarioConfig,
    market: &MarketConfig,
    files: &mut Vec<(String, String)>,
    summary: &mut Value,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let run = cfg.run;
    let paths: Vec<MarketPath> = (0..run.replicas)
        .into_par_iter()
        .map(|i| simulate_market(market, run.length, RngState::new(run.seed, i as u64)))
        .collect::<Result<_>>()?;
    for (i, p) in paths.iter().enumerate() {
        files.push((replica_file("market", i), p.to_csv()));
        warnings.extend(p.warnings.iter().cloned());
    }
    let returns: Vec<Vec<f64>> = paths.iter().map(|p| p.returns()).collect();
    let shapes = returns.iter().map(|r| sample_shape(r)).collect::<Result<Vec<_>>>();
    let mut out = json!({
        "rho": market.rho(),
        "price_rule": market.price_rule,
        "expectation": match market.expectation {
            ExpectationModel::PredictionError(_) => "prediction_error",
            ExpectationModel::Confidence(_) => "confidence",
        },
        "return_shape": shapes.as_ref().ok().map(|s| s[0]),
        "final_price": paths.iter().map(|p| p.final_price).collect::<Vec<_>>(),
    });
    if let Ok(s) = &shapes {
        let sds: Vec<f64> = s.iter().map(|x| x.sd).collect();
        out["return_sd"] = aggregate(&sds);
    }
    if let (PriceRule::Clearing, ExpectationModel::PredictionError(DistributionSpec::Normal { sd, .. }), Some(n)) =
        (market.price_rule, &market.expectation, market.n_law.constant_value())
    {
        if market.rho() == 0.0 {
            out["predicted_sd"] = json!(sd / n.ceil().max(1.0).sqrt());
        }
    }
    let mut root = None;
    if market.price_rule == PriceRule::Impact {
        let law = market.multiplier_law();
        let sol = solve_exponent(&law, cfg.analysis.solver_options(), cfg.analysis_rng(1))?;
        summary["solver"] = solver_json(&law, &sol);
        root = sol.mu;
        if let ExpectationModel::Confidence(_) = market.expectation {
            if let Some(mu) = cfg.analysis.mu.or(sol.mu) {
                let report = check_kesten(
                    &law,
                    &market.input_law(),
                    mu,
                    cfg.analysis.mc_budget.min(100_000),
                    cfg.analysis_rng(2),
                )?;
                summary["kesten"] = json!(report);
            }
        }
    }
    summary["tail"] = tail_summary(&returns, cfg.analysis.hill_k, root)?;
    let q: Vec<Vec<f64>> = paths.iter().map(|p| p.excess_demand()).collect();
    let q_has_tail = q[0].iter().filter(|x| x.abs() > 1e-9).count() > 100;
    if q_has_tail {
        let qb = hill_band_series(&q[0], cfg.analysis.hill_k)?;
        let rb = hill_band_series(&returns[0], cfg.analysis.hill_k)?;
        let (ql, qh) = qb.interval();
        let (rl, rh) = rb.interval();
        out["excess_demand_tail"] = band_json(&qb);
        out["return_excess_demand_agree"] = json!(ql <= rh && rl <= qh);
    }
    if q_has_tail && run.length >= MIN_VOLUME_PAIRS {
        out["volume_relation"] = match volume_imbalance_relation(&paths[0].volumes(), &q[0]) {
            Ok(v) => json!(v),
            Err(e) => json!({ "error": e.to_string() }),
        };
    }
    summary["market"] = out;
    Ok(())
}

fn run_network(
    cfg: &ScenarioConfig,
    net: &NetworkSection,
    files: &mut Vec<(String, String)>,
    summary: &mut Value,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let run = cfg.run;
    let spec = &net.spec;
    let paths = (0..run.replicas)
        .into_par_iter()
        .map(|i| simulate_vector_path(spec, run.length, run.burn_in, RngState::new(run.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    for (i, p) in paths.iter().enumerate() {
        files.push((replica_file("network", i), p.to_csv()));
        warnings.extend(p.warnings.iter().cloned());
    }
    let mut out = network_analysis(cfg, net)?;
    let averages: Vec<Vec<f64>> = paths.iter().map(|p| p.average.clone()).collect();
    let exponent = out["matrix_exponent"]["mu"].as_f64();
    out["average_tail"] = tail_summary(&averages, cfg.analysis.hill_k, exponent)?;
    if spec.mode == MatrixMode::CrossAsset {
        let bands = component_tails(&paths[0], cfg.analysis.hill_k)?;
        out["component_tails"] = json!(bands.iter().map(band_json).collect::<Vec<_>>());
    }
    summary["network"] = out;
    Ok(())
}

/// Structural and exponent analysis of a network section, without simulation.
pub fn network_analysis(cfg: &ScenarioConfig, net: &NetworkSection) -> Result<Value> {
    let spec = &net.spec;
    let mut out = json!({
        "mode": spec.mode,
        "size": spec.size(),
        "caveats": [
            "weights are redrawn independently every step; persistent weights violate the iid assumption behind the matrix exponent",
        ],
    });
    let base = match &spec.matrix {
        MatrixGenerator::Constant(m) | MatrixGenerator::Jittered { base: m, .. } => Some(m),
        MatrixGenerator::IndependentDiagonal { off_diagonal, .. } => Some(off_diagonal),
        MatrixGenerator::ScalarDiagonal { .. } => None,
    };
    if let Some(m) = base {
        let rho = spectral_radius(m.matrix(), 1e-13)?;
        out["base_matrix"] = json!({
            "row_sums": m.row_sums(),
            "spectral_radius": rho,
            "strongly_connected": strong_connectivity(m),
            "multiplier": match multiplier_matrix(m) {
                Ok(k) => json!(k.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>()),
                Err(e) => json!({ "error": e.to_string() }),
            },
        });
    }
    let opts = MatrixExponentOptions {
        mu_max: cfg.analysis.mu_max,
        tol: cfg.analysis.tol.max(1e-3),
        mc_budget: net.chains,
        horizon: net.horizon,
    };
    out["matrix_exponent"] = json!(estimate_matrix_exponent(spec, opts, cfg.analysis_rng(4))?);
    if let MatrixGenerator::IndependentDiagonal { laws, .. } = &spec.matrix {
        let roots = laws
            .iter()
            .enumerate()
            .map(|(i, l)| {
                solve_exponent(l, cfg.analysis.solver_options(), cfg.analysis_rng(10 + i as u64))
                    .map(|s| json!({ "law": l.to_string(), "mu": s.mu }))
                    .unwrap_or_else(|e| json!({ "law": l.to_string(), "error": e.to_string() }))
            })
            .collect::<Vec<_>>();
        out["diagonal_roots"] = json!(roots);
    }
    if let MatrixGenerator::ScalarDiagonal { law, .. } = &spec.matrix {
        let sol = solve_exponent(law, cfg.analysis.solver_options(), cfg.analysis_rng(10))?;
        out["diagonal_roots"] = json!([{ "law": law.to_string(), "mu": sol.mu }]);
    }
    Ok(out)
}

/// The law whose moment equation governs the scenario's tail, if any.
pub fn feedback_law(cfg: &ScenarioConfig) -> Option<Box<dyn RandomLaw + '_>> {
    if let Some(spec) = &cfg.recurrence {
        return Some(Box::new(spec.a_law.clone()));
    }
    if let Some(m) = &cfg.market {
        if m.dynamics == Dynamics::Simulate && m.config.price_rule == PriceRule::Impact {
            return Some(Box::new(m.config.multiplier_law()));
        }
    }
    None
}

/// The input law paired with [`feedback_law`].
pub fn input_law(cfg: &ScenarioConfig) -> Option<Box<dyn RandomLaw + '_>> {
    if let Some(spec) = &cfg.recurrence {
        return Some(Box::new(spec.input_law()));
    }
    if let Some(m) = &cfg.market {
        if m.dynamics == Dynamics::Simulate && m.config.price_rule == PriceRule::Impact {
            return Some(Box::new(m.config.input_law()));
        }
    }
    None
}

/// Reads one named column of a headed CSV file.
pub fn read_csv_column(text: &str, column: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty CSV".into() })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let idx = names.iter().position(|n| *n == column).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("no column {column:?}; header has {}", names.join(", ")),
    })?;
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cell = line.split(',').nth(idx).ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("row has no column {}", idx + 1),
        })?;
        out.push(cell.trim().parse::<f64>().map_err(|e| Error::Parse { line: i + 1, msg: format!("{cell:?}: {e}") })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        assert_eq!(PRESETS.len(), 7);
        for p in PRESETS {
            let cfg = ScenarioConfig::parse(p.text, None).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(cfg.name, p.name);
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = ScenarioConfig::parse("[market]\nalpha 1\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ScenarioConfig::parse("[recurrence]\na = uniform(0, 2)\ne = normal(0, 1)\ncolour = red\n", None)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }) && err.to_string().contains("[recurrence].colour"));
        let err = ScenarioConfig::parse("[bogus]\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = ScenarioConfig::parse("[recurrence]\na = uniform(2, 0)\ne = normal(0, 1)\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn semantic_errors() {
        let text = find_preset("kesten-stock").unwrap().text.replace("beta = 0.1", "beta = 1.5");
        let err = ScenarioConfig::parse(&text, None).unwrap_err().to_string();
        assert!(err.contains("[market]") && err.contains("beta must lie in (0, 1)"), "{err}");
        let err = ScenarioConfig::parse("[run]\nlength = 10\n", None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let text = "[market]\nprice_rule = impact\nexpectation = confidence\ntheta = normal(0, 1)\nn = constant(5)\n";
        assert!(ScenarioConfig::parse(text, None).unwrap_err().to_string().contains("[market].l"));
        let text = "[recurrence]\na = uniform(0, 2)\ne = normal(0, 1)\nb = normal(0, 1)\n";
        assert!(ScenarioConfig::parse(text, None).is_err());
    }

    #[test]
    fn impact_mean_feedback_warning() {
        let text = "[market]\nprice_rule = impact\nexpectation = confidence\ntheta = normal(0, 1)\nn = constant(20)\nl = constant(1)\nbeta = 0.1\n";
        let cfg = ScenarioConfig::parse(text, None).unwrap();
        assert_eq!(cfg.warnings.len(), 1, "{:?}", cfg.warnings);
    }

    #[test]
    fn matrix_specs() {
        assert_eq!(parse_matrix("ring(3, 0.5)", None).unwrap(), WeightMatrix::ring(3, 0.5));
        let m = parse_matrix("rows(0, 0.4; 0.4, 0)", None).unwrap();
        assert_eq!(m.matrix()[(0, 1)], 0.4);
        assert!(parse_matrix("rows(0, 0.4; 0.4)", None).is_err());
        assert!(parse_matrix("ring(0.5, 1)", None).is_err());
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("w.csv"), "0,0.3\n0.2,0\n").unwrap();
        let m = parse_matrix("file(w.csv)", Some(dir.path())).unwrap();
        assert_eq!(m.matrix()[(1, 0)], 0.2);
    }

    #[test]
    fn csv_columns() {
        let text = "t,r\n1,0.5\n2,-1e-3\n";
        assert_eq!(read_csv_column(text, "r").unwrap(), vec![0.5, -1e-3]);
        assert!(read_csv_column(text, "q").is_err());
        assert!(matches!(read_csv_column("t,r\n1,x\n", "r"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn bubble_preset_row_ten() {
        let cfg = ScenarioConfig::load("bubble").unwrap();
        let art = run_scenario(&cfg).unwrap();
        let csv = &art.files.iter().find(|(n, _)| n == "bubble.csv").unwrap().1;
        let b = read_csv_column(csv, "B").unwrap();
        assert!((b[10] - 2.5937424601).abs() < 1e-9);
        assert!((art.summary["bubble"]["growth_rate"].as_f64().unwrap() - 1.1f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn summary_keys_are_stable() {
        let keys = |v: &Value| {
            let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            k.sort();
            k
        };
        let a = run_scenario(&ScenarioConfig::load("bubble").unwrap()).unwrap();
        let b = run_scenario(&ScenarioConfig::load("negative-feedback").unwrap()).unwrap();
        assert_eq!(keys(&a.summary), keys(&b.summary));
        assert!(a.summary["network"].is_null() && a.summary["solver"].is_null());
        assert_eq!(b.summary["bubble"]["converges"], json!(true));
    }
}
