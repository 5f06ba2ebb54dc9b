//! Executable versions of the Kesten–Goldie, Brandt and Grincevičius results:
//! solving `E|a|^μ = 1`, checking the theorem conditions, and the tail
//! amplification predicted when the input is itself power-law tailed.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{mean_and_se, MomentMethod, MomentValue, RandomLaw, TailClass};
use crate::error::{Error, Result};
use crate::recurrence::{stationarity_of, Stationarity};
use crate::rng::RngState;
use crate::tail::{moment_probe, ProbeVerdict};

pub const DEFAULT_MU_MAX: f64 = 10.0;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Grid points scanned for the first sign change of `ln E|a|^μ`.
const SCAN_POINTS: usize = 200;
const PAR_CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub mu_max: f64,
    pub tol: f64,
    pub mc_budget: usize,
    /// Use Monte Carlo even when the law has closed-form moments.
    pub force_monte_carlo: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu_max: DEFAULT_MU_MAX,
            tol: DEFAULT_TOL,
            mc_budget: 1_000_000,
            force_monte_carlo: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentSolution {
    /// Root of `E|a|^μ = 1` in `(0, mu_max]`, if any.
    pub mu: Option<f64>,
    /// `E|a|^μ - 1` at the returned root.
    pub residual: Option<f64>,
    pub method: MomentMethod,
    pub mean_log_a: f64,
    pub note: String,
}

/// `μ ↦ ln E|a|^μ`, closed-form or Monte Carlo over one fixed sample.
enum LogMomentFn<'a> {
    Closed(&'a dyn RandomLaw),
    /// `ln|a_i|` of common random numbers shared by every evaluation.
    Sample(Vec<f64>),
}

impl LogMomentFn<'_> {
    fn eval(&self, mu: f64) -> f64 {
        match self {
            LogMomentFn::Closed(law) => match law.closed_abs_moment(mu) {
                Some(MomentValue::Finite(m)) => m.ln(),
                Some(MomentValue::Divergent) => f64::INFINITY,
                None => unreachable!("closed-form evaluation requested without closed form"),
            },
            LogMomentFn::Sample(logs) => log_mean_exp(logs, mu),
        }
    }

    fn mean_log(&self, law: &dyn RandomLaw) -> f64 {
        match self {
            LogMomentFn::Closed(_) => law.closed_mean_log_abs().unwrap_or(f64::NAN),
            LogMomentFn::Sample(logs) => {
                if logs.iter().any(|l| *l == f64::NEG_INFINITY) {
                    f64::NEG_INFINITY
                } else {
                    chunked_sum(logs, |x| x) / logs.len() as f64
                }
            }
        }
    }
}

fn chunked_sum(xs: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    // fixed chunking keeps the floating-point sum order independent of scheduling
    let parts: Vec<f64> = xs
        .par_chunks(PAR_CHUNK)
        .map(|c| c.iter().map(|&x| f(x)).sum::<f64>())
        .collect();
    parts.iter().sum()
}

/// `ln( mean_i exp(mu * logs_i) )`, stable for large `mu * logs_i`.
fn log_mean_exp(logs: &[f64], mu: f64) -> f64 {
    let peak = logs
        .par_chunks(PAR_CHUNK)
        .map(|c| c.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(mu * l)))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s = chunked_sum(logs, |l| (mu * l - peak).exp());
    peak + (s / logs.len() as f64).ln()
}

fn sample_log_abs(law: &dyn RandomLaw, n: usize, rng: RngState) -> Vec<f64> {
    let mut g = rng.generator();
    (0..n).map(|_| law.draw(&mut g).abs().ln()).collect()
}

fn abs_support_max(law: &dyn RandomLaw) -> f64 {
    let (lo, hi) = law.support();
    lo.abs().max(hi.abs())
}

/// Solves `E|a|^μ = 1` for `μ ∈ (0, mu_max]`.
///
/// The log-moment function is convex with value 0 and slope `E ln|a| < 0`
/// at the origin, so the positive root (when it exists) is the first upward
/// crossing of zero. It is bracketed on a grid and refined by bisection.
/// Monte Carlo evaluation reuses one sample for every `μ`, which keeps the
/// estimated function smooth and convex.
pub fn solve_exponent(
    a_law: &dyn RandomLaw,
    opts: SolverOptions,
    rng: RngState,
) -> Result<ExponentSolution> {
    if !(opts.mu_max > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::Config("mu_max and tol must be positive".into()));
    }
    let closed = !opts.force_monte_carlo && a_law.closed_abs_moment(1.0).is_some();
    let f = if closed {
        LogMomentFn::Closed(a_law)
    } else {
        if opts.mc_budget < 2 {
            return Err(Error::InsufficientData("mc_budget must be at least 2".into()));
        }
        LogMomentFn::Sample(sample_log_abs(a_law, opts.mc_budget, rng))
    };
    let method = if closed { MomentMethod::ClosedForm } else { MomentMethod::MonteCarlo };
    let mean_log_a = f.mean_log(a_law);
    if !(mean_log_a < 0.0) {
        return Err(Error::Precondition(format!(
            "E ln|a| = {mean_log_a:.6} is not negative: no stationary regime"
        )));
    }
    let no_root = |note: String| ExponentSolution {
        mu: None,
        residual: None,
        method,
        mean_log_a,
        note,
    };
    let exceeds_one = match &f {
        LogMomentFn::Closed(_) => abs_support_max(a_law) > 1.0,
        LogMomentFn::Sample(logs) => logs.iter().any(|l| *l > 0.0),
    };
    if !exceeds_one {
        return Ok(no_root("P(|a| > 1) = 0, so E|a|^mu < 1 for every mu > 0".into()));
    }

    // a Monte Carlo sample never sees E|a|^mu diverge at the tail exponent
    let mu_cap = match a_law.tail_class() {
        TailClass::PowerLaw(alpha) if alpha <= opts.mu_max => alpha,
        _ => f64::INFINITY,
    };
    let step = opts.mu_max.min(mu_cap) / SCAN_POINTS as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for j in 1..=SCAN_POINTS {
        let mu = step * j as f64;
        if mu >= mu_cap {
            break;
        }
        if f.eval(mu) > 0.0 {
            hi = Some(mu);
            break;
        }
        lo = mu;
    }
    let Some(mut hi) = hi else {
        return Ok(no_root(if mu_cap.is_finite() {
            format!("E|a|^mu < 1 below the tail exponent {mu_cap} of a, where it diverges")
        } else {
            format!("E|a|^mu < 1 on all of (0, {}]", opts.mu_max)
        }));
    };
    if lo == 0.0 {
        // the root lies below the first grid point; find a negative left end
        lo = hi;
        while f.eval(lo) >= 0.0 {
            lo /= 2.0;
            if lo < 1e-12 {
                return Err(Error::Numeric("cannot bracket the root near 0".into()));
            }
        }
    }
    let width_tol = (opts.tol * 1e-3).max(1e-13);
    while hi - lo > width_tol {
        let mid = 0.5 * (lo + hi);
        if f.eval(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let residual = f.eval(mu).exp() - 1.0;
    if residual.abs() >= opts.tol {
        // E|a|^mu jumps from below 1 to +inf at the tail exponent of a
        return Ok(no_root(format!(
            "E|a|^mu stays below 1 up to mu = {mu:.6}, where it diverges"
        )));
    }
    Ok(ExponentSolution {
        mu: Some(mu),
        residual: Some(residual),
        method,
        mean_log_a,
        note: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KestenReport {
    pub mu: f64,
    /// Present only when condition (i) passes at `mu`.
    pub mu_root: Option<f64>,
    /// `E|a|^μ = 1`.
    pub condition_i: Verdict,
    /// `E[|a|^μ ln⁺|a|] < ∞`.
    pub condition_ii: Verdict,
    /// `E|e|^μ < ∞`.
    pub condition_iii: Verdict,
    /// `ln|a|` nonarithmetic.
    pub condition_iv: Verdict,
    /// Unique stationary solution of the lagged recurrence.
    pub stationarity: Stationarity,
    /// `(1 - a)^-1 e` is a nonrandom constant: the tail constant is zero.
    pub degenerate: bool,
    pub nonnegative_a: bool,
    pub notes: Vec<String>,
}

impl KestenReport {
    pub fn all_pass(&self) -> bool {
        [self.condition_i, self.condition_ii, self.condition_iii, self.condition_iv]
            .iter()
            .all(|v| *v == Verdict::Pass)
            && self.stationarity == Stationarity::Stationary
            && !self.degenerate
    }
}

fn finiteness_verdict(
    tail: TailClass,
    p: f64,
    what: &str,
    probe_sample: impl FnOnce() -> Vec<f64>,
    notes: &mut Vec<String>,
) -> Verdict {
    match tail.moment_finite(p) {
        Some(true) => Verdict::Pass,
        Some(false) => {
            notes.push(format!("{what} diverges: tail exponent {tail:?} does not exceed {p}"));
            Verdict::Fail
        }
        None => match moment_probe(&probe_sample(), 1.0) {
            Ok(ProbeVerdict::Finite) => {
                notes.push(format!("{what} judged finite by the moment probe (heuristic)"));
                Verdict::Pass
            }
            Ok(ProbeVerdict::DivergentSuspected) => {
                notes.push(format!("{what}: moment probe suspects divergence"));
                Verdict::Undetermined
            }
            Err(e) => {
                notes.push(format!("{what}: {e}"));
                Verdict::Undetermined
            }
        },
    }
}

/// Evaluates the conditions of the Kesten–Goldie theorem at `mu` for
/// multiplier law `a_law` and input law `e_law`, plus stationarity and the
/// degenerate-solution case.
pub fn check_kesten(
    a_law: &dyn RandomLaw,
    e_law: &dyn RandomLaw,
    mu: f64,
    mc_budget: usize,
    rng: RngState,
) -> Result<KestenReport> {
    if !(mu > 0.0) {
        return Err(Error::Config(format!("mu must be positive, got {mu}")));
    }
    let mut notes = Vec::new();

    // (i)
    let condition_i = match a_law.closed_abs_moment(mu) {
        Some(MomentValue::Finite(m)) => {
            if (m - 1.0).abs() < 1e-6 {
                Verdict::Pass
            } else {
                notes.push(format!("E|a|^{mu} = {m:.6} != 1"));
                Verdict::Fail
            }
        }
        Some(MomentValue::Divergent) => {
            notes.push(format!("E|a|^{mu} diverges"));
            Verdict::Fail
        }
        None => {
            let mut g = rng.substream(1).generator();
            let (m, se) = mean_and_se((0..mc_budget.max(2)).map(|_| a_law.draw(&mut g).abs().powf(mu)));
            if 3.0 * se > 0.1 || !se.is_finite() {
                notes.push(format!("E|a|^{mu} = {m:.4} +- {se:.4}: too noisy to decide"));
                Verdict::Undetermined
            } else if (m - 1.0).abs() <= 3.0 * se.max(1e-12) {
                Verdict::Pass
            } else {
                notes.push(format!("E|a|^{mu} = {m:.6} +- {se:.6} != 1"));
                Verdict::Fail
            }
        }
    };
    let mu_root = if condition_i == Verdict::Pass {
        Some(mu)
    } else {
        let opts = SolverOptions {
            mc_budget,
            ..SolverOptions::default()
        };
        match solve_exponent(a_law, opts, rng.substream(2)) {
            Ok(ExponentSolution { mu: Some(root), .. }) => {
                notes.push(format!("the moment equation has its root at mu = {root:.6}"))
            }
            Ok(sol) => notes.push(format!("no root of E|a|^mu = 1: {}", sol.note)),
            Err(e) => notes.push(format!("exponent solver: {e}")),
        }
        None
    };

    // (ii) E[|a|^mu ln+|a|] is finite iff E|a|^(mu + d) is for small d > 0
    let condition_ii = finiteness_verdict(
        a_law.tail_class(),
        mu + 1e-9,
        "E[|a|^mu ln+|a|]",
        || {
            let mut g = rng.substream(3).generator();
            (0..mc_budget.max(2))
                .map(|_| {
                    let a = a_law.draw(&mut g).abs();
                    a.powf(mu) * a.ln().max(0.0)
                })
                .collect()
        },
        &mut notes,
    );

    // (iii)
    let condition_iii = finiteness_verdict(
        e_law.tail_class(),
        mu,
        "E|e|^mu",
        || {
            let mut g = rng.substream(4).generator();
            (0..mc_budget.max(2)).map(|_| e_law.draw(&mut g).abs().powf(mu)).collect()
        },
        &mut notes,
    );

    // (iv) structural: no finite sample tells a lattice from a fine continuum
    let condition_iv = if a_law.log_lattice() {
        notes.push(format!(
            "ln|a| is arithmetic for {}; wrap it as jittered(..., s) to restore a nonarithmetic law",
            a_law.describe()
        ));
        Verdict::Fail
    } else {
        Verdict::Pass
    };

    let stationarity = stationarity_of(a_law, e_law, mc_budget.max(2), rng.substream(5))?.verdict;

    let degenerate = match (a_law.constant_value(), e_law.constant_value()) {
        (Some(a), Some(_)) if a != 1.0 => true,
        (Some(a), None) if a == 0.0 => false,
        _ => false,
    };
    if degenerate {
        notes.push("(1 - a)^-1 e is a nonrandom constant: trivial tail, C = 0".into());
    }
    let nonnegative_a = a_law.support().0 >= 0.0;

    Ok(KestenReport {
        mu,
        mu_root,
        condition_i,
        condition_ii,
        condition_iii,
        condition_iv,
        stationarity,
        degenerate,
        nonnegative_a,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrinceviciusPrediction {
    /// `E(a^μ_e)`.
    pub moment: f64,
    /// `lim P(r > x) / P(e > x) = (1 - E a^μ_e)^-1`.
    pub tail_ratio: f64,
    /// `lim P(r > x) / P(b > x) = E(a^μ_e) (1 - E a^μ_e)^-1` when `e = a b`.
    pub amplification: f64,
    pub coupled: bool,
    pub method: MomentMethod,
}

/// Tail ratio and amplification from `m = E(a^μ_e)`.
pub fn grincevicius_from_moment(m: f64) -> Result<(f64, f64)> {
    if !(m >= 0.0 && m < 1.0) {
        return Err(Error::TheoremInapplicable(format!(
            "requires 0 <= E(a^mu_e) < 1, got {m}"
        )));
    }
    let tail_ratio = 1.0 / (1.0 - m);
    Ok((tail_ratio, m * tail_ratio))
}

/// Tail prediction when the input is power-law with exponent `mu_e` and
/// wilder than the feedback (`E(a^μ_e) < 1`).
pub fn grincevicius_predict(
    a_law: &dyn RandomLaw,
    mu_e: f64,
    coupled: bool,
    mc_budget: usize,
    rng: RngState,
) -> Result<GrinceviciusPrediction> {
    if !(mu_e > 0.0) {
        return Err(Error::Config(format!("mu_e must be positive, got {mu_e}")));
    }
    if a_law.support().0 < 0.0 {
        return Err(Error::TheoremInapplicable("requires P(a >= 0) = 1".into()));
    }
    if let TailClass::PowerLaw(alpha) = a_law.tail_class() {
        if alpha <= mu_e {
            return Err(Error::TheoremInapplicable(format!(
                "requires E(a^d) < inf for some d > mu_e; a has tail exponent {alpha}"
            )));
        }
    }
    let (moment, method) = match a_law.closed_abs_moment(mu_e) {
        Some(MomentValue::Finite(m)) => (m, MomentMethod::ClosedForm),
        Some(MomentValue::Divergent) => {
            return Err(Error::TheoremInapplicable(format!("E(a^{mu_e}) diverges")))
        }
        None => {
            let mut g = rng.generator();
            let (m, _) = mean_and_se((0..mc_budget.max(2)).map(|_| a_law.draw(&mut g).abs().powf(mu_e)));
            (m, MomentMethod::MonteCarlo)
        }
    };
    let (tail_ratio, amplification) = grincevicius_from_moment(moment)?;
    Ok(GrinceviciusPrediction {
        moment,
        tail_ratio,
        amplification,
        coupled,
        method,
    })
}

/// `P̂(r > x) / P̂(e > x)` at `x` the `quantile` of the input sample.
pub fn empirical_tail_ratio(r: &[f64], e: &[f64], quantile: f64) -> Result<f64> {
    if e.is_empty() || r.is_empty() || !(0.0..1.0).contains(&quantile) {
        return Err(Error::InsufficientData("need samples and a quantile in [0, 1)".into()));
    }
    let mut sorted = e.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let x = sorted[((quantile * sorted.len() as f64) as usize).min(sorted.len() - 1)];
    let pe = e.iter().filter(|v| **v > x).count() as f64 / e.len() as f64;
    let pr = r.iter().filter(|v| **v > x).count() as f64 / r.len() as f64;
    if pe == 0.0 {
        return Err(Error::InsufficientData(format!("no input exceeds {x}")));
    }
    Ok(pr / pe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyVerdict {
    ConsistentWithData,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyCheck {
    pub verdict: LevyVerdict,
    pub caveat: Option<String>,
}

/// Independent infinite-variance opinions average to a Lévy law of index
/// `theta_exponent < 2`, which would force the return exponent below 2.
pub fn levy_regime_check(theta_exponent: f64) -> LevyCheck {
    if theta_exponent < 2.0 {
        LevyCheck {
            verdict: LevyVerdict::Inconsistent,
            caveat: None,
        }
    } else if theta_exponent == 2.0 {
        LevyCheck {
            verdict: LevyVerdict::ConsistentWithData,
            caveat: Some("exponent exactly 2 is the finite-variance boundary".into()),
        }
    } else {
        LevyCheck {
            verdict: LevyVerdict::ConsistentWithData,
            caveat: None,
        }
    }
}
