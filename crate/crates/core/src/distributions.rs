//! Parametric laws for the random inputs of every model in the crate.
//!
//! A [`DistributionSpec`] is a small value type with a textual form
//! (`uniform(0, 2)`, `jittered(two_point(2, 0.2, 0.5), 0.01)`) used in
//! scenario files. Besides sampling it knows, per family, the closed-form
//! absolute moments `E|X|^p`, the log-moment `E ln|X|`, the support and the
//! tail class; the Kesten machinery consumes those through [`RandomLaw`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RngState, StreamRng};

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistributionSpec {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// `P(X > x) = (x / x_min)^(-exponent)` for `x >= x_min`.
    Pareto { exponent: f64, x_min: f64 },
    /// `v1` with probability `p1`, otherwise `v2`.
    TwoPoint { v1: f64, p1: f64, v2: f64 },
    Scaled { base: Box<DistributionSpec>, factor: f64 },
    /// `base * exp(jitter_sd * Z)` with `Z` standard normal.
    Jittered { base: Box<DistributionSpec>, jitter_sd: f64 },
}

/// Tail behaviour of a law, as far as moment finiteness is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", content = "exponent", rename_all = "snake_case")]
pub enum TailClass {
    /// Compact support.
    Bounded,
    /// Unbounded but every absolute moment is finite.
    Light,
    /// `E|X|^p` is finite exactly for `p < exponent`.
    PowerLaw(f64),
    /// Nothing is known structurally.
    Unknown,
}

impl TailClass {
    /// Whether `E|X|^p` is finite, or `None` when unknown.
    pub fn moment_finite(&self, p: f64) -> Option<bool> {
        match self {
            TailClass::Bounded | TailClass::Light => Some(true),
            TailClass::PowerLaw(mu) => Some(p < *mu),
            TailClass::Unknown => None,
        }
    }

    /// Tail of the product of two independent variables.
    pub fn product(self, other: TailClass) -> TailClass {
        use TailClass::*;
        match (self, other) {
            (Unknown, _) | (_, Unknown) => Unknown,
            (PowerLaw(a), PowerLaw(b)) => PowerLaw(a.min(b)),
            (PowerLaw(a), _) | (_, PowerLaw(a)) => PowerLaw(a),
            (Bounded, Bounded) => Bounded,
            _ => Light,
        }
    }
}

/// Closed-form value of an absolute moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentValue {
    Finite(f64),
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ClosedForm,
    MonteCarlo,
}

/// Result of [`DistributionSpec::moment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Moment {
    Finite {
        value: f64,
        std_error: f64,
        method: MomentMethod,
    },
    Divergent,
}

impl Moment {
    pub fn value(&self) -> Option<f64> {
        match self {
            Moment::Finite { value, .. } => Some(*value),
            Moment::Divergent => None,
        }
    }
}

/// A scalar random law as seen by the recurrence and Kesten machinery.
///
/// Every method except [`RandomLaw::draw`] is optional structural knowledge;
/// the defaults say "unknown" and callers fall back to Monte Carlo.
pub trait RandomLaw: Sync {
    fn draw(&self, rng: &mut StreamRng) -> f64;

    /// Closed-form `E|X|^p`, if the family has one.
    fn closed_abs_moment(&self, _p: f64) -> Option<MomentValue> {
        None
    }

    /// Closed-form `E ln|X|` (may be `-inf`).
    fn closed_mean_log_abs(&self) -> Option<f64> {
        None
    }

    fn tail_class(&self) -> TailClass {
        TailClass::Unknown
    }

    /// True when `ln|X|` (given `X != 0`) lives on a lattice.
    fn log_lattice(&self) -> bool {
        false
    }

    /// `(inf, sup)` of the support.
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// The value of a degenerate law.
    fn constant_value(&self) -> Option<f64> {
        None
    }

    fn describe(&self) -> String;
}

impl DistributionSpec {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        Self::Normal { mean, sd }
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Self {
        Self::LogNormal { mu, sigma }
    }

    pub fn pareto(exponent: f64, x_min: f64) -> Self {
        Self::Pareto { exponent, x_min }
    }

    pub fn two_point(v1: f64, p1: f64, v2: f64) -> Self {
        Self::TwoPoint { v1, p1, v2 }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled {
            base: Box::new(self),
            factor,
        }
    }

    pub fn jittered(self, jitter_sd: f64) -> Self {
        Self::Jittered {
            base: Box::new(self),
            jitter_sd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{self}: {msg}")));
        let params: Vec<f64> = match self {
            Self::Constant(c) => vec![*c],
            Self::Uniform { lo, hi } => vec![*lo, *hi],
            Self::Normal { mean, sd } => vec![*mean, *sd],
            Self::LogNormal { mu, sigma } => vec![*mu, *sigma],
            Self::Pareto { exponent, x_min } => vec![*exponent, *x_min],
            Self::TwoPoint { v1, p1, v2 } => vec![*v1, *p1, *v2],
            Self::Scaled { factor, .. } => vec![*factor],
            Self::Jittered { jitter_sd, .. } => vec![*jitter_sd],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return bad("parameters must be finite".into());
        }
        match self {
            Self::Uniform { lo, hi } if lo >= hi => bad("uniform requires lo < hi".into()),
            Self::Normal { sd, .. } if *sd <= 0.0 => bad("normal requires sd > 0".into()),
            Self::LogNormal { sigma, .. } if *sigma <= 0.0 => {
                bad("lognormal requires sigma > 0".into())
            }
            Self::Pareto { exponent, x_min } if *exponent <= 0.0 || *x_min <= 0.0 => {
                bad("pareto requires exponent > 0 and x_min > 0".into())
            }
            Self::TwoPoint { p1, .. } if !(0.0..=1.0).contains(p1) => {
                bad("two_point requires 0 <= p1 <= 1".into())
            }
            Self::Scaled { base, .. } => base.validate(),
            Self::Jittered { base, jitter_sd } => {
                if *jitter_sd <= 0.0 {
                    return bad("jittered requires jitter_sd > 0".into());
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            Self::LogNormal { mu, sigma } => (mu + sigma * rng.sample::<f64, _>(StandardNormal)).exp(),
            Self::Pareto { exponent, x_min } => {
                let u = 1.0 - rng.random::<f64>();
                x_min * u.powf(-1.0 / exponent)
            }
            Self::TwoPoint { v1, p1, v2 } => {
                if rng.random::<f64>() < *p1 {
                    *v1
                } else {
                    *v2
                }
            }
            Self::Scaled { base, factor } => factor * base.sample(rng),
            Self::Jittered { base, jitter_sd } => {
                let x = base.sample(rng);
                x * (jitter_sd * rng.sample::<f64, _>(StandardNormal)).exp()
            }
        }
    }

    /// Draws a count as the ceiling of a continuous draw, floored at 1.
    pub fn sample_count(&self, rng: &mut StreamRng) -> u64 {
        let x = self.sample(rng).ceil();
        if x.is_finite() && x >= 1.0 {
            x.min(u64::MAX as f64) as u64
        } else {
            1
        }
    }

    pub fn sample_n(&self, n: usize, rng: &mut StreamRng) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// `E|X|^p`: closed form when the family admits one, otherwise a Monte
    /// Carlo mean over `mc_budget` draws from `rng` with its standard error.
    pub fn moment(&self, p: f64, mc_budget: usize, rng: RngState) -> Result<Moment> {
        if p.is_nan() || p < 0.0 {
            return Err(Error::Unsupported(format!(
                "moment order must be >= 0, got {p}"
            )));
        }
        self.validate()?;
        match self.closed_abs_moment(p) {
            Some(MomentValue::Finite(value)) => Ok(Moment::Finite {
                value,
                std_error: 0.0,
                method: MomentMethod::ClosedForm,
            }),
            Some(MomentValue::Divergent) => Ok(Moment::Divergent),
            None => self.moment_monte_carlo(p, mc_budget, rng),
        }
    }

    /// Monte Carlo `E|X|^p` regardless of closed-form availability.
    pub fn moment_monte_carlo(&self, p: f64, mc_budget: usize, rng: RngState) -> Result<Moment> {
        if p.is_nan() || p < 0.0 {
            return Err(Error::Unsupported(format!(
                "moment order must be >= 0, got {p}"
            )));
        }
        if mc_budget < 2 {
            return Err(Error::InsufficientData("mc_budget must be at least 2".into()));
        }
        if let Some(false) = self.tail_class().moment_finite(p) {
            return Ok(Moment::Divergent);
        }
        let mut g = rng.generator();
        let (mean, se) = mean_and_se((0..mc_budget).map(|_| abs_pow(self.sample(&mut g), p)));
        Ok(Moment::Finite {
            value: mean,
            std_error: se,
            method: MomentMethod::MonteCarlo,
        })
    }

    fn closed_abs_moment_impl(&self, p: f64) -> Option<MomentValue> {
        use MomentValue::*;
        Some(match self {
            Self::Constant(c) => Finite(abs_pow(*c, p)),
            Self::Uniform { lo, hi } => {
                let g = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
                Finite((g(*hi) - g(*lo)) / (hi - lo))
            }
            Self::Normal { mean, sd } => {
                if *mean != 0.0 {
                    return None;
                }
                let gamma = statrs::function::gamma::gamma((p + 1.0) / 2.0);
                Finite(sd.powf(p) * 2f64.powf(p / 2.0) * gamma / std::f64::consts::PI.sqrt())
            }
            Self::LogNormal { mu, sigma } => Finite((p * mu + 0.5 * p * p * sigma * sigma).exp()),
            Self::Pareto { exponent, x_min } => {
                if p >= *exponent {
                    Divergent
                } else {
                    Finite(exponent * x_min.powf(p) / (exponent - p))
                }
            }
            Self::TwoPoint { v1, p1, v2 } => {
                Finite(weighted(*p1, abs_pow(*v1, p), abs_pow(*v2, p)))
            }
            Self::Scaled { base, factor } => match base.closed_abs_moment_impl(p)? {
                Finite(m) => Finite(abs_pow(*factor, p) * m),
                Divergent => Divergent,
            },
            Self::Jittered { base, jitter_sd } => match base.closed_abs_moment_impl(p)? {
                Finite(m) => Finite(m * (0.5 * p * p * jitter_sd * jitter_sd).exp()),
                Divergent => Divergent,
            },
        })
    }

    fn closed_mean_log_abs_impl(&self) -> Option<f64> {
        Some(match self {
            Self::Constant(c) => c.abs().ln(),
            Self::Uniform { lo, hi } => {
                // antiderivative of ln|x|, continuous through 0
                let f = |x: f64| if x == 0.0 { 0.0 } else { x * x.abs().ln() - x };
                (f(*hi) - f(*lo)) / (hi - lo)
            }
            Self::Normal { mean, sd } => {
                if *mean != 0.0 {
                    return None;
                }
                sd.ln() - 0.5 * (EULER_GAMMA + std::f64::consts::LN_2)
            }
            Self::LogNormal { mu, .. } => *mu,
            Self::Pareto { exponent, x_min } => x_min.ln() + 1.0 / exponent,
            Self::TwoPoint { v1, p1, v2 } => weighted(*p1, v1.abs().ln(), v2.abs().ln()),
            Self::Scaled { base, factor } => factor.abs().ln() + base.closed_mean_log_abs_impl()?,
            Self::Jittered { base, .. } => base.closed_mean_log_abs_impl()?,
        })
    }

    fn support_impl(&self) -> (f64, f64) {
        match self {
            Self::Constant(c) => (*c, *c),
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::LogNormal { .. } => (0.0, f64::INFINITY),
            Self::Pareto { x_min, .. } => (*x_min, f64::INFINITY),
            Self::TwoPoint { v1, p1, v2 } => {
                let mut pts = Vec::with_capacity(2);
                if *p1 > 0.0 {
                    pts.push(*v1);
                }
                if *p1 < 1.0 {
                    pts.push(*v2);
                }
                let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Self::Scaled { base, factor } => {
                let (lo, hi) = base.support_impl();
                let (a, b) = (scale_bound(*factor, lo), scale_bound(*factor, hi));
                (a.min(b), a.max(b))
            }
            Self::Jittered { base, .. } => {
                let (lo, hi) = base.support_impl();
                let lo = if lo >= 0.0 { 0.0 } else { f64::NEG_INFINITY };
                let hi = if hi <= 0.0 { 0.0 } else { f64::INFINITY };
                (lo, hi)
            }
        }
    }

    fn tail_class_impl(&self) -> TailClass {
        match self {
            Self::Constant(_) | Self::Uniform { .. } | Self::TwoPoint { .. } => TailClass::Bounded,
            Self::Normal { .. } | Self::LogNormal { .. } => TailClass::Light,
            Self::Pareto { exponent, .. } => TailClass::PowerLaw(*exponent),
            Self::Scaled { base, .. } => base.tail_class_impl(),
            Self::Jittered { base, .. } => base.tail_class_impl().product(TailClass::Light),
        }
    }

    fn constant_impl(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            Self::TwoPoint { v1, p1, v2 } if *p1 == 1.0 || v1 == v2 => Some(*v1),
            Self::TwoPoint { p1, v2, .. } if *p1 == 0.0 => Some(*v2),
            Self::Scaled { base, factor } => base.constant_impl().map(|c| c * factor),
            Self::Jittered { base, .. } => base.constant_impl().filter(|c| *c == 0.0),
            _ => None,
        }
    }
}

fn scale_bound(factor: f64, bound: f64) -> f64 {
    if factor == 0.0 {
        0.0
    } else {
        factor * bound
    }
}

/// A function of a count whose expectation has a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CountFn {
    /// `C^p`.
    Pow(f64),
    /// `ln C`.
    Log,
}

impl CountFn {
    fn at(self, n: f64) -> f64 {
        match self {
            CountFn::Pow(p) => abs_pow(n, p),
            CountFn::Log => n.ln(),
        }
    }
}

/// Terms summed exactly before switching to the asymptotic tail.
const COUNT_SUM_TERMS: usize = 20_000;

/// `E h(C)` for `C = max(1, ceil(X))`, `X` Pareto. Exact sum over the first
/// counts, then Euler-Maclaurin on the expansion of the count probabilities
/// `x_min^α ((n-1)^-α - n^-α) = x_min^α Σ_k c_k n^(-α-k)`.
fn pareto_count_expectation(alpha: f64, x_min: f64, h: CountFn) -> MomentValue {
    if let CountFn::Pow(p) = h {
        if p >= alpha {
            return MomentValue::Divergent;
        }
    }
    let n0 = x_min.ceil().max(1.0);
    let scale = x_min.powf(alpha);
    // P(C = n) for n > n0, stable for large n
    let prob = |n: f64| scale * n.powf(-alpha) * (-alpha * (-1.0 / n).ln_1p()).exp_m1();
    let mut total = h.at(n0) * (1.0 - (n0 / x_min).powf(-alpha).min(1.0));
    let end = n0 + COUNT_SUM_TERMS as f64;
    let mut n = n0 + 1.0;
    while n < end {
        total += h.at(n) * prob(n);
        n += 1.0;
    }
    // Σ_{n >= M} h(n) n^-s ≈ ∫_M^∞ + f(M)/2 - f'(M)/12
    let m = end;
    let (lm, mut c) = (m.ln(), alpha);
    for k in 1..=8 {
        let s = alpha + k as f64;
        let tail = match h {
            CountFn::Pow(p) => {
                let e = p - s;
                -m.powf(e + 1.0) / (e + 1.0) + m.powf(e) / 2.0 - e * m.powf(e - 1.0) / 12.0
            }
            CountFn::Log => {
                let w = m.powf(1.0 - s);
                w * (lm / (s - 1.0) + 1.0 / ((s - 1.0) * (s - 1.0)))
                    + lm * m.powf(-s) / 2.0
                    - m.powf(-s - 1.0) * (1.0 - s * lm) / 12.0
            }
        };
        total += scale * c * tail;
        c *= (alpha + k as f64) / (k as f64 + 1.0);
    }
    MomentValue::Finite(total)
}

impl DistributionSpec {
    /// `E h(C)` in closed form for the count `C` drawn by [`sample_count`](Self::sample_count).
    pub fn count_expectation(&self, h: CountFn) -> Option<MomentValue> {
        let count = |x: f64| x.ceil().max(1.0);
        match self {
            Self::Constant(c) => Some(MomentValue::Finite(h.at(count(*c)))),
            Self::TwoPoint { v1, p1, v2 } => {
                Some(MomentValue::Finite(weighted(*p1, h.at(count(*v1)), h.at(count(*v2)))))
            }
            Self::Pareto { exponent, x_min } => Some(pareto_count_expectation(*exponent, *x_min, h)),
            Self::Scaled { base, factor } if *factor > 0.0 => match base.as_ref() {
                Self::Pareto { exponent, x_min } => Some(pareto_count_expectation(*exponent, x_min * factor, h)),
                _ => None,
            },
            _ => None,
        }
    }

    /// `E X^-p` for a law supported on `(0, inf)`.
    pub fn inverse_moment(&self, p: f64) -> Option<f64> {
        match self {
            Self::Constant(c) if *c > 0.0 => Some(c.powf(-p)),
            Self::Uniform { lo, hi } if *lo > 0.0 => Some(if (1.0 - p).abs() < 1e-12 {
                (hi / lo).ln() / (hi - lo)
            } else {
                (hi.powf(1.0 - p) - lo.powf(1.0 - p)) / ((1.0 - p) * (hi - lo))
            }),
            Self::LogNormal { mu, sigma } => Some((-p * mu + 0.5 * p * p * sigma * sigma).exp()),
            Self::Pareto { exponent, x_min } => Some(exponent * x_min.powf(-p) / (exponent + p)),
            Self::TwoPoint { v1, p1, v2 } if *v1 > 0.0 && *v2 > 0.0 => {
                Some(weighted(*p1, v1.powf(-p), v2.powf(-p)))
            }
            Self::Scaled { base, factor } if *factor > 0.0 => base.inverse_moment(p).map(|m| m * factor.powf(-p)),
            Self::Jittered { base, jitter_sd } => {
                base.inverse_moment(p).map(|m| m * (0.5 * p * p * jitter_sd * jitter_sd).exp())
            }
            _ => None,
        }
    }
}

fn weighted(p1: f64, x1: f64, x2: f64) -> f64 {
    // skip zero-probability points so that e.g. 0 * ln 0 does not poison the sum
    match (p1 > 0.0, p1 < 1.0) {
        (true, true) => p1 * x1 + (1.0 - p1) * x2,
        (true, false) => x1,
        _ => x2,
    }
}

/// `|x|^p` with the convention `0^0 = 1`.
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        x.abs().powf(p)
    }
}

pub(crate) fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    // Welford
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = m2 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl RandomLaw for DistributionSpec {
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        self.sample(rng)
    }

    fn closed_abs_moment(&self, p: f64) -> Option<MomentValue> {
        self.closed_abs_moment_impl(p)
    }

    fn closed_mean_log_abs(&self) -> Option<f64> {
        self.closed_mean_log_abs_impl()
    }

    fn tail_class(&self) -> TailClass {
        self.tail_class_impl()
    }

    fn log_lattice(&self) -> bool {
        match self {
            Self::Constant(_) | Self::TwoPoint { .. } => true,
            Self::Scaled { base, .. } => base.log_lattice(),
            _ => false,
        }
    }

    fn support(&self) -> (f64, f64) {
        self.support_impl()
    }

    fn constant_value(&self) -> Option<f64> {
        self.constant_impl()
    }

    fn describe(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "constant({c})"),
            Self::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
            Self::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
            Self::LogNormal { mu, sigma } => write!(f, "lognormal({mu}, {sigma})"),
            Self::Pareto { exponent, x_min } => write!(f, "pareto({exponent}, {x_min})"),
            Self::TwoPoint { v1, p1, v2 } => write!(f, "two_point({v1}, {p1}, {v2})"),
            Self::Scaled { base, factor } => write!(f, "scaled({base}, {factor})"),
            Self::Jittered { base, jitter_sd } => write!(f, "jittered({base}, {jitter_sd})"),
        }
    }
}

impl From<DistributionSpec> for String {
    fn from(spec: DistributionSpec) -> String {
        spec.to_string()
    }
}

impl TryFrom<String> for DistributionSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Parses and validates `kind(arg, ...)`; arguments are numbers or nested specs.
    fn from_str(s: &str) -> Result<Self> {
        let mut parser = SpecParser { src: s, pos: 0 };
        let spec = parser.spec()?;
        parser.skip_ws();
        if parser.pos != s.len() {
            return Err(parser.err("trailing input"));
        }
        spec.validate()?;
        Ok(spec)
    }
}

enum Arg {
    Num(f64),
    Spec(DistributionSpec),
}

struct SpecParser<'a> {
    src: &'a str,
    pos: usize,
}

impl SpecParser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Config(format!(
            "cannot parse distribution `{}` at offset {}: {msg}",
            self.src, self.pos
        ))
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn eat(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<&str> {
        self.skip_ws();
        let start = self.pos;
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(self.err("expected distribution name"));
        }
        self.pos += len;
        Ok(&self.src[start..start + len])
    }

    fn arg(&mut self) -> Result<Arg> {
        self.skip_ws();
        if self.rest().starts_with(|c: char| c.is_ascii_alphabetic()) {
            return self.spec().map(Arg::Spec);
        }
        let len = self
            .rest()
            .find(|c: char| c == ',' || c == ')' || c.is_whitespace())
            .unwrap_or(self.rest().len());
        let tok = &self.rest()[..len];
        let x: f64 = tok
            .parse()
            .map_err(|_| self.err(&format!("invalid number `{tok}`")))?;
        self.pos += len;
        Ok(Arg::Num(x))
    }

    fn spec(&mut self) -> Result<DistributionSpec> {
        let name = self.ident()?.to_ascii_lowercase();
        self.eat('(')?;
        let mut args = Vec::new();
        self.skip_ws();
        if !self.rest().starts_with(')') {
            loop {
                args.push(self.arg()?);
                self.skip_ws();
                if self.rest().starts_with(',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.eat(')')?;
        self.build(&name, args)
    }

    fn build(&self, name: &str, args: Vec<Arg>) -> Result<DistributionSpec> {
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(self.err(&format!("`{name}` takes {n} arguments, got {}", args.len())))
            }
        };
        let num = |i: usize| match &args[i] {
            Arg::Num(x) => Ok(*x),
            Arg::Spec(_) => Err(self.err(&format!("argument {} of `{name}` must be a number", i + 1))),
        };
        let base = |i: usize| match &args[i] {
            Arg::Spec(s) => Ok(Box::new(s.clone())),
            Arg::Num(_) => Err(self.err(&format!("argument {} of `{name}` must be a distribution", i + 1))),
        };
        Ok(match name {
            "constant" => {
                arity(1)?;
                DistributionSpec::Constant(num(0)?)
            }
            "uniform" => {
                arity(2)?;
                DistributionSpec::Uniform { lo: num(0)?, hi: num(1)? }
            }
            "normal" => {
                arity(2)?;
                DistributionSpec::Normal { mean: num(0)?, sd: num(1)? }
            }
            "lognormal" => {
                arity(2)?;
                DistributionSpec::LogNormal { mu: num(0)?, sigma: num(1)? }
            }
            "pareto" => {
                arity(2)?;
                DistributionSpec::Pareto { exponent: num(0)?, x_min: num(1)? }
            }
            "two_point" => {
                arity(3)?;
                DistributionSpec::TwoPoint { v1: num(0)?, p1: num(1)?, v2: num(2)? }
            }
            "scaled" => {
                arity(2)?;
                DistributionSpec::Scaled { base: base(0)?, factor: num(1)? }
            }
            "jittered" => {
                arity(2)?;
                DistributionSpec::Jittered { base: base(0)?, jitter_sd: num(1)? }
            }
            other => return Err(self.err(&format!("unknown distribution `{other}`"))),
        })
    }
}
