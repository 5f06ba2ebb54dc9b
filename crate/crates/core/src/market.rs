//! The agent-based speculative market: individual demands, aggregate excess
//! demand, and price formation by market clearing or linear price impact.

use serde::{Deserialize, Serialize};

use crate::distributions::{abs_pow, mean_and_se, CountFn, DistributionSpec, MomentValue, RandomLaw, TailClass};
use crate::error::{Error, Result};
use crate::rng::{RngState, StreamRng};
use crate::tail::{hill_band_series, PositiveSample, StabilityBand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceRule {
    /// Demand and supply match instantaneously: `q(r*) = 0`.
    Clearing,
    /// `r = β q / L`.
    Impact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model", content = "law")]
pub enum ExpectationModel {
    /// Expected returns deviate from the realized return by `ε_it`.
    PredictionError(DistributionSpec),
    /// `r^e_it = r_{t-1} + θ_it`.
    Confidence(DistributionSpec),
}

impl ExpectationModel {
    pub fn law(&self) -> &DistributionSpec {
        match self {
            ExpectationModel::PredictionError(l) | ExpectationModel::Confidence(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandSign {
    /// `q_i = α r^e + γ φ`.
    Speculative,
    /// `q_i = γ φ - α r`.
    LawOfDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub price_rule: PriceRule,
    pub expectation: ExpectationModel,
    pub fundamental_value: f64,
    /// Law of `F_it - F`.
    pub guess_law: DistributionSpec,
    /// Order count per step, sampled as a ceiling.
    pub n_law: DistributionSpec,
    pub l_law: DistributionSpec,
    pub p0: f64,
    pub demand_sign: DemandSign,
}

impl MarketConfig {
    /// A purely speculative clearing market with `N` fixed and exact guesses.
    pub fn clearing(eps_law: DistributionSpec, n: f64) -> Self {
        Self {
            alpha: 1.0,
            gamma: 0.0,
            beta: 0.5,
            price_rule: PriceRule::Clearing,
            expectation: ExpectationModel::PredictionError(eps_law),
            fundamental_value: 100.0,
            guess_law: DistributionSpec::Constant(0.0),
            n_law: DistributionSpec::Constant(n),
            l_law: DistributionSpec::Constant(1.0),
            p0: 100.0,
            demand_sign: DemandSign::Speculative,
        }
    }

    /// `ρ = γ / α`.
    pub fn rho(&self) -> f64 {
        self.gamma / self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.fundamental_value > 0.0) || !(self.p0 > 0.0) {
            return Err(Error::Config("fundamental_value and p0 must be positive".into()));
        }
        for law in [self.expectation.law(), &self.guess_law, &self.n_law, &self.l_law] {
            law.validate()?;
        }
        let l_min = self.l_law.support().0;
        if !(l_min > 0.0) {
            return Err(Error::Liquidity(l_min));
        }
        if self.price_rule == PriceRule::Clearing
            && self.demand_sign == DemandSign::Speculative
            && matches!(self.expectation, ExpectationModel::Confidence(_))
        {
            return Err(Error::Config(
                "the confidence model has no clearing return: demand does not depend on r_t".into(),
            ));
        }
        Ok(())
    }

    /// The law of the feedback coefficient `a = α β N / L`.
    pub fn multiplier_law(&self) -> MarketMultiplierLaw<'_> {
        MarketMultiplierLaw(self)
    }

    /// The law of the input `e = a b` of the lagged recurrence, with prices at
    /// the fundamental value.
    pub fn input_law(&self) -> MarketInputLaw<'_> {
        MarketInputLaw(self)
    }

    fn draw_n_l(&self, rng: &mut StreamRng) -> (u64, f64) {
        let n = self.n_law.sample_count(rng);
        let l = self.l_law.sample(rng);
        (n, l)
    }
}

pub fn individual_demand(expected_return: f64, value_gap: f64, cfg: &MarketConfig) -> f64 {
    match cfg.demand_sign {
        DemandSign::Speculative => cfg.alpha * expected_return + cfg.gamma * value_gap,
        DemandSign::LawOfDemand => cfg.gamma * value_gap - cfg.alpha * expected_return,
    }
}

/// `r* = ε̄ - ρ φ̄`.
pub fn clearing_return(eps_bar: f64, phi_bar: f64, rho: f64) -> f64 {
    eps_bar - rho * phi_bar
}

/// `r = β q / L`.
pub fn impact_return(q: f64, l: f64, beta: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::Liquidity(l));
    }
    Ok(beta * q / l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessDemand {
    pub q: f64,
    /// Behavioral impulse: mean expectation term plus `ρ φ̄`.
    pub b: f64,
    /// `Σ |q_i|`.
    pub v: f64,
}

/// Agent `i`'s expected return given the reference return `r` (realized, or
/// the previous one under the confidence model) and its expectation term.
fn expected_return(cfg: &MarketConfig, r: f64, term: f64) -> f64 {
    match (&cfg.expectation, cfg.price_rule) {
        // ε = r - r^e in the clearing derivation, ε = r^e - r with price impact
        (ExpectationModel::PredictionError(_), PriceRule::Clearing) => r - term,
        (ExpectationModel::PredictionError(_), PriceRule::Impact) => r + term,
        (ExpectationModel::Confidence(_), _) => r + term,
    }
}

fn agent_demand(cfg: &MarketConfig, r: f64, term: f64, phi: f64) -> f64 {
    match cfg.demand_sign {
        DemandSign::Speculative => individual_demand(expected_return(cfg, r, term), phi, cfg),
        DemandSign::LawOfDemand => individual_demand(r, phi, cfg),
    }
}

/// Aggregates explicit per-agent expectation terms and value gaps at return `r`.
pub fn excess_demand_from_agents(cfg: &MarketConfig, r: f64, terms: &[f64], gaps: &[f64]) -> Result<ExcessDemand> {
    if terms.is_empty() || terms.len() != gaps.len() {
        return Err(Error::Config("need N >= 1 paired expectation terms and value gaps".into()));
    }
    let (mut q, mut v) = (0.0, 0.0);
    for (t, g) in terms.iter().zip(gaps) {
        let qi = agent_demand(cfg, r, *t, *g);
        q += qi;
        v += qi.abs();
    }
    let n = terms.len() as f64;
    let b = terms.iter().sum::<f64>() / n + cfg.rho() * gaps.iter().sum::<f64>() / n;
    Ok(ExcessDemand { q, b, v })
}

/// Draws `n` agents at price `price` and aggregates their demands at return `r`.
pub fn aggregate_excess_demand(
    cfg: &MarketConfig,
    r: f64,
    n: u64,
    price: f64,
    rng: &mut StreamRng,
) -> Result<ExcessDemand> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    let mut terms = Vec::with_capacity(n as usize);
    let mut gaps = Vec::with_capacity(n as usize);
    draw_agents(cfg, n, price, rng, &mut terms, &mut gaps);
    excess_demand_from_agents(cfg, r, &terms, &gaps)
}

fn draw_agents(cfg: &MarketConfig, n: u64, price: f64, rng: &mut StreamRng, terms: &mut Vec<f64>, gaps: &mut Vec<f64>) {
    terms.clear();
    gaps.clear();
    let law = cfg.expectation.law();
    for _ in 0..n {
        terms.push(law.sample(rng));
        let guess = cfg.fundamental_value + cfg.guess_law.sample(rng);
        gaps.push((guess - price) / price);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketStep {
    /// Price at the start of the step.
    pub p: f64,
    /// `(P_{t+1} - P_t) / P_t`.
    pub r: f64,
    pub q: f64,
    /// Order count; also the trade count.
    pub n: u64,
    pub l: f64,
    pub v: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketPath {
    pub steps: Vec<MarketStep>,
    /// Price after the last step.
    pub final_price: f64,
    pub seed: RngState,
    pub warnings: Vec<String>,
}

impl MarketPath {
    pub fn returns(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.r).collect()
    }

    pub fn excess_demand(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.q).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.v).collect()
    }

    /// CSV with header `t,P,r,q,N,L,v,b`, `t` from 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.steps.len() * 96 + 16);
        out.push_str("t,P,r,q,N,L,v,b\n");
        for (t, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{t},{},{},{},{},{},{},{}\n", s.p, s.r, s.q, s.n, s.l, s.v, s.b));
        }
        out
    }
}

/// `r` and aggregate `q` for one step given the agent means.
fn resolve_step(cfg: &MarketConfig, step: usize, n: u64, l: f64, term_bar: f64, phi_bar: f64, r_prev: f64) -> Result<(f64, f64)> {
    let nf = n as f64;
    let (alpha, gamma, beta) = (cfg.alpha, cfg.gamma, cfg.beta);
    let a = alpha * beta * nf / l;
    Ok(match (cfg.price_rule, cfg.demand_sign, &cfg.expectation) {
        (PriceRule::Clearing, DemandSign::Speculative, ExpectationModel::PredictionError(_)) => {
            let r = clearing_return(term_bar, phi_bar, cfg.rho());
            (r, nf * (alpha * (r - term_bar) + gamma * phi_bar))
        }
        (PriceRule::Clearing, DemandSign::Speculative, ExpectationModel::Confidence(_)) => {
            unreachable!("rejected by validate")
        }
        (PriceRule::Clearing, DemandSign::LawOfDemand, _) => {
            let r = cfg.rho() * phi_bar;
            (r, nf * (gamma * phi_bar - alpha * r))
        }
        (PriceRule::Impact, DemandSign::Speculative, ExpectationModel::PredictionError(_)) => {
            if !(a < 1.0) {
                return Err(Error::FeedbackExplosion { step: Some(step), a });
            }
            let q = nf * (alpha * term_bar + gamma * phi_bar) / (1.0 - a);
            (impact_return(q, l, beta)?, q)
        }
        (PriceRule::Impact, DemandSign::Speculative, ExpectationModel::Confidence(_)) => {
            let q = nf * (alpha * (r_prev + term_bar) + gamma * phi_bar);
            (impact_return(q, l, beta)?, q)
        }
        (PriceRule::Impact, DemandSign::LawOfDemand, _) => {
            let q = nf * gamma * phi_bar / (1.0 + a);
            (impact_return(q, l, beta)?, q)
        }
    })
}

/// Runs the market for `length` steps from `P_0 = p0`, `r_{-1} = 0`.
pub fn simulate_market(cfg: &MarketConfig, length: usize, rng: RngState) -> Result<MarketPath> {
    cfg.validate()?;
    if length == 0 {
        return Err(Error::Config("path length must be positive".into()));
    }
    let mut warnings = Vec::new();
    if cfg.price_rule == PriceRule::Impact {
        let mut g = rng.substream(0xa11a).generator();
        let law = cfg.multiplier_law();
        let (mean_a, se) = mean_and_se((0..10_000).map(|_| law.draw(&mut g)));
        if mean_a + 3.0 * se >= 1.0 {
            let msg = format!("E(a) = E(alpha beta N / L) estimated at {mean_a:.4} +- {se:.4}, not clearly below 1");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut g = rng.generator();
    let (mut terms, mut gaps) = (Vec::new(), Vec::new());
    let mut steps = Vec::with_capacity(length);
    let mut price = cfg.p0;
    let mut r_prev = 0.0;
    for step in 0..length {
        let (n, l) = cfg.draw_n_l(&mut g);
        draw_agents(cfg, n, price, &mut g, &mut terms, &mut gaps);
        let nf = n as f64;
        let term_bar = terms.iter().sum::<f64>() / nf;
        let phi_bar = gaps.iter().sum::<f64>() / nf;
        let (r, q) = resolve_step(cfg, step, n, l, term_bar, phi_bar, r_prev)?;
        if !(r > -1.0) || !r.is_finite() {
            return Err(Error::PriceCollapse { step, r });
        }
        let reference = match cfg.expectation {
            ExpectationModel::Confidence(_) => r_prev,
            ExpectationModel::PredictionError(_) => r,
        };
        let v = terms
            .iter()
            .zip(&gaps)
            .map(|(t, p)| {
                let r_ref = if cfg.demand_sign == DemandSign::LawOfDemand { r } else { reference };
                agent_demand(cfg, r_ref, *t, *p).abs()
            })
            .sum();
        steps.push(MarketStep {
            p: price,
            r,
            q,
            n,
            l,
            v,
            b: term_bar + cfg.rho() * phi_bar,
        });
        price *= 1.0 + r;
        r_prev = r;
    }
    Ok(MarketPath {
        steps,
        final_price: price,
        seed: rng,
        warnings,
    })
}

/// `B_t = (1 + ρ)^t b0` for `t = 0..length`.
pub fn bubble_path(rho: f64, b0: f64, length: usize) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::Config("bubble path length must be at least 1".into()));
    }
    let g = 1.0 + rho;
    Ok((0..length).map(|t| g.powi(t as i32) * b0).collect())
}

/// `P_{t+1} = (1 - ρ) P_t + ρ f` from `P_0 = p0`; diverges when `|1 - ρ| > 1`.
pub fn negative_feedback_path(rho: f64, f: f64, p0: f64, length: usize) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::Config("path length must be at least 1".into()));
    }
    if !(rho > 0.0) || !(f > 0.0) {
        return Err(Error::Config("negative feedback needs rho > 0 and f > 0".into()));
    }
    let mut out = Vec::with_capacity(length);
    let mut p = p0;
    out.push(p);
    for _ in 1..length {
        p = (1.0 - rho) * p + rho * f;
        out.push(p);
    }
    Ok(out)
}

pub const MIN_VOLUME_PAIRS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeRelation {
    pub q_band: StabilityBand,
    /// `None` when `v` has too few distinct values for a tail estimate.
    pub v_band: Option<StabilityBand>,
    /// `μ̂_q / μ̂_v`.
    pub fitted_exponent_ratio: Option<f64>,
    pub ratio_std_error: Option<f64>,
    /// Both tails power-law and the ratio within two standard errors of 2.
    pub consistent: bool,
}

/// Compares the tail exponents of `|q|` and `v`; `q ~ ν √v` forces `μ_q = 2 μ_v`.
pub fn volume_imbalance_relation(v_samples: &[f64], q_samples: &[f64]) -> Result<VolumeRelation> {
    if v_samples.len() != q_samples.len() {
        return Err(Error::Config("volume and excess-demand samples must be paired".into()));
    }
    if v_samples.len() < MIN_VOLUME_PAIRS {
        return Err(Error::InsufficientData(format!(
            "volume relation needs at least {MIN_VOLUME_PAIRS} pairs, got {}",
            v_samples.len()
        )));
    }
    let q = PositiveSample::from_abs(q_samples);
    let v = PositiveSample::from_abs(v_samples);
    if q.values.len() < MIN_VOLUME_PAIRS / 2 || v.values.len() < MIN_VOLUME_PAIRS / 2 {
        return Err(Error::InsufficientData(format!(
            "too many zeros: {} nonzero |q| and {} nonzero v",
            q.values.len(),
            v.values.len()
        )));
    }
    let q_band = hill_band_series(q_samples, None)?;
    let v_band = hill_band_series(v_samples, None).ok();
    let (ratio, se) = match &v_band {
        Some(vb) => {
            let (mq, mv) = (q_band.central.exponent, vb.central.exponent);
            let ratio = mq / mv;
            let rel = ((q_band.std_error() / mq).powi(2) + (vb.std_error() / mv).powi(2)).sqrt();
            (Some(ratio), Some(ratio * rel))
        }
        None => (None, None),
    };
    let consistent = match (&v_band, ratio, se) {
        (Some(vb), Some(r), Some(s)) => q_band.power_law && vb.power_law && (r - 2.0).abs() <= 2.0 * s,
        _ => false,
    };
    Ok(VolumeRelation {
        q_band,
        v_band,
        fitted_exponent_ratio: ratio,
        ratio_std_error: se,
        consistent,
    })
}

/// `a = α β ceil(N) / L` under the configured laws.
pub struct MarketMultiplierLaw<'a>(&'a MarketConfig);

impl RandomLaw for MarketMultiplierLaw<'_> {
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        let (n, l) = self.0.draw_n_l(rng);
        self.0.alpha * self.0.beta * n as f64 / l
    }

    fn closed_abs_moment(&self, p: f64) -> Option<MomentValue> {
        let k = (self.0.alpha * self.0.beta).abs();
        let inv_l = self.0.l_law.inverse_moment(p)?;
        Some(match self.0.n_law.count_expectation(CountFn::Pow(p))? {
            MomentValue::Finite(m) => MomentValue::Finite(abs_pow(k, p) * m * inv_l),
            MomentValue::Divergent => MomentValue::Divergent,
        })
    }

    fn closed_mean_log_abs(&self) -> Option<f64> {
        let log_n = match self.0.n_law.count_expectation(CountFn::Log)? {
            MomentValue::Finite(m) => m,
            MomentValue::Divergent => return None,
        };
        let log_l = self.0.l_law.closed_mean_log_abs()?;
        Some((self.0.alpha * self.0.beta).abs().ln() + log_n - log_l)
    }

    fn tail_class(&self) -> TailClass {
        // 1/L is bounded since L is bounded away from zero
        match self.0.n_law.tail_class() {
            TailClass::Bounded if self.0.l_law.support().0 > 0.0 => TailClass::Bounded,
            TailClass::PowerLaw(x) => TailClass::PowerLaw(x),
            TailClass::Light => TailClass::Light,
            _ => TailClass::Unknown,
        }
    }

    fn log_lattice(&self) -> bool {
        self.0.n_law.constant_value().is_some() && self.0.l_law.log_lattice()
    }

    fn support(&self) -> (f64, f64) {
        let (n_lo, n_hi) = self.0.n_law.support();
        let (l_lo, l_hi) = self.0.l_law.support();
        let k = self.0.alpha * self.0.beta;
        (k * n_lo.ceil().max(1.0) / l_hi, k * n_hi.ceil().max(1.0) / l_lo)
    }

    fn constant_value(&self) -> Option<f64> {
        let n = self.0.n_law.constant_value()?;
        let l = self.0.l_law.constant_value()?;
        Some(self.0.alpha * self.0.beta * n.ceil().max(1.0) / l)
    }

    fn describe(&self) -> String {
        format!(
            "{} * {} * ceil({}) / {}",
            self.0.alpha, self.0.beta, self.0.n_law, self.0.l_law
        )
    }
}

/// `e = a b` with `b` the mean of `N` expectation terms plus `ρ φ̄` at `P = F`.
pub struct MarketInputLaw<'a>(&'a MarketConfig);

impl RandomLaw for MarketInputLaw<'_> {
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        let cfg = self.0;
        let (n, l) = cfg.draw_n_l(rng);
        let a = cfg.alpha * cfg.beta * n as f64 / l;
        let (mut tsum, mut gsum) = (0.0, 0.0);
        for _ in 0..n {
            tsum += cfg.expectation.law().sample(rng);
            gsum += cfg.guess_law.sample(rng);
        }
        let nf = n as f64;
        a * (tsum / nf + cfg.rho() * gsum / nf / cfg.fundamental_value)
    }

    fn tail_class(&self) -> TailClass {
        let b = match (self.0.expectation.law().tail_class(), self.0.guess_law.tail_class()) {
            (TailClass::PowerLaw(x), TailClass::PowerLaw(y)) => TailClass::PowerLaw(x.min(y)),
            (TailClass::PowerLaw(x), _) | (_, TailClass::PowerLaw(x)) => TailClass::PowerLaw(x),
            (TailClass::Unknown, _) | (_, TailClass::Unknown) => TailClass::Unknown,
            (TailClass::Light, _) | (_, TailClass::Light) => TailClass::Light,
            _ => TailClass::Bounded,
        };
        self.0.multiplier_law().tail_class().product(b)
    }

    fn constant_value(&self) -> Option<f64> {
        let a = self.0.multiplier_law().constant_value()?;
        let t = self.0.expectation.law().constant_value()?;
        let g = self.0.guess_law.constant_value()?;
        Some(a * (t + self.0.rho() * g / self.0.fundamental_value))
    }

    fn describe(&self) -> String {
        format!("a * (mean of N draws of {} + rho phi)", self.0.expectation.law())
    }
}
