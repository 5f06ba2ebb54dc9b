//! The scalar recurrence `r_t = a_t r_{t-λ} + e_t` and its multiplier algebra.

use serde::{Deserialize, Serialize};

use crate::distributions::{mean_and_se, DistributionSpec, RandomLaw};
use crate::error::{Error, Result};
use crate::rng::{RngState, StreamRng};

/// Default number of initial steps discarded by [`simulate_path`] callers.
pub const DEFAULT_BURN_IN: usize = 10_000;

/// `k = (1 - a)^-1`, the amplification of a persistent disturbance.
pub fn multiplier(a: f64) -> Result<f64> {
    if a == 1.0 {
        return Err(Error::SingularMultiplier { what: "a" });
    }
    Ok(1.0 / (1.0 - a))
}

/// `k' = (1 - a^2)^-1`, with `var(r) = k' var(e)` for constant `a`.
pub fn variance_multiplier(a: f64) -> Result<f64> {
    if a.abs() == 1.0 {
        return Err(Error::SingularMultiplier { what: "a^2" });
    }
    Ok(1.0 / (1.0 - a * a))
}

/// `k'' = (1 - E a)^-1`, relating the stationary means.
pub fn mean_multiplier(mean_a: f64) -> Result<f64> {
    if mean_a == 1.0 {
        return Err(Error::SingularMultiplier { what: "E(a)" });
    }
    Ok(1.0 / (1.0 - mean_a))
}

/// Fixed point of `r = a r + a b`, i.e. `r = k a b`.
pub fn instantaneous_solve(a: f64, b: f64) -> Result<f64> {
    if !(a < 1.0) {
        return Err(Error::FeedbackExplosion { step: None, a });
    }
    Ok(a * b / (1.0 - a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "law")]
pub enum InputMode {
    /// `e_t` drawn from its own law.
    Direct(DistributionSpec),
    /// `e_t = a_t b_t` with `b_t` drawn independently of `a_t`.
    Coupled(DistributionSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lag {
    /// `r_t = a_t r_t + e_t`, solved per step.
    Instantaneous,
    /// `r_t = a_t r_{t-1} + e_t`.
    OneStep,
}

impl TryFrom<u32> for Lag {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            0 => Ok(Lag::Instantaneous),
            1 => Ok(Lag::OneStep),
            _ => Err(Error::Config(format!("lag must be 0 or 1, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSpec {
    pub a_law: DistributionSpec,
    pub input: InputMode,
    pub lag: Lag,
    /// Initial value, used only with [`Lag::OneStep`].
    pub r0: f64,
}

impl RecurrenceSpec {
    pub fn lagged(a_law: DistributionSpec, e_law: DistributionSpec) -> Self {
        Self {
            a_law,
            input: InputMode::Direct(e_law),
            lag: Lag::OneStep,
            r0: 0.0,
        }
    }

    pub fn coupled(a_law: DistributionSpec, b_law: DistributionSpec, lag: Lag) -> Self {
        Self {
            a_law,
            input: InputMode::Coupled(b_law),
            lag,
            r0: 0.0,
        }
    }

    pub fn with_r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.a_law.validate()?;
        match &self.input {
            InputMode::Direct(l) | InputMode::Coupled(l) => l.validate()?,
        }
        if !self.r0.is_finite() {
            return Err(Error::Config("r0 must be finite".into()));
        }
        if self.lag == Lag::Instantaneous && self.a_law.support().1 >= 1.0 {
            log::warn!(
                "a_law {} puts mass at or above 1; instantaneous mode will fail on such draws",
                self.a_law
            );
        }
        Ok(())
    }

    /// Draws one `(a_t, e_t)` pair; `a` is always drawn first.
    pub fn draw_step(&self, rng: &mut StreamRng) -> (f64, f64) {
        let a = self.a_law.sample(rng);
        let e = match &self.input {
            InputMode::Direct(e_law) => e_law.sample(rng),
            InputMode::Coupled(b_law) => a * b_law.sample(rng),
        };
        (a, e)
    }

    /// The law of `e_t` as a [`RandomLaw`].
    pub fn input_law(&self) -> InputLaw<'_> {
        InputLaw(self)
    }
}

/// The marginal law of `e_t` for a recurrence spec.
pub struct InputLaw<'a>(&'a RecurrenceSpec);

impl RandomLaw for InputLaw<'_> {
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        self.0.draw_step(rng).1
    }

    fn closed_abs_moment(&self, p: f64) -> Option<crate::distributions::MomentValue> {
        use crate::distributions::MomentValue::*;
        match &self.0.input {
            InputMode::Direct(e) => e.closed_abs_moment(p),
            InputMode::Coupled(b) => match (self.0.a_law.closed_abs_moment(p)?, b.closed_abs_moment(p)?) {
                (Finite(x), Finite(y)) => Some(Finite(x * y)),
                // 0 * inf: a degenerate at zero kills the input
                (Finite(x), Divergent) | (Divergent, Finite(x)) if x == 0.0 => Some(Finite(0.0)),
                _ => Some(Divergent),
            },
        }
    }

    fn tail_class(&self) -> crate::distributions::TailClass {
        match &self.0.input {
            InputMode::Direct(e) => e.tail_class(),
            InputMode::Coupled(b) => self.0.a_law.tail_class().product(b.tail_class()),
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match &self.0.input {
            InputMode::Direct(e) => e.constant_value(),
            InputMode::Coupled(b) => match (self.0.a_law.constant_value(), b.constant_value()) {
                (Some(a), Some(b)) => Some(a * b),
                (Some(a), None) if a == 0.0 => Some(0.0),
                _ => None,
            },
        }
    }

    fn describe(&self) -> String {
        match &self.0.input {
            InputMode::Direct(e) => e.to_string(),
            InputMode::Coupled(b) => format!("a * {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSample {
    pub values: Vec<f64>,
    pub burn_in_dropped: usize,
    pub seed: RngState,
    pub warnings: Vec<String>,
}

impl SeriesSample {
    /// CSV with header `t,r`; `t` counts post-burn-in steps from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 4);
        out.push_str("t,r\n");
        for (i, r) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, r));
        }
        out
    }
}

/// Simulates `length` post-burn-in steps.
pub fn simulate_path(
    spec: &RecurrenceSpec,
    length: usize,
    burn_in: usize,
    rng: RngState,
) -> Result<SeriesSample> {
    simulate_path_with_inputs(spec, length, burn_in, rng).map(|(s, _)| s)
}

/// As [`simulate_path`], also returning the post-burn-in inputs `e_t`.
pub fn simulate_path_with_inputs(
    spec: &RecurrenceSpec,
    length: usize,
    burn_in: usize,
    rng: RngState,
) -> Result<(SeriesSample, Vec<f64>)> {
    if length == 0 {
        return Err(Error::Config("path length must be positive".into()));
    }
    spec.validate()?;
    let mut warnings = Vec::new();
    if spec.lag == Lag::OneStep {
        let report = check_stationarity(spec, 10_000, rng.substream(0x57a7))?;
        if report.verdict != Stationarity::Stationary {
            let msg = format!(
                "stationarity check is {:?}: E ln|a| in [{:.4}, {:.4}]",
                report.verdict, report.mean_log_a_interval.0, report.mean_log_a_interval.1
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut g = rng.generator();
    let mut values = Vec::with_capacity(length);
    let mut inputs = Vec::with_capacity(length);
    let mut r = spec.r0;
    for step in 0..burn_in + length {
        let (a, e) = spec.draw_step(&mut g);
        r = match spec.lag {
            Lag::OneStep => a * r + e,
            Lag::Instantaneous => {
                if !(a < 1.0) {
                    return Err(Error::FeedbackExplosion { step: Some(step), a });
                }
                e / (1.0 - a)
            }
        };
        if !r.is_finite() {
            return Err(Error::Nonstationary(format!(
                "|r| overflowed at step {step}; E ln|a| is not negative enough for this horizon"
            )));
        }
        if step >= burn_in {
            values.push(r);
            inputs.push(e);
        }
    }
    Ok((
        SeriesSample {
            values,
            burn_in_dropped: burn_in,
            seed: rng,
            warnings,
        },
        inputs,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stationarity {
    Stationary,
    Nonstationary,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub verdict: Stationarity,
    /// Point estimate of `E ln|a|` (may be `-inf`).
    pub mean_log_a: f64,
    /// Three-standard-error interval (degenerate for closed forms).
    pub mean_log_a_interval: (f64, f64),
    /// Estimate of `E max(ln|e|, 0)`.
    pub mean_log_plus_e: f64,
    pub atom_at_zero: bool,
    pub closed_form: bool,
}

/// Checks the log-moment conditions for a unique stationary solution of the
/// lagged recurrence with multiplier law `a_law` and input law `e_law`.
pub fn stationarity_of(
    a_law: &dyn RandomLaw,
    e_law: &dyn RandomLaw,
    mc_budget: usize,
    rng: RngState,
) -> Result<StationarityReport> {
    let mut g = rng.generator();
    let (mean_log_a, interval, closed_form) = match a_law.closed_mean_log_abs() {
        Some(m) => (m, (m, m), true),
        None => {
            if mc_budget < 2 {
                return Err(Error::InsufficientData("mc_budget must be at least 2".into()));
            }
            let draws: Vec<f64> = (0..mc_budget).map(|_| a_law.draw(&mut g).abs().ln()).collect();
            if draws.iter().any(|x| *x == f64::NEG_INFINITY) {
                (f64::NEG_INFINITY, (f64::NEG_INFINITY, f64::NEG_INFINITY), false)
            } else {
                let (m, se) = mean_and_se(draws.into_iter());
                (m, (m - 3.0 * se, m + 3.0 * se), false)
            }
        }
    };
    let atom_at_zero = mean_log_a == f64::NEG_INFINITY;
    let mean_log_plus_e = {
        let n = mc_budget.max(2);
        (0..n).map(|_| e_law.draw(&mut g).abs().ln().max(0.0)).sum::<f64>() / n as f64
    };
    let verdict = if !mean_log_plus_e.is_finite() {
        Stationarity::Undetermined
    } else if atom_at_zero || interval.1 < 0.0 {
        Stationarity::Stationary
    } else if interval.0 >= 0.0 {
        Stationarity::Nonstationary
    } else {
        Stationarity::Undetermined
    };
    Ok(StationarityReport {
        verdict,
        mean_log_a,
        mean_log_a_interval: interval,
        mean_log_plus_e,
        atom_at_zero,
        closed_form,
    })
}

pub fn check_stationarity(
    spec: &RecurrenceSpec,
    mc_budget: usize,
    rng: RngState,
) -> Result<StationarityReport> {
    stationarity_of(&spec.a_law, &spec.input_law(), mc_budget, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementSummary {
    /// Mean of `ln|r_t| - ln|r_{t-1}|` over steps with `|r_{t-1}| > threshold`.
    pub mean_increment: f64,
    pub std_error: f64,
    pub count: usize,
    /// Kolmogorov distance between the standardized increments and N(0, 1).
    pub gaussian_fit_residual: f64,
}

/// Conditional log-increments above `threshold`, the large-`|r|` random
/// walk whose drift approaches `E ln|a|`.
pub fn log_abs_increment_diagnostic(sample: &SeriesSample, threshold: f64) -> Result<IncrementSummary> {
    let incs: Vec<f64> = sample
        .values
        .windows(2)
        .filter(|w| w[0].abs() > threshold && w[1] != 0.0)
        .map(|w| w[1].abs().ln() - w[0].abs().ln())
        .collect();
    if incs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} excursions above threshold {threshold}; need at least 2",
            incs.len()
        )));
    }
    let (mean, se) = mean_and_se(incs.iter().copied());
    let sd = se * (incs.len() as f64).sqrt();
    let gaussian_fit_residual = if sd > 0.0 {
        let mut z: Vec<f64> = incs.iter().map(|x| (x - mean) / sd).collect();
        z.sort_unstable_by(|a, b| a.total_cmp(b));
        let n = z.len() as f64;
        z.iter()
            .enumerate()
            .map(|(i, &x)| {
                let phi = 0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2));
                (phi - i as f64 / n).abs().max(((i + 1) as f64 / n - phi).abs())
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(IncrementSummary {
        mean_increment: mean,
        std_error: se,
        count: incs.len(),
        gaussian_fit_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(x: f64) -> DistributionSpec {
        DistributionSpec::Constant(x)
    }

    #[test]
    fn multiplier_examples() {
        assert_relative_eq!(multiplier(0.9).unwrap(), 10.0, max_relative = 1e-15);
        assert_eq!(multiplier(0.0).unwrap(), 1.0);
        assert_eq!(multiplier(0.5).unwrap(), 2.0);
        assert!(matches!(multiplier(1.0), Err(Error::SingularMultiplier { .. })));

        assert_relative_eq!(variance_multiplier(0.9).unwrap(), 1.0 / 0.19, max_relative = 1e-14);
        assert_eq!(variance_multiplier(0.0).unwrap(), 1.0);
        assert_relative_eq!(variance_multiplier(-0.5).unwrap(), 4.0 / 3.0, max_relative = 1e-15);
        assert!(variance_multiplier(-1.0).is_err());

        assert_relative_eq!(mean_multiplier(0.9).unwrap(), 10.0, max_relative = 1e-15);
        assert_eq!(mean_multiplier(0.5).unwrap(), 2.0);
        assert_eq!(mean_multiplier(-1.0).unwrap(), 0.5);
        assert!(mean_multiplier(1.0).is_err());
    }

    #[test]
    fn instantaneous_examples() {
        assert_relative_eq!(instantaneous_solve(0.9, 1.0).unwrap(), 9.0, max_relative = 1e-14);
        assert_eq!(instantaneous_solve(0.0, 7.0).unwrap(), 0.0);
        assert_relative_eq!(instantaneous_solve(0.5, -0.02).unwrap(), -0.02);
        assert!(matches!(
            instantaneous_solve(1.2, 1.0),
            Err(Error::FeedbackExplosion { a, .. }) if a == 1.2
        ));
    }

    #[test]
    fn no_feedback_passes_input_through() {
        let spec = RecurrenceSpec::lagged(c(0.0), c(5.0)).with_r0(-3.0);
        let s = simulate_path(&spec, 50, 0, RngState::new(1, 0)).unwrap();
        assert!(s.values.iter().all(|v| *v == 5.0));
    }

    #[test]
    fn constant_feedback_converges_geometrically() {
        // r_t - r* = a^t (r0 - r*) with r* = e / (1 - a)
        for (a, e, r0) in [(0.5, 1.0, 0.0), (-0.7, 2.0, 10.0), (0.9, -1.0, 3.0)] {
            let spec = RecurrenceSpec::lagged(c(a), c(e)).with_r0(r0);
            let s = simulate_path(&spec, 60, 0, RngState::new(1, 0)).unwrap();
            let target = e * multiplier(a).unwrap();
            let mut gap = r0 - target;
            for v in &s.values {
                gap *= a;
                assert!((v - target - gap).abs() < 1e-9 * (1.0 + r0.abs()), "{a} {v}");
            }
        }
        let spec = RecurrenceSpec::lagged(c(0.5), c(1.0));
        let s = simulate_path(&spec, 40, 0, RngState::new(1, 0)).unwrap();
        assert!(s.values.windows(2).all(|w| w[1] > w[0] && w[1] <= 2.0));
        assert!((s.values.last().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn lag_zero_is_elementwise_fixed_point() {
        let spec = RecurrenceSpec::coupled(
            DistributionSpec::uniform(0.0, 0.95),
            DistributionSpec::normal(0.0, 0.01),
            Lag::Instantaneous,
        );
        let rng = RngState::new(8, 2);
        let s = simulate_path(&spec, 1000, 0, rng).unwrap();
        let mut g = rng.generator();
        for v in &s.values {
            let a = spec.a_law.sample(&mut g);
            let InputMode::Coupled(b_law) = &spec.input else { unreachable!() };
            let b = b_law.sample(&mut g);
            assert_eq!(*v, instantaneous_solve(a, b).unwrap());
        }
    }

    #[test]
    fn lag_zero_rejects_explosive_draws() {
        let spec = RecurrenceSpec::coupled(
            DistributionSpec::uniform(0.0, 2.0),
            DistributionSpec::normal(0.0, 1.0),
            Lag::Instantaneous,
        );
        let err = simulate_path(&spec, 1000, 0, RngState::new(1, 1)).unwrap_err();
        assert!(matches!(err, Error::FeedbackExplosion { step: Some(_), .. }), "{err}");
    }

    #[test]
    fn deterministic_given_stream() {
        let spec = RecurrenceSpec::lagged(DistributionSpec::uniform(0.0, 2.0), DistributionSpec::normal(0.0, 1.0));
        let a = simulate_path(&spec, 1000, 100, RngState::new(4, 4)).unwrap();
        let b = simulate_path(&spec, 1000, 100, RngState::new(4, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 1000);
        assert_eq!(a.burn_in_dropped, 100);
    }

    #[test]
    fn divergent_path_errors() {
        let spec = RecurrenceSpec::lagged(c(1.5), c(1.0));
        let err = simulate_path(&spec, 10_000, 0, RngState::new(1, 1)).unwrap_err();
        assert!(matches!(err, Error::Nonstationary(_)));
    }

    #[test]
    fn stationarity_examples() {
        let e = DistributionSpec::normal(0.0, 1.0);
        let rep = check_stationarity(
            &RecurrenceSpec::lagged(DistributionSpec::uniform(0.0, 2.0), e.clone()),
            10_000,
            RngState::new(1, 0),
        )
        .unwrap();
        assert_eq!(rep.verdict, Stationarity::Stationary);
        assert_relative_eq!(rep.mean_log_a, 2f64.ln() - 1.0, epsilon = 1e-14);

        let rep = check_stationarity(&RecurrenceSpec::lagged(c(1.5), e.clone()), 10_000, RngState::new(1, 0)).unwrap();
        assert_eq!(rep.verdict, Stationarity::Nonstationary);

        let rep = check_stationarity(&RecurrenceSpec::lagged(c(0.0), e.clone()), 10_000, RngState::new(1, 0)).unwrap();
        assert_eq!(rep.verdict, Stationarity::Stationary);
        assert!(rep.atom_at_zero);
    }

    #[test]
    fn stationarity_by_monte_carlo() {
        let e = DistributionSpec::normal(0.0, 1.0);
        // E ln|N(0.2, 0.3)| is well below zero, no closed form
        let spec = RecurrenceSpec::lagged(DistributionSpec::normal(0.2, 0.3), e.clone());
        let rep = check_stationarity(&spec, 20_000, RngState::new(2, 0)).unwrap();
        assert!(!rep.closed_form);
        assert_eq!(rep.verdict, Stationarity::Stationary);
        let spec = RecurrenceSpec::lagged(DistributionSpec::normal(3.0, 0.3), e.clone());
        assert_eq!(
            check_stationarity(&spec, 20_000, RngState::new(2, 0)).unwrap().verdict,
            Stationarity::Nonstationary
        );
        // E ln|N(1, 0.0001)| ~ 0: the interval straddles zero
        let spec = RecurrenceSpec::lagged(DistributionSpec::normal(1.0, 1e-4), e);
        assert_eq!(
            check_stationarity(&spec, 1_000, RngState::new(2, 0)).unwrap().verdict,
            Stationarity::Undetermined
        );
    }

    #[test]
    fn increment_diagnostic_examples() {
        let spec = RecurrenceSpec::lagged(c(0.5), c(0.0)).with_r0(8.0);
        let s = simulate_path(&spec, 10, 0, RngState::new(1, 0)).unwrap();
        let d = log_abs_increment_diagnostic(&s, 0.1).unwrap();
        assert_relative_eq!(d.mean_increment, 0.5f64.ln(), epsilon = 1e-12);
        assert_eq!(d.count, 6);
        assert!(matches!(
            log_abs_increment_diagnostic(&s, 100.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let s = SeriesSample {
            values: vec![0.5, -1.25],
            burn_in_dropped: 0,
            seed: RngState::new(0, 0),
            warnings: vec![],
        };
        assert_eq!(s.to_csv(), "t,r\n1,0.5\n2,-1.25\n");
    }

    proptest! {
        #[test]
        fn constant_coefficients_follow_closed_form(a in -0.95..0.95f64, e in -5.0..5.0f64, r0 in -10.0..10.0f64) {
            let spec = RecurrenceSpec::lagged(c(a), c(e)).with_r0(r0);
            let s = simulate_path(&spec, 30, 0, RngState::new(0, 0)).unwrap();
            let target = e / (1.0 - a);
            for (t, v) in s.values.iter().enumerate() {
                let expect = target + a.powi(t as i32 + 1) * (r0 - target);
                prop_assert!((v - expect).abs() < 1e-9 * (1.0 + target.abs() + r0.abs()));
            }
        }
    }
}
