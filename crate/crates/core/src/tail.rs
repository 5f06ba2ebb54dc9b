//! Tail-exponent estimation and wildness classification.
//!
//! All estimators work on positive samples (callers pass `|r|`). The Hill
//! estimator is the workhorse; rank regression on the log-log CCDF is the
//! independent cross-check.

use serde::Serialize;

use crate::error::{Error, Result};

/// Smallest order-statistic count an estimate may be based on.
pub const MIN_ORDER_COUNT: usize = 10;

/// Relative width of the stability band below which a tail counts as power-law.
pub const POWER_LAW_BAND_WIDTH: f64 = 0.25;

/// Standardized drift between the shallowest and deepest estimates above
/// which the band is read as a light tail (estimates rising with depth).
pub const LIGHT_TAIL_DRIFT_Z: f64 = 3.0;

/// Contiguous blocks used for the batch-means standard error of a time series.
pub const SERIES_BLOCKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Hill,
    RankRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub exponent: f64,
    pub method: TailMethod,
    #[serde(rename = "k")]
    pub order_count: usize,
    #[serde(rename = "stderr")]
    pub std_error: f64,
    #[serde(rename = "xmin")]
    pub x_min: f64,
}

impl TailEstimate {
    /// Whether two estimates agree within their joint two-standard-error interval.
    pub fn agrees_with(&self, other: &TailEstimate) -> bool {
        let joint = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        (self.exponent - other.exponent).abs() <= 2.0 * joint
    }

    pub fn interval(&self) -> (f64, f64) {
        (
            self.exponent - 2.0 * self.std_error,
            self.exponent + 2.0 * self.std_error,
        )
    }
}

/// Absolute values with zeros (and non-finite values) removed.
#[derive(Debug, Clone)]
pub struct PositiveSample {
    pub values: Vec<f64>,
    pub dropped: usize,
}

impl PositiveSample {
    pub fn from_abs(values: &[f64]) -> Self {
        let kept: Vec<f64> = values
            .iter()
            .map(|x| x.abs())
            .filter(|x| *x > 0.0 && x.is_finite())
            .collect();
        Self {
            dropped: values.len() - kept.len(),
            values: kept,
        }
    }
}

fn sorted_descending(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

fn check_positive(sample: &[f64]) -> Result<()> {
    match sample.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        Some(x) => Err(Error::Domain(format!(
            "tail estimation needs positive finite values, found {x}"
        ))),
        None => Ok(()),
    }
}

/// Hill's exponent on descending order statistics: `k / sum ln(x_(i) / x_(k+1))`.
///
/// No minimum on `k`; use [`hill_estimator`] for reportable estimates.
pub fn hill_exponent_sorted(desc: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k >= desc.len() {
        return Err(Error::Order { k, n: desc.len() });
    }
    let threshold = desc[k];
    let sum: f64 = desc[..k].iter().map(|x| (x / threshold).ln()).sum();
    if sum <= 0.0 {
        return Err(Error::Numeric(
            "top order statistics are tied; Hill exponent undefined".into(),
        ));
    }
    Ok(k as f64 / sum)
}

fn hill_from_sorted(desc: &[f64], k: usize) -> Result<TailEstimate> {
    if k < MIN_ORDER_COUNT {
        return Err(Error::InsufficientData(format!(
            "Hill estimate needs k >= {MIN_ORDER_COUNT}, got {k}"
        )));
    }
    let exponent = hill_exponent_sorted(desc, k)?;
    Ok(TailEstimate {
        exponent,
        method: TailMethod::Hill,
        order_count: k,
        std_error: exponent / (k as f64).sqrt(),
        x_min: desc[k],
    })
}

pub fn hill_estimator(sample: &[f64], k: usize) -> Result<TailEstimate> {
    check_positive(sample)?;
    if k >= sample.len() {
        return Err(Error::Order { k, n: sample.len() });
    }
    hill_from_sorted(&sorted_descending(sample), k)
}

/// Default number of order statistics, `floor(2 sqrt(n))`.
pub fn default_k(n: usize) -> usize {
    (2.0 * (n as f64).sqrt()).floor() as usize
}

/// Estimates at several tail depths and their spread.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityBand {
    pub central: TailEstimate,
    pub estimates: Vec<TailEstimate>,
    /// Smallest and largest point estimate across depths.
    pub lower: f64,
    pub upper: f64,
    /// `(upper - lower) / central`.
    pub width_ratio: f64,
    /// Drift from the deepest to the shallowest estimate in units of its
    /// sampling standard deviation; large positive values mean the apparent
    /// exponent keeps increasing further into the tail.
    pub drift_z: f64,
    pub power_law: bool,
    /// Batch-means standard error of the central estimate, set for time
    /// series where clustered extremes make the iid error too small.
    pub dependence_std_error: Option<f64>,
}

impl StabilityBand {
    /// `estimates` ordered from the deepest cut (fewest points) to the shallowest.
    fn from_estimates(central: TailEstimate, estimates: Vec<TailEstimate>) -> Self {
        let lower = estimates.iter().map(|e| e.exponent).fold(f64::INFINITY, f64::min);
        let upper = estimates.iter().map(|e| e.exponent).fold(f64::NEG_INFINITY, f64::max);
        let width_ratio = (upper - lower) / central.exponent;
        let deep = estimates.first().unwrap();
        let shallow = estimates.last().unwrap();
        // nested estimators: var(deep - shallow) ~ mu^2 (1/k_deep - 1/k_shallow)
        let spread = 1.0 / deep.order_count as f64 - 1.0 / shallow.order_count as f64;
        let drift_z = if spread > 0.0 {
            (deep.exponent - shallow.exponent) / (central.exponent.abs() * spread.sqrt())
        } else {
            0.0
        };
        Self {
            central,
            estimates,
            lower,
            upper,
            width_ratio,
            drift_z,
            power_law: width_ratio < POWER_LAW_BAND_WIDTH && drift_z < LIGHT_TAIL_DRIFT_Z,
            dependence_std_error: None,
        }
    }

    /// The larger of the iid and batch-means errors of the central estimate.
    pub fn std_error(&self) -> f64 {
        self.central.std_error.max(self.dependence_std_error.unwrap_or(0.0))
    }

    /// The spread of point estimates widened by two central standard errors.
    pub fn interval(&self) -> (f64, f64) {
        let pad = 2.0 * self.std_error();
        (self.lower - pad, self.upper + pad)
    }

    pub fn contains(&self, exponent: f64) -> bool {
        let (lo, hi) = self.interval();
        lo <= exponent && exponent <= hi
    }
}

/// Hill estimates at `k/2`, `k` and `2k` with `k` the default (or given) count.
pub fn hill_band(sample: &[f64], k: Option<usize>) -> Result<StabilityBand> {
    check_positive(sample)?;
    let n = sample.len();
    let k = k.unwrap_or_else(|| default_k(n));
    if k / 2 < MIN_ORDER_COUNT {
        return Err(Error::InsufficientData(format!(
            "stability band needs k/2 >= {MIN_ORDER_COUNT}; sample of {n} gives k = {k}"
        )));
    }
    if k >= n {
        return Err(Error::Order { k, n });
    }
    let desc = sorted_descending(sample);
    let central = hill_from_sorted(&desc, k)?;
    let mut estimates = vec![hill_from_sorted(&desc, k / 2)?, central];
    if 2 * k < n {
        estimates.push(hill_from_sorted(&desc, 2 * k)?);
    }
    Ok(StabilityBand::from_estimates(central, estimates))
}

/// [`hill_band`] on `|x|` of a time-ordered series, with a batch-means error.
///
/// The series is cut into [`SERIES_BLOCKS`] contiguous blocks and Hill is run
/// on each at `k / SERIES_BLOCKS` order statistics, the same tail fraction as
/// the central estimate. The spread of block estimates over `sqrt(blocks)`
/// picks up the clustering of extremes that the iid error `mu / sqrt(k)` misses.
pub fn hill_band_series(series: &[f64], k: Option<usize>) -> Result<StabilityBand> {
    let mut band = hill_band(&PositiveSample::from_abs(series).values, k)?;
    band.dependence_std_error = block_std_error(series, band.central.order_count);
    Ok(band)
}

fn block_std_error(series: &[f64], k: usize) -> Option<f64> {
    let kb = k / SERIES_BLOCKS;
    let len = series.len() / SERIES_BLOCKS;
    if kb < MIN_ORDER_COUNT || kb >= len {
        return None;
    }
    let est: Vec<f64> = series
        .chunks_exact(len)
        .take(SERIES_BLOCKS)
        .map(|b| {
            let desc = sorted_descending(&PositiveSample::from_abs(b).values);
            hill_exponent_sorted(&desc, kb).ok()
        })
        .collect::<Option<_>>()?;
    let m = est.len() as f64;
    let mean = est.iter().sum::<f64>() / m;
    let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Some((var / m).sqrt())
}

/// Empirical `(x, P(X > x))` at each distinct sample value, ascending in `x`.
pub fn ccdf_points(sample: &[f64]) -> Result<Vec<(f64, f64)>> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("NaN in sample".into()));
    }
    let mut v = sample.to_vec();
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        out.push((v[i], (v.len() - j) as f64 / n));
        i = j;
    }
    Ok(out)
}

/// Least-squares slope of `ln(i/n)` against `ln x_(i)` over the top
/// `tail_fraction` of the sample; the exponent is minus the slope.
///
/// The standard error uses the asymptotic `exponent * sqrt(2/m)` for `m`
/// tail points; the OLS residual error is meaningless for rank plots since
/// neighbouring points are strongly correlated.
pub fn rank_regression(sample: &[f64], tail_fraction: f64) -> Result<TailEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 0.5) {
        return Err(Error::Domain(format!(
            "tail_fraction must lie in (0, 0.5], got {tail_fraction}"
        )));
    }
    check_positive(sample)?;
    let n = sample.len();
    let m = (n as f64 * tail_fraction).floor() as usize;
    if m < MIN_ORDER_COUNT {
        return Err(Error::InsufficientData(format!(
            "rank regression needs at least {MIN_ORDER_COUNT} tail points, got {m}"
        )));
    }
    let desc = sorted_descending(sample);
    let pts: Vec<(f64, f64)> = desc[..m]
        .iter()
        .enumerate()
        .map(|(i, x)| (x.ln(), ((i + 1) as f64 / n as f64).ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Numeric("tail values are all equal".into()));
    }
    let exponent = -sxy / sxx;
    Ok(TailEstimate {
        exponent,
        method: TailMethod::RankRegression,
        order_count: m,
        std_error: exponent.abs() * (2.0 / m as f64).sqrt(),
        x_min: desc[m - 1],
    })
}

/// Rank regression at `tail_fraction/4`, `tail_fraction/2` and `tail_fraction`;
/// flags a non-power-law tail when the estimates drift with the cut.
pub fn rank_regression_band(sample: &[f64], tail_fraction: f64) -> Result<StabilityBand> {
    let central = rank_regression(sample, tail_fraction / 2.0)?;
    let estimates = vec![
        rank_regression(sample, tail_fraction / 4.0)?,
        central,
        rank_regression(sample, tail_fraction)?,
    ];
    Ok(StabilityBand::from_estimates(central, estimates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Wildness {
    XWilder,
    YWilder,
    Comparable,
    BothMild,
}

/// Compares two positive samples: power-law beats mild, and between two
/// power laws the smaller exponent is wilder unless the intervals overlap.
pub fn wildness_compare(sample_x: &[f64], sample_y: &[f64]) -> Result<Wildness> {
    let bx = hill_band(sample_x, None)?;
    let by = hill_band(sample_y, None)?;
    Ok(match (bx.power_law, by.power_law) {
        (false, false) => Wildness::BothMild,
        (true, false) => Wildness::XWilder,
        (false, true) => Wildness::YWilder,
        (true, true) => {
            if bx.central.agrees_with(&by.central) {
                Wildness::Comparable
            } else if bx.central.exponent < by.central.exponent {
                Wildness::XWilder
            } else {
                Wildness::YWilder
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    Finite,
    DivergentSuspected,
}

/// Block size of the baseline moment in [`moment_probe`].
const PROBE_BLOCK: usize = 1000;

/// Compares the `p`-th absolute sample moment of the full sample with the
/// typical moment of short prefixes (the median over disjoint blocks of
/// [`PROBE_BLOCK`] values). A finite moment stabilizes, so the ratio stays
/// near one; an infinite moment keeps growing with the sample size.
/// `DivergentSuspected` when the ratio exceeds 2.
pub fn moment_probe(sample: &[f64], p: f64) -> Result<ProbeVerdict> {
    let n = sample.len();
    if n < 16 * PROBE_BLOCK {
        return Err(Error::InsufficientData(format!(
            "moment probe needs at least {} values, got {n}",
            16 * PROBE_BLOCK
        )));
    }
    let powers: Vec<f64> = sample.iter().map(|x| x.abs().powf(p)).collect();
    let full = powers.iter().sum::<f64>() / n as f64;
    if !full.is_finite() {
        return Ok(ProbeVerdict::DivergentSuspected);
    }
    let mut blocks: Vec<f64> = powers
        .chunks_exact(PROBE_BLOCK)
        .map(|c| c.iter().sum::<f64>() / PROBE_BLOCK as f64)
        .collect();
    blocks.sort_unstable_by(|a, b| a.total_cmp(b));
    let baseline = blocks[blocks.len() / 2];
    Ok(if full > 2.0 * baseline {
        ProbeVerdict::DivergentSuspected
    } else {
        ProbeVerdict::Finite
    })
}

/// Location, scale and shape of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleShape {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn sample_shape(sample: &[f64]) -> Result<SampleShape> {
    let n = sample.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!("shape needs at least 4 values, got {n}")));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in sample {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(Error::Numeric("sample has zero variance".into()));
    }
    Ok(SampleShape {
        n,
        mean,
        sd: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::rng::RngState;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn draws(spec: &DistributionSpec, n: usize, stream: u64) -> Vec<f64> {
        spec.sample_n(n, &mut RngState::new(2024, stream).generator())
    }

    #[test]
    fn hill_by_hand() {
        let e = std::f64::consts::E;
        let desc = [e.powi(3), e.powi(2), e];
        assert_relative_eq!(hill_exponent_sorted(&desc, 2).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn hill_on_synthetic_pareto() {
        let x = draws(&DistributionSpec::pareto(3.0, 1.0), 100_000, 1);
        let est = hill_estimator(&x, 1000).unwrap();
        assert!((est.exponent - 3.0).abs() < 0.15, "{est:?}");
        assert_relative_eq!(est.std_error, est.exponent / 1000f64.sqrt());
        let x = draws(&DistributionSpec::pareto(1.5, 1.0), 100_000, 2);
        let est = hill_estimator(&x, 1000).unwrap();
        assert!((est.exponent - 1.5).abs() < 0.1, "{est:?}");
    }

    #[test]
    fn hill_errors() {
        assert!(matches!(hill_estimator(&[1.0, -2.0, 3.0], 1), Err(Error::Domain(_))));
        let x: Vec<f64> = (1..=20).map(f64::from).collect();
        assert!(matches!(hill_estimator(&x, 20), Err(Error::Order { .. })));
        assert!(matches!(hill_estimator(&x, 5), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn batch_error_sees_clustering() {
        let x = draws(&DistributionSpec::pareto(3.0, 1.0), 400_000, 6);
        let iid = hill_band_series(&x, None).unwrap();
        let r = iid.dependence_std_error.unwrap() / iid.central.std_error;
        assert!((0.6..1.6).contains(&r), "iid ratio {r}");
        // each draw held for 10 steps: the effective sample is 10x smaller
        let held: Vec<f64> = x[..40_000].iter().flat_map(|v| [*v; 10]).collect();
        let b = hill_band_series(&held, None).unwrap();
        let r = b.dependence_std_error.unwrap() / b.central.std_error;
        assert!(r > 2.0, "clustered ratio {r}");
        assert!(b.std_error() > b.central.std_error);
        assert!(hill_band_series(&x[..1000], None).unwrap().dependence_std_error.is_none());
    }

    #[test]
    fn shape_of_small_sample() {
        let s = sample_shape(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_relative_eq!(s.sd, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(s.skewness, 0.0);
        // m4 / m2^2 = 2.5625 / 1.5625
        assert_relative_eq!(s.excess_kurtosis, 2.5625 / 1.5625 - 3.0, epsilon = 1e-14);
        assert!(sample_shape(&[1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn ccdf_examples() {
        let c = ccdf_points(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(c, vec![(1.0, 2.0 / 3.0), (2.0, 1.0 / 3.0), (4.0, 0.0)]);
        assert_eq!(ccdf_points(&[5.0, 5.0]).unwrap(), vec![(5.0, 0.0)]);
        assert!(ccdf_points(&[]).is_err());
    }

    #[test]
    fn rank_regression_exact_on_pareto_quantiles() {
        // x_(i) = (n / i)^(1/mu) places ln(i/n) exactly on a line of slope -mu
        let n = 5000;
        let mu = 2.7;
        let x: Vec<f64> = (1..=n).map(|i| (n as f64 / i as f64).powf(1.0 / mu)).collect();
        for frac in [0.01, 0.1, 0.5] {
            let est = rank_regression(&x, frac).unwrap();
            assert!((est.exponent - mu).abs() < 1e-9, "{frac}: {est:?}");
        }
    }

    #[test]
    fn rank_regression_synthetic_and_errors() {
        let x = draws(&DistributionSpec::pareto(3.0, 1.0), 1_000_000, 3);
        let est = rank_regression(&x, 0.01).unwrap();
        assert!((est.exponent - 3.0).abs() < 0.2, "{est:?}");
        assert!(rank_regression(&x, 0.7).is_err());
        assert!(rank_regression(&x, 0.0).is_err());
        assert!(matches!(rank_regression(&x[..100], 0.05), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn rank_regression_flags_exponential() {
        let e: Vec<f64> = draws(&DistributionSpec::uniform(0.0, 1.0), 1_000_000, 4)
            .into_iter()
            .map(|u| -(1.0 - u).ln())
            .filter(|x| *x > 0.0)
            .collect();
        let band = rank_regression_band(&e, 0.2).unwrap();
        // deeper cut, larger apparent exponent
        assert!(band.estimates[0].exponent > band.estimates[1].exponent);
        assert!(band.estimates[1].exponent > band.estimates[2].exponent);
        assert!(!band.power_law, "{band:?}");
        let p = draws(&DistributionSpec::pareto(3.0, 1.0), 1_000_000, 5);
        assert!(rank_regression_band(&p, 0.02).unwrap().power_law);
    }

    #[test]
    fn hill_and_rank_regression_agree() {
        for (i, mu) in [1.5, 3.0].into_iter().enumerate() {
            let x = draws(&DistributionSpec::pareto(mu, 1.0), 200_000, 10 + i as u64);
            let h = hill_estimator(&x, default_k(x.len())).unwrap();
            let r = rank_regression(&x, 0.005).unwrap();
            assert!(h.agrees_with(&r), "{h:?} vs {r:?}");
        }
    }

    #[test]
    fn band_detects_power_law() {
        let x = draws(&DistributionSpec::pareto(3.0, 1.0), 100_000, 6);
        let band = hill_band(&x, None).unwrap();
        assert_eq!(band.central.order_count, default_k(100_000));
        assert_eq!(band.estimates.len(), 3);
        assert!(band.power_law && band.contains(3.0), "{band:?}");
        let g = PositiveSample::from_abs(&draws(&DistributionSpec::normal(0.0, 1.0), 100_000, 7));
        assert!(!hill_band(&g.values, None).unwrap().power_law);
    }

    #[test]
    fn wildness_examples() {
        let n = 100_000;
        let p15 = draws(&DistributionSpec::pareto(1.5, 1.0), n, 20);
        let p3 = draws(&DistributionSpec::pareto(3.0, 1.0), n, 21);
        let normal = PositiveSample::from_abs(&draws(&DistributionSpec::normal(0.0, 1.0), n, 22)).values;
        let expo: Vec<f64> = draws(&DistributionSpec::uniform(0.0, 1.0), n, 23)
            .into_iter()
            .map(|u| -(1.0 - u).ln())
            .filter(|x| *x > 0.0)
            .collect();
        assert_eq!(wildness_compare(&p15, &normal).unwrap(), Wildness::XWilder);
        assert_eq!(wildness_compare(&p3, &p15).unwrap(), Wildness::YWilder);
        assert_eq!(wildness_compare(&normal, &expo).unwrap(), Wildness::BothMild);
        let p3b = draws(&DistributionSpec::pareto(3.0, 1.0), n, 24);
        assert_eq!(wildness_compare(&p3, &p3b).unwrap(), Wildness::Comparable);
    }

    #[test]
    fn moment_probe_examples() {
        let n = 1_000_000;
        let x = draws(&DistributionSpec::pareto(1.7, 1.0), n, 30);
        assert_eq!(moment_probe(&x, 2.0).unwrap(), ProbeVerdict::DivergentSuspected);
        let g = draws(&DistributionSpec::normal(0.0, 1.0), n, 31);
        assert_eq!(moment_probe(&g, 4.0).unwrap(), ProbeVerdict::Finite);
        let x = draws(&DistributionSpec::pareto(3.0, 1.0), n, 32);
        assert_eq!(moment_probe(&x, 2.0).unwrap(), ProbeVerdict::Finite);
        assert!(moment_probe(&g[..10_000], 2.0).is_err());
    }

    #[test]
    fn jitter_keeps_pareto_tail() {
        let x = draws(&DistributionSpec::pareto(2.0, 1.0).jittered(0.3), 400_000, 40);
        let band = hill_band(&x, None).unwrap();
        assert!(band.contains(2.0), "{band:?}");
    }

    proptest! {
        #[test]
        fn hill_is_scale_invariant(seed in any::<u64>(), c in 1e-3..1e3f64) {
            let x = DistributionSpec::pareto(2.0, 1.0)
                .sample_n(500, &mut RngState::new(seed, 0).generator());
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let a = hill_estimator(&x, 50).unwrap().exponent;
            let b = hill_estimator(&scaled, 50).unwrap().exponent;
            prop_assert!((a - b).abs() < 1e-9 * a);
        }

        #[test]
        fn ccdf_is_nonincreasing(x in proptest::collection::vec(-100.0..100.0f64, 1..200)) {
            let c = ccdf_points(&x).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[0].0 < w[1].0);
                prop_assert!(w[0].1 >= w[1].1);
            }
            prop_assert_eq!(c.last().unwrap().1, 0.0);
        }
    }
}
