//! Matrix-valued recurrences `x_t = Ω_t x_{t-1} + w_t`: the mimetic opinion
//! network and the cross-asset return model.

use nalgebra::{DMatrix, DVector, Schur};
use serde::Serialize;

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::rng::{RngState, StreamRng};
use crate::tail::{hill_band_series, StabilityBand};

/// A square real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Config("matrix must have at least one row".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Config(format!(
                "matrix must be square: row {} has {} entries, expected {n}",
                i + 1,
                rows[i].len()
            )));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("matrix entries must be finite".into()));
        }
        Ok(Self(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Config("matrix must be square and nonempty".into()));
        }
        Ok(Self(m))
    }

    /// A square grid of comma-separated numbers, one row per line.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: format!("bad matrix entry {f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Directed ring `i -> i+1` with weight `w`.
    pub fn ring(n: usize, w: f64) -> Self {
        Self(DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n && n > 1 { w } else { 0.0 }))
    }

    /// Every off-diagonal entry equal to `w`.
    pub fn complete(n: usize, w: f64) -> Self {
        Self(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { w }))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    /// Zero diagonal, nonnegative entries, row sums at most 1 and at least
    /// one row sum below 1.
    pub fn validate_network(&self) -> Result<()> {
        let n = self.size();
        for i in 0..n {
            if self.0[(i, i)] != 0.0 {
                return Err(Error::Config(format!("network weight ({i}, {i}) must be zero")));
            }
        }
        if let Some(x) = self.0.iter().find(|x| **x < 0.0) {
            return Err(Error::Config(format!("network weights must be nonnegative, found {x}")));
        }
        let sums = self.row_sums();
        if let Some((i, s)) = sums.iter().enumerate().find(|(_, s)| **s > 1.0 + 1e-12) {
            return Err(Error::Config(format!("row {i} sums to {s} > 1")));
        }
        if sums.iter().all(|s| *s >= 1.0) {
            return Err(Error::Config("at least one row must sum to less than 1".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.0.row_iter() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Strong connectivity of the directed graph with an edge `i -> j` whenever
/// entry `(i, j)` is positive.
pub fn strong_connectivity(m: &WeightMatrix) -> bool {
    let n = m.size();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { m.0[(i, j)] } else { m.0[(j, i)] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Config("spectral radius needs a square matrix".into()));
    }
    if m.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let eps = tol.max(f64::EPSILON);
    let schur = Schur::try_new(m.clone(), eps, 10_000).or_else(|| {
        // shifted QR can stall on cyclic structure (e.g. ring networks), so
        // retry on an orthogonally similar matrix with the same spectrum
        let n = m.nrows();
        let q = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13 + 1) as f64).sin()).qr().q();
        Schur::try_new(q.transpose() * m * &q, eps, 10_000)
    });
    let schur = schur.ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Euclidean operator norm by power iteration on `ΩᵀΩ`.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    let gram = m.transpose() * m;
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for i in 0..1000 {
        let y = &gram * &x;
        let norm = y.norm();
        if norm == 0.0 {
            // the all-ones start can lie in the kernel; retry from a generic vector
            if i == 0 {
                x = DVector::from_fn(n, |k, _| 1.0 + k as f64);
                x /= x.norm();
                continue;
            }
            return 0.0;
        }
        let next = norm;
        x = y / norm;
        if (next - lambda).abs() <= 1e-13 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// `K = (I - Ω)^-1`, requiring `ρ(Ω) < 1`.
pub fn multiplier_matrix(m: &WeightMatrix) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(&m.0, 1e-13)?;
    if rho >= 1.0 - 1e-12 {
        return Err(Error::DivergentMultiplier(rho));
    }
    let n = m.size();
    let lhs = DMatrix::identity(n, n) - &m.0;
    lhs.lu()
        .try_inverse()
        .ok_or(Error::SingularMultiplier { what: "I - Omega" })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMode {
    OpinionNetwork,
    CrossAsset,
}

/// Rule producing the iid matrices `Ω_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixGenerator {
    Constant(WeightMatrix),
    /// Entries multiplied by independent `exp(s Z)`; in network mode each row
    /// is rescaled back to its base sum.
    Jittered { base: WeightMatrix, jitter_sd: f64 },
    /// `a_t I` with one scalar draw per step.
    ScalarDiagonal { law: DistributionSpec, size: usize },
    /// Independent diagonal draws plus fixed off-diagonal couplings.
    IndependentDiagonal {
        laws: Vec<DistributionSpec>,
        off_diagonal: WeightMatrix,
    },
}

impl MatrixGenerator {
    pub fn size(&self) -> usize {
        match self {
            MatrixGenerator::Constant(m) | MatrixGenerator::Jittered { base: m, .. } => m.size(),
            MatrixGenerator::ScalarDiagonal { size, .. } => *size,
            MatrixGenerator::IndependentDiagonal { laws, .. } => laws.len(),
        }
    }
}

/// Rule producing the input vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum InputGenerator {
    /// Independent components from one law.
    Iid(DistributionSpec),
    Constant(Vec<f64>),
    /// `e_i = Ω_ii b_i` with `b_i` from the law.
    Coupled(DistributionSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRecurrenceSpec {
    pub mode: MatrixMode,
    pub matrix: MatrixGenerator,
    pub input: InputGenerator,
}

impl MatrixRecurrenceSpec {
    pub fn size(&self) -> usize {
        self.matrix.size()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.size();
        if n == 0 {
            return Err(Error::Config("matrix size must be positive".into()));
        }
        match &self.matrix {
            MatrixGenerator::Constant(m) => {
                if self.mode == MatrixMode::OpinionNetwork {
                    m.validate_network()?;
                }
            }
            MatrixGenerator::Jittered { base, jitter_sd } => {
                if !(*jitter_sd > 0.0) {
                    return Err(Error::Config(format!("jitter_sd must be positive, got {jitter_sd}")));
                }
                if self.mode == MatrixMode::OpinionNetwork {
                    base.validate_network()?;
                }
            }
            MatrixGenerator::ScalarDiagonal { law, .. } => law.validate()?,
            MatrixGenerator::IndependentDiagonal { laws, off_diagonal } => {
                if self.mode == MatrixMode::OpinionNetwork {
                    return Err(Error::Config("opinion networks have a zero diagonal".into()));
                }
                for l in laws {
                    l.validate()?;
                }
                if off_diagonal.size() != n {
                    return Err(Error::Config("off-diagonal matrix size mismatch".into()));
                }
                if (0..n).any(|i| off_diagonal.0[(i, i)] != 0.0) {
                    return Err(Error::Config("off-diagonal matrix must have a zero diagonal".into()));
                }
            }
        }
        match &self.input {
            InputGenerator::Iid(l) | InputGenerator::Coupled(l) => l.validate()?,
            InputGenerator::Constant(c) => {
                if c.len() != n {
                    return Err(Error::Config(format!("constant input has {} entries, expected {n}", c.len())));
                }
            }
        }
        Ok(())
    }

    /// Writes one draw of `Ω_t` into `out`.
    pub fn draw_matrix(&self, rng: &mut StreamRng, out: &mut DMatrix<f64>) {
        match &self.matrix {
            MatrixGenerator::Constant(m) => out.copy_from(&m.0),
            MatrixGenerator::Jittered { base, jitter_sd } => {
                let jitter = DistributionSpec::normal(0.0, *jitter_sd);
                let n = base.size();
                for i in 0..n {
                    let mut drawn = 0.0;
                    let mut target = 0.0;
                    for j in 0..n {
                        let w = base.0[(i, j)];
                        let x = if w != 0.0 { w * jitter.sample(rng).exp() } else { 0.0 };
                        out[(i, j)] = x;
                        drawn += x;
                        target += w;
                    }
                    if self.mode == MatrixMode::OpinionNetwork && drawn > 0.0 {
                        let s = target / drawn;
                        for j in 0..n {
                            out[(i, j)] *= s;
                        }
                    }
                }
            }
            MatrixGenerator::ScalarDiagonal { law, .. } => {
                let a = law.sample(rng);
                out.fill(0.0);
                out.fill_diagonal(a);
            }
            MatrixGenerator::IndependentDiagonal { laws, off_diagonal } => {
                out.copy_from(&off_diagonal.0);
                for (i, l) in laws.iter().enumerate() {
                    out[(i, i)] = l.sample(rng);
                }
            }
        }
    }

    pub fn draw_input(&self, omega: &DMatrix<f64>, rng: &mut StreamRng, out: &mut DVector<f64>) {
        match &self.input {
            InputGenerator::Iid(l) => out.iter_mut().for_each(|x| *x = l.sample(rng)),
            InputGenerator::Constant(c) => out.iter_mut().zip(c).for_each(|(x, c)| *x = *c),
            InputGenerator::Coupled(l) => {
                for i in 0..out.len() {
                    out[i] = omega[(i, i)] * l.sample(rng);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorPath {
    /// One row per post-burn-in step.
    pub components: Vec<Vec<f64>>,
    /// Component mean per step.
    pub average: Vec<f64>,
    pub warnings: Vec<String>,
}

impl VectorPath {
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.components.iter().map(|row| row[i]).collect()
    }

    /// Header `t,x1,...,xN,avg`.
    pub fn to_csv(&self) -> String {
        let n = self.components.first().map_or(0, |r| r.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",avg\n");
        for (t, (row, avg)) in self.components.iter().zip(&self.average).enumerate() {
            out.push_str(&(t + 1).to_string());
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push_str(&format!(",{avg}\n"));
        }
        out
    }
}

/// Smallest `E‖Ω‖^δ` over a grid of small `δ`, estimated from `draws` matrices.
pub fn norm_moment_check(spec: &MatrixRecurrenceSpec, draws: usize, rng: RngState) -> f64 {
    let n = spec.size();
    let mut g = rng.generator();
    let mut m = DMatrix::zeros(n, n);
    let logs: Vec<f64> = (0..draws)
        .map(|_| {
            spec.draw_matrix(&mut g, &mut m);
            operator_norm(&m).ln()
        })
        .collect();
    [0.05, 0.1, 0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|d| logs.iter().map(|l| (d * l).exp()).sum::<f64>() / draws as f64)
        .fold(f64::INFINITY, f64::min)
}

pub fn simulate_vector_path(
    spec: &MatrixRecurrenceSpec,
    length: usize,
    burn_in: usize,
    rng: RngState,
) -> Result<VectorPath> {
    spec.validate()?;
    if length == 0 {
        return Err(Error::Config("path length must be positive".into()));
    }
    let mut warnings = Vec::new();
    let best = norm_moment_check(spec, 2000, rng.substream(0x404d));
    if !(best < 1.0) {
        let msg = format!("E(||Omega||^d) >= 1 for every tested d (min {best:.4}); the path may not be stationary");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let n = spec.size();
    let mut g = rng.generator();
    let mut omega = DMatrix::zeros(n, n);
    let mut input = DVector::zeros(n);
    let mut x = DVector::zeros(n);
    let mut next = DVector::zeros(n);
    let mut components = Vec::with_capacity(length);
    let mut average = Vec::with_capacity(length);
    for step in 0..burn_in + length {
        spec.draw_matrix(&mut g, &mut omega);
        spec.draw_input(&omega, &mut g, &mut input);
        next.gemv(1.0, &omega, &x, 0.0);
        next += &input;
        std::mem::swap(&mut x, &mut next);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Nonstationary(format!(
                "state overflowed at step {step}; last ||Omega|| = {:.4}",
                operator_norm(&omega)
            )));
        }
        if step >= burn_in {
            components.push(x.iter().copied().collect());
            average.push(x.mean());
        }
    }
    Ok(VectorPath {
        components,
        average,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixExponentOptions {
    pub mu_max: f64,
    pub tol: f64,
    /// Number of product chains carried in parallel.
    pub mc_budget: usize,
    pub horizon: usize,
}

impl Default for MatrixExponentOptions {
    fn default() -> Self {
        Self {
            mu_max: 10.0,
            tol: 1e-3,
            mc_budget: 10_000,
            horizon: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixExponent {
    pub mu: Option<f64>,
    /// Per-step growth rate `g(μ)` at the root over the first half of the horizon.
    pub growth_half_horizon: Option<f64>,
    /// `|g_half - g_full| / g_full < 5%` at the root.
    pub converged: bool,
    pub note: String,
}

/// `(ln g over horizon/2, ln g over horizon)` with `g(μ) = (E‖Ω_1⋯Ω_t‖^μ)^{1/t}`.
///
/// Chains are evolved as a population: each step multiplies every chain by a
/// fresh matrix, records the mean growth weight `‖new‖^μ / ‖old‖^μ` and
/// resamples chains in proportion to their weights. The product of mean
/// weights is an unbiased estimate of `E‖Π_t x‖^μ` whose variance stays
/// bounded, unlike the plain average over independent chains, which is
/// dominated by exponentially rare paths. Matrix draws and resampling
/// uniforms come from fixed streams, so every `μ` sees the same numbers.
fn log_growth(spec: &MatrixRecurrenceSpec, mu: f64, chains: usize, horizon: usize, rng: RngState) -> Result<(f64, f64)> {
    let n = spec.size();
    let mut draws = rng.substream(1).generator();
    let mut picks = rng.substream(2).generator();
    let uniform = DistributionSpec::uniform(0.0, 1.0);
    let start = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut states = vec![start; chains];
    let mut moved = states.clone();
    let mut weights = vec![0.0; chains];
    let mut omega = DMatrix::zeros(n, n);
    let mut log_sum = 0.0;
    let mut half = f64::NAN;
    for t in 0..horizon {
        for c in 0..chains {
            spec.draw_matrix(&mut draws, &mut omega);
            moved[c].gemv(1.0, &omega, &states[c], 0.0);
            let norm = moved[c].norm();
            weights[c] = norm.powf(mu);
            if norm > 0.0 {
                moved[c] /= norm;
            }
        }
        let mean = weights.iter().sum::<f64>() / chains as f64;
        if mean.is_nan() || mean.is_infinite() {
            return Err(Error::Numeric(format!("growth weight undefined at mu = {mu}, step {t}")));
        }
        if mean == 0.0 {
            return Ok((f64::NEG_INFINITY, f64::NEG_INFINITY));
        }
        log_sum += mean.ln();
        if t + 1 == horizon / 2 {
            half = log_sum / (t + 1) as f64;
        }
        // systematic resampling
        let u = uniform.sample(&mut picks);
        let mut cum = 0.0;
        let mut j = 0;
        for (c, w) in weights.iter().enumerate() {
            cum += w / mean;
            while j < chains && (j as f64 + u) < cum {
                states[j].copy_from(&moved[c]);
                j += 1;
            }
        }
        while j < chains {
            states[j].copy_from(&moved[chains - 1]);
            j += 1;
        }
    }
    Ok((half, log_sum / horizon as f64))
}

/// Solves `lim_t (E‖Ω_1⋯Ω_t‖^μ)^{1/t} = 1` using a finite horizon.
pub fn estimate_matrix_exponent(
    spec: &MatrixRecurrenceSpec,
    opts: MatrixExponentOptions,
    rng: RngState,
) -> Result<MatrixExponent> {
    spec.validate()?;
    if !(opts.mu_max > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::Config("mu_max and tol must be positive".into()));
    }
    if opts.horizon < 2 || opts.mc_budget < 2 {
        return Err(Error::Config("horizon and mc_budget must be at least 2".into()));
    }
    let f = |mu: f64| log_growth(spec, mu, opts.mc_budget, opts.horizon, rng);
    const SCAN: usize = 40;
    let step = opts.mu_max / SCAN as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for j in 1..=SCAN {
        let mu = step * j as f64;
        if f(mu)?.1 > 0.0 {
            hi = Some(mu);
            break;
        }
        lo = mu;
    }
    let Some(mut hi) = hi else {
        return Ok(MatrixExponent {
            mu: None,
            growth_half_horizon: None,
            converged: true,
            note: format!("g(mu) < 1 on all of (0, {}]", opts.mu_max),
        });
    };
    if lo == 0.0 {
        lo = hi;
        while f(lo)?.1 >= 0.0 {
            lo /= 2.0;
            if lo < 1e-9 {
                return Err(Error::Numeric("cannot bracket the matrix exponent near 0".into()));
            }
        }
    }
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)?.1 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let (half, full) = f(mu)?;
    let (g_half, g_full) = (half.exp(), full.exp());
    let converged = ((g_half - g_full) / g_full).abs() < 0.05;
    Ok(MatrixExponent {
        mu: Some(mu),
        growth_half_horizon: Some(g_half),
        converged,
        note: if converged {
            String::new()
        } else {
            format!("growth rate at horizon {} is {g_half:.4}, not within 5% of {g_full:.4}", opts.horizon / 2)
        },
    })
}

/// Hill band of `|x̄_t|`.
pub fn average_opinion_tail(path: &VectorPath, k: Option<usize>) -> Result<StabilityBand> {
    hill_band_series(&path.average, k)
}

/// Hill band of each component's absolute values.
pub fn component_tails(path: &VectorPath, k: Option<usize>) -> Result<Vec<StabilityBand>> {
    let n = path.components.first().map_or(0, |r| r.len());
    (0..n)
        .map(|i| hill_band_series(&path.component(i), k))
        .collect()
}
