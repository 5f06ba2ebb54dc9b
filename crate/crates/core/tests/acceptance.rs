//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! with the measured values; run with `--nocapture` to see them.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use kesten_core::kesten::{check_kesten, empirical_tail_ratio, grincevicius_from_moment, solve_exponent, SolverOptions, Verdict};
use kesten_core::market::{bubble_path, negative_feedback_path, simulate_market, volume_imbalance_relation, MarketConfig};
use kesten_core::matrix::{
    estimate_matrix_exponent, multiplier_matrix, spectral_radius, InputGenerator, MatrixExponentOptions,
    MatrixGenerator, MatrixMode, MatrixRecurrenceSpec, WeightMatrix,
};
use kesten_core::recurrence::{
    log_abs_increment_diagnostic, mean_multiplier, multiplier, simulate_path, simulate_path_with_inputs,
    variance_multiplier, RecurrenceSpec,
};
use kesten_core::scenario::{run_scenario, ScenarioConfig};
use kesten_core::tail::{hill_band_series, sample_shape};
use kesten_core::{DistributionSpec, RngState};

fn report(n: u32, name: &str, start: Instant, limit: Duration, checks: &[(bool, String)]) {
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let ok = in_time && checks.iter().all(|(c, _)| *c);
    let details: Vec<String> = checks
        .iter()
        .map(|(c, d)| format!("{}{d}", if *c { "" } else { "[x] " }))
        .collect();
    println!(
        "criterion {n:2} {name}: {} ({}; {:.1}s of {}s)",
        if ok { "PASS" } else { "FAIL" },
        details.join("; "),
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {n} failed");
}

fn within_ulp(x: f64, target: f64) -> bool {
    (x - target).abs() <= f64::EPSILON * target.abs()
}

fn uniform_2() -> DistributionSpec {
    DistributionSpec::uniform(0.0, 2.0)
}

fn two_point_jittered() -> DistributionSpec {
    DistributionSpec::two_point(2.0, 0.2, 0.5).jittered(0.01)
}

fn tail_band(values: &[f64]) -> kesten_core::tail::StabilityBand {
    hill_band_series(values, None).unwrap()
}

#[test]
fn criterion_01_multiplier_algebra() {
    let start = Instant::now();
    let k = multiplier(0.9).unwrap();
    let mut checks = vec![
        (within_ulp(k, 10.0), format!("multiplier(0.9) = {k:?}")),
        (
            multiplier(0.875).unwrap() == 8.0 && multiplier(0.5).unwrap() == 2.0,
            "multiplier(0.875) = 8 and multiplier(0.5) = 2 bitwise".into(),
        ),
    ];
    let mut worst: f64 = 0.0;
    for i in -19..20 {
        let a = i as f64 / 20.0;
        // geometric series as the independent closed form
        let series = |q: f64| (0..20_000).map(|j| q.powi(j)).sum::<f64>();
        let rel = |x: f64, y: f64| ((x - y) / y).abs();
        worst = worst
            .max(rel(multiplier(a).unwrap(), series(a)))
            .max(rel(variance_multiplier(a).unwrap(), series(a * a)))
            .max(rel(mean_multiplier(a).unwrap(), series(a)))
            .max(rel(variance_multiplier(a).unwrap(), 1.0 / (1.0 - a * a)));
    }
    checks.push((worst < 1e-13, format!("max relative error vs series {worst:.1e}")));
    report(1, "multiplier algebra", start, Duration::from_secs(1), &checks);
}

#[test]
fn criterion_02_random_walk_regime() {
    let start = Instant::now();
    let cfg = MarketConfig::clearing(DistributionSpec::normal(0.0, 0.02), 10_000.0);
    let path = simulate_market(&cfg, 100_000, RngState::new(20240101, 0)).unwrap();
    let shape = sample_shape(&path.returns()).unwrap();
    let target = 0.02 / 100.0;
    report(
        2,
        "random-walk regime",
        start,
        Duration::from_secs(30),
        &[
            ((shape.sd / target - 1.0).abs() < 0.05, format!("sd {:.4e} vs {target:.1e}", shape.sd)),
            (shape.skewness.abs() < 0.05, format!("skew {:.4}", shape.skewness)),
            (shape.excess_kurtosis.abs() < 0.1, format!("excess kurtosis {:.4}", shape.excess_kurtosis)),
        ],
    );
}

#[test]
fn criterion_03_bubble_and_paradox() {
    let start = Instant::now();
    let rho = 0.1;
    let b = bubble_path(rho, 1.0, 200).unwrap();
    let worst = b
        .windows(2)
        .map(|w| ((w[1] / w[0]).ln() - (1.0 + rho).ln()).abs())
        .fold(0.0, f64::max);
    let mut checks = vec![(worst < 1e-12, format!("max |growth - ln 1.1| = {worst:.1e}"))];
    let f = 100.0;
    let mut table = Vec::new();
    let mut iff = true;
    for rho in [0.3, 1.0, 1.7, 1.99, 2.0, 2.5, 3.0] {
        let p = negative_feedback_path(rho, f, 150.0, 20_000).unwrap();
        let gap = (p[19_999] - f).abs();
        let converges = gap < 1e-6 * 50.0;
        iff &= converges == ((1.0f64 - rho).abs() < 1.0);
        table.push(format!("{rho}:{}", if converges { "conv" } else { "no" }));
    }
    checks.push((iff, format!("negative feedback {}", table.join(" "))));
    let p = negative_feedback_path(2.5, f, 150.0, 30).unwrap();
    let growing = p.windows(2).all(|w| (w[1] - f).abs() > (w[0] - f).abs());
    checks.push((growing, format!("rho 2.5 gap after 30 steps {:.3e}", (p[29] - f).abs())));
    report(3, "bubble and paradox", start, Duration::from_secs(1), &checks);
}

#[test]
fn criterion_04_kesten_exponent_closed_loop() {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let mu_u = solve_exponent(&uniform_2(), opts, RngState::new(0, 0)).unwrap().mu.unwrap();
    let oracle = 2f64.powf(mu_u) / (mu_u + 1.0) - 1.0;
    let spec = RecurrenceSpec::lagged(uniform_2(), DistributionSpec::normal(0.0, 1.0));
    let s = simulate_path(&spec, 1_000_000, 10_000, RngState::new(41, 0)).unwrap();
    let band_u = tail_band(&s.values);

    let mu_t = solve_exponent(&two_point_jittered(), opts, RngState::new(0, 0)).unwrap().mu.unwrap();
    let spec = RecurrenceSpec::lagged(two_point_jittered(), DistributionSpec::normal(0.0, 1.0));
    let s = simulate_path(&spec, 10_000_000, 10_000, RngState::new(42, 0)).unwrap();
    let band_t = tail_band(&s.values);
    let iv = |b: &kesten_core::tail::StabilityBand| {
        let (lo, hi) = b.interval();
        format!("[{lo:.3}, {hi:.3}]")
    };
    report(
        4,
        "Kesten exponent closed loop",
        start,
        Duration::from_secs(300),
        &[
            ((mu_u - 1.0).abs() <= 0.02 && oracle.abs() < 1e-9, format!("uniform root {mu_u:.6}")),
            (band_u.contains(1.0), format!("uniform Hill band {} at 1e6", iv(&band_u))),
            ((mu_t - 2.0).abs() <= 0.05, format!("two_point root {mu_t:.6}")),
            (band_t.contains(2.0), format!("two_point Hill band {} at 1e7", iv(&band_t))),
        ],
    );
}

#[test]
fn criterion_05_market_self_consistency() {
    let start = Instant::now();
    let cfg = ScenarioConfig::load("kesten-stock").unwrap();
    let art = run_scenario(&cfg).unwrap();
    let s = &art.summary;
    let root = s["solver"]["solution"]["mu"].as_f64().unwrap_or(f64::NAN);
    let interval = &s["tail"]["band"]["interval"];
    let q_interval = &s["market"]["excess_demand_tail"]["interval"];
    report(
        5,
        "market self-consistency",
        start,
        Duration::from_secs(300),
        &[
            (
                s["tail"]["contains_solver_root"] == serde_json::json!(true),
                format!("solver root {root:.4}, |r| Hill band {interval}"),
            ),
            (
                s["market"]["return_excess_demand_agree"] == serde_json::json!(true),
                format!("|q| Hill band {q_interval}"),
            ),
        ],
    );
}

#[test]
fn criterion_06_volume_relation() {
    let start = Instant::now();
    let mut g = RngState::new(61, 0).generator();
    let (vlaw, nu) = (DistributionSpec::pareto(1.5, 1.0), DistributionSpec::normal(0.0, 1.0));
    let v = vlaw.sample_n(1_000_000, &mut g);
    let q: Vec<f64> = v.iter().map(|x| nu.sample(&mut g) * x.sqrt()).collect();
    let rel = volume_imbalance_relation(&v, &q).unwrap();
    let mu_q = rel.q_band.central.exponent;
    let ratio = rel.fitted_exponent_ratio.unwrap_or(f64::NAN);
    report(
        6,
        "volume relation",
        start,
        Duration::from_secs(60),
        &[
            ((mu_q - 3.0).abs() <= 0.3, format!("mu_q {mu_q:.3}")),
            ((ratio - 2.0).abs() <= 0.3, format!("mu_q / mu_v {ratio:.3}")),
        ],
    );
}

#[test]
fn criterion_07_grincevicius_regime() {
    let start = Instant::now();
    // E(a^1.5) = c^1.5 / 2.5 = 0.5 for a ~ uniform(0, c)
    let c = 1.25f64.powf(2.0 / 3.0);
    let a = DistributionSpec::uniform(0.0, c);
    let m = a.moment(1.5, 10, RngState::new(0, 0)).unwrap().value().unwrap();
    let spec = RecurrenceSpec::lagged(a, DistributionSpec::pareto(1.5, 1.0));
    let (s, e) = simulate_path_with_inputs(&spec, 10_000_000, 1000, RngState::new(71, 0)).unwrap();
    let ratio = empirical_tail_ratio(&s.values, &e, 0.999).unwrap();
    let (_, amp) = grincevicius_from_moment(0.9).unwrap();
    report(
        7,
        "Grincevicius regime",
        start,
        Duration::from_secs(600),
        &[
            ((m - 0.5).abs() < 1e-12, format!("E(a^1.5) = {m:.12}")),
            ((ratio / 2.0 - 1.0).abs() <= 0.25, format!("tail ratio {ratio:.3} vs 2")),
            (within_ulp(amp, 9.0), format!("amplification at 0.9 = {amp:?}")),
        ],
    );
}

#[test]
fn criterion_08_log_abs_random_walk() {
    let start = Instant::now();
    let spec = RecurrenceSpec::lagged(uniform_2(), DistributionSpec::normal(0.0, 1.0));
    let s = simulate_path(&spec, 1_000_000, 10_000, RngState::new(81, 0)).unwrap();
    let mut abs: Vec<f64> = s.values.iter().map(|x| x.abs()).collect();
    abs.sort_unstable_by(f64::total_cmp);
    let threshold = abs[(abs.len() as f64 * 0.99) as usize];
    let inc = log_abs_increment_diagnostic(&s, threshold).unwrap();
    let target = 2f64.ln() - 1.0;
    let z = (inc.mean_increment - target) / inc.std_error;
    report(
        8,
        "log |r| random walk",
        start,
        Duration::from_secs(60),
        &[(
            z.abs() <= 2.0,
            format!("mean increment {:.4} +- {:.4} vs {target:.4} (z = {z:.2}, n = {})", inc.mean_increment, inc.std_error, inc.count),
        )],
    );
}

#[test]
fn criterion_09_matrix_machinery() {
    let start = Instant::now();
    let mut g = RngState::new(91, 0).generator();
    let u = DistributionSpec::uniform(0.0, 1.0);
    let sign = DistributionSpec::uniform(-1.0, 1.0);

    let mut neumann_err: f64 = 0.0;
    let mut cases = vec![WeightMatrix::ring(4, 0.6), WeightMatrix::complete(5, 0.18)];
    for n in [2, 3, 6] {
        // random substochastic with row sums at most 0.8
        let m = DMatrix::from_fn(n, n, |_, _| u.sample(&mut g) * 0.8 / n as f64);
        cases.push(WeightMatrix::from_matrix(m).unwrap());
    }
    for w in &cases {
        let k = multiplier_matrix(w).unwrap();
        let n = w.size();
        let (mut sum, mut term) = (DMatrix::identity(n, n), DMatrix::identity(n, n));
        for _ in 0..2000 {
            term = &term * w.matrix();
            sum += &term;
        }
        neumann_err = neumann_err.max((k - sum).amax());
    }

    let mut bound_ok = true;
    for i in 0..1000 {
        let n = 2 + i % 7;
        let m = DMatrix::from_fn(n, n, |_, _| sign.sample(&mut g));
        let row_bound = m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        bound_ok &= spectral_radius(&m, 1e-13).unwrap() <= row_bound * (1.0 + 1e-12);
    }

    let mut exponent_checks = Vec::new();
    for law in [uniform_2(), two_point_jittered()] {
        let scalar = solve_exponent(&law, SolverOptions::default(), RngState::new(0, 0)).unwrap().mu.unwrap();
        let spec = MatrixRecurrenceSpec {
            mode: MatrixMode::CrossAsset,
            matrix: MatrixGenerator::ScalarDiagonal { law: law.clone(), size: 3 },
            input: InputGenerator::Iid(DistributionSpec::normal(0.0, 1.0)),
        };
        let est = estimate_matrix_exponent(&spec, MatrixExponentOptions::default(), RngState::new(92, 0))
            .unwrap()
            .mu
            .unwrap_or(f64::NAN);
        exponent_checks.push(((est - scalar).abs() <= 0.1, format!("{law}: matrix {est:.4} vs scalar {scalar:.4}")));
    }
    let mut checks = vec![
        (neumann_err <= 1e-8, format!("max Neumann deviation {neumann_err:.1e}")),
        (bound_ok, "spectral radius within row-sum bound on 1000 matrices".into()),
    ];
    checks.extend(exponent_checks);
    report(9, "matrix machinery", start, Duration::from_secs(300), &checks);
}

#[test]
fn criterion_10_condition_checkers() {
    let start = Instant::now();
    let normal = DistributionSpec::normal(0.0, 1.0);
    let u = check_kesten(&uniform_2(), &normal, 1.0, 100_000, RngState::new(101, 0)).unwrap();
    let t = check_kesten(&DistributionSpec::two_point(2.0, 0.2, 0.5), &normal, 2.0, 100_000, RngState::new(102, 0))
        .unwrap();
    let d = check_kesten(
        &DistributionSpec::Constant(0.5),
        &DistributionSpec::Constant(2.0),
        1.0,
        100_000,
        RngState::new(103, 0),
    )
    .unwrap();
    let verdicts = |r: &kesten_core::kesten::KestenReport| {
        format!("{:?}/{:?}/{:?}/{:?}", r.condition_i, r.condition_ii, r.condition_iii, r.condition_iv)
    };
    report(
        10,
        "condition checkers",
        start,
        Duration::from_secs(5),
        &[
            (u.all_pass(), format!("uniform {} all pass", verdicts(&u))),
            (
                t.condition_iv == Verdict::Fail && t.condition_i == Verdict::Pass,
                format!("two_point {} iv fails", verdicts(&t)),
            ),
            (d.degenerate, "constant a = 0.5, e = 2 flagged degenerate".into()),
        ],
    );
}
