use kesten_core::kesten::{empirical_tail_ratio, grincevicius_predict, solve_exponent, SolverOptions};
use kesten_core::market::{simulate_market, MarketConfig};
use kesten_core::recurrence::{simulate_path, simulate_path_with_inputs, Lag, RecurrenceSpec};
use kesten_core::scenario::{read_csv_column, run_scenario, ScenarioConfig};
use kesten_core::tail::hill_band_series;
use kesten_core::{DistributionSpec, RngState};

fn ks_distance(mut x: Vec<f64>, mut y: Vec<f64>) -> f64 {
    x.sort_unstable_by(f64::total_cmp);
    y.sort_unstable_by(f64::total_cmp);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

#[test]
fn stationary_law_forgets_the_start() {
    let spec = RecurrenceSpec::lagged(DistributionSpec::uniform(0.0, 2.0), DistributionSpec::normal(0.0, 1.0));
    let a = simulate_path(&spec.clone().with_r0(0.0), 1_000_000, 10_000, RngState::new(31, 0)).unwrap();
    let b = simulate_path(&spec.with_r0(1e3), 1_000_000, 10_000, RngState::new(31, 1)).unwrap();
    let d = ks_distance(a.values, b.values);
    assert!(d < 0.01, "KS distance {d}");
}

#[test]
fn uniform_feedback_tail_matches_root() {
    let a = DistributionSpec::uniform(0.0, 1.6);
    let root = solve_exponent(&a, SolverOptions::default(), RngState::new(0, 0)).unwrap().mu.unwrap();
    assert!((1.6f64.powf(root) / (root + 1.0) - 1.0).abs() < 1e-9, "root {root}");
    let spec = RecurrenceSpec::lagged(a, DistributionSpec::normal(0.0, 1.0));
    let s = simulate_path(&spec, 10_000_000, 10_000, RngState::new(32, 0)).unwrap();
    let band = hill_band_series(&s.values, None).unwrap();
    assert!(band.contains(root), "root {root}, band {:?}", band.interval());
    assert!(band.power_law);
}

#[test]
fn heavy_input_is_amplified() {
    let c = 1.25f64.powf(2.0 / 3.0);
    let a = DistributionSpec::uniform(0.0, c);
    let pred = grincevicius_predict(&a, 1.5, false, 1000, RngState::new(0, 0)).unwrap();
    assert!((pred.moment - 0.5).abs() < 1e-12 && (pred.tail_ratio - 2.0).abs() < 1e-12);
    let spec = RecurrenceSpec::lagged(a, DistributionSpec::pareto(1.5, 1.0));
    let (s, e) = simulate_path_with_inputs(&spec, 2_000_000, 1000, RngState::new(33, 0)).unwrap();
    let ratio = empirical_tail_ratio(&s.values, &e, 0.999).unwrap();
    assert!((ratio / 2.0 - 1.0).abs() < 0.25, "ratio {ratio}");
}

#[test]
fn impact_market_is_a_kesten_recurrence() {
    let cfg = ScenarioConfig::load("kesten-stock").unwrap();
    let market = cfg.market.unwrap().config;
    let path = simulate_market(&market, 20_000, RngState::new(34, 0)).unwrap();
    let k = market.alpha * market.beta;
    for w in path.steps.windows(2) {
        let a = k * w[1].n as f64 / w[1].l;
        let expected = a * (w[0].r + w[1].b);
        assert!((w[1].r - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "{} vs {expected}", w[1].r);
    }
}

#[test]
fn clearing_market_matches_recurrence_with_zero_feedback() {
    // with rho = 0 the clearing return is the plain average prediction error
    let market = MarketConfig::clearing(DistributionSpec::normal(0.0, 0.02), 100.0);
    let path = simulate_market(&market, 50_000, RngState::new(35, 0)).unwrap();
    let r = path.returns();
    let sd = (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
    assert!((sd / 0.002 - 1.0).abs() < 0.02, "sd {sd}");
    let lag0 = RecurrenceSpec::coupled(DistributionSpec::Constant(0.0), DistributionSpec::normal(0.0, 1.0), Lag::Instantaneous);
    let s = simulate_path(&lag0, 1000, 0, RngState::new(35, 1)).unwrap();
    assert!(s.values.iter().all(|x| *x == 0.0));
}

#[test]
fn written_series_round_trip() {
    let mut cfg = ScenarioConfig::load("grincevicius").unwrap();
    cfg.run.length = 5000;
    let art = run_scenario(&cfg).unwrap();
    let csv = &art.files.iter().find(|(n, _)| n == "series.csv").unwrap().1;
    let spec = cfg.recurrence.as_ref().unwrap();
    let direct = simulate_path(spec, 5000, cfg.run.burn_in, RngState::new(cfg.run.seed, 0)).unwrap();
    assert_eq!(read_csv_column(csv, "r").unwrap(), direct.values);
    assert!(art.summary["grincevicius"]["prediction"]["tail_ratio"].as_f64().is_some());
}
