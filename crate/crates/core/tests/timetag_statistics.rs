mod common;

use snspd_core::dynamics::{
    rate_dependent_efficiency_analytic, EfficiencyRecovery, PulseShape, RecoveryCurve,
};
use snspd_core::timetag::{
    autocorrelation_histogram, inter_event_delays, monte_carlo_efficiency, simulate_stream,
    SimulationSpec, SourceModel,
};

fn poisson_spec(rate_per_s: f64, duration_ns: f64) -> SimulationSpec {
    let curve = RecoveryCurve::new(
        PulseShape::new(0.0, 1.0).unwrap(),
        EfficiencyRecovery::step(0.0).unwrap(),
    )
    .unwrap();
    SimulationSpec {
        source: SourceModel::Cw { rate_per_s },
        curve,
        eta_max: 1.0,
        jitter_fwhm_ps: 0.0,
        dark_rate_per_s: 0.0,
        duration_ns,
    }
}

#[test]
fn poisson_delays_pass_ks_against_exponential() {
    let rate_per_s = 1e7;
    let stream = simulate_stream(&poisson_spec(rate_per_s, 1e7), 42).unwrap();
    let mut delays = inter_event_delays(&stream).unwrap();
    delays.sort_by(f64::total_cmp);
    let n = delays.len();
    let r = rate_per_s * 1e-9;
    let d = delays
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cdf = 1.0 - (-r * t).exp();
            (cdf - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(n > 50_000);
    assert!(
        d < common::ks_critical_1pct(n),
        "D = {d}, critical {}",
        common::ks_critical_1pct(n)
    );
}

#[test]
fn poisson_histogram_decays_at_source_rate() {
    let stream = simulate_stream(&poisson_spec(1e7, 1e7), 43).unwrap();
    let h = autocorrelation_histogram(&stream, 10.0, 1000.0).unwrap();
    // Expected fraction of delays in [0, 10) ns is 1 - exp(-0.1).
    let n = (h.total() + h.overflow()) as f64;
    let p = 1.0 - (-0.1f64).exp();
    let first = h.counts()[0] as f64;
    assert!((first - n * p).abs() <= 4.0 * (n * p * (1.0 - p)).sqrt());
}

#[test]
fn monte_carlo_matches_renewal_model_for_smooth_recovery() {
    let curve = RecoveryCurve::new(
        PulseShape::new(0.0, 20.0).unwrap(),
        EfficiencyRecovery::new(15.0, 30.0, None).unwrap(),
    )
    .unwrap();
    for (i, flux) in [3e5, 3e6, 3e7].into_iter().enumerate() {
        let analytic = rate_dependent_efficiency_analytic(&curve, flux, 0.9).unwrap();
        let mc = monte_carlo_efficiency(&curve, flux, 0.9, 50_000, 20, 90 + i as u64).unwrap();
        assert!(
            (mc.mean - analytic).abs() <= 3.0 * mc.std_error,
            "{flux}: MC {} ± {} vs {analytic}",
            mc.mean,
            mc.std_error
        );
    }
}
