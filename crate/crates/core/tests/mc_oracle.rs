use parabolic_sv::averaging::VolFunction;
use parabolic_sv::black_scholes::{bs_call_price, BsInputs};
use parabolic_sv::mc_oracle::{
    epsilon_sweep, mc_price, simulate_terminal, SimConfig, SlowScheme, YStart,
};
use parabolic_sv::params::{build_model, ModelParams, OptionSpec, RawModelParams};
use parabolic_sv::slow_factor::ou_mean;

fn model(raw: RawModelParams) -> ModelParams {
    build_model(raw).unwrap()
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt(), var)
}

#[test]
fn constant_vol_reduces_to_black_scholes() {
    let m = model(RawModelParams { eta: 0.0, ..Default::default() });
    let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.5).unwrap();
    // log-Euler is exact for constant σ, so one step suffices
    let cfg = SimConfig { n_paths: 1_000_000, steps_per_year: 2, ..Default::default() };
    let est = mc_price(&m, &spec, &VolFunction::Flat(0.2), &cfg).unwrap();
    let bs = bs_call_price(&BsInputs::new(100.0, 100.0, 0.0264, 0.2, 0.5)).unwrap();
    assert!((est.price - bs).abs() <= 3.0 * est.std_error, "{est:?} vs {bs}");
    assert_eq!(est.n_effective, 1_000_000);
}

#[test]
fn discounted_spot_is_a_martingale() {
    let m = model(RawModelParams { eta: 0.0, ..Default::default() });
    let spec = OptionSpec::new(100.0, 100.0, 0.0, 1.0).unwrap();
    let cfg = SimConfig { n_paths: 100_000, steps_per_year: 4, ..Default::default() };
    let ends = simulate_terminal(&m, &spec, &VolFunction::Flat(0.25), &cfg).unwrap();
    let disc = (-0.0264f64).exp();
    let (mean, se, _) = mean_and_se(ends.iter().map(|e| disc * e.x));
    assert!((mean - 100.0).abs() <= 3.0 * se, "{mean} ± {se}");
}

#[test]
fn ou_marginals_match_closed_forms() {
    let m = model(RawModelParams { eta: 0.05, epsilon: 0.2, ..Default::default() });
    let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.3).unwrap();
    let y0 = 0.6;
    let cfg = SimConfig {
        n_paths: 100_000,
        steps_per_year: 50,
        slow: SlowScheme::StochasticOu,
        y_start: YStart::Fixed(y0),
        ..Default::default()
    };
    let ends = simulate_terminal(&m, &spec, &VolFunction::SeparableExp, &cfg).unwrap();
    let n = ends.len() as f64;

    let decay = (-0.3f64 / 0.2).exp();
    let y_mean = m.m + (y0 - m.m) * decay;
    let y_var = m.nu * m.nu * (1.0 - decay * decay);
    let (mean, se, var) = mean_and_se(ends.iter().map(|e| e.y));
    assert!((mean - y_mean).abs() <= 3.0 * se, "Y mean {mean} vs {y_mean}");
    let var_se = y_var * (2.0 / n).sqrt();
    assert!((var - y_var).abs() <= 3.0 * var_se, "Y var {var} vs {y_var}");

    let z_mean = ou_mean(&m, 0.3);
    let z_var = m.eta * m.eta * (1.0 - (-2.0 * m.k * 0.3f64).exp()) / (2.0 * m.k);
    let (mean, se, var) = mean_and_se(ends.iter().map(|e| e.z));
    assert!((mean - z_mean).abs() <= 3.0 * se, "Z mean {mean} vs {z_mean}");
    let var_se = z_var * (2.0 / n).sqrt();
    assert!((var - z_var).abs() <= 3.0 * var_se, "Z var {var} vs {z_var}");
}

#[test]
fn results_independent_of_thread_count() {
    let m = model(RawModelParams::default());
    let spec = OptionSpec::new(100.0, 95.0, 0.0, 0.25).unwrap();
    let base = SimConfig { n_paths: 5000, steps_per_year: 400, seed: 11, ..Default::default() };
    let runs: Vec<_> = [Some(1), Some(3), None]
        .into_iter()
        .map(|threads| {
            mc_price(&m, &spec, &VolFunction::SeparableExp, &SimConfig { threads, ..base }).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    let other_seed = mc_price(&m, &spec, &VolFunction::SeparableExp, &SimConfig { seed: 12, ..base }).unwrap();
    assert_ne!(runs[0].price, other_seed.price);
}

#[test]
fn antithetic_agrees_with_plain_sampling() {
    let m = model(RawModelParams::default());
    let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.5).unwrap();
    let base = SimConfig { n_paths: 40_000, steps_per_year: 400, ..Default::default() };
    let f = VolFunction::SeparableExp;
    let plain = mc_price(&m, &spec, &f, &base).unwrap();
    let anti = mc_price(&m, &spec, &f, &SimConfig { antithetic: true, ..base }).unwrap();
    let se = plain.std_error.hypot(anti.std_error);
    assert!((plain.price - anti.price).abs() <= 3.0 * se);
    assert!(anti.std_error < plain.std_error);
}

#[test]
fn standard_error_scales_with_path_count() {
    let m = model(RawModelParams::default());
    let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.5).unwrap();
    let f = VolFunction::Flat(0.2);
    let cfg = SimConfig { n_paths: 50_000, steps_per_year: 2, ..Default::default() };
    let one = mc_price(&m, &spec, &f, &cfg).unwrap();
    let two = mc_price(&m, &spec, &f, &SimConfig { n_paths: 100_000, ..cfg }).unwrap();
    let ratio = two.std_error / one.std_error;
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() <= 0.2 * std::f64::consts::FRAC_1_SQRT_2);
}

#[test]
fn y_constant_sweep_error_is_noise_only() {
    // f = z: no correction, and the modification factor is the only gap
    let m = model(RawModelParams { eta: 0.0, ..Default::default() });
    let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.25).unwrap();
    let cfg = SimConfig { n_paths: 20_000, steps_per_year: 100, ..Default::default() };
    let rows = epsilon_sweep(&m, &spec, &VolFunction::YConstant, &cfg, &[0.04, 0.01]).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
    let se = rows[0].mc.std_error.hypot(rows[1].mc.std_error);
    assert!((errs[0] - errs[1]).abs() <= 3.0 * se, "{errs:?}");
    assert_eq!(rows[1].steps_per_year, 1000);
}
