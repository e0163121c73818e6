//! First-order price `(1+g)·[Q₀ + √ε·τ(t,T)·V·D₁D₂Q₀]`.
//!
//! `Q₀` is the Black-Scholes call at the effective volatility, `1+g` the
//! deterministic modification factor and `τ(t,T)` the bracketed time factor
//! of the first correction.

use crate::averaging::{effective_params, AveragingCache, EffectiveParams, SigmaBarConvention, VolFunction};
use crate::black_scholes::{bs_call_price, d1d2_call, BsInputs};
use crate::error::{guard_nonzero, Error, Result};
use crate::params::{ModelParams, OptionSpec};
use crate::quadrature::GaussLegendre;
use crate::slow_factor::{gamma_coefficient, parabolic_coefficients};

/// `1 + g = |kt−2|^{(a−2r)/k} · e^{(2r−a)/(k|kt−2|)} / e^{(2r−a)t/2}`.
pub fn modification_factor(t: f64, a: f64, r: f64, k: f64) -> Result<f64> {
    let dist = (k * t - 2.0).abs();
    guard_nonzero("k*t - 2", dist)?;
    let c = 2.0 * r - a;
    let log = -(c / k) * dist.ln() + c / (k * dist) - c * t / 2.0;
    Ok(log.exp())
}

/// `2·[ (1/k)·ln((kT−2)/(kt−2)) + (T−t)/((kT−2)(kt−2)) ]`, zero at `t = T`.
pub fn p1_time_factor(t: f64, maturity: f64, k: f64) -> Result<f64> {
    let near = k * t - 2.0;
    let far = k * maturity - 2.0;
    guard_nonzero("k*t - 2", near)?;
    guard_nonzero("k*T - 2", far)?;
    if far > 0.0 {
        return Err(Error::LogDomain {
            quantity: "2 - k*T",
            value: -far,
        });
    }
    let ratio = far / near;
    if ratio <= 0.0 {
        return Err(Error::LogDomain {
            quantity: "(kT-2)/(kt-2)",
            value: ratio,
        });
    }
    let log = (k * (maturity - t) / near).ln_1p();
    Ok(2.0 * (log / k + (maturity - t) / (far * near)))
}

/// How the volatility entering `Q₀` is taken from `σ̄(z(s))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolFreeze {
    /// `σ̄(z(t))` at the valuation time.
    #[default]
    Pointwise,
    /// Root of the average of `σ̄²(z(s))` over `[t, T]`.
    IntegratedVariance,
}

/// Where the correction operator is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionForm {
    /// `(1+g)·[Q₀ + √ε τ V D₁D₂ Q₀]`.
    #[default]
    OnClassical,
    /// `P₀ + √ε τ V D₁D₂ P₀`.
    OnModified,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PricingOptions {
    pub convention: SigmaBarConvention,
    pub vol_freeze: VolFreeze,
    pub form: CorrectionForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceDiagnostics {
    /// `γ(t)`, absent when `kt` sits on the singularity.
    pub gamma: Option<f64>,
    pub sigma_rel_change: f64,
    pub v_rel_change: f64,
    /// The price came from the payoff branch at `t = T`.
    pub at_maturity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBreakdown {
    pub q0: f64,
    pub mod_factor: f64,
    pub p0: f64,
    pub time_factor: f64,
    pub sigma_bar: f64,
    pub z: f64,
    pub v: f64,
    /// `D₁D₂Q₀`.
    pub d1d2: f64,
    /// `√ε·P₁`.
    pub correction: f64,
    pub total: f64,
    pub diagnostics: PriceDiagnostics,
}

/// Modified Black-Scholes price `(1+g)·Q₀(σ̄)`, the payoff at maturity.
pub fn p0(spec: &OptionSpec, model: &ModelParams, eff: &EffectiveParams) -> Result<f64> {
    if spec.t == spec.maturity {
        return Ok(spec.payoff());
    }
    let q0 = bs_call_price(&BsInputs::new(spec.spot, spec.strike, model.r, eff.sigma_bar, spec.tau()))?;
    Ok(modification_factor(spec.t, model.a, model.r, model.k)? * q0)
}

pub fn price_first_order(spec: &OptionSpec, model: &ModelParams, f: &VolFunction) -> Result<PriceBreakdown> {
    price_first_order_with(spec, model, f, PricingOptions::default(), None)
}

fn averaging(
    cache: Option<&AveragingCache>,
    f: &VolFunction,
    z: f64,
    model: &ModelParams,
    convention: SigmaBarConvention,
) -> Result<EffectiveParams> {
    match cache {
        Some(c) => c.effective_params(f, z, model.m, model.nu, model.rho_xy, convention),
        None => effective_params(f, z, model.m, model.nu, model.rho_xy, convention),
    }
}

pub fn price_first_order_with(
    spec: &OptionSpec,
    model: &ModelParams,
    f: &VolFunction,
    opts: PricingOptions,
    cache: Option<&AveragingCache>,
) -> Result<PriceBreakdown> {
    let slow = parabolic_coefficients(model);
    let z = slow.value(spec.t);
    if spec.t == spec.maturity {
        let payoff = spec.payoff();
        return Ok(PriceBreakdown {
            q0: payoff,
            mod_factor: 1.0,
            p0: payoff,
            time_factor: 0.0,
            sigma_bar: f64::NAN,
            z,
            v: 0.0,
            d1d2: 0.0,
            correction: 0.0,
            total: payoff,
            diagnostics: PriceDiagnostics {
                gamma: gamma_coefficient(model.k, spec.t).ok(),
                sigma_rel_change: 0.0,
                v_rel_change: 0.0,
                at_maturity: true,
            },
        });
    }

    let eff = averaging(cache, f, z, model, opts.convention)?;
    let sigma = match opts.vol_freeze {
        VolFreeze::Pointwise => eff.sigma_bar,
        VolFreeze::IntegratedVariance => {
            let gl = GaussLegendre::new(16);
            let mut failure = None;
            let var = gl.integrate(spec.t, spec.maturity, |s| {
                match averaging(cache, f, slow.value(s), model, opts.convention) {
                    Ok(e) => e.sigma_bar * e.sigma_bar,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            (var / spec.tau()).sqrt()
        }
    };

    let bs = BsInputs::new(spec.spot, spec.strike, model.r, sigma, spec.tau());
    let q0 = bs_call_price(&bs)?;
    let d1d2 = d1d2_call(&bs)?;
    let mod_factor = modification_factor(spec.t, model.a, model.r, model.k)?;
    let time_factor = p1_time_factor(spec.t, spec.maturity, model.k)?;
    let sqrt_eps = model.epsilon.sqrt();
    let p0 = mod_factor * q0;
    let (correction, total) = match opts.form {
        CorrectionForm::OnClassical => {
            let inner = sqrt_eps * time_factor * eff.v * d1d2;
            (mod_factor * inner, mod_factor * (q0 + inner))
        }
        CorrectionForm::OnModified => {
            let corr = sqrt_eps * time_factor * eff.v * (mod_factor * d1d2);
            (corr, p0 + corr)
        }
    };
    Ok(PriceBreakdown {
        q0,
        mod_factor,
        p0,
        time_factor,
        sigma_bar: sigma,
        z,
        v: eff.v,
        d1d2,
        correction,
        total,
        diagnostics: PriceDiagnostics {
            gamma: gamma_coefficient(model.k, spec.t).ok(),
            sigma_rel_change: eff.sigma_rel_change,
            v_rel_change: eff.v_rel_change,
            at_maturity: false,
        },
    })
}

/// Operator used by [`p0_pde_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualMode {
    /// `(1+γ)∂_t + ½σ̄²x²∂²_x + r(x∂_x − ·)` applied to `(1+g)Q₀`.
    #[default]
    Modified,
    /// `γ ≡ 0` and `1+g ≡ 1`: the classical Black-Scholes operator on `Q₀`.
    Classical,
}

/// Finite-difference residual of the averaged operator applied to `P₀`,
/// normalized by `r·P₀`. Needs `0 < t < T`.
pub fn p0_pde_residual(
    spec: &OptionSpec,
    model: &ModelParams,
    eff: &EffectiveParams,
    mode: ResidualMode,
) -> Result<f64> {
    if !(spec.t > 0.0 && spec.t < spec.maturity) {
        return Err(Error::Domain(format!(
            "PDE residual needs 0 < t < T, got t = {}, T = {}",
            spec.t, spec.maturity
        )));
    }
    let sigma = eff.sigma_bar;
    let price = |t: f64, x: f64| -> Result<f64> {
        let q0 = bs_call_price(&BsInputs::new(x, spec.strike, model.r, sigma, spec.maturity - t))?;
        Ok(match mode {
            ResidualMode::Modified => modification_factor(t, model.a, model.r, model.k)? * q0,
            ResidualMode::Classical => q0,
        })
    };
    let (t, x) = (spec.t, spec.spot);
    let ht = 1e-4 * spec.t.min(spec.tau());
    let hx = 1e-4 * x;
    let centre = price(t, x)?;
    let dt = (price(t + ht, x)? - price(t - ht, x)?) / (2.0 * ht);
    let up = price(t, x + hx)?;
    let dn = price(t, x - hx)?;
    let dx = (up - dn) / (2.0 * hx);
    let dxx = (up - 2.0 * centre + dn) / (hx * hx);
    let time_coef = match mode {
        ResidualMode::Modified => 1.0 + gamma_coefficient(model.k, t)?,
        ResidualMode::Classical => 1.0,
    };
    let residual = time_coef * dt + 0.5 * sigma * sigma * x * x * dxx + model.r * (x * dx - centre);
    Ok(residual / (model.r * centre).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{build_model, RawModelParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn spx() -> ModelParams {
        build_model(RawModelParams::default()).unwrap()
    }

    #[test]
    fn modification_factor_reported_value() {
        for t in [0.0, 0.25, 0.5] {
            let g = modification_factor(t, 0.05, 0.0264, 0.008).unwrap();
            assert_abs_diff_eq!(g, 0.934, epsilon = 1e-3);
        }
        let g0 = modification_factor(0.0, 0.05, 0.0264, 0.008).unwrap();
        // 2^{-0.35} e^{0.175}
        assert_relative_eq!(g0, 2f64.powf(-0.35) * 0.175f64.exp(), max_relative = 1e-14);
        assert_abs_diff_eq!(g0, 0.9346, epsilon = 1e-4);
    }

    #[test]
    fn modification_factor_degenerate_and_singular() {
        assert_eq!(modification_factor(0.3, 0.0528, 0.0264, 0.008).unwrap(), 1.0);
        assert!(matches!(
            modification_factor(250.0, 0.05, 0.0264, 0.008),
            Err(Error::SingularTime { quantity: "k*t - 2", .. })
        ));
    }

    #[test]
    fn time_factor_values() {
        assert_eq!(p1_time_factor(0.5, 0.5, 0.008).unwrap(), 0.0);
        let tf = p1_time_factor(0.0, 0.5, 0.008).unwrap();
        // mpmath at 30 digits
        assert_abs_diff_eq!(tf, -0.249999665664261321880712, epsilon = 1e-14);
        assert!(p1_time_factor(0.0, 0.5, 0.008).unwrap() < p1_time_factor(0.4, 0.5, 0.008).unwrap());
        assert!(p1_time_factor(0.499999, 0.5, 0.008).unwrap().abs() < 1e-6);
        assert!(matches!(p1_time_factor(0.0, 3.0, 1.0), Err(Error::LogDomain { .. })));
        assert!(matches!(p1_time_factor(0.0, 2.0, 1.0), Err(Error::SingularTime { .. })));
    }

    #[test]
    fn p0_examples() {
        let model = spx();
        let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.5).unwrap();
        let eff = EffectiveParams::flat(0.2, model.z0);
        let value = p0(&spec, &model, &eff).unwrap();
        let expected = modification_factor(0.0, 0.05, 0.0264, 0.008).unwrap() * 6.280235750525051;
        assert_relative_eq!(value, expected, max_relative = 1e-12);
        assert_abs_diff_eq!(value, 5.87, epsilon = 2e-3);

        let at_maturity = OptionSpec::new(120.0, 100.0, 0.5, 0.5).unwrap();
        assert_eq!(p0(&at_maturity, &model, &eff).unwrap(), 20.0);
    }

    #[test]
    fn p0_tends_to_q0_as_a_approaches_2r() {
        let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.5).unwrap();
        let eff = EffectiveParams::flat(0.2, 0.2);
        let model = spx().with(|p| p.a = 2.0 * p.r + 1e-12).unwrap();
        assert_relative_eq!(p0(&spec, &model, &eff).unwrap(), 6.280235750525051, max_relative = 1e-9);
    }

    #[test]
    fn zero_correlation_collapses_to_modified_bs() {
        let model = spx().with(|p| p.rho_xy = 0.0).unwrap();
        let spec = OptionSpec::new(105.0, 100.0, 0.0, 0.5).unwrap();
        let b = price_first_order(&spec, &model, &VolFunction::SeparableExp).unwrap();
        assert_eq!(b.v, 0.0);
        assert_eq!(b.correction, 0.0);
        assert_relative_eq!(b.total / b.mod_factor, b.q0, max_relative = 1e-12);
    }

    #[test]
    fn correction_forms_agree() {
        let model = spx();
        let spec = OptionSpec::new(95.0, 100.0, 0.1, 0.75).unwrap();
        let f = VolFunction::SeparableExp;
        let a = price_first_order(&spec, &model, &f).unwrap();
        let b = price_first_order_with(
            &spec,
            &model,
            &f,
            PricingOptions {
                form: CorrectionForm::OnModified,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert_relative_eq!(a.total, b.total, max_relative = 1e-14);
        assert!(a.correction != 0.0);
    }

    #[test]
    fn integrated_variance_close_to_pointwise_for_slow_drift() {
        let model = spx();
        let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.5).unwrap();
        let f = VolFunction::SeparableExp;
        let a = price_first_order(&spec, &model, &f).unwrap();
        let b = price_first_order_with(
            &spec,
            &model,
            &f,
            PricingOptions {
                vol_freeze: VolFreeze::IntegratedVariance,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        // z drifts from 0.2 to 0.1998 over the life of the option
        assert!(b.sigma_bar < a.sigma_bar);
        assert_relative_eq!(a.sigma_bar, b.sigma_bar, max_relative = 1e-3);
    }

    #[test]
    fn classical_residual_is_small() {
        let model = spx();
        let spec = OptionSpec::new(100.0, 100.0, 0.2, 0.7).unwrap();
        let eff = EffectiveParams::flat(0.25, model.z0);
        let res = p0_pde_residual(&spec, &model, &eff, ResidualMode::Classical).unwrap();
        assert!(res.abs() <= 1e-4, "{res}");
        let modified = p0_pde_residual(&spec, &model, &eff, ResidualMode::Modified).unwrap();
        assert!(modified.is_finite());
        assert!(p0_pde_residual(&OptionSpec::new(100.0, 100.0, 0.0, 0.7).unwrap(), &model, &eff, ResidualMode::Classical).is_err());
    }

    #[test]
    fn residual_continuous_in_t() {
        let model = spx();
        let eff = EffectiveParams::flat(0.25, model.z0);
        let at = |t: f64| {
            let spec = OptionSpec::new(100.0, 100.0, t, 1.0).unwrap();
            p0_pde_residual(&spec, &model, &eff, ResidualMode::Modified).unwrap()
        };
        let (a, b) = (at(0.4), at(0.4001));
        assert!((a - b).abs() < 1e-2 * a.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn boundary_is_payoff(x in 1.0f64..300.0, k in 1.0f64..300.0, t in 0.0f64..1.5, rho in -0.9f64..0.9) {
            let model = spx().with(|p| p.rho_xy = rho).unwrap();
            let spec = OptionSpec::new(x, k, t, t).unwrap();
            let b = price_first_order(&spec, &model, &VolFunction::SeparableExp).unwrap();
            prop_assert_eq!(b.total, (x - k).max(0.0));
            prop_assert_eq!(b.correction, 0.0);
        }

        #[test]
        fn homogeneous_in_spot_and_strike(m in 0.7f64..1.3, tau in 0.1f64..1.5) {
            let model = spx();
            let f = VolFunction::SeparableExp;
            let base = price_first_order(&OptionSpec::new(100.0 * m, 100.0, 0.0, tau).unwrap(), &model, &f).unwrap();
            for c in [2.0, 10.0] {
                let scaled = price_first_order(&OptionSpec::new(100.0 * m * c, 100.0 * c, 0.0, tau).unwrap(), &model, &f).unwrap();
                prop_assert!((scaled.total - c * base.total).abs() <= 1e-8 * c * base.total.abs(), "{scaled:?} {base:?}");
            }
        }

        #[test]
        fn correction_scales_with_sqrt_epsilon(eps in 1e-4f64..0.1) {
            let spec = OptionSpec::new(100.0, 100.0, 0.0, 0.5).unwrap();
            let f = VolFunction::SeparableExp;
            let base = price_first_order(&spec, &spx().with(|p| p.epsilon = 0.01).unwrap(), &f).unwrap();
            let b = price_first_order(&spec, &spx().with(|p| p.epsilon = eps).unwrap(), &f).unwrap();
            let expected = base.correction * (eps / 0.01).sqrt();
            prop_assert!((b.correction - expected).abs() <= 1e-12 * expected.abs());
            prop_assert!((b.total - b.p0 - b.correction).abs() <= 1e-12 * b.total);
        }
    }
}
