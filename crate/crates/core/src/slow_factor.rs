//! Parabolic approximation of the slow volatility factor.
//!
//! The slow factor follows `dZ = k (m' − Z) dt + η dW`. Its mean
//! `m' + (z0 − m') e^{−kt}` is replaced by the second-order Taylor arc
//! `A t² + B t + C`. The residual `α_t` (truncation plus the η-driven noise)
//! is set to zero here; the Monte Carlo oracle simulates the full process.

use crate::error::{guard_nonzero, Result};
use crate::params::ModelParams;

/// `Z_t ≈ A t² + B t + C` with `α_t ≡ 0` (hence `ζ_t = ∂α/∂t ≡ 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicSlowFactor {
    pub a_coef: f64,
    pub b_coef: f64,
    pub c_coef: f64,
}

impl ParabolicSlowFactor {
    pub fn value(&self, t: f64) -> f64 {
        slow_factor_value(self, t)
    }

    /// `dZ/dt = 2 A t + B`.
    pub fn slope(&self, t: f64) -> f64 {
        2.0 * self.a_coef * t + self.b_coef
    }
}

pub fn parabolic_coefficients(model: &ModelParams) -> ParabolicSlowFactor {
    let dev = model.z0 - model.m_prime;
    ParabolicSlowFactor {
        a_coef: dev * model.k * model.k / 2.0,
        b_coef: -dev * model.k,
        c_coef: model.z0,
    }
}

pub fn slow_factor_value(p: &ParabolicSlowFactor, t: f64) -> f64 {
    (p.a_coef * t + p.b_coef) * t + p.c_coef
}

/// Exact OU mean of the slow factor at time `t`.
pub fn ou_mean(model: &ModelParams, t: f64) -> f64 {
    model.m_prime + (model.z0 - model.m_prime) * (-model.k * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationReport {
    pub exact_mean: f64,
    pub parabolic: f64,
    pub abs_error: f64,
    /// `|z0 − m'| (kt)³ / 6`; a rigorous bound only when `kt ≤ 1`.
    pub bound: f64,
    pub bound_applies: bool,
}

impl TruncationReport {
    pub fn within_bound(&self) -> bool {
        !self.bound_applies || self.abs_error <= self.bound
    }
}

pub fn truncation_report(model: &ModelParams, t: f64) -> TruncationReport {
    let kt = model.k * t;
    let dev = model.z0 - model.m_prime;
    let exact_mean = ou_mean(model, t);
    let parabolic = slow_factor_value(&parabolic_coefficients(model), t);
    // e^{-x} − (1 − x + x²/2), evaluated without cancellation
    let remainder = exp_taylor_remainder3(kt);
    TruncationReport {
        exact_mean,
        parabolic,
        abs_error: (dev * remainder).abs(),
        bound: dev.abs() * kt.powi(3) / 6.0,
        bound_applies: kt <= 1.0,
    }
}

/// `e^{-x} − 1 + x − x²/2`.
fn exp_taylor_remainder3(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // alternating series from the cubic term on
        let mut term = -x * x * x / 6.0;
        let mut sum = term;
        let mut n = 3.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            n += 1.0;
            term *= -x / n;
            sum += term;
        }
        sum
    } else {
        (-x).exp_m1() + x - x * x / 2.0
    }
}

/// `γ = (1 − kt + k²t²/2) / (1 − kt)`.
pub fn gamma_coefficient(k: f64, t: f64) -> Result<f64> {
    let kt = k * t;
    let denom = 1.0 - kt;
    guard_nonzero("1 - k*t", denom)?;
    Ok((1.0 - kt + kt * kt / 2.0) / denom)
}

/// Time-derivative coefficient of the transformed operator, two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2TimeCoefficient {
    /// `1 + k (m' − z(t)) / (2 A t + B)`.
    pub direct: f64,
    /// `1 + γ`.
    pub gamma_form: f64,
}

impl L2TimeCoefficient {
    pub fn relative_gap(&self) -> f64 {
        (self.direct - self.gamma_form).abs() / self.gamma_form.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn l2_time_coefficient_check(model: &ModelParams, t: f64) -> Result<L2TimeCoefficient> {
    let gamma = gamma_coefficient(model.k, t)?;
    let p = parabolic_coefficients(model);
    let slope = p.slope(t);
    guard_nonzero("2*A*t + B", slope)?;
    let direct = 1.0 + model.k * (model.m_prime - p.value(t)) / slope;
    Ok(L2TimeCoefficient {
        direct,
        gamma_form: 1.0 + gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::params::{build_model, RawModelParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn model(z0: f64, m_prime: f64, k: f64) -> ModelParams {
        build_model(RawModelParams {
            z0,
            m_prime,
            k,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn coefficients() {
        let p = parabolic_coefficients(&model(0.3, 0.2, 0.008));
        assert_relative_eq!(p.a_coef, 3.2e-6, max_relative = 1e-12);
        assert_relative_eq!(p.b_coef, -8.0e-4, max_relative = 1e-12);
        assert_eq!(p.c_coef, 0.3);

        let p = parabolic_coefficients(&model(0.2, 0.1, 1.0));
        assert_relative_eq!(p.a_coef, 0.05, max_relative = 1e-12);
        assert_relative_eq!(p.b_coef, -0.1, max_relative = 1e-12);
        assert_eq!(p.c_coef, 0.2);
        assert_relative_eq!(p.a_coef, -p.b_coef * 1.0 / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn values() {
        let m = model(0.3, 0.2, 0.008);
        let p = parabolic_coefficients(&m);
        assert_eq!(p.value(0.0), 0.3);
        assert_abs_diff_eq!(p.value(1.0), 0.2992032, epsilon = 1e-15);
        assert_relative_eq!(p.value(2.0 / m.k), m.z0, max_relative = 1e-12);
    }

    #[test]
    fn truncation_examples() {
        let m = model(1.2, 0.2, 0.1);
        let rep = truncation_report(&m, 0.0);
        assert_eq!(rep.abs_error, 0.0);

        let rep = truncation_report(&m, 1.0);
        assert_abs_diff_eq!(rep.exact_mean, 0.2 + (-0.1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(rep.parabolic, 1.105, epsilon = 1e-14);
        // e^{-0.1} = 0.904837418035959..., 0.905 − that = 1.6258196404e-4
        assert_abs_diff_eq!(rep.abs_error, 1.625819640404e-4, epsilon = 1e-15);
        assert_relative_eq!(rep.bound, 1.0 / 6000.0, max_relative = 1e-12);
        assert!(rep.within_bound());

        let rep = truncation_report(&m, 5.0);
        assert!(rep.abs_error <= 0.125 / 6.0);
        assert!(rep.within_bound());
    }

    #[test]
    fn truncation_bound_not_asserted_past_unit_kt() {
        let rep = truncation_report(&model(1.2, 0.2, 0.1), 40.0);
        assert!(!rep.bound_applies);
        assert!(rep.within_bound());
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_coefficient(0.008, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            gamma_coefficient(0.1, 1.0).unwrap(),
            0.905 / 0.9,
            max_relative = 1e-14
        );
        assert!(matches!(
            gamma_coefficient(0.5, 2.0),
            Err(Error::SingularTime { .. })
        ));
    }

    #[test]
    fn l2_check_examples() {
        let m = model(0.3, 0.2, 0.008);
        let c = l2_time_coefficient_check(&m, 0.0).unwrap();
        assert_eq!(c.direct, 2.0);
        assert_eq!(c.gamma_form, 2.0);

        let c = l2_time_coefficient_check(&m, 10.0).unwrap();
        let expected = 1.0 + gamma_coefficient(0.008, 10.0).unwrap();
        assert_abs_diff_eq!(c.direct, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(c.gamma_form, expected, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn l2_forms_agree(z0 in 0.01f64..1.0, mp in 0.01f64..1.0, k in 1e-3f64..2.0, frac in 0.0f64..0.9) {
            prop_assume!((z0 - mp).abs() > 1e-3);
            let m = model(z0, mp, k);
            let c = l2_time_coefficient_check(&m, frac / k).unwrap();
            prop_assert!(c.relative_gap() <= 1e-10, "{c:?}");
        }

        #[test]
        fn parabola_within_taylor_bound(z0 in -1.0f64..1.0, mp in -1.0f64..1.0, k in 1e-3f64..2.0, frac in 0.0f64..1.0) {
            prop_assume!(z0 != mp);
            let m = model(z0, mp, k);
            let rep = truncation_report(&m, frac / k);
            prop_assert!(rep.bound_applies);
            prop_assert!(rep.abs_error <= rep.bound, "{rep:?}");
        }
    }
}
