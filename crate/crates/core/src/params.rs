//! Model, market and expansion parameters.
//!
//! Every other module consumes a [`ModelParams`], which can only be obtained
//! through [`build_model`], so downstream code may rely on the invariants
//! checked here.

use std::ops::Deref;

use crate::error::{ParamError, ParamErrors};

/// Unvalidated parameter set. Times are in years, rates continuously compounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawModelParams {
    /// Fast mean-reversion time scale of `Y`.
    pub epsilon: f64,
    /// Long-run mean of the fast factor.
    pub m: f64,
    /// Standard deviation of the fast factor's invariant law.
    pub nu: f64,
    /// Mean-reversion rate of the slow factor.
    pub k: f64,
    /// Long-run mean of the slow factor.
    pub m_prime: f64,
    /// Vol-of-vol of the slow factor.
    pub eta: f64,
    pub rho_xy: f64,
    pub rho_xz: f64,
    pub rho_yz: f64,
    /// Slow factor at time zero.
    pub z0: f64,
    pub r: f64,
    /// Empirical constant of the modification factor.
    pub a: f64,
}

impl Default for RawModelParams {
    /// S&P 500 flavoured defaults (`r = 0.0264`, `k = 0.008`, `a = 0.05`).
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            m: 0.0,
            nu: 0.3,
            k: 0.008,
            m_prime: 0.15,
            eta: 0.0,
            rho_xy: -0.5,
            rho_xz: 0.0,
            rho_yz: 0.0,
            z0: 0.2,
            r: 0.0264,
            a: 0.05,
        }
    }
}

/// Validated, immutable parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    raw: RawModelParams,
}

impl Deref for ModelParams {
    type Target = RawModelParams;

    fn deref(&self) -> &RawModelParams {
        &self.raw
    }
}

impl ModelParams {
    pub fn raw(&self) -> RawModelParams {
        self.raw
    }

    /// Copy with some fields changed, re-validated.
    pub fn with(&self, edit: impl FnOnce(&mut RawModelParams)) -> Result<Self, ParamErrors> {
        let mut raw = self.raw;
        edit(&mut raw);
        build_model(raw)
    }

    /// Lower-triangular Cholesky factor of the 3x3 Brownian correlation matrix,
    /// ordered (x, y, z).
    pub fn correlation_cholesky(&self) -> [[f64; 3]; 3] {
        let (a, b, c) = (self.rho_xy, self.rho_xz, self.rho_yz);
        let l11 = (1.0 - a * a).sqrt();
        let l21 = (c - a * b) / l11;
        let l22 = (1.0 - b * b - l21 * l21).max(0.0).sqrt();
        [[1.0, 0.0, 0.0], [a, l11, 0.0], [b, l21, l22]]
    }
}

/// `1 + 2 ρxy ρxz ρyz − ρxy² − ρxz² − ρyz²`, the determinant of the
/// correlation matrix. Fails unless it is strictly positive and every
/// coefficient lies strictly inside (−1, 1).
pub fn validate_correlations(rho_xy: f64, rho_xz: f64, rho_yz: f64) -> Result<f64, ParamError> {
    let det = correlation_determinant(rho_xy, rho_xz, rho_yz);
    let in_range = [rho_xy, rho_xz, rho_yz]
        .iter()
        .all(|r| r.is_finite() && r.abs() < 1.0);
    if in_range && det > 0.0 {
        Ok(det)
    } else {
        Err(ParamError::NonPositiveDefinite { determinant: det })
    }
}

fn correlation_determinant(a: f64, b: f64, c: f64) -> f64 {
    1.0 + 2.0 * a * b * c - a * a - b * b - c * c
}

/// Validate a raw parameter set, reporting every violated invariant.
pub fn build_model(raw: RawModelParams) -> Result<ModelParams, ParamErrors> {
    let mut errs = Vec::new();
    let fields = [
        ("epsilon", raw.epsilon),
        ("m", raw.m),
        ("nu", raw.nu),
        ("k", raw.k),
        ("m_prime", raw.m_prime),
        ("eta", raw.eta),
        ("rho_xy", raw.rho_xy),
        ("rho_xz", raw.rho_xz),
        ("rho_yz", raw.rho_yz),
        ("z0", raw.z0),
        ("r", raw.r),
        ("a", raw.a),
    ];
    for (name, value) in fields {
        if !value.is_finite() {
            errs.push(ParamError::NonFinite { name, value });
        }
    }
    if !errs.is_empty() {
        return Err(ParamErrors(errs));
    }

    let positive = [
        ("epsilon", raw.epsilon),
        ("nu", raw.nu),
        ("k", raw.k),
    ];
    for (name, value) in positive {
        if value <= 0.0 {
            errs.push(ParamError::OutOfRange {
                name,
                value,
                requirement: "must be > 0",
            });
        }
    }
    if raw.eta < 0.0 {
        errs.push(ParamError::OutOfRange {
            name: "eta",
            value: raw.eta,
            requirement: "must be >= 0",
        });
    }
    for (name, value) in [
        ("rho_xy", raw.rho_xy),
        ("rho_xz", raw.rho_xz),
        ("rho_yz", raw.rho_yz),
    ] {
        if value.abs() >= 1.0 {
            errs.push(ParamError::OutOfRange {
                name,
                value,
                requirement: "must satisfy |rho| < 1",
            });
        }
    }
    if let Err(e) = validate_correlations(raw.rho_xy, raw.rho_xz, raw.rho_yz) {
        errs.push(e);
    }
    if raw.z0 == raw.m_prime {
        errs.push(ParamError::DegenerateSlowFactor { z0: raw.z0 });
    }
    if raw.a == 2.0 * raw.r {
        errs.push(ParamError::ModificationDegenerate { a: raw.a });
    }

    if errs.is_empty() {
        Ok(ModelParams { raw })
    } else {
        Err(ParamErrors(errs))
    }
}

/// A European call: spot, strike, valuation time and maturity (years).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionSpec {
    pub spot: f64,
    pub strike: f64,
    pub t: f64,
    pub maturity: f64,
}

impl OptionSpec {
    pub fn new(spot: f64, strike: f64, t: f64, maturity: f64) -> Result<Self, ParamErrors> {
        let mut errs = Vec::new();
        for (name, value) in [("spot", spot), ("strike", strike), ("t", t), ("maturity", maturity)] {
            if !value.is_finite() {
                errs.push(ParamError::NonFinite { name, value });
            }
        }
        if spot <= 0.0 {
            errs.push(ParamError::OutOfRange {
                name: "spot",
                value: spot,
                requirement: "must be > 0",
            });
        }
        if strike <= 0.0 {
            errs.push(ParamError::OutOfRange {
                name: "strike",
                value: strike,
                requirement: "must be > 0",
            });
        }
        if t < 0.0 {
            errs.push(ParamError::OutOfRange {
                name: "t",
                value: t,
                requirement: "must be >= 0",
            });
        }
        if maturity < t {
            errs.push(ParamError::OutOfRange {
                name: "maturity",
                value: maturity,
                requirement: "must be >= t",
            });
        }
        if errs.is_empty() {
            Ok(Self {
                spot,
                strike,
                t,
                maturity,
            })
        } else {
            Err(ParamErrors(errs))
        }
    }

    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }

    pub fn payoff(&self) -> f64 {
        (self.spot - self.strike).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn correlation_examples() {
        assert_eq!(validate_correlations(0.0, 0.0, 0.0), Ok(1.0));
        match validate_correlations(0.9, 0.9, 0.0) {
            Err(ParamError::NonPositiveDefinite { determinant }) => {
                assert_abs_diff_eq!(determinant, -0.62, epsilon = 1e-15)
            }
            other => panic!("expected failure, got {other:?}"),
        }
        let det = validate_correlations(-0.3, 0.2, 0.1).unwrap();
        assert_abs_diff_eq!(det, 0.848, epsilon = 1e-15);
    }

    #[test]
    fn unit_correlation_rejected_even_with_positive_det() {
        assert!(validate_correlations(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_slow_factor() {
        let raw = RawModelParams {
            m_prime: 0.2,
            z0: 0.2,
            ..Default::default()
        };
        let errs = build_model(raw).unwrap_err();
        assert_eq!(errs.0, vec![ParamError::DegenerateSlowFactor { z0: 0.2 }]);
    }

    #[test]
    fn modification_degenerate() {
        let raw = RawModelParams {
            a: 2.0 * 0.0264,
            ..Default::default()
        };
        let errs = build_model(raw).unwrap_err();
        assert!(errs.contains(|e| matches!(e, ParamError::ModificationDegenerate { .. })));
    }

    #[test]
    fn spx_style_set_is_valid() {
        let raw = RawModelParams {
            r: 0.0264,
            k: 0.008,
            a: 0.05,
            ..Default::default()
        };
        assert!(build_model(raw).is_ok());
    }

    #[test]
    fn all_violations_reported() {
        let raw = RawModelParams {
            epsilon: -1.0,
            nu: 0.0,
            z0: 0.15,
            m_prime: 0.15,
            a: 0.0528,
            r: 0.0264,
            rho_xy: 0.9,
            rho_xz: 0.9,
            ..Default::default()
        };
        let errs = build_model(raw).unwrap_err();
        assert_eq!(errs.0.len(), 5, "{errs}");
    }

    #[test]
    fn cholesky_reproduces_correlation() {
        let model = build_model(RawModelParams {
            rho_xy: -0.3,
            rho_xz: 0.2,
            rho_yz: 0.1,
            ..Default::default()
        })
        .unwrap();
        let l = model.correlation_cholesky();
        let corr = |i: usize, j: usize| (0..3).map(|p| l[i][p] * l[j][p]).sum::<f64>();
        assert_abs_diff_eq!(corr(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(corr(2, 2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(corr(0, 1), -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(corr(0, 2), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(corr(1, 2), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn option_spec_bounds() {
        assert!(OptionSpec::new(100.0, 100.0, 0.5, 0.5).is_ok());
        assert_eq!(OptionSpec::new(-1.0, 0.0, 1.0, 0.5).unwrap_err().0.len(), 3);
    }

    proptest! {
        #[test]
        fn built_models_satisfy_invariants(
            eps in -0.1f64..1.0, nu in -0.1f64..1.0, k in -0.1f64..1.0,
            rxy in -1.2f64..1.2, rxz in -1.2f64..1.2, ryz in -1.2f64..1.2,
            z0 in 0.0f64..0.4, eta in -0.1f64..0.5,
        ) {
            let raw = RawModelParams {
                epsilon: eps, nu, k, eta, rho_xy: rxy, rho_xz: rxz, rho_yz: ryz, z0,
                ..Default::default()
            };
            let first = build_model(raw);
            prop_assert_eq!(&first, &build_model(raw));
            if let Ok(model) = first {
                prop_assert!(validate_correlations(model.rho_xy, model.rho_xz, model.rho_yz).unwrap() > 0.0);
                prop_assert!(model.epsilon > 0.0 && model.nu > 0.0 && model.k > 0.0 && model.eta >= 0.0);
                prop_assert!(model.z0 != model.m_prime);
            }
        }
    }
}
