//! Classical Black-Scholes call pricing, Greeks and the `D₁D₂` operator
//! (`x ∂/∂x ∘ x² ∂²/∂x²`) applied to the call price.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF through the complementary error function, accurate to
/// a few ulps in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsInputs {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    /// Time to maturity `T − t`.
    pub tau: f64,
}

impl BsInputs {
    pub fn new(spot: f64, strike: f64, rate: f64, sigma: f64, tau: f64) -> Self {
        Self {
            spot,
            strike,
            rate,
            sigma,
            tau,
        }
    }

    fn check(&self) -> Result<()> {
        let all_finite = [self.spot, self.strike, self.rate, self.sigma, self.tau]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain(format!("non-finite Black-Scholes input {self:?}")));
        }
        if self.spot <= 0.0 || self.strike <= 0.0 || self.sigma < 0.0 || self.tau < 0.0 {
            return Err(Error::Domain(format!("Black-Scholes input out of range {self:?}")));
        }
        Ok(())
    }

    fn check_interior(&self) -> Result<()> {
        self.check()?;
        if self.tau == 0.0 || self.sigma == 0.0 {
            return Err(Error::Domain(format!(
                "sensitivities need tau > 0 and sigma > 0, got tau = {}, sigma = {}",
                self.tau, self.sigma
            )));
        }
        Ok(())
    }

    fn sigma_sqrt_tau(&self) -> f64 {
        self.sigma * self.tau.sqrt()
    }

    fn d1(&self) -> f64 {
        let s = self.sigma_sqrt_tau();
        ((self.spot / self.strike).ln() + self.rate * self.tau) / s + 0.5 * s
    }
}

pub fn bs_call_price(p: &BsInputs) -> Result<f64> {
    p.check()?;
    if p.tau == 0.0 {
        return Ok((p.spot - p.strike).max(0.0));
    }
    let discounted_strike = p.strike * (-p.rate * p.tau).exp();
    if p.sigma == 0.0 {
        return Ok((p.spot - discounted_strike).max(0.0));
    }
    let d1 = p.d1();
    let d2 = d1 - p.sigma_sqrt_tau();
    Ok(p.spot * norm_cdf(d1) - discounted_strike * norm_cdf(d2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Greeks {
    pub delta: f64,
    pub gamma: f64,
    pub vega: f64,
    /// Derivative with respect to calendar time `t` (i.e. `−∂/∂τ`).
    pub theta: f64,
}

pub fn bs_greeks(p: &BsInputs) -> Result<Greeks> {
    p.check_interior()?;
    let s = p.sigma_sqrt_tau();
    let d1 = p.d1();
    let d2 = d1 - s;
    let pdf = norm_pdf(d1);
    let discounted_strike = p.strike * (-p.rate * p.tau).exp();
    Ok(Greeks {
        delta: norm_cdf(d1),
        gamma: pdf / (p.spot * s),
        vega: p.spot * pdf * p.tau.sqrt(),
        theta: -p.spot * pdf * p.sigma / (2.0 * p.tau.sqrt())
            - p.rate * discounted_strike * norm_cdf(d2),
    })
}

/// `x ∂/∂x (x² ∂²C/∂x²) = x n(d₁)/(σ√τ) · (1 − d₁/(σ√τ))`.
pub fn d1d2_call(p: &BsInputs) -> Result<f64> {
    p.check_interior()?;
    let s = p.sigma_sqrt_tau();
    let d1 = p.d1();
    Ok(p.spot * norm_pdf(d1) / s * (1.0 - d1 / s))
}

/// Black-Scholes volatility reproducing `price`, by bisection on `[1e-6, 5]`.
/// `None` when the price lies outside the attainable range.
pub fn implied_vol(price: f64, spot: f64, strike: f64, rate: f64, tau: f64) -> Option<f64> {
    let at = |sigma: f64| bs_call_price(&BsInputs::new(spot, strike, rate, sigma, tau)).ok();
    let (mut lo, mut hi) = (1e-6, 5.0);
    if !(price > at(lo)? && price < at(hi)?) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < price {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}
