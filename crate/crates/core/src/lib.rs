pub mod black_scholes;
pub mod error;
pub mod params;
pub mod quadrature;
pub mod slow_factor;
pub mod averaging;
pub mod pricer;
pub mod mc_oracle;
pub mod calibration;
