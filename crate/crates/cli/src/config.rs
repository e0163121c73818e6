//! Flat `key = value` run configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parabolic_sv::averaging::{SigmaBarConvention, VolFunction, VolTable};
use parabolic_sv::calibration::CalibOptions;
use parabolic_sv::error::{Error, Result};
use parabolic_sv::mc_oracle::{SimConfig, SlowScheme, YStart};
use parabolic_sv::params::RawModelParams;
use parabolic_sv::pricer::{CorrectionForm, PricingOptions, VolFreeze};

/// Every recognized key with its meaning, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("epsilon", "fast time scale ε"),
    ("m", "long-run mean of Y"),
    ("nu", "long-run standard deviation of Y"),
    ("k", "mean-reversion rate of Z"),
    ("m_prime", "long-run mean of Z"),
    ("eta", "vol-of-vol of Z"),
    ("rho_xy", "correlation of X and Y"),
    ("rho_xz", "correlation of X and Z"),
    ("rho_yz", "correlation of Y and Z"),
    ("z0", "initial value of Z"),
    ("r", "risk-free rate"),
    ("a", "modification constant"),
    ("spot", "underlying price x"),
    ("strike", "strike K"),
    ("t", "valuation time"),
    ("maturity", "expiry T"),
    ("vol_kind", "separable_exp | y_constant | flat | table"),
    ("vol_flat", "σ for vol_kind = flat"),
    ("vol_table", "two-column (y, σ) file for vol_kind = table"),
    ("sigma_bar", "rms | mean"),
    ("vol_freeze", "pointwise | integrated"),
    ("correction_form", "classical | modified"),
    ("n_paths", "Monte Carlo paths"),
    ("steps_per_year", "time steps per year"),
    ("seed", "64-bit seed"),
    ("slow_scheme", "frozen | stochastic"),
    ("antithetic", "true | false"),
    ("y_start", "stationary | a fixed number"),
    ("threads", "worker threads (results do not depend on it)"),
    ("sweep_eps", "comma-separated descending ε list"),
    ("dump_paths", "paths written by --paths-dump"),
    ("chain", "option chain file"),
    ("calib_seed", "seed for calibration restarts"),
    ("calib_restarts", "random restarts"),
    ("calib_max_iter", "simplex iterations per descent"),
    ("a_min", "lower bound for a"),
    ("a_max", "upper bound for a"),
    ("a_exclusion", "half-width of the band excluded around 2r"),
    ("k_min", "lower bound for k"),
    ("k_max", "upper bound for k"),
    ("v_eff_min", "lower bound for v_eff"),
    ("v_eff_max", "upper bound for v_eff"),
    ("sigma_bar_min", "lower bound for σ̄"),
    ("sigma_bar_max", "upper bound for σ̄"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: RawModelParams,
    pub spot: f64,
    pub strike: f64,
    pub t: f64,
    pub maturity: f64,
    pub vol: VolFunction,
    pub pricing: PricingOptions,
    pub sim: SimConfig,
    pub sweep_eps: Option<Vec<f64>>,
    pub dump_paths: usize,
    pub chain: Option<PathBuf>,
    pub calib: CalibOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: RawModelParams::default(),
            spot: 100.0,
            strike: 100.0,
            t: 0.0,
            maturity: 0.5,
            vol: VolFunction::SeparableExp,
            pricing: PricingOptions::default(),
            sim: SimConfig::default(),
            sweep_eps: None,
            dump_paths: 10,
            chain: None,
            calib: CalibOptions::default(),
        }
    }
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(line, format!("{key}: expected {what}, got {value:?}")))
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let mut vol_kind: Option<(usize, String)> = None;
        let mut vol_flat = None;
        let mut vol_table = None;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(bad(line, format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(bad(line, format!("duplicate key {key:?}")));
            }
            let real = |v: &str| num::<f64>(line, key, v, "a number");
            let count = |v: &str| num::<usize>(line, key, v, "a non-negative integer");
            let m = &mut cfg.model;
            match key {
                "epsilon" => m.epsilon = real(value)?,
                "m" => m.m = real(value)?,
                "nu" => m.nu = real(value)?,
                "k" => m.k = real(value)?,
                "m_prime" => m.m_prime = real(value)?,
                "eta" => m.eta = real(value)?,
                "rho_xy" => m.rho_xy = real(value)?,
                "rho_xz" => m.rho_xz = real(value)?,
                "rho_yz" => m.rho_yz = real(value)?,
                "z0" => m.z0 = real(value)?,
                "r" => m.r = real(value)?,
                "a" => m.a = real(value)?,
                "spot" => cfg.spot = real(value)?,
                "strike" => cfg.strike = real(value)?,
                "t" => cfg.t = real(value)?,
                "maturity" => cfg.maturity = real(value)?,
                "vol_kind" => vol_kind = Some((line, value.to_string())),
                "vol_flat" => vol_flat = Some(real(value)?),
                "vol_table" => vol_table = Some((line, base.join(value))),
                "sigma_bar" => {
                    cfg.pricing.convention = match value {
                        "rms" => SigmaBarConvention::RootMeanSquare,
                        "mean" => SigmaBarConvention::Mean,
                        _ => return Err(bad(line, format!("sigma_bar: expected rms or mean, got {value:?}"))),
                    }
                }
                "vol_freeze" => {
                    cfg.pricing.vol_freeze = match value {
                        "pointwise" => VolFreeze::Pointwise,
                        "integrated" => VolFreeze::IntegratedVariance,
                        _ => {
                            return Err(bad(line, format!("vol_freeze: expected pointwise or integrated, got {value:?}")))
                        }
                    }
                }
                "correction_form" => {
                    cfg.pricing.form = match value {
                        "classical" => CorrectionForm::OnClassical,
                        "modified" => CorrectionForm::OnModified,
                        _ => {
                            return Err(bad(
                                line,
                                format!("correction_form: expected classical or modified, got {value:?}"),
                            ))
                        }
                    }
                }
                "n_paths" => cfg.sim.n_paths = count(value)?,
                "steps_per_year" => cfg.sim.steps_per_year = count(value)?,
                "seed" => cfg.sim.seed = num(line, key, value, "an unsigned 64-bit integer")?,
                "slow_scheme" => {
                    cfg.sim.slow = match value {
                        "frozen" => SlowScheme::FrozenParabolic,
                        "stochastic" => SlowScheme::StochasticOu,
                        _ => return Err(bad(line, format!("slow_scheme: expected frozen or stochastic, got {value:?}"))),
                    }
                }
                "antithetic" => cfg.sim.antithetic = num(line, key, value, "true or false")?,
                "y_start" => {
                    cfg.sim.y_start = match value {
                        "stationary" => YStart::Stationary,
                        v => YStart::Fixed(num(line, key, v, "stationary or a number")?),
                    }
                }
                "threads" => cfg.sim.threads = Some(count(value)?),
                "sweep_eps" => {
                    let list = value
                        .split(',')
                        .map(|v| real(v.trim()))
                        .collect::<Result<Vec<f64>>>()?;
                    cfg.sweep_eps = Some(list);
                }
                "dump_paths" => cfg.dump_paths = count(value)?,
                "chain" => cfg.chain = Some(base.join(value)),
                "calib_seed" => cfg.calib.seed = num(line, key, value, "an unsigned 64-bit integer")?,
                "calib_restarts" => cfg.calib.restarts = count(value)?,
                "calib_max_iter" => cfg.calib.max_iter = count(value)?,
                "a_min" => cfg.calib.bounds.a.0 = real(value)?,
                "a_max" => cfg.calib.bounds.a.1 = real(value)?,
                "a_exclusion" => cfg.calib.bounds.a_exclusion = real(value)?,
                "k_min" => cfg.calib.bounds.k.0 = real(value)?,
                "k_max" => cfg.calib.bounds.k.1 = real(value)?,
                "v_eff_min" => cfg.calib.bounds.v_eff.0 = real(value)?,
                "v_eff_max" => cfg.calib.bounds.v_eff.1 = real(value)?,
                "sigma_bar_min" => cfg.calib.bounds.sigma_bar.0 = real(value)?,
                "sigma_bar_max" => cfg.calib.bounds.sigma_bar.1 = real(value)?,
                _ => unreachable!("key list and match arms disagree on {key}"),
            }
        }

        let (kind_line, kind) = vol_kind.unwrap_or((0, "separable_exp".into()));
        cfg.vol = match kind.as_str() {
            "separable_exp" => VolFunction::SeparableExp,
            "y_constant" => VolFunction::YConstant,
            "flat" => VolFunction::Flat(
                vol_flat.ok_or_else(|| Error::Config("vol_kind = flat needs vol_flat".into()))?,
            ),
            "table" => {
                let (line, path) =
                    vol_table.ok_or_else(|| Error::Config("vol_kind = table needs vol_table".into()))?;
                let table = VolTable::from_path(&path).map_err(|e| match e {
                    Error::Io(io) => bad(line, format!("vol_table {}: {io}", path.display())),
                    other => other,
                })?;
                VolFunction::Tabulated(Arc::new(table))
            }
            other => {
                return Err(bad(
                    kind_line,
                    format!("vol_kind: expected separable_exp, y_constant, flat or table, got {other:?}"),
                ))
            }
        };
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("."))
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = parse("# comment\n\na = 0.06 # trailing\nseed=9\nvol_kind = flat\nvol_flat = 0.3\n").unwrap();
        assert_eq!(cfg.model.a, 0.06);
        assert_eq!(cfg.model.r, 0.0264);
        assert_eq!(cfg.sim.seed, 9);
        assert_eq!(cfg.vol, VolFunction::Flat(0.3));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(matches!(parse("alpha = 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("a = 1\na = 2"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("\nseed = 1.5"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("seed"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("vol_kind = cubic"), Err(Error::Parse { line: 1, .. })));
        assert!(parse("vol_kind = flat").is_err());
    }

    #[test]
    fn sweep_and_y_start() {
        let cfg = parse("sweep_eps = 0.04, 0.01,0.0025\ny_start = -0.1").unwrap();
        assert_eq!(cfg.sweep_eps, Some(vec![0.04, 0.01, 0.0025]));
        assert_eq!(cfg.sim.y_start, YStart::Fixed(-0.1));
    }

    #[test]
    fn every_key_is_handled() {
        for (key, _) in KEYS {
            let value = match *key {
                "vol_kind" => "y_constant",
                "sigma_bar" => "mean",
                "vol_freeze" => "integrated",
                "correction_form" => "modified",
                "slow_scheme" => "stochastic",
                "antithetic" => "true",
                "y_start" => "stationary",
                "sweep_eps" => "0.1",
                "vol_table" | "chain" => "file.txt",
                _ => "1",
            };
            parse(&format!("{key} = {value}")).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
