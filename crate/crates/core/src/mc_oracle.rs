//! Monte Carlo simulation of the full three-factor model under the pricing
//! measure, used as an independent check of the asymptotic price.
//!
//! `Y` and `Z` move by their exact Gaussian OU transitions; `ln X` takes a
//! log-Euler step with `σ = f(Y, Z)` frozen over the step. Each path (or
//! antithetic pair) draws from its own ChaCha stream selected by its index,
//! so results do not depend on how the work is scheduled.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::averaging::VolFunction;
use crate::error::{Error, Result};
use crate::params::{ModelParams, OptionSpec};
use crate::pricer::price_first_order;
use crate::quadrature::CompensatedSum;
use crate::slow_factor::{ou_mean, parabolic_coefficients, ParabolicSlowFactor};

/// Paths (or pairs) per work item; fixed so the reduction order never changes.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlowScheme {
    /// Exact OU transitions with vol-of-vol `η`.
    StochasticOu,
    /// `Z_t = A t² + B t + C`.
    #[default]
    FrozenParabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum YStart {
    /// Draw `Y_t` from its invariant law `N(m, ν²)`.
    #[default]
    Stationary,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub slow: SlowScheme,
    pub antithetic: bool,
    pub y_start: YStart,
    /// Worker threads; `None` uses the global pool. Never affects results.
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            steps_per_year: 2000,
            seed: 42,
            slow: SlowScheme::FrozenParabolic,
            antithetic: false,
            y_start: YStart::Stationary,
            threads: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::Config(format!("n_paths must be >= 2, got {}", self.n_paths)));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::Config(format!(
                "antithetic sampling needs an even n_paths, got {}",
                self.n_paths
            )));
        }
        if self.steps_per_year == 0 {
            return Err(Error::Config("steps_per_year must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if let YStart::Fixed(y) = self.y_start {
            if !y.is_finite() {
                return Err(Error::Config(format!("y_start must be finite, got {y}")));
            }
        }
        Ok(())
    }

    /// Number of time steps over `horizon` years (at least one).
    pub fn steps_for(&self, horizon: f64) -> usize {
        ((self.steps_per_year as f64 * horizon).ceil() as usize).max(1)
    }

    fn units(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }

    fn run<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(job()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(job))
            }
        }
    }
}

/// Terminal state of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// One recorded point of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    /// Simulated paths (no rejection takes place).
    pub n_effective: usize,
}

/// Standard normal triples with the model's (x, y, z) correlation.
#[derive(Debug, Clone, Copy)]
pub struct CorrelatedNormals {
    chol: [[f64; 3]; 3],
    need_z: bool,
}

impl CorrelatedNormals {
    pub fn new(model: &ModelParams) -> Self {
        Self {
            chol: model.correlation_cholesky(),
            need_z: true,
        }
    }

    fn without_z(mut self) -> Self {
        self.need_z = false;
        self
    }

    #[inline]
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let n1: f64 = StandardNormal.sample(rng);
        let n2: f64 = StandardNormal.sample(rng);
        let n3: f64 = if self.need_z { StandardNormal.sample(rng) } else { 0.0 };
        let l = &self.chol;
        [
            n1,
            l[1][0] * n1 + l[1][1] * n2,
            l[2][0] * n1 + l[2][1] * n2 + l[2][2] * n3,
        ]
    }
}

/// Per-run constants of the discretization.
struct Stepper<'a> {
    f: &'a VolFunction,
    normals: CorrelatedNormals,
    slow: SlowScheme,
    parabola: ParabolicSlowFactor,
    y_start: YStart,
    t0: f64,
    dt: f64,
    sqrt_dt: f64,
    n_steps: usize,
    r: f64,
    m: f64,
    nu: f64,
    m_prime: f64,
    y_decay: f64,
    y_sd: f64,
    z_decay: f64,
    z_sd: f64,
    z_start: f64,
    x0: f64,
}

#[derive(Clone, Copy)]
struct State {
    log_x: f64,
    y: f64,
    z: f64,
}

impl<'a> Stepper<'a> {
    fn new(model: &ModelParams, spec: &OptionSpec, f: &'a VolFunction, cfg: &SimConfig) -> Self {
        let tau = spec.tau();
        let n_steps = cfg.steps_for(tau);
        let dt = tau / n_steps as f64;
        let y_decay = (-dt / model.epsilon).exp();
        let z_decay = (-model.k * dt).exp();
        let stochastic_z = cfg.slow == SlowScheme::StochasticOu;
        let mut normals = CorrelatedNormals::new(model);
        if !(stochastic_z && model.eta > 0.0) {
            normals = normals.without_z();
        }
        let parabola = parabolic_coefficients(model);
        Self {
            f,
            normals,
            slow: cfg.slow,
            parabola,
            y_start: cfg.y_start,
            t0: spec.t,
            dt,
            sqrt_dt: dt.sqrt(),
            n_steps,
            r: model.r,
            m: model.m,
            nu: model.nu,
            m_prime: model.m_prime,
            y_decay,
            y_sd: model.nu * (-(-2.0 * dt / model.epsilon).exp_m1()).sqrt(),
            z_decay,
            z_sd: model.eta * (-(-2.0 * model.k * dt).exp_m1() / (2.0 * model.k)).sqrt(),
            z_start: match cfg.slow {
                SlowScheme::FrozenParabolic => parabola.value(spec.t),
                SlowScheme::StochasticOu => ou_mean(model, spec.t),
            },
            x0: spec.spot,
        }
    }

    /// Simulate one path, or an antithetic pair when `paired`, from `rng`.
    fn simulate(
        &self,
        rng: &mut ChaCha8Rng,
        paired: bool,
        mut record: Option<&mut Vec<[PathPoint; 2]>>,
    ) -> [Terminal; 2] {
        let lanes = if paired { 2 } else { 1 };
        let sign = [1.0, -1.0];
        let y0_shock: f64 = match self.y_start {
            YStart::Stationary => StandardNormal.sample(rng),
            YStart::Fixed(_) => 0.0,
        };
        let mut state = [State {
            log_x: self.x0.ln(),
            y: 0.0,
            z: self.z_start,
        }; 2];
        for (lane, s) in state.iter_mut().enumerate().take(lanes) {
            s.y = match self.y_start {
                YStart::Stationary => self.m + self.nu * sign[lane] * y0_shock,
                YStart::Fixed(y) => y,
            };
        }
        let point = |t: f64, s: &State| PathPoint {
            time: t,
            x: s.log_x.exp(),
            y: s.y,
            z: s.z,
        };
        if let Some(rec) = record.as_deref_mut() {
            rec.push([point(self.t0, &state[0]), point(self.t0, &state[1])]);
        }
        for i in 0..self.n_steps {
            let shock = self.normals.draw(rng);
            let t_next = self.t0 + (i + 1) as f64 * self.dt;
            for (lane, s) in state.iter_mut().enumerate().take(lanes) {
                let g = sign[lane];
                let sigma = self.f.eval(s.y, s.z);
                s.log_x += (self.r - 0.5 * sigma * sigma) * self.dt + sigma * self.sqrt_dt * g * shock[0];
                s.y = self.m + (s.y - self.m) * self.y_decay + self.y_sd * g * shock[1];
                s.z = match self.slow {
                    SlowScheme::FrozenParabolic => self.parabola.value(t_next),
                    SlowScheme::StochasticOu => {
                        self.m_prime + (s.z - self.m_prime) * self.z_decay + self.z_sd * g * shock[2]
                    }
                };
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push([point(t_next, &state[0]), point(t_next, &state[1])]);
            }
        }
        state.map(|s| Terminal {
            x: s.log_x.exp(),
            y: s.y,
            z: s.z,
        })
    }
}

fn unit_rng(seed: u64, unit: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit as u64);
    rng
}

fn check_inputs(spec: &OptionSpec, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    if spec.tau() < 0.0 {
        return Err(Error::Config("maturity precedes valuation time".into()));
    }
    Ok(())
}

/// Terminal `(X, Y, Z)` of every path, ordered by path index (antithetic
/// partners adjacent).
pub fn simulate_terminal(
    model: &ModelParams,
    spec: &OptionSpec,
    f: &VolFunction,
    cfg: &SimConfig,
) -> Result<Vec<Terminal>> {
    check_inputs(spec, cfg)?;
    let stepper = Stepper::new(model, spec, f, cfg);
    let units = cfg.units();
    cfg.run(|| {
        (0..units.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|chunk| {
                let stepper = &stepper;
                (chunk * CHUNK..((chunk + 1) * CHUNK).min(units)).flat_map(move |u| {
                    let pair = stepper.simulate(&mut unit_rng(cfg.seed, u), cfg.antithetic, None);
                    pair.into_iter().take(if cfg.antithetic { 2 } else { 1 })
                })
            })
            .collect()
    })
}

/// Discounted call payoff averaged over paths, with its standard error.
pub fn mc_price(
    model: &ModelParams,
    spec: &OptionSpec,
    f: &VolFunction,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    check_inputs(spec, cfg)?;
    let stepper = Stepper::new(model, spec, f, cfg);
    let discount = (-model.r * spec.tau()).exp();
    let strike = spec.strike;
    let units = cfg.units();
    let partials: Vec<(f64, f64)> = cfg.run(|| {
        (0..units.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut sum = CompensatedSum::default();
                let mut sum_sq = CompensatedSum::default();
                for u in chunk * CHUNK..((chunk + 1) * CHUNK).min(units) {
                    let ends = stepper.simulate(&mut unit_rng(cfg.seed, u), cfg.antithetic, None);
                    let pay = |t: &Terminal| discount * (t.x - strike).max(0.0);
                    let value = if cfg.antithetic {
                        0.5 * (pay(&ends[0]) + pay(&ends[1]))
                    } else {
                        pay(&ends[0])
                    };
                    sum.add(value);
                    sum_sq.add(value * value);
                }
                (sum.value(), sum_sq.value())
            })
            .collect()
    })?;
    let mut sum = CompensatedSum::default();
    let mut sum_sq = CompensatedSum::default();
    for (s, q) in partials {
        sum.add(s);
        sum_sq.add(q);
    }
    let n = units as f64;
    let mean = sum.value() / n;
    let var = ((sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        price: mean,
        std_error: (var / n).sqrt(),
        n_effective: cfg.n_paths,
    })
}

/// Full trajectories of the first `count` paths.
pub fn sample_paths(
    model: &ModelParams,
    spec: &OptionSpec,
    f: &VolFunction,
    cfg: &SimConfig,
    count: usize,
) -> Result<Vec<Vec<PathPoint>>> {
    check_inputs(spec, cfg)?;
    let stepper = Stepper::new(model, spec, f, cfg);
    let count = count.min(cfg.n_paths);
    let mut out = Vec::with_capacity(count);
    let mut unit = 0;
    while out.len() < count {
        let mut rec = Vec::with_capacity(stepper.n_steps + 1);
        stepper.simulate(&mut unit_rng(cfg.seed, unit), cfg.antithetic, Some(&mut rec));
        out.push(rec.iter().map(|p| p[0]).collect());
        if cfg.antithetic && out.len() < count {
            out.push(rec.iter().map(|p| p[1]).collect());
        }
        unit += 1;
    }
    Ok(out)
}

/// Writes `path,time,x,y,z` rows for the first `count` paths.
pub fn dump_paths(
    model: &ModelParams,
    spec: &OptionSpec,
    f: &VolFunction,
    cfg: &SimConfig,
    count: usize,
    out: &mut impl Write,
) -> Result<()> {
    writeln!(out, "path,time,x,y,z")?;
    for (i, path) in sample_paths(model, spec, f, cfg, count)?.iter().enumerate() {
        for p in path {
            writeln!(out, "{i},{:.10e},{:.10e},{:.10e},{:.10e}", p.time, p.x, p.y, p.z)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub asymptotic: f64,
    pub mc: McEstimate,
    pub abs_error: f64,
    pub steps_per_year: usize,
}

/// Asymptotic-vs-simulated error for each `ε` (positive, descending). The
/// time grid is refined to at least ten steps per fast time scale.
pub fn epsilon_sweep(
    model: &ModelParams,
    spec: &OptionSpec,
    f: &VolFunction,
    cfg: &SimConfig,
    eps_list: &[f64],
) -> Result<Vec<SweepRow>> {
    if eps_list.is_empty() {
        return Err(Error::Config("epsilon list is empty".into()));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config("epsilon values must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("epsilon values must be strictly descending".into()));
    }
    eps_list
        .iter()
        .map(|&eps| {
            let m = model.with(|p| p.epsilon = eps)?;
            let asymptotic = price_first_order(spec, &m, f)?.total;
            let steps_per_year = cfg.steps_per_year.max((10.0 / eps).ceil() as usize);
            let run = SimConfig {
                steps_per_year,
                ..*cfg
            };
            let mc = mc_price(&m, spec, f, &run)?;
            Ok(SweepRow {
                epsilon: eps,
                asymptotic,
                mc,
                abs_error: (asymptotic - mc.price).abs(),
                steps_per_year,
            })
        })
        .collect()
}

/// Each error is no larger than its predecessor plus three combined
/// standard errors.
pub fn sweep_non_increasing(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| {
        let se = w[0].mc.std_error.hypot(w[1].mc.std_error);
        w[1].abs_error <= w[0].abs_error + 3.0 * se
    })
}
