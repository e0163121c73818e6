//! Averages over the fast factor's invariant law `N(m, ν²)`.
//!
//! * `σ̄²(z) = E_y[f²(y, z)]` (the literal `E_y[f]` is available through
//!   [`SigmaBarConvention::Mean`]),
//! * `φ'` solving `L₀φ = f² − σ̄²` with `L₀ = (m − y)∂_y + ν²∂²_y`,
//! * `V = ν ρ_xy / √2 · E_y[f φ']`.
//!
//! Writing `p` for the Gaussian density, `(ν² p φ')' = p L₀φ`, so
//! `φ'(y) = F(y) / (ν² p(y))` with `F(y) = ∫_{−∞}^{y} (f² − σ̄²) p`, and
//! `E_y[f φ'] = ν⁻² ∫ f F dy`. Everything below integrates `F`; the density
//! never appears in a denominator except when `φ'` itself is requested.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::quadrature::{GaussHermite, GaussLegendre};

/// Half-width of the integration window in units of ν.
pub const WINDOW_SDS: f64 = 8.0;
/// Relative stability required between successive refinements.
pub const REFINEMENT_TOL: f64 = 1e-10;
const CENTERING_TOL: f64 = 1e-8;
const GH_START: usize = 16;
const GH_MAX: usize = 512;
const GL_ORDER: usize = 10;
const CELLS_START: usize = 64;
const CELLS_MAX: usize = 8192;

/// Piecewise-linear `f(y)` sampled at a fixed `z`; constant beyond the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct VolTable {
    ys: Vec<f64>,
    values: Vec<f64>,
}

impl VolTable {
    pub fn new(ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ys.len() != values.len() || ys.len() < 2 {
            return Err(Error::Config(
                "volatility table needs at least two (y, f) rows".into(),
            ));
        }
        if !ys.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "volatility table y column must be strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!(
                "volatility table values must be positive, found {v}"
            )));
        }
        Ok(Self { ys, values })
    }

    /// Two whitespace- or comma-separated columns `y f`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut ys = Vec::new();
        let mut values = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("{s:?}: {e}"),
                })
            };
            match cols.as_slice() {
                [y, f] => {
                    ys.push(parse(y)?);
                    values.push(parse(f)?);
                }
                _ => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("expected two columns, got {}", cols.len()),
                    })
                }
            }
        }
        Self::new(ys, values)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y <= self.ys[0] {
            return self.values[0];
        }
        if y >= self.ys[n - 1] {
            return self.values[n - 1];
        }
        let j = self.ys.partition_point(|&v| v <= y) - 1;
        let w = (y - self.ys[j]) / (self.ys[j + 1] - self.ys[j]);
        self.values[j] + w * (self.values[j + 1] - self.values[j])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.ys
    }
}

/// Volatility surface `σ = f(y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum VolFunction {
    /// `f = z`.
    YConstant,
    /// `f = z e^y`.
    SeparableExp,
    /// `f = σ`, independent of both factors.
    Flat(f64),
    /// Table sampled at the operating `z`; used as-is for any `z`.
    Tabulated(Arc<VolTable>),
}

impl VolFunction {
    #[inline]
    pub fn eval(&self, y: f64, z: f64) -> f64 {
        match self {
            VolFunction::YConstant => z,
            VolFunction::SeparableExp => z * y.exp(),
            VolFunction::Flat(s) => *s,
            VolFunction::Tabulated(t) => t.eval(y),
        }
    }

    pub fn is_y_constant(&self) -> bool {
        matches!(self, VolFunction::YConstant | VolFunction::Flat(_))
    }

    fn is_smooth(&self) -> bool {
        !matches!(self, VolFunction::Tabulated(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            VolFunction::YConstant => "y_constant",
            VolFunction::SeparableExp => "separable_exp",
            VolFunction::Flat(_) => "flat",
            VolFunction::Tabulated(_) => "tabulated",
        }
    }

    fn check_positive(&self, z: f64) -> Result<()> {
        let ok = match self {
            VolFunction::YConstant | VolFunction::SeparableExp => z > 0.0 && z.is_finite(),
            VolFunction::Flat(s) => *s > 0.0 && s.is_finite(),
            VolFunction::Tabulated(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "volatility function {} is not positive at z = {z}",
                self.name()
            )))
        }
    }

    fn key(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.name().hash(&mut h);
        match self {
            VolFunction::Flat(s) => s.to_bits().hash(&mut h),
            VolFunction::Tabulated(t) => {
                for (y, v) in t.ys.iter().zip(&t.values) {
                    y.to_bits().hash(&mut h);
                    v.to_bits().hash(&mut h);
                }
            }
            _ => {}
        }
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SigmaBarConvention {
    /// `σ̄² = E_y[f²]`, the only choice that centers the Poisson equation.
    #[default]
    RootMeanSquare,
    /// `σ̄ = E_y[f]`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBarEstimate {
    pub value: f64,
    /// Gauss-Hermite nodes, or composite Gauss-Legendre nodes for tables.
    pub nodes: usize,
    /// Relative change at the final refinement.
    pub rel_change: f64,
}

fn gauss_hermite(n: usize) -> &'static GaussHermite {
    static RULES: OnceLock<Vec<GaussHermite>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let mut v = Vec::new();
        let mut n = GH_START;
        while n <= GH_MAX {
            v.push(GaussHermite::new(n));
            n *= 2;
        }
        v
    });
    rules
        .iter()
        .find(|r| r.len() == n)
        .expect("Gauss-Hermite rule sizes are powers of two from 16 to 512")
}

fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(GL_ORDER))
}

fn gaussian_pdf(y: f64, m: f64, nu: f64) -> f64 {
    let s = (y - m) / nu;
    (-0.5 * s * s).exp() / (nu * (2.0 * PI).sqrt())
}

/// Cell edges on `[m − 8ν, m + 8ν]`, merged with any table breakpoints inside.
fn window_edges(f: &VolFunction, m: f64, nu: f64, cells: usize) -> Vec<f64> {
    let lo = m - WINDOW_SDS * nu;
    let hi = m + WINDOW_SDS * nu;
    let mut edges: Vec<f64> = (0..=cells)
        .map(|i| lo + (hi - lo) * i as f64 / cells as f64)
        .collect();
    if let VolFunction::Tabulated(t) = f {
        edges.extend(t.breakpoints().iter().copied().filter(|y| *y > lo && *y < hi));
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (hi - lo));
    }
    edges
}

fn rel_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Gaussian average of `g` with refinement: Gauss-Hermite doubling for
/// smooth `f`, composite Gauss-Legendre cell doubling for tables.
fn averaged(
    f: &VolFunction,
    m: f64,
    nu: f64,
    g: impl Fn(f64) -> f64,
) -> Result<SigmaBarEstimate> {
    if f.is_smooth() {
        let mut n = GH_START;
        let mut prev = gauss_hermite(n).gaussian_expectation(m, nu, &g);
        while n < GH_MAX {
            n *= 2;
            let next = gauss_hermite(n).gaussian_expectation(m, nu, &g);
            let change = rel_change(prev, next);
            if change < REFINEMENT_TOL {
                return Ok(SigmaBarEstimate {
                    value: next,
                    nodes: n,
                    rel_change: change,
                });
            }
            prev = next;
        }
        Err(Error::QuadratureFailure(format!(
            "Gauss-Hermite average not stable to {REFINEMENT_TOL:e} at {GH_MAX} nodes"
        )))
    } else {
        let gl = gauss_legendre();
        let integral = |cells| {
            let edges = window_edges(f, m, nu, cells);
            let v = gl.integrate_composite(&edges, |y| g(y) * gaussian_pdf(y, m, nu));
            (v, (edges.len() - 1) * GL_ORDER)
        };
        let mut cells = CELLS_START;
        let (mut prev, _) = integral(cells);
        while cells < CELLS_MAX {
            cells *= 2;
            let (next, nodes) = integral(cells);
            let change = rel_change(prev, next);
            if change < REFINEMENT_TOL {
                return Ok(SigmaBarEstimate {
                    value: next,
                    nodes,
                    rel_change: change,
                });
            }
            prev = next;
        }
        Err(Error::QuadratureFailure(format!(
            "composite average not stable to {REFINEMENT_TOL:e} at {CELLS_MAX} cells"
        )))
    }
}

pub fn sigma_bar_estimate(
    f: &VolFunction,
    z: f64,
    m: f64,
    nu: f64,
    convention: SigmaBarConvention,
) -> Result<SigmaBarEstimate> {
    f.check_positive(z)?;
    if !(nu > 0.0 && nu.is_finite() && m.is_finite()) {
        return Err(Error::Domain(format!("invalid fast-factor law N({m}, {nu}²)")));
    }
    if f.is_y_constant() {
        return Ok(SigmaBarEstimate {
            value: f.eval(m, z),
            nodes: 0,
            rel_change: 0.0,
        });
    }
    match convention {
        SigmaBarConvention::RootMeanSquare => {
            let est = averaged(f, m, nu, |y| f.eval(y, z).powi(2))?;
            Ok(SigmaBarEstimate {
                value: est.value.sqrt(),
                ..est
            })
        }
        SigmaBarConvention::Mean => averaged(f, m, nu, |y| f.eval(y, z)),
    }
}

/// Effective volatility `σ̄(z) = sqrt(E_y[f²])`.
pub fn sigma_bar(f: &VolFunction, z: f64, m: f64, nu: f64) -> Result<f64> {
    Ok(sigma_bar_estimate(f, z, m, nu, SigmaBarConvention::RootMeanSquare)?.value)
}

/// Solution of the averaging Poisson equation, held as the cumulative
/// integral `F` on a cell grid so `φ'` can be evaluated anywhere.
#[derive(Debug, Clone)]
pub struct PhiSolution {
    f: VolFunction,
    z: f64,
    m: f64,
    nu: f64,
    sigma_bar_sq: f64,
    edges: Vec<f64>,
    /// `∫_{lo}^{edge_j}` of the centered integrand.
    from_left: Vec<f64>,
    /// `∫_{edge_j}^{hi}` of the centered integrand.
    from_right: Vec<f64>,
    /// `∫ (f² − σ̄²) p` over the whole window.
    pub centering_residual: f64,
    trivial: bool,
}

impl PhiSolution {
    fn rhs(&self, y: f64) -> f64 {
        self.f.eval(y, self.z).powi(2) - self.sigma_bar_sq
    }

    fn integrand(&self, y: f64) -> f64 {
        self.rhs(y) * gaussian_pdf(y, self.m, self.nu)
    }

    /// Right-hand side `f² − σ̄²` of the Poisson equation.
    pub fn poisson_rhs(&self, y: f64) -> f64 {
        if self.trivial {
            0.0
        } else {
            self.rhs(y)
        }
    }

    /// `F(y) = ∫_{−∞}^{y} (f² − σ̄²) p`; accumulated from whichever end is
    /// closer so the tails do not suffer cancellation.
    pub fn cumulative(&self, y: f64) -> f64 {
        if self.trivial {
            return 0.0;
        }
        let n = self.edges.len();
        if y <= self.edges[0] || y >= self.edges[n - 1] {
            return 0.0;
        }
        let j = self.edges.partition_point(|&e| e <= y) - 1;
        let gl = gauss_legendre();
        if y <= self.m {
            self.from_left[j] + gl.integrate(self.edges[j], y, |u| self.integrand(u))
        } else {
            -(self.from_right[j + 1] + gl.integrate(y, self.edges[j + 1], |u| self.integrand(u)))
        }
    }

    /// `φ'(y)`.
    pub fn dphi(&self, y: f64) -> f64 {
        if self.trivial {
            return 0.0;
        }
        self.cumulative(y) / (self.nu * self.nu * gaussian_pdf(y, self.m, self.nu))
    }

    /// Grid on which the solution was assembled.
    pub fn grid(&self) -> &[f64] {
        &self.edges
    }

    /// `φ'` sampled on the grid.
    pub fn dphi_on_grid(&self) -> Vec<f64> {
        self.edges.iter().map(|&y| self.dphi(y)).collect()
    }

    /// `E_y[f φ'] = ν⁻² ∫ f F dy` on a grid of `cells` cells.
    fn mean_f_dphi(&self, cells: usize) -> f64 {
        if self.trivial {
            return 0.0;
        }
        let edges = window_edges(&self.f, self.m, self.nu, cells);
        let integral =
            gauss_legendre().integrate_composite(&edges, |y| self.f.eval(y, self.z) * self.cumulative(y));
        integral / (self.nu * self.nu)
    }
}

fn build_phi(f: &VolFunction, z: f64, m: f64, nu: f64, sigma_bar_sq: f64, cells: usize) -> PhiSolution {
    let edges = window_edges(f, m, nu, cells);
    let mut sol = PhiSolution {
        f: f.clone(),
        z,
        m,
        nu,
        sigma_bar_sq,
        edges,
        from_left: Vec::new(),
        from_right: Vec::new(),
        centering_residual: 0.0,
        trivial: f.is_y_constant(),
    };
    if sol.trivial {
        return sol;
    }
    let gl = gauss_legendre();
    let cell_integrals: Vec<f64> = sol
        .edges
        .windows(2)
        .map(|c| gl.integrate(c[0], c[1], |u| sol.integrand(u)))
        .collect();
    let n = sol.edges.len();
    let mut from_left = vec![0.0; n];
    for j in 1..n {
        from_left[j] = from_left[j - 1] + cell_integrals[j - 1];
    }
    let mut from_right = vec![0.0; n];
    for j in (0..n - 1).rev() {
        from_right[j] = from_right[j + 1] + cell_integrals[j];
    }
    sol.centering_residual = from_left[n - 1];
    sol.from_left = from_left;
    sol.from_right = from_right;
    sol
}

/// Solve `L₀φ = f² − σ̄²` for `φ'` with `σ̄` from the same `(f, z, m, ν)`.
pub fn solve_phi_derivative(f: &VolFunction, z: f64, m: f64, nu: f64) -> Result<PhiSolution> {
    solve_phi_with(f, z, m, nu, SigmaBarConvention::RootMeanSquare)
}

pub fn solve_phi_with(
    f: &VolFunction,
    z: f64,
    m: f64,
    nu: f64,
    convention: SigmaBarConvention,
) -> Result<PhiSolution> {
    let sb = sigma_bar_estimate(f, z, m, nu, convention)?;
    let sol = build_phi(f, z, m, nu, sb.value * sb.value, CELLS_START * 4);
    let scale = if sol.trivial {
        1.0
    } else {
        averaged(f, m, nu, |y| f.eval(y, z).powi(2))?.value.max(1.0)
    };
    if sol.centering_residual.abs() > CENTERING_TOL * scale {
        return Err(Error::CenteringFailure {
            residual: sol.centering_residual,
        });
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub sigma_bar: f64,
    pub v: f64,
    pub z: f64,
    /// `E_y[f φ']`, the ρ-free part of `V`.
    pub mean_f_dphi: f64,
    pub sigma_nodes: usize,
    pub sigma_rel_change: f64,
    pub v_cells: usize,
    pub v_rel_change: f64,
}

impl EffectiveParams {
    /// Effective parameters for a constant volatility (no correction).
    pub fn flat(sigma_bar: f64, z: f64) -> Self {
        Self {
            sigma_bar,
            v: 0.0,
            z,
            mean_f_dphi: 0.0,
            sigma_nodes: 0,
            sigma_rel_change: 0.0,
            v_cells: 0,
            v_rel_change: 0.0,
        }
    }

    pub fn with_rho(&self, nu: f64, rho_xy: f64) -> Self {
        Self {
            v: nu * rho_xy / SQRT_2 * self.mean_f_dphi,
            ..*self
        }
    }
}

/// `V = ν ρ_xy / √2 · E_y[f φ']`.
pub fn effective_v(f: &VolFunction, z: f64, m: f64, nu: f64, rho_xy: f64) -> Result<f64> {
    Ok(effective_params(f, z, m, nu, rho_xy, SigmaBarConvention::RootMeanSquare)?.v)
}

pub fn effective_params(
    f: &VolFunction,
    z: f64,
    m: f64,
    nu: f64,
    rho_xy: f64,
    convention: SigmaBarConvention,
) -> Result<EffectiveParams> {
    let sb = sigma_bar_estimate(f, z, m, nu, convention)?;
    let sol = solve_phi_with(f, z, m, nu, convention)?;
    let (mean_f_dphi, v_cells, v_rel_change) = if sol.trivial {
        (0.0, 0, 0.0)
    } else {
        let mut cells = CELLS_START;
        let mut prev = sol.mean_f_dphi(cells);
        loop {
            if cells >= CELLS_MAX {
                return Err(Error::QuadratureFailure(format!(
                    "E[f φ'] not stable to {REFINEMENT_TOL:e} at {CELLS_MAX} cells"
                )));
            }
            cells *= 2;
            let next = sol.mean_f_dphi(cells);
            let change = rel_change(prev, next);
            if change < REFINEMENT_TOL {
                break (next, cells, change);
            }
            prev = next;
        }
    };
    let eff = EffectiveParams {
        sigma_bar: sb.value,
        v: 0.0,
        z,
        mean_f_dphi,
        sigma_nodes: sb.nodes,
        sigma_rel_change: sb.rel_change,
        v_cells,
        v_rel_change,
    };
    Ok(eff.with_rho(nu, rho_xy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonResidual {
    /// Largest `|L₀φ − (f² − σ̄²)| / |f² − σ̄²|` over the checked nodes.
    pub max_relative: f64,
    pub nodes_checked: usize,
}

/// Apply `L₀` to the solution with a five-point difference of `φ'` at grid
/// nodes within `interior_sds` standard deviations of `m`, skipping nodes
/// where `|f² − σ̄²| ≤ 1e-10`.
pub fn poisson_residual(sol: &PhiSolution, interior_sds: f64) -> PoissonResidual {
    if sol.trivial {
        return PoissonResidual {
            max_relative: 0.0,
            nodes_checked: sol.edges.len(),
        };
    }
    let h = 1e-3 * sol.nu;
    let nu2 = sol.nu * sol.nu;
    let mut worst = 0.0f64;
    let mut count = 0;
    for &y in &sol.edges {
        if (y - sol.m).abs() > interior_sds * sol.nu {
            continue;
        }
        let rhs = sol.rhs(y);
        if rhs.abs() <= 1e-10 {
            continue;
        }
        let d = |k: f64| sol.dphi(y + k * h);
        let second = (-d(2.0) + 8.0 * d(1.0) - 8.0 * d(-1.0) + d(-2.0)) / (12.0 * h);
        let l0 = (sol.m - y) * d(0.0) + nu2 * second;
        worst = worst.max((l0 - rhs).abs() / rhs.abs());
        count += 1;
    }
    PoissonResidual {
        max_relative: worst,
        nodes_checked: count,
    }
}

type CacheKey = (u64, u64, u64, u64, SigmaBarConvention);

/// Memo table of `(σ̄, E[f φ'])` keyed by `(f, z, m, ν, convention)`.
/// Concurrent readers share the lock; inserts are serialized.
#[derive(Debug, Default)]
pub struct AveragingCache {
    table: RwLock<HashMap<CacheKey, EffectiveParams>>,
}

impl AveragingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.table.read().expect("averaging cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn effective_params(
        &self,
        f: &VolFunction,
        z: f64,
        m: f64,
        nu: f64,
        rho_xy: f64,
        convention: SigmaBarConvention,
    ) -> Result<EffectiveParams> {
        let key = (f.key(), z.to_bits(), m.to_bits(), nu.to_bits(), convention);
        if let Some(hit) = self.table.read().expect("averaging cache poisoned").get(&key) {
            return Ok(hit.with_rho(nu, rho_xy));
        }
        let eff = effective_params(f, z, m, nu, rho_xy, convention)?;
        self.table
            .write()
            .expect("averaging cache poisoned")
            .entry(key)
            .or_insert(eff);
        Ok(eff)
    }
}
