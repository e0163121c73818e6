//! Least-squares fits of the modification constant `a` and of the effective
//! parameters `(a, k, v_eff, σ̄)` to an option chain.
//!
//! The fitted price of a quote is `(1+g)·[Q₀(σ̄) + v_eff·τ(t,T)·D₁D₂Q₀(σ̄)]`,
//! with `v_eff = √ε·V` treated as a single group.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::black_scholes::{bs_call_price, d1d2_call, implied_vol, BsInputs};
use crate::error::{Error, Result};
use crate::pricer::{modification_factor, p1_time_factor};

/// One market observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionQuote {
    pub t: f64,
    pub maturity: f64,
    pub strike: f64,
    pub mid: f64,
    pub spot: f64,
    pub rate: f64,
}

impl OptionQuote {
    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }

    /// `max(x − K e^{−rτ}, 0)`.
    pub fn lower_bound(&self) -> f64 {
        (self.spot - self.strike * (-self.rate * self.tau()).exp()).max(0.0)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let fields = [self.t, self.maturity, self.strike, self.mid, self.spot, self.rate];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.maturity <= self.t {
            return Err(format!("expiry {} not after quote time {}", self.maturity, self.t));
        }
        if self.spot <= 0.0 || self.strike <= 0.0 {
            return Err("underlying and strike must be positive".into());
        }
        let bound = self.lower_bound();
        if self.mid < bound - INTRINSIC_TOLERANCE * self.spot {
            return Err(format!("mid {} below arbitrage bound {bound}", self.mid));
        }
        Ok(())
    }
}

/// Slack on the arbitrage lower bound, relative to the underlying.
pub const INTRINSIC_TOLERANCE: f64 = 1e-6;

pub const CHAIN_HEADER: [&str; 6] = ["t", "T", "K", "mid", "x", "r"];

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub quotes: Vec<OptionQuote>,
    /// Well-formed rows that violate a quote invariant.
    pub rejected: Vec<RejectedRow>,
}

/// Parses a comma-separated chain with header `t,T,K,mid,x,r`. Blank lines
/// and `#` comments are skipped.
pub fn parse_chain(text: &str) -> Result<Chain> {
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let Some((line, header)) = rows.next() else {
        return Err(Error::EmptyChain);
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != CHAIN_HEADER {
        return Err(Error::Parse {
            line,
            message: format!("expected header {}, found {header:?}", CHAIN_HEADER.join(",")),
        });
    }
    let mut quotes = Vec::new();
    let mut rejected = Vec::new();
    for (line, row) in rows {
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        if cells.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 fields, found {}", cells.len()),
            });
        }
        let mut v = [0.0; 6];
        for (slot, (cell, name)) in v.iter_mut().zip(cells.iter().zip(CHAIN_HEADER)) {
            *slot = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {name}: cannot parse {cell:?} as a number"),
            })?;
        }
        let q = OptionQuote {
            t: v[0],
            maturity: v[1],
            strike: v[2],
            mid: v[3],
            spot: v[4],
            rate: v[5],
        };
        match q.check() {
            Ok(()) => quotes.push(q),
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }
    if quotes.is_empty() {
        return Err(Error::EmptyChain);
    }
    Ok(Chain { quotes, rejected })
}

pub fn load_chain(path: impl AsRef<Path>) -> Result<Chain> {
    parse_chain(&std::fs::read_to_string(path)?)
}

pub fn write_chain(quotes: &[OptionQuote], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{}", CHAIN_HEADER.join(","))?;
    for q in quotes {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            q.t, q.maturity, q.strike, q.mid, q.spot, q.rate
        )?;
    }
    Ok(())
}

/// Effective first-order price of a quote. `r` enters the modification
/// factor; discounting uses the quote's own rate.
pub fn effective_price(q: &OptionQuote, r: f64, a: f64, k: f64, v_eff: f64, sigma_bar: f64) -> Result<f64> {
    let factor = modification_factor(q.t, a, r, k)?;
    let bs = BsInputs::new(q.spot, q.strike, q.rate, sigma_bar, q.tau());
    let q0 = bs_call_price(&bs)?;
    if v_eff == 0.0 {
        return Ok(factor * q0);
    }
    let tf = p1_time_factor(q.t, q.maturity, k)?;
    Ok(factor * (q0 + v_eff * tf * d1d2_call(&bs)?))
}

/// Root-mean-square pricing error over the chain; `+∞` when any price
/// cannot be formed.
pub fn chain_rmse(quotes: &[OptionQuote], r: f64, a: f64, k: f64, v_eff: f64, sigma_bar: f64) -> f64 {
    mean_square(quotes, r, a, k, v_eff, sigma_bar).sqrt()
}

fn mean_square(quotes: &[OptionQuote], r: f64, a: f64, k: f64, v_eff: f64, sigma_bar: f64) -> f64 {
    let mut sse = 0.0;
    for q in quotes {
        match effective_price(q, r, a, k, v_eff, sigma_bar) {
            Ok(p) if p.is_finite() => sse += (p - q.mid).powi(2),
            _ => return f64::INFINITY,
        }
    }
    let mse = sse / quotes.len() as f64;
    if mse.is_finite() {
        mse
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibBounds {
    pub a: (f64, f64),
    pub k: (f64, f64),
    pub v_eff: (f64, f64),
    pub sigma_bar: (f64, f64),
    /// Half-width of the excluded band around `a = 2r`.
    pub a_exclusion: f64,
}

impl Default for CalibBounds {
    fn default() -> Self {
        Self {
            a: (-0.5, 0.5),
            k: (1e-4, 1.0),
            v_eff: (-5.0, 5.0),
            sigma_bar: (0.01, 2.0),
            a_exclusion: 1e-4,
        }
    }
}

impl CalibBounds {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !(ok(self.a) && ok(self.k) && ok(self.v_eff) && ok(self.sigma_bar)) {
            return Err(Error::Config("calibration bounds must be finite with lo < hi".into()));
        }
        if self.k.0 <= 0.0 || self.sigma_bar.0 <= 0.0 {
            return Err(Error::Config("k and sigma_bar bounds must be positive".into()));
        }
        if !(self.a_exclusion >= 0.0) {
            return Err(Error::Config("a_exclusion must be non-negative".into()));
        }
        Ok(())
    }

    fn admits(&self, r: f64, p: &[f64; 4]) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p[0], self.a)
            && (p[0] - 2.0 * r).abs() > self.a_exclusion
            && inside(p[1], self.k)
            && inside(p[2], self.v_eff)
            && inside(p[3], self.sigma_bar)
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Golden-section minimization of `f` on `[lo, hi]`.
fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid scan followed by golden-section refinement around the best node.
/// Returns the minimizer, its value, and whether it sits on an end point.
fn scan_then_refine(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64, nodes: usize, tol: f64) -> (f64, f64, bool) {
    let grid: Vec<f64> = (0..nodes)
        .map(|i| lo + (hi - lo) * i as f64 / (nodes - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = (0..nodes)
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .unwrap_or(0);
    let left = grid[best.saturating_sub(1)];
    let right = grid[(best + 1).min(nodes - 1)];
    let (x, fx) = golden_section(&mut *f, left, right, tol);
    let (x, fx) = if values[best] < fx { (grid[best], values[best]) } else { (x, fx) };
    let pinned = (x - lo).abs() <= 10.0 * tol || (hi - x).abs() <= 10.0 * tol;
    (x, fx, pinned)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AEstimate {
    pub a_hat: f64,
    /// Effective volatility profiled out jointly with `a`.
    pub sigma_bar: f64,
    /// Root-mean-square price error at the optimum.
    pub objective: f64,
    /// Per-strike fits; `None` where a strike lacks two maturities or has no
    /// interior optimum.
    pub per_strike: Vec<(f64, Option<f64>)>,
}

/// Fits `a` in `(1+g(t; a, r, k))·Q₀(σ̄)` by least squares with `k` and `r`
/// fixed. `σ̄` is profiled out for each candidate `a`.
pub fn estimate_a(quotes: &[OptionQuote], k: f64, r: f64) -> Result<AEstimate> {
    estimate_a_with(quotes, k, r, &CalibBounds::default())
}

pub fn estimate_a_with(quotes: &[OptionQuote], k: f64, r: f64, bounds: &CalibBounds) -> Result<AEstimate> {
    bounds.validate()?;
    let (a_hat, sigma_bar, mse) = fit_a(quotes, k, r, bounds)?;
    let mut by_strike: BTreeMap<u64, Vec<OptionQuote>> = BTreeMap::new();
    for q in quotes {
        by_strike.entry(q.strike.to_bits()).or_default().push(*q);
    }
    let mut per_strike: Vec<(f64, Option<f64>)> = by_strike
        .into_values()
        .map(|group| (group[0].strike, fit_a(&group, k, r, bounds).ok().map(|f| f.0)))
        .collect();
    per_strike.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(AEstimate {
        a_hat,
        sigma_bar,
        objective: mse.sqrt(),
        per_strike,
    })
}

fn fit_a(quotes: &[OptionQuote], k: f64, r: f64, bounds: &CalibBounds) -> Result<(f64, f64, f64)> {
    if quotes.len() < 2 || distinct(quotes.iter().map(|q| q.maturity)) < 2 {
        return Err(Error::InsufficientData(
            "estimating a needs at least 2 quotes spanning 2 maturities".into(),
        ));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("k must be positive, got {k}")));
    }
    let (s_lo, s_hi) = bounds.sigma_bar;
    let profile = |a: f64| -> (f64, f64) {
        let mut obj = |ls: f64| mean_square(quotes, r, a, k, 0.0, ls.exp());
        let (ls, mse, _) = scan_then_refine(&mut obj, s_lo.ln(), s_hi.ln(), 41, 1e-12);
        (ls.exp(), mse)
    };
    let centre = 2.0 * r;
    let sides = [
        (bounds.a.0, (centre - bounds.a_exclusion).min(bounds.a.1)),
        ((centre + bounds.a_exclusion).max(bounds.a.0), bounds.a.1),
    ];
    let mut best: Option<(f64, f64, bool)> = None;
    for (lo, hi) in sides {
        if lo >= hi {
            continue;
        }
        let mut obj = |a: f64| profile(a).1;
        let cand = scan_then_refine(&mut obj, lo, hi, 101, 1e-12);
        if best.is_none_or(|b| cand.1 < b.1) {
            best = Some(cand);
        }
    }
    let (a_hat, mse, pinned) = best.ok_or_else(|| Error::Config("empty search interval for a".into()))?;
    if !mse.is_finite() {
        return Err(Error::Domain("objective not finite anywhere on the search interval".into()));
    }
    if pinned {
        let bound = [bounds.a.0, bounds.a.1, centre - bounds.a_exclusion, centre + bounds.a_exclusion]
            .into_iter()
            .min_by(|x, y| (x - a_hat).abs().total_cmp(&(y - a_hat).abs()))
            .unwrap_or(a_hat);
        return Err(Error::NoInteriorMinimum { bound });
    }
    let (sigma_bar, _) = profile(a_hat);
    Ok((a_hat, sigma_bar, mse))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibOptions {
    pub bounds: CalibBounds,
    pub seed: u64,
    /// Random restarts in addition to the deterministic first start.
    pub restarts: usize,
    /// Simplex iterations per descent.
    pub max_iter: usize,
}

impl Default for CalibOptions {
    fn default() -> Self {
        Self {
            bounds: CalibBounds::default(),
            seed: 7,
            restarts: 3,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibResult {
    pub a_hat: f64,
    pub k_hat: f64,
    pub v_eff_hat: f64,
    pub sigma_bar_hat: f64,
    /// Root-mean-square price error.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at each start point, first start included.
    pub start_objectives: Vec<f64>,
}

/// Fits `(a, k, v_eff, σ̄)` by simplex descent from a deterministic start and
/// `restarts` seeded random starts, keeping the best result.
pub fn calibrate_effective(quotes: &[OptionQuote], r: f64, opts: &CalibOptions) -> Result<CalibResult> {
    opts.bounds.validate()?;
    if quotes.len() < 4
        || distinct(quotes.iter().map(|q| q.maturity)) < 2
        || distinct(quotes.iter().map(|q| q.strike)) < 2
    {
        return Err(Error::InsufficientData(
            "calibration needs at least 4 quotes spanning 2 maturities and 2 strikes".into(),
        ));
    }
    let b = opts.bounds;
    let decode = |th: &[f64]| [th[0], th[1].exp(), th[2], th[3].exp()];
    let objective = |th: &[f64]| {
        let p = decode(th);
        if !b.admits(r, &p) {
            return f64::INFINITY;
        }
        mean_square(quotes, r, p[0], p[1], p[2], p[3])
    };

    let sigma_guess = atm_implied_vol(quotes).clamp(b.sigma_bar.0, b.sigma_bar.1);
    let clamp = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo, hi);
    let first = [
        clamp(2.0 * r + 0.02, b.a),
        clamp(0.05, b.k).ln(),
        clamp(0.0, b.v_eff),
        sigma_guess.ln(),
    ];
    let mut starts = vec![first];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let a_box = (b.a.0.max(2.0 * r - 0.2), b.a.1.min(2.0 * r + 0.2));
    let lk_box = (b.k.0.max(1e-3).ln(), b.k.1.ln());
    let v_box = (b.v_eff.0.max(-0.01), b.v_eff.1.min(0.01));
    while starts.len() <= opts.restarts {
        let mut candidate = first;
        for _ in 0..100 {
            candidate = [
                rng.random_range(a_box.0..=a_box.1),
                rng.random_range(lk_box.0.min(lk_box.1)..=lk_box.1),
                rng.random_range(v_box.0..=v_box.1),
                (sigma_guess * rng.random_range(0.7..=1.3)).clamp(b.sigma_bar.0, b.sigma_bar.1).ln(),
            ];
            if objective(&candidate).is_finite() {
                break;
            }
        }
        starts.push(candidate);
    }
    let start_objectives: Vec<f64> = starts.iter().map(|s| objective(s).sqrt()).collect();
    let step = [0.02, 0.5, 1e-3, 0.1];
    let runs: Vec<NmOutcome> = starts
        .par_iter()
        .map(|s| descend_with_restarts(&objective, s, &step, opts.max_iter))
        .collect();
    let iterations = runs.iter().map(|o| o.iterations).sum();
    let best = runs
        .into_iter()
        .min_by(|x, y| x.f.total_cmp(&y.f))
        .expect("at least one start");
    let p = decode(&best.x);
    Ok(CalibResult {
        a_hat: p[0],
        k_hat: p[1],
        v_eff_hat: p[2],
        sigma_bar_hat: p[3],
        objective: best.f.sqrt(),
        iterations,
        converged: best.converged,
        start_objectives,
    })
}

fn atm_implied_vol(quotes: &[OptionQuote]) -> f64 {
    quotes
        .iter()
        .min_by(|x, y| {
            let m = |q: &OptionQuote| (q.strike / (q.spot * (q.rate * q.tau()).exp())).ln().abs();
            m(x).total_cmp(&m(y))
        })
        .and_then(|q| implied_vol(q.mid, q.spot, q.strike, q.rate, q.tau()))
        .unwrap_or(0.2)
}

#[derive(Debug, Clone)]
struct NmOutcome {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Repeats the descent from its own result with a fresh simplex until it
/// stops improving.
fn descend_with_restarts(f: &impl Fn(&[f64]) -> f64, x0: &[f64], step: &[f64], max_iter: usize) -> NmOutcome {
    let mut out = nelder_mead(f, x0, step, max_iter);
    let mut iterations = out.iterations;
    for _ in 0..30 {
        let next = nelder_mead(f, &out.x, step, max_iter);
        iterations += next.iterations;
        let improved = next.f < out.f * (1.0 - 1e-10);
        if next.f <= out.f {
            out = next;
        }
        if !improved {
            break;
        }
    }
    out.iterations = iterations;
    out
}

fn nelder_mead(f: &impl Fn(&[f64]) -> f64, x0: &[f64], step: &[f64], max_iter: usize) -> NmOutcome {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= 1e-13 * values[0].abs() + 1e-300) || size <= 1e-13 {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflected = lerp(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = lerp(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = lerp(&centroid, &worst, -0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = lerp(&centroid, &worst, 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = lerp(&best, &simplex[i], 0.5);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    NmOutcome {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const HEADER: &str = "t,T,K,mid,x,r\n";

    #[test]
    fn parses_well_formed_chain() {
        let text = format!("{HEADER}0,0.5,100,6.0,100,0.02\n# note\n\n0,1,105,5.5,100,0.02\n0.1,1,95,10,100,0.02\n");
        let chain = parse_chain(&text).unwrap();
        assert_eq!(chain.quotes.len(), 3);
        assert!(chain.rejected.is_empty());
        assert_eq!(chain.quotes[2].t, 0.1);
    }

    #[test]
    fn rejects_arbitrage_violations_by_line() {
        let text = format!("{HEADER}0,0.5,100,6.0,100,0.02\n0,0.5,50,10,100,0.02\n0.5,0.5,100,1,100,0.02\n");
        let chain = parse_chain(&text).unwrap();
        assert_eq!(chain.quotes.len(), 1);
        let lines: Vec<usize> = chain.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4]);
        assert!(chain.rejected[0].reason.contains("below"));
    }

    #[test]
    fn malformed_rows_and_empty_files() {
        assert!(matches!(parse_chain(""), Err(Error::EmptyChain)));
        assert!(matches!(parse_chain(HEADER), Err(Error::EmptyChain)));
        assert!(matches!(
            parse_chain(&format!("{HEADER}0,0.5,abc,6,100,0.02\n")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_chain(&format!("{HEADER}0,0.5,6\n")), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_chain("t,T,K,x,mid,r\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn chain_write_round_trip() {
        let q = OptionQuote { t: 0.25, maturity: 1.0, strike: 105.0, mid: 5.123456789012345, spot: 100.0, rate: 0.0264 };
        let mut buf = Vec::new();
        write_chain(&[q], &mut buf).unwrap();
        let chain = parse_chain(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(chain.quotes, vec![q]);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-12);
        // flat minimum: location resolvable to about sqrt(machine epsilon)
        assert_relative_eq!(x, 0.3, epsilon = 1e-7);
        assert_relative_eq!(fx, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nelder_mead_on_rosenbrock() {
        let f = |v: &[f64]| (1.0 - v[0]).powi(2) + 100.0 * (v[1] - v[0] * v[0]).powi(2);
        let out = descend_with_restarts(&f, &[-1.2, 1.0], &[0.1, 0.1], 10_000);
        assert!(out.converged);
        assert_relative_eq!(out.x[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(out.x[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn bounds_exclude_the_degenerate_band() {
        let b = CalibBounds::default();
        assert!(!b.admits(0.0264, &[0.0528, 0.01, 0.0, 0.2]));
        assert!(b.admits(0.0264, &[0.06, 0.01, 0.0, 0.2]));
        assert!(!b.admits(0.0264, &[0.06, 0.0, 0.0, 0.2]));
    }
}
