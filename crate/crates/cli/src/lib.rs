//! The `price`, `simulate`, `calibrate` and `diagnose` workflows.

pub mod config;
pub mod report;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use parabolic_sv::averaging::{effective_params, poisson_residual, solve_phi_with};
use parabolic_sv::calibration::{calibrate_effective, estimate_a, load_chain};
use parabolic_sv::error::{Error, Result};
use parabolic_sv::mc_oracle::{dump_paths, epsilon_sweep, mc_price, sweep_non_increasing, SlowScheme, YStart};
use parabolic_sv::params::{build_model, ModelParams, OptionSpec};
use parabolic_sv::pricer::{p0_pde_residual, price_first_order_with, ResidualMode};
use parabolic_sv::slow_factor::{gamma_coefficient, l2_time_coefficient_check, parabolic_coefficients, truncation_report};

pub use config::RunConfig;
pub use report::{sig10, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Price,
    Simulate,
    Calibrate,
    Diagnose,
}

/// 0 success, 2 configuration or validation, 3 numerical singularity,
/// 4 insufficient data.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invalid(_) | Error::Config(_) | Error::Parse { .. } | Error::Io(_) => 2,
        Error::SingularTime { .. }
        | Error::LogDomain { .. }
        | Error::Domain(_)
        | Error::QuadratureFailure(_)
        | Error::CenteringFailure { .. }
        | Error::NoInteriorMinimum { .. } => 3,
        Error::EmptyChain | Error::InsufficientData(_) => 4,
    }
}

/// Runs `command` on the config file and returns the terminal report. With
/// `out`, the delimited form is also written there.
pub fn run(command: Command, config: &Path, out: Option<&Path>, paths_dump: Option<&Path>) -> Result<String> {
    let cfg = RunConfig::from_path(config)?;
    let report = match command {
        Command::Price => cmd_price(&cfg)?,
        Command::Simulate => cmd_simulate(&cfg, paths_dump)?,
        Command::Calibrate => cmd_calibrate(&cfg)?,
        Command::Diagnose => cmd_diagnose(&cfg)?,
    };
    if let Some(path) = out {
        std::fs::write(path, report.delimited())?;
    }
    Ok(report.render())
}

fn model_and_spec(cfg: &RunConfig) -> Result<(ModelParams, OptionSpec)> {
    let model = build_model(cfg.model)?;
    let spec = OptionSpec::new(cfg.spot, cfg.strike, cfg.t, cfg.maturity)?;
    Ok((model, spec))
}

pub fn cmd_price(cfg: &RunConfig) -> Result<Report> {
    let (model, spec) = model_and_spec(cfg)?;
    let b = price_first_order_with(&spec, &model, &cfg.vol, cfg.pricing, None)?;
    let mut r = Report::default();
    r.text("command", "price").text("vol_kind", cfg.vol.name());
    r.num("q0", b.q0)
        .num("mod_factor", b.mod_factor)
        .num("p0", b.p0)
        .num("time_factor", b.time_factor)
        .num("sigma_bar", b.sigma_bar)
        .num("z", b.z)
        .num("v", b.v)
        .num("d1d2", b.d1d2)
        .num("correction", b.correction)
        .num("total", b.total);
    match b.diagnostics.gamma {
        Some(g) => r.num("gamma", g),
        None => r.text("gamma", "undefined (k*t = 1)"),
    };
    r.num("sigma_bar_rel_change", b.diagnostics.sigma_rel_change)
        .num("v_rel_change", b.diagnostics.v_rel_change)
        .text("at_maturity", b.diagnostics.at_maturity.to_string());
    Ok(r)
}

pub fn cmd_simulate(cfg: &RunConfig, paths_dump: Option<&Path>) -> Result<Report> {
    let (model, spec) = model_and_spec(cfg)?;
    let sim = cfg.sim;
    let est = mc_price(&model, &spec, &cfg.vol, &sim)?;
    let b = price_first_order_with(&spec, &model, &cfg.vol, cfg.pricing, None)?;
    let without_factor = b.total / b.mod_factor;

    let mut r = Report::default();
    r.text("command", "simulate").text("vol_kind", cfg.vol.name());
    r.text("n_paths", sim.n_paths.to_string())
        .text("steps_per_year", sim.steps_per_year.to_string())
        .text("seed", sim.seed.to_string())
        .text("antithetic", sim.antithetic.to_string())
        .text(
            "slow_scheme",
            match sim.slow {
                SlowScheme::FrozenParabolic => "frozen",
                SlowScheme::StochasticOu => "stochastic",
            },
        )
        .text(
            "y_start",
            match sim.y_start {
                YStart::Stationary => "stationary".to_string(),
                YStart::Fixed(y) => sig10(y),
            },
        );
    r.num("mc_price", est.price)
        .num("std_error", est.std_error)
        .num("asymptotic", b.total)
        .num("abs_error", (b.total - est.price).abs())
        .num("abs_error_in_se", (b.total - est.price).abs() / est.std_error)
        .num("q0", b.q0)
        .num("q0_error_in_se", (b.q0 - est.price).abs() / est.std_error)
        .num("asymptotic_without_factor", without_factor)
        .num("without_factor_error_in_se", (without_factor - est.price).abs() / est.std_error);

    if let Some(eps) = &cfg.sweep_eps {
        let rows = epsilon_sweep(&model, &spec, &cfg.vol, &sim, eps)?;
        r.tables.push(Table {
            title: "epsilon sweep".into(),
            header: ["epsilon", "asymptotic", "mc_price", "std_error", "abs_error", "steps_per_year"]
                .map(String::from)
                .to_vec(),
            rows: rows
                .iter()
                .map(|row| {
                    vec![
                        sig10(row.epsilon),
                        sig10(row.asymptotic),
                        sig10(row.mc.price),
                        sig10(row.mc.std_error),
                        sig10(row.abs_error),
                        row.steps_per_year.to_string(),
                    ]
                })
                .collect(),
        });
        let verdict = if sweep_non_increasing(&rows) { "PASS" } else { "FAIL" };
        r.text("sweep_trend", format!("{verdict} (error non-increasing within 3 combined SE)"));
    }

    if let Some(path) = paths_dump {
        let mut w = BufWriter::new(File::create(path)?);
        dump_paths(&model, &spec, &cfg.vol, &sim, cfg.dump_paths, &mut w)?;
    }
    Ok(r)
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<Report> {
    let model = build_model(cfg.model)?;
    let path = cfg
        .chain
        .as_ref()
        .ok_or_else(|| Error::Config("calibrate needs a `chain` file".into()))?;
    let chain = load_chain(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("chain {}: {io}", path.display())),
        other => other,
    })?;
    let quotes = &chain.quotes;

    let mut r = Report::default();
    r.text("command", "calibrate")
        .text("quotes_used", quotes.len().to_string())
        .text("quotes_rejected", chain.rejected.len().to_string());

    let fit = calibrate_effective(quotes, model.r, &cfg.calib)?;
    r.num("a_hat", fit.a_hat)
        .num("k_hat", fit.k_hat)
        .num("v_eff_hat", fit.v_eff_hat)
        .num("sigma_bar_hat", fit.sigma_bar_hat)
        .num("objective_rmse", fit.objective)
        .text("iterations", fit.iterations.to_string())
        .text("converged", fit.converged.to_string());

    let mut per_strike = Table {
        title: format!("per-strike a at fixed k = {}", sig10(model.k)),
        header: vec!["strike".into(), "a_hat".into()],
        rows: Vec::new(),
    };
    match estimate_a(quotes, model.k, model.r) {
        Ok(est) => {
            r.num("fixed_k_a_hat", est.a_hat)
                .num("fixed_k_sigma_bar", est.sigma_bar)
                .num("fixed_k_objective_rmse", est.objective);
            per_strike.rows = est
                .per_strike
                .iter()
                .map(|(k, a)| vec![sig10(*k), a.map_or("unidentified".into(), sig10)])
                .collect();
        }
        Err(e @ Error::InsufficientData(_)) => return Err(e),
        Err(e) => {
            r.text("fixed_k_a_hat", format!("unavailable: {e}"));
        }
    }
    r.tables.push(per_strike);
    if !chain.rejected.is_empty() {
        r.tables.push(Table {
            title: "rejected rows".into(),
            header: vec!["line".into(), "reason".into()],
            rows: chain
                .rejected
                .iter()
                .map(|row| vec![row.line.to_string(), row.reason.replace(',', ";")])
                .collect(),
        });
    }
    Ok(r)
}

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Consistency checks. Numerical failures are reported as WARN lines, never
/// as errors; only an invalid configuration fails the command.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<Report> {
    let (model, spec) = model_and_spec(cfg)?;
    let mut r = Report::default();
    r.text("command", "diagnose").text("vol_kind", cfg.vol.name());

    for (name, t) in [("truncation_t", spec.t), ("truncation_T", spec.maturity)] {
        let tr = truncation_report(&model, t);
        let detail = format!(
            "abs_error={} bound={}{}",
            sig10(tr.abs_error),
            sig10(tr.bound),
            if tr.bound_applies { "" } else { " (k*t > 1, bound not rigorous)" }
        );
        let s = if tr.bound_applies { status(tr.within_bound()) } else { "INFO" };
        r.text(name, format!("{s} {detail}"));
    }

    match gamma_coefficient(model.k, spec.t) {
        Ok(g) => r.text("gamma", format!("INFO {}", sig10(g))),
        Err(e) => r.text("gamma", format!("WARN {e}")),
    };
    match l2_time_coefficient_check(&model, spec.t) {
        Ok(c) => r.text(
            "l2_time_coefficient",
            format!(
                "{} direct={} gamma_form={} rel_gap={}",
                status(c.relative_gap() <= 1e-10),
                sig10(c.direct),
                sig10(c.gamma_form),
                sig10(c.relative_gap())
            ),
        ),
        Err(e) => r.text("l2_time_coefficient", format!("WARN {e}")),
    };

    let conv = cfg.pricing.convention;
    let slow = parabolic_coefficients(&model);
    let z = slow.value(spec.t);
    match effective_params(&cfg.vol, z, model.m, model.nu, model.rho_xy, conv) {
        Ok(eff) => {
            r.text(
                "sigma_bar_quadrature",
                format!(
                    "{} nodes={} rel_change={}",
                    status(eff.sigma_rel_change <= 1e-10),
                    eff.sigma_nodes,
                    sig10(eff.sigma_rel_change)
                ),
            );
            r.text(
                "v_quadrature",
                format!(
                    "{} cells={} rel_change={}",
                    status(eff.v_rel_change <= 1e-10),
                    eff.v_cells,
                    sig10(eff.v_rel_change)
                ),
            );
        }
        Err(e) => {
            r.text("sigma_bar_quadrature", format!("WARN {e}"));
        }
    }

    match solve_phi_with(&cfg.vol, z, model.m, model.nu, conv) {
        Ok(sol) => {
            let res = poisson_residual(&sol, 3.0);
            let line = if cfg.vol.is_y_constant() {
                "PASS exactly 0 (f does not depend on y)".to_string()
            } else {
                format!(
                    "{} max_relative={} nodes={}",
                    status(res.max_relative <= 1e-6),
                    sig10(res.max_relative),
                    res.nodes_checked
                )
            };
            r.text("phi_residual", line);
        }
        Err(e) => {
            r.text("phi_residual", format!("WARN {e}"));
        }
    }

    // the residual needs an interior time; fall back to the midpoint
    let t_eval = if spec.t > 0.0 && spec.t < spec.maturity {
        spec.t
    } else {
        0.5 * (spec.t + spec.maturity)
    };
    if t_eval > 0.0 && t_eval < spec.maturity {
        let at = OptionSpec::new(spec.spot, spec.strike, t_eval, spec.maturity)?;
        let z_eval = slow.value(t_eval);
        match effective_params(&cfg.vol, z_eval, model.m, model.nu, model.rho_xy, conv) {
            Ok(eff) => {
                for (name, mode) in [
                    ("pde_residual_classical", ResidualMode::Classical),
                    ("pde_residual_modified", ResidualMode::Modified),
                ] {
                    let line = match p0_pde_residual(&at, &model, &eff, mode) {
                        Ok(v) if mode == ResidualMode::Classical => {
                            format!("{} t={} relative={}", status(v.abs() <= 1e-4), sig10(t_eval), sig10(v))
                        }
                        Ok(v) => format!("INFO t={} relative={}", sig10(t_eval), sig10(v)),
                        Err(e) => format!("WARN {e}"),
                    };
                    r.text(name, line);
                }
            }
            Err(e) => {
                r.text("pde_residual_classical", format!("WARN {e}"));
            }
        }
    } else {
        r.text("pde_residual_classical", "WARN no interior time (t = T)");
    }

    match price_first_order_with(&spec, &model, &cfg.vol, cfg.pricing, None) {
        Ok(b) => r.text("price_total", format!("INFO {}", sig10(b.total))),
        Err(e) => r.text("price_total", format!("WARN {e}")),
    };
    Ok(r)
}
