use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde_json::{json, Value};
use ttssa::constants::RateConstants;
use ttssa::engine::{geometric_checkpoints, read_curve_column, Simulator, CHECKPOINTS_PER_DECADE};
use ttssa::fit::fit_rate;
use ttssa::markov::{substream_seed, MixingProfile};
use ttssa::problem::{exact_solution, validate_assumptions};
use ttssa::restart::{budget_restarted, fit_psi_surrogates, run_restarted, PsiSource, RestartConfig};
use ttssa::schedule::{k_star, validate_schedule, StepSchedule};
use ttssa::Error;

use crate::config::{Experiment, PsiChoice};
use crate::CliError;

/// What a command produced: a CSV table or a JSON document.
pub enum Output {
    Csv(String),
    Json(Value),
    /// A table plus a summary shown when the table goes to a file.
    CsvWithSummary(String, Value),
}

fn simulator(e: &Experiment, schedule: StepSchedule) -> Result<Simulator<'_>, CliError> {
    Ok(Simulator::new(&e.problem, &e.chain, &e.table, schedule)?.with_start(e.start))
}

fn vec_json(v: &ttssa::linalg::Vector) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

pub fn solve(e: &Experiment) -> Result<Output, CliError> {
    let sol = exact_solution(&e.problem)?;
    let sim = simulator(e, e.schedule)?;
    let report = validate_assumptions(&e.problem, &e.chain, &e.table, e.declared_b);
    Ok(Output::Json(json!({
        "x_star": vec_json(&sol.x_star),
        "y_star": vec_json(&sol.y_star),
        "spectral": sim.spectral,
        "assumptions": report,
    })))
}

pub fn validate(e: &Experiment) -> Result<Output, CliError> {
    let sim = simulator(e, e.schedule)?;
    let cert = validate_schedule(&e.schedule, &sim.spectral);
    let mix = MixingProfile::compute(&e.chain, &e.table)?;
    let (slope, offset) = mix.tau_envelope();
    let mut doc = json!({
        "schedule": e.schedule.to_json_value(),
        "certification": cert,
        "mixing": {"c_geometric": mix.c_geometric(), "tau_slope": slope, "tau_offset": offset},
    });
    match k_star(&e.schedule, &mix) {
        Ok(ks) => doc["k_star"] = json!(ks),
        Err(err) => doc["k_star_error"] = json!(err.to_string()),
    }
    let e_z0_sq = sim.map.residuals(&e.x0, &e.y0).z_hat_sq;
    let v0 = sim.lyapunov_at(&e.x0, &e.y0, 0);
    match RateConstants::compute(&sim.spectral, &e.schedule, &mix, e_z0_sq, v0) {
        Ok(rc) => doc["constants"] = rc.report(),
        Err(err) => doc["constants_error"] = json!(err.to_string()),
    }
    Ok(Output::Json(doc))
}

pub fn run_plain(e: &Experiment) -> Result<Output, CliError> {
    let sim = simulator(e, e.schedule)?;
    let curve = sim.monte_carlo_mse(&e.x0, &e.y0, e.n_traj, e.base_seed, &e.checkpoints)?;
    Ok(Output::Csv(curve.to_csv_string()))
}

pub fn restart(e: &Experiment) -> Result<Output, CliError> {
    let sim = simulator(e, e.schedule)?;
    let opts = &e.restart;
    let v0 = sim.lyapunov_at(&e.x0, &e.y0, 0);
    let epsilon = match opts.epsilon {
        Some(eps) => eps,
        None if opts.ratio > 1.0 => v0 / opts.ratio,
        None => return Err(Error::InvalidInput(format!("restart ratio {} must exceed 1", opts.ratio)).into()),
    };
    let (psi1, psi2, source) = match opts.psi {
        PsiChoice::Empirical => {
            let grid = geometric_checkpoints(opts.pilot_horizon, CHECKPOINTS_PER_DECADE);
            let seed = opts.pilot_seed.unwrap_or_else(|| substream_seed(e.base_seed, u64::MAX));
            let pilot = sim.monte_carlo_mse(&e.x0, &e.y0, opts.pilot_traj, seed, &grid)?;
            let fit = fit_psi_surrogates(&pilot, v0)?;
            (fit.psi1, fit.psi2, PsiSource::Empirical)
        }
        PsiChoice::Theoretical => {
            let mix = MixingProfile::compute(&e.chain, &e.table)?;
            let e_z0_sq = sim.map.residuals(&e.x0, &e.y0).z_hat_sq;
            let rc = RateConstants::compute(&sim.spectral, &e.schedule, &mix, e_z0_sq, v0)?;
            let (p1, p2) = (rc.psi1.to_f64(), rc.psi2.to_f64());
            if !p1.is_finite() || !p2.is_finite() {
                return Err(Error::Overflow(format!(
                    "theoretical psi1 = {}, psi2 = {} exceed the f64 range",
                    rc.psi1.to_scientific(6),
                    rc.psi2.to_scientific(6)
                ))
                .into());
            }
            (p1, p2, PsiSource::Theoretical)
        }
    };
    let cfg = RestartConfig::new(v0, epsilon, psi1, psi2, source)?.with_max_epochs(opts.max_epochs);
    let budget = budget_restarted(&cfg)?;
    let log = run_restarted(&sim, &cfg, &e.x0, &e.y0, e.n_traj, e.base_seed)?;
    let summary = json!({
        "delta0": v0,
        "epsilon": epsilon,
        "psi1": psi1,
        "psi2": psi2,
        "psi_source": source.label(),
        "budget": budget,
    });
    Ok(Output::CsvWithSummary(log.to_csv_string(), summary))
}

pub const SWEEP_CSV_HEADER: &str = "s,certification,slope,intercept,r_squared,status";

/// Fast exponent `a = s` over the grid with `b = 1`, one rate fit per `s`.
pub fn sweep(e: &Experiment) -> Result<Output, CliError> {
    if e.schedule.alpha.exponent() == 0.0 || e.schedule.beta.exponent() == 0.0 {
        return Err(Error::InvalidInput("sweep needs polynomial step sizes".into()).into());
    }
    let window = e.window.unwrap_or((e.horizon as f64 / 100.0, e.horizon as f64));
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for &s in &e.sweep {
        let schedule = StepSchedule::polynomial(e.schedule.alpha0(), s, e.schedule.beta0(), 1.0)?;
        let sim = simulator(e, schedule)?;
        let cert = validate_schedule(&schedule, &sim.spectral);
        let status = format!("{:?}", cert.status).to_lowercase();
        match sim.monte_carlo_mse(&e.x0, &e.y0, e.n_traj, e.base_seed, &e.checkpoints) {
            Ok(curve) => {
                let f = fit_rate(&curve.lyapunov_points(), window)?;
                out.push_str(&format!("{s},{status},{},{},{},ok\n", f.slope, f.intercept, f.r_squared));
            }
            Err(Error::NonFinite { .. }) => out.push_str(&format!("{s},{status},,,,diverged\n")),
            Err(err) => return Err(err.into()),
        }
    }
    Ok(Output::Csv(out))
}

pub fn rate_fit(input: &Path, column: &str, window: Option<(f64, f64)>) -> Result<Output, CliError> {
    let file = File::open(input).map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?;
    let points = read_curve_column(BufReader::new(file), column)?;
    let (lo, hi) = window.unwrap_or((1.0, f64::INFINITY));
    let f = fit_rate(&points, (lo, hi))?;
    let n_points = points.iter().filter(|&&(k, _)| k >= lo && k <= hi).count();
    Ok(Output::Json(json!({
        "column": column,
        "slope": f.slope,
        "intercept": f.intercept,
        "r_squared": f.r_squared,
        "n_points": n_points,
    })))
}
