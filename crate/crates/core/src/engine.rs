//! The two-time-scale iteration, residual coordinates, Lyapunov values and
//! seeded Monte Carlo error curves.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::markov::{substream_seed, FiniteMarkovChain, SampleStream, SampleTable, StartState};
use crate::problem::{exact_solution, spectral_summary, ExactSolution, ProblemInstance, SpectralSummary};
use crate::schedule::StepSchedule;

/// Coordinates above this magnitude count as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e100;

/// Default checkpoint density of [`geometric_checkpoints`].
pub const CHECKPOINTS_PER_DECADE: u32 = 25;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TTSSA_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    /// Schedule index of the next step.
    pub k: u64,
    pub x: Vector,
    pub y: Vector,
    gx: Vector,
    gy: Vector,
}

impl IterateState {
    pub fn new(x: Vector, y: Vector) -> Self {
        let (gx, gy) = (Vector::zeros(x.len()), Vector::zeros(y.len()));
        IterateState { k: 0, x, y, gx, gy }
    }

    fn check_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.abs() <= DIVERGENCE_BOUND)
    }
}

/// One synchronous step with explicit step sizes: both updates read the
/// values of step `k`.
pub fn sa_step_with(state: &mut IterateState, blocks: &ProblemInstance, alpha: f64, beta: f64) -> Result<()> {
    state.gx.copy_from(&blocks.b1);
    state.gx.gemv(-1.0, &blocks.a11, &state.x, 1.0);
    state.gx.gemv(-1.0, &blocks.a12, &state.y, 1.0);
    state.gy.copy_from(&blocks.b2);
    state.gy.gemv(-1.0, &blocks.a21, &state.x, 1.0);
    state.gy.gemv(-1.0, &blocks.a22, &state.y, 1.0);
    state.x.axpy(alpha, &state.gx, 1.0);
    state.y.axpy(beta, &state.gy, 1.0);
    state.k += 1;
    if !state.check_finite() {
        return Err(Error::NonFinite { step: state.k, trajectory: None });
    }
    Ok(())
}

/// One step at the schedule's `(α_k, β_k)`, `k = state.k`.
pub fn sa_step(state: &mut IterateState, blocks: &ProblemInstance, schedule: &StepSchedule) -> Result<()> {
    let (alpha, beta) = schedule.step_values(state.k as i64);
    sa_step_with(state, blocks, alpha, beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualState {
    pub x_hat: Vector,
    pub y_hat: Vector,
    pub z_hat_sq: f64,
}

/// The affine change of coordinates `X̂ = X − A11⁻¹(b1 − A12 Y)`, `Ŷ = Y − Y*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMap {
    a11_inv_b1: Vector,
    a11_inv_a12: Matrix,
    y_star: Vector,
}

impl ResidualMap {
    pub fn new(p: &ProblemInstance, sol: &ExactSolution) -> Result<Self> {
        Ok(ResidualMap {
            a11_inv_b1: linalg::solve_vec(&p.a11, &p.b1, "A11")?,
            a11_inv_a12: linalg::solve(&p.a11, &p.a12, "A11")?,
            y_star: sol.y_star.clone(),
        })
    }

    pub fn residuals(&self, x: &Vector, y: &Vector) -> ResidualState {
        let x_hat = x - &self.a11_inv_b1 + &self.a11_inv_a12 * y;
        let y_hat = y - &self.y_star;
        let z_hat_sq = x_hat.norm_squared() + y_hat.norm_squared();
        ResidualState { x_hat, y_hat, z_hat_sq }
    }

    /// `(‖X̂‖², ‖Ŷ‖²)`.
    pub fn squared_norms(&self, x: &Vector, y: &Vector) -> (f64, f64) {
        let r = self.residuals(x, y);
        (r.x_hat.norm_squared(), r.y_hat.norm_squared())
    }

    /// Inverse map `(X̂, Ŷ) ↦ (X, Y)`.
    pub fn reconstruct(&self, x_hat: &Vector, y_hat: &Vector) -> (Vector, Vector) {
        let y = y_hat + &self.y_star;
        let x = x_hat + &self.a11_inv_b1 - &self.a11_inv_a12 * &y;
        (x, y)
    }
}

pub fn residuals(state: &IterateState, p: &ProblemInstance, sol: &ExactSolution) -> Result<ResidualState> {
    Ok(ResidualMap::new(p, sol)?.residuals(&state.x, &state.y))
}

/// `V = ‖Ŷ‖² + (β/α)·‖X̂‖²/(2γρ)`.
pub fn lyapunov_from_norms(x_hat_sq: f64, y_hat_sq: f64, alpha: f64, beta: f64, gamma: f64, rho: f64) -> f64 {
    y_hat_sq + beta / alpha * x_hat_sq / (2.0 * gamma * rho)
}

pub fn lyapunov_value(r: &ResidualState, schedule: &StepSchedule, k: i64, spec: &SpectralSummary) -> f64 {
    let (alpha, beta) = schedule.step_values(k);
    lyapunov_from_norms(r.x_hat.norm_squared(), r.y_hat.norm_squared(), alpha, beta, spec.gamma, spec.rho)
}

/// `0` and the rounded points `10^{i/per_decade}` up to `horizon`, plus `horizon`.
pub fn geometric_checkpoints(horizon: u64, per_decade: u32) -> Vec<u64> {
    let mut grid = vec![0];
    if horizon == 0 {
        return grid;
    }
    let per_decade = per_decade.max(1) as f64;
    let mut i = 0u32;
    loop {
        let k = 10f64.powf(i as f64 / per_decade).round() as u64;
        if k >= horizon {
            break;
        }
        if k > *grid.last().unwrap() {
            grid.push(k);
        }
        i += 1;
    }
    grid.push(horizon);
    grid
}

/// Adds `k + 1` after every checkpoint `k < horizon`.
pub fn with_successors(grid: &[u64], horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = grid.iter().flat_map(|&k| [k, k + 1]).filter(|&k| k <= horizon).collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub checkpoints: Vec<u64>,
    pub x_hat_sq: Vec<f64>,
    pub y_hat_sq: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub final_state: IterateState,
    pub final_chain_state: usize,
}

/// Immutable description of one experiment: the mean system, its noise and
/// a schedule, with the solution and spectral data precomputed.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub problem: &'a ProblemInstance,
    pub chain: &'a FiniteMarkovChain,
    pub table: &'a SampleTable,
    pub schedule: StepSchedule,
    pub solution: ExactSolution,
    pub spectral: SpectralSummary,
    pub map: ResidualMap,
    pub start: StartState,
}

impl<'a> Simulator<'a> {
    pub fn new(
        problem: &'a ProblemInstance,
        chain: &'a FiniteMarkovChain,
        table: &'a SampleTable,
        schedule: StepSchedule,
    ) -> Result<Self> {
        if table.n_states() != chain.n_states() {
            return Err(Error::Dimension(format!("{} table states for a {}-state chain", table.n_states(), chain.n_states())));
        }
        if table.state(0).dx() != problem.dx() || table.state(0).dy() != problem.dy() {
            return Err(Error::Dimension("table blocks do not match the problem dimensions".into()));
        }
        let solution = exact_solution(problem)?;
        let spectral = spectral_summary(problem, table)?;
        let map = ResidualMap::new(problem, &solution)?;
        Ok(Simulator { problem, chain, table, schedule, solution, spectral, map, start: StartState::Stationary })
    }

    pub fn with_start(mut self, start: StartState) -> Self {
        self.start = start;
        self
    }

    pub fn stream(&self, seed: u64) -> Result<SampleStream<'a>> {
        SampleStream::new(self.chain, self.table, seed, self.start)
    }

    /// `V` at schedule index `k` for the given iterate.
    pub fn lyapunov_at(&self, x: &Vector, y: &Vector, k: u64) -> f64 {
        let (xs, ys) = self.map.squared_norms(x, y);
        let (alpha, beta) = self.schedule.step_values(k as i64);
        lyapunov_from_norms(xs, ys, alpha, beta, self.spectral.gamma, self.spectral.rho)
    }

    /// Runs `steps` iterations, drawing one sample before each update.
    pub fn advance(&self, state: &mut IterateState, stream: &mut SampleStream<'_>, steps: u64) -> Result<()> {
        for _ in 0..steps {
            let (_, blocks) = stream.next_sample();
            sa_step(state, blocks, &self.schedule)?;
        }
        Ok(())
    }

    pub fn run_trajectory(&self, x0: &Vector, y0: &Vector, seed: u64, checkpoints: &[u64]) -> Result<TrajectoryRecord> {
        check_grid(checkpoints)?;
        if x0.len() != self.problem.dx() || y0.len() != self.problem.dy() {
            return Err(Error::Dimension("initial point does not match the problem dimensions".into()));
        }
        let mut stream = self.stream(seed)?;
        let mut state = IterateState::new(x0.clone(), y0.clone());
        let n = checkpoints.len();
        let (mut xs, mut ys, mut vs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for &k in checkpoints {
            let steps = k - state.k;
            self.advance(&mut state, &mut stream, steps)?;
            let (x_sq, y_sq) = self.map.squared_norms(&state.x, &state.y);
            let (alpha, beta) = self.schedule.step_values(k as i64);
            xs.push(x_sq);
            ys.push(y_sq);
            vs.push(lyapunov_from_norms(x_sq, y_sq, alpha, beta, self.spectral.gamma, self.spectral.rho));
        }
        Ok(TrajectoryRecord {
            checkpoints: checkpoints.to_vec(),
            x_hat_sq: xs,
            y_hat_sq: ys,
            lyapunov: vs,
            final_chain_state: stream.state(),
            final_state: state,
        })
    }

    pub fn monte_carlo_mse(
        &self,
        x0: &Vector,
        y0: &Vector,
        n_traj: usize,
        base_seed: u64,
        checkpoints: &[u64],
    ) -> Result<MseCurve> {
        if n_traj == 0 {
            return Err(Error::InvalidInput("at least one trajectory is required".into()));
        }
        check_grid(checkpoints)?;
        let records = run_parallel(n_traj, |i| self.run_trajectory(x0, y0, substream_seed(base_seed, i as u64), checkpoints))?;
        Ok(MseCurve::from_records(&records, &self.schedule, self.start))
    }
}

fn check_grid(checkpoints: &[u64]) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("checkpoints must be strictly increasing".into()));
    }
    Ok(())
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Evaluates `job(i)` for `i < n` in parallel and returns the results in index
/// order. The first failing index, if any, is reported.
pub fn run_parallel<T, F>(n: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let work = || -> Vec<Result<T>> { (0..n).into_par_iter().map(&job).collect() };
    let results = match thread_cap() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| match e {
                Error::NonFinite { step, .. } => Error::NonFinite { step, trajectory: Some(i) },
                other => other,
            })
        })
        .collect()
}

/// Mean and sample standard error of `values` with a fixed summation tree.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = linalg::pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    (mean, (linalg::pairwise_sum(&sq) / (n - 1.0) / n).sqrt())
}

/// Monte Carlo averages of the residual norms and of `V` at each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseCurve {
    pub checkpoints: Vec<u64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub mse_x: Vec<f64>,
    pub mse_y: Vec<f64>,
    pub lyapunov: Vec<f64>,
    pub se_x: Vec<f64>,
    pub se_y: Vec<f64>,
    pub se_lyapunov: Vec<f64>,
    /// Sample covariance across trajectories of `V` at checkpoint `i` and `i+1`;
    /// zero for the last checkpoint.
    pub cov_next_lyapunov: Vec<f64>,
    /// Sample variance of `V` across trajectories.
    pub var_lyapunov: Vec<f64>,
    pub n_traj: usize,
    pub start: StartState,
}

pub const CURVE_CSV_HEADER: [&str; 7] = ["k", "alpha_k", "beta_k", "mse_x", "mse_y", "lyapunov", "se_lyapunov"];

impl MseCurve {
    pub fn from_records(records: &[TrajectoryRecord], schedule: &StepSchedule, start: StartState) -> Self {
        let checkpoints = records[0].checkpoints.clone();
        let n = records.len();
        let column = |f: &dyn Fn(&TrajectoryRecord) -> &Vec<f64>, i: usize| -> Vec<f64> { records.iter().map(|r| f(r)[i]).collect() };
        let mut curve = MseCurve {
            alpha: checkpoints.iter().map(|&k| schedule.alpha(k as i64)).collect(),
            beta: checkpoints.iter().map(|&k| schedule.beta(k as i64)).collect(),
            checkpoints,
            mse_x: Vec::new(),
            mse_y: Vec::new(),
            lyapunov: Vec::new(),
            se_x: Vec::new(),
            se_y: Vec::new(),
            se_lyapunov: Vec::new(),
            cov_next_lyapunov: Vec::new(),
            var_lyapunov: Vec::new(),
            n_traj: n,
            start,
        };
        let len = curve.checkpoints.len();
        for i in 0..len {
            let (mx, sx) = mean_and_se(&column(&|r| &r.x_hat_sq, i));
            let (my, sy) = mean_and_se(&column(&|r| &r.y_hat_sq, i));
            let v = column(&|r| &r.lyapunov, i);
            let (mv, sv) = mean_and_se(&v);
            curve.mse_x.push(mx);
            curve.mse_y.push(my);
            curve.lyapunov.push(mv);
            curve.se_x.push(sx);
            curve.se_y.push(sy);
            curve.se_lyapunov.push(sv);
            curve.var_lyapunov.push(if n > 1 { sv * sv * n as f64 } else { 0.0 });
            let cov = if i + 1 < len && n > 1 {
                let w = column(&|r| &r.lyapunov, i + 1);
                let mw = linalg::pairwise_sum(&w) / n as f64;
                let prod: Vec<f64> = v.iter().zip(&w).map(|(a, b)| (a - mv) * (b - mw)).collect();
                linalg::pairwise_sum(&prod) / (n as f64 - 1.0)
            } else {
                0.0
            };
            curve.cov_next_lyapunov.push(cov);
        }
        curve
    }

    /// `(k, mean V)` pairs.
    pub fn lyapunov_points(&self) -> Vec<(f64, f64)> {
        self.checkpoints.iter().map(|&k| k as f64).zip(self.lyapunov.iter().copied()).collect()
    }

    pub fn index_of(&self, k: u64) -> Option<usize> {
        self.checkpoints.binary_search(&k).ok()
    }

    /// CSV with header `k,alpha_k,beta_k,mse_x,mse_y,lyapunov,se_lyapunov`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv output: {e}"));
        w.write_record(CURVE_CSV_HEADER).map_err(io)?;
        for i in 0..self.checkpoints.len() {
            w.write_record([
                self.checkpoints[i].to_string(),
                self.alpha[i].to_string(),
                self.beta[i].to_string(),
                self.mse_x[i].to_string(),
                self.mse_y[i].to_string(),
                self.lyapunov[i].to_string(),
                self.se_lyapunov[i].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv output: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Reads `(k, column)` pairs from a curve CSV with a header row.
pub fn read_curve_column<R: std::io::Read>(input: R, column: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let bad = |e: csv::Error| Error::InvalidInput(format!("csv input: {e}"));
    let headers = r.headers().map_err(bad)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidInput(format!("csv has no `{name}` column")))
    };
    let (ki, vi) = (find("k")?, find(column)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(bad)?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("unparsable field in row {:?}", rec.position().map(|p| p.line()))))
        };
        out.push((parse(ki)?, parse(vi)?));
    }
    Ok(out)
}

/// Deterministic run with explicit inputs.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    p: &ProblemInstance,
    table: &SampleTable,
    chain: &FiniteMarkovChain,
    schedule: &StepSchedule,
    x0: &Vector,
    y0: &Vector,
    seed: u64,
    checkpoints: &[u64],
) -> Result<TrajectoryRecord> {
    Simulator::new(p, chain, table, *schedule)?.run_trajectory(x0, y0, seed, checkpoints)
}

#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_mse(
    p: &ProblemInstance,
    table: &SampleTable,
    chain: &FiniteMarkovChain,
    schedule: &StepSchedule,
    x0: &Vector,
    y0: &Vector,
    n_traj: usize,
    base_seed: u64,
    checkpoints: &[u64],
) -> Result<MseCurve> {
    Simulator::new(p, chain, table, *schedule)?.monte_carlo_mse(x0, y0, n_traj, base_seed, checkpoints)
}
