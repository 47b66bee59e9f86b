//! Experiment configuration: JSON layout and resolution into core objects.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use ttssa::engine::{geometric_checkpoints, CHECKPOINTS_PER_DECADE};
use ttssa::gtd::{build_gtd_instance, feature_scale_factor, mrp_from_value, MrpJson};
use ttssa::linalg::Vector;
use ttssa::markov::{chain_table_from_value, ChainTableJson, FiniteMarkovChain, SampleTable, StartState};
use ttssa::problem::{ProblemInstance, ProblemJson};
use ttssa::schedule::{ScheduleJson, StepSchedule};
use ttssa::Error;

use crate::CliError;

/// Exponents of the fast step size visited by a sweep.
pub const DEFAULT_SWEEP: [f64; 5] = [0.55, 0.6, 2.0 / 3.0, 0.75, 0.85];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Plain,
    Restart,
    Sweep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    Inline(ProblemJson),
    File(PathBuf),
    Gtd(GtdSource),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GtdSource {
    File(PathBuf),
    Inline(MrpJson),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    Noiseless,
    Spread { transition: Vec<Vec<f64>>, delta: f64 },
    Table(ChainTableJson),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiChoice {
    #[default]
    Empirical,
    Theoretical,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestartOptions {
    /// `Δ0/ε`, ignored when `epsilon` is set.
    pub ratio: f64,
    pub epsilon: Option<f64>,
    pub psi: PsiChoice,
    pub pilot_traj: usize,
    pub pilot_horizon: u64,
    pub pilot_seed: Option<u64>,
    pub max_epochs: u64,
}

impl Default for RestartOptions {
    fn default() -> Self {
        RestartOptions {
            ratio: 64.0,
            epsilon: None,
            psi: PsiChoice::Empirical,
            pilot_traj: 100,
            pilot_horizon: 10_000,
            pilot_seed: None,
            max_epochs: 64,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub noise: Option<NoiseSource>,
    pub schedule: ScheduleJson,
    pub horizon: u64,
    pub checkpoints: Option<Vec<u64>>,
    pub per_decade: Option<u32>,
    #[serde(default = "default_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    #[serde(default)]
    pub chain_start: StartState,
    #[serde(default)]
    pub mode: Mode,
    pub sweep: Option<Vec<f64>>,
    pub window: Option<(f64, f64)>,
    #[serde(default)]
    pub restart: RestartOptions,
    /// Bound on the sampled vectors checked by `solve`.
    pub declared_b: Option<f64>,
    /// Rescale GTD features into the block bound before building.
    #[serde(default)]
    pub scale_features: bool,
    pub output: Option<PathBuf>,
}

fn default_traj() -> usize {
    100
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub traj: Option<usize>,
    pub horizon: Option<u64>,
    pub out: Option<PathBuf>,
    pub window: Option<(f64, f64)>,
}

/// A config with every file loaded and every object built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: ProblemInstance,
    pub chain: FiniteMarkovChain,
    pub table: SampleTable,
    pub schedule: StepSchedule,
    pub horizon: u64,
    pub checkpoints: Vec<u64>,
    pub n_traj: usize,
    pub base_seed: u64,
    pub x0: Vector,
    pub y0: Vector,
    pub start: StartState,
    pub mode: Mode,
    pub sweep: Vec<f64>,
    pub window: Option<(f64, f64)>,
    pub restart: RestartOptions,
    pub declared_b: Option<f64>,
    pub output: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, what: &Path) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse(format!("{}: {e}", what.display())))
}

pub fn load(path: &Path, ov: &Overrides) -> Result<Experiment, CliError> {
    let raw: ExperimentConfig = parse(&read(path)?, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve(raw, base, ov)
}

fn noise_tables(noise: Option<NoiseSource>, problem: &ProblemInstance, base: &Path) -> Result<(FiniteMarkovChain, SampleTable), CliError> {
    Ok(match noise.unwrap_or(NoiseSource::Noiseless) {
        NoiseSource::Noiseless => (FiniteMarkovChain::single_state(), SampleTable::noiseless(problem)),
        NoiseSource::Spread { transition, delta } => {
            let chain = FiniteMarkovChain::from_rows(&transition)?;
            let table = SampleTable::with_spread(problem, &chain, delta)?;
            (chain, table)
        }
        NoiseSource::Table(raw) => chain_table_from_value(raw)?,
        NoiseSource::File(p) => {
            let p = base.join(p);
            chain_table_from_value(parse(&read(&p)?, &p)?)?
        }
    })
}

pub fn resolve(raw: ExperimentConfig, base: &Path, ov: &Overrides) -> Result<Experiment, CliError> {
    let (problem, chain, table) = match raw.problem {
        ProblemSource::Gtd(src) => {
            if raw.noise.is_some() {
                return Err(Error::InvalidInput("a gtd problem carries its own noise; remove `noise`".into()).into());
            }
            let spec: MrpJson = match src {
                GtdSource::Inline(m) => m,
                GtdSource::File(p) => {
                    let p = base.join(p);
                    parse(&read(&p)?, &p)?
                }
            };
            let (mrp, mut features) = mrp_from_value(spec)?;
            if raw.scale_features {
                features = features.scaled(feature_scale_factor(&mrp, &features)?);
            }
            let g = build_gtd_instance(&mrp, &features)?;
            (g.problem, g.chain, g.table)
        }
        ProblemSource::Inline(p) => {
            let problem = ProblemInstance::from_json_value(p)?;
            let (chain, table) = noise_tables(raw.noise, &problem, base)?;
            (problem, chain, table)
        }
        ProblemSource::File(p) => {
            let p = base.join(p);
            let problem = ProblemInstance::from_json_value(parse(&read(&p)?, &p)?)?;
            let (chain, table) = noise_tables(raw.noise, &problem, base)?;
            (problem, chain, table)
        }
    };

    let schedule = StepSchedule::from_json_value(raw.schedule)?;
    let horizon = ov.horizon.unwrap_or(raw.horizon);
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()).into());
    }
    if raw.checkpoints.is_some() && raw.per_decade.is_some() {
        return Err(Error::InvalidInput("give either `checkpoints` or `per_decade`, not both".into()).into());
    }
    let checkpoints = match raw.checkpoints {
        Some(c) => c,
        None => geometric_checkpoints(horizon, raw.per_decade.unwrap_or(CHECKPOINTS_PER_DECADE)),
    };
    if checkpoints.is_empty() {
        return Err(Error::InvalidInput("no checkpoints".into()).into());
    }
    if !checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("checkpoints must be strictly increasing".into()).into());
    }
    let last = *checkpoints.last().unwrap();
    if last > horizon {
        return Err(Error::InvalidInput(format!("checkpoint {last} lies beyond the horizon {horizon}")).into());
    }

    let vector = |v: Option<Vec<f64>>, n: usize, name: &str| -> Result<Vector, CliError> {
        match v {
            None => Ok(Vector::zeros(n)),
            Some(v) if v.len() == n => Ok(Vector::from_vec(v)),
            Some(v) => Err(Error::Dimension(format!("{name} has {} entries, expected {n}", v.len())).into()),
        }
    };
    let x0 = vector(raw.x0, problem.dx(), "x0")?;
    let y0 = vector(raw.y0, problem.dy(), "y0")?;

    let n_traj = ov.traj.unwrap_or(raw.n_traj);
    if n_traj == 0 {
        return Err(Error::InvalidInput("at least one trajectory is required".into()).into());
    }
    let sweep = raw.sweep.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    if sweep.is_empty() {
        return Err(Error::InvalidInput("empty sweep grid".into()).into());
    }
    let window = ov.window.or(raw.window);
    if let Some((lo, hi)) = window {
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidInput(format!("window [{lo}, {hi}] needs 0 < lo < hi")).into());
        }
    }

    Ok(Experiment {
        problem,
        chain,
        table,
        schedule,
        horizon,
        checkpoints,
        n_traj,
        base_seed: ov.seed.unwrap_or(raw.base_seed),
        x0,
        y0,
        start: raw.chain_start,
        mode: raw.mode,
        sweep,
        window,
        restart: raw.restart,
        declared_b: raw.declared_b,
        output: ov.out.clone().or_else(|| raw.output.map(|p| base.join(p))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "problem": {"inline": {"a11": [[0.25]], "a12": [[0.1]], "a21": [[-0.1]], "a22": [[0.25]], "b1": [0.5], "b2": [0.25]}},
            "schedule": {"alpha": {"a0": 8.2, "exp": 0.6666666666666666}, "beta": {"b0": 3.5, "exp": 1.0}},
            "horizon": 1000
        })
    }

    fn resolve_value(v: serde_json::Value, ov: &Overrides) -> Result<Experiment, CliError> {
        resolve(serde_json::from_value(v).unwrap(), Path::new("."), ov)
    }

    #[test]
    fn defaults() {
        let e = resolve_value(minimal(), &Overrides::default()).unwrap();
        assert_eq!(e.chain.n_states(), 1);
        assert_eq!(e.n_traj, 100);
        assert_eq!(e.mode, Mode::Plain);
        assert_eq!(*e.checkpoints.last().unwrap(), 1000);
        assert_eq!(e.sweep.len(), 5);
    }

    #[test]
    fn overrides_win() {
        let ov = Overrides { seed: Some(9), traj: Some(3), horizon: Some(50), ..Default::default() };
        let e = resolve_value(minimal(), &ov).unwrap();
        assert_eq!((e.base_seed, e.n_traj, e.horizon), (9, 3, 50));
        assert_eq!(*e.checkpoints.last().unwrap(), 50);
    }

    #[test]
    fn checkpoint_beyond_horizon() {
        let mut v = minimal();
        v["checkpoints"] = serde_json::json!([10, 2000]);
        assert!(matches!(resolve_value(v, &Overrides::default()), Err(CliError::Core(Error::InvalidInput(_)))));
    }

    #[test]
    fn gtd_with_noise_rejected() {
        let mut v = minimal();
        v["problem"] = serde_json::json!({"gtd": {"transition": [[1.0]], "reward": [1.0], "discount": 0.9, "features": [[0.5]]}});
        v["noise"] = serde_json::json!("noiseless");
        assert!(resolve_value(v, &Overrides::default()).is_err());
    }

    #[test]
    fn start_dimension() {
        let mut v = minimal();
        v["x0"] = serde_json::json!([1.0, 2.0]);
        assert!(matches!(resolve_value(v, &Overrides::default()), Err(CliError::Core(Error::Dimension(_)))));
    }
}
