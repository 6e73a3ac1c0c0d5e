//! End-to-end OER vs UatF max-min experiment and its CSV outputs.
//!
//! `convergence.csv`: `iteration,bound,objective_bits_per_symbol,thompson_step`,
//! one row per iteration per solved bound, then one `uatf_solution_oer_value`
//! row per OER iteration holding the OER objective at the UatF solution.
//! `rates.csv`: per-user OER rates at both solutions. `powers.csv`: both
//! power vectors. Rates are in bits per symbol times `1 − τ_p/τ_c` unless
//! raw nats are requested.

use std::f64::consts::LN_2;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cache::CacheError;
use crate::config::{Bound, ConfigError, ExperimentConfig, SolverSettings};
use crate::msp::{conditional_eigenpair, EigenpairResult, MspError, PowerVector, SolverConfig};
use crate::rates::{
    build_oer_mapping, build_uatf_mapping, moment_statistics, oer_rates, uatf_rates, RateError,
    SampleSet, UserWeights,
};
use crate::sim::{simulate, SimError};

pub const CONVERGENCE_HEADER: [&str; 4] = ["iteration", "bound", "objective_bits_per_symbol", "thompson_step"];
pub const REFERENCE_LABEL: &str = "uatf_solution_oer_value";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Rates(#[from] RateError),
    #[error(transparent)]
    Solver(#[from] MspError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// 2 for configuration problems, 3 for degenerate inputs, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        fn rate_code(e: &RateError) -> i32 {
            match e {
                RateError::DegenerateUser { .. }
                | RateError::DegenerateUatf { .. }
                | RateError::BeamformerNorm { .. }
                | RateError::NonFinite { .. } => 3,
                _ => 2,
            }
        }
        match self {
            Self::Config(ConfigError::Io { .. }) | Self::Io { .. } => 4,
            Self::Config(_) => 2,
            Self::Simulation(SimError::Samples(e)) | Self::Rates(e) => rate_code(e),
            Self::Simulation(SimError::DegenerateBeamformer { .. } | SimError::Numerical(_)) => 3,
            Self::Simulation(_) => 2,
            Self::Solver(MspError::Evaluation(inner)) => {
                inner.downcast_ref::<RateError>().map_or(3, rate_code)
            }
            Self::Solver(MspError::MappingContract { .. }) => 3,
            Self::Solver(_) => 2,
            Self::Cache(CacheError::Io { .. }) => 4,
            Self::Cache(CacheError::Invalid(e)) => rate_code(e),
            Self::Cache(_) => 3,
        }
    }
}

/// One max-min solve under a given bound.
#[derive(Debug, Clone)]
pub struct BoundRun {
    pub bound: Bound,
    pub result: EigenpairResult,
    /// `min_u r_u(p_n)/α_u` in nats for every iterate, under the same bound.
    pub objective: Vec<f64>,
    /// Per-user OER (nats) at the final power vector.
    pub oer_rates: Vec<f64>,
}

impl BoundRun {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("at least one iteration")
    }
}

#[derive(Debug, Clone)]
pub enum UatfBaseline {
    Solved(BoundRun),
    /// Some user has a zero mean effective channel.
    Degenerate { user: usize },
}

#[derive(Debug, Clone)]
pub struct ExperimentOutputs {
    pub weights: UserWeights,
    pub oer: BoundRun,
    pub uatf: UatfBaseline,
    /// Nats to reported units: `1` for raw rates, else `(1 − τ_p/τ_c)/ln 2`.
    pub rate_scale: f64,
}

fn weighted_min(rates: &[f64], weights: &UserWeights) -> f64 {
    rates
        .iter()
        .zip(weights.as_slice())
        .fold(f64::INFINITY, |m, (r, a)| m.min(r / a))
}

impl ExperimentOutputs {
    pub fn uatf_run(&self) -> Option<&BoundRun> {
        match &self.uatf {
            UatfBaseline::Solved(run) => Some(run),
            UatfBaseline::Degenerate { .. } => None,
        }
    }

    /// Weighted min OER (nats) at the OER solution.
    pub fn oer_objective(&self) -> f64 {
        weighted_min(&self.oer.oer_rates, &self.weights)
    }

    /// Weighted min OER (nats) at the UatF solution.
    pub fn uatf_solution_oer_objective(&self) -> Option<f64> {
        self.uatf_run().map(|r| weighted_min(&r.oer_rates, &self.weights))
    }
}

pub fn solver_config(settings: &SolverSettings, p_max: f64) -> SolverConfig {
    SolverConfig::new(p_max)
        .with_norm(settings.norm.clone())
        .with_tolerance(settings.tolerance)
        .with_max_iterations(settings.max_iterations)
}

fn weights_for(settings: &SolverSettings, users: usize) -> Result<UserWeights, RateError> {
    match &settings.weights {
        Some(w) => UserWeights::new(w.clone()),
        None => Ok(UserWeights::uniform(users)),
    }
}

/// Solves the max-min problem for `bound` on `set`.
pub fn solve_bound(
    set: &SampleSet,
    bound: Bound,
    weights: &UserWeights,
    config: &SolverConfig,
) -> Result<BoundRun, ExperimentError> {
    let (result, objective) = match bound {
        Bound::Oer => {
            let mapping = build_oer_mapping(set, weights.clone())?;
            let result = conditional_eigenpair(&mapping, config)?;
            let objective = result
                .trace
                .records()
                .iter()
                .map(|r| oer_rates(set, &r.power).map(|x| weighted_min(&x, weights)))
                .collect::<Result<Vec<_>, _>>()?;
            (result, objective)
        }
        Bound::Uatf => {
            let stats = moment_statistics(set);
            let mapping = build_uatf_mapping(&stats, weights.clone(), set.noise_power())?;
            let result = conditional_eigenpair(&mapping, config)?;
            let objective = result
                .trace
                .records()
                .iter()
                .map(|r| uatf_rates(&stats, &r.power, set.noise_power()).map(|x| weighted_min(&x, weights)))
                .collect::<Result<Vec<_>, _>>()?;
            (result, objective)
        }
    };
    if !result.converged {
        log::warn!("{bound} solve did not converge; results are flagged");
    }
    let oer_rates = oer_rates(set, &result.power)?;
    Ok(BoundRun {
        bound,
        result,
        objective,
        oer_rates,
    })
}

/// Solves OER, then the UatF baseline on the same samples.
pub fn compare_bounds(
    set: &SampleSet,
    settings: &SolverSettings,
    p_max: f64,
    rate_scale: f64,
) -> Result<ExperimentOutputs, ExperimentError> {
    let weights = weights_for(settings, set.users())?;
    let config = solver_config(settings, p_max);
    let oer = solve_bound(set, Bound::Oer, &weights, &config)?;
    let uatf = match solve_bound(set, Bound::Uatf, &weights, &config) {
        Ok(run) => UatfBaseline::Solved(run),
        Err(ExperimentError::Rates(RateError::DegenerateUatf { user })) => {
            log::warn!("UatF baseline skipped: user {user} has a zero mean effective channel");
            UatfBaseline::Degenerate { user }
        }
        Err(e) => return Err(e),
    };
    Ok(ExperimentOutputs {
        weights,
        oer,
        uatf,
        rate_scale,
    })
}

/// `1` for raw nats, else `(1 − τ_p/τ_c)/ln 2`.
pub fn rate_scale(config: &ExperimentConfig) -> f64 {
    if config.output.raw_rates {
        1.0
    } else {
        config.scenario.prelog_factor() / LN_2
    }
}

/// Simulates the scenario, runs both solves and writes the three CSVs.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutputs, ExperimentError> {
    config.validate()?;
    let sim = simulate(&config.scenario)?;
    let outputs = compare_bounds(
        &sim.samples,
        &config.solver,
        config.scenario.p_max,
        rate_scale(config),
    )?;
    write_outputs(&outputs, out_dir)?;
    Ok(outputs)
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    fs::write(path, bytes).map_err(io_error(path))
}

fn trace_rows(run: &BoundRun, scale: f64) -> impl Iterator<Item = Vec<String>> + '_ {
    run.result
        .trace
        .records()
        .iter()
        .zip(&run.objective)
        .map(move |(r, obj)| {
            vec![
                r.iteration.to_string(),
                run.bound.to_string(),
                (obj * scale).to_string(),
                r.step.to_string(),
            ]
        })
}

/// Rows of `convergence.csv` for the given runs plus an optional reference.
pub fn convergence_rows(runs: &[&BoundRun], reference: Option<f64>, scale: f64) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = runs.iter().flat_map(|r| trace_rows(r, scale)).collect();
    if let (Some(value), Some(first)) = (reference, runs.first()) {
        for r in first.result.trace.records() {
            rows.push(vec![
                r.iteration.to_string(),
                REFERENCE_LABEL.to_string(),
                (value * scale).to_string(),
                String::new(),
            ]);
        }
    }
    rows
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_outputs(outputs: &ExperimentOutputs, dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let scale = outputs.rate_scale;
    let uatf = outputs.uatf_run();
    let mut runs = vec![&outputs.oer];
    runs.extend(uatf);
    write_csv(
        &dir.join("convergence.csv"),
        &CONVERGENCE_HEADER,
        &convergence_rows(&runs, outputs.uatf_solution_oer_objective(), scale),
    )?;

    let n = outputs.oer.oer_rates.len();
    let rates: Vec<Vec<String>> = (0..n)
        .map(|u| {
            vec![
                u.to_string(),
                outputs.weights.as_slice()[u].to_string(),
                (outputs.oer.oer_rates[u] * scale).to_string(),
                fmt_opt(uatf.map(|r| r.oer_rates[u] * scale)),
            ]
        })
        .collect();
    write_csv(
        &dir.join("rates.csv"),
        &["user", "weight", "oer_rate_at_oer_solution", "oer_rate_at_uatf_solution"],
        &rates,
    )?;

    let powers: Vec<Vec<String>> = (0..n)
        .map(|u| {
            vec![
                u.to_string(),
                outputs.oer.result.power[u].to_string(),
                fmt_opt(uatf.map(|r| r.result.power[u])),
            ]
        })
        .collect();
    write_csv(&dir.join("powers.csv"), &["user", "oer_power_mw", "uatf_power_mw"], &powers)?;

    let status = [
        ("oer_converged", outputs.oer.result.converged.to_string()),
        ("oer_iterations", outputs.oer.result.iterations().to_string()),
        (
            "uatf_status",
            match &outputs.uatf {
                UatfBaseline::Solved(r) if r.result.converged => "converged".to_string(),
                UatfBaseline::Solved(_) => "not_converged".to_string(),
                UatfBaseline::Degenerate { user } => format!("degenerate_user_{user}"),
            },
        ),
    ];
    let rows: Vec<Vec<String>> = status.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
    write_csv(&dir.join("status.csv"), &["key", "value"], &rows)
}

/// Outputs of a single-bound solve (`solve` verb).
pub fn write_single_run(
    run: &BoundRun,
    weights: &UserWeights,
    scale: f64,
    dir: &Path,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    write_csv(
        &dir.join("convergence.csv"),
        &CONVERGENCE_HEADER,
        &convergence_rows(&[run], None, scale),
    )?;
    let n = run.oer_rates.len();
    let rates: Vec<Vec<String>> = (0..n)
        .map(|u| {
            vec![
                u.to_string(),
                weights.as_slice()[u].to_string(),
                (run.oer_rates[u] * scale).to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("rates.csv"), &["user", "weight", "oer_rate"], &rates)?;
    let powers: Vec<Vec<String>> = (0..n)
        .map(|u| vec![u.to_string(), run.result.power[u].to_string()])
        .collect();
    write_csv(&dir.join("powers.csv"), &["user", "power_mw"], &powers)
}

/// Uniformly random feasible power vectors `‖p‖∞ ≤ p_max` for optimality
/// checks, drawn from `(0, p_max]` per coordinate.
pub fn random_feasible_powers<R: rand::Rng + ?Sized>(rng: &mut R, users: usize, p_max: f64) -> PowerVector {
    let v = (0..users).map(|_| p_max * (1.0 - rng.random::<f64>())).collect();
    PowerVector::new(v).expect("strictly positive by construction")
}
