use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use msp_power::cache::{read_sample_cache, write_sample_cache};
use msp_power::config::{load_experiment, parse_norm, Bound, ExperimentConfig};
use msp_power::experiment::{
    compare_bounds, rate_scale, solve_bound, solver_config, write_outputs, write_single_run,
    ExperimentError,
};
use msp_power::msp::{random_probes, verify_msp_properties_with, MspCheckOptions, PositivityFloor};
use msp_power::rates::{
    build_oer_mapping, build_uatf_mapping, moment_statistics, oer_rates, uatf_rates, UserWeights,
};
use msp_power::reduce::with_workers;
use msp_power::sim::simulate;
use msp_power::{MonotoneNorm, SampleSet};

#[derive(Parser, Debug)]
#[command(name = "msp-power", version, about = "Max-min power control under ergodic-rate bounds")]
struct Cli {
    /// Worker threads for sample generation and rate evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a sample set and write it to a cache file.
    Simulate(Common),
    /// Solve the max-min problem for one bound.
    Solve(Common),
    /// Solve under OER and UatF and cross-evaluate.
    Compare(Common),
    /// Run the MSP property suites on the scenario's mappings.
    Check(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_parser = |s: &str| s.parse::<Bound>())]
    bound: Option<Bound>,
    #[arg(long, value_parser = parse_norm)]
    norm: Option<MonotoneNorm>,
    #[arg(long)]
    pmax: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Report nats without the pre-log factor.
    #[arg(long)]
    raw_rates: bool,
    /// Sample cache: written by `simulate`, read by the other verbs when present.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(path) => load_experiment(path)?,
            None => ExperimentConfig::default(),
        };
        let sc = &mut cfg.scenario;
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        if let Some(s) = self.samples {
            sc.sample_count = s;
        }
        if let Some(p) = self.pmax {
            sc.p_max = p;
        }
        let solver = &mut cfg.solver;
        if let Some(b) = self.bound {
            solver.bound = b;
        }
        if let Some(n) = &self.norm {
            solver.norm = n.clone();
        }
        if let Some(t) = self.tol {
            solver.tolerance = t;
        }
        if let Some(m) = self.max_iters {
            solver.max_iterations = m;
        }
        if self.raw_rates {
            cfg.output.raw_rates = true;
        }
        if let Some(d) = &self.out_dir {
            cfg.output.out_dir = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        cfg.output.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

fn samples_for(common: &Common, cfg: &ExperimentConfig) -> Result<SampleSet, ExperimentError> {
    match &common.cache {
        Some(path) if path.exists() => {
            log::info!("reading samples from {}", path.display());
            Ok(read_sample_cache(path)?)
        }
        _ => Ok(simulate(&cfg.scenario)?.samples),
    }
}

fn weights(cfg: &ExperimentConfig, users: usize) -> Result<UserWeights, ExperimentError> {
    Ok(match &cfg.solver.weights {
        Some(w) => UserWeights::new(w.clone())?,
        None => UserWeights::uniform(users),
    })
}

fn run_simulate(common: &Common) -> Result<(), ExperimentError> {
    let cfg = common.experiment()?;
    let set = simulate(&cfg.scenario)?.samples;
    let path = common
        .cache
        .clone()
        .unwrap_or_else(|| common.out_dir(&cfg).join("samples.pcss"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| ExperimentError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    write_sample_cache(&set, &path)?;
    println!(
        "wrote {} samples ({} users, {} antennas) to {}",
        set.sample_count(),
        set.users(),
        set.antennas(),
        path.display()
    );
    Ok(())
}

fn run_solve(common: &Common) -> Result<(), ExperimentError> {
    let cfg = common.experiment()?;
    let set = samples_for(common, &cfg)?;
    let w = weights(&cfg, set.users())?;
    let run = solve_bound(&set, cfg.solver.bound, &w, &solver_config(&cfg.solver, cfg.scenario.p_max))?;
    let dir = common.out_dir(&cfg);
    write_single_run(&run, &w, rate_scale(&cfg), &dir)?;
    println!(
        "{} max-min objective {:.6} ({}), {} iterations, converged={}",
        cfg.solver.bound,
        run.final_objective() * rate_scale(&cfg),
        units(&cfg),
        run.result.iterations(),
        run.result.converged
    );
    Ok(())
}

fn units(cfg: &ExperimentConfig) -> &'static str {
    if cfg.output.raw_rates {
        "nats"
    } else {
        "bits/symbol"
    }
}

fn run_compare(common: &Common) -> Result<(), ExperimentError> {
    let cfg = common.experiment()?;
    let set = samples_for(common, &cfg)?;
    let out = compare_bounds(&set, &cfg.solver, cfg.scenario.p_max, rate_scale(&cfg))?;
    let dir = common.out_dir(&cfg);
    write_outputs(&out, &dir)?;
    let scale = out.rate_scale;
    println!(
        "OER solution: min OER {:.6} {}, {} iterations, converged={}",
        out.oer_objective() * scale,
        units(&cfg),
        out.oer.result.iterations(),
        out.oer.result.converged
    );
    match out.uatf_solution_oer_objective() {
        Some(v) => println!("UatF solution: min OER {:.6} {}", v * scale, units(&cfg)),
        None => println!("UatF baseline degenerate (zero mean effective channel); skipped"),
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

/// Returns whether every suite passed.
fn run_check(common: &Common) -> Result<bool, ExperimentError> {
    let cfg = common.experiment()?;
    let set = samples_for(common, &cfg)?;
    let w = weights(&cfg, set.users())?;
    let n = set.users();
    let p_max = cfg.scenario.p_max;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.scenario.seed);
    let probes = random_probes(&mut rng, n, 100, p_max * 1e-4, p_max);
    let stats = moment_statistics(&set);
    let floor: Vec<f64> = (0..n)
        .map(|u| w.as_slice()[u] * set.noise_power() / stats.second_moment(u, u))
        .collect();
    let options = MspCheckOptions {
        positivity_floor: PositivityFloor::PerCoordinate(floor),
        ..MspCheckOptions::default()
    };
    let mut all = true;
    let mut report = |name: &str, r: &msp_power::msp::PropertyReport| {
        for (axiom, o) in [
            ("monotonicity", &r.monotonicity),
            ("scalability", &r.scalability),
            ("positivity", &r.positivity),
        ] {
            println!(
                "{} {name} {axiom}: {}/{} failures",
                if o.passed { "PASS" } else { "FAIL" },
                o.failures,
                o.checks
            );
            all &= o.passed;
        }
    };
    let oer = build_oer_mapping(&set, w.clone())?;
    report("oer", &verify_msp_properties_with(&oer, &probes, &options)?);
    match build_uatf_mapping(&stats, w.clone(), set.noise_power()) {
        Ok(m) => {
            let r = verify_msp_properties_with(&m, &probes, &options)?;
            report("uatf", &r);
        }
        Err(e) => println!("SKIP uatf: {e}"),
    }
    let mut violations = 0;
    for probe in &probes {
        let o = oer_rates(&set, &probe.lower)?;
        let u = uatf_rates(&stats, &probe.lower, set.noise_power())?;
        violations += o.iter().zip(&u).filter(|(o, u)| *u > *o).count();
    }
    println!(
        "{} bound ordering uatf <= oer: {violations} violations",
        if violations == 0 { "PASS" } else { "FAIL" }
    );
    Ok(all && violations == 0)
}

fn exit_with(err: &ExperimentError) -> ExitCode {
    eprintln!("error: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = cli.command;
    let result = with_workers(cli.workers, move || match &command {
        Command::Simulate(c) => run_simulate(c).map(|_| true),
        Command::Solve(c) => run_solve(c).map(|_| true),
        Command::Compare(c) => run_compare(c).map(|_| true),
        Command::Check(c) => run_check(c),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => exit_with(&e),
    }
}
