//! Scenario documents.
//!
//! Line-oriented `key = value` entries under `[network]`, `[channel]`,
//! `[solver]` and `[output]` headers; `#` starts a comment. Missing keys keep
//! their defaults, unknown keys are rejected and a repeated key overrides the
//! earlier value with a warning.
//!
//! ```text
//! [network]
//! num_aps = 4
//! num_users = 6     # N
//! p_max = 200
//!
//! [channel]
//! beamformer = mmse
//!
//! [solver]
//! norm = linf
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::msp::{MonotoneNorm, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::sim::{ApPlacement, BeamformerStrategy, ClusterRule, KappaModel, ScenarioConfig, SimError, SpatialCorrelation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

/// Which bound the solver targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Oer,
    Uatf,
}

impl std::str::FromStr for Bound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oer" => Ok(Self::Oer),
            "uatf" => Ok(Self::Uatf),
            other => Err(format!("unknown bound '{other}' (expected oer or uatf)")),
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Oer => "oer",
            Self::Uatf => "uatf",
        })
    }
}

/// Norm names accepted in documents and on the command line.
pub fn parse_norm(s: &str) -> Result<MonotoneNorm, String> {
    match s.to_ascii_lowercase().as_str() {
        "l1" => Ok(MonotoneNorm::L1),
        "l2" => Ok(MonotoneNorm::L2),
        "linf" | "inf" | "max" => Ok(MonotoneNorm::LInf),
        other => Err(format!("unknown norm '{other}' (expected l1, l2 or linf)")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub norm: MonotoneNorm,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Per-user priorities; `None` means all ones.
    pub weights: Option<Vec<f64>>,
    pub bound: Bound,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            norm: MonotoneNorm::LInf,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            weights: None,
            bound: Bound::Oer,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSettings {
    /// Report nats without the pre-log factor.
    pub raw_rates: bool,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverSettings,
    pub output: OutputSettings,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.solver_checks().map_err(ConfigError::Invalid)
    }

    fn solver_checks(&self) -> Result<(), String> {
        let s = &self.solver;
        if !(s.tolerance.is_finite() && s.tolerance > 0.0) {
            return Err(format!("tolerance must be positive, got {}", s.tolerance));
        }
        if s.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if let Some(w) = &s.weights {
            if w.len() != self.scenario.num_users {
                return Err(format!(
                    "weights has {} entries but there are {} users",
                    w.len(),
                    self.scenario.num_users
                ));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err("weights must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Section {
    Network,
    Channel,
    Solver,
    Output,
}

const KEYS: &[(Section, &str)] = &[
    (Section::Network, "area_side"),
    (Section::Network, "num_aps"),
    (Section::Network, "antennas_per_ap"),
    (Section::Network, "num_users"),
    (Section::Network, "p_max"),
    (Section::Network, "tau_c"),
    (Section::Network, "tau_p"),
    (Section::Network, "height_difference"),
    (Section::Network, "ap_placement"),
    (Section::Network, "cluster_rule"),
    (Section::Network, "samples"),
    (Section::Network, "seed"),
    (Section::Channel, "bandwidth"),
    (Section::Channel, "carrier_freq"),
    (Section::Channel, "shadow_std_db"),
    (Section::Channel, "antenna_spacing"),
    (Section::Channel, "noise_figure_db"),
    (Section::Channel, "pilot_power_mw"),
    (Section::Channel, "rician_kappa_model"),
    (Section::Channel, "kappa_intercept_db"),
    (Section::Channel, "kappa_slope_db_per_m"),
    (Section::Channel, "kappa_floor_db"),
    (Section::Channel, "kappa_db"),
    (Section::Channel, "angular_spread_deg"),
    (Section::Channel, "beamformer"),
    (Section::Channel, "antithetic"),
    (Section::Channel, "spatial_correlation"),
    (Section::Solver, "bound"),
    (Section::Solver, "norm"),
    (Section::Solver, "tolerance"),
    (Section::Solver, "max_iterations"),
    (Section::Solver, "weights"),
    (Section::Output, "raw_rates"),
    (Section::Output, "out_dir"),
];

fn unquote(v: &str) -> &str {
    let v = v.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

fn number(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .map_err(|_| at(line, format!("{key}: expected a number, got '{v}'")))
}

fn count(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse::<usize>()
        .map_err(|_| at(line, format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(at(line, format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| number(line, key, s))
        .collect()
}

fn choice<T: Copy>(line: usize, key: &str, v: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
    let lower = v.to_ascii_lowercase();
    options
        .iter()
        .find(|(name, _)| *name == lower)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            at(line, format!("{key}: expected one of {}, got '{v}'", names.join(", ")))
        })
}

#[derive(Clone, Copy)]
enum KappaKind {
    Distance,
    Fixed,
    Rayleigh,
    Los,
}

/// Parses a document, starting from the defaults.
pub fn parse_experiment(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut section: Option<Section> = None;
    let mut seen: HashMap<(Section, &'static str), usize> = HashMap::new();
    let (mut kappa_kind, mut kappa_fixed) = (None, None);
    let (mut intercept, mut slope, mut floor) = (13.0, 0.03, -10.0);

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if !content.ends_with(']') {
                return Err(at(line, format!("malformed section header '{content}'")));
            }
            section = Some(match content[1..content.len() - 1].trim() {
                "network" => Section::Network,
                "channel" => Section::Channel,
                "solver" => Section::Solver,
                "output" => Section::Output,
                other => return Err(at(line, format!("unknown section [{other}]"))),
            });
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(at(line, format!("expected 'key = value', got '{content}'")));
        };
        let (key, value) = (key.trim(), unquote(value));
        let Some(sec) = section else {
            return Err(at(line, format!("'{key}' appears before any section header")));
        };
        let Some(&(_, key)) = KEYS.iter().find(|(s, k)| *s == sec && *k == key) else {
            return Err(at(line, format!("unknown key '{key}' in this section")));
        };
        if let Some(prev) = seen.insert((sec, key), line) {
            log::warn!("line {line}: '{key}' overrides the value set on line {prev}");
        }
        if value.is_empty() {
            return Err(at(line, format!("{key}: missing value")));
        }

        let sc = &mut cfg.scenario;
        match key {
            "area_side" => sc.area_side = number(line, key, value)?,
            "num_aps" => sc.num_aps = count(line, key, value)?,
            "antennas_per_ap" => sc.antennas_per_ap = count(line, key, value)?,
            "num_users" => sc.num_users = count(line, key, value)?,
            "p_max" => sc.p_max = number(line, key, value)?,
            "tau_c" => sc.tau_c = count(line, key, value)?,
            "tau_p" => sc.tau_p = count(line, key, value)?,
            "height_difference" => sc.height_difference = number(line, key, value)?,
            "ap_placement" => {
                sc.ap_placement = choice(line, key, value, &[("grid", ApPlacement::Grid), ("random", ApPlacement::Random)])?
            }
            "cluster_rule" => {
                sc.cluster_rule = choice(
                    line,
                    key,
                    value,
                    &[("pilot_aware", ClusterRule::PilotAware), ("all", ClusterRule::AllAps)],
                )?
            }
            "samples" => sc.sample_count = count(line, key, value)?,
            "seed" => {
                sc.seed = value
                    .parse()
                    .map_err(|_| at(line, format!("seed: expected a nonnegative integer, got '{value}'")))?
            }
            "bandwidth" => sc.bandwidth = number(line, key, value)?,
            "carrier_freq" => sc.carrier_freq = number(line, key, value)?,
            "shadow_std_db" => sc.shadow_std_db = number(line, key, value)?,
            "antenna_spacing" => sc.antenna_spacing = number(line, key, value)?,
            "noise_figure_db" => sc.noise_figure_db = number(line, key, value)?,
            "pilot_power_mw" => sc.pilot_power_mw = Some(number(line, key, value)?),
            "rician_kappa_model" => {
                kappa_kind = Some(choice(
                    line,
                    key,
                    value,
                    &[
                        ("distance", KappaKind::Distance),
                        ("fixed", KappaKind::Fixed),
                        ("rayleigh", KappaKind::Rayleigh),
                        ("los", KappaKind::Los),
                    ],
                )?)
            }
            "kappa_intercept_db" => intercept = number(line, key, value)?,
            "kappa_slope_db_per_m" => slope = number(line, key, value)?,
            "kappa_floor_db" => floor = number(line, key, value)?,
            "kappa_db" => kappa_fixed = Some((line, number(line, key, value)?)),
            "angular_spread_deg" => sc.angular_spread_deg = number(line, key, value)?,
            "beamformer" => {
                sc.beamformer = choice(
                    line,
                    key,
                    value,
                    &[
                        ("mrc", BeamformerStrategy::Mrc),
                        ("mmse", BeamformerStrategy::CentralizedMmse),
                        ("centralized_mmse", BeamformerStrategy::CentralizedMmse),
                        ("statistical", BeamformerStrategy::Statistical),
                    ],
                )?
            }
            "antithetic" => sc.antithetic = boolean(line, key, value)?,
            "spatial_correlation" => {
                sc.correlation = choice(
                    line,
                    key,
                    value,
                    &[
                        ("local_scattering", SpatialCorrelation::LocalScattering),
                        ("uncorrelated", SpatialCorrelation::Uncorrelated),
                    ],
                )?
            }
            "bound" => cfg.solver.bound = value.parse().map_err(|e: String| at(line, e))?,
            "norm" => cfg.solver.norm = parse_norm(value).map_err(|e| at(line, e))?,
            "tolerance" => cfg.solver.tolerance = number(line, key, value)?,
            "max_iterations" => cfg.solver.max_iterations = count(line, key, value)?,
            "weights" => cfg.solver.weights = Some(list(line, key, value)?),
            "raw_rates" => cfg.output.raw_rates = boolean(line, key, value)?,
            "out_dir" => cfg.output.out_dir = Some(PathBuf::from(value)),
            _ => unreachable!("key table and match arms disagree"),
        }
    }

    cfg.scenario.kappa = match (kappa_kind, kappa_fixed) {
        (Some(KappaKind::Fixed), None) => {
            return Err(ConfigError::Invalid("rician_kappa_model = fixed needs kappa_db".into()))
        }
        (Some(KappaKind::Fixed), Some((_, db))) | (None, Some((_, db))) => KappaModel::FixedDb(db),
        (Some(_), Some((line, _))) => {
            return Err(at(line, "kappa_db only applies to rician_kappa_model = fixed"))
        }
        (Some(KappaKind::Rayleigh), None) => KappaModel::Rayleigh,
        (Some(KappaKind::Los), None) => KappaModel::PureLos,
        (Some(KappaKind::Distance), None) | (None, None) => KappaModel::DistanceDb {
            intercept_db: intercept,
            slope_db_per_m: slope,
            floor_db: floor,
        },
    };

    let line_of = |name: &str| {
        seen.iter()
            .find(|((_, k), _)| *k == name)
            .map(|(_, l)| *l)
    };
    if let Err(e) = cfg.scenario.validate() {
        let key = match &e {
            SimError::NonSquareGrid(_) => "num_aps",
            SimError::Config(msg) if msg.starts_with("antithetic") => "samples",
            SimError::Config(msg) => msg.split_whitespace().next().unwrap_or(""),
            _ => "",
        };
        return Err(match line_of(key) {
            Some(line) => at(line, e.to_string()),
            None => ConfigError::Invalid(e.to_string()),
        });
    }
    if let Err(msg) = cfg.solver_checks() {
        let key = msg.split_whitespace().next().unwrap_or("");
        return Err(match line_of(key) {
            Some(line) => at(line, msg),
            None => ConfigError::Invalid(msg),
        });
    }
    Ok(cfg)
}

/// Scenario part of [`parse_experiment`].
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    parse_experiment(text).map(|c| c.scenario)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_experiment(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_experiment("").unwrap();
        assert_eq!(c.scenario, ScenarioConfig::default());
        let s = &c.scenario;
        assert_eq!((s.num_aps, s.antennas_per_ap, s.num_users), (16, 4, 25));
        assert_eq!((s.p_max, s.tau_c, s.tau_p), (200.0, 200, 10));
        assert_eq!((s.height_difference, s.shadow_std_db), (11.0, 8.0));
        assert_eq!((s.carrier_freq, s.bandwidth), (3.7e9, 20e6));
        assert_eq!(c.solver, SolverSettings::default());
        assert_eq!(c.output, OutputSettings::default());
        assert_eq!(parse_scenario("# nothing\n\n").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn full_document() {
        let text = r#"
            [network]
            num_aps = 4        # grid 2x2
            antennas_per_ap = 2
            num_users = 3
            samples = 40
            seed = 7
            ap_placement = grid
            [channel]
            beamformer = "mrc"
            rician_kappa_model = rayleigh
            pilot_power_mw = 50
            antithetic = true
            spatial_correlation = uncorrelated
            [solver]
            norm = l2
            tolerance = 1e-9
            max_iterations = 300
            weights = [1, 2, 0.5]
            bound = uatf
            [output]
            raw_rates = true
            out_dir = results/run1
        "#;
        let c = parse_experiment(text).unwrap();
        assert_eq!(c.scenario.num_aps, 4);
        assert_eq!(c.scenario.sample_count, 40);
        assert_eq!(c.scenario.seed, 7);
        assert_eq!(c.scenario.beamformer, BeamformerStrategy::Mrc);
        assert_eq!(c.scenario.kappa, KappaModel::Rayleigh);
        assert_eq!(c.scenario.pilot_power(), 50.0);
        assert!(c.scenario.antithetic);
        assert_eq!(c.scenario.correlation, SpatialCorrelation::Uncorrelated);
        assert_eq!(c.solver.norm, MonotoneNorm::L2);
        assert_eq!(c.solver.tolerance, 1e-9);
        assert_eq!(c.solver.max_iterations, 300);
        assert_eq!(c.solver.weights, Some(vec![1.0, 2.0, 0.5]));
        assert_eq!(c.solver.bound, Bound::Uatf);
        assert!(c.output.raw_rates);
        assert_eq!(c.output.out_dir, Some(PathBuf::from("results/run1")));
    }

    #[test]
    fn invariant_violation_reports_line() {
        let err = parse_experiment("[network]\n\ntau_p = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
        let err = parse_experiment("[network]\nnum_aps = 5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
        let err = parse_experiment("[network]\nnum_users = 2\n[solver]\nweights = 1, 2, 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn last_value_wins() {
        let c = parse_experiment("[network]\np_max = 200\np_max = 100\n").unwrap();
        assert_eq!(c.scenario.p_max, 100.0);
    }

    #[test]
    fn rejects_bad_input() {
        for (text, line) in [
            ("[network]\nnum_user = 3\n", 2),
            ("[channel]\nnum_users = 3\n", 2),
            ("[network]\nnum_users\n", 2),
            ("num_users = 3\n", 1),
            ("[netwrk]\n", 1),
            ("[network\n", 1),
            ("[network]\nnum_users = three\n", 2),
            ("[channel]\nbeamformer = zf\n", 2),
            ("[solver]\nnorm = l3\n", 2),
            ("[output]\nraw_rates = maybe\n", 2),
        ] {
            match parse_experiment(text) {
                Err(ConfigError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn kappa_variants() {
        let c = parse_experiment("[channel]\nkappa_db = 3\n").unwrap();
        assert_eq!(c.scenario.kappa, KappaModel::FixedDb(3.0));
        let c = parse_experiment("[channel]\nrician_kappa_model = los\n").unwrap();
        assert_eq!(c.scenario.kappa, KappaModel::PureLos);
        let c = parse_experiment("[channel]\nkappa_floor_db = -20\n").unwrap();
        assert!(matches!(c.scenario.kappa, KappaModel::DistanceDb { floor_db, .. } if floor_db == -20.0));
        assert!(parse_experiment("[channel]\nrician_kappa_model = fixed\n").is_err());
        assert!(parse_experiment("[channel]\nrician_kappa_model = rayleigh\nkappa_db = 1\n").is_err());
    }
}
