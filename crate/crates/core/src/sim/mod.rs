//! Cell-less massive MIMO sample generator.
//!
//! Pipeline, all driven by one seed through counter-based substreams:
//!
//! 1. [`generate_layout`]: APs on a regular grid, users uniform over a
//!    square torus.
//! 2. [`large_scale_realization`]: COST-231 style path loss with log-normal
//!    shadowing over wrap-around distances.
//! 3. [`sample_true_channels`]: spatially correlated Rician small-scale
//!    fading (Gaussian local scattering around the geometric angle).
//! 4. [`assign_pilots_and_clusters`]: master APs, contamination-aware
//!    pilot choice and user-centric clusters.
//! 5. [`mmse_channel_estimates`]: linear MMSE estimation from received pilots.
//! 6. [`build_beamformers`] and [`assemble_sample_set`]: unit-norm
//!    beamformers computed from estimates, paired with the true channels.
//!
//! Every realization `s` draws from its own substream, so samples can be
//! produced in parallel and the result never depends on the worker count.

mod beamforming;
mod channel;
mod estimation;
mod geometry;
mod pilots;

pub use beamforming::{assemble_sample_set, build_beamformers, BeamformerSamples};
pub use channel::{
    nlos_covariance_error, sample_true_channels, spatial_covariance, steering_vector,
    ChannelRealizations, LinkDraw, LinkModel,
};
pub use estimation::{mmse_channel_estimates, mmse_orthogonality_residual};
pub use geometry::{
    generate_layout, large_scale_realization, path_loss_db, toroidal_distance,
    wrapped_displacement, LargeScale, Layout, Point,
};
pub use pilots::{assign_pilots_and_clusters, ClusterAssignment, PilotAssignment};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::rates::{RateError, SampleSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("grid placement needs a perfect-square number of APs, got {0}")]
    NonSquareGrid(usize),
    #[error("beamformer of user {user} in sample {sample} vanishes after cluster masking")]
    DegenerateBeamformer { user: usize, sample: usize },
    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Samples(#[from] RateError),
}

/// Per-link Rician factor model.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaModel {
    /// `κ_dB = intercept − slope·d`, clamped below at `floor_db`.
    DistanceDb {
        intercept_db: f64,
        slope_db_per_m: f64,
        floor_db: f64,
    },
    FixedDb(f64),
    /// `κ = 0`.
    Rayleigh,
    /// `κ = ∞`.
    PureLos,
}

impl Default for KappaModel {
    fn default() -> Self {
        Self::DistanceDb {
            intercept_db: 13.0,
            slope_db_per_m: 0.03,
            floor_db: -10.0,
        }
    }
}

impl KappaModel {
    /// Linear Rician factor at 3-D distance `d` (m).
    pub fn kappa(&self, d: f64) -> f64 {
        match self {
            Self::DistanceDb {
                intercept_db,
                slope_db_per_m,
                floor_db,
            } => 10f64.powf((intercept_db - slope_db_per_m * d).max(*floor_db) / 10.0),
            Self::FixedDb(db) => 10f64.powf(db / 10.0),
            Self::Rayleigh => 0.0,
            Self::PureLos => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamformerStrategy {
    Mrc,
    CentralizedMmse,
    /// Fixed across samples: per serving AP, the dominant eigenvector of the
    /// link covariance weighted by its square-root eigenvalue. Not adaptive
    /// to the channel realization.
    Statistical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialCorrelation {
    /// Gaussian local scattering around the geometric angle.
    LocalScattering,
    /// `R = I`: i.i.d. antennas.
    Uncorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterRule {
    /// Each AP serves, per pilot, its strongest user; masters always serve.
    PilotAware,
    /// Every AP serves every user.
    AllAps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApPlacement {
    Grid,
    Random,
}

/// Scenario parameters. Defaults reproduce the 16-AP, 25-user setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Side of the square area (m).
    pub area_side: f64,
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_users: usize,
    /// Hz.
    pub bandwidth: f64,
    /// Hz.
    pub carrier_freq: f64,
    /// mW.
    pub p_max: f64,
    pub tau_c: usize,
    pub tau_p: usize,
    /// AP-user antenna height difference (m).
    pub height_difference: f64,
    /// Shadow-fading standard deviation (dB).
    pub shadow_std_db: f64,
    /// Antenna spacing in wavelengths.
    pub antenna_spacing: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub noise_figure_db: f64,
    /// mW; `None` means `p_max`.
    pub pilot_power_mw: Option<f64>,
    pub kappa: KappaModel,
    pub angular_spread_deg: f64,
    pub correlation: SpatialCorrelation,
    pub beamformer: BeamformerStrategy,
    pub cluster_rule: ClusterRule,
    pub ap_placement: ApPlacement,
    /// Realization `s + S/2` is the negation of realization `s`. Requires even `S`.
    pub antithetic: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side: 1000.0,
            num_aps: 16,
            antennas_per_ap: 4,
            num_users: 25,
            bandwidth: 20e6,
            carrier_freq: 3.7e9,
            p_max: 200.0,
            tau_c: 200,
            tau_p: 10,
            height_difference: 11.0,
            shadow_std_db: 8.0,
            antenna_spacing: 0.5,
            sample_count: 500,
            seed: 1,
            noise_figure_db: 7.0,
            pilot_power_mw: None,
            kappa: KappaModel::default(),
            angular_spread_deg: 15.0,
            correlation: SpatialCorrelation::LocalScattering,
            beamformer: BeamformerStrategy::CentralizedMmse,
            cluster_rule: ClusterRule::PilotAware,
            ap_placement: ApPlacement::Grid,
            antithetic: false,
        }
    }
}

impl ScenarioConfig {
    /// 4 APs with 2 antennas, 6 users, 100 samples, seed 42.
    pub fn scaled_down() -> Self {
        Self {
            num_aps: 4,
            antennas_per_ap: 2,
            num_users: 6,
            sample_count: 100,
            seed: 42,
            ..Self::default()
        }
    }

    pub fn total_antennas(&self) -> usize {
        self.num_aps * self.antennas_per_ap
    }

    /// Thermal noise `−174 dBm/Hz + 10 log10(B) + NF`, in mW.
    pub fn noise_power_mw(&self) -> f64 {
        let dbm = -174.0 + 10.0 * self.bandwidth.log10() + self.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0) * 1000.0
    }

    pub fn pilot_power(&self) -> f64 {
        self.pilot_power_mw.unwrap_or(self.p_max)
    }

    /// `1 − τ_p/τ_c`.
    pub fn prelog_factor(&self) -> f64 {
        1.0 - self.tau_p as f64 / self.tau_c as f64
    }

    pub fn angular_spread_rad(&self) -> f64 {
        self.angular_spread_deg.to_radians()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("area_side", self.area_side),
            ("bandwidth", self.bandwidth),
            ("carrier_freq", self.carrier_freq),
            ("p_max", self.p_max),
            ("height_difference", self.height_difference),
            ("antenna_spacing", self.antenna_spacing),
            ("pilot_power_mw", self.pilot_power()),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("shadow_std_db", self.shadow_std_db),
            ("angular_spread_deg", self.angular_spread_deg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !self.noise_figure_db.is_finite() {
            return Err(SimError::Config("noise_figure_db must be finite".into()));
        }
        let counts = [
            ("num_aps", self.num_aps),
            ("antennas_per_ap", self.antennas_per_ap),
            ("num_users", self.num_users),
            ("tau_c", self.tau_c),
            ("tau_p", self.tau_p),
            ("samples", self.sample_count),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SimError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.tau_p > self.tau_c {
            return Err(SimError::Config(format!(
                "tau_p ({}) must not exceed tau_c ({})",
                self.tau_p, self.tau_c
            )));
        }
        if self.antithetic && !self.sample_count.is_multiple_of(2) {
            return Err(SimError::Config(
                "antithetic sampling needs an even sample count".into(),
            ));
        }
        if self.ap_placement == ApPlacement::Grid {
            geometry::grid_side(self.num_aps)?;
        }
        Ok(())
    }
}

/// Substream domains; combined with an index into the ChaCha stream id.
pub(crate) mod stream {
    pub const LAYOUT: u64 = 1;
    pub const SHADOWING: u64 = 2;
    pub const CHANNEL: u64 = 3;
    pub const PILOT_NOISE: u64 = 4;
}

pub(crate) fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) | index);
    rng
}

/// Everything produced by one scenario run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub layout: Layout,
    pub large_scale: LargeScale,
    pub pilots: PilotAssignment,
    pub clusters: ClusterAssignment,
    pub channels: ChannelRealizations,
    pub samples: SampleSet,
}

/// Runs the whole pipeline for `config` (seeded by `config.seed`).
pub fn simulate(config: &ScenarioConfig) -> Result<Simulation, SimError> {
    config.validate()?;
    let seed = config.seed;
    let layout = generate_layout(config, seed)?;
    let large_scale = large_scale_realization(&layout, config, seed);
    let (pilots, clusters) = assign_pilots_and_clusters(&large_scale, config);
    let truth = sample_true_channels(&layout, &large_scale, config, seed)?;
    let channels = mmse_channel_estimates(truth, &pilots, &large_scale, config, seed)?;
    let beamformers = build_beamformers(&channels, &clusters, config)?;
    let samples = assemble_sample_set(&channels, &beamformers, config)?;
    Ok(Simulation {
        layout,
        large_scale,
        pilots,
        clusters,
        channels,
        samples,
    })
}

pub fn generate_sample_set(config: &ScenarioConfig) -> Result<SampleSet, SimError> {
    simulate(config).map(|s| s.samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = ScenarioConfig::default();
        assert_eq!((c.num_aps, c.antennas_per_ap, c.num_users), (16, 4, 25));
        assert_eq!((c.tau_c, c.tau_p), (200, 10));
        assert_eq!(c.p_max, 200.0);
        assert_eq!(c.carrier_freq, 3.7e9);
        assert_eq!(c.bandwidth, 20e6);
        assert_eq!(c.height_difference, 11.0);
        assert_eq!(c.shadow_std_db, 8.0);
        assert_eq!(c.antenna_spacing, 0.5);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn thermal_noise() {
        let c = ScenarioConfig::default();
        // 10 log10(20 MHz) = 73.01 dB, so the rounded −94 dBm is 0.01 dB off
        let exact = 10f64.powf((-174.0 + 10.0 * 20e6f64.log10() + 7.0 - 30.0) / 10.0) * 1000.0;
        assert_eq!(c.noise_power_mw(), exact);
        assert!((c.noise_power_mw() / 10f64.powf(-9.4) - 1.0).abs() < 3e-3);
    }

    #[test]
    fn validation_errors() {
        let bad = ScenarioConfig {
            tau_p: 0,
            ..ScenarioConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScenarioConfig {
            tau_p: 300,
            ..ScenarioConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScenarioConfig {
            num_aps: 5,
            ..ScenarioConfig::default()
        };
        assert!(matches!(bad.validate(), Err(SimError::NonSquareGrid(5))));
        let ok = ScenarioConfig {
            num_aps: 5,
            ap_placement: ApPlacement::Random,
            ..ScenarioConfig::default()
        };
        assert!(ok.validate().is_ok());
        let bad = ScenarioConfig {
            antithetic: true,
            sample_count: 3,
            ..ScenarioConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn kappa_models() {
        assert!((KappaModel::default().kappa(0.0) - 10f64.powf(1.3)).abs() < 1e-12);
        assert!((KappaModel::default().kappa(1000.0) - 0.1).abs() < 1e-15);
        assert_eq!(KappaModel::Rayleigh.kappa(5.0), 0.0);
        assert!(KappaModel::PureLos.kappa(5.0).is_infinite());
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = ScenarioConfig {
            sample_count: 12,
            ..ScenarioConfig::scaled_down()
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples.sample_count(), 12);
        assert_eq!(a.samples.users(), 6);
        assert_eq!(a.samples.antennas(), 8);
    }
}
