//! Weighted max-min power control under ergodic-rate utilities.
//!
//! The crate is organised in layers:
//!
//! - [`msp`]: monotone norms, the Thompson metric and the normalized
//!   fixed-point solver for conditional eigenvalue problems of monotonic,
//!   scalable and positive (MSP) mappings.
//! - [`rates`]: Monte Carlo sample sets, the optimistic ergodic rate (OER),
//!   the use-and-then-forget (UatF) rate and the mappings `p ↦ α_u p_u / r_u(p)`
//!   fed to the solver.
//! - [`sim`]: a cell-less massive MIMO generator (layout, large-scale fading,
//!   correlated Rician channels, pilots and clusters, MMSE estimation,
//!   beamforming) that produces sample sets.
//! - [`config`], [`cache`] and [`experiment`]: scenario documents, the binary
//!   sample cache and the end-to-end OER vs UatF experiment with CSV output.

pub mod cache;
pub mod config;
pub mod experiment;
pub mod msp;
pub mod rates;
pub mod reduce;
pub mod sim;

pub use msp::{
    conditional_eigenpair, norm_value, thompson_metric, verify_msp_properties, EigenpairResult,
    InterferenceMapping, MonotoneNorm, MspError, PowerVector, SolverConfig,
};
pub use rates::{
    build_oer_mapping, build_uatf_mapping, instantaneous_sinr, min_weighted_rate,
    moment_statistics, oer_msp_value, oer_rate, uatf_rate, MomentStats, RateError, SampleSet,
    UserWeights,
};
pub use sim::{generate_sample_set, simulate, ScenarioConfig, SimError, Simulation};
