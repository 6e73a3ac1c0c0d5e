//! Ergodic-rate utilities over Monte Carlo sample sets.
//!
//! A [`SampleSet`] holds `S` paired realizations of aggregated channels
//! `h_u ∈ C^K` and unit-norm beamformers `v_u ∈ C^K` for `N` users. All
//! expectations are empirical means over those samples, reduced with the
//! fixed pairwise tree in [`crate::reduce`].
//!
//! Rates are in nats. The max-min mapping for user `u` is
//! `α_u p_u / r_u(p)`, with `r_u` either the optimistic ergodic rate
//! `E[ln(1 + s_u(p))]` or the use-and-then-forget bound computed from
//! sample moments.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::msp::{InterferenceMapping, MspError, PowerVector};
use crate::reduce::{mean, mean_complex};

/// Beamformer norms must equal one within this tolerance.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RateError {
    #[error("sample set must contain at least one sample, one user and one antenna")]
    Empty,
    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("user index {index} out of range for {users} users")]
    IndexOutOfRange { index: usize, users: usize },
    #[error("noise power must be positive and finite, got {0}")]
    InvalidNoise(f64),
    #[error("non-finite entry in sample {sample}, user {user}")]
    NonFinite { sample: usize, user: usize },
    #[error("beamformer of user {user} in sample {sample} has norm {norm}, expected 1")]
    BeamformerNorm { sample: usize, user: usize, norm: f64 },
    #[error("user {user} has zero effective channel |h^H v| in every sample and cannot be served")]
    DegenerateUser { user: usize },
    #[error("user {user} has zero mean effective channel; the UatF bound is trivially zero")]
    DegenerateUatf { user: usize },
    #[error("weights must be positive and finite")]
    InvalidWeights,
    #[error("power vector must be strictly positive and finite")]
    InvalidPower,
    #[error("phase factors must have unit modulus")]
    InvalidPhase,
}

impl From<RateError> for MspError {
    fn from(e: RateError) -> Self {
        MspError::Evaluation(Box::new(e))
    }
}

/// `S` paired channel/beamformer realizations for `N` users on `K` antennas.
///
/// Storage is sample-major, user-major, antenna-minor. Cross gains
/// `|h_k^H v_u|²` are precomputed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: usize,
    users: usize,
    antennas: usize,
    noise_power: f64,
    channels: Vec<Complex64>,
    beamformers: Vec<Complex64>,
    /// `[s][u][k] = |h_k^H v_u|²`: power received through `v_u` from user `k`.
    gains: Vec<f64>,
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // a^H b
    a.iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

impl SampleSet {
    /// Validates and assembles a sample set. The sample count is inferred
    /// from the buffer lengths.
    pub fn new(
        users: usize,
        antennas: usize,
        noise_power: f64,
        channels: Vec<Complex64>,
        beamformers: Vec<Complex64>,
    ) -> Result<Self, RateError> {
        if users == 0 || antennas == 0 || channels.is_empty() {
            return Err(RateError::Empty);
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(RateError::InvalidNoise(noise_power));
        }
        let block = users * antennas;
        if !channels.len().is_multiple_of(block) {
            return Err(RateError::DimensionMismatch {
                what: "channels",
                expected: block * (channels.len() / block + 1),
                actual: channels.len(),
            });
        }
        if beamformers.len() != channels.len() {
            return Err(RateError::DimensionMismatch {
                what: "beamformers",
                expected: channels.len(),
                actual: beamformers.len(),
            });
        }
        let samples = channels.len() / block;

        for s in 0..samples {
            for u in 0..users {
                let range = (s * users + u) * antennas..(s * users + u + 1) * antennas;
                let h = &channels[range.clone()];
                let v = &beamformers[range];
                if h.iter().chain(v).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(RateError::NonFinite { sample: s, user: u });
                }
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    return Err(RateError::BeamformerNorm {
                        sample: s,
                        user: u,
                        norm,
                    });
                }
            }
        }

        let gains: Vec<f64> = (0..samples)
            .into_par_iter()
            .map(|s| {
                let mut g = Vec::with_capacity(users * users);
                let base = s * block;
                for u in 0..users {
                    let v = &beamformers[base + u * antennas..base + (u + 1) * antennas];
                    for k in 0..users {
                        let h = &channels[base + k * antennas..base + (k + 1) * antennas];
                        g.push(inner(h, v).norm_sqr());
                    }
                }
                g
            })
            .collect::<Vec<_>>()
            .concat();

        let set = Self {
            samples,
            users,
            antennas,
            noise_power,
            channels,
            beamformers,
            gains,
        };
        for u in 0..users {
            if (0..samples).all(|s| set.gain(s, u, u) == 0.0) {
                return Err(RateError::DegenerateUser { user: u });
            }
        }
        Ok(set)
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn channels(&self) -> &[Complex64] {
        &self.channels
    }

    pub fn beamformers(&self) -> &[Complex64] {
        &self.beamformers
    }

    fn offset(&self, s: usize, u: usize) -> usize {
        (s * self.users + u) * self.antennas
    }

    pub fn channel(&self, s: usize, u: usize) -> &[Complex64] {
        let o = self.offset(s, u);
        &self.channels[o..o + self.antennas]
    }

    pub fn beamformer(&self, s: usize, u: usize) -> &[Complex64] {
        let o = self.offset(s, u);
        &self.beamformers[o..o + self.antennas]
    }

    /// `|h_k^H v_u|²` in sample `s`.
    pub fn gain(&self, s: usize, u: usize, k: usize) -> f64 {
        self.gains[(s * self.users + u) * self.users + k]
    }

    pub fn sample(&self, s: usize) -> SampleView<'_> {
        SampleView { set: self, index: s }
    }

    /// Multiplies every beamformer `v_u` of sample `s` by `phases[s·N + u]`.
    pub fn with_beamformer_phases(&self, phases: &[Complex64]) -> Result<SampleSet, RateError> {
        if phases.len() != self.samples * self.users {
            return Err(RateError::DimensionMismatch {
                what: "phases",
                expected: self.samples * self.users,
                actual: phases.len(),
            });
        }
        if phases.iter().any(|z| (z.norm() - 1.0).abs() > 1e-15) {
            return Err(RateError::InvalidPhase);
        }
        let beamformers = self
            .beamformers
            .chunks(self.antennas)
            .zip(phases)
            .flat_map(|(v, c)| v.iter().map(move |x| x * c))
            .collect();
        SampleSet::new(
            self.users,
            self.antennas,
            self.noise_power,
            self.channels.clone(),
            beamformers,
        )
    }

    fn check_power(&self, p: &[f64]) -> Result<(), RateError> {
        if p.len() != self.users {
            return Err(RateError::DimensionMismatch {
                what: "power vector",
                expected: self.users,
                actual: p.len(),
            });
        }
        if p.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(RateError::InvalidPower);
        }
        Ok(())
    }

    fn check_user(&self, u: usize) -> Result<(), RateError> {
        if u >= self.users {
            return Err(RateError::IndexOutOfRange {
                index: u,
                users: self.users,
            });
        }
        Ok(())
    }
}

/// One realization inside a [`SampleSet`].
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    set: &'a SampleSet,
    index: usize,
}

impl<'a> SampleView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn users(&self) -> usize {
        self.set.users
    }

    pub fn channel(&self, u: usize) -> &'a [Complex64] {
        self.set.channel(self.index, u)
    }

    pub fn beamformer(&self, u: usize) -> &'a [Complex64] {
        self.set.beamformer(self.index, u)
    }

    /// `|h_k^H v_u|²`.
    pub fn gain(&self, u: usize, k: usize) -> f64 {
        self.set.gain(self.index, u, k)
    }

    fn interference(&self, p: &[f64], u: usize) -> f64 {
        (0..self.set.users)
            .filter(|&k| k != u)
            .map(|k| p[k] * self.gain(u, k))
            .sum()
    }
}

/// Instantaneous SINR `p_u|h_u^H v_u|² / (Σ_{k≠u} p_k|h_k^H v_u|² + σ²)`.
pub fn instantaneous_sinr(
    sample: &SampleView<'_>,
    p: &[f64],
    u: usize,
    noise_power: f64,
) -> Result<f64, RateError> {
    sample.set.check_user(u)?;
    sample.set.check_power(p)?;
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return Err(RateError::InvalidNoise(noise_power));
    }
    Ok(sinr_unchecked(sample, p, u, noise_power))
}

fn sinr_unchecked(sample: &SampleView<'_>, p: &[f64], u: usize, noise_power: f64) -> f64 {
    p[u] * sample.gain(u, u) / (sample.interference(p, u) + noise_power)
}

/// Per-sample utility whose empirical mean defines `r_u(p)`.
///
/// [`OptimisticRate`] is `ln(1 + s_u)`. Other bounds that keep the
/// per-sample MSP structure (e.g. with an error-covariance term in the
/// denominator) plug in here.
pub trait SampleUtility: Sync {
    fn term(&self, sample: &SampleView<'_>, p: &[f64], u: usize, noise_power: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OptimisticRate;

impl SampleUtility for OptimisticRate {
    fn term(&self, sample: &SampleView<'_>, p: &[f64], u: usize, noise_power: f64) -> f64 {
        sinr_unchecked(sample, p, u, noise_power).ln_1p()
    }
}

/// Empirical means `E[utility]` for every user.
pub fn expected_utilities<U: SampleUtility + ?Sized>(
    set: &SampleSet,
    utility: &U,
    p: &[f64],
) -> Result<Vec<f64>, RateError> {
    set.check_power(p)?;
    let n = set.users;
    let terms: Vec<f64> = (0..set.samples)
        .into_par_iter()
        .map(|s| {
            let view = set.sample(s);
            (0..n)
                .map(|u| utility.term(&view, p, u, set.noise_power))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat();
    Ok((0..n)
        .map(|u| {
            let column: Vec<f64> = terms.iter().skip(u).step_by(n).copied().collect();
            mean(&column)
        })
        .collect())
}

/// Optimistic ergodic rate `E[ln(1 + s_u(p))]` in nats.
pub fn oer_rate(set: &SampleSet, p: &[f64], u: usize) -> Result<f64, RateError> {
    set.check_user(u)?;
    set.check_power(p)?;
    let terms: Vec<f64> = (0..set.samples)
        .into_par_iter()
        .map(|s| OptimisticRate.term(&set.sample(s), p, u, set.noise_power))
        .collect();
    Ok(mean(&terms))
}

pub fn oer_rates(set: &SampleSet, p: &[f64]) -> Result<Vec<f64>, RateError> {
    expected_utilities(set, &OptimisticRate, p)
}

/// `p_u / r_u(p)` for the optimistic ergodic rate.
pub fn oer_msp_value(set: &SampleSet, p: &[f64], u: usize) -> Result<f64, RateError> {
    let rate = oer_rate(set, p, u)?;
    if rate <= 0.0 {
        return Err(RateError::DegenerateUser { user: u });
    }
    Ok(p[u] / rate)
}

/// Per-sample `p_u / ln(1 + s_u(p))` on the closed cone `p ≥ 0`, extended by
/// continuity to `(Σ_{k≠u} p_k|h_k^H v_u|² + σ²)/|h_u^H v_u|²` where
/// `p_u = 0` (so `σ²/|h_u^H v_u|²` at `p = 0`).
///
/// Requires `|h_u^H v_u| > 0` in this sample; returns `+∞` otherwise.
pub fn extended_sample_msp_value(
    sample: &SampleView<'_>,
    p: &[f64],
    u: usize,
    noise_power: f64,
) -> f64 {
    let direct = sample.gain(u, u);
    let interference: f64 = (0..sample.users())
        .filter(|&k| k != u)
        .map(|k| p[k] * sample.gain(u, k))
        .sum();
    let denominator = interference + noise_power;
    if p[u] == 0.0 {
        return denominator / direct;
    }
    p[u] / (p[u] * direct / denominator).ln_1p()
}

/// Positive per-user priorities `α_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserWeights(Vec<f64>);

impl UserWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, RateError> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(RateError::InvalidWeights);
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self, RateError> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }

    fn check(&self, users: usize) -> Result<(), RateError> {
        if self.0.len() != users {
            return Err(RateError::DimensionMismatch {
                what: "weights",
                expected: users,
                actual: self.0.len(),
            });
        }
        Ok(())
    }
}

/// `p ↦ [α_u p_u / E[utility_u(p)]]_u` over a sample set.
#[derive(Debug, Clone)]
pub struct ExpectedUtilityMapping<'a, U> {
    set: &'a SampleSet,
    weights: UserWeights,
    utility: U,
}

impl<'a, U: SampleUtility> ExpectedUtilityMapping<'a, U> {
    pub fn new(set: &'a SampleSet, weights: UserWeights, utility: U) -> Result<Self, RateError> {
        weights.check(set.users)?;
        for u in 0..set.users {
            if (0..set.samples).all(|s| set.gain(s, u, u) == 0.0) {
                return Err(RateError::DegenerateUser { user: u });
            }
        }
        Ok(Self {
            set,
            weights,
            utility,
        })
    }

    pub fn sample_set(&self) -> &'a SampleSet {
        self.set
    }

    pub fn weights(&self) -> &UserWeights {
        &self.weights
    }
}

impl<U: SampleUtility> InterferenceMapping for ExpectedUtilityMapping<'_, U> {
    fn dimension(&self) -> usize {
        self.set.users
    }

    fn evaluate(&self, p: &PowerVector) -> Result<Vec<f64>, MspError> {
        let rates = expected_utilities(self.set, &self.utility, p)?;
        rates
            .iter()
            .enumerate()
            .map(|(u, &r)| {
                if r <= 0.0 {
                    // every per-sample term underflowed at this p
                    Err(RateError::DegenerateUser { user: u }.into())
                } else {
                    Ok(self.weights.0[u] * p[u] / r)
                }
            })
            .collect()
    }
}

pub type OerMapping<'a> = ExpectedUtilityMapping<'a, OptimisticRate>;

pub fn build_oer_mapping(set: &SampleSet, weights: UserWeights) -> Result<OerMapping<'_>, RateError> {
    ExpectedUtilityMapping::new(set, weights, OptimisticRate)
}

/// Sample moments entering the UatF bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    users: usize,
    /// `E[v_u^H h_u]` per user.
    mean_inner: Vec<Complex64>,
    /// `[u][k] = E[|v_u^H h_k|²]`, row-major.
    second_moment: Vec<f64>,
}

impl MomentStats {
    pub fn new(mean_inner: Vec<Complex64>, second_moment: Vec<f64>) -> Result<Self, RateError> {
        let users = mean_inner.len();
        if users == 0 {
            return Err(RateError::Empty);
        }
        if second_moment.len() != users * users {
            return Err(RateError::DimensionMismatch {
                what: "second moments",
                expected: users * users,
                actual: second_moment.len(),
            });
        }
        if second_moment.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(RateError::NonFinite { sample: 0, user: 0 });
        }
        Ok(Self {
            users,
            mean_inner,
            second_moment,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn mean_inner(&self, u: usize) -> Complex64 {
        self.mean_inner[u]
    }

    pub fn second_moment(&self, u: usize, k: usize) -> f64 {
        self.second_moment[u * self.users + k]
    }
}

pub fn moment_statistics(set: &SampleSet) -> MomentStats {
    let n = set.users;
    let inners: Vec<Complex64> = (0..set.samples)
        .into_par_iter()
        .map(|s| {
            (0..n)
                .map(|u| inner(set.beamformer(s, u), set.channel(s, u)))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat();
    let mean_inner = (0..n)
        .map(|u| {
            let column: Vec<Complex64> = inners.iter().skip(u).step_by(n).copied().collect();
            mean_complex(&column)
        })
        .collect();
    let per_sample = n * n;
    let second_moment = (0..per_sample)
        .map(|j| {
            let column: Vec<f64> = set.gains.iter().skip(j).step_by(per_sample).copied().collect();
            mean(&column)
        })
        .collect();
    MomentStats {
        users: n,
        mean_inner,
        second_moment,
    }
}

/// Use-and-then-forget rate in nats:
/// `ln(1 + p_u|E[v_u^H h_u]|² / (Σ_k p_k E[|v_u^H h_k|²] − p_u|E[v_u^H h_u]|² + σ²))`.
pub fn uatf_rate(stats: &MomentStats, p: &[f64], u: usize, noise_power: f64) -> Result<f64, RateError> {
    if u >= stats.users {
        return Err(RateError::IndexOutOfRange {
            index: u,
            users: stats.users,
        });
    }
    if p.len() != stats.users {
        return Err(RateError::DimensionMismatch {
            what: "power vector",
            expected: stats.users,
            actual: p.len(),
        });
    }
    Ok(uatf_unchecked(stats, p, u, noise_power))
}

fn uatf_unchecked(stats: &MomentStats, p: &[f64], u: usize, noise_power: f64) -> f64 {
    let coherent = stats.mean_inner[u].norm_sqr();
    // Jensen gives E|x|² ≥ |E x|² exactly; clamp the rounding residue.
    let self_variance = (stats.second_moment(u, u) - coherent).max(0.0);
    let others: f64 = (0..stats.users)
        .filter(|&k| k != u)
        .map(|k| p[k] * stats.second_moment(u, k))
        .sum();
    let denominator = p[u] * self_variance + others + noise_power;
    (p[u] * coherent / denominator).ln_1p()
}

pub fn uatf_rates(stats: &MomentStats, p: &[f64], noise_power: f64) -> Result<Vec<f64>, RateError> {
    (0..stats.users)
        .map(|u| uatf_rate(stats, p, u, noise_power))
        .collect()
}

/// `p ↦ [α_u p_u / r^UatF_u(p)]_u`.
#[derive(Debug, Clone)]
pub struct UatfMapping {
    stats: MomentStats,
    weights: UserWeights,
    noise_power: f64,
}

impl UatfMapping {
    pub fn stats(&self) -> &MomentStats {
        &self.stats
    }
}

impl InterferenceMapping for UatfMapping {
    fn dimension(&self) -> usize {
        self.stats.users
    }

    fn evaluate(&self, p: &PowerVector) -> Result<Vec<f64>, MspError> {
        (0..self.stats.users)
            .map(|u| {
                let r = uatf_unchecked(&self.stats, p, u, self.noise_power);
                if r <= 0.0 {
                    Err(RateError::DegenerateUatf { user: u }.into())
                } else {
                    Ok(self.weights.0[u] * p[u] / r)
                }
            })
            .collect()
    }
}

pub fn build_uatf_mapping(
    stats: &MomentStats,
    weights: UserWeights,
    noise_power: f64,
) -> Result<UatfMapping, RateError> {
    weights.check(stats.users)?;
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return Err(RateError::InvalidNoise(noise_power));
    }
    if let Some(user) = (0..stats.users).find(|&u| stats.mean_inner[u].norm_sqr() == 0.0) {
        return Err(RateError::DegenerateUatf { user });
    }
    Ok(UatfMapping {
        stats: stats.clone(),
        weights,
        noise_power,
    })
}

/// `min_u r_u(p) / α_u` with the optimistic ergodic rate.
pub fn min_weighted_rate(set: &SampleSet, p: &[f64], weights: &UserWeights) -> Result<f64, RateError> {
    weights.check(set.users)?;
    Ok(oer_rates(set, p)?
        .iter()
        .zip(&weights.0)
        .fold(f64::INFINITY, |m, (r, a)| m.min(r / a)))
}
