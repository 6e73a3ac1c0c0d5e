//! MSP mappings and the normalized fixed-point solver.
//!
//! A mapping `T: R^N_{++} → R^N_{++}` is MSP (monotonic, scalable, positive)
//! when every coordinate is monotone, strictly subhomogeneous
//! (`T(αx) < αT(x)` for `α > 1`) and bounded away from zero. For such a
//! mapping and any monotone norm there is exactly one pair `(γ, x)` with
//! `T(x) = γx` and `‖x‖ = p_max`, and the iteration
//!
//! ```text
//! p_{n+1} = (p_max / ‖T(p_n)‖) · T(p_n)
//! ```
//!
//! converges to `x` from any strictly positive start. With
//! `T(p) = [α_u p_u / r_u(p)]_u` the eigenvector is the weighted max-min
//! power allocation and `1/γ` the optimal weighted minimum rate.

use std::error::Error as StdError;
use std::fmt;
use std::ops::Deref;

use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum MspError {
    #[error("power vector must have at least one entry")]
    Empty,
    #[error("entry {index} must be strictly positive and finite (got {value})")]
    NonPositive { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("norm weights must be strictly positive and finite")]
    InvalidWeights,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("mapping returned {value} at coordinate {index}; outputs must be positive and finite")]
    MappingContract { index: usize, value: f64 },
    #[error("mapping evaluation failed: {0}")]
    Evaluation(#[source] Box<dyn StdError + Send + Sync>),
}

/// Strictly positive per-user transmit powers (mW).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MspError> {
        if values.is_empty() {
            return Err(MspError::Empty);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(MspError::NonPositive { index, value });
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self, MspError> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, MspError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    /// Coordinate-wise `self ≤ other`.
    pub fn le(&self, other: &PowerVector) -> bool {
        self.len() == other.len() && self.iter().zip(other.iter()).all(|(a, b)| a <= b)
    }
}

impl Deref for PowerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for PowerVector {
    type Error = MspError;
    fn try_from(values: Vec<f64>) -> Result<Self, MspError> {
        Self::new(values)
    }
}

/// Norms that are monotone on the nonnegative cone.
#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneNorm {
    L1,
    L2,
    LInf,
    /// `max_u w_u |x_u|` with strictly positive weights.
    WeightedLInf(Vec<f64>),
}

impl MonotoneNorm {
    pub fn weighted_linf(weights: Vec<f64>) -> Result<Self, MspError> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(MspError::InvalidWeights);
        }
        Ok(Self::WeightedLInf(weights))
    }

    pub fn value(&self, v: &[f64]) -> Result<f64, MspError> {
        Ok(match self {
            Self::L1 => v.iter().map(|x| x.abs()).sum(),
            Self::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::LInf => v.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
            Self::WeightedLInf(w) => {
                if w.len() != v.len() {
                    return Err(MspError::DimensionMismatch {
                        expected: w.len(),
                        actual: v.len(),
                    });
                }
                w.iter()
                    .zip(v)
                    .fold(0.0, |m: f64, (w, x)| m.max(w * x.abs()))
            }
        })
    }

    fn check_dimension(&self, n: usize) -> Result<(), MspError> {
        match self {
            Self::WeightedLInf(w) if w.len() != n => Err(MspError::DimensionMismatch {
                expected: n,
                actual: w.len(),
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MonotoneNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::L1 => f.write_str("l1"),
            Self::L2 => f.write_str("l2"),
            Self::LInf => f.write_str("linf"),
            Self::WeightedLInf(_) => f.write_str("weighted-linf"),
        }
    }
}

pub fn norm_value(norm: &MonotoneNorm, v: &[f64]) -> Result<f64, MspError> {
    norm.value(v)
}

/// Thompson's metric `max_u |ln p_u − ln q_u|` on the positive cone.
pub fn thompson_metric(p: &[f64], q: &[f64]) -> Result<f64, MspError> {
    if p.len() != q.len() {
        return Err(MspError::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    for v in [p, q] {
        if let Some((index, &value)) = v
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && **x > 0.0))
        {
            return Err(MspError::NonPositive { index, value });
        }
    }
    Ok(p.iter()
        .zip(q)
        .fold(0.0, |m: f64, (a, b)| m.max((a.ln() - b.ln()).abs())))
}

/// A mapping `R^N_{++} → R^N_{++}` declared to be MSP.
///
/// The contract (monotonicity, strict scalability, positivity) cannot be
/// enforced structurally; [`verify_msp_properties`] checks it statistically.
pub trait InterferenceMapping {
    fn dimension(&self) -> usize;
    fn evaluate(&self, p: &PowerVector) -> Result<Vec<f64>, MspError>;
}

impl<T: InterferenceMapping + ?Sized> InterferenceMapping for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn evaluate(&self, p: &PowerVector) -> Result<Vec<f64>, MspError> {
        (**self).evaluate(p)
    }
}

impl<T: InterferenceMapping + ?Sized> InterferenceMapping for Box<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn evaluate(&self, p: &PowerVector) -> Result<Vec<f64>, MspError> {
        (**self).evaluate(p)
    }
}

/// Adapts a closure `&[f64] -> Vec<f64>` into an [`InterferenceMapping`].
pub struct FnMapping<F> {
    dimension: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnMapping<F> {
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> InterferenceMapping for FnMapping<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn evaluate(&self, p: &PowerVector) -> Result<Vec<f64>, MspError> {
        Ok((self.f)(p))
    }
}

fn checked_evaluate<M: InterferenceMapping + ?Sized>(
    mapping: &M,
    p: &PowerVector,
) -> Result<Vec<f64>, MspError> {
    let out = mapping.evaluate(p)?;
    if out.len() != mapping.dimension() {
        return Err(MspError::DimensionMismatch {
            expected: mapping.dimension(),
            actual: out.len(),
        });
    }
    if let Some((index, &value)) = out
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && **x > 0.0))
    {
        return Err(MspError::MappingContract { index, value });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Power budget (mW) in `‖p‖ ≤ p_max`.
    pub p_max: f64,
    pub norm: MonotoneNorm,
    /// Thompson distance between successive iterates at which to stop.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting point; `None` means every entry equals `p_max / N`.
    pub initial_point: Option<PowerVector>,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

impl SolverConfig {
    pub fn new(p_max: f64) -> Self {
        Self {
            p_max,
            norm: MonotoneNorm::LInf,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            initial_point: None,
        }
    }

    pub fn with_norm(mut self, norm: MonotoneNorm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_initial_point(mut self, p: PowerVector) -> Self {
        self.initial_point = Some(p);
        self
    }

    fn start(&self, n: usize) -> Result<PowerVector, MspError> {
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(MspError::InvalidConfig(format!(
                "p_max must be positive, got {}",
                self.p_max
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(MspError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(MspError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if n == 0 {
            return Err(MspError::Empty);
        }
        self.norm.check_dimension(n)?;
        match &self.initial_point {
            Some(p) if p.len() != n => Err(MspError::DimensionMismatch {
                expected: n,
                actual: p.len(),
            }),
            Some(p) => Ok(p.clone()),
            None => PowerVector::uniform(n, self.p_max / n as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based count of applications of the normalized map.
    pub iteration: usize,
    /// Thompson distance between this iterate and the previous one.
    pub step: f64,
    /// `‖T(p)‖` at the previous iterate, i.e. the normalizer that produced `power`.
    pub mapping_norm: f64,
    pub power: PowerVector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, record: IterationRecord) {
        debug_assert!(self
            .records
            .last()
            .is_none_or(|r| r.iteration < record.iteration));
        self.records.push(record);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenpairResult {
    /// Fixed point `p*` of the normalized map, with `‖p*‖ = p_max`.
    pub power: PowerVector,
    /// `‖T(p*)‖ / p_max`, the conditional eigenvalue for the norm `‖·‖/p_max`.
    pub eigenvalue: f64,
    pub trace: IterationTrace,
    pub converged: bool,
}

impl EigenpairResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// One application of `G(p) = (p_max/‖T(p)‖) T(p)`.
pub fn normalized_step<M: InterferenceMapping + ?Sized>(
    mapping: &M,
    norm: &MonotoneNorm,
    p_max: f64,
    p: &PowerVector,
) -> Result<(PowerVector, f64), MspError> {
    let t = checked_evaluate(mapping, p)?;
    let t_norm = norm.value(&t)?;
    let factor = p_max / t_norm;
    let next: Vec<f64> = t.iter().map(|x| x * factor).collect();
    if let Some((index, &value)) = next
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && **x > 0.0))
    {
        return Err(MspError::MappingContract { index, value });
    }
    Ok((PowerVector(next), t_norm))
}

/// Solves the conditional eigenvalue problem of `mapping` for the norm in
/// `config` scaled by `1/p_max`.
///
/// Exhausting `max_iterations` is not an error: the last iterate is returned
/// with `converged = false`.
pub fn conditional_eigenpair<M: InterferenceMapping + ?Sized>(
    mapping: &M,
    config: &SolverConfig,
) -> Result<EigenpairResult, MspError> {
    let mut p = config.start(mapping.dimension())?;
    let mut trace = IterationTrace::default();
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let (next, mapping_norm) = normalized_step(mapping, &config.norm, config.p_max, &p)?;
        let step = thompson_metric(&next, &p)?;
        trace.push(IterationRecord {
            iteration,
            step,
            mapping_norm,
            power: next.clone(),
        });
        p = next;
        if step <= config.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "fixed-point iteration stopped after {} iterations without reaching tolerance {:e}",
            config.max_iterations,
            config.tolerance
        );
    }

    let eigenvalue = config.norm.value(&checked_evaluate(mapping, &p)?)? / config.p_max;
    Ok(EigenpairResult {
        power: p,
        eigenvalue,
        trace,
        converged,
    })
}

/// One randomized probe: a pair `lower ≤ upper` (monotonicity is only
/// checked when this holds) and a scale `> 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MspProbe {
    pub lower: PowerVector,
    pub upper: PowerVector,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PositivityFloor {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

impl PositivityFloor {
    fn at(&self, u: usize) -> f64 {
        match self {
            Self::Uniform(v) => *v,
            Self::PerCoordinate(v) => v[u],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MspCheckOptions {
    /// Relative slack for `T(x) ≤ T(y)`, absorbing rounding in sampled means.
    pub monotonicity_slack: f64,
    /// The positivity axiom passes when every observed output is `≥` this floor
    /// (and strictly positive).
    pub positivity_floor: PositivityFloor,
}

impl Default for MspCheckOptions {
    fn default() -> Self {
        Self {
            monotonicity_slack: 1e-12,
            positivity_floor: PositivityFloor::Uniform(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub probe: usize,
    pub coordinate: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomOutcome {
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    /// First failing probe, if any.
    pub witness: Option<Witness>,
}

impl AxiomOutcome {
    fn new() -> Self {
        Self {
            passed: true,
            checks: 0,
            failures: 0,
            witness: None,
        }
    }

    fn record(&mut self, ok: bool, witness: impl FnOnce() -> Witness) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.passed {
                self.witness = Some(witness());
            }
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub monotonicity: AxiomOutcome,
    pub scalability: AxiomOutcome,
    pub positivity: AxiomOutcome,
    /// Running infimum of each output coordinate over every evaluation.
    pub infimum: Vec<f64>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.monotonicity.passed && self.scalability.passed && self.positivity.passed
    }
}

pub fn verify_msp_properties<M: InterferenceMapping + ?Sized>(
    mapping: &M,
    probes: &[MspProbe],
) -> Result<PropertyReport, MspError> {
    verify_msp_properties_with(mapping, probes, &MspCheckOptions::default())
}

/// Statistical check of the three MSP axioms on the given probes.
pub fn verify_msp_properties_with<M: InterferenceMapping + ?Sized>(
    mapping: &M,
    probes: &[MspProbe],
    options: &MspCheckOptions,
) -> Result<PropertyReport, MspError> {
    let n = mapping.dimension();
    if let PositivityFloor::PerCoordinate(f) = &options.positivity_floor {
        if f.len() != n {
            return Err(MspError::DimensionMismatch {
                expected: n,
                actual: f.len(),
            });
        }
    }
    let mut report = PropertyReport {
        monotonicity: AxiomOutcome::new(),
        scalability: AxiomOutcome::new(),
        positivity: AxiomOutcome::new(),
        infimum: vec![f64::INFINITY; n],
    };

    for (k, probe) in probes.iter().enumerate() {
        for v in [&probe.lower, &probe.upper] {
            if v.len() != n {
                return Err(MspError::DimensionMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        if !(probe.scale.is_finite() && probe.scale > 1.0) {
            return Err(MspError::InvalidConfig(format!(
                "probe {k}: scale must exceed 1, got {}",
                probe.scale
            )));
        }

        let t_lower = mapping.evaluate(&probe.lower)?;
        let t_upper = mapping.evaluate(&probe.upper)?;

        if probe.lower.le(&probe.upper) {
            for u in 0..n {
                let ok = t_lower[u] <= t_upper[u] * (1.0 + options.monotonicity_slack);
                report.monotonicity.record(ok, || Witness {
                    probe: k,
                    coordinate: u,
                    detail: format!("T(x)={} > T(y)={}", t_lower[u], t_upper[u]),
                });
            }
        }

        for (x, tx) in [(&probe.lower, &t_lower), (&probe.upper, &t_upper)] {
            let scaled = x.scaled(probe.scale)?;
            let t_scaled = mapping.evaluate(&scaled)?;
            for u in 0..n {
                let bound = probe.scale * tx[u];
                let ok = t_scaled[u] < bound;
                report.scalability.record(ok, || Witness {
                    probe: k,
                    coordinate: u,
                    detail: format!(
                        "T({}x)={} is not below {}·T(x)={}",
                        probe.scale, t_scaled[u], probe.scale, bound
                    ),
                });
            }
            for u in 0..n {
                report.infimum[u] = report.infimum[u].min(t_scaled[u]);
            }
        }

        for out in [&t_lower, &t_upper] {
            for u in 0..n {
                report.infimum[u] = report.infimum[u].min(out[u]);
            }
        }
    }

    for u in 0..n {
        let floor = options.positivity_floor.at(u);
        let inf = report.infimum[u];
        let ok = probes.is_empty() || (inf > 0.0 && inf >= floor);
        report.positivity.record(ok, || Witness {
            probe: probes.len().saturating_sub(1),
            coordinate: u,
            detail: format!("running infimum {inf} below floor {floor}"),
        });
    }
    Ok(report)
}

/// Draws `count` probes with `lower` log-uniform in `[lo, hi]^N`,
/// `upper = lower ⊙ (1 + U[0,1))` and scale uniform in `(1, 4]`.
pub fn random_probes<R: Rng + ?Sized>(
    rng: &mut R,
    dimension: usize,
    count: usize,
    lo: f64,
    hi: f64,
) -> Vec<MspProbe> {
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|_| {
            let lower: Vec<f64> = (0..dimension)
                .map(|_| (ln_lo + (ln_hi - ln_lo) * rng.random::<f64>()).exp())
                .collect();
            let upper: Vec<f64> = lower
                .iter()
                .map(|x| x * (1.0 + rng.random::<f64>()))
                .collect();
            let scale = 1.0 + 3.0 * (1.0 - rng.random::<f64>());
            MspProbe {
                lower: PowerVector(lower),
                upper: PowerVector(upper),
                scale,
            }
        })
        .collect()
}
