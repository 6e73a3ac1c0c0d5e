use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{stream, substream, LargeScale, Layout, ScenarioConfig, SimError, SpatialCorrelation};

/// Gaussian local-scattering covariance of a ULA:
/// `R[m,n] = exp(j2πd(m−n) sin θ − ½(2πd(m−n) cos θ · σ)²)`.
///
/// Hermitian, positive semidefinite, unit diagonal (so `tr R = M`).
pub fn spatial_covariance(
    nominal_angle: f64,
    angular_spread: f64,
    antennas: usize,
    spacing: f64,
) -> DMatrix<Complex64> {
    DMatrix::from_fn(antennas, antennas, |m, n| {
        let offset = 2.0 * PI * spacing * (m as f64 - n as f64);
        let spread = offset * nominal_angle.cos() * angular_spread;
        Complex64::from_polar((-0.5 * spread * spread).exp(), offset * nominal_angle.sin())
    })
}

/// `a(θ)[m] = exp(j2πd·m·sin θ)`.
pub fn steering_vector(angle: f64, antennas: usize, spacing: f64) -> DVector<Complex64> {
    DVector::from_fn(antennas, |m, _| {
        Complex64::from_polar(1.0, 2.0 * PI * spacing * m as f64 * angle.sin())
    })
}

/// `U diag(√max(λ, 0)) U^H` for a Hermitian PSD matrix.
pub(crate) fn hermitian_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    );
    let u = &eig.eigenvectors;
    u * DMatrix::from_diagonal(&roots) * u.adjoint()
}

/// Second-order model of one user-AP link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub beta: f64,
    /// Linear Rician factor, possibly infinite.
    pub kappa: f64,
    pub steering: DVector<Complex64>,
    /// NLoS spatial covariance `R` with `tr R = M`.
    pub nlos_covariance: DMatrix<Complex64>,
    nlos_sqrt: DMatrix<Complex64>,
}

/// One draw of a link, already scaled by `√β`: `h = los + nlos`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDraw {
    pub los: DVector<Complex64>,
    pub nlos: DVector<Complex64>,
}

impl LinkDraw {
    pub fn channel(&self) -> DVector<Complex64> {
        &self.los + &self.nlos
    }
}

impl LinkModel {
    pub fn new(
        beta: f64,
        kappa: f64,
        angle: f64,
        angular_spread: f64,
        antennas: usize,
        spacing: f64,
    ) -> Self {
        let nlos_covariance = spatial_covariance(angle, angular_spread, antennas, spacing);
        let nlos_sqrt = hermitian_sqrt(&nlos_covariance);
        Self {
            beta,
            kappa,
            steering: steering_vector(angle, antennas, spacing),
            nlos_covariance,
            nlos_sqrt,
        }
    }

    /// `κ/(1+κ)`.
    pub fn los_fraction(&self) -> f64 {
        if self.kappa.is_infinite() {
            1.0
        } else {
            self.kappa / (1.0 + self.kappa)
        }
    }

    /// `1/(1+κ)`.
    pub fn nlos_fraction(&self) -> f64 {
        if self.kappa.is_infinite() {
            0.0
        } else {
            1.0 / (1.0 + self.kappa)
        }
    }

    /// `κ/(1+κ) a a^H + R/(1+κ)`, trace `M`. The LoS phase is uniform, so
    /// this is the full covariance divided by `β`.
    pub fn normalized_covariance(&self) -> DMatrix<Complex64> {
        let a = &self.steering;
        a * a.adjoint() * Complex64::from(self.los_fraction())
            + &self.nlos_covariance * Complex64::from(self.nlos_fraction())
    }

    /// `β` times [`Self::normalized_covariance`].
    pub fn covariance(&self) -> DMatrix<Complex64> {
        self.normalized_covariance() * Complex64::from(self.beta)
    }

    /// Same LoS part, NLoS covariance `I_M` (i.i.d. antennas).
    pub fn uncorrelated(beta: f64, kappa: f64, angle: f64, antennas: usize, spacing: f64) -> Self {
        let identity = DMatrix::<Complex64>::identity(antennas, antennas);
        Self {
            beta,
            kappa,
            steering: steering_vector(angle, antennas, spacing),
            nlos_covariance: identity.clone(),
            nlos_sqrt: identity,
        }
    }

    /// Draws a uniform LoS phase, then `M` standard complex normals.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LinkDraw {
        let m = self.steering.len();
        let phase = rng.random::<f64>() * 2.0 * PI;
        let z = DVector::from_fn(m, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re / SQRT_2, im / SQRT_2)
        });
        let root_beta = self.beta.sqrt();
        let los = &self.steering
            * Complex64::from_polar(root_beta * self.los_fraction().sqrt(), phase);
        let nlos = &self.nlos_sqrt * z * Complex64::from(root_beta * self.nlos_fraction().sqrt());
        LinkDraw { los, nlos }
    }
}

/// True channels (and, once estimated, MMSE estimates) for `S` realizations.
/// Aggregated vectors are AP-major, antenna-minor, length `K = L·M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealizations {
    pub samples: usize,
    pub users: usize,
    pub aps: usize,
    pub antennas_per_ap: usize,
    /// `N × L`, user-major.
    pub links: Vec<LinkModel>,
    pub(crate) true_channels: Vec<Complex64>,
    pub(crate) estimates: Option<Vec<Complex64>>,
}

impl ChannelRealizations {
    pub fn total_antennas(&self) -> usize {
        self.aps * self.antennas_per_ap
    }

    pub fn link(&self, u: usize, a: usize) -> &LinkModel {
        &self.links[u * self.aps + a]
    }

    fn range(&self, s: usize, u: usize) -> std::ops::Range<usize> {
        let k = self.total_antennas();
        let o = (s * self.users + u) * k;
        o..o + k
    }

    pub fn true_channels(&self) -> &[Complex64] {
        &self.true_channels
    }

    pub fn true_channel(&self, s: usize, u: usize) -> &[Complex64] {
        &self.true_channels[self.range(s, u)]
    }

    pub fn estimates(&self) -> Option<&[Complex64]> {
        self.estimates.as_deref()
    }

    pub fn estimate(&self, s: usize, u: usize) -> Option<&[Complex64]> {
        let r = self.range(s, u);
        self.estimates.as_ref().map(|e| &e[r])
    }
}

/// Per-sample blocks for the first half are drawn independently; with
/// antithetic sampling the second half negates them.
pub(crate) fn antithetic_fill(
    samples: usize,
    antithetic: bool,
    draw: impl Fn(usize) -> Vec<Complex64> + Sync + Send,
) -> Vec<Complex64> {
    let independent = if antithetic { samples / 2 } else { samples };
    let mut blocks: Vec<Vec<Complex64>> = (0..independent).into_par_iter().map(draw).collect();
    if antithetic {
        let mirrored: Vec<Vec<Complex64>> = blocks
            .iter()
            .map(|b| b.iter().map(|z| -z).collect())
            .collect();
        blocks.extend(mirrored);
    }
    blocks.concat()
}

pub fn sample_true_channels(
    layout: &Layout,
    large_scale: &LargeScale,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<ChannelRealizations, SimError> {
    let (users, aps) = (large_scale.users, large_scale.aps);
    if layout.user_positions.len() != users || layout.ap_positions.len() != aps {
        return Err(SimError::DimensionMismatch {
            what: "layout vs large-scale",
            expected: users * aps,
            actual: layout.user_positions.len() * layout.ap_positions.len(),
        });
    }
    let m = config.antennas_per_ap;
    let spread = config.angular_spread_rad();
    let links: Vec<LinkModel> = (0..users)
        .flat_map(|u| (0..aps).map(move |a| (u, a)))
        .map(|(u, a)| {
            let (beta, angle) = (large_scale.beta(u, a), large_scale.angle(u, a));
            let kappa = config.kappa.kappa(large_scale.distance(u, a));
            match config.correlation {
                SpatialCorrelation::LocalScattering => {
                    LinkModel::new(beta, kappa, angle, spread, m, config.antenna_spacing)
                }
                SpatialCorrelation::Uncorrelated => {
                    LinkModel::uncorrelated(beta, kappa, angle, m, config.antenna_spacing)
                }
            }
        })
        .collect();

    let true_channels = antithetic_fill(config.sample_count, config.antithetic, |s| {
        let mut rng = substream(seed, stream::CHANNEL, s as u64);
        let mut block = Vec::with_capacity(users * aps * m);
        for link in &links {
            block.extend(link.draw(&mut rng).channel().iter());
        }
        block
    });

    Ok(ChannelRealizations {
        samples: config.sample_count,
        users,
        aps,
        antennas_per_ap: m,
        links,
        true_channels,
        estimates: None,
    })
}

/// Relative spectral-norm error between the sample covariance of `draws`
/// NLoS draws and `βR/(1+κ)` on a fixed correlated Rician link.
pub fn nlos_covariance_error(seed: u64, draws: usize) -> f64 {
    use rand::SeedableRng;
    let (beta, kappa) = (1.0e-7, 2.0);
    let link = LinkModel::new(beta, kappa, -0.5, 0.26, 4, 0.5);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut acc = DMatrix::<Complex64>::zeros(4, 4);
    for _ in 0..draws {
        let d = link.draw(&mut rng).nlos;
        acc += &d * d.adjoint();
    }
    let sample = acc / Complex64::from(draws as f64);
    let model = &link.nlos_covariance * Complex64::from(beta / (1.0 + kappa));
    let spectral = |m: DMatrix<Complex64>| m.svd(false, false).singular_values[0];
    spectral(&sample - &model) / spectral(model)
}
