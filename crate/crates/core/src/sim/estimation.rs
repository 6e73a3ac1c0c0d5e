use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::channel::antithetic_fill;
use super::{stream, substream, ChannelRealizations, LinkModel, LargeScale, PilotAssignment, ScenarioConfig, SimError};

/// Linear MMSE estimates from one received pilot block per realization.
///
/// For AP `a` and pilot `t` the received signal is
/// `y = Σ_{k on t} √(ρτ_p) h_{k,a} + n`, `n ~ CN(0, σ²I)`, and
/// `ĥ_{u,a} = √(ρτ_p) C_{u,a} Ψ_{t,a}^{-1} y` with
/// `Ψ_{t,a} = Σ_{k on t} ρτ_p C_{k,a} + σ²I`.
pub fn mmse_channel_estimates(
    truth: ChannelRealizations,
    pilots: &PilotAssignment,
    large_scale: &LargeScale,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<ChannelRealizations, SimError> {
    if large_scale.users != truth.users || large_scale.aps != truth.aps {
        return Err(SimError::DimensionMismatch {
            what: "large-scale vs channels",
            expected: truth.users * truth.aps,
            actual: large_scale.users * large_scale.aps,
        });
    }
    let rho = config.pilot_power();
    if !(rho.is_finite() && rho > 0.0) {
        return Err(SimError::Config(format!("pilot power must be positive, got {rho}")));
    }
    estimate_with_noise(
        truth,
        pilots,
        rho * pilots.tau_p as f64,
        config.noise_power_mw(),
        seed,
        config.antithetic,
    )
}

/// Estimator matrices `A_{u,a}`, user-major.
fn estimator_matrices(
    truth: &ChannelRealizations,
    pilots: &PilotAssignment,
    pilot_energy: f64,
    noise_power: f64,
) -> Result<Vec<DMatrix<Complex64>>, SimError> {
    let m = truth.antennas_per_ap;
    let mut psi_inv = Vec::with_capacity(truth.aps * pilots.tau_p);
    for a in 0..truth.aps {
        for t in 0..pilots.tau_p {
            let mut psi = DMatrix::<Complex64>::identity(m, m) * Complex64::from(noise_power);
            for k in pilots.users_on_pilot(t) {
                psi += truth.link(k, a).covariance() * Complex64::from(pilot_energy);
            }
            let chol = psi
                .cholesky()
                .ok_or_else(|| SimError::Numerical(format!("pilot covariance of AP {a}, pilot {t}")))?;
            psi_inv.push(chol.inverse());
        }
    }
    let root = Complex64::from(pilot_energy.sqrt());
    let mut out = Vec::with_capacity(truth.users * truth.aps);
    for u in 0..truth.users {
        for a in 0..truth.aps {
            let t = pilots.pilot_of_user[u];
            out.push(truth.link(u, a).covariance() * &psi_inv[a * pilots.tau_p + t] * root);
        }
    }
    Ok(out)
}

pub(crate) fn estimate_with_noise(
    mut truth: ChannelRealizations,
    pilots: &PilotAssignment,
    pilot_energy: f64,
    noise_power: f64,
    seed: u64,
    antithetic: bool,
) -> Result<ChannelRealizations, SimError> {
    if pilots.pilot_of_user.len() != truth.users {
        return Err(SimError::DimensionMismatch {
            what: "pilot assignment",
            expected: truth.users,
            actual: pilots.pilot_of_user.len(),
        });
    }
    let (n, l, m, tau_p) = (truth.users, truth.aps, truth.antennas_per_ap, pilots.tau_p);
    let estimators = estimator_matrices(&truth, pilots, pilot_energy, noise_power)?;
    let noise_std = (noise_power / 2.0).sqrt();
    let noise = antithetic_fill(truth.samples, antithetic, |s| {
        let mut rng = substream(seed, stream::PILOT_NOISE, s as u64);
        (0..l * tau_p * m)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * noise_std
            })
            .collect()
    });

    let root = Complex64::from(pilot_energy.sqrt());
    let k = l * m;
    let estimates: Vec<Complex64> = (0..truth.samples)
        .into_par_iter()
        .map(|s| {
            let mut block = vec![Complex64::new(0.0, 0.0); n * k];
            for a in 0..l {
                for t in 0..tau_p {
                    let offset = (s * l * tau_p + a * tau_p + t) * m;
                    let mut y = DVector::from_column_slice(&noise[offset..offset + m]);
                    for u in pilots.users_on_pilot(t) {
                        let h = &truth.true_channel(s, u)[a * m..(a + 1) * m];
                        y += DVector::from_column_slice(h) * root;
                    }
                    for u in pilots.users_on_pilot(t) {
                        let est = &estimators[u * l + a] * &y;
                        block[u * k + a * m..u * k + (a + 1) * m].copy_from_slice(est.as_slice());
                    }
                }
            }
            block
        })
        .collect::<Vec<_>>()
        .concat();
    truth.estimates = Some(estimates);
    Ok(truth)
}

/// Draws `samples` i.i.d. realizations of the given links from one stream.
pub(crate) fn toy_realizations(
    links: Vec<LinkModel>,
    users: usize,
    aps: usize,
    samples: usize,
    seed: u64,
) -> ChannelRealizations {
    let m = links[0].steering.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut true_channels = Vec::with_capacity(samples * users * aps * m);
    for _ in 0..samples {
        for link in &links {
            true_channels.extend(link.draw(&mut rng).channel().iter());
        }
    }
    ChannelRealizations {
        samples,
        users,
        aps,
        antennas_per_ap: m,
        links,
        true_channels,
        estimates: None,
    }
}

fn spectral(m: &DMatrix<Complex64>) -> f64 {
    m.clone().svd(false, false).singular_values[0]
}

fn orthogonality_ratio(r: &ChannelRealizations, u: usize) -> f64 {
    let m = r.antennas_per_ap;
    let mut cross = DMatrix::<Complex64>::zeros(m, m);
    let mut ee = cross.clone();
    let mut rr = cross.clone();
    for s in 0..r.samples {
        let h = DVector::from_column_slice(&r.true_channel(s, u)[..m]);
        let e = DVector::from_column_slice(&r.estimate(s, u).unwrap()[..m]);
        let d = &h - &e;
        cross += &e * d.adjoint();
        ee += &e * e.adjoint();
        rr += &d * d.adjoint();
    }
    spectral(&cross) / (spectral(&ee) * spectral(&rr)).sqrt()
}

/// MMSE orthogonality residual on a two-user contaminated toy link drawn
/// `draws` times: the largest, over both users, of
/// `‖E[ĥ(h−ĥ)^H]‖ / √(‖E[ĥĥ^H]‖‖E[(h−ĥ)(h−ĥ)^H]‖)` (spectral norms).
pub fn mmse_orthogonality_residual(seed: u64, draws: usize) -> f64 {
    let beta = 1e-9;
    let links = vec![
        LinkModel::new(beta, 0.0, 0.4, 0.26, 4, 0.5),
        LinkModel::new(0.5 * beta, 0.0, -0.9, 0.26, 4, 0.5),
    ];
    let truth = toy_realizations(links, 2, 1, draws, seed);
    let pilots = PilotAssignment {
        tau_p: 1,
        pilot_of_user: vec![0, 0],
        master_ap: vec![0, 0],
    };
    // pilot SNR of a few dB so the error is not negligible
    let est = estimate_with_noise(truth, &pilots, 1.0, beta, seed, false).unwrap();
    orthogonality_ratio(&est, 0).max(orthogonality_ratio(&est, 1))
}
