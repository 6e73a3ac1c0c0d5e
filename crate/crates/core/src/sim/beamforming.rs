use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{BeamformerStrategy, ChannelRealizations, ClusterAssignment, ScenarioConfig, SimError};
use crate::rates::SampleSet;

/// Unit-norm beamformers, `[s][u][K]`, zero outside each user's cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSamples {
    pub samples: usize,
    pub users: usize,
    pub antennas: usize,
    pub(crate) vectors: Vec<Complex64>,
}

impl BeamformerSamples {
    pub fn vectors(&self) -> &[Complex64] {
        &self.vectors
    }

    pub fn beamformer(&self, s: usize, u: usize) -> &[Complex64] {
        let o = (s * self.users + u) * self.antennas;
        &self.vectors[o..o + self.antennas]
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.vectors
    }
}

fn mask_and_normalize(
    v: &mut [Complex64],
    clusters: &ClusterAssignment,
    u: usize,
    m: usize,
    sample: usize,
) -> Result<(), SimError> {
    for (a, chunk) in v.chunks_mut(m).enumerate() {
        if !clusters.serves(u, a) {
            chunk.fill(Complex64::new(0.0, 0.0));
        }
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(SimError::DegenerateBeamformer { user: u, sample });
    }
    v.iter_mut().for_each(|z| *z /= norm);
    Ok(())
}

/// Per serving AP, `√λ₁ e₁` of the link covariance; fixed across samples.
fn statistical_direction(channels: &ChannelRealizations, u: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(channels.total_antennas());
    for a in 0..channels.aps {
        let eig = SymmetricEigen::new(channels.link(u, a).covariance());
        let mut best = 0;
        for i in 1..eig.eigenvalues.len() {
            if eig.eigenvalues[i] > eig.eigenvalues[best] {
                best = i;
            }
        }
        let weight = eig.eigenvalues[best].max(0.0).sqrt();
        out.extend(eig.eigenvectors.column(best).iter().map(|z| z * weight));
    }
    out
}

/// `(Σ_k q ĥ_k ĥ_k^H + σ²I)^{-1} [ĥ_1 … ĥ_N]`, column-major `K × N`.
fn mmse_directions(estimates: &[Complex64], users: usize, k: usize, q: f64, noise: f64) -> Option<DMatrix<Complex64>> {
    let h = DMatrix::from_column_slice(k, users, estimates);
    let gram = &h * h.adjoint() * Complex64::from(q)
        + DMatrix::<Complex64>::identity(k, k) * Complex64::from(noise);
    gram.cholesky().map(|c| c.solve(&h))
}

/// Power-independent beamformers computed from the MMSE estimates
/// (MMSE weighting uses `q = p_max` for every user).
pub fn build_beamformers(
    channels: &ChannelRealizations,
    clusters: &ClusterAssignment,
    config: &ScenarioConfig,
) -> Result<BeamformerSamples, SimError> {
    let (n, k, m) = (channels.users, channels.total_antennas(), channels.antennas_per_ap);
    if clusters.users != n || clusters.aps != channels.aps {
        return Err(SimError::DimensionMismatch {
            what: "cluster assignment",
            expected: n * channels.aps,
            actual: clusters.users * clusters.aps,
        });
    }
    let estimates = channels
        .estimates()
        .ok_or_else(|| SimError::Config("channel estimates are missing".into()))?;
    let noise = config.noise_power_mw();
    let fixed: Vec<Vec<Complex64>> = match config.beamformer {
        BeamformerStrategy::Statistical => (0..n).map(|u| statistical_direction(channels, u)).collect(),
        _ => Vec::new(),
    };

    let blocks: Vec<Vec<Complex64>> = (0..channels.samples)
        .into_par_iter()
        .map(|s| {
            let est = &estimates[s * n * k..(s + 1) * n * k];
            let mut block = match config.beamformer {
                BeamformerStrategy::Mrc => est.to_vec(),
                BeamformerStrategy::Statistical => fixed.concat(),
                BeamformerStrategy::CentralizedMmse => mmse_directions(est, n, k, config.p_max, noise)
                    .ok_or_else(|| SimError::Numerical(format!("MMSE matrix of sample {s}")))?
                    .as_slice()
                    .to_vec(),
            };
            for (u, v) in block.chunks_mut(k).enumerate() {
                mask_and_normalize(v, clusters, u, m, s)?;
            }
            Ok(block)
        })
        .collect::<Result<_, SimError>>()?;
    Ok(BeamformerSamples {
        samples: channels.samples,
        users: n,
        antennas: k,
        vectors: blocks.concat(),
    })
}

/// Pairs the true channels with the estimate-based beamformers.
pub fn assemble_sample_set(
    channels: &ChannelRealizations,
    beamformers: &BeamformerSamples,
    config: &ScenarioConfig,
) -> Result<SampleSet, SimError> {
    let k = channels.total_antennas();
    if (beamformers.samples, beamformers.users, beamformers.antennas) != (channels.samples, channels.users, k) {
        return Err(SimError::DimensionMismatch {
            what: "beamformer samples",
            expected: channels.samples * channels.users * k,
            actual: beamformers.vectors.len(),
        });
    }
    Ok(SampleSet::new(
        channels.users,
        k,
        config.noise_power_mw(),
        channels.true_channels.clone(),
        beamformers.vectors.clone(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use crate::sim::{simulate, ClusterRule, KappaModel, LinkModel};

    fn realizations(estimates: Vec<Complex64>, users: usize, aps: usize, m: usize) -> ChannelRealizations {
        let links = (0..users * aps)
            .map(|_| LinkModel::new(1e-9, 0.0, 0.3, 0.26, m, 0.5))
            .collect();
        ChannelRealizations {
            samples: estimates.len() / (users * aps * m),
            users,
            aps,
            antennas_per_ap: m,
            links,
            true_channels: estimates.clone(),
            estimates: Some(estimates),
        }
    }

    fn all_served(users: usize, aps: usize) -> ClusterAssignment {
        ClusterAssignment {
            users,
            aps,
            serves: vec![true; users * aps],
            overrides: Vec::new(),
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_parallel(a: &[Complex64], b: &[Complex64]) {
        let x = DVector::from_column_slice(a);
        let y = DVector::from_column_slice(b);
        let cosine = x.dotc(&y).norm() / (x.norm() * y.norm());
        assert!((cosine - 1.0).abs() < 1e-12, "{cosine}");
    }

    #[test]
    fn single_user_mmse_equals_mrc() {
        let est = vec![c(1e-5, 2e-5), c(-3e-5, 0.5e-5), c(0.2e-5, -1e-5), c(4e-5, 1e-5)];
        let ch = realizations(est, 1, 2, 2);
        let cl = all_served(1, 2);
        let mmse = build_beamformers(&ch, &cl, &ScenarioConfig::default()).unwrap();
        let mrc_cfg = ScenarioConfig {
            beamformer: BeamformerStrategy::Mrc,
            ..ScenarioConfig::default()
        };
        let mrc = build_beamformers(&ch, &cl, &mrc_cfg).unwrap();
        assert_parallel(mmse.beamformer(0, 0), mrc.beamformer(0, 0));
    }

    #[test]
    fn orthogonal_estimates_give_mrc() {
        let est = vec![c(2e-5, 1e-5), c(0.0, 0.0), c(0.0, 0.0), c(-1e-5, 3e-5)];
        let ch = realizations(est, 2, 1, 2);
        let cl = all_served(2, 1);
        let bf = build_beamformers(&ch, &cl, &ScenarioConfig::default()).unwrap();
        assert_parallel(bf.beamformer(0, 0), &[c(2e-5, 1e-5), c(0.0, 0.0)]);
        assert_parallel(bf.beamformer(0, 1), &[c(0.0, 0.0), c(-1e-5, 3e-5)]);
        assert_eq!(bf.beamformer(0, 0)[1], c(0.0, 0.0));
    }

    #[test]
    fn masked_to_nothing_is_an_error() {
        let est = vec![c(0.0, 0.0), c(0.0, 0.0), c(1e-5, 0.0), c(1e-5, 0.0)];
        let ch = realizations(est, 1, 2, 2);
        let cl = ClusterAssignment {
            users: 1,
            aps: 2,
            serves: vec![true, false],
            overrides: Vec::new(),
        };
        let cfg = ScenarioConfig {
            beamformer: BeamformerStrategy::Mrc,
            ..ScenarioConfig::default()
        };
        assert_eq!(
            build_beamformers(&ch, &cl, &cfg),
            Err(SimError::DegenerateBeamformer { user: 0, sample: 0 })
        );
    }

    #[test]
    fn construction_contract_on_scenarios() {
        for beamformer in [
            BeamformerStrategy::Mrc,
            BeamformerStrategy::CentralizedMmse,
            BeamformerStrategy::Statistical,
        ] {
            let cfg = ScenarioConfig {
                sample_count: 20,
                tau_p: 3,
                beamformer,
                ..ScenarioConfig::scaled_down()
            };
            let sim = simulate(&cfg).unwrap();
            let set = &sim.samples;
            let m = cfg.antennas_per_ap;
            for s in 0..set.sample_count() {
                for u in 0..set.users() {
                    let v = set.beamformer(s, u);
                    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    assert!((norm - 1.0).abs() <= 1e-12);
                    for a in 0..cfg.num_aps {
                        if !sim.clusters.serves(u, a) {
                            assert!(v[a * m..(a + 1) * m].iter().all(|z| *z == c(0.0, 0.0)));
                        }
                    }
                }
            }
            assert_eq!(set.noise_power(), cfg.noise_power_mw());
        }
    }

    #[test]
    fn statistical_beamformers_are_fixed() {
        let cfg = ScenarioConfig {
            sample_count: 16,
            beamformer: BeamformerStrategy::Statistical,
            kappa: KappaModel::Rayleigh,
            cluster_rule: ClusterRule::AllAps,
            antithetic: true,
            ..ScenarioConfig::scaled_down()
        };
        let set = simulate(&cfg).unwrap().samples;
        for s in 1..16 {
            for u in 0..6 {
                assert_eq!(set.beamformer(s, u), set.beamformer(0, u));
            }
        }
        let stats = crate::rates::moment_statistics(&set);
        for u in 0..6 {
            assert_eq!(stats.mean_inner(u), c(0.0, 0.0));
        }
    }
}
