use super::{ClusterRule, LargeScale, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotAssignment {
    pub tau_p: usize,
    pub pilot_of_user: Vec<usize>,
    /// `argmax_a β_{u,a}`, lowest index on ties.
    pub master_ap: Vec<usize>,
}

impl PilotAssignment {
    pub fn users_on_pilot(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.pilot_of_user
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == t)
            .map(|(u, _)| u)
    }

    pub fn is_contaminated(&self, u: usize) -> bool {
        self.users_on_pilot(self.pilot_of_user[u]).count() > 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub users: usize,
    pub aps: usize,
    /// `N × L`, user-major.
    pub serves: Vec<bool>,
    /// `(user, ap)` pairs served only because the AP is the user's master.
    pub overrides: Vec<(usize, usize)>,
}

impl ClusterAssignment {
    pub fn serves(&self, u: usize, a: usize) -> bool {
        self.serves[u * self.aps + a]
    }

    pub fn serving_aps(&self, u: usize) -> Vec<usize> {
        (0..self.aps).filter(|&a| self.serves(u, a)).collect()
    }

    /// Users served by AP `a` on pilot `t`.
    pub fn served_on_pilot(&self, pilots: &PilotAssignment, a: usize, t: usize) -> Vec<usize> {
        pilots.users_on_pilot(t).filter(|&u| self.serves(u, a)).collect()
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn assign_pilots_and_clusters(
    large_scale: &LargeScale,
    config: &ScenarioConfig,
) -> (PilotAssignment, ClusterAssignment) {
    let (n, l) = (large_scale.users, large_scale.aps);
    let tau_p = config.tau_p.max(1);
    let beta = |u: usize, a: usize| large_scale.beta(u, a);

    let master_ap: Vec<usize> = (0..n).map(|u| argmax_first((0..l).map(|a| beta(u, a)))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable, so ties keep the lower index first
    order.sort_by(|&x, &y| beta(y, master_ap[y]).total_cmp(&beta(x, master_ap[x])));

    let mut pilot_of_user = vec![usize::MAX; n];
    for (rank, &u) in order.iter().enumerate() {
        pilot_of_user[u] = if rank < tau_p {
            rank
        } else {
            let master = master_ap[u];
            let mut load = vec![0.0; tau_p];
            for &k in &order[..rank] {
                load[pilot_of_user[k]] += beta(k, master);
            }
            argmax_first(load.iter().map(|x| -x))
        };
    }
    let pilots = PilotAssignment {
        tau_p,
        pilot_of_user,
        master_ap,
    };

    let mut serves = vec![false; n * l];
    let mut overrides = Vec::new();
    match config.cluster_rule {
        ClusterRule::AllAps => serves.iter_mut().for_each(|s| *s = true),
        ClusterRule::PilotAware => {
            for a in 0..l {
                for t in 0..tau_p {
                    let mut best: Option<usize> = None;
                    for u in pilots.users_on_pilot(t) {
                        if best.is_none_or(|b| beta(u, a) > beta(b, a)) {
                            best = Some(u);
                        }
                    }
                    if let Some(u) = best {
                        serves[u * l + a] = true;
                    }
                }
            }
            for u in 0..n {
                let a = pilots.master_ap[u];
                if !serves[u * l + a] {
                    serves[u * l + a] = true;
                    overrides.push((u, a));
                    log::info!("AP {a} serves user {u} as its master despite a stronger user on pilot {}", pilots.pilot_of_user[u]);
                }
            }
        }
    }
    let clusters = ClusterAssignment {
        users: n,
        aps: l,
        serves,
        overrides,
    };
    (pilots, clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_layout, large_scale_realization};

    fn toy(beta: Vec<f64>, users: usize, aps: usize) -> LargeScale {
        LargeScale {
            users,
            aps,
            shadow_db: vec![0.0; beta.len()],
            distances: vec![20.0; beta.len()],
            angles: vec![0.0; beta.len()],
            beta,
        }
    }

    fn check_invariants(ls: &LargeScale, cfg: &ScenarioConfig) {
        let (p, c) = assign_pilots_and_clusters(ls, cfg);
        assert!(p.pilot_of_user.iter().all(|&t| t < cfg.tau_p));
        for u in 0..ls.users {
            assert!(!c.serving_aps(u).is_empty());
            assert!(c.serves(u, p.master_ap[u]));
        }
        for a in 0..ls.aps {
            for t in 0..cfg.tau_p {
                let served = c.served_on_pilot(&p, a, t);
                let regular: Vec<_> = served
                    .iter()
                    .filter(|&&u| !c.overrides.contains(&(u, a)))
                    .collect();
                assert!(regular.len() <= 1, "AP {a} pilot {t}: {served:?}");
            }
        }
    }

    #[test]
    fn enough_pilots_means_no_contamination() {
        let cfg = ScenarioConfig {
            tau_p: 10,
            ..ScenarioConfig::scaled_down()
        };
        let layout = generate_layout(&cfg, 3).unwrap();
        let ls = large_scale_realization(&layout, &cfg, 3);
        let (p, _) = assign_pilots_and_clusters(&ls, &cfg);
        let mut sorted = p.pilot_of_user.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
        assert!((0..6).all(|u| !p.is_contaminated(u)));
    }

    #[test]
    fn master_override_on_shared_pilot() {
        let ls = toy(vec![2e-9, 1e-9], 2, 1);
        let cfg = ScenarioConfig {
            tau_p: 1,
            ..ScenarioConfig::default()
        };
        let (p, c) = assign_pilots_and_clusters(&ls, &cfg);
        assert_eq!(p.pilot_of_user, vec![0, 0]);
        assert_eq!(p.master_ap, vec![0, 0]);
        assert_eq!(c.serves, vec![true, true]);
        assert_eq!(c.overrides, vec![(1, 0)]);
    }

    #[test]
    fn remaining_users_pick_the_quietest_pilot() {
        // users 0, 1 take pilots 0, 1; user 2 hears user 1 less at AP 0
        let ls = toy(vec![5e-9, 1e-9, 4e-9, 1e-12, 3e-9, 1e-9], 3, 2);
        let cfg = ScenarioConfig {
            tau_p: 2,
            ..ScenarioConfig::default()
        };
        let (p, _) = assign_pilots_and_clusters(&ls, &cfg);
        assert_eq!(p.master_ap, vec![0, 0, 0]);
        assert_eq!(p.pilot_of_user, vec![0, 1, 1]);
    }

    #[test]
    fn all_aps_rule() {
        let ls = toy(vec![1e-9; 6], 3, 2);
        let cfg = ScenarioConfig {
            tau_p: 1,
            cluster_rule: ClusterRule::AllAps,
            ..ScenarioConfig::default()
        };
        let (_, c) = assign_pilots_and_clusters(&ls, &cfg);
        assert!(c.serves.iter().all(|&s| s));
        assert!(c.overrides.is_empty());
    }

    #[test]
    fn invariants_on_generated_scenarios() {
        let cfg = ScenarioConfig::scaled_down();
        let layout = generate_layout(&cfg, 42).unwrap();
        check_invariants(&large_scale_realization(&layout, &cfg, 42), &cfg);

        for seed in 1..6 {
            let cfg = ScenarioConfig {
                tau_p: 3,
                ..ScenarioConfig::default()
            };
            let layout = generate_layout(&cfg, seed).unwrap();
            let ls = large_scale_realization(&layout, &cfg, seed);
            check_invariants(&ls, &cfg);
            assert_eq!(
                assign_pilots_and_clusters(&ls, &cfg),
                assign_pilots_and_clusters(&ls, &cfg)
            );
        }
    }
}
