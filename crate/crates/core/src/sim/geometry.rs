use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{stream, substream, ApPlacement, ScenarioConfig, SimError};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub area_side: f64,
}

pub(crate) fn grid_side(num_aps: usize) -> Result<usize, SimError> {
    let side = (num_aps as f64).sqrt().round() as usize;
    if side * side != num_aps {
        return Err(SimError::NonSquareGrid(num_aps));
    }
    Ok(side)
}

/// APs on a `√L × √L` grid (pitch `side/√L`, offset by half a pitch), or
/// uniform when configured; users uniform on `[0, side)²`.
pub fn generate_layout(config: &ScenarioConfig, seed: u64) -> Result<Layout, SimError> {
    let side = config.area_side;
    let mut rng = substream(seed, stream::LAYOUT, 0);
    let ap_positions = match config.ap_placement {
        ApPlacement::Grid => {
            let per_row = grid_side(config.num_aps)?;
            let pitch = side / per_row as f64;
            (0..config.num_aps)
                .map(|a| {
                    let (row, col) = (a / per_row, a % per_row);
                    [(col as f64 + 0.5) * pitch, (row as f64 + 0.5) * pitch]
                })
                .collect()
        }
        ApPlacement::Random => (0..config.num_aps)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
            .collect(),
    };
    let user_positions = (0..config.num_users)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();
    Ok(Layout {
        ap_positions,
        user_positions,
        area_side: side,
    })
}

/// Minimum-image displacement `to − from` on the torus of the given side.
pub fn wrapped_displacement(from: Point, to: Point, side: f64) -> Point {
    let wrap = |d: f64| {
        let d = d.rem_euclid(side);
        if d > side / 2.0 {
            d - side
        } else {
            d
        }
    };
    [wrap(to[0] - from[0]), wrap(to[1] - from[1])]
}

/// 3-D distance with wrap-around in the horizontal plane.
pub fn toroidal_distance(x: Point, y: Point, side: f64, height_difference: f64) -> f64 {
    let [dx, dy] = wrapped_displacement(x, y, side);
    (dx * dx + dy * dy + height_difference * height_difference).sqrt()
}

/// `−35.4 + 20 log10(f_c / 1 MHz) + 26 log10(d / 1 m)` in dB, with `d`
/// clamped to at least 1 m. Shadowing is added separately.
pub fn path_loss_db(distance: f64, carrier_freq: f64) -> f64 {
    -35.4 + 20.0 * (carrier_freq / 1e6).log10() + 26.0 * distance.max(1.0).log10()
}

/// Large-scale quantities; matrices are `N × L`, user-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    pub users: usize,
    pub aps: usize,
    /// Linear channel gain.
    pub beta: Vec<f64>,
    /// Shadow-fading draw (dB).
    pub shadow_db: Vec<f64>,
    /// 3-D wrap-around distance (m).
    pub distances: Vec<f64>,
    /// Azimuth of the user seen from the AP (rad), from the wrapped displacement.
    pub angles: Vec<f64>,
}

impl LargeScale {
    pub fn beta(&self, u: usize, a: usize) -> f64 {
        self.beta[u * self.aps + a]
    }

    pub fn distance(&self, u: usize, a: usize) -> f64 {
        self.distances[u * self.aps + a]
    }

    pub fn angle(&self, u: usize, a: usize) -> f64 {
        self.angles[u * self.aps + a]
    }
}

pub fn large_scale_realization(layout: &Layout, config: &ScenarioConfig, seed: u64) -> LargeScale {
    let users = layout.user_positions.len();
    let aps = layout.ap_positions.len();
    let mut rng = substream(seed, stream::SHADOWING, 0);
    // σ = 0 is a valid degenerate normal
    let shadow = Normal::new(0.0, config.shadow_std_db).expect("nonnegative std");

    let mut out = LargeScale {
        users,
        aps,
        beta: Vec::with_capacity(users * aps),
        shadow_db: Vec::with_capacity(users * aps),
        distances: Vec::with_capacity(users * aps),
        angles: Vec::with_capacity(users * aps),
    };
    for user in &layout.user_positions {
        for ap in &layout.ap_positions {
            let d = toroidal_distance(*ap, *user, layout.area_side, config.height_difference);
            let [dx, dy] = wrapped_displacement(*ap, *user, layout.area_side);
            let f = shadow.sample(&mut rng);
            let loss = path_loss_db(d, config.carrier_freq) + f;
            out.beta.push(10f64.powf(-loss / 10.0));
            out.shadow_db.push(f);
            out.distances.push(d);
            out.angles.push(dy.atan2(dx));
        }
    }
    out
}
