//! Broadcast channel between drones: a Rayleigh-fading outage model over a
//! log-distance path-loss law, plus the per-step delivery draw.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coord::Coord;
use crate::error::Error;
use crate::Result;

/// Distance at which the calibrated channel loses half its packets.
pub const HALF_LOSS_DISTANCE_M: f64 = 110.0;
/// Path-loss reference distance: closer links are treated as this far away.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// Every broadcast reaches every peer.
    Perfect,
    /// Per-link independent outage draws.
    Lossy,
    /// No packet is ever delivered.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    /// Physical size of one grid cell; link distance is the horizontal
    /// grid distance times this (all drones share one altitude).
    pub cell_side_m: f64,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    /// Common flight altitude. Does not enter the link distance (equal
    /// heights cancel); recorded for the scenario manifest.
    pub altitude_m: f64,
    /// Code rate of the modem the SNR threshold models; metadata.
    pub coding_rate: f64,
    /// Mean SNR required for successful decoding.
    pub snr_threshold_db: f64,
    /// Path loss at the reference distance. Set by [`calibrate`].
    pub pathloss_ref_db: f64,
    pub pathloss_exponent: f64,
    /// Log-normal shadowing spread; 0 disables shadowing.
    pub shadowing_sigma_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            mode: ChannelMode::Perfect,
            cell_side_m: 10.0,
            tx_power_dbm: 20.0,
            noise_floor_dbm: -76.0,
            altitude_m: 40.0,
            coding_rate: 2.0 / 3.0,
            snr_threshold_db: 3.0,
            pathloss_ref_db: 46.5,
            pathloss_exponent: 2.2,
            shadowing_sigma_db: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_side_m <= 0.0 {
            return Err(Error::config("cell_side_m must be positive"));
        }
        if !(0.0..=1.0).contains(&self.coding_rate) || self.coding_rate == 0.0 {
            return Err(Error::config("coding_rate must lie in (0, 1]"));
        }
        if self.pathloss_exponent <= 0.0 {
            return Err(Error::config("pathloss_exponent must be positive"));
        }
        if self.shadowing_sigma_db < 0.0 {
            return Err(Error::config("shadowing_sigma_db must be non-negative"));
        }
        Ok(())
    }

    /// Mean received SNR in dB at link distance `d_m`, with an optional
    /// extra shadowing loss.
    fn mean_snr_db(&self, d_m: f64, shadow_db: f64) -> f64 {
        let d = d_m.max(REFERENCE_DISTANCE_M);
        let pathloss =
            self.pathloss_ref_db + 10.0 * self.pathloss_exponent * d.log10() + shadow_db;
        self.tx_power_dbm - pathloss - self.noise_floor_dbm
    }
}

/// Probability that a packet over a `d_m`-metre link is lost. Under
/// Rayleigh fading the instantaneous SNR is exponential with the mean SNR,
/// so the outage probability is `1 - exp(-thr / mean)`.
pub fn packet_loss_probability(cfg: &ChannelConfig, d_m: f64) -> Result<f64> {
    packet_loss_with_shadowing(cfg, d_m, 0.0)
}

fn packet_loss_with_shadowing(cfg: &ChannelConfig, d_m: f64, shadow_db: f64) -> Result<f64> {
    if !(d_m >= 0.0) {
        return Err(Error::domain("link distance must be non-negative"));
    }
    let margin_db = cfg.snr_threshold_db - cfg.mean_snr_db(d_m, shadow_db);
    let ratio = 10f64.powf(margin_db / 10.0);
    Ok(1.0 - (-ratio).exp())
}

/// Solves for `pathloss_ref_db` so the loss probability at
/// [`HALF_LOSS_DISTANCE_M`] is exactly one half, by bisection.
pub fn calibrate(cfg: &ChannelConfig) -> Result<ChannelConfig> {
    cfg.validate()?;
    let mut lo = -100.0f64;
    let mut hi = 300.0f64;
    let p_at = |ref_db: f64| -> f64 {
        let mut c = *cfg;
        c.pathloss_ref_db = ref_db;
        packet_loss_with_shadowing(&c, HALF_LOSS_DISTANCE_M, 0.0).unwrap()
    };
    // loss grows with the reference loss; keep the root bracketed
    if p_at(lo) > 0.5 || p_at(hi) < 0.5 {
        return Err(Error::domain("calibration bracket does not contain 0.5"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p_at(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut out = *cfg;
    out.pathloss_ref_db = 0.5 * (lo + hi);
    Ok(out)
}

/// Per-episode channel state: fixed log-normal shadowing offsets per
/// unordered drone pair, resampled at episode start.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    u: usize,
    /// Row-major upper triangle, entry for pair (a, b) with a < b.
    shadow_db: Vec<f64>,
}

impl ChannelRealization {
    pub fn sample(cfg: &ChannelConfig, u: usize, rng: &mut ChaCha8Rng) -> ChannelRealization {
        let pairs = u * (u.saturating_sub(1)) / 2;
        let shadow_db = if cfg.shadowing_sigma_db > 0.0 {
            (0..pairs)
                .map(|_| gaussian(rng) * cfg.shadowing_sigma_db)
                .collect()
        } else {
            vec![0.0; pairs]
        };
        ChannelRealization { u, shadow_db }
    }

    fn pair_index(&self, a: usize, b: usize) -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        // index into the upper triangle laid out row by row
        lo * self.u - lo * (lo + 1) / 2 + (hi - lo - 1)
    }

    pub fn shadow_db(&self, a: usize, b: usize) -> f64 {
        self.shadow_db[self.pair_index(a, b)]
    }
}

/// Standard normal via Box-Muller.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Which sender reached which receiver this step: `delivered[s][r]`.
pub type DeliveryMatrix = Vec<Vec<bool>>;

/// Draws one delivery matrix for a broadcast round. The self link is always
/// false. In lossy mode every ordered pair gets an independent draw; draw
/// order (sender-major, then receiver) is fixed so a given RNG stream yields
/// the same matrix regardless of caller structure.
pub fn broadcast_round(
    positions: &[Coord],
    cfg: &ChannelConfig,
    realization: &ChannelRealization,
    rng: &mut ChaCha8Rng,
) -> Result<DeliveryMatrix> {
    let u = positions.len();
    let mut out = vec![vec![false; u]; u];
    match cfg.mode {
        ChannelMode::Perfect => {
            for (s, row) in out.iter_mut().enumerate() {
                for (r, cell) in row.iter_mut().enumerate() {
                    *cell = s != r;
                }
            }
        }
        ChannelMode::None => {}
        ChannelMode::Lossy => {
            for s in 0..u {
                for r in 0..u {
                    if s == r {
                        continue;
                    }
                    let d_cells = (positions[s].dist2(&positions[r]) as f64).sqrt();
                    let d_m = d_cells * cfg.cell_side_m;
                    let p_loss =
                        packet_loss_with_shadowing(cfg, d_m, realization.shadow_db(s, r))?;
                    let draw: f64 = rng.gen_range(0.0..1.0);
                    out[s][r] = draw >= p_loss;
                }
            }
        }
    }
    Ok(out)
}
