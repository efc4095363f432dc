//! Random map generation: target layouts, obstacle placement, start cells.

use ndarray::Array2;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridMap, Obstacle, ValueModel};
use crate::coord::Coord;
use crate::error::Error;
use crate::Result;

/// Rejection budget per placement before the whole layout is resampled.
const PLACEMENT_ATTEMPTS: usize = 1000;
/// Full-layout resample budget before generation fails outright.
const LAYOUT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Later targets repel the seed: admissible cells keep distance
    /// `> d_sparse` from every earlier target, weighted by distance from the
    /// seed.
    Sparse,
    /// Later targets crowd the seed: admissible cells keep distance `> 1`
    /// from every earlier target, weighted by `1 / (1 + distance)`.
    Cluster,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MapGenConfig {
    pub m: usize,
    pub k: usize,
    pub mode: TargetMode,
    /// Number of independently seeded target groups; `k` must divide evenly.
    /// Only meaningful in cluster mode.
    pub clusters: usize,
    pub d_sparse: f64,
    /// Requested obstacle coverage fraction.
    pub eta: f64,
    pub h_min: u32,
    pub h_max: u32,
    pub value: ValueModel,
}

impl Default for MapGenConfig {
    fn default() -> Self {
        MapGenConfig {
            m: 20,
            k: 4,
            mode: TargetMode::Cluster,
            clusters: 1,
            d_sparse: 8.0,
            eta: 0.0,
            h_min: 2,
            h_max: 4,
            value: ValueModel::default(),
        }
    }
}

impl MapGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("map side must be positive"));
        }
        if self.k == 0 {
            return Err(Error::config("target count must be positive"));
        }
        if self.clusters == 0 {
            return Err(Error::config("cluster count must be positive"));
        }
        if !self.k.is_multiple_of(self.clusters) {
            return Err(Error::config(format!(
                "cluster count {} must divide target count {}",
                self.clusters, self.k
            )));
        }
        if self.clusters > 1 && self.mode != TargetMode::Cluster {
            return Err(Error::config("multiple clusters require cluster mode"));
        }
        if self.d_sparse < 0.0 {
            return Err(Error::config("d_sparse must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::config("eta must lie in [0, 1)"));
        }
        if self.h_min == 0 || self.h_min > self.h_max {
            return Err(Error::config("need 0 < h_min <= h_max"));
        }
        if self.value.sigma2 <= 0.0 {
            return Err(Error::config("sigma2 must be positive"));
        }
        Ok(())
    }
}

/// Draws one cell from `cells` with probability proportional to `weight`,
/// by exact inverse-CDF over the enumerated support.
fn weighted_draw(
    cells: &[Coord],
    weight: impl Fn(Coord) -> f64,
    rng: &mut ChaCha8Rng,
) -> Result<Coord> {
    let weights: Vec<f64> = cells.iter().map(|&c| weight(c)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Generation(
            "no admissible cell has positive weight".into(),
        ));
    }
    let u: f64 = rng.gen_range(0.0..total);
    let mut acc = 0.0;
    for (c, w) in cells.iter().zip(&weights) {
        acc += w;
        if u < acc {
            return Ok(*c);
        }
    }
    Ok(*cells.last().unwrap())
}

fn all_cells(m: usize, allowed: impl Fn(Coord) -> bool) -> Vec<Coord> {
    let mut out = Vec::new();
    for x in 0..m {
        for y in 0..m {
            let c = Coord::new(x as i32, y as i32);
            if allowed(c) {
                out.push(c);
            }
        }
    }
    out
}

/// Places `cfg.k` targets. `forbidden` marks cells targets may not use
/// (pre-existing obstacle cells and their distance-1 halo, for fixed-map
/// scenarios); generated maps pass `None` because obstacles are placed after
/// the targets.
///
/// Fails with a generation error when some admissible set comes up empty, in
/// which case the caller resamples the layout from scratch.
pub fn place_targets(
    cfg: &MapGenConfig,
    forbidden: Option<&Array2<u8>>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Coord>> {
    let m = cfg.m;
    let free = |c: Coord| forbidden.is_none_or(|f| f[[c.x as usize, c.y as usize]] == 0);
    let per_group = cfg.k / cfg.clusters;
    let mut placed: Vec<Coord> = Vec::with_capacity(cfg.k);

    for _ in 0..cfg.clusters {
        // Group seed: uniform over free cells at distance > 1 from all
        // earlier targets, so the pairwise floor holds across groups.
        let seed_cells = all_cells(m, |c| {
            free(c) && placed.iter().all(|z| c.dist2(z) > 1)
        });
        if seed_cells.is_empty() {
            return Err(Error::Generation("no admissible seed cell".into()));
        }
        let seed = seed_cells[rng.gen_range(0..seed_cells.len())];
        placed.push(seed);

        for _ in 1..per_group {
            let next = match cfg.mode {
                TargetMode::Sparse => {
                    let min2 = cfg.d_sparse * cfg.d_sparse;
                    let cells = all_cells(m, |c| {
                        free(c) && placed.iter().all(|z| (c.dist2(z) as f64) > min2)
                    });
                    if cells.is_empty() {
                        return Err(Error::Generation("sparse placement ran out of cells".into()));
                    }
                    weighted_draw(&cells, |c| (c.dist2(&seed) as f64).sqrt(), rng)?
                }
                TargetMode::Cluster => {
                    let cells = all_cells(m, |c| {
                        free(c) && placed.iter().all(|z| c.dist2(z) > 1)
                    });
                    if cells.is_empty() {
                        return Err(Error::Generation(
                            "cluster placement ran out of cells".into(),
                        ));
                    }
                    weighted_draw(&cells, |c| 1.0 / (1.0 + (c.dist2(&seed) as f64).sqrt()), rng)?
                }
            };
            placed.push(next);
        }
    }
    Ok(placed)
}

/// Outcome of obstacle placement.
#[derive(Debug, Clone)]
pub struct ObstaclePlacement {
    pub obstacles: Vec<Obstacle>,
    /// False when the rejection budget ran out before reaching the requested
    /// coverage; the map is still usable.
    pub reached_coverage: bool,
}

/// Packs random rectangles until obstacle coverage reaches `eta * m^2`.
/// Every obstacle stays inside the map, keeps every cell at distance > 1
/// from every target, and keeps distance >= 2 from every other obstacle.
pub fn place_obstacles(
    cfg: &MapGenConfig,
    targets: &[Coord],
    rng: &mut ChaCha8Rng,
) -> ObstaclePlacement {
    let m = cfg.m;
    let wanted = cfg.eta * (m * m) as f64;
    let mut obstacles: Vec<Obstacle> = Vec::new();
    let mut covered = 0u64;
    let mut attempts = 0usize;

    while (covered as f64) < wanted {
        let hx = rng.gen_range(cfg.h_min..=cfg.h_max);
        let hy = rng.gen_range(cfg.h_min..=cfg.h_max);
        let corners = valid_corners(m, (hx, hy), targets, &obstacles);
        if corners.is_empty() {
            attempts += 1;
            if attempts >= PLACEMENT_ATTEMPTS {
                return ObstaclePlacement {
                    obstacles,
                    reached_coverage: false,
                };
            }
            continue;
        }
        attempts = 0;
        let corner = corners[rng.gen_range(0..corners.len())];
        let o = Obstacle::new(corner, (hx, hy));
        covered += o.cell_count();
        obstacles.push(o);
    }
    ObstaclePlacement {
        obstacles,
        reached_coverage: true,
    }
}

fn valid_corners(
    m: usize,
    dims: (u32, u32),
    targets: &[Coord],
    existing: &[Obstacle],
) -> Vec<Coord> {
    let (hx, hy) = (dims.0 as i32, dims.1 as i32);
    let mut out = Vec::new();
    for x in 0..=(m as i32 - hx) {
        for y in 0..=(m as i32 - hy) {
            let cand = Obstacle::new(Coord::new(x, y), dims);
            let clear_of_targets = targets.iter().all(|z| cand.dist2_to_point(*z) > 1);
            let clear_of_obstacles = existing.iter().all(|o| cand.dist2_to_obstacle(o) >= 4);
            if clear_of_targets && clear_of_obstacles {
                out.push(Coord::new(x, y));
            }
        }
    }
    out
}

/// Generates a complete map, resampling the layout when target placement
/// paints itself into a corner.
pub fn generate_map(cfg: &MapGenConfig, rng: &mut ChaCha8Rng) -> Result<GridMap> {
    cfg.validate()?;
    for _ in 0..LAYOUT_ATTEMPTS {
        let targets = match place_targets(cfg, None, rng) {
            Ok(t) => t,
            Err(Error::Generation(_)) => continue,
            Err(e) => return Err(e),
        };
        let placement = place_obstacles(cfg, &targets, rng);
        let mut map = GridMap::from_parts(cfg.m, targets, placement.obstacles, None, &cfg.value)?;
        map.coverage_shortfall = !placement.reached_coverage;
        return Ok(map);
    }
    Err(Error::Generation(format!(
        "no feasible target layout after {LAYOUT_ATTEMPTS} attempts"
    )))
}

/// Draws `u` distinct start cells uniformly from cells that are neither
/// obstacles nor targets.
pub fn place_drones(map: &GridMap, u: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Coord>> {
    let cells = all_cells(map.side(), |c| map.omega(c) == 0 && !map.is_target(c));
    if cells.len() < u {
        return Err(Error::Generation(format!(
            "only {} free cells for {} drones",
            cells.len(),
            u
        )));
    }
    let idx = index_sample(rng, cells.len(), u);
    Ok(idx.iter().map(|i| cells[i]).collect())
}
