//! Ground-truth world maps: targets, the cell-value field, and obstacles.

mod file;
mod generate;

pub use file::MapFile;
pub use generate::{
    generate_map, place_drones, place_obstacles, place_targets, MapGenConfig, ObstaclePlacement,
    TargetMode,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::coord::Coord;
use crate::error::Error;
use crate::Result;

/// Cell values smaller than this are snapped to zero: the targets cannot be
/// seen from that far away.
pub const VALUE_CUTOFF: f64 = 0.01;

/// How the per-target Gaussian exponent is evaluated.
///
/// The quadratic form is written with the covariance matrix itself, so the
/// exponent is `-sigma2 * d^2 / 2`. The two readings coincide at
/// `sigma2 = 1`; `inverse = true` selects `-d^2 / (2 * sigma2)` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub sigma2: f64,
    pub inverse: bool,
}

impl Default for ValueModel {
    fn default() -> Self {
        ValueModel {
            sigma2: 1.0,
            inverse: false,
        }
    }
}

impl ValueModel {
    pub fn new(sigma2: f64, inverse: bool) -> Self {
        ValueModel { sigma2, inverse }
    }

    /// Raw Gaussian value at squared distance `d2` from a target, before the
    /// cutoff is applied.
    fn gaussian(&self, d2: f64) -> f64 {
        let scale = if self.inverse {
            1.0 / self.sigma2
        } else {
            self.sigma2
        };
        (-0.5 * scale * d2).exp()
    }
}

/// Cell value: the maximum over the per-target Gaussians, normalized to 1 at
/// the target cells, with values below [`VALUE_CUTOFF`] snapped to 0.
pub fn compute_cell_value(m: Coord, targets: &[Coord], value: &ValueModel) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::domain("compute_cell_value: empty target list"));
    }
    if value.sigma2 <= 0.0 {
        return Err(Error::domain("compute_cell_value: sigma2 must be positive"));
    }
    let best = targets
        .iter()
        .map(|z| value.gaussian(m.dist2(z) as f64))
        .fold(0.0_f64, f64::max);
    Ok(if best < VALUE_CUTOFF { 0.0 } else { best })
}

/// An axis-aligned rectangular obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obstacle {
    pub lower_left: Coord,
    /// Cell extents along x and y.
    pub dims: (u32, u32),
}

impl Obstacle {
    pub fn new(lower_left: Coord, dims: (u32, u32)) -> Self {
        Obstacle { lower_left, dims }
    }

    pub fn cell_count(&self) -> u64 {
        self.dims.0 as u64 * self.dims.1 as u64
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x >= self.lower_left.x
            && c.x < self.lower_left.x + self.dims.0 as i32
            && c.y >= self.lower_left.y
            && c.y < self.lower_left.y + self.dims.1 as i32
    }

    /// True if the whole rectangle lies inside an `m`-cell map.
    pub fn in_bounds(&self, m: usize) -> bool {
        self.lower_left.x >= 0
            && self.lower_left.y >= 0
            && self.lower_left.x + self.dims.0 as i32 <= m as i32
            && self.lower_left.y + self.dims.1 as i32 <= m as i32
    }

    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        let (lx, ly) = (self.lower_left.x, self.lower_left.y);
        let (hx, hy) = (self.dims.0 as i32, self.dims.1 as i32);
        (lx..lx + hx).flat_map(move |x| (ly..ly + hy).map(move |y| Coord::new(x, y)))
    }

    /// Squared Euclidean distance from a point to the nearest member cell.
    pub fn dist2_to_point(&self, p: Coord) -> i64 {
        let dx = axis_gap(p.x, self.lower_left.x, self.dims.0 as i32);
        let dy = axis_gap(p.y, self.lower_left.y, self.dims.1 as i32);
        (dx as i64) * (dx as i64) + (dy as i64) * (dy as i64)
    }

    /// Squared minimum Euclidean distance between member cells of two
    /// obstacles. Exact for axis-aligned rectangles.
    pub fn dist2_to_obstacle(&self, other: &Obstacle) -> i64 {
        let dx = rect_gap(
            self.lower_left.x,
            self.dims.0 as i32,
            other.lower_left.x,
            other.dims.0 as i32,
        );
        let dy = rect_gap(
            self.lower_left.y,
            self.dims.1 as i32,
            other.lower_left.y,
            other.dims.1 as i32,
        );
        (dx as i64) * (dx as i64) + (dy as i64) * (dy as i64)
    }
}

fn axis_gap(p: i32, lo: i32, len: i32) -> i32 {
    // distance from p to the interval [lo, lo + len - 1]
    (lo - p).max(p - (lo + len - 1)).max(0)
}

fn rect_gap(a_lo: i32, a_len: i32, b_lo: i32, b_len: i32) -> i32 {
    (b_lo - (a_lo + a_len - 1)).max(a_lo - (b_lo + b_len - 1)).max(0)
}

/// The ground-truth world: immutable after generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    m: usize,
    targets: Vec<Coord>,
    phi: Array2<f64>,
    omega: Array2<u8>,
    obstacles: Vec<Obstacle>,
    /// Set when obstacle generation stopped short of the requested coverage.
    pub coverage_shortfall: bool,
}

impl GridMap {
    /// Builds the value and obstacle fields from parts and checks the map
    /// invariants. `omega_override` supplies an explicit obstacle grid for
    /// maps whose obstacles are not rectangle lists (ingested real maps).
    pub fn from_parts(
        m: usize,
        targets: Vec<Coord>,
        obstacles: Vec<Obstacle>,
        omega_override: Option<Array2<u8>>,
        value: &ValueModel,
    ) -> Result<GridMap> {
        if m == 0 {
            return Err(Error::domain("map side must be positive"));
        }
        let omega = match omega_override {
            Some(grid) => {
                if grid.dim() != (m, m) {
                    return Err(Error::domain("omega grid shape does not match map side"));
                }
                if !obstacles.is_empty() {
                    let derived = omega_from_obstacles(m, &obstacles);
                    if derived != grid {
                        return Err(Error::domain(
                            "explicit omega grid disagrees with obstacle records",
                        ));
                    }
                }
                grid
            }
            None => omega_from_obstacles(m, &obstacles),
        };
        let mut phi = Array2::zeros((m, m));
        if !targets.is_empty() {
            for x in 0..m {
                for y in 0..m {
                    phi[[x, y]] =
                        compute_cell_value(Coord::new(x as i32, y as i32), &targets, value)?;
                }
            }
        }
        let map = GridMap {
            m,
            targets,
            phi,
            omega,
            obstacles,
            coverage_shortfall: false,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn side(&self) -> usize {
        self.m
    }

    pub fn targets(&self) -> &[Coord] {
        &self.targets
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn phi(&self, c: Coord) -> f64 {
        self.phi[[c.x as usize, c.y as usize]]
    }

    pub fn omega(&self, c: Coord) -> u8 {
        self.omega[[c.x as usize, c.y as usize]]
    }

    pub fn omega_grid(&self) -> &Array2<u8> {
        &self.omega
    }

    pub fn is_target(&self, c: Coord) -> bool {
        self.targets.contains(&c)
    }

    /// Fraction of cells occupied by obstacles.
    pub fn obstacle_fraction(&self) -> f64 {
        let occupied: u64 = self.omega.iter().map(|&v| v as u64).sum();
        occupied as f64 / (self.m * self.m) as f64
    }

    /// Checks every structural invariant of the map.
    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        for z in &self.targets {
            if !z.in_bounds(m) {
                return Err(Error::domain(format!("target {z} outside map")));
            }
            if (self.phi(*z) - 1.0).abs() > 0.0 {
                return Err(Error::domain(format!("phi({z}) != 1 at a target")));
            }
            if self.omega(*z) != 0 {
                return Err(Error::domain(format!("target {z} on an obstacle cell")));
            }
        }
        for v in self.phi.iter() {
            if *v != 0.0 && *v < VALUE_CUTOFF {
                return Err(Error::domain("phi value below cutoff was not zeroed"));
            }
            if !(0.0..=1.0).contains(v) {
                return Err(Error::domain("phi value outside [0, 1]"));
            }
        }
        if !self.obstacles.is_empty() {
            let derived = omega_from_obstacles(m, &self.obstacles);
            if derived != self.omega {
                return Err(Error::domain("omega grid disagrees with obstacle records"));
            }
            for o in &self.obstacles {
                if !o.in_bounds(m) {
                    return Err(Error::domain("obstacle extends outside the map"));
                }
            }
            for (i, a) in self.obstacles.iter().enumerate() {
                for b in self.obstacles.iter().skip(i + 1) {
                    if a.dist2_to_obstacle(b) < 4 {
                        return Err(Error::domain("obstacle pair closer than distance 2"));
                    }
                }
            }
        }
        // No obstacle cell within Euclidean distance 1 of a target.
        for z in &self.targets {
            for o in &self.obstacles {
                if o.dist2_to_point(*z) <= 1 {
                    return Err(Error::domain(format!(
                        "obstacle within distance 1 of target {z}"
                    )));
                }
            }
            if self.obstacles.is_empty() {
                // Explicit-grid maps: check the 4-neighbourhood directly.
                for (dx, dy) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
                    let n = z.offset(dx, dy);
                    if n.in_bounds(m) && self.omega(n) != 0 {
                        return Err(Error::domain(format!(
                            "obstacle cell adjacent to target {z}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn omega_from_obstacles(m: usize, obstacles: &[Obstacle]) -> Array2<u8> {
    let mut omega = Array2::zeros((m, m));
    for o in obstacles {
        for c in o.cells() {
            omega[[c.x as usize, c.y as usize]] = 1;
        }
    }
    omega
}
