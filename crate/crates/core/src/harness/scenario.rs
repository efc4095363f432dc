//! Scenario configuration: everything one run needs to roll episodes, as a
//! single TOML-serializable struct with CLI-style `key.path=value`
//! overrides, plus the per-episode map factory.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comms::ChannelConfig;
use crate::coord::Coord;
use crate::env::RewardParams;
use crate::episode::SimParams;
use crate::error::Error;
use crate::Result;
use crate::harness::ingest::load_obstacle_grid;
use crate::map::{generate_map, place_drones, place_targets, GridMap, MapGenConfig};

/// One run's full environment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub map: MapGenConfig,
    /// Swarm size.
    pub u: usize,
    /// Observation window side F.
    pub window: usize,
    /// Field-of-view radius.
    pub zeta: f64,
    /// Obstacle weight in observations.
    pub rho: f64,
    pub reward: RewardParams,
    /// Test episode length.
    pub step_limit: u32,
    /// Success requires pairwise-distinct targets when set.
    pub distinct_targets: bool,
    pub channel: ChannelConfig,
    /// Path to a fixed 0/1 obstacle grid; targets and drones are still
    /// placed randomly per episode around it.
    pub obstacle_grid: Option<String>,
    /// Base seed for evaluation runs.
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            map: MapGenConfig::default(),
            u: 2,
            window: 20,
            zeta: 3.0,
            rho: 0.2,
            reward: RewardParams::default(),
            step_limit: 40,
            distinct_targets: true,
            channel: ChannelConfig::default(),
            obstacle_grid: None,
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.channel.validate()?;
        if self.u == 0 {
            return Err(Error::config("swarm size must be positive"));
        }
        if self.window == 0 || self.window > self.map.m {
            return Err(Error::config(format!(
                "window side {} must be in 1..={}",
                self.window, self.map.m
            )));
        }
        if !(self.zeta >= 0.0) {
            return Err(Error::config("field-of-view radius must be non-negative"));
        }
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return Err(Error::config("obstacle value rho must be in [0, 1]"));
        }
        if self.reward.theta < 0.0 || self.reward.psi < 0.0 {
            return Err(Error::config("penalties must be non-negative"));
        }
        if self.step_limit == 0 {
            return Err(Error::config("step limit must be positive"));
        }
        Ok(())
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            zeta: self.zeta,
            window: self.window,
            rho: self.rho,
            reward: self.reward,
        }
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = fs::read_to_string(path)?;
        Scenario::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| Error::config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    /// Loads a scenario (or the default when `path` is `None`) and applies
    /// `key.path=value` overrides, e.g. `map.eta=0.1` or
    /// `channel.mode="lossy"`.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Scenario> {
        let base = match path {
            Some(p) => fs::read_to_string(p)?,
            None => String::new(),
        };
        let mut doc: toml::Value = toml::from_str(&base)
            .map_err(|e| Error::config(format!("scenario: {e}")))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let s: Scenario = doc
            .try_into()
            .map_err(|e| Error::config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

/// Sets one dotted-path key in a TOML document. The value text is parsed as
/// a TOML literal, falling back to a plain string.
fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::config(format!("override {spec:?} has an empty key")));
    }
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override key {key:?} crosses a non-table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::config(format!("override key {key:?} crosses a non-table")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

const FIXED_GRID_ATTEMPTS: usize = 1000;

/// Per-episode map factory: either full generation, or target/drone
/// placement around a fixed obstacle grid.
pub struct MapSource {
    scenario: Scenario,
    fixed_omega: Option<Array2<u8>>,
}

impl MapSource {
    pub fn new(scenario: &Scenario) -> Result<MapSource> {
        scenario.validate()?;
        let fixed_omega = match &scenario.obstacle_grid {
            Some(path) => {
                let omega = load_obstacle_grid(Path::new(path))?;
                let (w, h) = omega.dim();
                if w != h {
                    return Err(Error::config(format!(
                        "obstacle grid is {w}x{h}, maps must be square"
                    )));
                }
                if w != scenario.map.m {
                    return Err(Error::config(format!(
                        "obstacle grid side {w} does not match map side {}",
                        scenario.map.m
                    )));
                }
                Some(omega)
            }
            None => None,
        };
        Ok(MapSource {
            scenario: scenario.clone(),
            fixed_omega,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Builds one episode's map and start positions.
    pub fn make(&self, rng: &mut ChaCha8Rng) -> Result<(GridMap, Vec<Coord>)> {
        let map = match &self.fixed_omega {
            Some(omega) => self.targets_around(omega, rng)?,
            None => generate_map(&self.scenario.map, rng)?,
        };
        let starts = place_drones(&map, self.scenario.u, rng)?;
        Ok((map, starts))
    }

    /// Places targets on a fixed obstacle grid. Targets must keep every
    /// obstacle cell at squared distance > 1, so the forbidden mask is the
    /// grid dilated by its 4-neighborhood.
    fn targets_around(&self, omega: &Array2<u8>, rng: &mut ChaCha8Rng) -> Result<GridMap> {
        let m = self.scenario.map.m;
        let mut forbidden = omega.clone();
        for x in 0..m {
            for y in 0..m {
                if omega[[x, y]] == 0 {
                    continue;
                }
                let c = Coord::new(x as i32, y as i32);
                for (dx, dy) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
                    let n = c.offset(dx, dy);
                    if n.in_bounds(m) {
                        forbidden[[n.x as usize, n.y as usize]] = 1;
                    }
                }
            }
        }
        for _ in 0..FIXED_GRID_ATTEMPTS {
            let targets = match place_targets(&self.scenario.map, Some(&forbidden), rng) {
                Ok(t) => t,
                Err(Error::Generation(_)) => continue,
                Err(e) => return Err(e),
            };
            return GridMap::from_parts(
                m,
                targets,
                vec![],
                Some(omega.clone()),
                &self.scenario.map.value,
            );
        }
        Err(Error::Generation(format!(
            "no feasible target layout on the fixed grid after {FIXED_GRID_ATTEMPTS} attempts"
        )))
    }
}
