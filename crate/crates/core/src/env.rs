//! Swarm dynamics on a grid map: move validity, synchronous stepping,
//! collisions, and the per-drone reward.

use serde::{Deserialize, Serialize};

use crate::coord::{Action, Coord};
use crate::map::GridMap;

/// Reward weights: `theta` scales the invalid-move penalty, `psi` the
/// collision penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub theta: f64,
    pub psi: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            theta: 1.0,
            psi: 0.8,
        }
    }
}

impl RewardParams {
    /// Tightest bounds any reward can take: one target bonus at most, both
    /// penalties at worst.
    pub fn bounds(&self) -> (f64, f64) {
        (-self.theta - self.psi, 1.0)
    }
}

/// Positions of all drones plus the step counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwarmState {
    pub positions: Vec<Coord>,
    pub step_index: u32,
}

impl SwarmState {
    pub fn new(positions: Vec<Coord>) -> Self {
        SwarmState {
            positions,
            step_index: 0,
        }
    }

    pub fn u(&self) -> usize {
        self.positions.len()
    }
}

/// A move is valid when the destination lies inside the map and is not an
/// obstacle cell. Staying put is always valid (start cells are never
/// obstacles).
pub fn is_valid_move(x: Coord, a: Action, map: &GridMap) -> bool {
    let dest = a.apply(x);
    dest.in_bounds(map.side()) && map.omega(dest) == 0
}

/// Where a drone ends up: the destination if the move is valid, otherwise it
/// holds position.
pub fn resolved_destination(x: Coord, a: Action, map: &GridMap) -> Coord {
    if is_valid_move(x, a, map) {
        a.apply(x)
    } else {
        x
    }
}

/// True when some other drone's resolved end cell equals drone `u`'s.
/// Two drones swapping cells pass through each other without colliding.
pub fn collision_indicator(positions: &[Coord], actions: &[Action], u: usize, map: &GridMap) -> bool {
    let mine = resolved_destination(positions[u], actions[u], map);
    positions.iter().zip(actions).enumerate().any(|(v, (&x, &a))| {
        v != u && resolved_destination(x, a, map) == mine
    })
}

/// Per-drone reward for a joint action taken from `positions`:
/// `-theta` when the drone's own move is invalid, `-psi` when it ends the
/// step co-located with another drone, and `+1` when it ends the step on a
/// target without colliding.
pub fn compute_reward(
    positions: &[Coord],
    actions: &[Action],
    u: usize,
    map: &GridMap,
    params: &RewardParams,
) -> f64 {
    debug_assert_eq!(positions.len(), actions.len());
    let valid = is_valid_move(positions[u], actions[u], map);
    let chi = collision_indicator(positions, actions, u, map);
    let post = resolved_destination(positions[u], actions[u], map);
    let on_targets = map.targets().iter().filter(|z| **z == post).count() as f64;
    let mut r = 0.0;
    if !valid {
        r -= params.theta;
    }
    if chi {
        r -= params.psi;
    } else {
        r += on_targets;
    }
    r
}

/// Advances the swarm one synchronous step: every drone applies its action
/// under the hold-position rule. Panics in debug builds if the action list
/// length disagrees with the swarm size.
pub fn step(state: &SwarmState, actions: &[Action], map: &GridMap) -> SwarmState {
    debug_assert_eq!(state.positions.len(), actions.len());
    let positions = state
        .positions
        .iter()
        .zip(actions)
        .map(|(&x, &a)| resolved_destination(x, a, map))
        .collect();
    SwarmState {
        positions,
        step_index: state.step_index + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{GridMap, Obstacle, ValueModel};

    fn test_map() -> GridMap {
        // 6x6, target at (4, 4), obstacle cell at (2, 2)
        GridMap::from_parts(
            6,
            vec![Coord::new(4, 4)],
            vec![Obstacle::new(Coord::new(2, 2), (1, 1))],
            None,
            &ValueModel::default(),
        )
        .unwrap()
    }

    #[test]
    fn moves_off_the_map_are_invalid() {
        let map = test_map();
        assert!(!is_valid_move(Coord::new(0, 0), Action::West, &map));
        assert!(!is_valid_move(Coord::new(0, 0), Action::South, &map));
        assert!(is_valid_move(Coord::new(0, 0), Action::North, &map));
        assert!(is_valid_move(Coord::new(0, 0), Action::East, &map));
    }

    #[test]
    fn moves_into_obstacles_are_invalid() {
        let map = test_map();
        assert!(!is_valid_move(Coord::new(1, 2), Action::East, &map));
        assert!(!is_valid_move(Coord::new(2, 1), Action::North, &map));
        assert!(is_valid_move(Coord::new(1, 2), Action::North, &map));
    }

    #[test]
    fn invalid_moves_hold_position() {
        let map = test_map();
        let state = SwarmState::new(vec![Coord::new(0, 0), Coord::new(1, 2)]);
        let next = step(&state, &[Action::West, Action::East], &map);
        assert_eq!(next.positions, vec![Coord::new(0, 0), Coord::new(1, 2)]);
        assert_eq!(next.step_index, 1);
    }

    #[test]
    fn collision_when_end_cells_coincide() {
        let map = test_map();
        // both drones move onto (1, 1)
        let pos = [Coord::new(0, 1), Coord::new(1, 0)];
        let act = [Action::East, Action::North];
        assert!(collision_indicator(&pos, &act, 0, &map));
        assert!(collision_indicator(&pos, &act, 1, &map));
    }

    #[test]
    fn swap_is_not_a_collision() {
        let map = test_map();
        let pos = [Coord::new(0, 0), Coord::new(1, 0)];
        let act = [Action::East, Action::West];
        assert!(!collision_indicator(&pos, &act, 0, &map));
        assert!(!collision_indicator(&pos, &act, 1, &map));
    }

    #[test]
    fn held_drone_can_cause_collision() {
        let map = test_map();
        // drone 1 tries to leave the map, holds at (5, 0); drone 0 moves in
        let pos = [Coord::new(4, 0), Coord::new(5, 0)];
        let act = [Action::East, Action::East];
        assert!(collision_indicator(&pos, &act, 0, &map));
        assert!(collision_indicator(&pos, &act, 1, &map));
    }

    #[test]
    fn reward_on_target_alone() {
        let map = test_map();
        let params = RewardParams::default();
        let pos = [Coord::new(3, 4), Coord::new(0, 0)];
        let act = [Action::East, Action::Stay];
        assert_eq!(compute_reward(&pos, &act, 0, &map, &params), 1.0);
        assert_eq!(compute_reward(&pos, &act, 1, &map, &params), 0.0);
    }

    #[test]
    fn reward_invalid_move() {
        let map = test_map();
        let params = RewardParams::default();
        let pos = [Coord::new(0, 0), Coord::new(5, 5)];
        let act = [Action::West, Action::Stay];
        assert_eq!(compute_reward(&pos, &act, 0, &map, &params), -1.0);
    }

    #[test]
    fn collision_cancels_target_bonus() {
        let map = test_map();
        let params = RewardParams::default();
        // both drones end on the target cell (4, 4)
        let pos = [Coord::new(3, 4), Coord::new(4, 3)];
        let act = [Action::East, Action::North];
        let r = compute_reward(&pos, &act, 0, &map, &params);
        assert_eq!(r, -0.8);
    }

    #[test]
    fn invalid_move_plus_collision_stacks_penalties() {
        let map = test_map();
        let params = RewardParams::default();
        // drone 0 bounces off the wall and stays at (5, 5); drone 1 moves in
        let pos = [Coord::new(5, 5), Coord::new(4, 5)];
        let act = [Action::East, Action::East];
        let r = compute_reward(&pos, &act, 0, &map, &params);
        assert_eq!(r, -1.8);
    }

    #[test]
    fn bounce_back_onto_target_still_scores() {
        // a drone on a corner target that pushes into the wall holds on the
        // target: the penalty and the bonus both apply
        let map = GridMap::from_parts(
            6,
            vec![Coord::new(5, 5)],
            vec![],
            None,
            &ValueModel::default(),
        )
        .unwrap();
        let params = RewardParams::default();
        let pos = [Coord::new(5, 5), Coord::new(0, 0)];
        let act = [Action::East, Action::Stay];
        assert_eq!(compute_reward(&pos, &act, 0, &map, &params), 0.0);
    }

    #[test]
    fn reward_stays_in_bounds() {
        let map = test_map();
        let params = RewardParams::default();
        let (lo, hi) = params.bounds();
        let cells = [
            Coord::new(0, 0),
            Coord::new(4, 4),
            Coord::new(5, 5),
            Coord::new(1, 2),
        ];
        for &p0 in &cells {
            for &p1 in &cells {
                if p0 == p1 {
                    continue;
                }
                for a0 in crate::coord::ACTIONS {
                    for a1 in crate::coord::ACTIONS {
                        let r = compute_reward(&[p0, p1], &[a0, a1], 0, &map, &params);
                        assert!(r >= lo && r <= hi, "r={r} outside [{lo}, {hi}]");
                    }
                }
            }
        }
    }
}
