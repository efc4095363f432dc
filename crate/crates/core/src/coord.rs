//! Cell coordinates and the five-move action set.

use serde::{Deserialize, Serialize};

/// Integer cell coordinates on the grid. Valid cells have both components
/// in `[0, M)`; intermediate arithmetic may leave that range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }

    /// Euclidean distance to another cell.
    pub fn dist(&self, other: &Coord) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        (dx * dx + dy * dy).sqrt()
    }

    /// Squared Euclidean distance, exact in integer arithmetic.
    pub fn dist2(&self, other: &Coord) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    /// True if both components lie in `[0, m)`.
    pub fn in_bounds(&self, m: usize) -> bool {
        self.x >= 0 && self.y >= 0 && (self.x as usize) < m && (self.y as usize) < m
    }

    pub fn offset(&self, dx: i32, dy: i32) -> Coord {
        Coord::new(self.x + dx, self.y + dy)
    }
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// One drone move: stay in place or step to a 4-neighbour cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stay,
    North,
    East,
    South,
    West,
}

/// All actions, indexed consistently with the Q-network output order.
pub const ACTIONS: [Action; 5] = [
    Action::Stay,
    Action::North,
    Action::East,
    Action::South,
    Action::West,
];

impl Action {
    /// The `(dx, dy)` cell offset of this move.
    pub const fn delta(&self) -> (i32, i32) {
        match self {
            Action::Stay => (0, 0),
            Action::North => (0, 1),
            Action::East => (1, 0),
            Action::South => (0, -1),
            Action::West => (-1, 0),
        }
    }

    /// Index into [`ACTIONS`] and into Q-value vectors.
    pub const fn index(&self) -> usize {
        match self {
            Action::Stay => 0,
            Action::North => 1,
            Action::East => 2,
            Action::South => 3,
            Action::West => 4,
        }
    }

    pub fn from_index(i: usize) -> Action {
        ACTIONS[i]
    }

    /// Destination cell when applying this move from `from`, ignoring validity.
    pub fn apply(&self, from: Coord) -> Coord {
        let (dx, dy) = self.delta();
        from.offset(dx, dy)
    }
}

/// One action per drone, indexed by agent.
pub type JointAction = Vec<Action>;
