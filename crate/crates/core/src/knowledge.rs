//! Per-drone world knowledge: explored-cell estimates, last-known peer
//! positions, broadcast deltas, and the observation windows fed to the
//! network.

use std::io::Write;

use ndarray::{Array2, Array3};

use crate::coord::Coord;
use crate::error::Error;
use crate::map::GridMap;
use crate::Result;

/// Optimistic prior on unexplored cells: full value, no obstacle.
pub const PRIOR_PHI: f64 = 1.0;

/// A drone's accumulated picture of the world. Estimates default to the
/// optimistic prior and are overwritten exactly once, when a cell is first
/// explored; ground truth is deterministic so repeated observations agree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeState {
    m: usize,
    u: usize,
    phi_hat: Array2<f64>,
    omega_hat: Array2<u8>,
    explored: Array2<u8>,
    /// Last known position and the step it was sensed at, per drone.
    /// `None` until the first direct observation or received broadcast.
    known: Vec<Option<KnownPosition>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownPosition {
    pub pos: Coord,
    pub step: u32,
}

/// One explored cell as carried in a broadcast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub cell: Coord,
    pub phi: f64,
    pub omega: u8,
}

/// What a drone broadcasts after sensing: the cells it newly explored this
/// step plus its own position.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeDelta {
    pub sender: usize,
    pub sender_pos: Coord,
    pub step: u32,
    pub cells: Vec<CellRecord>,
}

impl KnowledgeState {
    pub fn new(m: usize, u: usize) -> Self {
        KnowledgeState {
            m,
            u,
            phi_hat: Array2::from_elem((m, m), PRIOR_PHI),
            omega_hat: Array2::zeros((m, m)),
            explored: Array2::zeros((m, m)),
            known: vec![None; u],
        }
    }

    pub fn side(&self) -> usize {
        self.m
    }

    pub fn swarm_size(&self) -> usize {
        self.u
    }

    pub fn phi_hat(&self, c: Coord) -> f64 {
        self.phi_hat[[c.x as usize, c.y as usize]]
    }

    pub fn omega_hat(&self, c: Coord) -> u8 {
        self.omega_hat[[c.x as usize, c.y as usize]]
    }

    pub fn is_explored(&self, c: Coord) -> bool {
        self.explored[[c.x as usize, c.y as usize]] != 0
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|&&v| v != 0).count()
    }

    pub fn known_position(&self, v: usize) -> Option<KnownPosition> {
        self.known[v]
    }

    /// A move looks valid under current knowledge when the destination is in
    /// bounds and not a known obstacle.
    pub fn believes_free(&self, c: Coord) -> bool {
        c.in_bounds(self.m) && self.omega_hat(c) == 0
    }

    /// Senses every cell within Euclidean distance `zeta` of `pos` (boundary
    /// inclusive), records the drone's own position, and returns the delta
    /// this drone would broadcast.
    pub fn sense(&mut self, agent: usize, pos: Coord, step: u32, map: &GridMap, zeta: f64) -> KnowledgeDelta {
        let mut cells = Vec::new();
        let reach = zeta.floor() as i32;
        let z2 = zeta * zeta;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if (dx * dx + dy * dy) as f64 > z2 {
                    continue;
                }
                let c = pos.offset(dx, dy);
                if !c.in_bounds(self.m) {
                    continue;
                }
                let (x, y) = (c.x as usize, c.y as usize);
                if self.explored[[x, y]] != 0 {
                    continue;
                }
                let rec = CellRecord {
                    cell: c,
                    phi: map.phi(c),
                    omega: map.omega(c),
                };
                self.explored[[x, y]] = 1;
                self.phi_hat[[x, y]] = rec.phi;
                self.omega_hat[[x, y]] = rec.omega;
                cells.push(rec);
            }
        }
        self.note_position(agent, pos, step);
        KnowledgeDelta {
            sender: agent,
            sender_pos: pos,
            step,
            cells,
        }
    }

    /// Folds a received delta in. Newly reported cells become explored; cells
    /// already explored are left alone (ground truth is shared, so the
    /// values agree). Merging is idempotent, and deltas from one step can be
    /// merged in any order.
    pub fn merge(&mut self, delta: &KnowledgeDelta) {
        for rec in &delta.cells {
            let (x, y) = (rec.cell.x as usize, rec.cell.y as usize);
            if self.explored[[x, y]] != 0 {
                continue;
            }
            self.explored[[x, y]] = 1;
            self.phi_hat[[x, y]] = rec.phi;
            self.omega_hat[[x, y]] = rec.omega;
        }
        self.note_position(delta.sender, delta.sender_pos, delta.step);
    }

    fn note_position(&mut self, v: usize, pos: Coord, step: u32) {
        let fresher = match self.known[v] {
            Some(k) => step >= k.step,
            None => true,
        };
        if fresher {
            self.known[v] = Some(KnownPosition { pos, step });
        }
    }

    /// Builds drone `agent`'s observation: an `f x f` window clamped inside
    /// the map and centred on the drone when possible.
    pub fn observe(&self, agent: usize, pos: Coord, f: usize, rho: f64) -> Result<Observation> {
        if f > self.m {
            return Err(Error::domain(format!(
                "window side {f} exceeds map side {}",
                self.m
            )));
        }
        let half = (f / 2) as i32;
        let max_origin = (self.m - f) as i32;
        let ox = (pos.x - half).clamp(0, max_origin);
        let oy = (pos.y - half).clamp(0, max_origin);
        let origin = Coord::new(ox, oy);

        let sx = (pos.x - ox) as u16;
        let sy = (pos.y - oy) as u16;

        let mut others = Vec::new();
        for v in 0..self.u {
            if v == agent {
                continue;
            }
            if let Some(k) = self.known[v] {
                let wx = k.pos.x - ox;
                let wy = k.pos.y - oy;
                if (0..f as i32).contains(&wx) && (0..f as i32).contains(&wy) {
                    others.push((wx as u16, wy as u16));
                }
            }
        }

        let mut combined = vec![0f32; f * f];
        for wy in 0..f {
            for wx in 0..f {
                let c = Coord::new(ox + wx as i32, oy + wy as i32);
                let v = self.phi_hat(c) - rho * self.omega_hat(c) as f64;
                combined[wy * f + wx] = v as f32;
            }
        }

        Ok(Observation {
            f: f as u16,
            origin,
            self_cell: (sx, sy),
            others,
            combined,
        })
    }
}

/// A single drone observation in compact form: the window origin, the
/// drone's own window cell, peers' last-known window cells, and the combined
/// value-minus-obstacle plane. Expands to a `3 x f x f` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    f: u16,
    origin: Coord,
    self_cell: (u16, u16),
    others: Vec<(u16, u16)>,
    combined: Vec<f32>,
}

impl Observation {
    pub fn window_side(&self) -> usize {
        self.f as usize
    }

    pub fn window_origin(&self) -> Coord {
        self.origin
    }

    pub fn self_cell(&self) -> (usize, usize) {
        (self.self_cell.0 as usize, self.self_cell.1 as usize)
    }

    pub fn approx_bytes(&self) -> usize {
        std::mem::size_of::<Self>() + self.others.len() * 4 + self.combined.len() * 4
    }

    /// Channel 0: own position one-hot. Channel 1: peers' last-known
    /// positions. Channel 2: estimated value minus weighted obstacle plane.
    /// Layout is `[channel, y, x]` in window coordinates.
    pub fn to_tensor(&self) -> Array3<f32> {
        let f = self.f as usize;
        let mut t = Array3::zeros((3, f, f));
        t[[0, self.self_cell.1 as usize, self.self_cell.0 as usize]] = 1.0;
        for &(wx, wy) in &self.others {
            t[[1, wy as usize, wx as usize]] = 1.0;
        }
        for wy in 0..f {
            for wx in 0..f {
                t[[2, wy, wx]] = self.combined[wy * f + wx];
            }
        }
        t
    }

    /// Writes `episode step agent` followed by the tensor in channel-major
    /// order, one observation per line.
    pub fn write_record<W: Write>(
        &self,
        w: &mut W,
        episode: u64,
        step: u32,
        agent: usize,
    ) -> std::io::Result<()> {
        write!(w, "{episode} {step} {agent}")?;
        for v in self.to_tensor().iter() {
            write!(w, " {v}")?;
        }
        writeln!(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{GridMap, Obstacle, ValueModel};

    fn map10() -> GridMap {
        GridMap::from_parts(
            10,
            vec![Coord::new(7, 7)],
            vec![Obstacle::new(Coord::new(2, 2), (2, 2))],
            None,
            &ValueModel::default(),
        )
        .unwrap()
    }

    #[test]
    fn fresh_state_is_optimistic() {
        let k = KnowledgeState::new(10, 2);
        for x in 0..10 {
            for y in 0..10 {
                let c = Coord::new(x, y);
                assert_eq!(k.phi_hat(c), 1.0);
                assert_eq!(k.omega_hat(c), 0);
                assert!(!k.is_explored(c));
            }
        }
        assert_eq!(k.known_position(0), None);
        assert_eq!(k.known_position(1), None);
    }

    #[test]
    fn sense_radius_three_covers_29_cells() {
        let map = GridMap::from_parts(
            20,
            vec![Coord::new(15, 15)],
            vec![],
            None,
            &ValueModel::default(),
        )
        .unwrap();
        let mut k = KnowledgeState::new(20, 1);
        let delta = k.sense(0, Coord::new(10, 10), 0, &map, 3.0);
        assert_eq!(delta.cells.len(), 29);
        assert_eq!(k.explored_count(), 29);
        // boundary inclusive: (3, 0) offset is exactly distance 3
        assert!(k.is_explored(Coord::new(13, 10)));
        // (2, 2) has distance sqrt(8) < 3
        assert!(k.is_explored(Coord::new(12, 12)));
        // (3, 1) has distance sqrt(10) > 3
        assert!(!k.is_explored(Coord::new(13, 11)));
    }

    #[test]
    fn sense_clips_at_map_edge() {
        let map = map10();
        let mut k = KnowledgeState::new(10, 1);
        let delta = k.sense(0, Coord::new(0, 0), 0, &map, 3.0);
        // quarter disc: centre + two half-axes of 3 + the (1..2, 1..2)
        // quadrant block of 4 = 11 cells
        assert_eq!(delta.cells.len(), 11);
    }

    #[test]
    fn sensing_twice_adds_nothing() {
        let map = map10();
        let mut k = KnowledgeState::new(10, 1);
        let first = k.sense(0, Coord::new(5, 5), 0, &map, 3.0);
        assert!(!first.cells.is_empty());
        let again = k.sense(0, Coord::new(5, 5), 1, &map, 3.0);
        assert!(again.cells.is_empty());
        let nudged = k.sense(0, Coord::new(6, 5), 2, &map, 3.0);
        // only the leading crescent is new: within reach of (6,5), beyond
        // reach of (5,5)
        assert!(!nudged.cells.is_empty());
        for r in &nudged.cells {
            assert!(r.cell.dist2(&Coord::new(6, 5)) <= 9);
            assert!(r.cell.dist2(&Coord::new(5, 5)) > 9);
        }
    }

    #[test]
    fn sensed_values_match_ground_truth() {
        let map = map10();
        let mut k = KnowledgeState::new(10, 1);
        k.sense(0, Coord::new(3, 3), 0, &map, 3.0);
        assert_eq!(k.omega_hat(Coord::new(2, 2)), 1);
        assert_eq!(k.omega_hat(Coord::new(3, 2)), 1);
        assert_eq!(k.phi_hat(Coord::new(5, 5)), map.phi(Coord::new(5, 5)));
        // unexplored cells keep the prior
        assert_eq!(k.phi_hat(Coord::new(9, 0)), 1.0);
    }

    #[test]
    fn merge_is_idempotent_and_order_independent() {
        let map = map10();
        let mut a = KnowledgeState::new(10, 3);
        let mut b = KnowledgeState::new(10, 3);
        let d1 = a.sense(0, Coord::new(1, 1), 0, &map, 2.0);
        let d2 = a.sense(0, Coord::new(8, 8), 1, &map, 2.0);

        let mut one = b.clone();
        one.merge(&d1);
        one.merge(&d2);
        one.merge(&d1);
        let mut two = b.clone();
        two.merge(&d2);
        two.merge(&d1);
        assert_eq!(one, two);

        b.merge(&d1);
        let snapshot = b.clone();
        b.merge(&d1);
        assert_eq!(b, snapshot);
    }

    #[test]
    fn merge_keeps_freshest_position() {
        let map = map10();
        let mut sender = KnowledgeState::new(10, 2);
        let d0 = sender.sense(1, Coord::new(4, 4), 0, &map, 1.0);
        let d1 = sender.sense(1, Coord::new(5, 4), 1, &map, 1.0);

        let mut k = KnowledgeState::new(10, 2);
        k.merge(&d1);
        k.merge(&d0);
        let kp = k.known_position(1).unwrap();
        assert_eq!(kp.pos, Coord::new(5, 4));
        assert_eq!(kp.step, 1);
    }

    #[test]
    fn unheard_peers_stay_unknown() {
        let map = map10();
        let mut k = KnowledgeState::new(10, 3);
        k.sense(0, Coord::new(5, 5), 0, &map, 2.0);
        assert!(k.known_position(1).is_none());
        assert!(k.known_position(2).is_none());
        let obs = k.observe(0, Coord::new(5, 5), 4, 0.2).unwrap();
        let t = obs.to_tensor();
        let peer_plane_sum: f32 = t.index_axis(ndarray::Axis(0), 1).iter().sum();
        assert_eq!(peer_plane_sum, 0.0);
    }

    #[test]
    fn window_clamps_to_map_edges() {
        let k = KnowledgeState::new(10, 1);
        // interior: window centred, origin = pos - f/2
        let obs = k.observe(0, Coord::new(5, 5), 4, 0.2).unwrap();
        assert_eq!(obs.window_origin(), Coord::new(3, 3));
        assert_eq!(obs.self_cell(), (2, 2));
        // corner: origin clamps to 0
        let obs = k.observe(0, Coord::new(0, 1), 4, 0.2).unwrap();
        assert_eq!(obs.window_origin(), Coord::new(0, 0));
        assert_eq!(obs.self_cell(), (0, 1));
        // far corner: origin clamps to m - f
        let obs = k.observe(0, Coord::new(9, 9), 4, 0.2).unwrap();
        assert_eq!(obs.window_origin(), Coord::new(6, 6));
        assert_eq!(obs.self_cell(), (3, 3));
        // window as large as the map: origin always 0
        let obs = k.observe(0, Coord::new(9, 9), 10, 0.2).unwrap();
        assert_eq!(obs.window_origin(), Coord::new(0, 0));
    }

    #[test]
    fn oversized_window_is_domain_error() {
        let k = KnowledgeState::new(10, 1);
        assert!(k.observe(0, Coord::new(0, 0), 11, 0.2).is_err());
    }

    #[test]
    fn tensor_planes_encode_the_window() {
        let map = map10();
        let mut k = KnowledgeState::new(10, 2);
        k.sense(0, Coord::new(3, 3), 0, &map, 3.0);
        let d = k.sense(1, Coord::new(8, 8), 0, &map, 1.0);
        k.merge(&d);
        let obs = k.observe(0, Coord::new(3, 3), 10, 0.2).unwrap();
        let t = obs.to_tensor();
        assert_eq!(t.dim(), (3, 10, 10));
        // channel 0: exactly one cell set, at the drone
        assert_eq!(t[[0, 3, 3]], 1.0);
        assert_eq!(t.index_axis(ndarray::Axis(0), 0).sum(), 1.0);
        // channel 1: peer at (8, 8)
        assert_eq!(t[[1, 8, 8]], 1.0);
        assert_eq!(t.index_axis(ndarray::Axis(0), 1).sum(), 1.0);
        // channel 2: explored obstacle cell reads phi - rho, unexplored
        // cells read the prior 1.0
        let expect = (map.phi(Coord::new(2, 2)) - 0.2) as f32;
        assert_eq!(t[[2, 2, 2]], expect);
        assert_eq!(t[[2, 9, 0]], 1.0);
        // bounds: all combined values in [-rho, 1]
        for v in t.index_axis(ndarray::Axis(0), 2).iter() {
            assert!(*v >= -0.2 && *v <= 1.0);
        }
    }

    #[test]
    fn stale_peer_position_is_held() {
        let map = map10();
        let mut peer = KnowledgeState::new(10, 2);
        let d = peer.sense(1, Coord::new(8, 8), 3, &map, 1.0);
        let mut k = KnowledgeState::new(10, 2);
        k.merge(&d);
        // later steps bring no news from the peer; the old cell persists
        let obs = k.observe(0, Coord::new(3, 3), 10, 0.2).unwrap();
        assert_eq!(obs.to_tensor()[[1, 8, 8]], 1.0);
        assert_eq!(k.known_position(1).unwrap().step, 3);
    }

    #[test]
    fn record_line_has_header_and_tensor() {
        let k = KnowledgeState::new(6, 1);
        let obs = k.observe(0, Coord::new(2, 2), 4, 0.2).unwrap();
        let mut buf = Vec::new();
        obs.write_record(&mut buf, 12, 7, 0).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 3 + 3 * 16);
        assert_eq!(&fields[..3], &["12", "7", "0"]);
    }
}
