//! One episode of the swarm simulation: the sense/share/decide/move loop
//! shared by the training loop and the evaluation harness.
//!
//! Step structure: at episode start every drone senses its surroundings and
//! the swarm runs one broadcast round, so each drone begins with whatever
//! part of the swarm's combined field of view the channel let through. Every
//! subsequent step is decide -> move -> sense -> broadcast. Observations for
//! the next decision are built after the post-move broadcast, so knowledge
//! used at step t+1 reflects everything shared up to and including step t.

use rand_chacha::ChaCha8Rng;

use crate::comms::{broadcast_round, ChannelConfig, ChannelRealization, DeliveryMatrix};
use crate::coord::{Action, Coord};
use crate::env::{compute_reward, step, RewardParams, SwarmState};
use crate::Result;
use crate::knowledge::{KnowledgeState, Observation};
use crate::map::GridMap;

/// The per-scenario knobs the rollout needs besides the map itself.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// Field-of-view radius in cells.
    pub zeta: f64,
    /// Observation window side.
    pub window: usize,
    /// Obstacle weight in observations.
    pub rho: f64,
    pub reward: RewardParams,
}

/// A running episode: swarm positions plus one knowledge state per drone.
pub struct Episode<'m> {
    map: &'m GridMap,
    params: SimParams,
    channel: ChannelConfig,
    realization: ChannelRealization,
    state: SwarmState,
    knowledge: Vec<KnowledgeState>,
}

impl<'m> Episode<'m> {
    /// Starts an episode: fresh optimistic knowledge, one shadowing
    /// realization for the whole episode, then the initial sense/broadcast
    /// round. `rng` drives the channel for this and all later rounds.
    pub fn start(
        map: &'m GridMap,
        starts: Vec<Coord>,
        params: SimParams,
        channel: ChannelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Episode<'m>> {
        channel.validate()?;
        let u = starts.len();
        let realization = ChannelRealization::sample(&channel, u, rng);
        let knowledge = vec![KnowledgeState::new(map.side(), u); u];
        let mut ep = Episode {
            map,
            params,
            channel,
            realization,
            state: SwarmState::new(starts),
            knowledge,
        };
        ep.sync(rng)?;
        Ok(ep)
    }

    pub fn map(&self) -> &GridMap {
        self.map
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn positions(&self) -> &[Coord] {
        &self.state.positions
    }

    pub fn swarm_size(&self) -> usize {
        self.state.u()
    }

    /// Number of moves applied so far.
    pub fn step_index(&self) -> u32 {
        self.state.step_index
    }

    pub fn knowledge(&self, u: usize) -> &KnowledgeState {
        &self.knowledge[u]
    }

    /// Drone `u`'s current observation window.
    pub fn observe(&self, u: usize) -> Result<Observation> {
        self.knowledge[u].observe(
            u,
            self.state.positions[u],
            self.params.window,
            self.params.rho,
        )
    }

    /// Applies one joint action: returns the per-drone rewards and moves the
    /// swarm. Call [`Episode::sync`] afterwards to sense and share.
    pub fn apply(&mut self, actions: &[Action]) -> Vec<f64> {
        let rewards = (0..self.state.u())
            .map(|u| {
                compute_reward(
                    &self.state.positions,
                    actions,
                    u,
                    self.map,
                    &self.params.reward,
                )
            })
            .collect();
        self.state = step(&self.state, actions, self.map);
        rewards
    }

    /// Sense-and-share round at the current positions: every drone senses,
    /// then broadcasts its delta, and receivers that heard it merge it. The
    /// returned matrix says which directed links delivered this round.
    pub fn sync(&mut self, rng: &mut ChaCha8Rng) -> Result<DeliveryMatrix> {
        let step_stamp = self.state.step_index;
        let deltas: Vec<_> = (0..self.state.u())
            .map(|u| {
                self.knowledge[u].sense(
                    u,
                    self.state.positions[u],
                    step_stamp,
                    self.map,
                    self.params.zeta,
                )
            })
            .collect();
        let delivery = broadcast_round(
            &self.state.positions,
            &self.channel,
            &self.realization,
            rng,
        )?;
        for (s, delta) in deltas.iter().enumerate() {
            for (r, heard) in delivery[s].iter().enumerate() {
                if *heard {
                    self.knowledge[r].merge(delta);
                }
            }
        }
        Ok(delivery)
    }
}

/// Number of drones counted as on-target. With `distinct` set, drones
/// sharing one target count once (each occupied target counts once);
/// otherwise every drone standing on any target counts.
pub fn on_target_count(positions: &[Coord], map: &GridMap, distinct: bool) -> usize {
    if distinct {
        let mut occupied: Vec<Coord> = positions
            .iter()
            .copied()
            .filter(|p| map.is_target(*p))
            .collect();
        occupied.sort_by_key(|c| (c.x, c.y));
        occupied.dedup();
        occupied.len()
    } else {
        positions.iter().filter(|p| map.is_target(**p)).count()
    }
}

/// The episode's success condition: every drone is on a target, and (in
/// distinct mode) no two drones share one.
pub fn success_now(positions: &[Coord], map: &GridMap, distinct: bool) -> bool {
    on_target_count(positions, map, distinct) == positions.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::ChannelMode;
    use crate::map::{GridMap, ValueModel};
    use crate::rng::{substream, Domain};

    fn open_map(m: usize, targets: Vec<Coord>) -> GridMap {
        GridMap::from_parts(m, targets, vec![], None, &ValueModel::default()).unwrap()
    }

    fn params() -> SimParams {
        SimParams {
            zeta: 3.0,
            window: 8,
            rho: 0.2,
            reward: RewardParams::default(),
        }
    }

    fn perfect() -> ChannelConfig {
        ChannelConfig {
            mode: ChannelMode::Perfect,
            ..ChannelConfig::default()
        }
    }

    fn none() -> ChannelConfig {
        ChannelConfig {
            mode: ChannelMode::None,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn initial_round_shares_the_swarm_fov() {
        let map = open_map(12, vec![Coord::new(11, 11)]);
        let starts = vec![Coord::new(1, 1), Coord::new(10, 10)];
        let mut rng = substream(3, Domain::Episode, 0);
        let ep = Episode::start(&map, starts, params(), perfect(), &mut rng).unwrap();
        // both drones know both discs
        for u in 0..2 {
            assert!(ep.knowledge(u).is_explored(Coord::new(1, 1)));
            assert!(ep.knowledge(u).is_explored(Coord::new(10, 10)));
            assert!(ep.knowledge(u).known_position(1 - u).is_some());
        }
    }

    #[test]
    fn silent_channel_keeps_knowledge_private() {
        let map = open_map(12, vec![Coord::new(11, 11)]);
        let starts = vec![Coord::new(1, 1), Coord::new(10, 10)];
        let mut rng = substream(3, Domain::Episode, 1);
        let ep = Episode::start(&map, starts, params(), none(), &mut rng).unwrap();
        assert!(ep.knowledge(0).is_explored(Coord::new(1, 1)));
        assert!(!ep.knowledge(0).is_explored(Coord::new(10, 10)));
        assert!(ep.knowledge(0).known_position(1).is_none());
    }

    #[test]
    fn perfect_channel_keeps_knowledge_identical() {
        let map = open_map(10, vec![Coord::new(9, 0)]);
        let starts = vec![Coord::new(0, 0), Coord::new(5, 5)];
        let mut rng = substream(9, Domain::Episode, 0);
        let mut ep = Episode::start(&map, starts, params(), perfect(), &mut rng).unwrap();
        for step in 0..5 {
            let actions = if step % 2 == 0 {
                vec![Action::East, Action::North]
            } else {
                vec![Action::North, Action::East]
            };
            ep.apply(&actions);
            ep.sync(&mut rng).unwrap();
        }
        assert_eq!(ep.knowledge(0), ep.knowledge(1));
        assert_eq!(ep.step_index(), 5);
    }

    #[test]
    fn rewards_come_from_the_pre_move_configuration() {
        // drones at (0,0) and (2,0) both move east; the second lands on the
        // target at (3,0)
        let map = open_map(8, vec![Coord::new(3, 0)]);
        let starts = vec![Coord::new(0, 0), Coord::new(2, 0)];
        let mut rng = substream(4, Domain::Episode, 0);
        let mut ep = Episode::start(&map, starts, params(), perfect(), &mut rng).unwrap();
        let r = ep.apply(&[Action::East, Action::East]);
        assert_eq!(r, vec![0.0, 1.0]);
        assert_eq!(ep.positions(), &[Coord::new(1, 0), Coord::new(3, 0)]);
    }

    #[test]
    fn on_target_counts_distinct_and_lax() {
        let map = open_map(8, vec![Coord::new(1, 1), Coord::new(5, 5)]);
        let both_on_one = vec![Coord::new(1, 1), Coord::new(1, 1)];
        assert_eq!(on_target_count(&both_on_one, &map, false), 2);
        assert_eq!(on_target_count(&both_on_one, &map, true), 1);
        assert!(success_now(&both_on_one, &map, false));
        assert!(!success_now(&both_on_one, &map, true));

        let split = vec![Coord::new(1, 1), Coord::new(5, 5)];
        assert!(success_now(&split, &map, true));

        let off = vec![Coord::new(0, 0), Coord::new(5, 5)];
        assert_eq!(on_target_count(&off, &map, true), 1);
        assert!(!success_now(&off, &map, false));
    }
}
