//! Look-ahead heuristic: exhaustive n-step path search over a drone's own
//! actions with peers held static, plus the claim-and-hover endgame.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comms::DeliveryMatrix;
use crate::coord::{Action, Coord, ACTIONS};
use crate::error::Error;
use crate::knowledge::KnowledgeState;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookaheadConfig {
    /// Path length n: the planner enumerates all 5^n own-action sequences.
    pub horizon: u32,
    /// Treat the drone's current cell as already visited, so an immediate
    /// Stay scores zero.
    pub consume_start_cell: bool,
    /// Spread claims through the broadcast channel instead of instantly.
    pub claims_over_channel: bool,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        LookaheadConfig {
            horizon: 1,
            consume_start_cell: true,
            claims_over_channel: false,
        }
    }
}

impl LookaheadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("look-ahead horizon must be at least 1"));
        }
        if self.horizon > 8 {
            return Err(Error::config(
                "look-ahead horizon above 8 enumerates over 5^8 sequences",
            ));
        }
        Ok(())
    }
}

/// Single-step look-ahead reward for drone `u` taking `action`: the
/// estimated cell value at the destination, zeroed if claimed, split among
/// the drones that would share the cell, or minus infinity if the move
/// looks invalid under current knowledge.
pub fn la_reward(
    positions: &[Coord],
    action: Action,
    u: usize,
    knowledge: &KnowledgeState,
    claimed: &HashSet<Coord>,
) -> f64 {
    let dest = action.apply(positions[u]);
    if !knowledge.believes_free(dest) {
        return f64::NEG_INFINITY;
    }
    let phi_eff = if claimed.contains(&dest) {
        0.0
    } else {
        knowledge.phi_hat(dest)
    };
    let xi = 1 + occupants(positions, u, dest);
    phi_eff / xi as f64
}

fn occupants(positions: &[Coord], u: usize, dest: Coord) -> usize {
    positions
        .iter()
        .enumerate()
        .filter(|&(v, &p)| v != u && p == dest)
        .count()
}

struct Best {
    val: f64,
    count: u64,
    pick: Action,
}

impl Best {
    fn offer(&mut self, val: f64, first: Action, rng: &mut ChaCha8Rng) {
        if val > self.val {
            self.val = val;
            self.count = 1;
            self.pick = first;
        } else if val == self.val {
            self.count += 1;
            if rng.gen_range(0..self.count) == 0 {
                self.pick = first;
            }
        }
    }
}

/// Picks drone `u`'s next action by enumerating every n-step own-action
/// sequence (peers static), summing per-step rewards with each cell's value
/// consumed on first visit, and drawing uniformly among the maximizing
/// sequences; the chosen sequence's first action is returned. Sequences
/// containing a move that looks invalid are discarded.
pub fn la_select_action(
    positions: &[Coord],
    u: usize,
    knowledge: &KnowledgeState,
    claimed: &HashSet<Coord>,
    cfg: &LookaheadConfig,
    rng: &mut ChaCha8Rng,
) -> Action {
    let start = positions[u];
    let mut visited: Vec<Coord> = Vec::with_capacity(cfg.horizon as usize + 1);
    if cfg.consume_start_cell {
        visited.push(start);
    }
    let mut best = Best {
        val: f64::NEG_INFINITY,
        count: 0,
        pick: Action::Stay,
    };
    descend(
        positions,
        u,
        knowledge,
        claimed,
        cfg.horizon,
        start,
        0,
        0.0,
        None,
        &mut visited,
        &mut best,
        rng,
    );
    best.pick
}

#[allow(clippy::too_many_arguments)]
fn descend(
    positions: &[Coord],
    u: usize,
    knowledge: &KnowledgeState,
    claimed: &HashSet<Coord>,
    horizon: u32,
    pos: Coord,
    depth: u32,
    sum: f64,
    first: Option<Action>,
    visited: &mut Vec<Coord>,
    best: &mut Best,
    rng: &mut ChaCha8Rng,
) {
    if depth == horizon {
        best.offer(sum, first.expect("horizon is at least 1"), rng);
        return;
    }
    for a in ACTIONS {
        let dest = a.apply(pos);
        if !knowledge.believes_free(dest) {
            // every continuation of an invalid move scores minus infinity
            continue;
        }
        let consumed = claimed.contains(&dest) || visited.contains(&dest);
        let phi_eff = if consumed { 0.0 } else { knowledge.phi_hat(dest) };
        let xi = 1 + occupants(positions, u, dest);
        let r = phi_eff / xi as f64;
        let pushed = if visited.contains(&dest) {
            false
        } else {
            visited.push(dest);
            true
        };
        descend(
            positions,
            u,
            knowledge,
            claimed,
            horizon,
            dest,
            depth + 1,
            sum + r,
            first.or(Some(a)),
            visited,
            best,
            rng,
        );
        if pushed {
            visited.pop();
        }
    }
}

/// Claim bookkeeping for a whole swarm of look-ahead drones. Claims either
/// take effect for everyone instantly or ride the broadcast channel,
/// depending on the config.
#[derive(Debug, Clone)]
pub struct SwarmLookahead {
    cfg: LookaheadConfig,
    claims: ClaimStore,
    hovering: Vec<Option<Coord>>,
}

#[derive(Debug, Clone)]
enum ClaimStore {
    Instant(HashSet<Coord>),
    PerAgent(Vec<HashSet<Coord>>),
}

impl SwarmLookahead {
    pub fn new(cfg: LookaheadConfig, u: usize) -> SwarmLookahead {
        let claims = if cfg.claims_over_channel {
            ClaimStore::PerAgent(vec![HashSet::new(); u])
        } else {
            ClaimStore::Instant(HashSet::new())
        };
        SwarmLookahead {
            cfg,
            claims,
            hovering: vec![None; u],
        }
    }

    pub fn reset(&mut self) {
        match &mut self.claims {
            ClaimStore::Instant(s) => s.clear(),
            ClaimStore::PerAgent(v) => v.iter_mut().for_each(HashSet::clear),
        }
        self.hovering.iter_mut().for_each(|h| *h = None);
    }

    pub fn hover_cell(&self, u: usize) -> Option<Coord> {
        self.hovering[u]
    }

    fn claims_seen_by(&self, u: usize) -> &HashSet<Coord> {
        match &self.claims {
            ClaimStore::Instant(s) => s,
            ClaimStore::PerAgent(v) => &v[u],
        }
    }

    /// Decides drone `u`'s action. Call in drone index order within a step:
    /// a drone that claims a target this step blocks later drones from
    /// claiming the same one (instant mode).
    pub fn decide(
        &mut self,
        positions: &[Coord],
        u: usize,
        knowledge: &KnowledgeState,
        rng: &mut ChaCha8Rng,
    ) -> Action {
        if self.hovering[u].is_some() {
            return Action::Stay;
        }
        let pos = positions[u];
        let on_unclaimed_target = knowledge.is_explored(pos)
            && knowledge.phi_hat(pos) == 1.0
            && !self.claims_seen_by(u).contains(&pos);
        if on_unclaimed_target {
            self.hovering[u] = Some(pos);
            match &mut self.claims {
                ClaimStore::Instant(s) => {
                    s.insert(pos);
                }
                ClaimStore::PerAgent(v) => {
                    v[u].insert(pos);
                }
            }
            return Action::Stay;
        }
        la_select_action(positions, u, knowledge, self.claims_seen_by(u), &self.cfg, rng)
    }

    /// Propagates claims over the channel: every hovering drone announces
    /// its claim each step, and receivers that heard it record it.
    pub fn end_step(&mut self, delivery: &DeliveryMatrix) {
        if let ClaimStore::PerAgent(v) = &mut self.claims {
            for (s, hover) in self.hovering.iter().enumerate() {
                if let Some(cell) = hover {
                    for (r, sets) in v.iter_mut().enumerate() {
                        if r != s && delivery[s][r] {
                            sets.insert(*cell);
                        }
                    }
                }
            }
        }
    }
}
