//! Rollout policies: the trained Q-network driven greedily or through a
//! fixed-temperature softmax, and the look-ahead baseline, behind one trait
//! the episode runner can drive.

use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;

use crate::comms::{ChannelMode, DeliveryMatrix};
use crate::coord::{Action, ACTIONS};
use crate::ddql::explore::{greedy, softmax_policy};
use crate::episode::Episode;
use crate::error::Error;
use crate::harness::Scenario;
use crate::lookahead::{LookaheadConfig, SwarmLookahead};
use crate::nn::{load_checkpoint, Checkpoint, QNetwork};
use crate::Result;

/// A policy driving one drone per call inside an episode rollout.
pub trait RolloutPolicy: Send {
    fn name(&self) -> String;
    /// Called once per episode before the first decision.
    fn reset(&mut self, swarm_size: usize);
    fn decide(&mut self, ep: &Episode, u: usize, rng: &mut ChaCha8Rng) -> Result<Action>;
    /// Called after each step's broadcast round with its delivery matrix.
    fn end_step(&mut self, _delivery: &DeliveryMatrix) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DdqlMode {
    Greedy,
    /// Softmax sampling at a fixed test temperature.
    Soft(f64),
}

/// The trained network as a policy.
#[derive(Clone)]
pub struct DdqlPolicy {
    net: QNetwork<f32>,
    mode: DdqlMode,
}

impl DdqlPolicy {
    pub fn new(net: QNetwork<f32>, mode: DdqlMode) -> Result<DdqlPolicy> {
        if let DdqlMode::Soft(tau) = mode {
            if !(tau > 0.0) {
                return Err(Error::config("softmax temperature must be positive"));
            }
        }
        Ok(DdqlPolicy { net, mode })
    }

    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        scenario: &Scenario,
        mode: DdqlMode,
    ) -> Result<DdqlPolicy> {
        ckpt.ensure_compatible(scenario.window, scenario.rho)?;
        DdqlPolicy::new(ckpt.net.clone(), mode)
    }
}

impl RolloutPolicy for DdqlPolicy {
    fn name(&self) -> String {
        match self.mode {
            DdqlMode::Greedy => "ddql-greedy".into(),
            DdqlMode::Soft(tau) => format!("ddql-soft({tau})"),
        }
    }

    fn reset(&mut self, _swarm_size: usize) {}

    fn decide(&mut self, ep: &Episode, u: usize, rng: &mut ChaCha8Rng) -> Result<Action> {
        let q = self.net.forward(&ep.observe(u)?.to_tensor())?;
        let q = q.as_slice().expect("q is contiguous");
        let idx = match self.mode {
            DdqlMode::Greedy => greedy(q, rng),
            DdqlMode::Soft(tau) => softmax_policy(q, tau, rng)?,
        };
        Ok(ACTIONS[idx])
    }
}

/// The look-ahead baseline as a policy. The swarm-level claim state is
/// rebuilt at every reset.
pub struct LookaheadPolicy {
    cfg: LookaheadConfig,
    state: Option<SwarmLookahead>,
}

impl LookaheadPolicy {
    pub fn new(cfg: LookaheadConfig) -> Result<LookaheadPolicy> {
        cfg.validate()?;
        Ok(LookaheadPolicy { cfg, state: None })
    }
}

impl Clone for LookaheadPolicy {
    fn clone(&self) -> Self {
        LookaheadPolicy {
            cfg: self.cfg,
            state: None,
        }
    }
}

impl RolloutPolicy for LookaheadPolicy {
    fn name(&self) -> String {
        format!("la({})", self.cfg.horizon)
    }

    fn reset(&mut self, swarm_size: usize) {
        self.state = Some(SwarmLookahead::new(self.cfg, swarm_size));
    }

    fn decide(&mut self, ep: &Episode, u: usize, rng: &mut ChaCha8Rng) -> Result<Action> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::domain("policy used before reset"))?;
        Ok(state.decide(ep.positions(), u, ep.knowledge(u), rng))
    }

    fn end_step(&mut self, delivery: &DeliveryMatrix) {
        if let Some(state) = self.state.as_mut() {
            state.end_step(delivery);
        }
    }
}

/// A parseable policy description, as given on a command line.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    DdqlGreedy { checkpoint: PathBuf },
    DdqlSoft { checkpoint: PathBuf, tau: f64 },
    Lookahead { horizon: u32 },
}

impl PolicySpec {
    /// Accepted forms: `la(N)`, `ddql-greedy:PATH`, `ddql-soft:PATH`, and
    /// `ddql-soft(TAU):PATH`.
    pub fn parse(text: &str) -> Result<PolicySpec> {
        let bad = || Error::config(format!("cannot parse policy {text:?}"));
        if let Some(rest) = text.strip_prefix("la(") {
            let inner = rest.strip_suffix(')').ok_or_else(bad)?;
            let horizon: u32 = inner.trim().parse().map_err(|_| bad())?;
            return Ok(PolicySpec::Lookahead { horizon });
        }
        if let Some(path) = text.strip_prefix("ddql-greedy:") {
            if path.is_empty() {
                return Err(bad());
            }
            return Ok(PolicySpec::DdqlGreedy {
                checkpoint: PathBuf::from(path),
            });
        }
        if let Some(rest) = text.strip_prefix("ddql-soft") {
            let (tau, path) = if let Some(path) = rest.strip_prefix(':') {
                (0.1, path)
            } else if let Some(rest) = rest.strip_prefix('(') {
                let (tau_text, tail) = rest.split_once("):").ok_or_else(bad)?;
                let tau: f64 = tau_text.trim().parse().map_err(|_| bad())?;
                (tau, tail)
            } else {
                return Err(bad());
            };
            if path.is_empty() {
                return Err(bad());
            }
            return Ok(PolicySpec::DdqlSoft {
                checkpoint: PathBuf::from(path),
                tau,
            });
        }
        Err(bad())
    }

    /// Builds the runnable policy. Look-ahead claims ride the broadcast
    /// channel whenever the scenario's channel is not perfect.
    pub fn load(&self, scenario: &Scenario) -> Result<LoadedPolicy> {
        match self {
            PolicySpec::Lookahead { horizon } => {
                let cfg = LookaheadConfig {
                    horizon: *horizon,
                    claims_over_channel: scenario.channel.mode != ChannelMode::Perfect,
                    ..LookaheadConfig::default()
                };
                Ok(LoadedPolicy::Lookahead(LookaheadPolicy::new(cfg)?))
            }
            PolicySpec::DdqlGreedy { checkpoint } => {
                let ckpt = load_checkpoint(checkpoint)?;
                Ok(LoadedPolicy::Ddql(DdqlPolicy::from_checkpoint(
                    &ckpt,
                    scenario,
                    DdqlMode::Greedy,
                )?))
            }
            PolicySpec::DdqlSoft { checkpoint, tau } => {
                let ckpt = load_checkpoint(checkpoint)?;
                Ok(LoadedPolicy::Ddql(DdqlPolicy::from_checkpoint(
                    &ckpt,
                    scenario,
                    DdqlMode::Soft(*tau),
                )?))
            }
        }
    }
}

/// Either concrete policy, cloneable for episode-parallel evaluation.
#[derive(Clone)]
pub enum LoadedPolicy {
    Ddql(DdqlPolicy),
    Lookahead(LookaheadPolicy),
}

impl RolloutPolicy for LoadedPolicy {
    fn name(&self) -> String {
        match self {
            LoadedPolicy::Ddql(p) => p.name(),
            LoadedPolicy::Lookahead(p) => p.name(),
        }
    }

    fn reset(&mut self, swarm_size: usize) {
        match self {
            LoadedPolicy::Ddql(p) => p.reset(swarm_size),
            LoadedPolicy::Lookahead(p) => p.reset(swarm_size),
        }
    }

    fn decide(&mut self, ep: &Episode, u: usize, rng: &mut ChaCha8Rng) -> Result<Action> {
        match self {
            LoadedPolicy::Ddql(p) => p.decide(ep, u, rng),
            LoadedPolicy::Lookahead(p) => p.decide(ep, u, rng),
        }
    }

    fn end_step(&mut self, delivery: &DeliveryMatrix) {
        match self {
            LoadedPolicy::Ddql(p) => p.end_step(delivery),
            LoadedPolicy::Lookahead(p) => p.end_step(delivery),
        }
    }
}
