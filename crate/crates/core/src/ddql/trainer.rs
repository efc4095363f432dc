//! The distributed double-deep-Q training loop: one shared network and one
//! shared replay serve every drone; each environment step pushes one
//! transition per drone and performs one batch gradient step per drone,
//! with the bootstrap value always taken from a periodically synced target
//! network. Training always runs with perfect communications; evaluation
//! snapshots use the scenario's configured channel.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comms::ChannelMode;
use crate::coord::ACTIONS;
use crate::ddql::explore::ExplorationSchedule;
use crate::ddql::replay::{ReplayMemory, ReplaySample};
use crate::episode::{success_now, Episode};
use crate::error::Error;
use crate::Result;
use crate::harness::{MapSource, Scenario};
use crate::knowledge::Observation;
use crate::nn::{save_checkpoint, Checkpoint};
use crate::nn::RAdam;
use crate::nn::{Grads, QNetwork};
use crate::rng::{substream, Domain};

/// Index space for evaluation-rollout substreams, disjoint from the
/// sequential per-episode indices. Substream indices are capped at 2^48, so
/// training is limited to `EVAL_BASE / EVAL_STRIDE` episodes.
const EVAL_BASE: u64 = 1 << 47;
const EVAL_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Training episodes after warm-up.
    pub episodes: u32,
    /// Episodes of uniform-random play that seed the replay.
    pub warmup_episodes: u32,
    /// Steps in even-indexed episodes.
    pub even_len: u32,
    /// Steps in odd-indexed episodes.
    pub odd_len: u32,
    pub batch_size: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync: u64,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    /// Episodes between evaluation points on the training curve
    /// (0 disables periodic evaluation).
    pub eval_every: u32,
    /// Rollouts per evaluation point.
    pub eval_episodes: u32,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.9,
            episodes: 3000,
            warmup_episodes: 1000,
            even_len: 50,
            odd_len: 150,
            batch_size: 32,
            target_sync: 1000,
            replay_capacity: 100_000,
            learning_rate: 1e-4,
            eval_every: 100,
            eval_episodes: 50,
            seed: 7,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if self.even_len == 0 || self.odd_len == 0 {
            return Err(Error::config("episode lengths must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.target_sync == 0 {
            return Err(Error::config("target sync period must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::config("replay capacity must hold at least one batch"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return Err(Error::config("evaluation points need at least one rollout"));
        }
        if u64::from(self.eval_episodes) >= EVAL_STRIDE {
            return Err(Error::config("too many rollouts per evaluation point"));
        }
        if u64::from(self.episodes) >= EVAL_BASE / EVAL_STRIDE {
            return Err(Error::config("too many training episodes"));
        }
        Ok(())
    }

    /// Even episodes are short, odd episodes long.
    pub fn episode_len(&self, episode: u32) -> u32 {
        if episode.is_multiple_of(2) {
            self.even_len
        } else {
            self.odd_len
        }
    }

    /// Swarm steps across the whole training phase.
    pub fn total_env_steps(&self) -> u64 {
        (0..self.episodes)
            .map(|e| u64::from(self.episode_len(e)))
            .sum()
    }
}

/// One point on the training curve.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    /// Training episodes completed when the point was taken.
    pub episode: u32,
    /// Success probability over the evaluation rollouts.
    pub success: f64,
    /// Mean per-drone episode return over the rollouts.
    pub mean_reward: f64,
    /// The ε or temperature in force at this point.
    pub explore: f64,
    /// Mean TD loss since the previous point.
    pub mean_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurvePoint>,
    /// Swarm steps taken during this run's training phase.
    pub env_steps: u64,
    /// Gradient steps taken during this run.
    pub grad_steps: u64,
    pub replay_len: usize,
}

/// The bootstrap value r + γ · max_a Q_t(o', a), with Q_t the target
/// network.
pub fn compute_td_target(
    sample: &ReplaySample,
    target_net: &QNetwork<f32>,
    gamma: f64,
) -> Result<f32> {
    let q = target_net.forward(&sample.next.to_tensor())?;
    let max = q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    Ok(sample.reward + gamma as f32 * max)
}

/// Trains a fresh network on `scenario`.
pub fn train(
    scenario: &Scenario,
    cfg: &TrainerConfig,
    schedule: &ExplorationSchedule,
    out_dir: Option<&Path>,
    on_point: Option<&mut dyn FnMut(&CurvePoint)>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    schedule.validate()?;
    let mut init_rng = substream(cfg.seed, Domain::Init, 0);
    let net = QNetwork::init(&mut init_rng);
    let opt = RAdam::new(&net, cfg.learning_rate);
    let prior = Prior::default();
    Run::new(scenario, cfg, schedule, net, opt, prior)?.run(out_dir, on_point)
}

/// Continues training from a checkpoint on a (possibly different) scenario.
/// The replay is re-warmed and the exploration schedule restarts over this
/// run's episodes; network parameters and optimizer state carry over.
pub fn transfer(
    ckpt: &Checkpoint,
    scenario: &Scenario,
    cfg: &TrainerConfig,
    schedule: &ExplorationSchedule,
    out_dir: Option<&Path>,
    on_point: Option<&mut dyn FnMut(&CurvePoint)>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    schedule.validate()?;
    ckpt.ensure_compatible(scenario.window, scenario.rho)?;
    let net = ckpt.net.clone();
    let opt = ckpt
        .opt
        .clone()
        .unwrap_or_else(|| RAdam::new(&net, cfg.learning_rate));
    let prior = Prior {
        episodes: ckpt.episodes,
        env_steps: ckpt.env_steps,
        grad_steps: ckpt.grad_steps,
    };
    Run::new(scenario, cfg, schedule, net, opt, prior)?.run(out_dir, on_point)
}

/// Writes a training curve as tab-separated text.
pub fn write_curve(curve: &[CurvePoint], path: &Path) -> Result<()> {
    let mut out = String::from("# episode\tsuccess\tmean_reward\texplore\tmean_loss\n");
    for p in curve {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.8}\n",
            p.episode, p.success, p.mean_reward, p.explore, p.mean_loss
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
struct Prior {
    episodes: u64,
    env_steps: u64,
    grad_steps: u64,
}

struct Run<'a> {
    scenario: &'a Scenario,
    cfg: &'a TrainerConfig,
    schedule: &'a ExplorationSchedule,
    source: MapSource,
    net: QNetwork<f32>,
    target: QNetwork<f32>,
    opt: RAdam,
    replay: ReplayMemory,
    prior: Prior,
    /// This run's counters.
    env_steps: u64,
    grad_steps: u64,
    global_step: u64,
    total_steps: u64,
    loss_sum: f64,
    loss_count: u64,
}

impl<'a> Run<'a> {
    fn new(
        scenario: &'a Scenario,
        cfg: &'a TrainerConfig,
        schedule: &'a ExplorationSchedule,
        net: QNetwork<f32>,
        opt: RAdam,
        prior: Prior,
    ) -> Result<Run<'a>> {
        let source = MapSource::new(scenario)?;
        if scenario.window != crate::nn::WINDOW {
            return Err(Error::config(format!(
                "the network observes {0}x{0} windows, scenario has {1}",
                crate::nn::WINDOW,
                scenario.window
            )));
        }
        let target = net.clone();
        let replay = ReplayMemory::new(cfg.replay_capacity)?;
        Ok(Run {
            scenario,
            cfg,
            schedule,
            source,
            net,
            target,
            opt,
            replay,
            prior,
            env_steps: 0,
            grad_steps: 0,
            global_step: 0,
            total_steps: cfg.total_env_steps(),
            loss_sum: 0.0,
            loss_count: 0,
        })
    }

    fn run(
        mut self,
        out_dir: Option<&Path>,
        mut on_point: Option<&mut dyn FnMut(&CurvePoint)>,
    ) -> Result<TrainOutput> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
        }
        let mut policy_rng = substream(self.cfg.seed, Domain::Policy, 0);
        let mut trainer_rng = substream(self.cfg.seed, Domain::Trainer, 0);

        for e in 0..self.cfg.warmup_episodes {
            self.play_episode(e, u64::from(e), true, &mut policy_rng, &mut trainer_rng)?;
        }
        let mut curve = Vec::new();
        for e in 0..self.cfg.episodes {
            let index = u64::from(self.cfg.warmup_episodes) + u64::from(e);
            self.play_episode(e, index, false, &mut policy_rng, &mut trainer_rng)?;
            let done = e + 1;
            let at_interval = self.cfg.eval_every > 0 && done % self.cfg.eval_every == 0;
            if (at_interval || (self.cfg.eval_every > 0 && done == self.cfg.episodes))
                && (at_interval || curve.last().is_none_or(|p: &CurvePoint| p.episode != done)) {
                    let point = self.curve_point(done)?;
                    if let Some(cb) = on_point.as_deref_mut() {
                        cb(&point);
                    }
                    if let Some(dir) = out_dir {
                        let ckpt = self.checkpoint();
                        save_checkpoint(&ckpt, &dir.join(format!("ckpt-{done:06}.ckpt")))?;
                    }
                    curve.push(point);
                }
        }

        let checkpoint = self.checkpoint();
        if let Some(dir) = out_dir {
            save_checkpoint(&checkpoint, &dir.join("final.ckpt"))?;
            write_curve(&curve, &dir.join("curve.tsv"))?;
        }
        Ok(TrainOutput {
            checkpoint,
            curve,
            env_steps: self.env_steps,
            grad_steps: self.grad_steps,
            replay_len: self.replay.len(),
        })
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            opt: Some(self.opt.clone()),
            episodes: self.prior.episodes + u64::from(self.cfg.episodes),
            env_steps: self.prior.env_steps + self.env_steps,
            grad_steps: self.prior.grad_steps + self.grad_steps,
            window: self.scenario.window as u32,
            rho: self.scenario.rho,
        }
    }

    /// Plays one episode under perfect communications. Warm-up episodes use
    /// uniform-random actions and only fill the replay; training episodes
    /// act through the network and take one gradient step per drone per
    /// swarm step.
    fn play_episode(
        &mut self,
        episode: u32,
        stream_index: u64,
        warmup: bool,
        policy_rng: &mut ChaCha8Rng,
        trainer_rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let len = self.cfg.episode_len(episode);
        let u = self.scenario.u;
        let mut map_rng = substream(self.cfg.seed, Domain::Episode, stream_index);
        let mut channel_rng = substream(self.cfg.seed, Domain::Channel, stream_index);
        let (map, starts) = self.source.make(&mut map_rng)?;
        let mut channel = self.scenario.channel;
        channel.mode = ChannelMode::Perfect;
        let mut ep = Episode::start(
            &map,
            starts,
            self.scenario.sim_params(),
            channel,
            &mut channel_rng,
        )?;

        let mut obs: Vec<Observation> = (0..u).map(|a| ep.observe(a)).collect::<Result<_>>()?;
        for t in 0..len {
            let explore = self.schedule.value_at(self.global_step, self.total_steps);
            let mut chosen = Vec::with_capacity(u);
            for agent_obs in &obs {
                let idx = if warmup {
                    policy_rng.gen_range(0..ACTIONS.len())
                } else {
                    let q = self.net.forward(&agent_obs.to_tensor())?;
                    self.schedule
                        .select(q.as_slice().expect("q is contiguous"), explore, policy_rng)?
                };
                chosen.push(idx);
            }
            let actions: Vec<_> = chosen.iter().map(|&i| ACTIONS[i]).collect();
            let rewards = ep.apply(&actions);
            ep.sync(&mut channel_rng)?;
            let next_obs: Vec<Observation> =
                (0..u).map(|a| ep.observe(a)).collect::<Result<_>>()?;
            for agent in 0..u {
                self.replay.push(ReplaySample {
                    obs: obs[agent].clone(),
                    action: chosen[agent] as u8,
                    reward: rewards[agent] as f32,
                    next: next_obs[agent].clone(),
                });
            }
            if !warmup {
                for agent in 0..u {
                    if self.replay.len() >= self.cfg.batch_size {
                        self.gradient_step(trainer_rng).map_err(|err| match err {
                            Error::TrainingAbort(msg) => Error::TrainingAbort(format!(
                                "{msg} (episode {episode}, step {t}, drone {agent})"
                            )),
                            other => other,
                        })?;
                    }
                }
                self.env_steps += 1;
                self.global_step += 1;
            }
            obs = next_obs;
        }
        Ok(())
    }

    /// One batch update: TD targets from the target network, mean
    /// squared-TD-error gradient through the update network, one optimizer
    /// step, and a target sync every `target_sync` gradient steps.
    fn gradient_step(&mut self, trainer_rng: &mut ChaCha8Rng) -> Result<()> {
        let batch = self.replay.sample_batch(self.cfg.batch_size, trainer_rng)?;
        let mut acc = Grads::<f32>::zeros();
        let mut loss_sum = 0.0f64;
        for sample in &batch {
            let y = compute_td_target(sample, &self.target, self.cfg.gamma)?;
            let cache = self.net.forward_cached(&sample.obs.to_tensor())?;
            let (loss, grads) = self.net.backward(&cache, sample.action as usize, y);
            loss_sum += f64::from(loss);
            acc.add_assign(&grads);
        }
        let mean_loss = loss_sum / batch.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingAbort(format!(
                "non-finite batch loss {mean_loss} at gradient step {}",
                self.grad_steps
            )));
        }
        acc.scale(1.0 / batch.len() as f32);
        self.opt.step(&mut self.net, &acc);
        self.grad_steps += 1;
        self.loss_sum += mean_loss;
        self.loss_count += 1;
        if self.grad_steps.is_multiple_of(self.cfg.target_sync) {
            self.target = self.net.clone();
        }
        Ok(())
    }

    /// Evaluation snapshot: test-phase rollouts on the scenario's own
    /// channel, measuring first-completion success within the step limit.
    fn curve_point(&mut self, episodes_done: u32) -> Result<CurvePoint> {
        let base = EVAL_BASE + u64::from(episodes_done) * EVAL_STRIDE;
        let mut successes = 0u32;
        let mut reward_total = 0.0f64;
        for k in 0..self.cfg.eval_episodes {
            let idx = base + u64::from(k);
            let mut map_rng = substream(self.cfg.seed, Domain::Episode, idx);
            let mut channel_rng = substream(self.cfg.seed, Domain::Channel, idx);
            let mut eval_policy_rng = substream(self.cfg.seed, Domain::Policy, idx);
            let (map, starts) = self.source.make(&mut map_rng)?;
            let (succeeded, mean_reward) = self.test_rollout(
                &map,
                starts,
                &mut channel_rng,
                &mut eval_policy_rng,
            )?;
            if succeeded {
                successes += 1;
            }
            reward_total += mean_reward;
        }
        let n = f64::from(self.cfg.eval_episodes);
        let mean_loss = if self.loss_count == 0 {
            0.0
        } else {
            self.loss_sum / self.loss_count as f64
        };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        Ok(CurvePoint {
            episode: episodes_done,
            success: f64::from(successes) / n,
            mean_reward: reward_total / n,
            explore: self
                .schedule
                .value_at(self.global_step.saturating_sub(1), self.total_steps),
            mean_loss,
        })
    }

    fn test_rollout(
        &self,
        map: &crate::map::GridMap,
        starts: Vec<crate::coord::Coord>,
        channel_rng: &mut ChaCha8Rng,
        policy_rng: &mut ChaCha8Rng,
    ) -> Result<(bool, f64)> {
        let u = self.scenario.u;
        let mut ep = Episode::start(
            map,
            starts,
            self.scenario.sim_params(),
            self.scenario.channel,
            channel_rng,
        )?;
        let mut total_reward = 0.0f64;
        let mut done = success_now(ep.positions(), map, self.scenario.distinct_targets);
        for _ in 0..self.scenario.step_limit {
            let mut actions = Vec::with_capacity(u);
            for agent in 0..u {
                let q = self.net.forward(&ep.observe(agent)?.to_tensor())?;
                let idx = self
                    .schedule
                    .test_select(q.as_slice().expect("q is contiguous"), policy_rng)?;
                actions.push(ACTIONS[idx]);
            }
            let rewards = ep.apply(&actions);
            total_reward += rewards.iter().sum::<f64>();
            ep.sync(channel_rng)?;
            if success_now(ep.positions(), map, self.scenario.distinct_targets) {
                done = true;
            }
        }
        Ok((done, total_reward / u as f64))
    }
}
