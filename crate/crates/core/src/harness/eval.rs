//! Monte Carlo evaluation: roll a policy through freshly drawn missions and
//! aggregate success, completion-time, coverage, and timing statistics.
//!
//! Episodes are independent and run in parallel. Every per-episode RNG is a
//! substream keyed only by the scenario seed and the episode index, so two
//! policies evaluated on the same scenario face exactly the same missions
//! (common random numbers), and results do not depend on thread scheduling.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode::{on_target_count, Episode};
use crate::error::Error;
use crate::harness::policy::{PolicySpec, RolloutPolicy};
use crate::harness::{MapSource, Scenario};
use crate::map::GridMap;
use crate::rng::{substream, Domain};
use crate::Coord;
use crate::Result;

/// 95% two-sided normal quantile.
const WILSON_Z: f64 = 1.959963984540054;

/// One swarm step of a recorded rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Positions after the move.
    pub positions: Vec<Coord>,
    /// Per-drone rewards for the move that produced those positions.
    pub rewards: Vec<f64>,
    /// Drones standing on a target after the move.
    pub on_target: usize,
}

/// A full recorded rollout. The mission ends at completion or at the step
/// limit, whichever comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub steps: Vec<StepRecord>,
    /// Step index (1-based) at which every drone stood on its own target;
    /// 0 means the swarm started complete.
    pub completion_step: Option<u32>,
    pub decision_nanos: u128,
    pub decisions: u64,
}

impl EpisodeResult {
    /// On-target count at mission end.
    pub fn final_on_target(&self) -> usize {
        self.steps.last().map_or(0, |s| s.on_target)
    }

    /// Total collected reward averaged over the swarm.
    pub fn mean_drone_return(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let u = self.steps[0].rewards.len() as f64;
        let total: f64 = self.steps.iter().flat_map(|s| s.rewards.iter()).sum();
        total / u
    }
}

/// Per-episode digest kept inside a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub completion_step: Option<u32>,
    pub on_target: usize,
    pub mean_drone_return: f64,
}

/// Aggregated evaluation outcome for one policy on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub episodes: u32,
    pub swarm_size: usize,
    pub step_limit: u32,
    pub distinct_targets: bool,
    pub successes: u32,
    /// Fraction of episodes completed within the step limit.
    pub success: f64,
    /// 95% Wilson interval around `success`.
    pub success_ci_low: f64,
    pub success_ci_high: f64,
    /// Mean completion step over successful episodes.
    pub mean_completion_step: Option<f64>,
    /// `completion_cdf[s]` = fraction of episodes complete within `s` steps,
    /// for `s` in `0..=step_limit`.
    pub completion_cdf: Vec<f64>,
    /// Distribution of the on-target count at mission end, indices `0..=u`.
    pub on_target_pmf: Vec<f64>,
    pub mean_on_target: f64,
    pub mean_drone_return: f64,
    pub mean_decision_micros: f64,
    pub episode_summaries: Vec<EpisodeSummary>,
}

impl MetricsReport {
    pub fn from_results(
        policy: String,
        scenario: &Scenario,
        results: &[EpisodeResult],
    ) -> MetricsReport {
        let n = results.len() as u32;
        assert!(n > 0, "cannot summarize zero episodes");
        let u = scenario.u;
        let limit = scenario.step_limit;

        let successes = results.iter().filter(|r| r.completion_step.is_some()).count() as u32;
        let success = f64::from(successes) / f64::from(n);
        let (ci_low, ci_high) = wilson_interval(successes, n);

        let mean_completion_step = if successes > 0 {
            let total: u64 = results
                .iter()
                .filter_map(|r| r.completion_step.map(u64::from))
                .sum();
            Some(total as f64 / f64::from(successes))
        } else {
            None
        };

        let mut completion_cdf = vec![0.0; limit as usize + 1];
        for r in results {
            if let Some(step) = r.completion_step {
                for slot in completion_cdf.iter_mut().skip(step as usize) {
                    *slot += 1.0;
                }
            }
        }
        for slot in completion_cdf.iter_mut() {
            *slot /= f64::from(n);
        }

        let mut on_target_pmf = vec![0.0; u + 1];
        for r in results {
            on_target_pmf[r.final_on_target().min(u)] += 1.0;
        }
        for slot in on_target_pmf.iter_mut() {
            *slot /= f64::from(n);
        }
        let mean_on_target = results
            .iter()
            .map(|r| r.final_on_target() as f64)
            .sum::<f64>()
            / f64::from(n);

        let mean_drone_return =
            results.iter().map(EpisodeResult::mean_drone_return).sum::<f64>() / f64::from(n);

        let total_nanos: u128 = results.iter().map(|r| r.decision_nanos).sum();
        let total_decisions: u64 = results.iter().map(|r| r.decisions).sum();
        let mean_decision_micros = if total_decisions == 0 {
            0.0
        } else {
            total_nanos as f64 / total_decisions as f64 / 1000.0
        };

        let episode_summaries = results
            .iter()
            .map(|r| EpisodeSummary {
                completion_step: r.completion_step,
                on_target: r.final_on_target(),
                mean_drone_return: r.mean_drone_return(),
            })
            .collect();

        MetricsReport {
            policy,
            episodes: n,
            swarm_size: u,
            step_limit: limit,
            distinct_targets: scenario.distinct_targets,
            successes,
            success,
            success_ci_low: ci_low,
            success_ci_high: ci_high,
            mean_completion_step,
            completion_cdf,
            on_target_pmf,
            mean_on_target,
            mean_drone_return,
            mean_decision_micros,
            episode_summaries,
        }
    }
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u32, trials: u32) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let z = WILSON_Z;
    let n = f64::from(trials);
    let p = f64::from(successes) / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Rolls one mission to completion or to the step limit.
pub fn run_episode<P: RolloutPolicy>(
    policy: &mut P,
    scenario: &Scenario,
    map: &GridMap,
    starts: Vec<Coord>,
    channel_rng: &mut rand_chacha::ChaCha8Rng,
    policy_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<EpisodeResult> {
    let u = starts.len();
    let mut ep = Episode::start(map, starts, scenario.sim_params(), scenario.channel, channel_rng)?;
    policy.reset(u);

    let distinct = scenario.distinct_targets;
    let mut completion =
        (on_target_count(ep.positions(), map, distinct) == u).then_some(0u32);
    let mut steps = Vec::new();
    let mut decision_nanos = 0u128;
    let mut decisions = 0u64;

    for t in 0..scenario.step_limit {
        if completion.is_some() {
            break;
        }
        let mut actions = Vec::with_capacity(u);
        for d in 0..u {
            let clock = Instant::now();
            actions.push(policy.decide(&ep, d, policy_rng)?);
            decision_nanos += clock.elapsed().as_nanos();
            decisions += 1;
        }
        let rewards = ep.apply(&actions);
        let delivery = ep.sync(channel_rng)?;
        policy.end_step(&delivery);
        let on_target = on_target_count(ep.positions(), map, distinct);
        if on_target == u {
            completion = Some(t + 1);
        }
        steps.push(StepRecord {
            positions: ep.positions().to_vec(),
            rewards,
            on_target,
        });
    }

    Ok(EpisodeResult {
        steps,
        completion_step: completion,
        decision_nanos,
        decisions,
    })
}

/// Evaluates one policy over `episodes` independent missions drawn from the
/// scenario. Returns the aggregate report plus the raw per-episode records.
pub fn evaluate<P>(
    proto: &P,
    scenario: &Scenario,
    episodes: u32,
) -> Result<(MetricsReport, Vec<EpisodeResult>)>
where
    P: RolloutPolicy + Clone + Sync,
{
    scenario.validate()?;
    if episodes == 0 {
        return Err(Error::config("need at least one evaluation episode"));
    }
    let source = MapSource::new(scenario)?;
    let seed = scenario.seed;
    let results = (0..u64::from(episodes))
        .into_par_iter()
        .map(|k| {
            let mut policy = proto.clone();
            let mut map_rng = substream(seed, Domain::Episode, k);
            let (map, starts) = source.make(&mut map_rng)?;
            let mut channel_rng = substream(seed, Domain::Channel, k);
            let mut policy_rng = substream(seed, Domain::Policy, k);
            run_episode(
                &mut policy,
                scenario,
                &map,
                starts,
                &mut channel_rng,
                &mut policy_rng,
            )
        })
        .collect::<Result<Vec<EpisodeResult>>>()?;
    let report = MetricsReport::from_results(proto.name(), scenario, &results);
    Ok((report, results))
}

/// Evaluates several policies on the same scenario under common random
/// numbers: every policy faces the same maps, starts, and channel draws.
pub fn compare(
    specs: &[PolicySpec],
    scenario: &Scenario,
    episodes: u32,
) -> Result<Vec<MetricsReport>> {
    specs
        .iter()
        .map(|spec| {
            let policy = spec.load(scenario)?;
            let (report, _) = evaluate(&policy, scenario, episodes)?;
            Ok(report)
        })
        .collect()
}
