//! Exploration: ε-greedy and softmax action selection, plus the annealing
//! schedules that take them from full exploration to their terminal values
//! exactly at the last training step (linear for ε, exponential for the
//! softmax temperature).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExploreKind {
    EpsilonGreedy,
    Softmax,
}

/// Annealed exploration over one training run. `start` and `end` are ε
/// bounds for ε-greedy and temperatures for softmax; `test_tau` is the
/// temperature kept during the test phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationSchedule {
    pub kind: ExploreKind,
    pub start: f64,
    pub end: f64,
    pub test_tau: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule {
            kind: ExploreKind::Softmax,
            start: 1.0,
            end: 0.05,
            test_tau: 0.1,
        }
    }
}

impl ExplorationSchedule {
    pub fn epsilon_greedy() -> Self {
        ExplorationSchedule {
            kind: ExploreKind::EpsilonGreedy,
            start: 1.0,
            end: 0.0,
            test_tau: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start < self.end {
            return Err(Error::config("exploration must not increase over training"));
        }
        match self.kind {
            ExploreKind::EpsilonGreedy => {
                if !(0.0..=1.0).contains(&self.start) || !(0.0..=1.0).contains(&self.end) {
                    return Err(Error::config("epsilon bounds must lie in [0, 1]"));
                }
            }
            ExploreKind::Softmax => {
                if !(self.end > 0.0) {
                    return Err(Error::config("softmax temperature must stay positive"));
                }
            }
        }
        if !(self.test_tau > 0.0) {
            return Err(Error::config("test temperature must be positive"));
        }
        Ok(())
    }

    /// The ε or temperature in force at global training step `step` of
    /// `total`. Hits `end` exactly at the final step.
    pub fn value_at(&self, step: u64, total: u64) -> f64 {
        let p = if total <= 1 {
            1.0
        } else {
            (step.min(total - 1)) as f64 / (total - 1) as f64
        };
        match self.kind {
            ExploreKind::EpsilonGreedy => self.start + (self.end - self.start) * p,
            ExploreKind::Softmax => self.start * (self.end / self.start).powf(p),
        }
    }

    /// Behavior-policy selection with the given ε or temperature.
    pub fn select(&self, q: &[f32], value: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
        match self.kind {
            ExploreKind::EpsilonGreedy => epsilon_greedy(q, value, rng),
            ExploreKind::Softmax => softmax_policy(q, value, rng),
        }
    }

    /// Test-phase selection: greedy for ε-greedy training, softmax at
    /// `test_tau` for softmax training.
    pub fn test_select(&self, q: &[f32], rng: &mut ChaCha8Rng) -> Result<usize> {
        match self.kind {
            ExploreKind::EpsilonGreedy => Ok(greedy(q, rng)),
            ExploreKind::Softmax => softmax_policy(q, self.test_tau, rng),
        }
    }
}

/// Argmax with uniform tie-breaking.
pub fn greedy(q: &[f32], rng: &mut ChaCha8Rng) -> usize {
    debug_assert!(!q.is_empty());
    let max = q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let ties: Vec<usize> = q
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == max)
        .map(|(i, _)| i)
        .collect();
    ties[rng.gen_range(0..ties.len())]
}

/// Softmax probabilities p_i = e^{q_i/T} / Σ_j e^{q_j/T}, computed with
/// max subtraction.
pub fn softmax_probs(q: &[f32], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::domain("softmax temperature must be positive"));
    }
    if q.is_empty() {
        return Err(Error::domain("softmax over an empty action set"));
    }
    let max = q.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = q.iter().map(|&v| ((v as f64 - max) / t).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Samples an action from the softmax distribution at temperature `t`.
pub fn softmax_policy(q: &[f32], t: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
    let probs = softmax_probs(q, t)?;
    let draw: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

/// Uniform random action with probability `epsilon`, otherwise greedy with
/// uniform tie-breaking.
pub fn epsilon_greedy(q: &[f32], epsilon: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::domain("epsilon must lie in [0, 1]"));
    }
    if q.is_empty() {
        return Err(Error::domain("selection over an empty action set"));
    }
    let draw: f64 = rng.gen_range(0.0..1.0);
    if draw < epsilon {
        Ok(rng.gen_range(0..q.len()))
    } else {
        Ok(greedy(q, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    fn rng(i: u64) -> ChaCha8Rng {
        substream(42, Domain::Policy, i)
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut r = rng(0);
        for _ in 0..200 {
            let q: Vec<f32> = (0..5).map(|_| r.gen_range(-50.0..50.0)).collect();
            let t = r.gen_range(0.01..10.0);
            let p = softmax_probs(&q, t).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum = {sum}");
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn equal_values_give_uniform_probabilities() {
        let p = softmax_probs(&[0.7; 5], 0.3).unwrap();
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_high_value_at_unit_temperature() {
        let p = softmax_probs(&[1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        let want = e / (e + 4.0);
        assert!((p[0] - want).abs() < 1e-12, "p0 = {}", p[0]);
        for v in &p[1..] {
            assert!((v - (1.0 - want) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_temperature_concentrates_on_the_argmax() {
        let p = softmax_probs(&[0.3, 0.1, 0.9, 0.2, 0.0], 1e-3).unwrap();
        assert!(p[2] > 0.999_999);
    }

    #[test]
    fn huge_values_stay_finite() {
        let p = softmax_probs(&[1000.0, 999.0, -1000.0, 0.0, 500.0], 0.5).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_draw_frequencies_match_probabilities() {
        let q = [1.0, 0.0, 0.0, 0.0, 0.0];
        let probs = softmax_probs(&q, 1.0).unwrap();
        let mut r = rng(1);
        let n = 20_000;
        let mut counts = [0u32; 5];
        for _ in 0..n {
            counts[softmax_policy(&q, 1.0, &mut r).unwrap()] += 1;
        }
        for i in 0..5 {
            let mean = n as f64 * probs[i];
            let sigma = (n as f64 * probs[i] * (1.0 - probs[i])).sqrt();
            let diff = (counts[i] as f64 - mean).abs();
            assert!(diff < 5.0 * sigma, "action {i}: {} vs {mean:.1}", counts[i]);
        }
    }

    #[test]
    fn zero_epsilon_always_takes_the_unique_argmax() {
        let mut r = rng(2);
        for _ in 0..100 {
            let a = epsilon_greedy(&[0.1, 0.9, 0.2, 0.3, 0.4], 0.0, &mut r).unwrap();
            assert_eq!(a, 1);
        }
    }

    #[test]
    fn full_epsilon_is_uniform() {
        let mut r = rng(3);
        let n = 20_000;
        let mut counts = [0u32; 5];
        for _ in 0..n {
            counts[epsilon_greedy(&[9.0, 0.0, 0.0, 0.0, 0.0], 1.0, &mut r).unwrap()] += 1;
        }
        // mean 4000, sigma ~ 56.6; allow 5 sigma
        for (i, &c) in counts.iter().enumerate() {
            assert!((3717..=4283).contains(&c), "action {i} drawn {c} times");
        }
    }

    #[test]
    fn half_epsilon_favors_the_argmax_by_the_mixture_rate() {
        let mut r = rng(4);
        let n = 40_000;
        let mut hits = 0u32;
        for _ in 0..n {
            if epsilon_greedy(&[3.0, 1.0, 1.0, 1.0, 1.0], 0.5, &mut r).unwrap() == 0 {
                hits += 1;
            }
        }
        // p = 0.5 + 0.5/5 = 0.6, sigma ~ 98; allow 5 sigma
        let want = 0.6 * n as f64;
        assert!((hits as f64 - want).abs() < 490.0, "hits = {hits}");
    }

    #[test]
    fn greedy_breaks_ties_uniformly() {
        let mut r = rng(5);
        let n = 20_000;
        let mut counts = [0u32; 5];
        for _ in 0..n {
            counts[greedy(&[7.0, 7.0, 0.0, 7.0, -1.0], &mut r)] += 1;
        }
        assert_eq!(counts[2] + counts[4], 0);
        for i in [0, 1, 3] {
            // mean 6667, sigma ~ 66.7; allow 5 sigma
            assert!(
                (6333..=7000).contains(&counts[i]),
                "action {i} drawn {} times",
                counts[i]
            );
        }
    }

    #[test]
    fn linear_epsilon_reaches_zero_exactly_at_the_last_step() {
        let s = ExplorationSchedule::epsilon_greedy();
        let total = 1000;
        assert_eq!(s.value_at(0, total), 1.0);
        assert_eq!(s.value_at(total - 1, total), 0.0);
        assert!((s.value_at(499, total) - (1.0 - 499.0 / 999.0)).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for t in 0..total {
            let v = s.value_at(t, total);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn exponential_temperature_reaches_its_floor_exactly() {
        let s = ExplorationSchedule::default();
        let total = 500;
        assert_eq!(s.value_at(0, total), 1.0);
        assert!((s.value_at(total - 1, total) - 0.05).abs() < 1e-15);
        let mid = s.value_at(250, total);
        let expect = 1.0 * (0.05f64 / 1.0).powf(250.0 / 499.0);
        assert!((mid - expect).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for t in 0..total {
            let v = s.value_at(t, total);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn degenerate_and_overflow_steps_clamp_to_the_terminal_value() {
        let s = ExplorationSchedule::default();
        assert_eq!(s.value_at(0, 1), 0.05);
        assert_eq!(s.value_at(99, 10), 0.05);
        assert_eq!(s.value_at(0, 0), 0.05);
    }

    #[test]
    fn schedules_validate_their_bounds() {
        ExplorationSchedule::default().validate().unwrap();
        ExplorationSchedule::epsilon_greedy().validate().unwrap();
        let bad = ExplorationSchedule {
            kind: ExploreKind::Softmax,
            start: 1.0,
            end: 0.0,
            test_tau: 0.1,
        };
        assert!(bad.validate().is_err());
        let rising = ExplorationSchedule {
            kind: ExploreKind::EpsilonGreedy,
            start: 0.1,
            end: 0.9,
            test_tau: 0.1,
        };
        assert!(rising.validate().is_err());
        let cold = ExplorationSchedule {
            test_tau: 0.0,
            ..ExplorationSchedule::default()
        };
        assert!(cold.validate().is_err());
    }

    #[test]
    fn invalid_selection_inputs_are_domain_errors() {
        let mut r = rng(6);
        assert!(softmax_probs(&[1.0], 0.0).is_err());
        assert!(softmax_probs(&[], 1.0).is_err());
        assert!(epsilon_greedy(&[1.0], 1.5, &mut r).is_err());
    }
}
