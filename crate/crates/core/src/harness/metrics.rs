//! Per-episode metrics, the CSV schema and cross-seed summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("safety rate of an empty step log")]
    EmptyLog,
}

/// One line of `metrics.csv`; one per agent and episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub seed: u64,
    pub agent_id: usize,
    pub reward: f64,
    pub collisions: usize,
    pub steps: usize,
    pub corrections: usize,
    pub recomputes: usize,
    pub synthesis_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortKind {
    UnsafeStart,
    LabelMismatch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub seed: u64,
    pub rewards: Vec<f64>,
    /// Collisions each agent took part in.
    pub agent_collisions: Vec<usize>,
    /// Colliding pairs summed over the episode.
    pub collisions: usize,
    pub steps: usize,
    pub corrections: Vec<usize>,
    /// Shields synthesized that monitored each agent.
    pub agent_recomputes: Vec<usize>,
    pub agent_synthesis_ms: Vec<f64>,
    pub recomputes: usize,
    pub synthesis_ms: f64,
    /// Steps with at least one collision.
    pub colliding_steps: usize,
    pub abort: Option<AbortKind>,
}

impl EpisodeMetrics {
    pub fn new(episode: usize, seed: u64, agents: usize) -> Self {
        Self {
            episode,
            seed,
            rewards: vec![0.0; agents],
            agent_collisions: vec![0; agents],
            collisions: 0,
            steps: 0,
            corrections: vec![0; agents],
            agent_recomputes: vec![0; agents],
            agent_synthesis_ms: vec![0.0; agents],
            recomputes: 0,
            synthesis_ms: 0.0,
            colliding_steps: 0,
            abort: None,
        }
    }

    pub fn team_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn total_corrections(&self) -> usize {
        self.corrections.iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = MetricsRow> + '_ {
        (0..self.rewards.len()).map(move |i| MetricsRow {
            episode: self.episode,
            seed: self.seed,
            agent_id: i,
            reward: self.rewards[i],
            collisions: self.agent_collisions[i],
            steps: self.steps,
            corrections: self.corrections[i],
            recomputes: self.agent_recomputes[i],
            synthesis_ms: self.agent_synthesis_ms[i],
        })
    }
}

/// `1 - colliding steps / steps` for a log of per-step collision counts.
pub fn safety_rate(log: &[usize]) -> Result<f64, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let bad = log.iter().filter(|&&c| c > 0).count();
    Ok(1.0 - bad as f64 / log.len() as f64)
}

/// Headline numbers of one training run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// Best team reward among the last 10% of episodes.
    pub max_reward: f64,
    pub total_collisions: usize,
    /// Fewest steps among the last 10% of episodes.
    pub min_steps: usize,
    /// Mean steps over the last 10% of episodes.
    pub mean_final_steps: f64,
    pub total_corrections: usize,
    pub total_recomputes: usize,
    pub safety_rate: f64,
    pub unsafe_starts: usize,
    pub label_mismatches: usize,
}

/// Last 10% of the episodes, at least one.
pub fn tail(episodes: &[EpisodeMetrics]) -> &[EpisodeMetrics] {
    let n = episodes.len();
    let keep = n.div_ceil(10).max(1).min(n);
    &episodes[n - keep..]
}

impl SeedSummary {
    pub fn from_episodes(seed: u64, episodes: &[EpisodeMetrics]) -> Self {
        let last = tail(episodes);
        let steps: usize = episodes.iter().map(|e| e.steps).sum();
        let colliding: usize = episodes.iter().map(|e| e.colliding_steps).sum();
        let count = |kind| episodes.iter().filter(|e| e.abort == Some(kind)).count();
        Self {
            seed,
            max_reward: last.iter().map(EpisodeMetrics::team_reward).fold(f64::NEG_INFINITY, f64::max),
            total_collisions: episodes.iter().map(|e| e.collisions).sum(),
            min_steps: last.iter().map(|e| e.steps).min().unwrap_or(0),
            mean_final_steps: last.iter().map(|e| e.steps as f64).sum::<f64>() / last.len().max(1) as f64,
            total_corrections: episodes.iter().map(EpisodeMetrics::total_corrections).sum(),
            total_recomputes: episodes.iter().map(|e| e.recomputes).sum(),
            safety_rate: if steps == 0 { 1.0 } else { 1.0 - colliding as f64 / steps as f64 },
            unsafe_starts: count(AbortKind::UnsafeStart),
            label_mismatches: count(AbortKind::LabelMismatch),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub algorithm: String,
    pub map: String,
    pub k: usize,
    pub episodes: usize,
    pub max_reward: MeanStd,
    pub total_collisions: MeanStd,
    pub min_steps: MeanStd,
    pub mean_final_steps: MeanStd,
    pub safety_rate: MeanStd,
    pub unsafe_starts: usize,
    pub label_mismatches: usize,
    pub seeds: Vec<SeedSummary>,
}

impl Summary {
    pub fn aggregate(algorithm: &str, map: &str, k: usize, episodes: usize, seeds: Vec<SeedSummary>) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            map: map.to_string(),
            k,
            episodes,
            max_reward: MeanStd::of(seeds.iter().map(|s| s.max_reward)),
            total_collisions: MeanStd::of(seeds.iter().map(|s| s.total_collisions as f64)),
            min_steps: MeanStd::of(seeds.iter().map(|s| s.min_steps as f64)),
            mean_final_steps: MeanStd::of(seeds.iter().map(|s| s.mean_final_steps)),
            safety_rate: MeanStd::of(seeds.iter().map(|s| s.safety_rate)),
            unsafe_starts: seeds.iter().map(|s| s.unsafe_starts).sum(),
            label_mismatches: seeds.iter().map(|s| s.label_mismatches).sum(),
            seeds,
        }
    }

    pub fn collisions(&self) -> usize {
        self.seeds.iter().map(|s| s.total_collisions).sum()
    }

    pub fn aborts(&self) -> usize {
        self.unsafe_starts + self.label_mismatches
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn safety_rate_examples() {
        assert_eq!(safety_rate(&[0; 100]), Ok(1.0));
        let mut log = vec![0; 100];
        log[3] = 1;
        log[50] = 2;
        assert!((safety_rate(&log).unwrap() - 0.98).abs() < 1e-12);
        assert_eq!(safety_rate(&[1, 3, 1]), Ok(0.0));
        assert_eq!(safety_rate(&[]), Err(MetricsError::EmptyLog));
    }

    #[test]
    fn tail_is_last_tenth() {
        let eps: Vec<EpisodeMetrics> = (0..25)
            .map(|e| {
                let mut m = EpisodeMetrics::new(e, 0, 1);
                m.steps = 100 - e;
                m.rewards[0] = e as f64;
                m
            })
            .collect();
        assert_eq!(tail(&eps).len(), 3);
        let s = SeedSummary::from_episodes(0, &eps);
        assert_eq!(s.min_steps, 76);
        assert_eq!(s.max_reward, 24.0);
        assert_eq!(tail(&eps[..1]).len(), 1);
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of([1.0, 3.0]);
        assert_eq!(m, MeanStd { mean: 2.0, std: 1.0 });
    }
}
