use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::reward::{episode_dl_utility, episode_ul_utility, EpisodeLedger, RewardWeights};

/// Per-episode metrics. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Zero-based episode index within the run.
    pub episode: usize,
    /// Global environment iteration count when the episode ended.
    pub env_step: usize,
    /// Iterations survived in this episode.
    pub steps: usize,
    pub depleted: bool,
    /// Mean downlink latency over iterations and UEs (s).
    pub dl_delay_mean: f64,
    /// Mean uplink latency over iterations and UEs (s).
    pub ul_delay_mean: f64,
    /// Worst-case (minimum over UEs) cumulative earning potential.
    pub earning_min: f64,
    pub earning_mean: f64,
    /// Worst-case (maximum over UEs) cumulative battery consumption (%).
    pub battery_pct_max: f64,
    pub battery_pct_mean: f64,
    pub dl_utility: f64,
    pub ul_utility: f64,
    /// Sum over iterations of the downlink agent reward.
    pub reward_dl_sum: f64,
    /// Sum over iterations of the uplink agent reward.
    pub reward_ul_sum: f64,
}

pub const CSV_COLUMNS: [&str; 14] = [
    "episode",
    "env_step",
    "steps",
    "depleted",
    "dl_delay_mean",
    "ul_delay_mean",
    "earning_min",
    "earning_mean",
    "battery_pct_max",
    "battery_pct_mean",
    "dl_utility",
    "ul_utility",
    "reward_dl_sum",
    "reward_ul_sum",
];

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl MetricsRecord {
    pub fn from_ledger(
        episode: usize,
        env_step: usize,
        ledger: &EpisodeLedger,
        w: &RewardWeights,
        reward_dl_sum: f64,
        reward_ul_sum: f64,
    ) -> Self {
        let flat = |rows: &[Vec<f64>]| rows.iter().flatten().copied().collect::<Vec<f64>>();
        Self {
            episode,
            env_step,
            steps: ledger.steps(),
            depleted: ledger.depleted,
            dl_delay_mean: mean(&flat(&ledger.dl_latency)),
            ul_delay_mean: mean(&flat(&ledger.ul_latency)),
            earning_min: ledger.min_cum_earning(),
            earning_mean: mean(&ledger.cum_earning),
            battery_pct_max: ledger.max_cum_q(),
            battery_pct_mean: mean(&ledger.cum_q),
            dl_utility: episode_dl_utility(ledger, w),
            ul_utility: episode_ul_utility(ledger, w),
            reward_dl_sum,
            reward_ul_sum,
        }
    }

    pub fn reward_sum(&self) -> f64 {
        self.reward_dl_sum + self.reward_ul_sum
    }
}

/// Writes `records` as CSV with the fixed header.
pub fn write_metrics_csv(records: &[MetricsRecord], out: impl Write) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(input: impl std::io::Read) -> csv::Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Losses of one update phase, averaged over its minibatches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update: usize,
    pub env_step: usize,
    pub actor_dl: f64,
    pub actor_ul: f64,
    pub critic_ul: f64,
    pub critic_dl: f64,
    pub critic_combined: f64,
    pub clip_fraction_dl: f64,
    pub clip_fraction_ul: f64,
    pub target_syncs: usize,
    /// Milliseconds since the run started. Not deterministic.
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub updates: Vec<UpdateRecord>,
    pub episodes: Vec<MetricsRecord>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine<'a> {
    Update(&'a UpdateRecord),
    Episode(&'a MetricsRecord),
}

impl TrainingLog {
    /// One JSON object per line, updates and episodes interleaved in
    /// environment-step order.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        let (mut u, mut e) = (0, 0);
        while u < self.updates.len() || e < self.episodes.len() {
            let take_episode = match (self.updates.get(u), self.episodes.get(e)) {
                (Some(up), Some(ep)) => ep.env_step <= up.env_step,
                (None, Some(_)) => true,
                _ => false,
            };
            let line = if take_episode {
                e += 1;
                LogLine::Episode(&self.episodes[e - 1])
            } else {
                u += 1;
                LogLine::Update(&self.updates[u - 1])
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_wall_clock(&self) -> Self {
        let mut copy = self.clone();
        copy.updates.iter_mut().for_each(|u| u.wall_ms = 0);
        copy
    }
}
