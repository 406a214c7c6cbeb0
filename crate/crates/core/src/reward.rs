//! Earning potential, per-step agent rewards and episode utilities.
//!
//! Utilities are costs (lower is better). Rewards are what the agents
//! maximize. Cumulative quantities are running sums over the steps of the
//! current episode, up to and including the step being rewarded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::NetworkConfig;
use crate::env::{DlOutcome, UlOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("ledger mismatch: {0}")]
    LedgerMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub q: f64,
    pub h: f64,
    pub b: f64,
    pub f: f64,
    pub profitability: f64,
    pub w1: f64,
    pub w2: f64,
    pub varkappa: f64,
    pub penalty: f64,
    pub literal_ul_reward: bool,
}

impl From<&NetworkConfig> for RewardWeights {
    fn from(cfg: &NetworkConfig) -> Self {
        Self {
            q: cfg.weight_q,
            h: cfg.weight_h,
            b: cfg.scale_b,
            f: cfg.scale_f,
            profitability: cfg.profitability,
            w1: cfg.weight_w1,
            w2: cfg.weight_w2,
            varkappa: cfg.varkappa,
            penalty: cfg.penalty,
            literal_ul_reward: cfg.literal_ul_reward,
        }
    }
}

/// `P * ln(1 + r)` with `r` in bits/s.
pub fn earning_potential(rate: f64, profitability: f64) -> f64 {
    profitability * rate.ln_1p()
}

/// Raw per-step, per-UE quantities of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLedger {
    pub n_ues: usize,
    pub dl_latency: Vec<Vec<f64>>,
    pub earning: Vec<Vec<f64>>,
    pub ul_latency: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub cum_earning: Vec<f64>,
    pub cum_q: Vec<f64>,
    pub depleted: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl EpisodeLedger {
    pub fn new(n_ues: usize) -> Self {
        Self {
            n_ues,
            cum_earning: vec![0.0; n_ues],
            cum_q: vec![0.0; n_ues],
            ..Default::default()
        }
    }

    pub fn push_downlink(&mut self, dl: &DlOutcome) -> Result<(), RewardError> {
        if dl.latencies.len() != self.n_ues {
            return Err(RewardError::LedgerMismatch(format!(
                "downlink outcome has {} UEs, ledger {}",
                dl.latencies.len(),
                self.n_ues
            )));
        }
        if self.dl_latency.len() != self.ul_latency.len() {
            return Err(RewardError::LedgerMismatch("downlink recorded twice in one step".into()));
        }
        for (acc, w) in self.cum_earning.iter_mut().zip(&dl.earnings) {
            *acc += w;
        }
        self.dl_latency.push(dl.latencies.clone());
        self.earning.push(dl.earnings.clone());
        Ok(())
    }

    pub fn push_uplink(&mut self, ul: &UlOutcome, depleted: bool) -> Result<(), RewardError> {
        if ul.latencies.len() != self.n_ues {
            return Err(RewardError::LedgerMismatch(format!(
                "uplink outcome has {} UEs, ledger {}",
                ul.latencies.len(),
                self.n_ues
            )));
        }
        if self.dl_latency.len() != self.ul_latency.len() + 1 {
            return Err(RewardError::LedgerMismatch("uplink recorded without a downlink".into()));
        }
        for (acc, q) in self.cum_q.iter_mut().zip(&ul.q_fractions) {
            *acc += q;
        }
        self.ul_latency.push(ul.latencies.clone());
        self.q.push(ul.q_fractions.clone());
        self.depleted |= depleted;
        Ok(())
    }

    /// Completed iterations (downlink and uplink both recorded).
    pub fn steps(&self) -> usize {
        self.ul_latency.len()
    }

    pub fn min_cum_earning(&self) -> f64 {
        min_of(&self.cum_earning)
    }

    pub fn max_cum_q(&self) -> f64 {
        max_of(&self.cum_q)
    }

    pub fn min_cum_q(&self) -> f64 {
        min_of(&self.cum_q)
    }

    fn check_current(&self, ul: &UlOutcome) -> Result<(), RewardError> {
        match self.ul_latency.last() {
            Some(last) if *last == ul.latencies => Ok(()),
            Some(_) => Err(RewardError::LedgerMismatch("outcome is not the latest ledger step".into())),
            None => Err(RewardError::LedgerMismatch("ledger has no completed step".into())),
        }
    }
}

/// Uplink agent reward for the latest ledger step.
///
/// Default: `-h * mean(l_u) - (1-h) * f * max_i cumQ_i`. With
/// `literal_ul_reward` the battery term is `+(1-h) * f * min_i cumQ_i`.
pub fn uplink_reward(
    ul: &UlOutcome,
    ledger: &EpisodeLedger,
    w: &RewardWeights,
    depleted: bool,
) -> Result<f64, RewardError> {
    ledger.check_current(ul)?;
    if depleted {
        return Ok(w.penalty);
    }
    let latency = -w.h * mean(&ul.latencies);
    let battery = if w.literal_ul_reward {
        (1.0 - w.h) * w.f * ledger.min_cum_q()
    } else {
        -(1.0 - w.h) * w.f * ledger.max_cum_q()
    };
    Ok(latency + battery)
}

/// Downlink agent reward; needs the same step's uplink reward.
pub fn downlink_reward(
    dl: &DlOutcome,
    ledger: &EpisodeLedger,
    w: &RewardWeights,
    depleted: bool,
    ul_reward: f64,
) -> Result<f64, RewardError> {
    match ledger.dl_latency.last() {
        Some(last) if *last == dl.latencies => {}
        _ => return Err(RewardError::LedgerMismatch("downlink outcome is not the latest ledger step".into())),
    }
    if ledger.steps() != ledger.dl_latency.len() {
        return Err(RewardError::LedgerMismatch("uplink of this step not yet recorded".into()));
    }
    if depleted {
        return Ok(w.penalty);
    }
    Ok(-w.q * mean(&dl.latencies) + (1.0 - w.q) * w.b * ledger.min_cum_earning() + w.varkappa * ul_reward)
}

/// Common reward of the centralized baseline: the negated per-step share of
/// the overall objective.
pub fn common_reward(
    dl: &DlOutcome,
    ul: &UlOutcome,
    ledger: &EpisodeLedger,
    w: &RewardWeights,
    depleted: bool,
) -> Result<f64, RewardError> {
    ledger.check_current(ul)?;
    if depleted {
        return Ok(w.penalty);
    }
    let dl_cost = w.q * mean(&dl.latencies) - (1.0 - w.q) * w.b * ledger.min_cum_earning();
    let ul_cost = w.h * mean(&ul.latencies) + (1.0 - w.h) * w.f * ledger.max_cum_q();
    Ok(-(w.w1 * dl_cost + w.w2 * ul_cost))
}

fn total_mean_latency(rows: &[Vec<f64>], n_ues: usize) -> f64 {
    rows.iter().flatten().sum::<f64>() / n_ues as f64
}

pub fn episode_dl_utility(ledger: &EpisodeLedger, w: &RewardWeights) -> f64 {
    w.q * total_mean_latency(&ledger.dl_latency, ledger.n_ues) - (1.0 - w.q) * w.b * ledger.min_cum_earning()
}

pub fn episode_ul_utility(ledger: &EpisodeLedger, w: &RewardWeights) -> f64 {
    w.h * total_mean_latency(&ledger.ul_latency, ledger.n_ues) + (1.0 - w.h) * w.f * ledger.max_cum_q()
}

pub fn overall_objective(ledger: &EpisodeLedger, w: &RewardWeights) -> f64 {
    w.w1 * episode_dl_utility(ledger, w) + w.w2 * episode_ul_utility(ledger, w)
}
