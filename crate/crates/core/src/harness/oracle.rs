use serde::Serialize;

use super::HarnessError;
use crate::config::NetworkConfig;
use crate::env::{step_downlink, step_uplink, EnvStreams, Phase, WorldState};
use crate::reward::{episode_dl_utility, episode_ul_utility, EpisodeLedger, RewardWeights};
use crate::rng::RngStream;

pub const ORACLE_MAX_ALLOCATIONS: usize = 4096;

/// `m^n`, or `None` on overflow.
pub fn allocation_count(n_ues: usize, m_mbs: usize) -> Option<usize> {
    m_mbs.checked_pow(u32::try_from(n_ues).ok()?)
}

/// One allocation's single-iteration outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub alloc: Vec<usize>,
    pub dl_latency_mean: f64,
    pub earning_min: f64,
    pub dl_utility: f64,
    pub ul_latency_mean: f64,
    pub ul_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Index into `table` of the lowest DL utility; first on ties.
    pub best: usize,
    pub table: Vec<OracleRow>,
}

impl OracleResult {
    pub fn best_row(&self) -> &OracleRow {
        &self.table[self.best]
    }

    pub fn row(&self, alloc: &[usize]) -> Option<&OracleRow> {
        self.table.iter().find(|r| r.alloc == alloc)
    }
}

/// Allocation number `k` with UE 0 as the least significant digit.
fn decode(mut k: usize, n: usize, m: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let c = k % m;
            k /= m;
            c
        })
        .collect()
}

/// Enumerates every allocation of `snapshot` and evaluates one DL/UL
/// iteration with the environment's own step functions.
///
/// Utilities cover this iteration only, whatever the snapshot's history.
/// `ul_powers` fixes the uplink so the UL columns are comparable.
pub fn brute_force_allocation_oracle(
    snapshot: &WorldState,
    cfg: &NetworkConfig,
    weights: &RewardWeights,
    ul_powers: &[f64],
) -> Result<OracleResult, HarnessError> {
    let (n, m) = (cfg.n_ues, cfg.m_mbs);
    let count = match allocation_count(n, m) {
        Some(c) if c <= ORACLE_MAX_ALLOCATIONS => c,
        _ => {
            return Err(HarnessError::OracleTooLarge {
                count: format!("{m}^{n}"),
                limit: ORACLE_MAX_ALLOCATIONS,
            })
        }
    };
    if snapshot.phase != Phase::Downlink {
        return Err(HarnessError::Spec("oracle snapshot must be at the start of an iteration".into()));
    }
    // The uplink step draws the next iteration's inputs; those are discarded.
    let scratch = EnvStreams::new(&RngStream::new(0));
    let mut table = Vec::with_capacity(count);
    for k in 0..count {
        let alloc = decode(k, n, m);
        let mut world = snapshot.clone();
        let mut ledger = EpisodeLedger::new(n);
        let dl = step_downlink(&mut world, cfg, &alloc)?;
        ledger.push_downlink(&dl)?;
        let ul = step_uplink(&mut world, cfg, ul_powers, &mut scratch.clone())?;
        ledger.push_uplink(&ul.outcome, ul.depleted)?;
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        table.push(OracleRow {
            dl_latency_mean: mean(&dl.latencies),
            earning_min: ledger.min_cum_earning(),
            dl_utility: episode_dl_utility(&ledger, weights),
            ul_latency_mean: mean(&ul.outcome.latencies),
            ul_utility: episode_ul_utility(&ledger, weights),
            alloc,
        });
    }
    let best = (0..table.len())
        .min_by(|&a, &b| table[a].dl_utility.total_cmp(&table[b].dl_utility))
        .expect("at least one allocation");
    Ok(OracleResult { best, table })
}
