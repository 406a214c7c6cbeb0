//! The episodic DL-then-UL transmission environment.
//!
//! One iteration is a downlink phase (the allocation is chosen) followed by
//! an uplink phase (transmit powers are chosen). Channel gains, data sizes
//! and downlink powers are drawn once per iteration. UEs move after the
//! uplink phase. An episode ends after `t_steps` iterations, or earlier when
//! any battery goes negative.
//!
//! Observation features are normalized: gains by `1/sqrt(beta0)`, downlink
//! sizes by `1/dl_data_max`, battery percentages by `1/100`.

pub mod noma;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{gain_matrix, GainMatrix, Position};
use crate::config::NetworkConfig;
use crate::reward::earning_potential;
use crate::rng::RngStream;

pub use noma::{downlink_rates, order_downlink, order_uplink, uplink_rates};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("episode is over")]
    EpisodeDone,
    #[error("expected the {expected} phase")]
    WrongPhase { expected: &'static str },
    #[error("expected {expected} entries, got {got}")]
    Length { expected: usize, got: usize },
    #[error("UE {ue} assigned to MBS {mbs}, valid range is 0..{m_mbs}")]
    InvalidMbs { ue: usize, mbs: usize, m_mbs: usize },
    #[error("UE {ue} uplink power {power} W outside [{min}, {max}]")]
    PowerOutOfRange { ue: usize, power: f64, min: f64, max: f64 },
    #[error("zero rate")]
    ZeroRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Downlink,
    Uplink,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// 1-based iteration index.
    pub step: usize,
    pub ue_positions: Vec<Position>,
    pub mbs_positions: Vec<Position>,
    pub gains: GainMatrix,
    pub dl_sizes: Vec<f64>,
    pub ul_sizes: Vec<f64>,
    pub dl_powers: Vec<f64>,
    pub battery: Vec<f64>,
    pub battery_init: f64,
    /// Running sum of uplink energy per UE; `battery = battery_init - energy_spent`.
    pub energy_spent: Vec<f64>,
    /// Zero-based MBS index per UE, set by the downlink phase.
    pub alloc: Vec<usize>,
    pub cum_q: Vec<f64>,
    pub cum_earning: Vec<f64>,
    pub phase: Phase,
    pub done: bool,
    pub depleted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlOutcome {
    pub rates: Vec<f64>,
    pub latencies: Vec<f64>,
    pub earnings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlOutcome {
    pub rates: Vec<f64>,
    pub latencies: Vec<f64>,
    pub energies: Vec<f64>,
    pub q_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UlStep {
    pub outcome: UlOutcome,
    pub done: bool,
    pub depleted: bool,
}

/// One record per phase when tracing is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum TraceRecord {
    Downlink {
        step: usize,
        /// `(re, im)` per link, row-major.
        gains: Vec<(f64, f64)>,
        alloc: Vec<usize>,
        powers: Vec<f64>,
        rates: Vec<f64>,
        latencies: Vec<f64>,
    },
    Uplink {
        step: usize,
        powers: Vec<f64>,
        rates: Vec<f64>,
        latencies: Vec<f64>,
        energies: Vec<f64>,
        battery: Vec<f64>,
    },
}

/// Independent random streams used by the environment.
#[derive(Debug, Clone)]
pub struct EnvStreams {
    pub placement: RngStream,
    pub mobility: RngStream,
    pub channel: RngStream,
    pub traffic: RngStream,
}

impl EnvStreams {
    pub fn new(root: &RngStream) -> Self {
        Self {
            placement: root.fork("placement"),
            mobility: root.fork("mobility"),
            channel: root.fork("channel"),
            traffic: root.fork("traffic"),
        }
    }
}

fn random_position(cfg: &NetworkConfig, rng: &mut RngStream) -> Position {
    Position::new(rng.uniform(0.0, cfg.area_x_max), rng.uniform(0.0, cfg.area_y_max))
}

/// One axis of the bounded random walk: clamps to `[0, bound]`.
pub fn clamp_step(prev: f64, delta: f64, bound: f64) -> f64 {
    let next = prev + delta;
    if next <= 0.0 {
        0.0
    } else if next >= bound {
        bound
    } else {
        next
    }
}

/// Fresh world with the given MBS sites and random UE positions.
pub fn init_world_at(cfg: &NetworkConfig, mbs_positions: Vec<Position>, streams: &mut EnvStreams) -> WorldState {
    let n = cfg.n_ues;
    let ue_positions = (0..n).map(|_| random_position(cfg, &mut streams.placement)).collect();
    let mut world = WorldState {
        step: 1,
        ue_positions,
        mbs_positions,
        gains: GainMatrix {
            n_ues: n,
            m_mbs: cfg.m_mbs,
            step: 1,
            gains: Vec::new(),
        },
        dl_sizes: vec![0.0; n],
        ul_sizes: vec![0.0; n],
        dl_powers: vec![0.0; n],
        battery: vec![cfg.battery_init; n],
        battery_init: cfg.battery_init,
        energy_spent: vec![0.0; n],
        alloc: vec![0; n],
        cum_q: vec![0.0; n],
        cum_earning: vec![0.0; n],
        phase: Phase::Downlink,
        done: false,
        depleted: false,
    };
    sample_iteration_inputs(&mut world, cfg, streams);
    world
}

/// Fresh world; MBS sites drawn first from the placement stream.
pub fn init_world(cfg: &NetworkConfig, streams: &mut EnvStreams) -> WorldState {
    let mbs = (0..cfg.m_mbs).map(|_| random_position(cfg, &mut streams.placement)).collect();
    init_world_at(cfg, mbs, streams)
}

pub fn sample_mobility(world: &mut WorldState, cfg: &NetworkConfig, rng: &mut RngStream) {
    for p in &mut world.ue_positions {
        let dx = rng.uniform(-cfg.step_x_max, cfg.step_x_max);
        let dy = rng.uniform(-cfg.step_y_max, cfg.step_y_max);
        p.x = clamp_step(p.x, dx, cfg.area_x_max);
        p.y = clamp_step(p.y, dy, cfg.area_y_max);
    }
}

/// Draws sizes and downlink powers from the traffic stream and regenerates
/// the gain matrix from the channel stream.
pub fn sample_iteration_inputs(world: &mut WorldState, cfg: &NetworkConfig, streams: &mut EnvStreams) {
    let rng = &mut streams.traffic;
    for i in 0..cfg.n_ues {
        world.dl_sizes[i] = rng.uniform(cfg.dl_data_min, cfg.dl_data_max);
        world.ul_sizes[i] = rng.uniform(cfg.ul_data_min, cfg.ul_data_max);
        world.dl_powers[i] = rng.uniform(cfg.p_dl_min, cfg.p_dl_max);
    }
    world.gains = gain_matrix(&world.ue_positions, &world.mbs_positions, cfg, &mut streams.channel, world.step);
}

pub fn downlink_latency(size_bits: f64, rate: f64) -> Result<f64, EnvError> {
    if rate <= 0.0 {
        return Err(EnvError::ZeroRate);
    }
    Ok(size_bits / rate)
}

/// Rate of one UE under the world's current allocation.
pub fn downlink_rate(world: &WorldState, cfg: &NetworkConfig, ue: usize) -> f64 {
    downlink_rates(&world.gains, &world.dl_powers, &world.alloc, cfg.bandwidth_hz, cfg.noise_psd_dl)[ue]
}

pub fn uplink_rate(world: &WorldState, cfg: &NetworkConfig, ul_powers: &[f64], ue: usize) -> f64 {
    uplink_rates(&world.gains, ul_powers, &world.alloc, cfg.bandwidth_hz, cfg.noise_psd_ul)[ue]
}

/// Energy in J and the matching percentage of the initial battery.
pub fn uplink_energy_and_q(p_ul: f64, latency: f64, battery_init: f64) -> (f64, f64) {
    let energy = p_ul * latency;
    (energy, 100.0 * energy / battery_init)
}

/// `log10(|g| / sqrt(beta0))`, floored at -6 for a zero channel.
fn gain_features(world: &WorldState, cfg: &NetworkConfig, out: &mut Vec<f64>) {
    let scale = cfg.beta0.sqrt();
    out.extend(world.gains.gains.iter().map(|g| gain_feature(g.norm() / scale)));
}

fn gain_feature(normalized: f64) -> f64 {
    normalized.max(1e-6).log10()
}

/// Gain features row-major then downlink sizes; length `N*M + N`.
pub fn dl_observation(world: &WorldState, cfg: &NetworkConfig) -> Vec<f64> {
    let mut obs = Vec::with_capacity(cfg.n_ues * (cfg.m_mbs + 1));
    gain_features(world, cfg, &mut obs);
    obs.extend(world.dl_sizes.iter().map(|d| d / cfg.dl_data_max));
    obs
}

/// Gain features row-major then remaining battery; length `N*M + N`.
pub fn ul_observation(world: &WorldState, cfg: &NetworkConfig) -> Vec<f64> {
    let mut obs = Vec::with_capacity(cfg.n_ues * (cfg.m_mbs + 1));
    gain_features(world, cfg, &mut obs);
    obs.extend(world.battery.iter().map(|b| b / world.battery_init));
    obs
}

pub fn observation_len(cfg: &NetworkConfig) -> usize {
    cfg.n_ues * cfg.m_mbs + cfg.n_ues
}

/// Downlink phase: applies `alloc` and computes rates, latencies, earnings.
pub fn step_downlink(world: &mut WorldState, cfg: &NetworkConfig, alloc: &[usize]) -> Result<DlOutcome, EnvError> {
    match world.phase {
        Phase::Done => return Err(EnvError::EpisodeDone),
        Phase::Uplink => return Err(EnvError::WrongPhase { expected: "uplink" }),
        Phase::Downlink => {}
    }
    if alloc.len() != cfg.n_ues {
        return Err(EnvError::Length {
            expected: cfg.n_ues,
            got: alloc.len(),
        });
    }
    if let Some((ue, &mbs)) = alloc.iter().enumerate().find(|(_, &c)| c >= cfg.m_mbs) {
        return Err(EnvError::InvalidMbs {
            ue,
            mbs,
            m_mbs: cfg.m_mbs,
        });
    }
    world.alloc.copy_from_slice(alloc);
    let rates = downlink_rates(&world.gains, &world.dl_powers, alloc, cfg.bandwidth_hz, cfg.noise_psd_dl);
    let latencies = world
        .dl_sizes
        .iter()
        .zip(&rates)
        .map(|(&d, &r)| downlink_latency(d, r))
        .collect::<Result<Vec<_>, _>>()?;
    let earnings: Vec<f64> = rates.iter().map(|&r| earning_potential(r, cfg.profitability)).collect();
    for (acc, w) in world.cum_earning.iter_mut().zip(&earnings) {
        *acc += w;
    }
    world.phase = Phase::Uplink;
    Ok(DlOutcome {
        rates,
        latencies,
        earnings,
    })
}

/// Uplink phase: charges batteries, then ends the episode or moves UEs and
/// draws the next iteration's inputs.
pub fn step_uplink(
    world: &mut WorldState,
    cfg: &NetworkConfig,
    ul_powers: &[f64],
    streams: &mut EnvStreams,
) -> Result<UlStep, EnvError> {
    match world.phase {
        Phase::Done => return Err(EnvError::EpisodeDone),
        Phase::Downlink => return Err(EnvError::WrongPhase { expected: "downlink" }),
        Phase::Uplink => {}
    }
    if ul_powers.len() != cfg.n_ues {
        return Err(EnvError::Length {
            expected: cfg.n_ues,
            got: ul_powers.len(),
        });
    }
    for (ue, &power) in ul_powers.iter().enumerate() {
        if !(cfg.p_ul_min..=cfg.p_ul_max).contains(&power) {
            return Err(EnvError::PowerOutOfRange {
                ue,
                power,
                min: cfg.p_ul_min,
                max: cfg.p_ul_max,
            });
        }
    }
    let rates = uplink_rates(&world.gains, ul_powers, &world.alloc, cfg.bandwidth_hz, cfg.noise_psd_ul);
    let latencies = world
        .ul_sizes
        .iter()
        .zip(&rates)
        .map(|(&f, &r)| downlink_latency(f, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut energies = Vec::with_capacity(cfg.n_ues);
    let mut q_fractions = Vec::with_capacity(cfg.n_ues);
    for i in 0..cfg.n_ues {
        let (e, q) = uplink_energy_and_q(ul_powers[i], latencies[i], world.battery_init);
        energies.push(e);
        q_fractions.push(q);
        world.energy_spent[i] += e;
        world.battery[i] = world.battery_init - world.energy_spent[i];
        world.cum_q[i] = 100.0 * world.energy_spent[i] / world.battery_init;
    }
    let depleted = world.battery.iter().any(|&b| b < 0.0);
    if depleted || world.step >= cfg.t_steps {
        world.done = true;
        world.depleted = depleted;
        world.phase = Phase::Done;
    } else {
        sample_mobility(world, cfg, &mut streams.mobility);
        world.step += 1;
        sample_iteration_inputs(world, cfg, streams);
        world.phase = Phase::Downlink;
    }
    Ok(UlStep {
        outcome: UlOutcome {
            rates,
            latencies,
            energies,
            q_fractions,
        },
        done: world.done,
        depleted,
    })
}

/// Stateful wrapper: owns the config, streams, current world and the
/// optional trace.
#[derive(Debug, Clone)]
pub struct MecEnv {
    cfg: NetworkConfig,
    streams: EnvStreams,
    mbs_positions: Vec<Position>,
    frozen: Option<WorldState>,
    world: WorldState,
    trace: Option<Vec<TraceRecord>>,
}

impl MecEnv {
    /// MBS sites are drawn once here and kept for every episode.
    pub fn new(cfg: NetworkConfig, root: &RngStream) -> Self {
        let mut streams = EnvStreams::new(root);
        let world = init_world(&cfg, &mut streams);
        let mbs_positions = world.mbs_positions.clone();
        Self {
            cfg,
            streams,
            mbs_positions,
            frozen: None,
            world,
            trace: None,
        }
    }

    /// Every reset restores `snapshot` exactly.
    pub fn frozen(cfg: NetworkConfig, snapshot: WorldState, root: &RngStream) -> Self {
        Self {
            streams: EnvStreams::new(root),
            mbs_positions: snapshot.mbs_positions.clone(),
            world: snapshot.clone(),
            frozen: Some(snapshot),
            cfg,
            trace: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn reset(&mut self) {
        self.world = match &self.frozen {
            Some(snapshot) => snapshot.clone(),
            None => init_world_at(&self.cfg, self.mbs_positions.clone(), &mut self.streams),
        };
    }

    pub fn dl_observation(&self) -> Vec<f64> {
        dl_observation(&self.world, &self.cfg)
    }

    pub fn ul_observation(&self) -> Vec<f64> {
        ul_observation(&self.world, &self.cfg)
    }

    pub fn step_downlink(&mut self, alloc: &[usize]) -> Result<DlOutcome, EnvError> {
        let out = step_downlink(&mut self.world, &self.cfg, alloc)?;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord::Downlink {
                step: self.world.step,
                gains: self.world.gains.gains.iter().map(|g| (g.re, g.im)).collect(),
                alloc: alloc.to_vec(),
                powers: self.world.dl_powers.clone(),
                rates: out.rates.clone(),
                latencies: out.latencies.clone(),
            });
        }
        Ok(out)
    }

    pub fn step_uplink(&mut self, ul_powers: &[f64]) -> Result<UlStep, EnvError> {
        let step = self.world.step;
        let out = step_uplink(&mut self.world, &self.cfg, ul_powers, &mut self.streams)?;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord::Uplink {
                step,
                powers: ul_powers.to_vec(),
                rates: out.outcome.rates.clone(),
                latencies: out.outcome.latencies.clone(),
                energies: out.outcome.energies.clone(),
                battery: self.world.battery.clone(),
            });
        }
        Ok(out)
    }
}
