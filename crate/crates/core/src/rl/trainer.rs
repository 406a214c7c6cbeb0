//! End-to-end training loops.
//!
//! Every trainer runs the same rollout: the DL actor allocates, the
//! environment runs the downlink phase, the UL actor picks powers, the
//! environment runs the uplink phase, rewards are computed and one
//! [`Transition`] is stored. Every `horizon` iterations the buffer is
//! turned into advantages with the target critic(s) and both actors and the
//! critic(s) are trained for `epochs` passes of shuffled minibatches. The
//! trainers differ only in their critics:
//!
//! * `mals`: one critic, two adapters and heads (DL on `s_dl`, UL on `s_ul`),
//!   trained on `kappa1 * L_ul + kappa2 * L_dl`.
//! * `ida`: one private single-head critic per agent.
//! * `ctde`: one single-head critic on `s_dl ++ s_ul` fitted to the common
//!   reward; both actors use its advantages.
//!
//! Critic inputs end with the elapsed fraction of the episode. Rewards grow
//! with the step index through the cumulative terms, and the observations
//! do not carry it.
//!
//! The target copies are refreshed every `target_sync_interval` critic
//! minibatch steps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::buffer::{ReturnScaler, StreamEstimates, Transition, TrajectoryBuffer};
use super::log::{MetricsRecord, TrainingLog, UpdateRecord};
use super::ppo::{mals_critic_update, ppo_actor_update, sync_due, CriticLosses, CriticSample, PpoSample};
use super::RlError;
use crate::config::{ConfigSet, NetworkConfig, TrainConfig};
use crate::env::{observation_len, DlOutcome, MecEnv, TraceRecord};
use crate::nn::{AdamState, Checkpoint, Critic, DlActor, UlActor};
use crate::reward::{common_reward, downlink_reward, uplink_reward, EpisodeLedger, RewardWeights};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mals,
    Ida,
    Ctde,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Mals, Algorithm::Ida, Algorithm::Ctde, Algorithm::Random];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mals => "mals",
            Algorithm::Ida => "ida",
            Algorithm::Ctde => "ctde",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected mals, ida, ctde or random)"))
    }
}

#[derive(Debug, Clone)]
enum Critics {
    Shared { critic: Critic, adam: AdamState },
    Separate {
        dl: Critic,
        dl_adam: AdamState,
        ul: Critic,
        ul_adam: AdamState,
    },
    Central { critic: Critic, adam: AdamState },
    None,
}

impl Critics {
    fn build(algo: Algorithm, obs: usize, hidden: &[usize], rng: &mut RngStream) -> Self {
        let with_adam = |c: Critic| {
            let adam = AdamState::new(c.params.len());
            (c, adam)
        };
        match algo {
            Algorithm::Mals => {
                let (critic, adam) = with_adam(Critic::new(&[obs + 1, obs + 1], hidden, rng));
                Critics::Shared { critic, adam }
            }
            Algorithm::Ida => {
                let (dl, dl_adam) = with_adam(Critic::new(&[obs + 1], hidden, rng));
                let (ul, ul_adam) = with_adam(Critic::new(&[obs + 1], hidden, rng));
                Critics::Separate { dl, dl_adam, ul, ul_adam }
            }
            Algorithm::Ctde => {
                let (critic, adam) = with_adam(Critic::new(&[2 * obs + 1], hidden, rng));
                Critics::Central { critic, adam }
            }
            Algorithm::Random => Critics::None,
        }
    }

    fn sync(&mut self) {
        match self {
            Critics::Shared { critic, .. } | Critics::Central { critic, .. } => critic.sync_target(),
            Critics::Separate { dl, ul, .. } => {
                dl.sync_target();
                ul.sync_target();
            }
            Critics::None => {}
        }
    }

    fn push_to(&self, ck: &mut Checkpoint) {
        match self {
            Critics::Shared { critic, .. } | Critics::Central { critic, .. } => critic.push_to(ck, "critic"),
            Critics::Separate { dl, ul, .. } => {
                dl.push_to(ck, "critic_dl");
                ul.push_to(ck, "critic_ul");
            }
            Critics::None => {}
        }
    }
}

/// Actors, critics and optimizer state of one run.
#[derive(Debug, Clone)]
pub struct Agents {
    pub algorithm: Algorithm,
    pub dl: DlActor,
    pub ul: UlActor,
    dl_adam: AdamState,
    ul_adam: AdamState,
    critics: Critics,
}

impl Agents {
    pub fn new(algo: Algorithm, net: &NetworkConfig, train: &TrainConfig, rng: &mut RngStream) -> Self {
        let obs = observation_len(net);
        let hidden = &train.hidden_sizes;
        let dl = DlActor::new(obs, net.n_ues, net.m_mbs, hidden, rng);
        let ul = UlActor::new(obs, net.n_ues, hidden, train.gaussian_logstd_init, rng);
        let critics = Critics::build(algo, obs, hidden, rng);
        Self {
            algorithm: algo,
            dl_adam: AdamState::new(dl.params.len()),
            ul_adam: AdamState::new(ul.params.len()),
            dl,
            ul,
            critics,
        }
    }

    /// The shared or central critic, if this algorithm has one.
    pub fn critic(&self) -> Option<&Critic> {
        match &self.critics {
            Critics::Shared { critic, .. } | Critics::Central { critic, .. } => Some(critic),
            _ => None,
        }
    }

    /// The private (DL, UL) critics of the independent baseline.
    pub fn private_critics(&self) -> Option<(&Critic, &Critic)> {
        match &self.critics {
            Critics::Separate { dl, ul, .. } => Some((dl, ul)),
            _ => None,
        }
    }

    /// Checkpoint with both actors, all critics and a JSON metadata header
    /// holding the algorithm name and the resolved config document.
    pub fn checkpoint(&self, net: &NetworkConfig, train: &TrainConfig) -> Checkpoint {
        let doc = ConfigSet {
            net: net.clone(),
            train: train.clone(),
        }
        .to_document();
        let meta = serde_json::json!({ "algorithm": self.algorithm, "config": doc });
        let mut ck = Checkpoint::new(meta.to_string());
        ck.push_mlp("dl_actor", &self.dl.shape, &self.dl.params);
        let n_net = self.ul.shape.num_params();
        ck.push_mlp("ul_actor", &self.ul.shape, &self.ul.params[..n_net]);
        ck.push("ul_actor.log_std", vec![self.ul.n_ues], self.ul.log_std().to_vec());
        self.critics.push_to(&mut ck);
        ck
    }

    /// Rebuilds the actors of a checkpoint written by [`Agents::checkpoint`].
    pub fn actors_from_checkpoint(ck: &Checkpoint) -> Result<(ConfigSet, DlActor, UlActor), RlError> {
        let bad = |e: String| RlError::Checkpoint(e);
        let meta: serde_json::Value = serde_json::from_str(&ck.metadata).map_err(|e| bad(e.to_string()))?;
        let doc = meta["config"].as_str().ok_or_else(|| bad("metadata has no config".into()))?;
        let mut set = ConfigSet::default();
        set.merge_document(doc).map_err(|e| bad(e.to_string()))?;
        let obs = observation_len(&set.net);
        let mut rng = RngStream::new(0);
        let mut dl = DlActor::new(obs, set.net.n_ues, set.net.m_mbs, &set.train.hidden_sizes, &mut rng);
        let mut ul = UlActor::new(obs, set.net.n_ues, &set.train.hidden_sizes, 0.0, &mut rng);
        ck.read_mlp("dl_actor", &dl.shape, &mut dl.params).map_err(|e| bad(e.to_string()))?;
        let n_net = ul.shape.num_params();
        ck.read_mlp("ul_actor", &ul.shape, &mut ul.params[..n_net])
            .map_err(|e| bad(e.to_string()))?;
        let log_std = ck
            .get("ul_actor.log_std")
            .filter(|t| t.data.len() == ul.n_ues)
            .ok_or_else(|| bad("missing ul_actor.log_std".into()))?;
        ul.params[n_net..].copy_from_slice(&log_std.data);
        Ok((set, dl, ul))
    }
}

/// Rewards of one completed iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRewards {
    pub dl: f64,
    pub ul: f64,
    pub common: f64,
    pub done: bool,
}

/// Environment plus reward bookkeeping and episode metrics.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub env: MecEnv,
    weights: RewardWeights,
    ledger: EpisodeLedger,
    last_dl: Option<DlOutcome>,
    reward_dl_sum: f64,
    reward_ul_sum: f64,
    pub env_step: usize,
    pub episodes: Vec<MetricsRecord>,
}

impl Rollout {
    /// Completed iterations of the current episode over `T`.
    pub fn elapsed_fraction(&self) -> f64 {
        (self.env.world().step - 1) as f64 / self.env.config().t_steps as f64
    }

    pub fn new(env: MecEnv) -> Self {
        let weights = RewardWeights::from(env.config());
        let ledger = EpisodeLedger::new(env.config().n_ues);
        Self {
            env,
            weights,
            ledger,
            last_dl: None,
            reward_dl_sum: 0.0,
            reward_ul_sum: 0.0,
            env_step: 0,
            episodes: Vec::new(),
        }
    }

    pub fn downlink(&mut self, alloc: &[usize]) -> Result<(), RlError> {
        let out = self.env.step_downlink(alloc)?;
        self.ledger.push_downlink(&out)?;
        self.last_dl = Some(out);
        Ok(())
    }

    /// Runs the uplink phase. At episode end the metrics are recorded and
    /// the environment is reset.
    pub fn uplink(&mut self, powers: &[f64]) -> Result<StepRewards, RlError> {
        let step = self.env.step_uplink(powers)?;
        self.ledger.push_uplink(&step.outcome, step.depleted)?;
        let dl = self.last_dl.take().expect("downlink precedes uplink");
        let w = &self.weights;
        let r_ul = uplink_reward(&step.outcome, &self.ledger, w, step.depleted)?;
        let r_dl = downlink_reward(&dl, &self.ledger, w, step.depleted, r_ul)?;
        let common = common_reward(&dl, &step.outcome, &self.ledger, w, step.depleted)?;
        self.reward_dl_sum += r_dl;
        self.reward_ul_sum += r_ul;
        self.env_step += 1;
        if step.done {
            self.episodes.push(MetricsRecord::from_ledger(
                self.episodes.len(),
                self.env_step,
                &self.ledger,
                w,
                self.reward_dl_sum,
                self.reward_ul_sum,
            ));
            self.env.reset();
            self.ledger = EpisodeLedger::new(self.ledger.n_ues);
            self.reward_dl_sum = 0.0;
            self.reward_ul_sum = 0.0;
        }
        Ok(StepRewards {
            dl: r_dl,
            ul: r_ul,
            common,
            done: step.done,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub log: TrainingLog,
    pub agents: Agents,
    pub target_syncs: usize,
    /// Environment trace, empty unless enabled on the environment.
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug)]
pub struct TrainFailure {
    pub error: RlError,
    pub log: TrainingLog,
    /// Parameters at the moment of failure.
    pub checkpoint: Checkpoint,
    pub trace: Vec<TraceRecord>,
}

/// The environment [`train`] builds for `seed`.
pub fn train_env(net: &NetworkConfig, seed: u64) -> MecEnv {
    MecEnv::new(net.clone(), &RngStream::new(seed).fork("env"))
}

/// Trains `algo` on a fresh environment seeded from `train.seed`.
pub fn train(net: &NetworkConfig, train: &TrainConfig, algo: Algorithm) -> Result<TrainOutput, Box<TrainFailure>> {
    train_in_env(train_env(net, train.seed), train, algo)
}

/// Trains `algo` on a caller-supplied environment (e.g. a frozen world).
pub fn train_in_env(env: MecEnv, train: &TrainConfig, algo: Algorithm) -> Result<TrainOutput, Box<TrainFailure>> {
    let root = RngStream::new(train.seed);
    let net = env.config().clone();
    let agents = Agents::new(algo, &net, train, &mut root.fork("init"));
    let mut trainer = Trainer {
        cfg: train.clone(),
        kappa: (net.kappa1, net.kappa2),
        p_range: (net.p_ul_min, net.p_ul_max),
        agents,
        rollout: Rollout::new(env),
        policy_rng: root.fork("policy"),
        batch_rng: root.fork("minibatch"),
        scalers: train
            .normalize_rewards
            .then(|| std::array::from_fn(|_| ReturnScaler::new(train.gamma))),
        critic_rounds: 0,
        target_syncs: 0,
        updates: Vec::new(),
        started: Instant::now(),
    };
    match trainer.run() {
        Ok(()) => Ok(TrainOutput {
            log: trainer.log(),
            target_syncs: trainer.target_syncs,
            trace: trainer.rollout.env.take_trace(),
            agents: trainer.agents,
        }),
        Err(error) => Err(Box::new(TrainFailure {
            error,
            log: trainer.log(),
            checkpoint: trainer.agents.checkpoint(&net, train),
            trace: trainer.rollout.env.take_trace(),
        })),
    }
}

struct Trainer {
    cfg: TrainConfig,
    kappa: (f64, f64),
    p_range: (f64, f64),
    agents: Agents,
    rollout: Rollout,
    policy_rng: RngStream,
    batch_rng: RngStream,
    /// DL, UL and common reward scalers, when enabled.
    scalers: Option<[ReturnScaler; 3]>,
    critic_rounds: usize,
    target_syncs: usize,
    updates: Vec<UpdateRecord>,
    started: Instant,
}

impl Trainer {
    fn log(&self) -> TrainingLog {
        TrainingLog {
            updates: self.updates.clone(),
            episodes: self.rollout.episodes.clone(),
        }
    }

    fn run(&mut self) -> Result<(), RlError> {
        let horizon = self.cfg.horizon;
        let mut buffer = TrajectoryBuffer::with_capacity(horizon);
        for _ in 0..self.cfg.total_steps {
            let t = self.collect_step()?;
            buffer.push(t);
            if buffer.len() == horizon {
                if self.agents.algorithm != Algorithm::Random {
                    self.update(&mut buffer)?;
                }
                buffer.clear();
            }
        }
        Ok(())
    }

    fn collect_step(&mut self) -> Result<Transition, RlError> {
        let (p_min, p_max) = self.p_range;
        let s_dl = self.rollout.env.dl_observation();
        let time = self.rollout.elapsed_fraction();
        let (alloc, logp_dl) = if self.agents.algorithm == Algorithm::Random {
            let m = self.rollout.env.config().m_mbs;
            let n = self.rollout.env.config().n_ues;
            ((0..n).map(|_| self.policy_rng.below(m)).collect(), 0.0)
        } else {
            let s = self.agents.dl.sample(&s_dl, &mut self.policy_rng, false)?;
            (s.alloc, s.log_prob)
        };
        self.rollout.downlink(&alloc)?;
        let s_ul = self.rollout.env.ul_observation();
        let (raw_ul, powers_ul, logp_ul) = if self.agents.algorithm == Algorithm::Random {
            let n = self.rollout.env.config().n_ues;
            let powers: Vec<f64> = (0..n).map(|_| self.policy_rng.uniform(p_min, p_max)).collect();
            let raw = powers.iter().map(|p| (p - p_min) / (p_max - p_min)).collect();
            (raw, powers, 0.0)
        } else {
            let s = self.agents.ul.sample(&s_ul, &mut self.policy_rng, p_min, p_max, false)?;
            (s.raw, s.powers, s.log_prob)
        };
        let step = self.rollout.env_step;
        let mut rewards = self.rollout.uplink(&powers_ul)?;
        if let Some([dl, ul, common]) = &mut self.scalers {
            rewards.dl = dl.scale(rewards.dl, rewards.done);
            rewards.ul = ul.scale(rewards.ul, rewards.done);
            rewards.common = common.scale(rewards.common, rewards.done);
        }
        Ok(Transition {
            s_dl,
            alloc,
            logp_dl,
            reward_dl: rewards.dl,
            s_ul,
            raw_ul,
            powers_ul,
            logp_ul,
            reward_ul: rewards.ul,
            reward_common: rewards.common,
            s_dl_next: self.rollout.env.dl_observation(),
            s_ul_next: self.rollout.env.ul_observation(),
            done: rewards.done,
            step,
            time,
            time_next: self.rollout.elapsed_fraction(),
        })
    }

    fn target_values(critic: &Critic, head: usize, states: &[&[f64]]) -> Result<Vec<f64>, RlError> {
        states
            .iter()
            .map(|s| critic.value(head, s, true).map_err(RlError::from))
            .collect()
    }

    fn estimates(&self, buffer: &TrajectoryBuffer, inputs: &CriticInputs) -> Result<(StreamEstimates, StreamEstimates), RlError> {
        let ts = &buffer.transitions;
        let (g, l, norm) = (self.cfg.gamma, self.cfg.lambda_gae, self.cfg.normalize_advantages);
        let r_dl: Vec<f64> = ts.iter().map(|t| t.reward_dl).collect();
        let r_ul: Vec<f64> = ts.iter().map(|t| t.reward_ul).collect();
        let stream = |critic: &Critic, head: usize, r: &[f64], s: &[Vec<f64>], n: &[Vec<f64>]| {
            let v = Self::target_values(critic, head, &slices(s))?;
            let nv = Self::target_values(critic, head, &slices(n))?;
            buffer.estimate(r, &v, &nv, g, l, norm)
        };
        let CriticInputs { dl: s_dl, dl_next: n_dl, ul: s_ul, ul_next: n_ul } = inputs;
        match &self.agents.critics {
            Critics::Shared { critic, .. } => Ok((
                stream(critic, 0, &r_dl, s_dl, n_dl)?,
                stream(critic, 1, &r_ul, s_ul, n_ul)?,
            )),
            Critics::Separate { dl, ul, .. } => Ok((
                stream(dl, 0, &r_dl, s_dl, n_dl)?,
                stream(ul, 0, &r_ul, s_ul, n_ul)?,
            )),
            Critics::Central { critic, .. } => {
                let r: Vec<f64> = ts.iter().map(|t| t.reward_common).collect();
                let est = stream(critic, 0, &r, s_dl, n_dl)?;
                Ok((est.clone(), est))
            }
            Critics::None => Ok((StreamEstimates::default(), StreamEstimates::default())),
        }
    }

    fn update(&mut self, buffer: &mut TrajectoryBuffer) -> Result<(), RlError> {
        let inputs = CriticInputs::new(&buffer.transitions, matches!(self.agents.critics, Critics::Central { .. }));
        let (dl_est, ul_est) = self.estimates(buffer, &inputs)?;
        buffer.dl = dl_est;
        buffer.ul = ul_est;

        let n = buffer.len();
        let group = self.cfg.group_size.min(n).max(1);
        let mut order: Vec<usize> = (0..n).collect();
        let mut sums = [0.0f64; 7];
        let mut batches = 0usize;
        for _ in 0..self.cfg.epochs {
            self.batch_rng.shuffle(&mut order);
            for chunk in order.chunks(group) {
                let r = self.minibatch(buffer, chunk, &inputs)?;
                for (acc, x) in sums.iter_mut().zip(r) {
                    *acc += x;
                }
                batches += 1;
            }
        }
        let avg = |k: usize| if batches == 0 { 0.0 } else { sums[k] / batches as f64 };
        self.updates.push(UpdateRecord {
            update: self.updates.len(),
            env_step: self.rollout.env_step,
            actor_dl: avg(0),
            actor_ul: avg(1),
            critic_ul: avg(2),
            critic_dl: avg(3),
            critic_combined: avg(4),
            clip_fraction_dl: avg(5),
            clip_fraction_ul: avg(6),
            target_syncs: self.target_syncs,
            wall_ms: self.started.elapsed().as_millis() as u64,
        });
        Ok(())
    }

    /// One PPO step for each actor and one critic step. Returns the
    /// surrogates, critic losses and clip fractions.
    fn minibatch(&mut self, buffer: &TrajectoryBuffer, idx: &[usize], inputs: &CriticInputs) -> Result<[f64; 7], RlError> {
        let ts = &buffer.transitions;
        let cfg = &self.cfg;
        let dl_batch: Vec<_> = idx
            .iter()
            .map(|&i| PpoSample {
                state: ts[i].s_dl.as_slice(),
                action: &ts[i].alloc,
                old_log_prob: ts[i].logp_dl,
                advantage: buffer.dl.advantages[i],
            })
            .collect();
        let ul_batch: Vec<_> = idx
            .iter()
            .map(|&i| PpoSample {
                state: ts[i].s_ul.as_slice(),
                action: &ts[i].raw_ul,
                old_log_prob: ts[i].logp_ul,
                advantage: buffer.ul.advantages[i],
            })
            .collect();
        let a = &mut self.agents;
        let dl_stats = ppo_actor_update(&mut a.dl, &dl_batch, cfg.clip_eps, cfg.lr_actor, &mut a.dl_adam)?;
        let ul_stats = ppo_actor_update(&mut a.ul, &ul_batch, cfg.clip_eps, cfg.lr_actor, &mut a.ul_adam)?;

        let s_dl: Vec<&[f64]> = idx.iter().map(|&i| inputs.dl[i].as_slice()).collect();
        let s_ul: Vec<&[f64]> = idx.iter().filter_map(|&i| inputs.ul.get(i).map(Vec::as_slice)).collect();
        let lr = cfg.lr_critic;
        let (k1, k2) = self.kappa;
        let losses = match &mut a.critics {
            Critics::Shared { critic, adam } => {
                let dl = critic_samples(0, idx, &s_dl, &buffer.dl.targets);
                let ul = critic_samples(1, idx, &s_ul, &buffer.ul.targets);
                mals_critic_update(critic, &dl, &ul, k1, k2, lr, adam)?
            }
            Critics::Separate { dl, dl_adam, ul, ul_adam } => {
                let dl_s = critic_samples(0, idx, &s_dl, &buffer.dl.targets);
                let ul_s = critic_samples(0, idx, &s_ul, &buffer.ul.targets);
                let d = mals_critic_update(dl, &dl_s, &[], 0.0, 1.0, lr, dl_adam)?;
                let u = mals_critic_update(ul, &[], &ul_s, 1.0, 0.0, lr, ul_adam)?;
                CriticLosses {
                    ul: u.ul,
                    dl: d.dl,
                    combined: u.ul + d.dl,
                }
            }
            Critics::Central { critic, adam } => {
                let c = critic_samples(0, idx, &s_dl, &buffer.dl.targets);
                let l = mals_critic_update(critic, &c, &[], 0.0, 1.0, lr, adam)?;
                CriticLosses {
                    ul: 0.0,
                    dl: 0.0,
                    combined: l.dl,
                }
            }
            Critics::None => CriticLosses::default(),
        };
        self.critic_rounds += 1;
        if sync_due(self.critic_rounds, cfg.target_sync_interval) {
            a.critics.sync();
            self.target_syncs += 1;
        }
        Ok([
            dl_stats.surrogate,
            ul_stats.surrogate,
            losses.ul,
            losses.dl,
            losses.combined,
            dl_stats.clip_fraction,
            ul_stats.clip_fraction,
        ])
    }
}

/// Critic inputs per transition: the agent's observation plus the elapsed
/// episode fraction, or both observations plus it for the central critic.
struct CriticInputs {
    dl: Vec<Vec<f64>>,
    dl_next: Vec<Vec<f64>>,
    ul: Vec<Vec<f64>>,
    ul_next: Vec<Vec<f64>>,
}

impl CriticInputs {
    fn new(ts: &[Transition], central: bool) -> Self {
        let with_time = |parts: &[&[f64]], time: f64| {
            let mut v = parts.concat();
            v.push(time);
            v
        };
        let mut out = Self {
            dl: Vec::with_capacity(ts.len()),
            dl_next: Vec::with_capacity(ts.len()),
            ul: Vec::with_capacity(ts.len()),
            ul_next: Vec::with_capacity(ts.len()),
        };
        for t in ts {
            if central {
                out.dl.push(with_time(&[&t.s_dl, &t.s_ul], t.time));
                out.dl_next.push(with_time(&[&t.s_dl_next, &t.s_ul_next], t.time_next));
            } else {
                out.dl.push(with_time(&[&t.s_dl], t.time));
                out.dl_next.push(with_time(&[&t.s_dl_next], t.time_next));
                out.ul.push(with_time(&[&t.s_ul], t.time));
                out.ul_next.push(with_time(&[&t.s_ul_next], t.time_next));
            }
        }
        out
    }
}

fn slices(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

fn critic_samples<'a>(head: usize, idx: &[usize], states: &[&'a [f64]], targets: &[f64]) -> Vec<CriticSample<'a>> {
    idx.iter()
        .zip(states)
        .map(|(&i, &state)| CriticSample {
            head,
            state,
            target: targets[i],
        })
        .collect()
}

/// Uniform random allocations and powers for `episodes` full episodes.
pub fn run_random(net: &NetworkConfig, episodes: usize, seed: u64) -> Result<Vec<MetricsRecord>, RlError> {
    let root = RngStream::new(seed);
    let mut rollout = Rollout::new(MecEnv::new(net.clone(), &root.fork("env")));
    let mut rng = root.fork("policy");
    while rollout.episodes.len() < episodes {
        let alloc: Vec<usize> = (0..net.n_ues).map(|_| rng.below(net.m_mbs)).collect();
        rollout.downlink(&alloc)?;
        let powers: Vec<f64> = (0..net.n_ues).map(|_| rng.uniform(net.p_ul_min, net.p_ul_max)).collect();
        rollout.uplink(&powers)?;
    }
    Ok(rollout.episodes)
}

/// Greedy rollouts of the actors stored in `ck` on a fresh environment.
pub fn evaluate(ck: &Checkpoint, episodes: usize, seed: u64) -> Result<Vec<MetricsRecord>, RlError> {
    let (set, dl, ul) = Agents::actors_from_checkpoint(ck)?;
    let net = set.net;
    let root = RngStream::new(seed);
    let mut rollout = Rollout::new(MecEnv::new(net.clone(), &root.fork("env")));
    let mut rng = root.fork("policy");
    while rollout.episodes.len() < episodes {
        let s_dl = rollout.env.dl_observation();
        let alloc = dl.sample(&s_dl, &mut rng, true)?.alloc;
        rollout.downlink(&alloc)?;
        let s_ul = rollout.env.ul_observation();
        let powers = ul.sample(&s_ul, &mut rng, net.p_ul_min, net.p_ul_max, true)?.powers;
        rollout.uplink(&powers)?;
    }
    Ok(rollout.episodes)
}
