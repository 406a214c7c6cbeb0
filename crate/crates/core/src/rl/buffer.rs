use super::gae::{compute_gae, normalize};
use super::RlError;

/// One DL-then-UL iteration as seen by both agents.
///
/// `reward_common` is the centralized baseline's reward and is ignored by
/// the other trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s_dl: Vec<f64>,
    pub alloc: Vec<usize>,
    pub logp_dl: f64,
    pub reward_dl: f64,
    pub s_ul: Vec<f64>,
    pub raw_ul: Vec<f64>,
    pub powers_ul: Vec<f64>,
    pub logp_ul: f64,
    pub reward_ul: f64,
    pub reward_common: f64,
    pub s_dl_next: Vec<f64>,
    pub s_ul_next: Vec<f64>,
    pub done: bool,
    pub step: usize,
    /// Elapsed fraction of the episode before and after this iteration.
    pub time: f64,
    pub time_next: f64,
}

/// Advantages and value targets of one reward stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamEstimates {
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Divides rewards by the running standard deviation of the discounted
/// return, tracked with Welford updates. Rewards are not shifted.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnScaler {
    gamma: f64,
    ret: f64,
    count: f64,
    mean: f64,
    m2: f64,
}

impl ReturnScaler {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            ret: 0.0,
            count: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2 / self.count).sqrt()
        }
    }

    /// Updates the statistics with `reward` and returns it scaled.
    pub fn scale(&mut self, reward: f64, done: bool) -> f64 {
        self.ret = self.gamma * self.ret + reward;
        self.count += 1.0;
        let delta = self.ret - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (self.ret - self.mean);
        if done {
            self.ret = 0.0;
        }
        reward / (self.std() + 1e-8)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryBuffer {
    pub transitions: Vec<Transition>,
    pub dl: StreamEstimates,
    pub ul: StreamEstimates,
}

impl TrajectoryBuffer {
    pub fn with_capacity(horizon: usize) -> Self {
        Self {
            transitions: Vec::with_capacity(horizon),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.dl = StreamEstimates::default();
        self.ul = StreamEstimates::default();
    }

    pub fn dones(&self) -> Vec<bool> {
        self.transitions.iter().map(|t| t.done).collect()
    }

    /// Runs GAE on `rewards` with the given target values; the targets are
    /// computed before normalization.
    pub fn estimate(
        &self,
        rewards: &[f64],
        values: &[f64],
        next_values: &[f64],
        gamma: f64,
        lambda: f64,
        normalize_advantages: bool,
    ) -> Result<StreamEstimates, RlError> {
        let (mut advantages, targets) = compute_gae(rewards, values, next_values, &self.dones(), gamma, lambda)?;
        if normalize_advantages {
            normalize(&mut advantages);
        }
        Ok(StreamEstimates { advantages, targets })
    }
}
