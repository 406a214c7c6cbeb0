//! Actor heads.
//!
//! The allocation actor is a product of `n_ues` independent categoricals
//! over `m_mbs` base stations, so its output layer has `n_ues * m_mbs`
//! logits and the joint log-probability is the sum of the per-UE terms.
//!
//! The power actor outputs one Gaussian mean per UE plus a state-independent
//! log standard deviation. Raw samples are clamped to `[0, 1]` and mapped
//! affinely onto `[p_min, p_max]`; log-probabilities use the pre-clamp
//! density.

use super::mlp::{Activation, MlpShape};
use super::NnError;
use crate::rng::RngStream;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Common surface used by the PPO update.
pub trait StochasticPolicy {
    type Action;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn log_prob(&self, state: &[f64], action: &Self::Action) -> Result<f64, NnError>;

    /// Returns `log pi(action|state)` and accumulates `scale * grad` of it
    /// into `grads`.
    fn log_prob_grad(
        &self,
        state: &[f64],
        action: &Self::Action,
        scale: f64,
        grads: &mut [f64],
    ) -> Result<f64, NnError> {
        self.log_prob_grad_with(state, action, |_| scale, grads)
    }

    /// Single forward pass: `scale_of` maps the log-probability to the
    /// gradient scale. A zero scale skips the backward pass.
    fn log_prob_grad_with(
        &self,
        state: &[f64],
        action: &Self::Action,
        scale_of: impl FnOnce(f64) -> f64,
        grads: &mut [f64],
    ) -> Result<f64, NnError>;
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    logits[k] - lse
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlSample {
    pub alloc: Vec<usize>,
    pub log_prob: f64,
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlActor {
    pub n_ues: usize,
    pub m_mbs: usize,
    pub shape: MlpShape,
    pub params: Vec<f64>,
}

impl DlActor {
    pub fn new(obs_dim: usize, n_ues: usize, m_mbs: usize, hidden: &[usize], rng: &mut RngStream) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_ues * m_mbs);
        let shape = MlpShape::new(sizes, Activation::Identity);
        let mut params = vec![0.0; shape.num_params()];
        shape.init(&mut params, rng, 0.01);
        Self {
            n_ues,
            m_mbs,
            shape,
            params,
        }
    }

    pub fn logits(&self, state: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.shape.forward(&self.params, state)?.output().to_vec())
    }

    pub fn probs(&self, state: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
        let logits = self.logits(state)?;
        Ok(logits.chunks(self.m_mbs).map(softmax).collect())
    }

    /// Samples one MBS per UE, or takes the per-UE argmax when `greedy`.
    pub fn sample(&self, state: &[f64], rng: &mut RngStream, greedy: bool) -> Result<DlSample, NnError> {
        let logits = self.logits(state)?;
        let mut alloc = Vec::with_capacity(self.n_ues);
        let mut probs = Vec::with_capacity(self.n_ues);
        let mut log_prob = 0.0;
        for block in logits.chunks(self.m_mbs) {
            let p = softmax(block);
            let choice = if greedy {
                argmax(block)
            } else {
                let u = rng.unit();
                let mut acc = 0.0;
                let mut pick = self.m_mbs - 1;
                for (k, &pk) in p.iter().enumerate() {
                    acc += pk;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                pick
            };
            log_prob += log_softmax_at(block, choice);
            alloc.push(choice);
            probs.push(p);
        }
        Ok(DlSample { alloc, log_prob, probs })
    }

    fn check_action(&self, alloc: &[usize]) -> Result<(), NnError> {
        if alloc.len() != self.n_ues || alloc.iter().any(|&c| c >= self.m_mbs) {
            return Err(NnError::BadAction);
        }
        Ok(())
    }
}

impl StochasticPolicy for DlActor {
    type Action = Vec<usize>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn log_prob(&self, state: &[f64], alloc: &Vec<usize>) -> Result<f64, NnError> {
        self.check_action(alloc)?;
        let logits = self.logits(state)?;
        Ok(logits
            .chunks(self.m_mbs)
            .zip(alloc)
            .map(|(block, &c)| log_softmax_at(block, c))
            .sum())
    }

    fn log_prob_grad_with(
        &self,
        state: &[f64],
        alloc: &Vec<usize>,
        scale_of: impl FnOnce(f64) -> f64,
        grads: &mut [f64],
    ) -> Result<f64, NnError> {
        self.check_action(alloc)?;
        let cache = self.shape.forward(&self.params, state)?;
        let logits = cache.output();
        let log_prob = logits
            .chunks(self.m_mbs)
            .zip(alloc)
            .map(|(block, &c)| log_softmax_at(block, c))
            .sum();
        let scale = scale_of(log_prob);
        if scale == 0.0 {
            return Ok(log_prob);
        }
        let mut upstream = vec![0.0; logits.len()];
        for (i, (block, &c)) in logits.chunks(self.m_mbs).zip(alloc).enumerate() {
            for (k, pk) in softmax(block).into_iter().enumerate() {
                let onehot = if k == c { 1.0 } else { 0.0 };
                upstream[i * self.m_mbs + k] = scale * (onehot - pk);
            }
        }
        self.shape.backward(&self.params, &cache, &upstream, grads)?;
        Ok(log_prob)
    }
}

/// Affine map from a clamped raw action onto `[p_min, p_max]`.
pub fn scale_power(raw: f64, p_min: f64, p_max: f64) -> f64 {
    let u = raw.clamp(0.0, 1.0);
    (p_min + u * (p_max - p_min)).min(p_max)
}

/// Log density of `x` under independent normals.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&x, &mu), &ls)| {
            let z = (x - mu) / ls.exp();
            -0.5 * z * z - ls - LN_SQRT_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UlSample {
    pub powers: Vec<f64>,
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

/// Parameters are the mean network's followed by `n_ues` log-stds.
#[derive(Debug, Clone, PartialEq)]
pub struct UlActor {
    pub n_ues: usize,
    pub shape: MlpShape,
    pub params: Vec<f64>,
}

impl UlActor {
    pub fn new(obs_dim: usize, n_ues: usize, hidden: &[usize], log_std_init: f64, rng: &mut RngStream) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_ues);
        let shape = MlpShape::new(sizes, Activation::Identity);
        let n_net = shape.num_params();
        let mut params = vec![0.0; n_net + n_ues];
        shape.init(&mut params[..n_net], rng, 0.01);
        // Start at mid-range power.
        let (_, b_off, _, n_out) = *shape.layer_offsets().last().unwrap();
        for b in &mut params[b_off..b_off + n_out] {
            *b = 0.5;
        }
        for ls in &mut params[n_net..] {
            *ls = log_std_init;
        }
        Self { n_ues, shape, params }
    }

    fn net_len(&self) -> usize {
        self.shape.num_params()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.net_len()..]
    }

    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.shape.forward(&self.params[..self.net_len()], state)?.output().to_vec())
    }

    /// Greedy mode uses the mean as the raw action.
    pub fn sample(
        &self,
        state: &[f64],
        rng: &mut RngStream,
        p_min: f64,
        p_max: f64,
        greedy: bool,
    ) -> Result<UlSample, NnError> {
        let mean = self.mean(state)?;
        let raw: Vec<f64> = if greedy {
            mean.clone()
        } else {
            mean.iter()
                .zip(self.log_std())
                .map(|(&mu, &ls)| mu + ls.exp() * rng.standard_normal())
                .collect()
        };
        let log_prob = gaussian_log_density(&raw, &mean, self.log_std());
        let powers = raw.iter().map(|&r| scale_power(r, p_min, p_max)).collect();
        Ok(UlSample { powers, raw, log_prob })
    }
}

impl StochasticPolicy for UlActor {
    type Action = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn log_prob(&self, state: &[f64], raw: &Vec<f64>) -> Result<f64, NnError> {
        if raw.len() != self.n_ues {
            return Err(NnError::BadAction);
        }
        Ok(gaussian_log_density(raw, &self.mean(state)?, self.log_std()))
    }

    fn log_prob_grad_with(
        &self,
        state: &[f64],
        raw: &Vec<f64>,
        scale_of: impl FnOnce(f64) -> f64,
        grads: &mut [f64],
    ) -> Result<f64, NnError> {
        if raw.len() != self.n_ues {
            return Err(NnError::BadAction);
        }
        let n_net = self.net_len();
        let cache = self.shape.forward(&self.params[..n_net], state)?;
        let mean = cache.output();
        let log_std = self.log_std();
        let log_prob = gaussian_log_density(raw, mean, log_std);
        let scale = scale_of(log_prob);
        if scale == 0.0 {
            return Ok(log_prob);
        }
        let mut upstream = vec![0.0; self.n_ues];
        for i in 0..self.n_ues {
            let var = (2.0 * log_std[i]).exp();
            let diff = raw[i] - mean[i];
            upstream[i] = scale * diff / var;
            grads[n_net + i] += scale * (diff * diff / var - 1.0);
        }
        let (net_params, net_grads) = (&self.params[..n_net], &mut grads[..n_net]);
        self.shape.backward(net_params, &cache, &upstream, net_grads)?;
        Ok(log_prob)
    }
}
