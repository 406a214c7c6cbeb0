//! Clipped-surrogate actor updates and the shared critic regression.

use crate::nn::{AdamState, Critic, StochasticPolicy};

use super::RlError;

/// One actor training example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoSample<'a, A> {
    pub state: &'a [f64],
    pub action: &'a A,
    pub old_log_prob: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    /// Mean clipped surrogate before the step.
    pub surrogate: f64,
    /// Fraction of samples whose gradient was cut by the clip.
    pub clip_fraction: f64,
}

/// Mean of `min(rho A, clip(rho, 1-eps, 1+eps) A)` over `batch` and its
/// gradient, accumulated into `grads`.
///
/// A sample contributes `rho A grad(log pi) / n` unless its ratio has left
/// the clip interval in the direction its advantage favors, in which case
/// it contributes exactly zero.
pub fn ppo_surrogate_grad<P: StochasticPolicy>(
    policy: &P,
    batch: &[PpoSample<'_, P::Action>],
    clip_eps: f64,
    grads: &mut [f64],
) -> Result<PpoStats, RlError> {
    if grads.len() != policy.params().len() {
        return Err(RlError::Length {
            what: "actor gradient buffer",
            expected: policy.params().len(),
            got: grads.len(),
        });
    }
    if batch.is_empty() {
        return Ok(PpoStats::default());
    }
    let n = batch.len() as f64;
    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    for (index, s) in batch.iter().enumerate() {
        let a = s.advantage;
        let mut ratio = 1.0;
        policy.log_prob_grad_with(
            s.state,
            s.action,
            |log_prob| {
                ratio = (log_prob - s.old_log_prob).exp();
                let saturated = (a > 0.0 && ratio > 1.0 + clip_eps) || (a < 0.0 && ratio < 1.0 - clip_eps);
                if saturated || !ratio.is_finite() {
                    0.0
                } else {
                    ratio * a / n
                }
            },
            grads,
        )?;
        if !ratio.is_finite() {
            return Err(RlError::NonFiniteRatio { index, value: ratio });
        }
        let bounded = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        surrogate += (ratio * a).min(bounded * a);
        if (a > 0.0 && ratio > 1.0 + clip_eps) || (a < 0.0 && ratio < 1.0 - clip_eps) {
            clipped += 1;
        }
    }
    Ok(PpoStats {
        surrogate: surrogate / n,
        clip_fraction: clipped as f64 / n,
    })
}

/// One Adam ascent step on the clipped surrogate.
pub fn ppo_actor_update<P: StochasticPolicy>(
    policy: &mut P,
    batch: &[PpoSample<'_, P::Action>],
    clip_eps: f64,
    lr: f64,
    adam: &mut AdamState,
) -> Result<PpoStats, RlError> {
    let mut grads = vec![0.0; policy.params().len()];
    let stats = ppo_surrogate_grad(&*policy, batch, clip_eps, &mut grads)?;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(RlError::NonFinite("actor gradient".into()));
    }
    // Adam descends, so hand it the negated surrogate gradient.
    grads.iter_mut().for_each(|g| *g = -*g);
    adam.step(policy.params_mut(), &grads, lr)?;
    Ok(stats)
}

/// One value regression example for a given critic head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticSample<'a> {
    pub head: usize,
    pub state: &'a [f64],
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CriticLosses {
    pub ul: f64,
    pub dl: f64,
    pub combined: f64,
}

/// Mean squared error of `batch` and `weight * grad` of it, accumulated.
pub fn value_loss_grad(
    critic: &Critic,
    batch: &[CriticSample<'_>],
    weight: f64,
    grads: &mut [f64],
) -> Result<f64, RlError> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        let mut err = 0.0;
        critic.value_grad_with(
            s.head,
            s.state,
            |v| {
                err = v - s.target;
                weight * 2.0 * err / n
            },
            grads,
        )?;
        loss += err * err;
    }
    Ok(loss / n)
}

/// Gradient of `kappa1 * L_ul + kappa2 * L_dl` and the three losses.
pub fn mals_critic_grad(
    critic: &Critic,
    dl_batch: &[CriticSample<'_>],
    ul_batch: &[CriticSample<'_>],
    kappa1: f64,
    kappa2: f64,
    grads: &mut [f64],
) -> Result<CriticLosses, RlError> {
    let ul = value_loss_grad(critic, ul_batch, kappa1, grads)?;
    let dl = value_loss_grad(critic, dl_batch, kappa2, grads)?;
    Ok(CriticLosses {
        ul,
        dl,
        combined: kappa1 * ul + kappa2 * dl,
    })
}

/// One Adam step of the shared critic on the weighted sum of both head
/// losses.
pub fn mals_critic_update(
    critic: &mut Critic,
    dl_batch: &[CriticSample<'_>],
    ul_batch: &[CriticSample<'_>],
    kappa1: f64,
    kappa2: f64,
    lr: f64,
    adam: &mut AdamState,
) -> Result<CriticLosses, RlError> {
    let mut grads = vec![0.0; critic.params.len()];
    let losses = mals_critic_grad(critic, dl_batch, ul_batch, kappa1, kappa2, &mut grads)?;
    if !losses.combined.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(RlError::NonFinite("critic loss".into()));
    }
    adam.step(&mut critic.params, &grads, lr)?;
    Ok(losses)
}

/// Whether the target copy is refreshed after critic update `round`
/// (1-based) under interval `c`.
pub fn sync_due(round: usize, c: usize) -> bool {
    c > 0 && round.is_multiple_of(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DlActor, UlActor};
    use crate::rng::RngStream;

    #[test]
    fn unit_ratio_gives_mean_advantage_and_vanilla_gradient() {
        let actor = DlActor::new(3, 2, 2, &[4], &mut RngStream::new(0));
        let states = [vec![0.1, 0.2, 0.3], vec![-0.4, 0.0, 0.9]];
        let actions = [vec![0, 1], vec![1, 1]];
        let adv = [1.5, -0.5];
        let batch: Vec<_> = (0..2)
            .map(|k| PpoSample {
                state: &states[k],
                action: &actions[k],
                old_log_prob: actor.log_prob(&states[k], &actions[k]).unwrap(),
                advantage: adv[k],
            })
            .collect();
        let mut grads = vec![0.0; actor.params.len()];
        let stats = ppo_surrogate_grad(&actor, &batch, 0.2, &mut grads).unwrap();
        assert!((stats.surrogate - 0.5).abs() < 1e-12);
        let mut vanilla = vec![0.0; actor.params.len()];
        for k in 0..2 {
            actor.log_prob_grad(&states[k], &actions[k], adv[k] / 2.0, &mut vanilla).unwrap();
        }
        for (a, b) in grads.iter().zip(&vanilla) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_clip_has_zero_gradient() {
        let actor = DlActor::new(3, 2, 2, &[4], &mut RngStream::new(1));
        let state = vec![0.3, 0.1, -0.2];
        let action = vec![1, 0];
        let lp = actor.log_prob(&state, &action).unwrap();
        // rho = 1.5 with A > 0 and rho = 0.5 with A < 0.
        let batch = [
            PpoSample {
                state: &state,
                action: &action,
                old_log_prob: lp - 1.5f64.ln(),
                advantage: 2.0,
            },
            PpoSample {
                state: &state,
                action: &action,
                old_log_prob: lp - 0.5f64.ln(),
                advantage: -1.0,
            },
        ];
        let mut grads = vec![0.0; actor.params.len()];
        let stats = ppo_surrogate_grad(&actor, &batch, 0.2, &mut grads).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
        assert_eq!(stats.clip_fraction, 1.0);
        assert!((stats.surrogate - (1.2 * 2.0 - 0.8) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_ratio_rejected() {
        let actor = UlActor::new(2, 1, &[3], -0.5, &mut RngStream::new(2));
        let state = vec![0.0, 0.0];
        let raw = vec![0.5];
        let batch = [PpoSample {
            state: &state,
            action: &raw,
            old_log_prob: -1e6,
            advantage: 1.0,
        }];
        let mut grads = vec![0.0; actor.params.len()];
        assert_eq!(
            ppo_surrogate_grad(&actor, &batch, 0.2, &mut grads),
            Err(RlError::NonFiniteRatio { index: 0, value: f64::INFINITY })
        );
    }

    #[test]
    fn surrogate_gradient_finite_differences() {
        let mut actor = UlActor::new(3, 2, &[4], -0.4, &mut RngStream::new(3));
        let states = [vec![0.2, -0.1, 0.4], vec![0.7, 0.3, -0.5], vec![-0.2, 0.0, 0.1]];
        let raws = [vec![0.3, 0.8], vec![0.6, 0.1], vec![0.45, 0.55]];
        let olds = [0.1, -0.05, 0.02];
        let adv = [1.0, -0.7, 0.4];
        // Offsets keep ratios near 1 but not equal to it.
        let olds_fixed: Vec<f64> = (0..3)
            .map(|k| actor.log_prob(&states[k], &raws[k]).unwrap() + olds[k])
            .collect();
        let eval = |a: &UlActor| {
            let batch: Vec<_> = (0..3)
                .map(|k| PpoSample {
                    state: &states[k][..],
                    action: &raws[k],
                    old_log_prob: olds_fixed[k],
                    advantage: adv[k],
                })
                .collect();
            let mut g = vec![0.0; a.params.len()];
            let stats = ppo_surrogate_grad(a, &batch, 0.2, &mut g).unwrap();
            (stats.surrogate, g)
        };
        let (_, grads) = eval(&actor);
        let h = 1e-5;
        for (k, &g) in grads.iter().enumerate() {
            let orig = actor.params[k];
            actor.params[k] = orig + h;
            let up = eval(&actor).0;
            actor.params[k] = orig - h;
            let down = eval(&actor).0;
            actor.params[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(g.abs());
            if denom > 1e-8 {
                assert!((fd - g).abs() / denom <= 1e-4, "param {k}: {fd} vs {}", g);
            }
        }
    }

    fn critic_fixture() -> (Critic, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let critic = Critic::new(&[3, 2], &[5, 4], &mut RngStream::new(7));
        let dl_states = vec![vec![0.1, 0.5, -0.2], vec![0.9, -0.3, 0.0]];
        let ul_states = vec![vec![0.4, 0.4], vec![-0.6, 0.2], vec![0.0, 1.0]];
        (critic, dl_states, ul_states)
    }

    #[test]
    fn losses_match_recomputation() {
        let (critic, dl_states, ul_states) = critic_fixture();
        let dl: Vec<_> = dl_states
            .iter()
            .zip([1.0, -2.0])
            .map(|(s, t)| CriticSample { head: 0, state: s, target: t })
            .collect();
        let ul: Vec<_> = ul_states
            .iter()
            .zip([0.5, 0.0, 3.0])
            .map(|(s, t)| CriticSample { head: 1, state: s, target: t })
            .collect();
        let mut grads = vec![0.0; critic.params.len()];
        let losses = mals_critic_grad(&critic, &dl, &ul, 0.5, 0.5, &mut grads).unwrap();
        let mse = |batch: &[CriticSample<'_>]| {
            batch
                .iter()
                .map(|s| (critic.value(s.head, s.state, false).unwrap() - s.target).powi(2))
                .sum::<f64>()
                / batch.len() as f64
        };
        assert!((losses.dl - mse(&dl)).abs() < 1e-12);
        assert!((losses.ul - mse(&ul)).abs() < 1e-12);
        assert!((losses.combined - 0.5 * (losses.dl + losses.ul)).abs() < 1e-12);
    }

    #[test]
    fn kappa_additivity_and_collapse() {
        let (critic, dl_states, ul_states) = critic_fixture();
        let dl: Vec<_> = dl_states.iter().map(|s| CriticSample { head: 0, state: s, target: 1.0 }).collect();
        let ul: Vec<_> = ul_states.iter().map(|s| CriticSample { head: 1, state: s, target: -1.0 }).collect();
        let grad = |k1: f64, k2: f64| {
            let mut g = vec![0.0; critic.params.len()];
            mals_critic_grad(&critic, &dl, &ul, k1, k2, &mut g).unwrap();
            g
        };
        let (g_mix, g_u, g_d) = (grad(0.3, 0.7), grad(1.0, 0.0), grad(0.0, 1.0));
        for k in 0..g_mix.len() {
            assert!((g_mix[k] - (0.3 * g_u[k] + 0.7 * g_d[k])).abs() <= 1e-10);
        }
        let (a0, o0) = critic.head_ranges(0).unwrap();
        assert!(g_u[a0].iter().chain(&g_u[o0]).all(|&g| g == 0.0));
    }

    #[test]
    fn worked_combination() {
        let losses = CriticLosses {
            ul: 2.0,
            dl: 4.0,
            combined: 0.5 * 2.0 + 0.5 * 4.0,
        };
        assert_eq!(losses.combined, 3.0);
    }

    #[test]
    fn sync_schedule() {
        let syncs = (1..=10).filter(|&r| sync_due(r, 4)).count();
        assert_eq!(syncs, 10 / 4);
        assert!(!sync_due(3, 0));
    }

    #[test]
    fn critic_update_reduces_loss() {
        let (mut critic, dl_states, ul_states) = critic_fixture();
        let dl: Vec<_> = dl_states.iter().map(|s| CriticSample { head: 0, state: s, target: 0.7 }).collect();
        let ul: Vec<_> = ul_states.iter().map(|s| CriticSample { head: 1, state: s, target: -0.4 }).collect();
        let mut adam = AdamState::new(critic.params.len());
        let first = mals_critic_update(&mut critic, &dl, &ul, 0.5, 0.5, 1e-2, &mut adam).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = mals_critic_update(&mut critic, &dl, &ul, 0.5, 0.5, 1e-2, &mut adam).unwrap();
        }
        assert!(last.combined < 0.1 * first.combined);
    }
}
