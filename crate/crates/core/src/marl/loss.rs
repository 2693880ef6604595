use super::batch::RolloutBatch;
use crate::nn::{entropy, entropy_grad, log_prob_grad, log_softmax, Mlp};
use crate::{Error, Result};

/// Log-ratios are clamped to this magnitude before exponentiation.
const LOG_RATIO_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
}

/// Negated clipped surrogate plus entropy bonus, averaged over `indices`,
/// with `advantages` supplied separately so callers can normalize them.
pub fn actor_loss(
    batch: &RolloutBatch,
    indices: &[usize],
    advantages: &[f64],
    actor: &Mlp,
    clip_eps: f64,
    entropy_coef: f64,
) -> Result<ActorLoss> {
    let mut grads = actor.zero_grads();
    if indices.is_empty() {
        return Ok(ActorLoss { loss: 0.0, grads, entropy: 0.0, clip_fraction: 0.0 });
    }
    let n = indices.len() as f64;
    let (mut objective, mut total_entropy, mut clipped) = (0.0, 0.0, 0usize);
    for &i in indices {
        let (logits, cache) = actor.forward(&batch.obs[i])?;
        let action = batch.actions[i];
        let log_prob = log_softmax(&logits)[action];
        let raw = log_prob - batch.log_probs[i];
        let log_ratio = raw.clamp(-LOG_RATIO_LIMIT, LOG_RATIO_LIMIT);
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite("probability ratio"));
        }
        let a = advantages[i];
        let unclipped = ratio * a;
        let clipped_ratio = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        let surrogate = unclipped.min(clipped_ratio * a);
        let outside = clipped_ratio != ratio;
        if outside {
            clipped += 1;
        }
        let h = entropy(&logits);
        objective += surrogate + entropy_coef * h;
        total_entropy += h;

        // d(surrogate)/d(log_prob): zero when the clipped branch is active
        // and binding, or when the log-ratio clamp is active.
        let takes_unclipped = unclipped <= clipped_ratio * a;
        let mut d_logp = if takes_unclipped || !outside { ratio * a } else { 0.0 };
        if log_ratio != raw {
            d_logp = 0.0;
        }
        let glp = log_prob_grad(&logits, action);
        let gh = entropy_grad(&logits);
        let upstream: Vec<f64> = glp.iter().zip(&gh).map(|(g, e)| -(d_logp * g + entropy_coef * e) / n).collect();
        actor.backward(&cache, &upstream, &mut grads)?;
    }
    Ok(ActorLoss { loss: -objective / n, grads, entropy: total_entropy / n, clip_fraction: clipped as f64 / n })
}

/// Mean over `indices` of the larger of the unclipped and value-clipped
/// squared errors against the returns.
pub fn critic_loss(batch: &RolloutBatch, indices: &[usize], critic: &Mlp, value_clip: f64) -> Result<CriticLoss> {
    let mut grads = critic.zero_grads();
    if indices.is_empty() {
        return Ok(CriticLoss { loss: 0.0, grads });
    }
    let n = indices.len() as f64;
    let mut total = 0.0;
    for &i in indices {
        let (out, cache) = critic.forward(&batch.obs[i])?;
        let v = out[0];
        let old = batch.values[i];
        let target = batch.returns[i];
        let delta = v - old;
        let v_clipped = old + delta.clamp(-value_clip, value_clip);
        let unclipped = (v - target).powi(2);
        let clipped = (v_clipped - target).powi(2);
        let dv = if unclipped >= clipped {
            2.0 * (v - target)
        } else if delta.abs() < value_clip {
            2.0 * (v_clipped - target)
        } else {
            0.0
        };
        total += unclipped.max(clipped);
        critic.backward(&cache, &[dv / n], &mut grads)?;
    }
    Ok(CriticLoss { loss: total / n, grads })
}
