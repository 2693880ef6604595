use rand::Rng as _;

use crate::rng::Rng;

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draws an index from `softmax(logits)` by inverse CDF on one uniform.
pub fn categorical_sample(logits: &[f64], rng: &mut Rng) -> (usize, f64) {
    let probs = softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut pick = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            pick = i;
            break;
        }
    }
    // Guard against rounding picking a zero-probability tail entry.
    while probs[pick] == 0.0 && pick > 0 {
        pick -= 1;
    }
    (pick, log_softmax(logits)[pick])
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy of `softmax(logits)` in nats.
pub fn entropy(logits: &[f64]) -> f64 {
    let logp = log_softmax(logits);
    -logp.iter().map(|lp| if lp.is_finite() { lp.exp() * lp } else { 0.0 }).sum::<f64>()
}

/// Gradient of `log softmax(logits)[action]` with respect to the logits.
pub fn log_prob_grad(logits: &[f64], action: usize) -> Vec<f64> {
    let mut g: Vec<f64> = softmax(logits).into_iter().map(|p| -p).collect();
    g[action] += 1.0;
    g
}

/// Gradient of the entropy with respect to the logits:
/// `-p_i (log p_i + H)`.
pub fn entropy_grad(logits: &[f64]) -> Vec<f64> {
    let logp = log_softmax(logits);
    let h = entropy(logits);
    logp.iter().map(|lp| -lp.exp() * (lp + h)).collect()
}
