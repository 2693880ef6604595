use crate::{Error, Result};

/// Generalized advantage estimates and bootstrapped returns for one
/// trajectory segment. `bootstrap` is the value after the last step and is
/// ignored when that step is done.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n {
        return Err(Error::Dimension { expected: n, got: values.len() });
    }
    if dones.len() != n {
        return Err(Error::Dimension { expected: n, got: dones.len() });
    }
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        adv[t] = delta + gamma * lambda * live * next_adv;
        next_value = values[t];
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_everything() {
        let (a, r) = compute_gae(&[0.0; 5], &[0.0; 5], &[false; 5], 0.0, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![0.0; 5]);
        assert_eq!(r, vec![0.0; 5]);
    }

    #[test]
    fn monte_carlo_limit_is_suffix_sums() {
        let rewards = [1.0, -2.0, 0.5, 3.0];
        let (a, _) = compute_gae(&rewards, &[0.0; 4], &[false; 4], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(a, vec![2.5, 1.5, 3.5, 3.0]);
    }

    #[test]
    fn single_step_example() {
        let (a, r) = compute_gae(&[1.0], &[0.5], &[false], 1.0, 0.9, 0.95).unwrap();
        assert!((a[0] - 1.4).abs() < 1e-12);
        assert!((r[0] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9).is_err());
    }
}
