use crate::{Error, Result};

/// Sparse distribution over next states.
pub type Distribution = Vec<(usize, f64)>;

/// Finite MDP with tabular rewards and sparse transitions, indexed `[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<Vec<Distribution>>,
    pub rewards: Vec<Vec<f64>>,
}

/// Per `(s, a)` set of candidate transition models; member 0 is the nominal.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    pub models: Vec<Vec<Vec<Distribution>>>,
}

pub const MAX_SWEEPS: usize = 10_000;
const ROW_TOL: f64 = 1e-9;

fn check_row(row: &Distribution, n_states: usize) -> Result<()> {
    let total: f64 = row.iter().map(|&(_, p)| p).sum();
    if (total - 1.0).abs() > ROW_TOL || row.iter().any(|&(s, p)| s >= n_states || !(p >= 0.0)) {
        return Err(Error::Usage(format!("malformed transition row (sum {total})")));
    }
    Ok(())
}

impl FiniteMdp {
    pub fn validate(&self) -> Result<()> {
        if self.transitions.len() != self.n_states || self.rewards.len() != self.n_states {
            return Err(Error::Dimension { expected: self.n_states, got: self.transitions.len() });
        }
        for s in 0..self.n_states {
            if self.transitions[s].len() != self.n_actions || self.rewards[s].len() != self.n_actions {
                return Err(Error::Dimension { expected: self.n_actions, got: self.transitions[s].len() });
            }
            for a in 0..self.n_actions {
                check_row(&self.transitions[s][a], self.n_states)?;
                if !self.rewards[s][a].is_finite() {
                    return Err(Error::NonFinite("mdp reward"));
                }
            }
        }
        Ok(())
    }
}

impl UncertaintySet {
    /// Only the nominal model for every `(s, a)`.
    pub fn nominal(mdp: &FiniteMdp) -> Self {
        Self { models: mdp.transitions.iter().map(|row| row.iter().map(|d| vec![d.clone()]).collect()).collect() }
    }

    pub fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.models.len() != mdp.n_states {
            return Err(Error::Dimension { expected: mdp.n_states, got: self.models.len() });
        }
        for row in &self.models {
            if row.len() != mdp.n_actions {
                return Err(Error::Dimension { expected: mdp.n_actions, got: row.len() });
            }
            for set in row {
                if set.is_empty() {
                    return Err(Error::Usage("empty uncertainty set".into()));
                }
                for d in set {
                    check_row(d, mdp.n_states)?;
                }
            }
        }
        Ok(())
    }
}

/// Solved action values plus the sup-norm residual of every sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub q: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

impl Solution {
    pub fn state_values(&self) -> Vec<f64> {
        self.q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }
}

fn expected(d: &Distribution, v: &[f64]) -> f64 {
    d.iter().map(|&(s, p)| p * v[s]).sum()
}

fn solve(mdp: &FiniteMdp, gamma: f64, tol: f64, backup: impl Fn(usize, usize, &[f64]) -> f64) -> Result<Solution> {
    if !(0.0..1.0).contains(&gamma) || !(tol > 0.0) {
        return Err(Error::Usage(format!("need 0 <= gamma < 1 and tol > 0 (got {gamma}, {tol})")));
    }
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut residuals = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut residual: f64 = 0.0;
        let next: Vec<Vec<f64>> = (0..mdp.n_states)
            .map(|s| {
                (0..mdp.n_actions)
                    .map(|a| {
                        let value = mdp.rewards[s][a] + gamma * backup(s, a, &v);
                        residual = residual.max((value - q[s][a]).abs());
                        value
                    })
                    .collect()
            })
            .collect();
        q = next;
        residuals.push(residual);
        if residual < tol {
            return Ok(Solution { q, residuals });
        }
    }
    Err(Error::NoConvergence { sweeps: MAX_SWEEPS, residual: *residuals.last().unwrap() })
}

/// Synchronous Bellman-optimality sweeps until the sup-norm change drops below `tol`.
pub fn value_iteration(mdp: &FiniteMdp, gamma: f64, tol: f64) -> Result<Solution> {
    mdp.validate()?;
    solve(mdp, gamma, tol, |s, a, v| expected(&mdp.transitions[s][a], v))
}

/// Robust Bellman sweeps: each `(s, a)` backs up its worst model in `set`.
pub fn robust_value_iteration(mdp: &FiniteMdp, set: &UncertaintySet, gamma: f64, tol: f64) -> Result<Solution> {
    mdp.validate()?;
    set.validate(mdp)?;
    solve(mdp, gamma, tol, |s, a, v| set.models[s][a].iter().map(|d| expected(d, v)).fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(r: f64) -> FiniteMdp {
        FiniteMdp { n_states: 1, n_actions: 1, transitions: vec![vec![vec![(0, 1.0)]]], rewards: vec![vec![r]] }
    }

    #[test]
    fn geometric_series() {
        let sol = value_iteration(&one_state(1.0), 0.5, 1e-12).unwrap();
        assert!((sol.q[0][0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn myopic_limit_is_the_reward() {
        let mdp = FiniteMdp {
            n_states: 2,
            n_actions: 2,
            transitions: vec![vec![vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5)]], vec![vec![(0, 1.0)], vec![(1, 1.0)]]],
            rewards: vec![vec![0.3, -1.0], vec![2.0, 0.25]],
        };
        let sol = value_iteration(&mdp, 0.0, 1e-12).unwrap();
        assert_eq!(sol.q, mdp.rewards);
    }

    #[test]
    fn rejects_bad_rows_and_discount() {
        let mut mdp = one_state(1.0);
        mdp.transitions[0][0] = vec![(0, 0.9)];
        assert!(value_iteration(&mdp, 0.5, 1e-9).is_err());
        assert!(value_iteration(&one_state(1.0), 1.0, 1e-9).is_err());
    }

    #[test]
    fn degenerate_uncertainty_equals_nominal() {
        let mdp = FiniteMdp {
            n_states: 2,
            n_actions: 2,
            transitions: vec![vec![vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5)]], vec![vec![(0, 1.0)], vec![(1, 1.0)]]],
            rewards: vec![vec![0.3, -1.0], vec![2.0, 0.25]],
        };
        let a = value_iteration(&mdp, 0.9, 1e-12).unwrap();
        let b = robust_value_iteration(&mdp, &UncertaintySet::nominal(&mdp), 0.9, 1e-12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cap_is_reported() {
        // Residual shrinks by gamma per sweep; with gamma near 1 the cap hits first.
        let err = value_iteration(&one_state(1.0), 0.999_999, 1e-12).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { sweeps: MAX_SWEEPS, .. }));
    }
}
