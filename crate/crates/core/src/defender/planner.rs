//! Memoized grid-MDP solutions. The abstracted MDP depends only on the
//! bucket table and the abstraction settings, and the same tables recur
//! constantly during an episode, so solved Q tables are shared process-wide.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::mdp::{robust_value_iteration, value_iteration};
use super::ttc::{grid_mdp, TtcConfig, TtcSituation};
use crate::sim::EnvState;
use crate::Result;

/// Entries kept before the cache is flushed.
const CAPACITY: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    robust: bool,
    settings: Vec<u64>,
    buckets: Vec<Vec<usize>>,
}

type Table = Arc<Vec<Vec<f64>>>;

fn cache() -> &'static Mutex<HashMap<Key, Table>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Table>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn settings(cfg: &TtcConfig) -> Vec<u64> {
    let mut v: Vec<u64> = cfg.speed_levels.iter().map(|x| x.to_bits()).collect();
    v.extend([
        cfg.buckets as u64,
        cfg.bucket_seconds.to_bits(),
        cfg.speed_weight.to_bits(),
        cfg.collision_weight.to_bits(),
        cfg.gamma.to_bits(),
        cfg.tol.to_bits(),
    ]);
    v
}

/// Q values of the defender's present abstract state.
pub fn grid_q_values(state: &EnvState, cfg: &TtcConfig, robust: bool) -> Result<Vec<f64>> {
    let situation = TtcSituation::observe(state, cfg)?;
    let key = Key { robust, settings: settings(cfg), buckets: situation.buckets.clone() };
    let hit = cache().lock().unwrap_or_else(|e| e.into_inner()).get(&key).cloned();
    let table = match hit {
        Some(t) => t,
        None => {
            let (mdp, set) = grid_mdp(&situation.buckets, cfg);
            let sol = if robust {
                robust_value_iteration(&mdp, &set, cfg.gamma, cfg.tol)?
            } else {
                value_iteration(&mdp, cfg.gamma, cfg.tol)?
            };
            let table = Arc::new(sol.q);
            let mut guard = cache().lock().unwrap_or_else(|e| e.into_inner());
            if guard.len() >= CAPACITY {
                guard.clear();
            }
            guard.insert(key, Arc::clone(&table));
            table
        }
    };
    Ok(table[situation.current_state(cfg)].clone())
}
