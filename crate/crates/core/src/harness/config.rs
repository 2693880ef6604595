use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::defender::{D3qnConfig, DefenderKind, TtcConfig};
use crate::geometry::{build_scenario, GeometryConfig, ScenarioKind};
use crate::marl::{DefenderReward, EnvSpec, HarConfig, ShapingConfig, TrainConfig};
use crate::rng;
use crate::sim::{RoleCounts, SimConfig};
use crate::{Error, Result};

/// Environment variable that relocates every relative output directory.
pub const OUTPUT_ROOT_ENV: &str = "ADVTEST_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenderSpec {
    #[serde(rename = "type")]
    pub kind: DefenderKind,
    /// Learned defenders only; defaults to `<run dir>/defender/<type>.ckpt`.
    pub checkpoint: Option<PathBuf>,
    pub ttc: TtcConfig,
    pub d3qn: D3qnConfig,
    pub ppo: TrainConfig,
    pub reward: DefenderReward,
}

impl Default for DefenderSpec {
    fn default() -> Self {
        Self {
            kind: DefenderKind::Vi,
            checkpoint: None,
            ttc: TtcConfig::default(),
            d3qn: D3qnConfig::default(),
            ppo: TrainConfig { total_steps: 100_000, ..TrainConfig::default() },
            reward: DefenderReward::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Sample attacker actions instead of taking the most probable one.
    pub stochastic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 200, seeds: vec![0, 1, 2], stochastic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub n_attackers: usize,
    /// Attacker spawn slots; slots beyond `n_attackers` are driven as NPCs.
    /// Defaults to `n_attackers`.
    pub attacker_slots: Option<usize>,
    pub n_npcs: usize,
    pub seed: u64,
    pub defender: DefenderSpec,
    pub har: HarConfig,
    pub shaping: ShapingConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub geometry: GeometryConfig,
    pub sim: SimConfig,
    /// Relative paths are resolved against the output root.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Highway,
            n_attackers: 2,
            attacker_slots: None,
            n_npcs: 4,
            seed: 0,
            defender: DefenderSpec::default(),
            har: HarConfig::default(),
            shaping: ShapingConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            geometry: GeometryConfig::default(),
            sim: SimConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Artifact(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n_attackers) {
            return Err(Error::config("n_attackers", format!("must be 1, 2 or 3, got {}", self.n_attackers)));
        }
        if let Some(slots) = self.attacker_slots {
            if !(self.n_attackers..=3).contains(&slots) {
                return Err(Error::config("attacker_slots", "must lie between n_attackers and 3"));
            }
        }
        if self.eval.episodes == 0 {
            return Err(Error::config("eval.episodes", "must be at least 1"));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "need at least one seed"));
        }
        self.har.validate()?;
        self.shaping.validate()?;
        self.train.validate("train")?;
        self.defender.ttc.validate("defender.ttc")?;
        self.defender.d3qn.validate("defender.d3qn")?;
        self.defender.ppo.validate("defender.ppo")?;
        self.geometry.validate()?;
        self.sim.validate()?;
        Ok(())
    }

    pub fn role_counts(&self) -> RoleCounts {
        let slots = self.attacker_slots.unwrap_or(self.n_attackers);
        RoleCounts { attackers: self.n_attackers, npcs: self.n_npcs, demoted: slots - self.n_attackers }
    }

    /// Attack scene.
    pub fn env_spec(&self) -> Result<EnvSpec> {
        self.env_spec_with(self.role_counts())
    }

    /// Scene the defender is trained in: background traffic only.
    pub fn defender_env_spec(&self) -> Result<EnvSpec> {
        self.env_spec_with(RoleCounts::new(0, self.n_npcs))
    }

    pub fn env_spec_with(&self, counts: RoleCounts) -> Result<EnvSpec> {
        Ok(EnvSpec {
            road: Arc::new(build_scenario(self.scenario, &self.geometry)?),
            sim: Arc::new(self.sim.clone()),
            counts,
        })
    }

    /// Digest of everything that shapes trained attackers. Evaluation
    /// budgets, the output location and checkpoint paths are excluded.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.eval = EvalConfig::default();
        c.output_dir = PathBuf::new();
        c.defender.checkpoint = None;
        hash_json(&c)
    }

    /// Digest of everything that shapes a trained defender.
    pub fn defender_hash(&self) -> String {
        let mut d = self.defender.clone();
        d.checkpoint = None;
        hash_json(&(self.scenario, self.n_npcs, self.seed, &d, &self.geometry, &self.sim))
    }

    /// Output directory, resolved against the output root.
    pub fn run_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }

    pub fn defender_checkpoint_path(&self) -> PathBuf {
        match &self.defender.checkpoint {
            Some(p) => resolve_output(p),
            None => self.run_dir().join("defender").join(format!("{}.ckpt", self.defender.kind.name())),
        }
    }
}

/// sha256 of the canonical (key-sorted, compact) JSON encoding.
fn hash_json<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).and_then(|v| serde_json::to_vec(&v)).expect("config serializes to JSON");
    rng::sha256_hex(&canonical)
}

pub fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn resolve_output(path: &Path) -> PathBuf {
    match output_root() {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

/// Parses a lowercase hex digest back into bytes.
pub fn hash_bytes(hex: &str) -> Result<[u8; 32]> {
    let mut out = [0u8; 32];
    if hex.len() != 64 {
        return Err(Error::Artifact(format!("bad config hash `{hex}`")));
    }
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| Error::Artifact(format!("bad config hash `{hex}`")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("scenario = \"highway\"\n[defender]\ntype = \"vi\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn too_many_attackers_names_the_field() {
        match ExperimentConfig::from_toml_str("n_attackers = 4") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "n_attackers"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_mistyped_keys_carry_their_path() {
        match ExperimentConfig::from_toml_str("[train]\nclip_epsilon = 0.1\n") {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("train"), "{path}"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::from_toml_str("[har]\nphi = \"ten\"\n") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "har.phi"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::from_toml_str("[defender]\ntype = \"mpc\"\n") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "defender.type"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_and_stable_hash() {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario = ScenarioKind::Roundabout;
        cfg.attacker_slots = Some(3);
        cfg.sim.horizon = Some(50);
        cfg.defender.checkpoint = Some(PathBuf::from("x/y.ckpt"));
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
        let mut other = cfg.clone();
        other.eval.episodes = 7;
        assert_eq!(other.config_hash(), cfg.config_hash());
        other.har.rho = -1.0;
        assert_ne!(other.config_hash(), cfg.config_hash());
        assert_eq!(hash_bytes(&cfg.config_hash()).unwrap().len(), 32);
    }

    #[test]
    fn slots_beyond_attackers_are_demoted() {
        let cfg = ExperimentConfig { n_attackers: 1, attacker_slots: Some(2), ..ExperimentConfig::default() };
        assert_eq!(cfg.role_counts(), RoleCounts { attackers: 1, npcs: 4, demoted: 1 });
    }

    #[test]
    fn step_budget_is_never_exceeded() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.train.iterations(), 292);
        assert!(cfg.train.iterations() * cfg.train.steps_per_iteration() <= cfg.train.total_steps);
        match ExperimentConfig::from_toml_str("[train]\ntotal_steps = 1000\n") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "train.total_steps"),
            other => panic!("{other:?}"),
        }
    }
}
