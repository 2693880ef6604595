use std::collections::VecDeque;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{hash_bytes, ExperimentConfig};
use super::defender::build_defender;
use super::episode::{run_episode, AttackerControl};
use super::eval::{evaluate, EvalReport};
use crate::defender::{DefenderKind, DefenderPolicy};
use crate::exec::Execution;
use crate::marl::{episode_seed, train_iteration, IterationMetrics, Learner, PolicyState};
use crate::nn::{Checkpoint, CheckpointRole, Mlp};
use crate::rng;
use crate::sim::RoleCounts;
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const PROGRESS_FILE: &str = "progress.json";
pub const ACTOR_FILE: &str = "attacker_actor.ckpt";
pub const CRITIC_FILE: &str = "attacker_critic.ckpt";

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Progress {
    config_hash: String,
    /// Iterations completed and covered by the saved checkpoint.
    iteration: usize,
    env_steps: usize,
    recent_success: Vec<bool>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from `progress.json` when present.
    pub resume: bool,
    /// Stop after this many iterations in this call (the run stays resumable).
    pub max_iterations: Option<usize>,
    pub allow_hash_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub resumed_from: Option<usize>,
    pub iterations_done: usize,
    pub total_iterations: usize,
    pub last: Option<IterationMetrics>,
    pub checkpoints: Vec<PathBuf>,
    pub traces: Vec<PathBuf>,
}

impl TrainSummary {
    pub fn finished(&self) -> bool {
        self.iterations_done >= self.total_iterations
    }
}

pub fn checkpoint_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("checkpoints")
}

fn save_policy(dir: &Path, policy: &PolicyState, hash: [u8; 32]) -> Result<()> {
    let actor = Checkpoint { role: CheckpointRole::AttackerActor, config_hash: hash, nets: vec![policy.actor.clone()], opt: Some(vec![policy.actor_opt.clone()]) };
    let critic = Checkpoint { role: CheckpointRole::AttackerCritic, config_hash: hash, nets: vec![policy.critic.clone()], opt: Some(vec![policy.critic_opt.clone()]) };
    actor.save(&dir.join(ACTOR_FILE))?;
    critic.save(&dir.join(CRITIC_FILE))
}

fn load_policy(dir: &Path, hash: &[u8; 32], progress: &Progress, allow: bool) -> Result<PolicyState> {
    let actor = Checkpoint::load(&dir.join(ACTOR_FILE), CheckpointRole::AttackerActor, hash, allow)?;
    let critic = Checkpoint::load(&dir.join(CRITIC_FILE), CheckpointRole::AttackerCritic, hash, allow)?;
    let take = |c: Checkpoint, what: &str| -> Result<(Mlp, crate::nn::Adam)> {
        let net = c.nets.into_iter().next().ok_or_else(|| Error::Artifact(format!("{what} checkpoint has no network")))?;
        let opt = c.opt.and_then(|o| o.into_iter().next()).ok_or_else(|| Error::Artifact(format!("{what} checkpoint has no optimizer state")))?;
        Ok((net, opt))
    };
    let (actor, actor_opt) = take(actor, "actor")?;
    let (critic, critic_opt) = take(critic, "critic")?;
    Ok(PolicyState {
        actor,
        critic,
        actor_opt,
        critic_opt,
        iteration: progress.iteration,
        env_steps: progress.env_steps,
        recent_success: VecDeque::from(progress.recent_success.clone()),
    })
}

/// Keeps the header and rows of iterations below `keep`.
fn truncate_metrics(path: &Path, keep: usize) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    for line in text.lines() {
        let iteration = line.split(',').next().and_then(|f| f.parse::<usize>().ok());
        if iteration.is_none_or(|i| i < keep) {
            out.push_str(line);
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Trains the shared attacker policy against `defender`, writing metrics,
/// checkpoints and sample traces under the run directory.
pub fn train(cfg: &ExperimentConfig, defender: &DefenderPolicy, execution: Execution, opts: &TrainOptions) -> Result<TrainSummary> {
    let run_dir = cfg.run_dir();
    let ckpt_dir = checkpoint_dir(&run_dir);
    let metrics_path = run_dir.join(METRICS_FILE);
    let progress_path = run_dir.join(PROGRESS_FILE);
    let hash_hex = cfg.config_hash();
    let hash = hash_bytes(&hash_hex)?;
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write_atomic(&run_dir.join("config.toml"), format!("# config_hash: {hash_hex}\n{}", cfg.to_toml_string()?).as_bytes())?;

    let mut resumed_from = None;
    let mut policy = if opts.resume && progress_path.exists() {
        let text = std::fs::read_to_string(&progress_path).map_err(|e| Error::io(&progress_path, e))?;
        let progress: Progress = serde_json::from_str(&text)?;
        if progress.config_hash != hash_hex && !opts.allow_hash_mismatch {
            return Err(Error::HashMismatch { found: progress.config_hash, expected: hash_hex });
        }
        let p = load_policy(&ckpt_dir, &hash, &progress, opts.allow_hash_mismatch)?;
        truncate_metrics(&metrics_path, p.iteration)?;
        resumed_from = Some(p.iteration);
        p
    } else {
        let header = format!("# config_hash: {hash_hex}\n{}\n", IterationMetrics::CSV_HEADER);
        write_atomic(&metrics_path, header.as_bytes())?;
        PolicyState::init(cfg.seed, &cfg.train)
    };

    let spec = cfg.env_spec()?;
    let learner = Learner::Attackers { defender, har: cfg.har, shaping: cfg.shaping };
    let total = cfg.train.iterations();
    let mut summary = TrainSummary {
        run_dir: run_dir.clone(),
        resumed_from,
        iterations_done: policy.iteration,
        total_iterations: total,
        last: None,
        checkpoints: Vec::new(),
        traces: Vec::new(),
    };
    let mut ran = 0;
    while policy.iteration < total && opts.max_iterations.is_none_or(|m| ran < m) {
        let it = policy.iteration;
        if it % cfg.train.trace_every == 0 {
            // First episode of environment 0, replayed with the same seeds
            // and the policy that collects this iteration.
            let mut r = rng::stream(cfg.seed, "rollout", (it as u64) << 16);
            let control = AttackerControl::Policy { actor: &policy.actor, greedy: false };
            let ep = run_episode(&spec, control, defender, episode_seed(cfg.seed, it, 0, 0), &mut r, cfg.har.lambda_accel, Some(&hash_hex))
                .map_err(|e| Error::Training { iteration: it, source: Box::new(e) })?;
            let path = run_dir.join("traces").join(format!("iter_{it:06}.json"));
            ep.trace.expect("trace requested").save(&path)?;
            summary.traces.push(path);
        }
        let (metrics, _) = train_iteration(&mut policy, &spec, &learner, &cfg.train, cfg.seed, execution)?;
        let mut f = std::fs::OpenOptions::new().append(true).open(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        writeln!(f, "{}", metrics.csv_row()).map_err(|e| Error::io(&metrics_path, e))?;
        summary.last = Some(metrics);
        ran += 1;
        let done = policy.iteration;
        if done % cfg.train.checkpoint_every == 0 || done == total {
            let stamped = ckpt_dir.join(format!("iter_{done:06}"));
            save_policy(&stamped, &policy, hash)?;
            save_policy(&ckpt_dir, &policy, hash)?;
            let progress = Progress {
                config_hash: hash_hex.clone(),
                iteration: done,
                env_steps: policy.env_steps,
                recent_success: policy.recent_success.iter().copied().collect(),
            };
            write_atomic(&progress_path, serde_json::to_string_pretty(&progress)?.as_bytes())?;
            summary.checkpoints.push(stamped);
        }
    }
    summary.iterations_done = policy.iteration;
    Ok(summary)
}

/// Attackers to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackerSource {
    /// Trained actor; defaults to the run's latest checkpoint.
    Checkpoint(Option<PathBuf>),
    /// Uniformly random meta-actions from the attacker vehicles.
    RandomBaseline,
    /// Every attacker slot driven as a background vehicle.
    NpcBaseline,
}

pub fn load_attacker(cfg: &ExperimentConfig, path: Option<&Path>, allow_mismatch: bool) -> Result<Mlp> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| checkpoint_dir(&cfg.run_dir()).join(ACTOR_FILE));
    if !path.exists() {
        return Err(Error::Artifact(format!("attacker checkpoint {} not found", path.display())));
    }
    let ckpt = Checkpoint::load(&path, CheckpointRole::AttackerActor, &hash_bytes(&cfg.config_hash())?, allow_mismatch)?;
    ckpt.nets.into_iter().next().ok_or_else(|| Error::Artifact(format!("{} holds no network", path.display())))
}

/// Attack success rates per evaluation seed. `defender_override` swaps the
/// configured defender, which changes the config hash the attacker must match.
pub fn eval(
    cfg: &ExperimentConfig,
    source: &AttackerSource,
    defender_override: Option<DefenderKind>,
    allow_mismatch: bool,
    execution: Execution,
) -> Result<EvalReport> {
    let mut cfg = cfg.clone();
    if let Some(kind) = defender_override {
        cfg.defender.kind = kind;
    }
    let defender = build_defender(&cfg, allow_mismatch)?;
    let hash = cfg.config_hash();
    let (label, spec, actor) = match source {
        AttackerSource::Checkpoint(path) => ("trained".to_string(), cfg.env_spec()?, Some(load_attacker(&cfg, path.as_deref(), allow_mismatch)?)),
        AttackerSource::RandomBaseline => ("random".to_string(), cfg.env_spec()?, None),
        AttackerSource::NpcBaseline => {
            let counts = cfg.role_counts();
            let demoted = RoleCounts { attackers: 0, npcs: counts.npcs, demoted: counts.attacker_slots() };
            ("npc".to_string(), cfg.env_spec_with(demoted)?, None)
        }
    };
    let control = match &actor {
        Some(a) => AttackerControl::Policy { actor: a, greedy: !cfg.eval.stochastic },
        None => AttackerControl::Random,
    };
    let label = format!("{label} vs {}", cfg.defender.kind.name());
    evaluate(&label, &hash, &spec, control, &defender, &cfg.eval.seeds, cfg.eval.episodes, cfg.har.lambda_accel, execution)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub attackers: usize,
    pub report: EvalReport,
    pub run_dir: PathBuf,
}

/// Table of success rates for 1..=n attackers, where n is the configured
/// count; the unused attacker slots are driven as background vehicles.
pub fn ablate(cfg: &ExperimentConfig, execution: Execution) -> Result<Vec<AblationRow>> {
    let slots = cfg.attacker_slots.unwrap_or(cfg.n_attackers);
    let defender = build_defender(cfg, false)?;
    let mut rows = Vec::new();
    for k in 1..=cfg.n_attackers {
        let mut ck = cfg.clone();
        ck.n_attackers = k;
        ck.attacker_slots = Some(slots);
        ck.output_dir = cfg.output_dir.join(format!("attackers_{k}"));
        train(&ck, &defender, execution, &TrainOptions { resume: true, ..TrainOptions::default() })?;
        let report = eval(&ck, &AttackerSource::Checkpoint(None), None, false, execution)?;
        rows.push(AblationRow { attackers: k, report, run_dir: ck.run_dir() });
    }
    Ok(rows)
}

/// Plain-text grid with one row per attacker count.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("attackers  success rate (std)   mean      std\n");
    for r in rows {
        let std = r.report.std.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!("{:<10} {:<20} {:<9.4} {}\n", r.attackers, r.report.formatted(), r.report.mean, std));
    }
    out
}

/// Saves a report next to the run's other artifacts.
pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(report)?.as_bytes())
}
