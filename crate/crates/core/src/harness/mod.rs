//! Experiment orchestration: configuration, attacker training runs,
//! evaluation, ablation over attacker counts, trace export, replay and
//! rendering.

mod config;
mod defender;
mod episode;
mod eval;
mod render;
mod run;
mod trace;

pub use config::{hash_bytes, output_root, resolve_output, DefenderSpec, EvalConfig, ExperimentConfig, OUTPUT_ROOT_ENV};
pub use episode::{run_episode, AttackerControl, EpisodeOutcome};
pub use eval::{eval_episode_seed, evaluate, evaluate_seed, EvalReport, SeedResult};
pub use trace::{generator_version, replay, ReplayReport, Trace, TraceStep, VehicleRecord, REPLAY_TOLERANCE, TRACE_SCHEMA_VERSION};
pub use defender::{build_defender, defender_train, DefenderTrainSummary};
pub use render::{render_frame, render_trace};
pub use run::{
    ablate, ablation_table, checkpoint_dir, eval, load_attacker, save_report, train, write_atomic, AblationRow, AttackerSource,
    TrainOptions, TrainSummary, ACTOR_FILE, CRITIC_FILE, METRICS_FILE, PROGRESS_FILE,
};
