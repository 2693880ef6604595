use std::sync::Arc;

use advtest_core::defender::{DefenderPolicy, TtcConfig};
use advtest_core::exec::Execution;
use advtest_core::geometry::{build_scenario, GeometryConfig, ScenarioKind};
use advtest_core::marl::{
    actor_loss, collect_rollout, compute_gae, critic_loss, har_reward, mappo_update, normalize_advantages, params_digest,
    train_iteration, EnvSpec, HarConfig, Learner, PolicyState, RolloutBatch, ShapingConfig, TrainConfig, Worker,
};
use advtest_core::nn::{log_softmax, Activation, Adam, Mlp};
use advtest_core::rng::{self, Rng};
use advtest_core::sim::{Action, RoleCounts, SimConfig, StepEvents, OBS_DIM};
use rand::Rng as _;

fn spec(kind: ScenarioKind, attackers: usize, npcs: usize) -> EnvSpec {
    EnvSpec {
        road: Arc::new(build_scenario(kind, &GeometryConfig::default()).unwrap()),
        sim: Arc::new(SimConfig::default()),
        counts: RoleCounts::new(attackers, npcs),
    }
}

fn small_net(out: usize, gain: f64, r: &mut Rng) -> Mlp {
    Mlp::init(&[OBS_DIM, 16, 16, out], Activation::Tanh, Activation::Linear, gain, r)
}

/// Random batch whose behavior log-probs come from a perturbed copy of
/// `actor`, so ratios spread around one and some clip.
fn synthetic_batch(actor: &Mlp, n: usize, r: &mut Rng) -> RolloutBatch {
    let mut behavior = actor.clone();
    for p in behavior.params_mut() {
        *p += r.gen_range(-0.3..0.3);
    }
    let mut b = RolloutBatch::default();
    for _ in 0..n {
        let mut obs = [0.0; OBS_DIM];
        obs.iter_mut().for_each(|x| *x = r.gen_range(-1.0..1.0));
        let a = r.gen_range(0..Action::COUNT);
        b.log_probs.push(log_softmax(&behavior.predict(&obs).unwrap())[a]);
        b.obs.push(obs);
        b.actions.push(a);
        b.values.push(r.gen_range(-1.0..1.0));
        b.returns.push(r.gen_range(-2.0..2.0));
        b.advantages.push(r.gen_range(-2.0..2.0));
        b.rewards.push(0.0);
        b.dones.push(false);
        b.mask.push(true);
        b.aggressive.push(false);
    }
    b
}

fn max_rel_err(analytic: &[f64], mut loss_at: impl FnMut(usize, f64) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, &g) in analytic.iter().enumerate() {
        let numeric = (loss_at(i, h) - loss_at(i, -h)) / (2.0 * h);
        worst = worst.max((numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-6));
    }
    worst
}

#[test]
fn gae_matches_brute_force_definition() {
    let mut r = rng::stream(11, "test", 0);
    for _ in 0..1000 {
        let n = r.gen_range(1..=32);
        let rewards: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| r.gen_bool(0.15)).collect();
        let boot = r.gen_range(-1.0..1.0);
        let (gamma, lam) = (r.gen_range(0.5..1.0), r.gen_range(0.0..=1.0));
        let (adv, ret) = compute_gae(&rewards, &values, &dones, boot, gamma, lam).unwrap();
        let next_v = |t: usize| if t + 1 < n { values[t + 1] } else { boot };
        let delta: Vec<f64> =
            (0..n).map(|t| rewards[t] + gamma * if dones[t] { 0.0 } else { next_v(t) } - values[t]).collect();
        for t in 0..n {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                sum += w * delta[k];
                if dones[k] {
                    break;
                }
                w *= gamma * lam;
            }
            assert!((adv[t] - sum).abs() < 1e-12);
            assert!((ret[t] - (sum + values[t])).abs() < 1e-12);
        }
    }
    assert!(compute_gae(&[0.0; 3], &[0.0; 2], &[false; 3], 0.0, 0.9, 0.9).is_err());
}

#[test]
fn har_reward_takes_only_four_values() {
    let cfg = HarConfig::default();
    for collision in [false, true] {
        for action in Action::ALL {
            for accel in [0.0, 3.5, -3.5, 3.6, -9.0] {
                let events = StepEvents { defender_collision: collision, ..StepEvents::default() };
                let r = har_reward(&events, action, accel, &cfg);
                let hard = accel.abs() > cfg.lambda_accel;
                let expected = if collision { 10.0 } else { 0.0 } + if hard || action.is_lane_change() { -10.5 } else { 0.0 };
                assert_eq!(r, expected);
                assert!([0.0, 10.0, -10.5, -0.5].contains(&r));
            }
        }
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut r = rng::stream(5, "test", 0);
    let actor = small_net(Action::COUNT, 1.0, &mut r);
    let critic = small_net(1, 1.0, &mut r);
    let batch = synthetic_batch(&actor, 32, &mut r);
    let idx: Vec<usize> = (0..32).collect();
    let adv = normalize_advantages(&batch.advantages, &idx);

    let a = actor_loss(&batch, &idx, &adv, &actor, 0.2, 0.01).unwrap();
    assert!(a.clip_fraction > 0.0, "batch should exercise the clipped branch");
    let err = max_rel_err(&a.grads, |i, h| {
        let mut m = actor.clone();
        m.params_mut()[i] += h;
        actor_loss(&batch, &idx, &adv, &m, 0.2, 0.01).unwrap().loss
    });
    assert!(err < 1e-5, "actor rel err {err}");

    let c = critic_loss(&batch, &idx, &critic, 0.2).unwrap();
    let err = max_rel_err(&c.grads, |i, h| {
        let mut m = critic.clone();
        m.params_mut()[i] += h;
        critic_loss(&batch, &idx, &m, 0.2).unwrap().loss
    });
    assert!(err < 1e-5, "critic rel err {err}");
}

#[test]
fn ratio_one_identity_and_clip_inactivity() {
    let mut r = rng::stream(6, "test", 0);
    let actor = small_net(Action::COUNT, 1.0, &mut r);
    let mut batch = synthetic_batch(&actor, 40, &mut r);
    for i in 0..batch.len() {
        batch.log_probs[i] = log_softmax(&actor.predict(&batch.obs[i]).unwrap())[batch.actions[i]];
    }
    let idx: Vec<usize> = (0..40).collect();
    let l = actor_loss(&batch, &idx, &batch.advantages, &actor, 0.2, 0.0).unwrap();
    let mean_adv = batch.advantages.iter().sum::<f64>() / 40.0;
    assert!((l.loss + mean_adv).abs() < 1e-12);
    assert_eq!(l.clip_fraction, 0.0);

    // ratios within the clip range: loss equals the plain surrogate
    for i in 0..batch.len() {
        batch.log_probs[i] -= r.gen_range(-0.15..0.15);
    }
    let l = actor_loss(&batch, &idx, &batch.advantages, &actor, 0.2, 0.0).unwrap();
    let plain: f64 = idx
        .iter()
        .map(|&i| {
            let lp = log_softmax(&actor.predict(&batch.obs[i]).unwrap())[batch.actions[i]];
            (lp - batch.log_probs[i]).exp() * batch.advantages[i]
        })
        .sum::<f64>()
        / 40.0;
    assert_eq!(l.clip_fraction, 0.0);
    assert!((l.loss + plain).abs() < 1e-12);
}

#[test]
fn clipped_and_entropy_examples() {
    // zero weights: uniform policy, so log-prob is -ln 5 for every action
    let actor = Mlp::zeros(&[OBS_DIM, 4, Action::COUNT], Activation::Tanh, Activation::Linear);
    let mut b = RolloutBatch::default();
    b.obs.push([0.0; OBS_DIM]);
    b.actions.push(0);
    b.log_probs.push(-(5f64.ln()) - 2f64.ln()); // ratio 2
    for v in [&mut b.values, &mut b.returns, &mut b.rewards] {
        v.push(0.0);
    }
    b.dones.push(false);
    b.mask.push(true);
    b.aggressive.push(false);
    let l = actor_loss(&b, &[0], &[1.5], &actor, 0.2, 0.0).unwrap();
    assert!((l.loss + 1.2 * 1.5).abs() < 1e-12);
    assert_eq!(l.clip_fraction, 1.0);
    let l = actor_loss(&b, &[0], &[1.5], &actor, 0.2, 0.1).unwrap();
    assert!((l.loss + 1.2 * 1.5 + 0.1 * 5f64.ln()).abs() < 1e-12);
    assert!((l.entropy - 5f64.ln()).abs() < 1e-12);
}

#[test]
fn critic_loss_examples() {
    // single linear unit: V = w . x + b
    let mut critic = Mlp::zeros(&[OBS_DIM, 1], Activation::Tanh, Activation::Linear);
    let n = critic.params().len();
    critic.params_mut()[n - 1] = 1.0;
    let mut b = RolloutBatch::default();
    b.obs.push([0.0; OBS_DIM]);
    b.values.push(0.0);
    b.returns.push(2.0);
    let l = critic_loss(&b, &[0], &critic, 0.2).unwrap();
    assert!((l.loss - 3.24).abs() < 1e-12);

    b.values[0] = 1.0;
    b.returns[0] = 1.0;
    assert_eq!(critic_loss(&b, &[0], &critic, 0.2).unwrap().loss, 0.0);
    b.returns[0] = 3.0;
    assert!((critic_loss(&b, &[0], &critic, 0.2).unwrap().loss - 4.0).abs() < 1e-12);
}

#[test]
fn zero_advantages_leave_the_actor_unchanged() {
    let mut r = rng::stream(8, "test", 0);
    let mut actor = small_net(Action::COUNT, 1.0, &mut r);
    let mut critic = small_net(1, 1.0, &mut r);
    let mut batch = synthetic_batch(&actor, 48, &mut r);
    batch.advantages = vec![0.0; 48];
    let before = actor.clone();
    let mut ao = Adam::new(actor.params().len(), 3e-4);
    let mut co = Adam::new(critic.params().len(), 3e-4);
    let cfg = TrainConfig { entropy_coef: 0.0, ..TrainConfig::default() };
    let m = mappo_update(&batch, &mut actor, &mut critic, &mut ao, &mut co, &cfg, &mut r).unwrap();
    for (a, b) in actor.params().iter().zip(before.params()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((0.0..=5f64.ln() + 1e-12).contains(&m.entropy));
}

#[test]
fn update_is_deterministic() {
    let run = || {
        let mut r = rng::stream(9, "test", 0);
        let mut actor = small_net(Action::COUNT, 1.0, &mut r);
        let mut critic = small_net(1, 1.0, &mut r);
        let batch = synthetic_batch(&actor, 64, &mut r);
        let mut ao = Adam::new(actor.params().len(), 3e-4);
        let mut co = Adam::new(critic.params().len(), 3e-4);
        let mut shuffle = rng::stream(9, "minibatch", 0);
        mappo_update(&batch, &mut actor, &mut critic, &mut ao, &mut co, &TrainConfig::default(), &mut shuffle).unwrap();
        (actor, critic)
    };
    assert_eq!(run(), run());
}

fn attack_rollout(execution: Execution) -> RolloutBatch {
    let spec = spec(ScenarioKind::Highway, 2, 4);
    let cfg = TrainConfig::default();
    let state = PolicyState::init(3, &cfg);
    let defender = DefenderPolicy::Vi(TtcConfig::default());
    let learner = Learner::Attackers { defender: &defender, har: HarConfig::default(), shaping: ShapingConfig::default() };
    let mut workers: Vec<Worker> = (0..4).map(|i| Worker::new(&spec, 3, 0, i).unwrap()).collect();
    collect_rollout(&mut workers, &spec, &state.actor, &state.critic, &learner, 8, execution).unwrap()
}

#[test]
fn rollout_shape_alignment_and_determinism() {
    let b = attack_rollout(Execution::Parallel);
    assert_eq!(b.len(), 2 * 4 * 8);
    assert_eq!(b.segments.len(), 8);
    for v in [b.obs.len(), b.log_probs.len(), b.values.len(), b.rewards.len(), b.dones.len(), b.mask.len(), b.aggressive.len()] {
        assert_eq!(v, 64);
    }
    for seg in &b.segments {
        assert_eq!(seg.len, 8);
        for i in seg.start..seg.start + seg.len {
            // padding only ever follows a done step
            if !b.mask[i] {
                assert!(i > seg.start && b.dones[i - 1]);
            }
        }
    }
    assert_eq!(b, attack_rollout(Execution::Parallel));
    assert_eq!(b, attack_rollout(Execution::Sequential));
}

#[test]
fn done_flags_mark_terminal_steps() {
    let spec = spec(ScenarioKind::Merge, 1, 2);
    let cfg = TrainConfig::default();
    let state = PolicyState::init(4, &cfg);
    let defender = DefenderPolicy::Random;
    let learner = Learner::Attackers { defender: &defender, har: HarConfig::default(), shaping: ShapingConfig::default() };
    let mut workers = vec![Worker::new(&spec, 4, 0, 0).unwrap()];
    let b = collect_rollout(&mut workers, &spec, &state.actor, &state.critic, &learner, 200, Execution::Sequential).unwrap();
    assert!(!b.episodes.is_empty());
    // each finished episode ends with a done step at its cumulative length
    let mut t = 0;
    for ep in &b.episodes {
        t += ep.length;
        assert!(b.dones[t - 1], "episode ending at step {t} not marked done");
    }
}

#[test]
fn all_attackers_share_one_parameter_snapshot() {
    let b = attack_rollout(Execution::Parallel);
    let state = PolicyState::init(3, &TrainConfig::default());
    assert_eq!(b.policy_digest, params_digest(&state.actor));
    // both attackers' behavior log-probs are reproduced by that one network
    for i in b.active_indices() {
        let lp = log_softmax(&state.actor.predict(&b.obs[i]).unwrap())[b.actions[i]];
        assert_eq!(lp, b.log_probs[i]);
    }
}

#[test]
fn training_iterations_are_reproducible_and_resumable() {
    let spec = spec(ScenarioKind::Highway, 1, 3);
    let cfg = TrainConfig { rollout_len: 16, n_envs: 2, epochs: 2, minibatches: 2, ..TrainConfig::default() };
    let defender = DefenderPolicy::Vi(TtcConfig::default());
    let learner = Learner::Attackers { defender: &defender, har: HarConfig::default(), shaping: ShapingConfig::default() };
    let run = |iters: usize, from: Option<PolicyState>| {
        let mut p = from.unwrap_or_else(|| PolicyState::init(21, &cfg));
        let mut rows = Vec::new();
        for _ in 0..iters {
            rows.push(train_iteration(&mut p, &spec, &learner, &cfg, 21, Execution::Parallel).unwrap().0);
        }
        (p, rows)
    };
    let (full, rows) = run(3, None);
    let (half, first) = run(1, None);
    let (resumed, rest) = run(2, Some(half));
    assert_eq!(full, resumed);
    assert_eq!(rows[0], first[0]);
    assert_eq!(rows[1..], rest[..]);
    assert_eq!(full.env_steps, 3 * 32);
}
