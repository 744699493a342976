use super::*;
use crate::acoustics::{SoundBank, SoundSplit};
use crate::agent::NetProfile;
use crate::env::{EnvConfig, MapSource};
use crate::grid::MapStyle;
use crate::rng::{derive_stream, SeedTree};
use crate::scenario::ScenarioConfig;
use rand::Rng;
use std::sync::Arc;

fn desk_policy(seed: u64) -> Policy {
    let profile = NetProfile::named("desk16k", (8, 8), 64, 10.0).unwrap();
    let mut rng = derive_stream(seed, 0);
    Policy::init(profile, &mut rng)
}

fn desk_env_cfg() -> EnvConfig {
    EnvConfig {
        map_source: MapSource::Generated {
            style: MapStyle::Open,
            width: 8,
            height: 8,
            resolution: 1.0,
        },
        scenario: ScenarioConfig::default().clean(),
        sample_rate: 16000,
        n_rays: 64,
        fov_degrees: 90.0,
        max_range: 10.0,
        max_episode_steps: 60,
        target_split: SoundSplit::Train,
        target_classes: Some(vec![0, 1]),
    }
}

fn make_runners(n: usize, seed: u64, policy: &Policy) -> Vec<EnvRunner> {
    let tree = SeedTree::new(seed);
    let bank = Arc::new(SoundBank::new());
    (0..n)
        .map(|i| {
            let env = NavEnv::new(desk_env_cfg(), Arc::clone(&bank), tree, i as u64).unwrap();
            EnvRunner::new(env, policy).unwrap()
        })
        .collect()
}

#[test]
fn gae_single_terminal_step() {
    // One step, V = 0, r = 1, done: advantage is exactly 1 pre-normalization.
    let policy = desk_policy(1);
    let mut runners = make_runners(1, 3, &policy);
    let (mut batch, _) = collect_rollouts(&mut runners, &policy, 1, false).unwrap();
    batch.slots[0].reward = 1.0;
    batch.slots[0].value_old = 0.0;
    batch.slots[0].done = true;
    let est = compute_gae(&batch, 0.99, 0.95);
    assert!((est.advantages[0] - 1.0).abs() < 1e-15);
    assert!((est.returns[0] - 1.0).abs() < 1e-15);
}

#[test]
fn gae_with_zero_tau_collapses_to_td_error() {
    let policy = desk_policy(2);
    let mut runners = make_runners(1, 5, &policy);
    let (mut batch, _) = collect_rollouts(&mut runners, &policy, 6, false).unwrap();
    let mut rng = derive_stream(11, 0);
    for s in &mut batch.slots {
        s.reward = rng.random_range(-1.0..1.0);
        s.value_old = rng.random_range(-1.0..1.0);
        s.done = rng.random_bool(0.2);
    }
    let gamma = 0.99;
    let est = compute_gae(&batch, gamma, 0.0);
    for t in 0..batch.n_steps {
        let slot = batch.slot(0, t);
        let not_done = if slot.done { 0.0 } else { 1.0 };
        let next_v = if t + 1 < batch.n_steps {
            batch.slot(0, t + 1).value_old
        } else {
            batch.bootstrap_value[0]
        };
        let delta = slot.reward + gamma * next_v * not_done - slot.value_old;
        assert!((est.advantages[t] - delta).abs() < 1e-15);
    }
}

#[test]
fn gae_matches_brute_force_discounted_sum() {
    // Random (reward, value, done) sequences; the recursion must equal the
    // definition sum  A_t = sum_k (gamma tau)^k delta_{t+k}  truncated at
    // episode ends.
    let policy = desk_policy(3);
    let mut runners = make_runners(2, 7, &policy);
    let (mut batch, _) = collect_rollouts(&mut runners, &policy, 20, false).unwrap();
    let mut rng = derive_stream(13, 0);
    for s in &mut batch.slots {
        s.reward = rng.random_range(-2.0..2.0);
        s.value_old = rng.random_range(-2.0..2.0);
        s.done = rng.random_bool(0.15);
    }
    batch.bootstrap_value = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    let (gamma, tau) = (0.99, 0.95);
    let est = compute_gae(&batch, gamma, tau);

    for env in 0..batch.n_envs {
        for t in 0..batch.n_steps {
            let mut expected = 0.0;
            let mut weight = 1.0;
            for k in t..batch.n_steps {
                let slot = batch.slot(env, k);
                let not_done = if slot.done { 0.0 } else { 1.0 };
                let next_v = if k + 1 < batch.n_steps {
                    batch.slot(env, k + 1).value_old
                } else {
                    batch.bootstrap_value[env]
                };
                let delta = slot.reward + gamma * next_v * not_done - slot.value_old;
                expected += weight * delta;
                if slot.done {
                    break;
                }
                weight *= gamma * tau;
            }
            let got = est.advantages[env * batch.n_steps + t];
            assert!(
                (got - expected).abs() < 1e-10,
                "env {env} t {t}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn clipped_surrogate_arithmetic() {
    // r = 1.5, eps = 0.2, A = 1: min(1.5, 1.2) = 1.2.
    assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
    // r = 0.5, A = -1: min(-0.5, -0.8) = -0.8.
    assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    // r = 1: the surrogate is the advantage no matter the clip.
    for eps in [0.05, 0.1, 0.2] {
        assert_eq!(clipped_surrogate(1.0, 0.7, eps), 0.7);
        assert_eq!(clipped_surrogate(1.0, -0.3, eps), -0.3);
    }
    // Inside the trust region the clip is the identity.
    assert_eq!(clipped_surrogate(1.05, 2.0, 0.1), 2.1);
}

#[test]
fn aux_loss_oracle() {
    let a = Tensor::from_vec(&[2, 3, 2], vec![1.0; 12]);
    assert_eq!(aux_reconstruction_loss(&a, &a), 0.0);

    let mut b = a.clone();
    for v in b.data_mut() {
        *v += 0.5;
    }
    assert!((aux_reconstruction_loss(&b, &a) - 0.25).abs() < 1e-15);

    let mut rng = derive_stream(17, 0);
    let x = Tensor::from_vec(&[2, 4, 3], (0..24).map(|_| rng.random_range(-1.0..1.0)).collect());
    let y = Tensor::from_vec(&[2, 4, 3], (0..24).map(|_| rng.random_range(-1.0..1.0)).collect());
    let direct: f64 =
        x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 24.0;
    assert!((aux_reconstruction_loss(&x, &y) - direct).abs() < 1e-15);
}

#[test]
fn lr_and_clip_decay_linearly_to_zero() {
    let cfg = PpoConfig { num_updates: 100, ..PpoConfig::default() };
    assert_eq!(cfg.lr_at(0), cfg.lr);
    assert!((cfg.lr_at(50) - cfg.lr * 0.5).abs() < 1e-15);
    assert!(cfg.lr_at(100) < 1e-12);
    assert!(cfg.clip_at(100) < 1e-12);
    let flat = PpoConfig { linear_lr_decay: false, ..cfg };
    assert_eq!(flat.lr_at(99), flat.lr);
}

#[test]
fn zero_advantage_matching_values_no_entropy_leaves_params_unchanged() {
    let mut policy = desk_policy(4);
    let mut runners = make_runners(1, 9, &policy);
    let (mut batch, _) = collect_rollouts(&mut runners, &policy, 3, false).unwrap();
    for s in &mut batch.slots {
        s.reward = 0.0;
        s.value_old = 0.0;
        s.done = false;
    }
    batch.bootstrap_value = vec![0.0];
    // Rewards 0, values 0 -> advantages 0, returns 0. The value head must
    // also produce 0 error: overwrite critic weights/bias with zeros so
    // value_new == 0 == returns.
    policy.critic.weight.fill(0.0);
    policy.critic.bias.fill(0.0);
    let before: Vec<f64> = policy
        .named_params()
        .iter()
        .flat_map(|(_, t)| t.data().to_vec())
        .collect();
    let cfg = PpoConfig { entropy_coef: 0.0, epochs: 2, ..PpoConfig::default() };
    let mut adam = Adam::new(
        &policy.named_params().iter().map(|(_, t)| t.len()).collect::<Vec<_>>(),
        cfg.adam_eps,
    );
    update(&mut policy, &batch, &mut adam, 0, &cfg, false);
    let after: Vec<f64> = policy
        .named_params()
        .iter()
        .flat_map(|(_, t)| t.data().to_vec())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn update_increases_probability_of_rewarded_action() {
    let mut policy = desk_policy(5);
    let mut runners = make_runners(1, 21, &policy);
    let (mut batch, _) = collect_rollouts(&mut runners, &policy, 2, false).unwrap();
    // Bandit shape: both steps are single-step episodes from zero hidden.
    // Give the first slot's action a positive advantage and make sure the
    // second slot took a different action.
    batch.slots[0].reward = 1.0;
    batch.slots[0].done = true;
    batch.slots[1].reward = -1.0;
    batch.slots[1].done = true;
    for s in &mut batch.slots {
        s.value_old = 0.0;
    }
    batch.h0 = vec![policy.zero_hidden()];
    if batch.slots[0].action == batch.slots[1].action {
        // Force distinct actions for a clean comparison.
        let alt = (0..9)
            .find(|&i| i != batch.slots[0].action && batch.slots[1].mask[i])
            .unwrap();
        batch.slots[1].action = alt;
        batch.slots[1].log_prob_old = -1.0;
    }

    let obs0 = batch.slots[0].obs.clone();
    let mask0 = batch.slots[0].mask.clone();
    let rewarded = batch.slots[0].action;
    let h = policy.zero_hidden();
    let before = {
        let out = policy.forward(&obs0, &h).unwrap();
        masked_categorical(&out.logits, &mask0).unwrap().probs()[rewarded]
    };
    let cfg = PpoConfig { epochs: 1, entropy_coef: 0.0, lr: 1e-3, ..PpoConfig::default() };
    let mut adam = Adam::new(
        &policy.named_params().iter().map(|(_, t)| t.len()).collect::<Vec<_>>(),
        cfg.adam_eps,
    );
    update(&mut policy, &batch, &mut adam, 0, &cfg, false);
    let after = {
        let out = policy.forward(&obs0, &h).unwrap();
        masked_categorical(&out.logits, &mask0).unwrap().probs()[rewarded]
    };
    assert!(
        after > before,
        "probability of the rewarded action must rise: {before} -> {after}"
    );
}

#[test]
fn collect_single_step_single_env() {
    let policy = desk_policy(6);
    let mut runners = make_runners(1, 31, &policy);
    let (batch, _) = collect_rollouts(&mut runners, &policy, 1, false).unwrap();
    assert_eq!(batch.slots.len(), 1);
    assert_eq!(batch.n_envs, 1);
    assert_eq!(batch.n_steps, 1);
    assert!(batch.slots[0].mask[4], "stop always valid");
}

#[test]
fn collect_is_deterministic_and_parallel_agnostic() {
    let run = |parallel: bool| {
        let policy = desk_policy(7);
        let mut runners = make_runners(3, 41, &policy);
        let (batch, records) = collect_rollouts(&mut runners, &policy, 12, parallel).unwrap();
        let fingerprint: Vec<(usize, u64, u64, bool)> = batch
            .slots
            .iter()
            .map(|s| (s.action, s.reward.to_bits(), s.log_prob_old.to_bits(), s.done))
            .collect();
        (fingerprint, records.len(), batch.bootstrap_value)
    };
    let a = run(false);
    let b = run(false);
    assert_eq!(a, b, "sequential runs must be bit-identical");
    let c = run(true);
    assert_eq!(a.0, c.0, "parallel collection must match sequential");
    assert_eq!(a.1, c.1);
    for (x, y) in a.2.iter().zip(&c.2) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn slot_rewards_match_completed_episode_records() {
    let policy = desk_policy(8);
    let mut runners = make_runners(1, 51, &policy);
    let (batch, records) = collect_rollouts(&mut runners, &policy, 40, false).unwrap();
    assert!(!records.is_empty(), "40 waypoint steps with 60-step timeout must finish episodes");
    // Episode boundaries in env 0's slot sequence are the done flags.
    let mut slot_sums = Vec::new();
    let mut acc = 0.0;
    for s in &batch.slots {
        acc += s.reward;
        if s.done {
            slot_sums.push(acc);
            acc = 0.0;
        }
    }
    for (rec, slot_sum) in records.iter().zip(&slot_sums) {
        let rec_sum: f64 = rec.steps.iter().map(|st| st.reward).sum();
        assert!(
            (rec_sum - slot_sum).abs() < 1e-12,
            "episode {} reward mismatch: {rec_sum} vs {slot_sum}",
            rec.episode_id
        );
        rec.validate().unwrap();
    }
}

#[test]
fn full_objective_gradient_matches_finite_differences_on_sampled_entries() {
    let mut policy = desk_policy(9);
    let mut runners = make_runners(1, 61, &policy);
    let (mut batch, _) = collect_rollouts(&mut runners, &policy, 2, false).unwrap();
    let mut rng = derive_stream(23, 0);
    for s in &mut batch.slots {
        s.reward = rng.random_range(-1.0..1.0);
    }
    let cfg = PpoConfig::default();
    let est = compute_gae(&batch, cfg.gamma, cfg.tau);
    let mut advantages = est.advantages.clone();
    normalize_advantages(&mut advantages);
    let clip = cfg.clip;

    // Analytic gradient via the update machinery.
    let n_slots = batch.slots.len() as f64;
    let (grads, _) =
        env_sequence_grads(&policy, &batch, 0, &advantages, &est.returns, clip, &cfg, n_slots);

    // Sample a few entries per tensor and compare against central
    // differences of the scalar batch loss.
    let names: Vec<String> =
        policy.named_params().iter().map(|(n, _)| n.clone()).collect();
    for (pi, name) in names.iter().enumerate() {
        let len = policy.named_params()[pi].1.len();
        for probe in 0..3.min(len) {
            let idx = (probe * 7919 + 13) % len;
            let step = 1e-5;
            let orig = policy.named_params()[pi].1.data()[idx];
            policy.named_params_mut()[pi].1.data_mut()[idx] = orig + step;
            let plus = batch_loss(&policy, &batch, &advantages, &est.returns, clip, &cfg);
            policy.named_params_mut()[pi].1.data_mut()[idx] = orig - step;
            let minus = batch_loss(&policy, &batch, &advantages, &est.returns, clip, &cfg);
            policy.named_params_mut()[pi].1.data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grads.named_params()[pi].1.data()[idx];
            let err = (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs());
            assert!(
                err < 1e-4,
                "{name}[{idx}]: analytic {analytic} vs numeric {numeric} (rel {err:.2e})"
            );
        }
    }
}
