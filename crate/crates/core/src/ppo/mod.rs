//! Rollout collection, generalized advantage estimation, the clipped
//! surrogate objective with value and entropy terms, the optional
//! spectrogram-reconstruction auxiliary loss, and the update loop with
//! full-sequence GRU re-unrolling.

use serde::{Deserialize, Serialize};

use crate::agent::{
    execute_waypoint, select_waypoint, waypoint_mask, Observation, Policy, PolicyCache,
    SelectMode,
};
use crate::env::{EnvError, NavEnv};
use crate::metrics::EpisodeRecord;
use crate::nn::{clip_global_norm, masked_categorical, Adam, Tensor};
use crate::parallel::{map_indexed_mut, map_range};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub lr: f64,
    pub adam_eps: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub tau: f64,
    pub max_grad_norm: f64,
    pub n_steps: usize,
    pub num_updates: u64,
    pub linear_lr_decay: bool,
    pub linear_clip_decay: bool,
    pub aux_loss: bool,
    pub aux_weight: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr: 2.5e-4,
            adam_eps: 1e-5,
            clip: 0.1,
            epochs: 4,
            minibatches: 1,
            value_coef: 0.5,
            entropy_coef: 0.02,
            gamma: 0.99,
            tau: 0.95,
            max_grad_norm: 0.5,
            n_steps: 150,
            num_updates: 100,
            linear_lr_decay: true,
            linear_clip_decay: true,
            aux_loss: false,
            aux_weight: 0.01,
        }
    }
}

impl PpoConfig {
    /// Linearly decayed learning rate for a given update index.
    pub fn lr_at(&self, update: u64) -> f64 {
        if self.linear_lr_decay {
            self.lr * decay_factor(update, self.num_updates)
        } else {
            self.lr
        }
    }

    pub fn clip_at(&self, update: u64) -> f64 {
        if self.linear_clip_decay {
            self.clip * decay_factor(update, self.num_updates)
        } else {
            self.clip
        }
    }
}

fn decay_factor(update: u64, total: u64) -> f64 {
    if total == 0 {
        return 1.0;
    }
    1.0 - update.min(total) as f64 / total as f64
}

/// One stored waypoint transition.
#[derive(Debug, Clone)]
pub struct Slot {
    pub obs: Observation,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob_old: f64,
    pub value_old: f64,
    pub reward: f64,
    pub done: bool,
}

/// Transitions for `n_envs * n_steps` slots, env-major, plus what the GRU
/// re-unroll needs: the pre-rollout hidden state per environment and the
/// bootstrap value of the state after the last step.
pub struct RolloutBatch {
    pub n_envs: usize,
    pub n_steps: usize,
    pub slots: Vec<Slot>,
    pub h0: Vec<Vec<f64>>,
    pub bootstrap_value: Vec<f64>,
    /// Total low-level actions executed while collecting.
    pub low_level_steps: u64,
}

impl RolloutBatch {
    pub fn slot(&self, env: usize, t: usize) -> &Slot {
        &self.slots[env * self.n_steps + t]
    }
}

/// One environment lane with its recurrent state and pending observation.
pub struct EnvRunner {
    pub env: NavEnv,
    hidden: Vec<f64>,
    obs: Observation,
}

impl EnvRunner {
    pub fn new(mut env: NavEnv, policy: &Policy) -> Result<Self, EnvError> {
        let obs = env.observe()?;
        Ok(EnvRunner { env, hidden: policy.zero_hidden(), obs })
    }
}

/// Step every environment `n_steps` waypoint transitions under the shared
/// read-only policy. Each lane owns disjoint rng streams, so parallel and
/// sequential execution produce the same batch; completed episodes come
/// back in environment-index order.
pub fn collect_rollouts(
    runners: &mut [EnvRunner],
    policy: &Policy,
    n_steps: usize,
    parallel: bool,
) -> Result<(RolloutBatch, Vec<EpisodeRecord>), EnvError> {
    let k = policy.profile.action_k;
    let per_env = map_indexed_mut(parallel, runners, |_, runner| -> Result<_, EnvError> {
        let mut slots = Vec::with_capacity(n_steps);
        let mut records = Vec::new();
        let mut low_steps = 0u64;
        let h0 = runner.hidden.clone();
        for _ in 0..n_steps {
            let out = policy.forward(&runner.obs, &runner.hidden).expect("policy shapes fixed");
            let mask = waypoint_mask(&runner.env, k);
            let (action, log_prob) =
                select_waypoint(&out.logits, &mask, runner.env.sampling_rng(), SelectMode::Sample)
                    .expect("stop always unmasked");
            let outcome = execute_waypoint(&mut runner.env, k, action)?;
            low_steps += outcome.sub_steps as u64;
            slots.push(Slot {
                obs: std::mem::replace(&mut runner.obs, Observation::placeholder()),
                mask,
                action,
                log_prob_old: log_prob,
                value_old: out.value,
                reward: outcome.reward,
                done: outcome.done,
            });
            if outcome.done {
                records.push(runner.env.take_record());
                runner.env.reset()?;
                runner.hidden = policy.zero_hidden();
            } else {
                runner.hidden = out.h_new;
            }
            runner.obs = runner.env.observe()?;
        }
        let bootstrap = if slots.last().map(|s| s.done).unwrap_or(true) {
            0.0
        } else {
            policy.forward(&runner.obs, &runner.hidden).expect("policy shapes fixed").value
        };
        Ok((slots, records, h0, bootstrap, low_steps))
    });

    let mut batch = RolloutBatch {
        n_envs: per_env.len(),
        n_steps,
        slots: Vec::with_capacity(per_env.len() * n_steps),
        h0: Vec::with_capacity(per_env.len()),
        bootstrap_value: Vec::with_capacity(per_env.len()),
        low_level_steps: 0,
    };
    let mut records = Vec::new();
    for r in per_env {
        let (slots, recs, h0, bootstrap, low_steps) = r?;
        batch.slots.extend(slots);
        batch.h0.push(h0);
        batch.bootstrap_value.push(bootstrap);
        batch.low_level_steps += low_steps;
        records.extend(recs);
    }
    Ok((batch, records))
}

/// Advantages and returns per slot (env-major, aligned with the batch).
/// Advantages are raw (un-normalized); `returns = advantages + value_old`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimate {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Recursive GAE: `delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t`,
/// `A_t = delta_t + gamma tau (1 - done_t) A_{t+1}`.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, tau: f64) -> AdvantageEstimate {
    let n = batch.slots.len();
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    for env in 0..batch.n_envs {
        let mut acc = 0.0;
        for t in (0..batch.n_steps).rev() {
            let i = env * batch.n_steps + t;
            let slot = &batch.slots[i];
            let not_done = if slot.done { 0.0 } else { 1.0 };
            let next_value = if t + 1 < batch.n_steps {
                batch.slots[i + 1].value_old
            } else {
                batch.bootstrap_value[env]
            };
            let delta = slot.reward + gamma * next_value * not_done - slot.value_old;
            acc = delta + gamma * tau * not_done * acc;
            advantages[i] = acc;
            returns[i] = acc + slot.value_old;
        }
    }
    AdvantageEstimate { advantages, returns }
}

/// Normalize to zero mean, unit variance (guarded for tiny batches).
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// The clipped surrogate for one slot (to be maximized):
/// `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    unclipped.min(clipped)
}

/// Mean squared error over all cells between a decoded spectrogram and the
/// observed one.
pub fn aux_reconstruction_loss(decoded: &Tensor, target: &Tensor) -> f64 {
    debug_assert_eq!(decoded.shape(), target.shape());
    let n = decoded.len() as f64;
    decoded
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Loss components averaged over the batch, plus bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss_clip: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub loss_aux: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub clip: f64,
}

/// One PPO update: `epochs` passes, each re-unrolling the GRU over every
/// stored sequence, single minibatch covering the whole batch, global-norm
/// clipping, Adam step, linear lr and clip decay.
pub fn update(
    policy: &mut Policy,
    batch: &RolloutBatch,
    adam: &mut Adam,
    update_idx: u64,
    cfg: &PpoConfig,
    parallel: bool,
) -> UpdateStats {
    let est = compute_gae(batch, cfg.gamma, cfg.tau);
    let mut advantages = est.advantages.clone();
    normalize_advantages(&mut advantages);
    let returns = &est.returns;

    let lr = cfg.lr_at(update_idx);
    let clip = cfg.clip_at(update_idx);
    let n_slots = batch.slots.len() as f64;

    let mut stats = UpdateStats {
        loss_clip: 0.0,
        loss_value: 0.0,
        entropy: 0.0,
        loss_aux: 0.0,
        grad_norm: 0.0,
        lr,
        clip,
    };

    for epoch in 0..cfg.epochs {
        // Per-environment gradient passes are independent given the
        // parameter snapshot; merge in env order for determinism.
        let shared: &Policy = policy;
        let results = map_range(parallel, batch.n_envs, |env| {
            env_sequence_grads(shared, batch, env, &advantages, returns, clip, cfg, n_slots)
        });

        let mut grads = policy.zeros_like();
        let mut epoch_stats = (0.0, 0.0, 0.0, 0.0);
        for (g, s) in results {
            grads.accumulate(&g, 1.0);
            epoch_stats.0 += s.0;
            epoch_stats.1 += s.1;
            epoch_stats.2 += s.2;
            epoch_stats.3 += s.3;
        }
        if epoch == 0 {
            stats.loss_clip = epoch_stats.0 / n_slots;
            stats.loss_value = epoch_stats.1 / n_slots;
            stats.entropy = epoch_stats.2 / n_slots;
            stats.loss_aux = epoch_stats.3 / n_slots;
        }

        let mut grad_entries = grads.named_params_mut();
        let mut grad_slices: Vec<&mut [f64]> =
            grad_entries.iter_mut().map(|(_, t)| t.data_mut()).collect();
        let norm = clip_global_norm(&mut grad_slices, cfg.max_grad_norm);
        if epoch == 0 {
            stats.grad_norm = norm;
        }
        drop(grad_slices);
        drop(grad_entries);

        adam.begin_step();
        let mut params = policy.named_params_mut();
        let grads_ro = grads.named_params();
        for (i, ((_, p), (_, g))) in params.iter_mut().zip(grads_ro.iter()).enumerate() {
            adam.update(i, lr, p.data_mut(), g.data());
        }
    }
    stats
}

/// Forward + backward over one environment's stored sequence. Returns the
/// gradient accumulator and `(sum_clip, sum_value, sum_entropy, sum_aux)`
/// un-normalized loss contributions. Public so the gradient-check suites
/// can compare it against finite differences of [`batch_loss`].
#[allow(clippy::too_many_arguments)]
pub fn env_sequence_grads(
    policy: &Policy,
    batch: &RolloutBatch,
    env: usize,
    advantages: &[f64],
    returns: &[f64],
    clip: f64,
    cfg: &PpoConfig,
    n_slots: f64,
) -> (Policy, (f64, f64, f64, f64)) {
    let mut grads = policy.zeros_like();
    let t_len = batch.n_steps;

    // Forward sweep: cache every step.
    let mut h = batch.h0[env].clone();
    let mut h_prevs: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut caches: Vec<PolicyCache> = Vec::with_capacity(t_len);
    let mut logits_seq: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut values: Vec<f64> = Vec::with_capacity(t_len);
    let mut aux: Vec<Option<(Tensor, crate::agent::DecoderCache)>> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let slot = batch.slot(env, t);
        let (out, cache) = policy.forward_cached(&slot.obs, &h).expect("shapes fixed");
        h_prevs.push(h.clone());
        h = if slot.done { policy.zero_hidden() } else { out.h_new.clone() };
        if cfg.aux_loss {
            if let Some(dec) = &policy.aux_decoder {
                let (decoded, dcache) =
                    dec.forward(&cache.audio_embed).expect("decoder shapes fixed");
                aux.push(Some((decoded, dcache)));
            } else {
                aux.push(None);
            }
        } else {
            aux.push(None);
        }
        logits_seq.push(out.logits);
        values.push(out.value);
        caches.push(cache);
    }

    // Backward sweep.
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    let mut grad_h_future = vec![0.0; policy.profile.hidden];
    for t in (0..t_len).rev() {
        let i = env * t_len + t;
        let slot = batch.slot(env, t);
        let dist = masked_categorical(&logits_seq[t], &slot.mask).expect("mask has stop");
        let log_prob_new = dist.log_prob(slot.action);
        let ratio = (log_prob_new - slot.log_prob_old).exp();
        let adv = advantages[i];

        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
        sums.0 += -unclipped.min(clipped);
        // d(-min)/d(log_prob_new): -A r on the unclipped branch, 0 when the
        // clipped branch is active.
        let d_logp = if unclipped <= clipped { -adv * ratio / n_slots } else { 0.0 };

        let entropy = dist.entropy();
        sums.2 += entropy;

        let glp = dist.grad_log_prob(slot.action);
        let ge = dist.grad_entropy();
        let grad_logits: Vec<f64> = glp
            .iter()
            .zip(&ge)
            .map(|(&a, &b)| d_logp * a - cfg.entropy_coef * b / n_slots)
            .collect();

        let verr = values[t] - returns[i];
        sums.1 += verr * verr;
        let grad_value = cfg.value_coef * 2.0 * verr / n_slots;

        let aux_grad: Option<Vec<f64>> = aux[t].as_ref().map(|(decoded, dcache)| {
            let target = slot_audio_planes(slot);
            let loss = aux_reconstruction_loss(decoded, &target);
            sums.3 += loss;
            let scale = cfg.aux_weight * 2.0 / (decoded.len() as f64 * n_slots);
            let mut d = decoded.clone();
            for (dv, (a, b)) in
                d.data_mut().iter_mut().zip(decoded.data().iter().zip(target.data()))
            {
                *dv = scale * (a - b);
            }
            policy
                .aux_decoder
                .as_ref()
                .expect("aux entries only with a decoder")
                .backward(&d, dcache, grads.aux_decoder.as_mut().expect("grads mirror params"))
                .expect("decoder shapes fixed")
        });

        let grad_h_in = if slot.done { vec![0.0; grad_h_future.len()] } else { grad_h_future };
        let grad_h_prev = policy
            .backward(
                &caches[t],
                &h_prevs[t],
                &grad_logits,
                grad_value,
                &grad_h_in,
                aux_grad.as_deref(),
                &mut grads,
            )
            .expect("shapes fixed");
        grad_h_future = grad_h_prev;
    }
    (grads, sums)
}

fn slot_audio_planes(slot: &Slot) -> Tensor {
    let (f, t, _) = slot.obs.spectrogram.shape();
    Tensor::from_vec(&[2, f, t], slot.obs.spectrogram.as_planes())
}

/// Evaluate the full objective (clip + value - entropy + aux) on a batch
/// at fixed advantages/returns, forward passes only. This is the scalar
/// the gradient passes differentiate; the finite-difference checks drive
/// it directly.
pub fn batch_loss(
    policy: &Policy,
    batch: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    clip: f64,
    cfg: &PpoConfig,
) -> f64 {
    let n_slots = batch.slots.len() as f64;
    let mut total = 0.0;
    for env in 0..batch.n_envs {
        let mut h = batch.h0[env].clone();
        for t in 0..batch.n_steps {
            let i = env * batch.n_steps + t;
            let slot = batch.slot(env, t);
            let (out, cache) = policy.forward_cached(&slot.obs, &h).expect("shapes fixed");
            h = if slot.done { policy.zero_hidden() } else { out.h_new.clone() };
            let dist = masked_categorical(&out.logits, &slot.mask).expect("mask has stop");
            let log_prob_new = dist.log_prob(slot.action);
            let ratio = (log_prob_new - slot.log_prob_old).exp();
            total += -clipped_surrogate(ratio, advantages[i], clip) / n_slots;
            let verr = out.value - returns[i];
            total += cfg.value_coef * verr * verr / n_slots;
            total += -cfg.entropy_coef * dist.entropy() / n_slots;
            if cfg.aux_loss {
                if let Some(dec) = &policy.aux_decoder {
                    let (decoded, _) =
                        dec.forward(&cache.audio_embed).expect("decoder shapes fixed");
                    total += cfg.aux_weight
                        * aux_reconstruction_loss(&decoded, &slot_audio_planes(slot))
                        / n_slots;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests;
