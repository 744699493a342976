//! Environment stepping throughput: env-only versus env+policy rates.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::acoustics::SoundBank;
use crate::agent::{execute_waypoint, select_waypoint, waypoint_mask, SelectMode};
use crate::config::RunConfig;
use crate::env::NavEnv;
use crate::nn::masked_categorical;
use crate::parallel::map_indexed_mut;
use crate::rng::SeedTree;

use super::{build_policy, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputReport {
    pub num_envs: usize,
    pub env_only_steps: u64,
    pub env_only_seconds: f64,
    pub env_policy_steps: u64,
    pub env_policy_seconds: f64,
}

impl ThroughputReport {
    pub fn env_only_rate(&self) -> f64 {
        self.env_only_steps as f64 / self.env_only_seconds
    }

    pub fn env_policy_rate(&self) -> f64 {
        self.env_policy_steps as f64 / self.env_policy_seconds
    }

    pub fn to_csv(&self) -> String {
        format!(
            "mode,num_envs,low_level_steps,seconds,steps_per_sec\n\
             env_only,{n},{},{:.6},{:.1}\n\
             env_policy,{n},{},{:.6},{:.1}\n",
            self.env_only_steps,
            self.env_only_seconds,
            self.env_only_rate(),
            self.env_policy_steps,
            self.env_policy_seconds,
            self.env_policy_rate(),
            n = self.num_envs,
        )
    }
}

/// Measure low-level environment steps per second, with and without the
/// policy in the loop, after a short warmup. Waypoints are drawn uniformly
/// from the valid mask in env-only mode and from the policy otherwise.
pub fn throughput_bench(
    cfg: &RunConfig,
    duration: Duration,
) -> Result<ThroughputReport, HarnessError> {
    if duration.is_zero() {
        return Err(HarnessError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "bench duration must be positive",
        )));
    }
    cfg.validate()?;
    let policy = build_policy(cfg)?;
    let k = policy.profile.action_k;
    let tree = SeedTree::new(cfg.seed);
    let bank = Arc::new(SoundBank::new());
    let env_cfg = cfg.env_config()?;
    let mut envs: Vec<NavEnv> = (0..cfg.num_envs)
        .map(|i| NavEnv::new(env_cfg.clone(), Arc::clone(&bank), tree, i as u64))
        .collect::<Result<_, _>>()?;

    let warmup = Duration::from_millis(100);
    let run = |envs: &mut [NavEnv], with_policy: bool, t: Duration| -> u64 {
        let deadline = Instant::now() + t;
        let mut total = 0u64;
        while Instant::now() < deadline {
            let counts = map_indexed_mut(cfg.parallel, envs, |_, env| {
                let mut steps = 0u64;
                for _ in 0..8 {
                    let mask = waypoint_mask(env, k);
                    let action = if with_policy {
                        let obs = env.observe().expect("observe");
                        let hidden = policy.zero_hidden();
                        let out = policy.forward(&obs, &hidden).expect("forward");
                        select_waypoint(&out.logits, &mask, env.sampling_rng(), SelectMode::Sample)
                            .expect("stop valid")
                            .0
                    } else {
                        let _ = env.observe().expect("observe");
                        let dist = masked_categorical(&vec![0.0; k * k], &mask).expect("stop");
                        dist.sample(env.sampling_rng())
                    };
                    let outcome = execute_waypoint(env, k, action).expect("execute");
                    steps += outcome.sub_steps as u64;
                    if outcome.done {
                        env.reset().expect("reset");
                    }
                }
                steps
            });
            total += counts.iter().sum::<u64>();
        }
        total
    };

    run(&mut envs, false, warmup);
    let t0 = Instant::now();
    let env_only_steps = run(&mut envs, false, duration);
    let env_only_seconds = t0.elapsed().as_secs_f64();

    run(&mut envs, true, warmup);
    let t1 = Instant::now();
    let env_policy_steps = run(&mut envs, true, duration);
    let env_policy_seconds = t1.elapsed().as_secs_f64();

    Ok(ThroughputReport {
        num_envs: cfg.num_envs,
        env_only_steps,
        env_only_seconds,
        env_policy_steps,
        env_policy_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_duration_is_an_error() {
        let cfg = RunConfig::default();
        assert!(throughput_bench(&cfg, Duration::ZERO).is_err());
    }

    #[test]
    fn env_only_is_at_least_as_fast_as_env_policy() {
        let cfg = RunConfig {
            num_envs: 2,
            target_classes: Some(vec![0]),
            ..RunConfig::default()
        };
        let report = throughput_bench(&cfg, Duration::from_millis(300)).unwrap();
        assert!(report.env_only_steps > 0);
        assert!(report.env_policy_steps > 0);
        assert!(
            report.env_only_rate() >= report.env_policy_rate() * 0.9,
            "env-only {:.0}/s should not be slower than env+policy {:.0}/s",
            report.env_only_rate(),
            report.env_policy_rate()
        );
        let csv = report.to_csv();
        assert!(csv.starts_with("mode,num_envs"));
    }
}
