//! The run harness: training and evaluation drivers, trajectory logs,
//! stats streams, and the oracle cross-check.

pub mod replay;
pub mod throughput;

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::acoustics::SoundBank;
use crate::agent::{
    execute_waypoint, select_waypoint, waypoint_mask, Policy, SelectMode,
};
use crate::checkpoint::{self, CheckpointError};
use crate::config::{ConfigError, RunConfig, TaskKind};
use crate::env::{EnvError, NavEnv};
use crate::metrics::{
    compute_report, replay_dsna_lock, replay_dspl_lock, EpisodeRecord, MetricsError,
    MetricsReport,
};
use crate::nn::Adam;
use crate::parallel::map_indexed_mut;
use crate::ppo::{collect_rollouts, update, EnvRunner, UpdateStats};
use crate::rng::{SeedTree, StreamTag};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {0} is not a valid episode record: {1}")]
    BadLogLine(usize, serde_json::Error),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
    #[error("empty trajectory log")]
    EmptyLog,
}

/// Stats CSV column layout, one row per update.
pub const STATS_HEADER: &str =
    "update,mean_return,success_rate,spl_or_dspl,loss_clip,loss_value,entropy,lr";

pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub stats_path: PathBuf,
    pub log_path: PathBuf,
    pub final_stats: Option<UpdateStats>,
    pub episodes_completed: usize,
    pub low_level_steps: u64,
}

/// Build the policy for a config, seeding initialization from the run
/// seed's dedicated stream.
pub fn build_policy(cfg: &RunConfig) -> Result<Policy, HarnessError> {
    let tree = SeedTree::new(cfg.seed);
    let profile = cfg.net_profile()?;
    let mut init_rng = tree.stream(StreamTag::PolicyInit, 0);
    let mut policy = Policy::init(profile, &mut init_rng);
    if cfg.aux_loss {
        let mut aux_rng = tree.stream(StreamTag::PolicyInit, 1);
        policy.aux_decoder = Some(policy.profile.build_aux_decoder(&mut aux_rng));
    }
    Ok(policy)
}

fn build_runners(cfg: &RunConfig, policy: &Policy) -> Result<Vec<EnvRunner>, HarnessError> {
    let tree = SeedTree::new(cfg.seed);
    let bank = Arc::new(SoundBank::new());
    let env_cfg = cfg.env_config()?;
    (0..cfg.num_envs)
        .map(|i| {
            let env = NavEnv::new(env_cfg.clone(), Arc::clone(&bank), tree, i as u64)?;
            Ok(EnvRunner::new(env, policy)?)
        })
        .collect()
}

/// Run PPO training per the config; writes the resolved config, a stats
/// CSV, the trajectory log of every completed training episode, and the
/// final checkpoint into `out_dir`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainArtifacts, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config_resolved.cfg"), cfg.to_flat_text())?;

    let mut policy = build_policy(cfg)?;
    let mut runners = build_runners(cfg, &policy)?;
    let ppo_cfg = cfg.ppo_config();
    let sizes: Vec<usize> = policy.named_params().iter().map(|(_, t)| t.len()).collect();
    let mut adam = Adam::new(&sizes, ppo_cfg.adam_eps);

    let stats_path = out_dir.join("stats.csv");
    let mut stats_file = std::io::BufWriter::new(std::fs::File::create(&stats_path)?);
    writeln!(stats_file, "{STATS_HEADER}")?;
    let log_path = out_dir.join("train_trajectories.jsonl");
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(&log_path)?);

    let mut window: VecDeque<EpisodeRecord> = VecDeque::new();
    let mut episodes = 0usize;
    let mut low_steps: u64 = 0;
    let mut final_stats = None;

    for update_idx in 0..cfg.num_updates {
        let (batch, records) =
            collect_rollouts(&mut runners, &policy, ppo_cfg.n_steps, cfg.parallel)?;
        low_steps += batch.low_level_steps;
        for rec in &records {
            serde_json::to_writer(&mut log_file, rec).map_err(std::io::Error::other)?;
            log_file.write_all(b"\n")?;
            episodes += 1;
            window.push_back(rec.clone());
            while window.len() > 50 {
                window.pop_front();
            }
        }
        let stats = update(&mut policy, &batch, &mut adam, update_idx, &ppo_cfg, cfg.parallel);
        write_stats_row(&mut stats_file, update_idx, &window, cfg.task, &stats)?;
        final_stats = Some(stats);
    }
    stats_file.flush()?;
    log_file.flush()?;

    let checkpoint_path = out_dir.join("checkpoint.bin");
    checkpoint::save_to_file(&policy, &checkpoint_path)?;
    Ok(TrainArtifacts {
        checkpoint_path,
        stats_path,
        log_path,
        final_stats,
        episodes_completed: episodes,
        low_level_steps: low_steps,
    })
}

fn write_stats_row(
    w: &mut impl Write,
    update_idx: u64,
    window: &VecDeque<EpisodeRecord>,
    task: TaskKind,
    stats: &UpdateStats,
) -> Result<(), HarnessError> {
    let (mean_return, success_rate, headline) = if window.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let records: Vec<EpisodeRecord> = window.iter().cloned().collect();
        let mean_return = records
            .iter()
            .map(|r| r.steps.iter().map(|s| s.reward).sum::<f64>())
            .sum::<f64>()
            / records.len() as f64;
        let report = compute_report(&records)?;
        let headline = match task {
            TaskKind::Static => report.spl,
            TaskKind::Dynamic => report.dspl,
        };
        (mean_return, report.sr, headline)
    };
    writeln!(
        w,
        "{update_idx},{mean_return:.6},{success_rate:.6},{headline:.6},{:.6},{:.6},{:.6},{:.8}",
        stats.loss_clip, stats.loss_value, stats.entropy, stats.lr
    )?;
    Ok(())
}

pub struct EvalArtifacts {
    pub report: MetricsReport,
    pub log_path: PathBuf,
    pub metrics_csv_path: PathBuf,
}

/// Evaluate a checkpoint: runs `eval_episodes` episodes with argmax action
/// selection, writes the trajectory log and the metrics report (CSV and
/// aligned table).
pub fn run_eval(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    out_dir: &Path,
) -> Result<EvalArtifacts, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut policy = build_policy(cfg)?;
    checkpoint::load_from_file(&mut policy, checkpoint_path)?;
    let records = eval_episodes(cfg, &policy)?;

    let log_path = out_dir.join("eval_trajectories.jsonl");
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    for rec in &records {
        serde_json::to_writer(&mut log_file, rec).map_err(std::io::Error::other)?;
        log_file.write_all(b"\n")?;
    }
    log_file.flush()?;

    let report = compute_report(&records)?;
    let metrics_csv_path = out_dir.join("metrics.csv");
    std::fs::write(
        &metrics_csv_path,
        format!("{}\n{}\n", MetricsReport::csv_header(), report.to_csv_row()),
    )?;
    std::fs::write(out_dir.join("metrics.txt"), format!("{}\n", report.to_table()))?;
    Ok(EvalArtifacts { report, log_path, metrics_csv_path })
}

/// Run evaluation episodes against an in-memory policy and return the
/// records (library entry point; the CLI wraps [`run_eval`]).
pub fn eval_episodes(
    cfg: &RunConfig,
    policy: &Policy,
) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let tree = SeedTree::new(cfg.seed);
    let bank = Arc::new(SoundBank::new());
    let per_lane = cfg.eval_episodes.div_ceil(cfg.num_envs);
    let k = policy.profile.action_k;
    let env_cfg = cfg.env_config()?;
    let mut lanes: Vec<NavEnv> = (0..cfg.num_envs)
        .map(|i| NavEnv::new(env_cfg.clone(), Arc::clone(&bank), tree, i as u64))
        .collect::<Result<_, _>>()?;

    let results = map_indexed_mut(cfg.parallel, &mut lanes, |_, env| -> Result<_, EnvError> {
        let mut recs = Vec::with_capacity(per_lane);
        for _ in 0..per_lane {
            let mut hidden = policy.zero_hidden();
            loop {
                let obs = env.observe()?;
                let out = policy.forward(&obs, &hidden).expect("policy shapes fixed");
                hidden = out.h_new;
                let mask = waypoint_mask(env, k);
                let (action, _) =
                    select_waypoint(&out.logits, &mask, env.sampling_rng(), SelectMode::Argmax)
                        .expect("stop always unmasked");
                let outcome = execute_waypoint(env, k, action)?;
                if outcome.done {
                    recs.push(env.take_record());
                    env.reset()?;
                    break;
                }
            }
        }
        Ok(recs)
    });

    let mut records = Vec::with_capacity(cfg.eval_episodes);
    for lane in results {
        records.extend(lane?);
    }
    records.truncate(cfg.eval_episodes);
    Ok(records)
}

/// Read a JSONL trajectory log.
pub fn read_log(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::BadLogLine(i + 1, e))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    Ok(records)
}

/// Cross-check a trajectory log against the brute-force implementations:
/// kinematic consistency of every record, stored tracker locks against
/// replayed locks, and per-episode metric terms within range.
pub fn oracle_check(records: &[EpisodeRecord]) -> Result<MetricsReport, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    for rec in records {
        rec.validate()?;
        let dspl = replay_dspl_lock(rec)?;
        if rec.dspl_locked.is_some() && rec.dspl_locked != dspl {
            return Err(HarnessError::OracleMismatch(format!(
                "episode {}: stored DSPL lock {:?} but replay gives {:?}",
                rec.episode_id, rec.dspl_locked, dspl
            )));
        }
        let dsna = replay_dsna_lock(rec)?;
        if rec.dsna_locked.is_some() && rec.dsna_locked != dsna {
            return Err(HarnessError::OracleMismatch(format!(
                "episode {}: stored DSNA lock {:?} but replay gives {:?}",
                rec.episode_id, rec.dsna_locked, dsna
            )));
        }
        for (name, term) in [
            ("spl", crate::metrics::spl_term(rec)?),
            ("sna", crate::metrics::sna_term(rec)?),
            ("dspl", crate::metrics::dspl_term(rec)?),
            ("dsna", crate::metrics::dsna_term(rec)?),
        ] {
            if !(0.0..=1.0).contains(&term) {
                return Err(HarnessError::OracleMismatch(format!(
                    "episode {}: {name} term {term} outside [0, 1]",
                    rec.episode_id
                )));
            }
            if !rec.success && term != 0.0 {
                return Err(HarnessError::OracleMismatch(format!(
                    "episode {}: failed episode has nonzero {name} term",
                    rec.episode_id
                )));
            }
        }
        if rec.dynamic {
            continue;
        }
        // Static reduction: the dynamic metrics collapse to the static ones.
        let spl = crate::metrics::spl_term(rec)?;
        let dspl = crate::metrics::dspl_term(rec)?;
        if (spl - dspl).abs() > 0.0 {
            return Err(HarnessError::OracleMismatch(format!(
                "episode {}: static episode has DSPL {dspl} != SPL {spl}",
                rec.episode_id
            )));
        }
        let sna = crate::metrics::sna_term(rec)?;
        let dsna = crate::metrics::dsna_term(rec)?;
        if (sna - dsna).abs() > 0.0 {
            return Err(HarnessError::OracleMismatch(format!(
                "episode {}: static episode has DSNA {dsna} != SNA {sna}",
                rec.episode_id
            )));
        }
    }
    Ok(compute_report(records)?)
}
