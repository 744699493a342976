//! Run configuration: every knob of the benchmark in one validated struct.
//!
//! Configs load from a flat `key = value` text file (`#` comments) or from
//! JSON; unknown keys are rejected and every field is range-checked. The
//! fully resolved config echoes back out as text, and re-running that echo
//! reproduces the run.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::{SoundSplit, NUM_CLASSES, TRAIN_CLASSES};
use crate::agent::{NetProfile, ProfileError};
use crate::env::{EnvConfig, MapSource};
use crate::grid::{GridMap, MapStyle};
use crate::ppo::PpoConfig;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("malformed line {0}: expected `key = value`")]
    MalformedLine(usize),
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("map file error: {0}")]
    Map(#[from] crate::grid::GridError),
    #[error("continuous_actions training is not wired into the waypoint agent; \
             the discretizer is available as a library component only")]
    ContinuousUnsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    Clean,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoundSetting {
    Heard,
    Unheard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskKind,
    pub scenario: ScenarioMode,
    pub sounds: SoundSetting,
    pub num_envs: usize,
    pub parallel: bool,

    // Map.
    pub map_file: Option<String>,
    pub map_style: String,
    pub map_width: usize,
    pub map_height: usize,
    pub resolution: f64,

    // Agent profile.
    pub profile: String,
    pub hidden_size: Option<usize>,
    pub action_map_size: usize,
    pub n_rays: usize,
    pub fov_degrees: f64,
    pub max_range: f64,
    pub continuous_actions: bool,

    // Scenario knobs.
    pub second_source_prob: f64,
    pub distractor_prob: f64,
    pub distractor_step_prob: f64,
    pub augment_prob: f64,
    pub move_probability: f64,
    pub dynamic_target_prob: Option<f64>,
    pub freq_mask_param: usize,
    pub time_mask_param: Option<usize>,

    // Episode.
    pub max_episode_steps: usize,
    pub target_classes: Option<Vec<usize>>,

    // PPO (thesis hyperparameter table defaults).
    pub lr: f64,
    pub adam_eps: f64,
    pub clip_param: f64,
    pub ppo_epochs: usize,
    pub num_mini_batch: usize,
    pub value_loss_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub tau: f64,
    pub max_grad_norm: f64,
    pub num_steps: usize,
    pub num_updates: u64,
    pub use_gae: bool,
    pub linear_lr_decay: bool,
    pub linear_clip_decay: bool,
    pub aux_loss: bool,
    pub aux_weight: f64,

    // Evaluation.
    pub eval_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            task: TaskKind::Static,
            scenario: ScenarioMode::Clean,
            sounds: SoundSetting::Heard,
            num_envs: 5,
            parallel: true,
            map_file: None,
            map_style: "open".into(),
            map_width: 8,
            map_height: 8,
            resolution: 1.0,
            profile: "desk16k".into(),
            hidden_size: None,
            action_map_size: 3,
            n_rays: 64,
            fov_degrees: 90.0,
            max_range: 10.0,
            continuous_actions: false,
            second_source_prob: 0.5,
            distractor_prob: 0.5,
            distractor_step_prob: 0.5,
            augment_prob: 0.5,
            move_probability: 0.3,
            dynamic_target_prob: None,
            freq_mask_param: 12,
            time_mask_param: None,
            max_episode_steps: 500,
            target_classes: None,
            lr: 2.5e-4,
            adam_eps: 1e-5,
            clip_param: 0.1,
            ppo_epochs: 4,
            num_mini_batch: 1,
            value_loss_coef: 0.5,
            entropy_coef: 0.02,
            gamma: 0.99,
            tau: 0.95,
            max_grad_norm: 0.5,
            num_steps: 150,
            num_updates: 200,
            use_gae: true,
            linear_lr_decay: true,
            linear_clip_decay: true,
            aux_loss: false,
            aux_weight: 0.01,
            eval_episodes: 100,
        }
    }
}

impl RunConfig {
    /// Parse a config file: JSON when it starts with `{`, otherwise the
    /// flat `key = value` grammar.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            Self::parse_flat(text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn parse_flat(text: &str) -> Result<RunConfig, ConfigError> {
        let mut map: BTreeMap<String, serde_json::Value> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::MalformedLine(lineno + 1));
            };
            let key = key.trim().to_string();
            let value = value.trim();
            map.insert(key, flat_value_to_json(value));
        }
        let json = serde_json::Value::Object(map.into_iter().collect());
        serde_json::from_value(json).map_err(|e| {
            let msg = e.to_string();
            if let Some(field) = msg.strip_prefix("unknown field `") {
                if let Some(name) = field.split('`').next() {
                    return ConfigError::UnknownKey(name.to_string());
                }
            }
            ConfigError::Json(e)
        })
    }

    /// Echo the resolved config as flat text, parseable back into the same
    /// config.
    pub fn to_flat_text(&self) -> String {
        let json = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        if let serde_json::Value::Object(map) = json {
            for (k, v) in map {
                let rendered = match v {
                    serde_json::Value::Null => continue,
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                out.push_str(&format!("{k} = {rendered}\n"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| -> ConfigError {
            ConfigError::BadValue { key: key.into(), reason }
        };
        let prob = |key: &str, v: f64| -> Result<(), ConfigError> {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(key, format!("{v} outside [0, 1]")));
            }
            Ok(())
        };
        if self.num_envs == 0 || self.num_envs > 256 {
            return Err(bad("num_envs", format!("{} outside [1, 256]", self.num_envs)));
        }
        if self.map_file.is_none() && (self.map_width < 4 || self.map_height < 4) {
            return Err(bad("map_width/map_height", "generated maps need at least 4x4".into()));
        }
        if self.map_width > 64 || self.map_height > 64 {
            return Err(bad("map_width/map_height", "desk maps are capped at 64x64".into()));
        }
        self.map_style.parse::<MapStyle>().map_err(|e| bad("map_style", e))?;
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(bad("resolution", format!("{} must be positive", self.resolution)));
        }
        if ![3, 5, 9].contains(&self.action_map_size) {
            return Err(bad("action_map_size", format!("{} not in {{3, 5, 9}}", self.action_map_size)));
        }
        if !(40..=256).contains(&self.n_rays) {
            return Err(bad("n_rays", format!("{} outside [40, 256]", self.n_rays)));
        }
        if !(10.0..=360.0).contains(&self.fov_degrees) {
            return Err(bad("fov_degrees", format!("{} outside [10, 360]", self.fov_degrees)));
        }
        if !(1.0..=1000.0).contains(&self.max_range) {
            return Err(bad("max_range", format!("{} outside [1, 1000]", self.max_range)));
        }
        prob("second_source_prob", self.second_source_prob)?;
        prob("distractor_prob", self.distractor_prob)?;
        prob("distractor_step_prob", self.distractor_step_prob)?;
        prob("augment_prob", self.augment_prob)?;
        prob("move_probability", self.move_probability)?;
        if let Some(p) = self.dynamic_target_prob {
            prob("dynamic_target_prob", p)?;
        }
        if let Some(h) = self.hidden_size {
            if !(4..=2048).contains(&h) {
                return Err(bad("hidden_size", format!("{h} outside [4, 2048]")));
            }
        }
        if self.max_episode_steps == 0 || self.max_episode_steps > 100_000 {
            return Err(bad("max_episode_steps", "outside [1, 100000]".into()));
        }
        if let Some(classes) = &self.target_classes {
            if classes.is_empty() {
                return Err(bad("target_classes", "must not be empty".into()));
            }
            for &c in classes {
                if c >= NUM_CLASSES {
                    return Err(bad("target_classes", format!("class {c} >= {NUM_CLASSES}")));
                }
            }
        }
        if !(self.lr > 0.0 && self.lr < 1.0) {
            return Err(bad("lr", format!("{} outside (0, 1)", self.lr)));
        }
        if !(self.adam_eps > 0.0) {
            return Err(bad("adam_eps", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.clip_param) || self.clip_param == 0.0 {
            return Err(bad("clip_param", format!("{} outside (0, 1)", self.clip_param)));
        }
        if self.ppo_epochs == 0 || self.ppo_epochs > 64 {
            return Err(bad("ppo_epochs", "outside [1, 64]".into()));
        }
        if self.num_mini_batch != 1 {
            return Err(bad(
                "num_mini_batch",
                "only the tabled value 1 (full batch) is supported".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(bad("gamma", "outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(bad("tau", "outside [0, 1]".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(bad("max_grad_norm", "must be positive".into()));
        }
        if self.num_steps == 0 || self.num_steps > 10_000 {
            return Err(bad("num_steps", "outside [1, 10000]".into()));
        }
        if self.num_updates == 0 {
            return Err(bad("num_updates", "must be at least 1".into()));
        }
        if self.eval_episodes == 0 || self.eval_episodes > 100_000 {
            return Err(bad("eval_episodes", "outside [1, 100000]".into()));
        }
        if !(0.0..=10.0).contains(&self.aux_weight) {
            return Err(bad("aux_weight", "outside [0, 10]".into()));
        }
        if self.value_loss_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(bad("value_loss_coef/entropy_coef", "must be nonnegative".into()));
        }
        if self.continuous_actions {
            return Err(ConfigError::ContinuousUnsupported);
        }
        Ok(())
    }

    /// Effective dynamic-source probability: the task decides unless
    /// overridden.
    pub fn effective_dynamic_prob(&self) -> f64 {
        self.dynamic_target_prob.unwrap_or(match self.task {
            TaskKind::Static => 0.0,
            TaskKind::Dynamic => 1.0,
        })
    }

    /// Effective time-mask parameter: profile-family default unless set.
    /// The 44.1 kHz family uses the wider tabled mask.
    pub fn effective_time_mask(&self) -> usize {
        self.time_mask_param.unwrap_or(if self.profile.contains("44k") { 32 } else { 12 })
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let base = ScenarioConfig {
            second_source_prob: self.second_source_prob,
            distractor_prob: self.distractor_prob,
            distractor_step_prob: self.distractor_step_prob,
            augment_prob: self.augment_prob,
            move_probability: self.move_probability,
            dynamic_target_prob: self.effective_dynamic_prob(),
            freq_mask_param: self.freq_mask_param,
            time_mask_param: self.effective_time_mask(),
        };
        match self.scenario {
            ScenarioMode::Complex => base,
            ScenarioMode::Clean => base.clean(),
        }
    }

    pub fn net_profile(&self) -> Result<NetProfile, ConfigError> {
        let map_size = match self.map_source()? {
            MapSource::Fixed(m) => (m.height(), m.width()),
            MapSource::Generated { width, height, .. } => (height, width),
        };
        let mut p = NetProfile::named(&self.profile, map_size, self.n_rays, self.max_range)?;
        if let Some(h) = self.hidden_size {
            p.hidden = h;
        }
        p.action_k = self.action_map_size;
        Ok(p)
    }

    pub fn map_source(&self) -> Result<MapSource, ConfigError> {
        match &self.map_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok(MapSource::Fixed(Arc::new(GridMap::from_map_file(&text)?)))
            }
            None => Ok(MapSource::Generated {
                style: self.map_style.parse::<MapStyle>().expect("validated"),
                width: self.map_width,
                height: self.map_height,
                resolution: self.resolution,
            }),
        }
    }

    pub fn env_config(&self) -> Result<EnvConfig, ConfigError> {
        let target_split = match self.sounds {
            SoundSetting::Heard => SoundSplit::Train,
            SoundSetting::Unheard => SoundSplit::Test,
        };
        // Heard evaluations may restrict to a class subset; unheard draws
        // stay within the test split.
        let target_classes = match self.sounds {
            SoundSetting::Heard => self.target_classes.clone(),
            SoundSetting::Unheard => None,
        };
        if let Some(classes) = &target_classes {
            for &c in classes {
                if !TRAIN_CLASSES.contains(&c) {
                    return Err(ConfigError::BadValue {
                        key: "target_classes".into(),
                        reason: format!("class {c} is not in the training split"),
                    });
                }
            }
        }
        Ok(EnvConfig {
            map_source: self.map_source()?,
            scenario: self.scenario_config(),
            sample_rate: self.net_profile()?.sample_rate,
            n_rays: self.n_rays,
            fov_degrees: self.fov_degrees,
            max_range: self.max_range,
            max_episode_steps: self.max_episode_steps,
            target_split,
            target_classes,
        })
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            lr: self.lr,
            adam_eps: self.adam_eps,
            clip: self.clip_param,
            epochs: self.ppo_epochs,
            minibatches: self.num_mini_batch,
            value_coef: self.value_loss_coef,
            entropy_coef: self.entropy_coef,
            gamma: self.gamma,
            // The tabled `use_gae = True` is the default; turning it off
            // falls back to plain discounted returns, i.e. tau = 1.
            tau: if self.use_gae { self.tau } else { 1.0 },
            max_grad_norm: self.max_grad_norm,
            n_steps: self.num_steps,
            num_updates: self.num_updates,
            linear_lr_decay: self.linear_lr_decay,
            linear_clip_decay: self.linear_clip_decay,
            aux_loss: self.aux_loss,
            aux_weight: self.aux_weight,
        }
    }
}

fn flat_value_to_json(value: &str) -> serde_json::Value {
    if let Ok(b) = value.parse::<bool>() {
        return serde_json::Value::Bool(b);
    }
    if let Ok(i) = value.parse::<i64>() {
        return serde_json::Value::Number(i.into());
    }
    if let Ok(f) = value.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(f) {
            return serde_json::Value::Number(n);
        }
    }
    if value.contains(',') {
        let items: Vec<serde_json::Value> = value
            .split(',')
            .map(|s| flat_value_to_json(s.trim()))
            .collect();
        return serde_json::Value::Array(items);
    }
    if value == "none" {
        return serde_json::Value::Null;
    }
    serde_json::Value::String(value.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn flat_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 42;
        cfg.task = TaskKind::Dynamic;
        cfg.target_classes = Some(vec![0, 5, 9]);
        cfg.num_updates = 17;
        let text = cfg.to_flat_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn json_accepted() {
        let cfg = RunConfig::parse(r#"{"seed": 7, "task": "dynamic"}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.task, TaskKind::Dynamic);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("sedd = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "sedd"));
        assert!(RunConfig::parse(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(RunConfig::parse("gamma = 1.5\n").is_err());
        assert!(RunConfig::parse("action_map_size = 4\n").is_err());
        assert!(RunConfig::parse("num_envs = 0\n").is_err());
        assert!(RunConfig::parse("move_probability = -0.1\n").is_err());
        assert!(RunConfig::parse("num_mini_batch = 2\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_ok() {
        let cfg = RunConfig::parse("# a comment\n\nseed = 9 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn malformed_line_reported_with_number() {
        let err = RunConfig::parse("seed = 1\nbogus line\n").unwrap_err();
        assert!(matches!(err, ConfigError::MalformedLine(2)));
    }

    #[test]
    fn continuous_actions_rejected_with_clear_error() {
        let err = RunConfig::parse("continuous_actions = true\n").unwrap_err();
        assert!(matches!(err, ConfigError::ContinuousUnsupported));
    }

    #[test]
    fn task_decides_dynamic_probability() {
        let mut cfg = RunConfig::default();
        cfg.task = TaskKind::Static;
        assert_eq!(cfg.effective_dynamic_prob(), 0.0);
        cfg.task = TaskKind::Dynamic;
        assert_eq!(cfg.effective_dynamic_prob(), 1.0);
        cfg.dynamic_target_prob = Some(0.5);
        assert_eq!(cfg.effective_dynamic_prob(), 0.5);
    }

    #[test]
    fn mask_defaults_follow_profile_family() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.effective_time_mask(), 12);
        cfg.profile = "desk44k".into();
        assert_eq!(cfg.effective_time_mask(), 32);
        cfg.time_mask_param = Some(5);
        assert_eq!(cfg.effective_time_mask(), 5);
    }

    #[test]
    fn clean_mode_zeroes_perturbations() {
        let mut cfg = RunConfig::default();
        cfg.scenario = ScenarioMode::Clean;
        let s = cfg.scenario_config();
        assert_eq!(s.second_source_prob, 0.0);
        assert_eq!(s.distractor_prob, 0.0);
        assert_eq!(s.augment_prob, 0.0);
        cfg.scenario = ScenarioMode::Complex;
        let s = cfg.scenario_config();
        assert_eq!(s.second_source_prob, 0.5);
    }
}
