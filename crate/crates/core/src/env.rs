//! One navigation environment instance: owns the per-episode state (map,
//! poses, scenario, audio cursor, geometric map) and advances it one
//! low-level action at a time. Instances never share mutable state, so any
//! number of them can be stepped concurrently.

use std::sync::Arc;

use thiserror::Error;

use crate::acoustics::{
    compute_observation_audio, AcousticsError, SoundBank, SoundSplit,
};
use crate::agent::Observation;
use crate::grid::{
    generate_map, geodesic_distance, ray_cast_scan, AgentPose, Cell, GeometricMap, GridError,
    GridMap, Heading, LowLevelAction, MapStyle,
};
use crate::metrics::{DsnaTracker, DsplTracker, EpisodeRecord, StepRecord};
use crate::rng::{SeedTree, Stream, StreamTag};
use crate::scenario::{
    sample_episode_scenario, sample_step_distractor, EpisodeScenario, MotionModel, ScenarioConfig,
    ScenarioError,
};
use rand::Rng;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Acoustics(#[from] AcousticsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("map needs at least 2 free connected cells for an episode")]
    MapTooSmall,
    #[error("stepping a finished episode")]
    EpisodeOver,
}

/// Where each episode's map comes from.
#[derive(Debug, Clone)]
pub enum MapSource {
    /// Fresh procedural map per episode.
    Generated { style: MapStyle, width: usize, height: usize, resolution: f64 },
    /// One fixed map for every episode.
    Fixed(Arc<GridMap>),
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub map_source: MapSource,
    pub scenario: ScenarioConfig,
    pub sample_rate: u32,
    pub n_rays: usize,
    pub fov_degrees: f64,
    pub max_range: f64,
    pub max_episode_steps: usize,
    pub target_split: SoundSplit,
    /// Optional restriction of target draws to a class subset (within the
    /// split).
    pub target_classes: Option<Vec<usize>>,
}

/// Success bonus for stopping on the source.
pub const REWARD_SUCCESS: f64 = 10.0;
/// Dense shaping for geodesic progress toward the current goal.
pub const REWARD_PROGRESS: f64 = 0.25;
/// Per-low-level-step time penalty.
pub const REWARD_STEP_PENALTY: f64 = -0.01;

/// Reward for one low-level transition: distance terms compare the
/// geodesic distance to the source before and after (the source's current
/// cell in the dynamic task), a successful stop earns the bonus, and every
/// step pays the time penalty.
pub fn step_reward(dist_before: u32, dist_after: u32, stop_success: bool) -> f64 {
    let mut r = REWARD_STEP_PENALTY;
    if stop_success {
        r += REWARD_SUCCESS;
    }
    r += match dist_after.cmp(&dist_before) {
        std::cmp::Ordering::Less => REWARD_PROGRESS,
        std::cmp::Ordering::Greater => -REWARD_PROGRESS,
        std::cmp::Ordering::Equal => 0.0,
    };
    r
}

pub struct NavEnv {
    pub cfg: EnvConfig,
    bank: Arc<SoundBank>,
    tree: SeedTree,
    env_idx: u64,
    episode_counter: u64,
    // Per-episode state.
    map: Arc<GridMap>,
    pub scenario: EpisodeScenario,
    motion: MotionModel,
    pose: AgentPose,
    start_pose: AgentPose,
    gmap: GeometricMap,
    scenario_rng: Stream,
    motion_rng: Stream,
    augment_rng: Stream,
    sampling_rng: Stream,
    audio_cursor: u64,
    low_steps: usize,
    distractor: Option<(usize, Cell)>,
    done: bool,
    success: bool,
    episode_id: u64,
    record: EpisodeRecord,
    dspl: DsplTracker,
    dsna: DsnaTracker,
}

impl NavEnv {
    pub fn new(
        cfg: EnvConfig,
        bank: Arc<SoundBank>,
        tree: SeedTree,
        env_idx: u64,
    ) -> Result<Self, EnvError> {
        let mut env = NavEnv {
            cfg,
            bank,
            tree,
            env_idx,
            episode_counter: 0,
            map: Arc::new(GridMap::parse("..", 1.0)?),
            scenario: EpisodeScenario {
                target_class: 0,
                include_second: false,
                second_class: None,
                include_distractor: false,
                dynamic_target: false,
            },
            motion: MotionModel::stationary(Cell::new(0, 0)),
            pose: AgentPose::new(Cell::new(0, 0), Heading::East),
            start_pose: AgentPose::new(Cell::new(0, 0), Heading::East),
            gmap: GeometricMap::new(2, 1),
            scenario_rng: tree.stream(StreamTag::Scenario, 0),
            motion_rng: tree.stream(StreamTag::Motion, 0),
            augment_rng: tree.stream(StreamTag::Augment, 0),
            sampling_rng: tree.stream(StreamTag::PolicySampling, env_idx),
            audio_cursor: 0,
            low_steps: 0,
            distractor: None,
            done: true,
            success: false,
            episode_id: 0,
            record: EpisodeRecord::default(),
            dspl: DsplTracker::new(),
            dsna: DsnaTracker::new(),
        };
        env.reset()?;
        Ok(env)
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn source_cell(&self) -> Cell {
        self.motion.current()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn succeeded(&self) -> bool {
        self.success
    }

    pub fn low_steps(&self) -> usize {
        self.low_steps
    }

    pub fn episode_id(&self) -> u64 {
        self.episode_id
    }

    /// The policy-sampling stream owned by this environment lane.
    pub fn sampling_rng(&mut self) -> &mut Stream {
        &mut self.sampling_rng
    }

    /// Begin a fresh episode: new map (when generated), placement, scenario
    /// draws, trackers, and the initial distractor state.
    pub fn reset(&mut self) -> Result<(), EnvError> {
        let episode_id = self.env_idx << 40 | self.episode_counter;
        self.episode_counter += 1;
        self.episode_id = episode_id;
        self.scenario_rng = self.tree.stream2(StreamTag::Scenario, self.env_idx, episode_id);
        self.motion_rng = self.tree.stream2(StreamTag::Motion, self.env_idx, episode_id);
        self.augment_rng = self.tree.stream2(StreamTag::Augment, self.env_idx, episode_id);

        self.map = match &self.cfg.map_source {
            MapSource::Fixed(m) => Arc::clone(m),
            MapSource::Generated { style, width, height, resolution } => {
                let mut map_rng = self.tree.stream2(StreamTag::MapGen, self.env_idx, episode_id);
                let seed: u64 = map_rng.random();
                let mut m = generate_map(seed, *width, *height, *style)?;
                if *resolution != 1.0 {
                    m = GridMap::parse(&m.to_ascii(), *resolution)?;
                }
                Arc::new(m)
            }
        };

        let component = self.map.largest_component();
        if component.len() < 2 {
            return Err(EnvError::MapTooSmall);
        }
        let agent_cell = component[self.scenario_rng.random_range(0..component.len())];
        let heading = Heading::ALL[self.scenario_rng.random_range(0..4)];
        self.pose = AgentPose::new(agent_cell, heading);
        self.start_pose = self.pose;
        let source_cell = loop {
            let c = component[self.scenario_rng.random_range(0..component.len())];
            if c != agent_cell {
                break c;
            }
        };

        let target_class = self.draw_target_class();
        self.scenario = sample_episode_scenario(
            &mut self.scenario_rng,
            &self.cfg.scenario,
            target_class,
        );
        self.motion = if self.scenario.dynamic_target {
            MotionModel::moving(
                &self.map,
                &mut self.motion_rng,
                source_cell,
                agent_cell,
                self.cfg.scenario.move_probability,
            )?
        } else {
            MotionModel::stationary(source_cell)
        };

        self.gmap = GeometricMap::new(self.map.width(), self.map.height());
        self.audio_cursor = 0;
        self.low_steps = 0;
        self.done = false;
        self.success = false;
        self.distractor = sample_step_distractor(
            &self.scenario,
            &self.map,
            &mut self.scenario_rng,
            &self.cfg.scenario,
            self.motion.current(),
        );

        self.dspl = DsplTracker::new();
        self.dsna = DsnaTracker::new();
        self.dspl.step(&self.map, 0, self.start_pose.cell, source_cell);
        self.dsna.step(&self.map, 0, self.start_pose, source_cell);

        self.record = EpisodeRecord {
            episode_id,
            map_rows: self.map.to_ascii(),
            resolution: self.map.resolution(),
            start_pose: self.pose,
            initial_source: source_cell,
            dynamic: self.scenario.dynamic_target,
            target_class,
            steps: Vec::new(),
            success: false,
            dspl_locked: None,
            dsna_locked: None,
        };
        Ok(())
    }

    fn draw_target_class(&mut self) -> usize {
        match &self.cfg.target_classes {
            Some(classes) => classes[self.scenario_rng.random_range(0..classes.len())],
            None => {
                let range = self.cfg.target_split.classes();
                self.scenario_rng.random_range(range)
            }
        }
    }

    /// Apply one low-level action. Returns `(reward, done)`.
    pub fn step_low_level(&mut self, action: LowLevelAction) -> Result<(f64, bool), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let dist_before = self.agent_source_distance();
        let mut stop_success = false;
        match action {
            LowLevelAction::Stop => {
                self.success = self.pose.cell == self.motion.current();
                stop_success = self.success;
                self.done = true;
            }
            other => {
                let (new_pose, _collided) = self.map.step_low_level(self.pose, other);
                self.pose = new_pose;
                if self.scenario.dynamic_target {
                    self.motion.step(&self.map, &mut self.motion_rng, self.pose.cell)?;
                }
                self.distractor = sample_step_distractor(
                    &self.scenario,
                    &self.map,
                    &mut self.scenario_rng,
                    &self.cfg.scenario,
                    self.motion.current(),
                );
            }
        }
        self.low_steps += 1;
        self.audio_cursor += self.cfg.sample_rate as u64;
        let dist_after = self.agent_source_distance();
        let reward = step_reward(dist_before, dist_after, stop_success);

        if !self.done && self.low_steps >= self.cfg.max_episode_steps {
            self.done = true;
            self.success = false;
        }

        self.dspl.step(&self.map, self.low_steps as u32, self.start_pose.cell, self.motion.current());
        self.dsna.step(&self.map, self.low_steps as u32, self.start_pose, self.motion.current());
        self.record.steps.push(StepRecord {
            action,
            pose_after: self.pose,
            source_after: self.motion.current(),
            reward,
        });
        if self.done {
            self.record.success = self.success;
        }
        Ok((reward, self.done))
    }

    fn agent_source_distance(&self) -> u32 {
        geodesic_distance(&self.map, self.pose.cell, self.motion.current())
            .expect("agent and source on free cells")
            .expect("agent and source placed in one component")
    }

    /// Render the observation at the current state: binaural spectrogram of
    /// the audible sources (augmented per the pipeline), a fresh depth
    /// scan, and the geometric map updated with that scan.
    pub fn observe(&mut self) -> Result<Observation, EnvError> {
        let sources: Vec<(usize, Cell, u64)> = crate::scenario::compose_step_sources(
            &self.scenario,
            self.motion.current(),
            self.distractor,
        )
        .into_iter()
        .map(|(class, cell)| (class, cell, self.audio_cursor))
        .collect();
        let mut spec = compute_observation_audio(
            &self.bank,
            &self.map,
            &sources,
            self.pose,
            self.cfg.sample_rate,
        )?;
        crate::scenario::apply_augment(&mut spec, &self.cfg.scenario, &mut self.augment_rng)?;
        let scan =
            ray_cast_scan(&self.map, self.pose, self.cfg.n_rays, self.cfg.fov_degrees, self.cfg.max_range);
        self.gmap.integrate_scan(&self.map, self.pose, &scan);
        Ok(Observation::new(spec, scan, &self.gmap))
    }

    /// Finished episode record (call when `is_done`).
    pub fn take_record(&mut self) -> EpisodeRecord {
        let mut rec = std::mem::take(&mut self.record);
        rec.dspl_locked = self.dspl.locked();
        rec.dsna_locked = self.dsna.locked();
        rec
    }
}
