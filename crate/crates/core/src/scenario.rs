//! Per-episode randomization: the moving-source motion model, second
//! sounds and distractors, and spectrogram masking.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::{BinauralSpectrogram, SoundSplit};
use crate::grid::{geodesic_distances_from, shortest_path, Cell, GridMap};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("no candidate cell to sample (need at least 2 free reachable cells)")]
    NoCandidate,
    #[error("mask parameter {0} exceeds spectrogram extent {1}")]
    MaskTooLarge(usize, usize),
}

/// Knobs of the randomization pipeline. Probabilities follow the fair-coin
/// reading of the pipeline's random choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub second_source_prob: f64,
    pub distractor_prob: f64,
    pub distractor_step_prob: f64,
    pub augment_prob: f64,
    pub move_probability: f64,
    pub dynamic_target_prob: f64,
    pub freq_mask_param: usize,
    pub time_mask_param: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            second_source_prob: 0.5,
            distractor_prob: 0.5,
            distractor_step_prob: 0.5,
            augment_prob: 0.5,
            move_probability: 0.3,
            dynamic_target_prob: 0.0,
            freq_mask_param: 12,
            time_mask_param: 12,
        }
    }
}

impl ScenarioConfig {
    /// Clean setup: target sound only, no augmentation.
    pub fn clean(self) -> Self {
        ScenarioConfig {
            second_source_prob: 0.0,
            distractor_prob: 0.0,
            augment_prob: 0.0,
            ..self
        }
    }
}

/// Uniform draw over the free cells reachable from `from`, excluding
/// `exclude`.
pub fn sample_source_goal(
    map: &GridMap,
    rng: &mut impl Rng,
    from: Cell,
    exclude: Cell,
) -> Result<Cell, ScenarioError> {
    let field = geodesic_distances_from(map, from);
    let candidates: Vec<Cell> = map
        .free_cells()
        .into_iter()
        .filter(|&c| c != exclude && field[map.idx(c)].is_some())
        .collect();
    if candidates.is_empty() {
        return Err(ScenarioError::NoCandidate);
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Moving-source state: a goal, the remaining shortest-path suffix toward
/// it, and the per-step move probability.
#[derive(Debug, Clone)]
pub struct MotionModel {
    current: Cell,
    goal: Cell,
    pending: std::collections::VecDeque<Cell>,
    move_probability: f64,
}

impl MotionModel {
    /// A source that never moves (static task).
    pub fn stationary(cell: Cell) -> Self {
        MotionModel {
            current: cell,
            goal: cell,
            pending: Default::default(),
            move_probability: 0.0,
        }
    }

    /// A moving source starting at `start`; the first goal is drawn
    /// immediately, excluding the agent's cell.
    pub fn moving(
        map: &GridMap,
        rng: &mut impl Rng,
        start: Cell,
        agent_cell: Cell,
        move_probability: f64,
    ) -> Result<Self, ScenarioError> {
        let mut model = MotionModel {
            current: start,
            goal: start,
            pending: Default::default(),
            move_probability,
        };
        model.draw_goal(map, rng, agent_cell)?;
        Ok(model)
    }

    pub fn current(&self) -> Cell {
        self.current
    }

    pub fn move_probability(&self) -> f64 {
        self.move_probability
    }

    fn draw_goal(
        &mut self,
        map: &GridMap,
        rng: &mut impl Rng,
        agent_cell: Cell,
    ) -> Result<(), ScenarioError> {
        // Exclude the agent's cell by contract; re-draw a goal equal to the
        // source's own cell, which would stall the walk.
        for _ in 0..64 {
            let goal = sample_source_goal(map, rng, self.current, agent_cell)?;
            if goal != self.current {
                self.goal = goal;
                let path = shortest_path(map, self.current, goal)
                    .expect("free cells")
                    .expect("sampled from reachable set");
                self.pending = path.into_iter().skip(1).collect();
                return Ok(());
            }
        }
        // Only the source's own cell was drawable; stay put this round.
        self.pending.clear();
        Ok(())
    }

    /// One motion step: with probability `move_probability` advance one
    /// path cell (drawing a fresh goal first when the previous one was
    /// reached). The source has no orientation and moves directly.
    pub fn step(
        &mut self,
        map: &GridMap,
        rng: &mut impl Rng,
        agent_cell: Cell,
    ) -> Result<(), ScenarioError> {
        if self.move_probability == 0.0 {
            return Ok(());
        }
        if !rng.random_bool(self.move_probability) {
            return Ok(());
        }
        if self.pending.is_empty() {
            self.draw_goal(map, rng, agent_cell)?;
        }
        if let Some(next) = self.pending.pop_front() {
            self.current = next;
        }
        Ok(())
    }
}

/// Per-episode randomization draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScenario {
    pub target_class: usize,
    pub include_second: bool,
    pub second_class: Option<usize>,
    pub include_distractor: bool,
    pub dynamic_target: bool,
}

/// Draw one episode's scenario. The second sound is sampled from the
/// training split excluding the target class, whatever split the target
/// itself came from.
pub fn sample_episode_scenario(
    rng: &mut impl Rng,
    cfg: &ScenarioConfig,
    target_class: usize,
) -> EpisodeScenario {
    let include_second =
        cfg.second_source_prob > 0.0 && rng.random_bool(cfg.second_source_prob);
    let second_class = if include_second {
        Some(sample_train_class_excluding(rng, target_class))
    } else {
        None
    };
    let include_distractor =
        cfg.distractor_prob > 0.0 && rng.random_bool(cfg.distractor_prob);
    let dynamic_target =
        cfg.dynamic_target_prob > 0.0 && rng.random_bool(cfg.dynamic_target_prob);
    EpisodeScenario {
        target_class,
        include_second,
        second_class,
        include_distractor,
        dynamic_target,
    }
}

fn sample_train_class_excluding(rng: &mut impl Rng, exclude: usize) -> usize {
    let train = SoundSplit::Train.classes();
    loop {
        let c = rng.random_range(train.clone());
        if c != exclude {
            return c;
        }
    }
}

/// The per-step distractor draw: present with probability
/// `distractor_step_prob`; when present, a freshly drawn training class at
/// a uniform free cell that is never the target's.
pub fn sample_step_distractor(
    scenario: &EpisodeScenario,
    map: &GridMap,
    rng: &mut impl Rng,
    cfg: &ScenarioConfig,
    target_cell: Cell,
) -> Option<(usize, Cell)> {
    if !scenario.include_distractor {
        return None;
    }
    if cfg.distractor_step_prob == 0.0 || !rng.random_bool(cfg.distractor_step_prob) {
        return None;
    }
    let class = sample_train_class_excluding(rng, scenario.target_class);
    let candidates: Vec<Cell> =
        map.free_cells().into_iter().filter(|&c| c != target_cell).collect();
    if candidates.is_empty() {
        return None;
    }
    Some((class, candidates[rng.random_range(0..candidates.len())]))
}

/// Audible sources for one step: the target, the co-located second sound
/// when the episode includes one, and the step's distractor when present.
pub fn compose_step_sources(
    scenario: &EpisodeScenario,
    target_cell: Cell,
    distractor: Option<(usize, Cell)>,
) -> Vec<(usize, Cell)> {
    let mut out = vec![(scenario.target_class, target_cell)];
    if let Some(second) = scenario.second_class {
        out.push((second, target_cell));
    }
    if let Some(d) = distractor {
        out.push(d);
    }
    out
}

/// Frequency masking: zero `f ~ U{0..=param}` consecutive rows starting at
/// `f0 ~ U{0..=height-f}`, both channels alike.
pub fn freq_mask(
    spec: &mut BinauralSpectrogram,
    param: usize,
    rng: &mut impl Rng,
) -> Result<(), ScenarioError> {
    let height = spec.freq_bins;
    if param > height {
        return Err(ScenarioError::MaskTooLarge(param, height));
    }
    let f = rng.random_range(0..=param);
    let f0 = rng.random_range(0..=height - f);
    for row in f0..f0 + f {
        for t in 0..spec.time_bins {
            spec.set(row, t, 0, 0.0);
            spec.set(row, t, 1, 0.0);
        }
    }
    Ok(())
}

/// Time masking: column analogue of [`freq_mask`].
pub fn time_mask(
    spec: &mut BinauralSpectrogram,
    param: usize,
    rng: &mut impl Rng,
) -> Result<(), ScenarioError> {
    let width = spec.time_bins;
    if param > width {
        return Err(ScenarioError::MaskTooLarge(param, width));
    }
    let t = rng.random_range(0..=param);
    let t0 = rng.random_range(0..=width - t);
    for col in t0..t0 + t {
        for f in 0..spec.freq_bins {
            spec.set(f, col, 0, 0.0);
            spec.set(f, col, 1, 0.0);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    None,
    Time,
    Frequency,
    Both,
}

/// Per-step augmentation: with probability `1 - augment_prob` nothing;
/// otherwise uniformly one of time masking, frequency masking, or both
/// (frequency applied first).
pub fn apply_augment(
    spec: &mut BinauralSpectrogram,
    cfg: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<AugmentMode, ScenarioError> {
    if cfg.augment_prob == 0.0 || !rng.random_bool(cfg.augment_prob) {
        return Ok(AugmentMode::None);
    }
    let mode = match rng.random_range(0..3) {
        0 => AugmentMode::Time,
        1 => AugmentMode::Frequency,
        _ => AugmentMode::Both,
    };
    match mode {
        AugmentMode::Time => time_mask(spec, cfg.time_mask_param, rng)?,
        AugmentMode::Frequency => freq_mask(spec, cfg.freq_mask_param, rng)?,
        AugmentMode::Both => {
            freq_mask(spec, cfg.freq_mask_param, rng)?;
            time_mask(spec, cfg.time_mask_param, rng)?;
        }
        AugmentMode::None => unreachable!(),
    }
    Ok(mode)
}
