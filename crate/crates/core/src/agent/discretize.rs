//! Continuous-action discretization: velocity/heading commands accumulate
//! into an intermediate position that snaps to the grid once it crosses
//! half a cell, emitting Idle otherwise.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiscretizeError {
    #[error("velocity {0} outside [0, 1]")]
    BadVelocity(f64),
    #[error("angular command {0} outside [-90, 90] degrees")]
    BadAngle(f64),
}

/// One discretization result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscretizedStep {
    /// Accumulated motion has not crossed the snap threshold; the agent
    /// stays put rather than skipping the step.
    Idle,
    /// Navigate to this grid-aligned position (world units).
    Target(f64, f64),
}

/// Stateful accumulator for one agent. The intermediate position resets
/// when a new episode starts or when the agent is not standing on the last
/// emitted target (it has been teleported or blocked).
#[derive(Debug, Clone)]
pub struct ContinuousDiscretizer {
    grid_resolution: f64,
    threshold: f64,
    episode: Option<u64>,
    intermediate: (f64, f64),
    discretized: (f64, f64),
}

impl ContinuousDiscretizer {
    /// `threshold` defaults to half the grid resolution.
    pub fn new(grid_resolution: f64) -> Self {
        ContinuousDiscretizer {
            grid_resolution,
            threshold: grid_resolution / 2.0,
            episode: None,
            intermediate: (0.0, 0.0),
            discretized: (0.0, 0.0),
        }
    }

    /// Feed one `(velocity, angle)` command observed at `current` (world
    /// units) in episode `episode_id`.
    pub fn step(
        &mut self,
        episode_id: u64,
        current: (f64, f64),
        velocity: f64,
        angle_degrees: f64,
    ) -> Result<DiscretizedStep, DiscretizeError> {
        if !(0.0..=1.0).contains(&velocity) {
            return Err(DiscretizeError::BadVelocity(velocity));
        }
        if !(-90.0..=90.0).contains(&angle_degrees) {
            return Err(DiscretizeError::BadAngle(angle_degrees));
        }
        if self.episode != Some(episode_id) || current != self.discretized {
            self.intermediate = current;
            self.discretized = current;
            self.episode = Some(episode_id);
        }
        let rad = angle_degrees.to_radians();
        self.intermediate.0 += velocity * rad.cos();
        self.intermediate.1 += velocity * rad.sin();

        self.discretized = (
            snap_axis(self.intermediate.0, current.0, self.grid_resolution, self.threshold),
            snap_axis(self.intermediate.1, current.1, self.grid_resolution, self.threshold),
        );
        if self.discretized == current {
            Ok(DiscretizedStep::Idle)
        } else {
            Ok(DiscretizedStep::Target(self.discretized.0, self.discretized.1))
        }
    }
}

/// Snap one axis: whole grid steps of accumulated displacement, plus one
/// more when the remainder exceeds the threshold.
fn snap_axis(intermediate: f64, current: f64, resolution: f64, threshold: f64) -> f64 {
    if intermediate >= current {
        let delta = intermediate - current;
        let steps = (delta / resolution).floor();
        let rem = delta - steps * resolution;
        let mut out = current + steps * resolution;
        if rem > threshold {
            out += resolution;
        }
        out
    } else {
        let delta = current - intermediate;
        let steps = (delta / resolution).floor();
        let rem = delta - steps * resolution;
        let mut out = current - steps * resolution;
        if rem > threshold {
            out -= resolution;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_velocity_idles_forever() {
        let mut d = ContinuousDiscretizer::new(0.5);
        for _ in 0..50 {
            assert_eq!(d.step(1, (0.0, 0.0), 0.0, 30.0).unwrap(), DiscretizedStep::Idle);
        }
    }

    #[test]
    fn full_speed_straight_advances_two_half_meter_cells() {
        // v = 1, angle 0, resolution 0.5: one accumulate of +1.0 snaps to
        // two grid steps, every step.
        let mut d = ContinuousDiscretizer::new(0.5);
        let mut pos = (0.0, 0.0);
        for i in 0..5 {
            match d.step(1, pos, 1.0, 0.0).unwrap() {
                DiscretizedStep::Target(x, y) => {
                    assert_eq!(y, 0.0);
                    assert!((x - (pos.0 + 1.0)).abs() < 1e-12, "step {i}: {x}");
                    pos = (x, y);
                }
                DiscretizedStep::Idle => panic!("full speed must move"),
            }
        }
    }

    #[test]
    fn below_threshold_accumulation_idles() {
        // 0.24 accumulated with threshold 0.25 stays idle; crossing it on
        // the next step emits one grid cell.
        let mut d = ContinuousDiscretizer::new(0.5);
        assert_eq!(d.step(1, (0.0, 0.0), 0.24, 0.0).unwrap(), DiscretizedStep::Idle);
        match d.step(1, (0.0, 0.0), 0.24, 0.0).unwrap() {
            DiscretizedStep::Target(x, y) => {
                assert_eq!((x, y), (0.5, 0.0));
            }
            other => panic!("expected snap after crossing threshold, got {other:?}"),
        }
    }

    #[test]
    fn new_episode_resets_accumulation() {
        let mut d = ContinuousDiscretizer::new(0.5);
        assert_eq!(d.step(1, (0.0, 0.0), 0.24, 0.0).unwrap(), DiscretizedStep::Idle);
        // Same position, new episode: the 0.24 must be forgotten.
        assert_eq!(d.step(2, (0.0, 0.0), 0.24, 0.0).unwrap(), DiscretizedStep::Idle);
    }

    #[test]
    fn out_of_range_inputs_rejected() {
        let mut d = ContinuousDiscretizer::new(0.5);
        assert!(d.step(1, (0.0, 0.0), 1.5, 0.0).is_err());
        assert!(d.step(1, (0.0, 0.0), 0.5, 120.0).is_err());
    }

    #[test]
    fn negative_direction_snaps_symmetrically() {
        let mut d = ContinuousDiscretizer::new(0.5);
        // angle 180 is out of range; use velocity along -x via angle ±90 on y
        // and negative x via... the action space can't point backwards, so
        // check -y via angle -90.
        match d.step(1, (0.0, 0.0), 1.0, -90.0).unwrap() {
            DiscretizedStep::Target(x, y) => {
                assert!((x - 0.0).abs() < 1e-9);
                assert!((y + 1.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    /// Oracle equivalence: an independent simulation of the accumulate and
    /// snap arithmetic over a random action stream, with an executor that
    /// always arrives at the emitted target, reproduces the same cell
    /// sequence.
    #[test]
    fn stream_matches_independent_simulation() {
        let res = 0.5;
        let thr = 0.25;
        let mut rng = crate::rng::derive_stream(77, 0);
        let stream: Vec<(f64, f64)> =
            (0..500).map(|_| (rng.random_range(0.0..1.0), rng.random_range(-90.0..90.0))).collect();

        // Implementation under test.
        let mut d = ContinuousDiscretizer::new(res);
        let mut pos = (0.0f64, 0.0f64);
        let mut impl_seq = Vec::new();
        for &(v, w) in &stream {
            match d.step(3, pos, v, w).unwrap() {
                DiscretizedStep::Idle => impl_seq.push(pos),
                DiscretizedStep::Target(x, y) => {
                    pos = (x, y);
                    impl_seq.push(pos);
                }
            }
        }

        // Oracle: direct accumulate-then-snap trace.
        let mut oracle_pos = (0.0f64, 0.0f64);
        let mut acc = oracle_pos;
        let mut oracle_seq = Vec::new();
        for &(v, w) in &stream {
            let rad = w.to_radians();
            acc.0 += v * rad.cos();
            acc.1 += v * rad.sin();
            let snap = |i: f64, c: f64| {
                let delta = i - c;
                let steps = (delta.abs() / res).floor() * delta.signum();
                let rem = delta.abs() - steps.abs() * res;
                let mut out = c + steps * res;
                if rem > thr {
                    out += res * delta.signum();
                }
                out
            };
            // No reset on arrival: the remainder keeps accumulating, the
            // accumulator only resets on episode change or displacement.
            oracle_pos = (snap(acc.0, oracle_pos.0), snap(acc.1, oracle_pos.1));
            oracle_seq.push(oracle_pos);
        }

        assert_eq!(impl_seq.len(), oracle_seq.len());
        for (i, (a, b)) in impl_seq.iter().zip(&oracle_seq).enumerate() {
            assert!(
                (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9,
                "diverged at step {i}: {a:?} vs {b:?}"
            );
        }
    }
}
