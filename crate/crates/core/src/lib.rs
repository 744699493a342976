//! Desk-scale audio-goal navigation benchmark and training harness.
//!
//! The library is organized around the life of one episode: a [`grid`]
//! world is generated or loaded, a sound source is placed (and optionally
//! moves, [`scenario`]), the agent hears a binaural spectrogram rendered by
//! [`acoustics`], a recurrent actor-critic [`agent`] picks waypoints that a
//! planner executes, [`ppo`] trains the policy from collected rollouts, and
//! [`metrics`] scores the logged episodes with the static and dynamic
//! metric families. [`harness`] ties it all together behind a config file
//! and the CLI.

pub mod acoustics;
pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod ppo;
pub mod rng;
pub mod scenario;

pub use grid::{AgentPose, Cell, GridMap, Heading, LowLevelAction};
