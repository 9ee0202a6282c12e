//! Multi-agent gridworld and particle environments.

mod grid;
mod maps;
mod particle;

pub use grid::{GridEnv, GridState};
pub use maps::{GridMap, MapError, BUILTIN_MAPS};
pub use particle::{Particle, ParticleConfig, ParticleEnv, ParticleState};

/// Result of one joint environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<S> {
    pub state: S,
    pub rewards: Vec<f64>,
    /// Agents involved in at least one collision this step.
    pub colliding: Vec<bool>,
    /// Number of colliding agent pairs this step.
    pub collisions: usize,
    /// Agents that reached their target during this step.
    pub arrived: Vec<bool>,
    pub episode_done: bool,
}

pub const LIVING_PENALTY: f64 = -1.0;
pub const COLLISION_PENALTY: f64 = -10.0;
pub const TARGET_REWARD: f64 = 100.0;
