//! Model-based dynamic shielding for safe multi-agent reinforcement learning.
//!
//! Safety specifications are LTL formulas compiled into monitor automata.
//! At runtime agents are clustered by proximity, and each group gets a
//! shield synthesized from a `k`-step safety game over a dynamics model of
//! the environment. Shields replace proposals that could lead to a violation
//! within the horizon and are reused, merged, split or recomputed as the
//! groups change.

pub mod abstraction;
pub mod actions;
pub mod automata;
pub mod dynamics;
pub mod env;
pub mod game;
pub mod harness;
pub mod ltl;
pub mod manager;
pub mod marl;
pub mod shield;
