//! Bounded-horizon safety games between the agents (choosing joint actions)
//! and the environment (choosing which predicted successor occurs).
//!
//! Game states are `(label, monitor state, t)` with `t = 0` at the observed
//! root and `t = k` at the horizon. A state is winning iff its monitor state
//! is accepting and, below the horizon, some joint action sends every
//! successor into a winning state.

mod explicit;
mod lazy;

use std::fmt;

use thiserror::Error;

pub use explicit::{build_game, extract_shield, winning_region, DenseStrategy, GameState, SafetyGame, WinningRegion};
pub use lazy::LazyGame;

use crate::abstraction::{AbstractLabel, AbstractionError, LabelProp};
use crate::actions::JointActionSpace;
use crate::automata::{Dfa, StateId};
use crate::ltl::{self, LtlError, PropositionAlphabet};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GameError {
    #[error(transparent)]
    Ltl(#[from] LtlError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error("proposition {0:?} is not derivable from labels (known: collision, out_of_bounds, at_obstacle)")]
    UnknownProposition(String),
    #[error("monitor has {found} letters but {props} propositions need {expected}")]
    AlphabetMismatch { props: usize, expected: usize, found: usize },
    #[error("no joint strategy keeps the group safe for the next {horizon} steps")]
    UnsafeStart { horizon: usize },
}

/// A safety monitor whose letters are computed from abstract labels.
#[derive(Clone, Debug)]
pub struct SpecMonitor {
    text: String,
    dfa: Dfa,
    props: Vec<LabelProp>,
}

impl SpecMonitor {
    /// Parses and compiles a safety formula over label propositions.
    pub fn compile(text: &str) -> Result<Self, GameError> {
        let formula = ltl::parse(text)?;
        let alphabet = PropositionAlphabet::of_formula(&formula)?;
        let props = alphabet
            .names()
            .iter()
            .map(|n| LabelProp::from_name(n).ok_or_else(|| GameError::UnknownProposition(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let dfa = ltl::to_monitor_dfa(&formula, &alphabet)?;
        Ok(Self { text: text.to_string(), dfa, props })
    }

    /// Wraps an existing monitor; letter bit `i` is `props[i]`.
    pub fn from_dfa(dfa: Dfa, props: Vec<LabelProp>) -> Result<Self, GameError> {
        let expected = 1usize << props.len();
        if dfa.num_letters() != expected {
            return Err(GameError::AlphabetMismatch { props: props.len(), expected, found: dfa.num_letters() });
        }
        Ok(Self { text: String::new(), dfa, props })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    pub fn props(&self) -> &[LabelProp] {
        &self.props
    }

    pub fn letter(&self, label: &AbstractLabel) -> usize {
        self.props
            .iter()
            .enumerate()
            .filter(|(_, &p)| label.holds(p))
            .fold(0, |acc, (i, _)| acc | 1 << i)
    }

    /// Monitor state after reading the root label.
    pub fn start(&self, root: &AbstractLabel) -> StateId {
        self.dfa.step(self.dfa.initial(), self.letter(root))
    }

    pub fn step(&self, state: StateId, label: &AbstractLabel) -> StateId {
        self.dfa.step(state, self.letter(label))
    }
}

/// Tie-break among safe joint actions when a proposal must be replaced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CorrectionOrder {
    /// First safe joint action by index (all agents' first action first).
    #[default]
    Fixed,
    /// Fewest agents changed relative to the proposal, then by index.
    Nearest,
}

impl CorrectionOrder {
    pub fn candidates(self, space: JointActionSpace, proposed: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..space.len()).collect();
        if self == CorrectionOrder::Nearest {
            let p = space.decode(proposed);
            all.sort_by_key(|&a| {
                let changed = space.decode(a).iter().zip(&p).filter(|(x, y)| x != y).count();
                (changed, a)
            });
        }
        all
    }
}

impl std::str::FromStr for CorrectionOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "nearest" => Ok(Self::Nearest),
            other => Err(format!("unknown correction order {other:?} (expected fixed or nearest)")),
        }
    }
}

/// Read access to a solved (or lazily solvable) game, as consumed by the
/// shield runtime. State ids are dense; the root is `root()`.
pub trait ShieldGame: Send + fmt::Debug {
    fn space(&self) -> JointActionSpace;
    /// Horizon `k` of the game (the last time index).
    fn depth(&self) -> usize;
    fn root(&self) -> u32;
    fn time(&self, state: u32) -> usize;
    fn label(&self, state: u32) -> &AbstractLabel;
    fn is_winning(&mut self, state: u32) -> bool;
    /// True iff every successor of `state` under `action` is winning.
    fn is_safe(&mut self, state: u32, action: usize) -> bool;
    fn successors(&mut self, state: u32, action: usize) -> Vec<u32>;
    /// `proposed` if safe, else the first safe action in the correction
    /// order, or `None` from a losing state.
    fn correct(&mut self, state: u32, proposed: usize) -> Option<usize>;
    /// JSON dump of the states built so far with their winning flags.
    fn to_json(&mut self) -> serde_json::Value;
}
