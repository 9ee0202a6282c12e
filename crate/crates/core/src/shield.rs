//! Runtime execution of a synthesized shield for one group of agents.

use smallvec::SmallVec;
use thiserror::Error;

use crate::abstraction::AbstractLabel;
use crate::actions::{Action, JointAction};
use crate::game::{GameError, ShieldGame};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ShieldError {
    #[error("shield for agents {agents:?} has expired")]
    Expired { agents: Vec<usize> },
    #[error("shield for agents {agents:?} did not predict the observed label {observed}")]
    LabelMismatch { agents: Vec<usize>, observed: String },
    #[error("proposal for agents {agents:?} is outside the shield's action alphabet")]
    BadProposal { agents: Vec<usize> },
}

/// Where the shield is in its game. After an action has been executed the
/// successor is only known once the next label is observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position {
    At(u32),
    After { state: u32, action: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filtered {
    pub action: JointAction,
    pub corrected: SmallVec<[bool; 4]>,
}

impl Filtered {
    pub fn any_corrected(&self) -> bool {
        self.corrected.iter().any(|&c| c)
    }
}

#[derive(Debug)]
pub struct Shield {
    game: Box<dyn ShieldGame>,
    agents: Vec<usize>,
    position: Position,
    remaining: usize,
}

fn describe(label: &AbstractLabel) -> String {
    let cells: Vec<String> = label.agents().iter().map(|a| format!("({},{})", a.x, a.y)).collect();
    format!("[{}]", cells.join(","))
}

impl Shield {
    /// Wraps a game whose root is the group's current label. `agents` must
    /// be sorted; `duration` is the number of steps the shield may be used.
    pub fn new(mut game: Box<dyn ShieldGame>, agents: Vec<usize>, duration: usize) -> Result<Self, GameError> {
        assert!(!agents.is_empty(), "a shield monitors at least one agent");
        assert!(agents.windows(2).all(|w| w[0] < w[1]), "agent ids must be sorted");
        assert!(duration <= game.depth(), "duration exceeds the game horizon");
        let root = game.root();
        if !game.is_winning(root) {
            return Err(GameError::UnsafeStart { horizon: game.depth() });
        }
        Ok(Self { game, agents, position: Position::At(root), remaining: duration })
    }

    /// Sorted ids of the monitored agents.
    pub fn signature(&self) -> &[usize] {
        &self.agents
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_expired(&self) -> bool {
        self.remaining == 0
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn game_mut(&mut self) -> &mut dyn ShieldGame {
        self.game.as_mut()
    }

    fn candidates(&mut self) -> Vec<u32> {
        match self.position {
            Position::At(s) => vec![s],
            Position::After { state, action } => self.game.successors(state, action),
        }
    }

    fn locate(&mut self, label: &AbstractLabel) -> Option<u32> {
        let found = self
            .candidates()
            .into_iter()
            .find(|&s| self.game.label(s).agents() == label.agents());
        if let Some(s) = found {
            self.position = Position::At(s);
        }
        found
    }

    /// True iff the shield is live and predicted `label` as the group's
    /// current state.
    pub fn covers(&mut self, label: &AbstractLabel) -> bool {
        !self.is_expired() && self.locate(label).is_some()
    }

    fn resolve(&mut self, label: &AbstractLabel) -> Result<u32, ShieldError> {
        if self.is_expired() {
            return Err(ShieldError::Expired { agents: self.agents.clone() });
        }
        self.locate(label).ok_or_else(|| ShieldError::LabelMismatch {
            agents: self.agents.clone(),
            observed: describe(label),
        })
    }

    /// Passes `proposed` through unchanged if every predicted outcome stays
    /// winning, otherwise replaces it by the first safe joint action.
    pub fn filter(&mut self, label: &AbstractLabel, proposed: &[Action]) -> Result<Filtered, ShieldError> {
        let s = self.resolve(label)?;
        let space = self.game.space();
        let p = space
            .encode(proposed)
            .ok_or_else(|| ShieldError::BadProposal { agents: self.agents.clone() })?;
        let chosen = self
            .game
            .correct(s, p)
            .expect("shield states are winning, so a safe action exists");
        let action = space.decode(chosen);
        let corrected = action.iter().zip(proposed).map(|(a, b)| a != b).collect();
        Ok(Filtered { action, corrected })
    }

    /// Moves past `executed` from the state matching `label`.
    pub fn advance(&mut self, label: &AbstractLabel, executed: &[Action]) -> Result<(), ShieldError> {
        let s = self.resolve(label)?;
        let action = self
            .game
            .space()
            .encode(executed)
            .ok_or_else(|| ShieldError::BadProposal { agents: self.agents.clone() })?;
        self.position = Position::After { state: s, action };
        self.remaining -= 1;
        Ok(())
    }

    /// Current state once resolved, with its winning flag.
    pub fn current_state(&mut self) -> Option<(u32, bool)> {
        match self.position {
            Position::At(s) => Some((s, self.game.is_winning(s))),
            Position::After { .. } => None,
        }
    }
}
