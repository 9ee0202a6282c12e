//! Per-agent actions and the mixed-radix encoding of joint actions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Stay,
    Up,
    Down,
    Left,
    Right,
    Brake,
}

/// Gridworld actions in default correction order.
pub const GRID_ACTIONS: [Action; 5] =
    [Action::Stay, Action::Up, Action::Down, Action::Left, Action::Right];

/// Particle actions in default correction order; braking is the physically
/// conservative fallback there, since `stay` keeps the current velocity.
pub const PARTICLE_ACTIONS: [Action; 6] = [
    Action::Brake,
    Action::Stay,
    Action::Up,
    Action::Down,
    Action::Left,
    Action::Right,
];

impl Action {
    /// Unit displacement for gridworld moves; `up` decreases `y`.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay | Action::Brake => (0, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Brake => "brake",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "stay" => Action::Stay,
            "up" => Action::Up,
            "down" => Action::Down,
            "left" => Action::Left,
            "right" => Action::Right,
            "brake" => Action::Brake,
            other => return Err(format!("unknown action {other:?}")),
        })
    }
}

pub type JointAction = SmallVec<[Action; 4]>;

/// Joint actions of `agents` agents over a shared per-agent action list.
///
/// Index order is lexicographic over agents (agent 0 most significant), so
/// index 0 is every agent taking the first action of the list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JointActionSpace {
    actions: &'static [Action],
    agents: usize,
}

impl JointActionSpace {
    pub fn new(actions: &'static [Action], agents: usize) -> Self {
        assert!(!actions.is_empty(), "action list must be nonempty");
        Self { actions, agents }
    }

    pub fn actions(&self) -> &'static [Action] {
        self.actions
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn len(&self) -> usize {
        self.actions.len().pow(self.agents as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn position(&self, action: Action) -> Option<usize> {
        self.actions.iter().position(|&a| a == action)
    }

    pub fn decode(&self, mut index: usize) -> JointAction {
        let base = self.actions.len();
        let mut out: JointAction = SmallVec::from_elem(self.actions[0], self.agents);
        for slot in out.iter_mut().rev() {
            *slot = self.actions[index % base];
            index /= base;
        }
        out
    }

    /// `None` if the arity is wrong or an action is outside the list.
    pub fn encode(&self, joint: &[Action]) -> Option<usize> {
        if joint.len() != self.agents {
            return None;
        }
        let base = self.actions.len();
        joint
            .iter()
            .try_fold(0usize, |acc, &a| Some(acc * base + self.position(a)?))
    }
}

pub fn format_joint(joint: &[Action]) -> String {
    joint.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")
}
