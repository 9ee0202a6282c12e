//! Fully expanded games with dense tables.

use std::collections::HashMap;

use serde_json::{json, Value};

use super::{CorrectionOrder, GameError, ShieldGame, SpecMonitor};
use crate::abstraction::{AbstractLabel, EnvUnrolling};
use crate::actions::JointActionSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GameState {
    /// Index of the label within its unrolling layer.
    pub node: u32,
    pub spec: u32,
    pub t: u32,
}

#[derive(Clone, Debug)]
pub struct SafetyGame {
    unrolling: EnvUnrolling,
    /// Breadth-first order, so `t` is nondecreasing along the vector and
    /// state 0 is the root.
    states: Vec<GameState>,
    accepting: Vec<bool>,
    /// `succ[s * |A| + a]`, empty for horizon states.
    succ: Vec<Vec<u32>>,
}

impl SafetyGame {
    pub fn depth(&self) -> usize {
        self.unrolling.depth()
    }

    pub fn space(&self) -> JointActionSpace {
        self.unrolling.space()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, s: u32) -> GameState {
        self.states[s as usize]
    }

    pub fn states(&self) -> &[GameState] {
        &self.states
    }

    pub fn in_target(&self, s: u32) -> bool {
        self.accepting[s as usize]
    }

    pub fn label(&self, s: u32) -> &AbstractLabel {
        let g = self.states[s as usize];
        &self.unrolling.layer(g.t as usize)[g.node as usize]
    }

    pub fn successors(&self, s: u32, action: usize) -> &[u32] {
        &self.succ[s as usize * self.space().len() + action]
    }

    pub fn to_json(&self, win: Option<&WinningRegion>) -> Value {
        let a = self.space().len();
        let states: Vec<Value> = (0..self.states.len())
            .map(|s| {
                let g = self.states[s];
                json!({
                    "id": s,
                    "t": g.t,
                    "spec": g.spec,
                    "label": self.label(s as u32).to_json(),
                    "accepting": self.accepting[s],
                    "winning": win.map(|w| w.contains(s as u32)),
                })
            })
            .collect();
        let mut transitions = Vec::new();
        for s in 0..self.states.len() {
            for act in 0..a {
                let to = &self.succ[s * a + act];
                if !to.is_empty() {
                    transitions.push(json!({
                        "from": s,
                        "action": crate::actions::format_joint(&self.space().decode(act)),
                        "to": to,
                    }));
                }
            }
        }
        json!({"depth": self.depth(), "states": states, "transitions": transitions})
    }
}

/// Builds the reachable part of the product of an unrolling with a monitor.
/// The monitor reads the root label first and then each successor label.
pub fn build_game(unrolling: EnvUnrolling, spec: &SpecMonitor) -> SafetyGame {
    let space = unrolling.space();
    let a = space.len();
    let dfa = spec.dfa();
    let root = GameState { node: 0, spec: spec.start(unrolling.root()) as u32, t: 0 };
    let mut index: HashMap<GameState, u32> = HashMap::from([(root, 0)]);
    let mut states = vec![root];
    let mut succ: Vec<Vec<u32>> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let g = states[cursor];
        cursor += 1;
        if g.t as usize == unrolling.depth() {
            succ.extend((0..a).map(|_| Vec::new()));
            continue;
        }
        for act in 0..a {
            let mut row = Vec::new();
            for &node in unrolling.successors(g.t as usize, g.node as usize, act) {
                let label = &unrolling.layer(g.t as usize + 1)[node as usize];
                let next = GameState { node, spec: spec.step(g.spec as usize, label) as u32, t: g.t + 1 };
                let id = *index.entry(next).or_insert_with(|| {
                    states.push(next);
                    (states.len() - 1) as u32
                });
                if !row.contains(&id) {
                    row.push(id);
                }
            }
            succ.push(row);
        }
    }
    let accepting = states.iter().map(|g| dfa.is_accepting(g.spec as usize)).collect();
    SafetyGame { unrolling, states, accepting, succ }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WinningRegion {
    win: Vec<bool>,
}

impl WinningRegion {
    pub fn contains(&self, s: u32) -> bool {
        self.win[s as usize]
    }

    pub fn len(&self) -> usize {
        self.win.iter().filter(|&&w| w).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.win
    }
}

/// Backward induction over the time layers.
pub fn winning_region(game: &SafetyGame) -> WinningRegion {
    let n = game.num_states();
    let a = game.space().len();
    let depth = game.depth() as u32;
    let mut win = vec![false; n];
    for s in (0..n).rev() {
        if !game.accepting[s] {
            continue;
        }
        win[s] = game.states[s].t == depth
            || (0..a).any(|act| game.succ[s * a + act].iter().all(|&x| win[x as usize]));
    }
    WinningRegion { win }
}

/// Solved game with precomputed safe-action and fallback tables.
#[derive(Clone, Debug)]
pub struct DenseStrategy {
    game: SafetyGame,
    win: WinningRegion,
    safe: Vec<bool>,
    fallback: Vec<Option<u32>>,
    order: CorrectionOrder,
}

impl DenseStrategy {
    pub fn game(&self) -> &SafetyGame {
        &self.game
    }

    pub fn winning(&self) -> &WinningRegion {
        &self.win
    }
}

/// Tabulates the shield's output function. Fails if the root is losing.
pub fn extract_shield(
    game: SafetyGame,
    win: WinningRegion,
    order: CorrectionOrder,
) -> Result<DenseStrategy, GameError> {
    if !win.contains(0) {
        return Err(GameError::UnsafeStart { horizon: game.depth() });
    }
    let a = game.space().len();
    let n = game.num_states();
    let mut safe = vec![false; n * a];
    let mut fallback = vec![None; n];
    for s in 0..n {
        if game.states[s].t as usize == game.depth() {
            continue;
        }
        for act in 0..a {
            safe[s * a + act] = game.succ[s * a + act].iter().all(|&x| win.contains(x));
        }
        fallback[s] = (0..a).find(|&act| safe[s * a + act]).map(|x| x as u32);
    }
    Ok(DenseStrategy { game, win, safe, fallback, order })
}

impl ShieldGame for DenseStrategy {
    fn space(&self) -> JointActionSpace {
        self.game.space()
    }

    fn depth(&self) -> usize {
        self.game.depth()
    }

    fn root(&self) -> u32 {
        0
    }

    fn time(&self, state: u32) -> usize {
        self.game.state(state).t as usize
    }

    fn label(&self, state: u32) -> &AbstractLabel {
        self.game.label(state)
    }

    fn is_winning(&mut self, state: u32) -> bool {
        self.win.contains(state)
    }

    fn is_safe(&mut self, state: u32, action: usize) -> bool {
        self.safe[state as usize * self.game.space().len() + action]
    }

    fn successors(&mut self, state: u32, action: usize) -> Vec<u32> {
        self.game.successors(state, action).to_vec()
    }

    fn correct(&mut self, state: u32, proposed: usize) -> Option<usize> {
        if self.is_safe(state, proposed) {
            return Some(proposed);
        }
        match self.order {
            CorrectionOrder::Fixed => self.fallback[state as usize].map(|a| a as usize),
            CorrectionOrder::Nearest => self
                .order
                .candidates(self.game.space(), proposed)
                .into_iter()
                .find(|&a| self.safe[state as usize * self.game.space().len() + a]),
        }
    }

    fn to_json(&mut self) -> Value {
        self.game.to_json(Some(&self.win))
    }
}
