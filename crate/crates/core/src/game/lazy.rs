//! Games expanded and solved on demand.
//!
//! Only the states and actions a query actually touches are generated.
//! Winning flags are memoized, so answers agree with the explicit solver on
//! every state that is built, but a typical filter query with a safe
//! proposal visits `O(k)` states instead of `O((|A| * branching)^k)`.

use std::collections::HashMap;
use std::sync::Arc;

use serde_json::{json, Value};

use super::{CorrectionOrder, ShieldGame, SpecMonitor};
use crate::abstraction::{AbstractLabel, AbstractionError};
use crate::actions::JointActionSpace;
use crate::dynamics::DynamicsModel;

#[derive(Debug)]
struct Node {
    label: AbstractLabel,
    spec: u32,
    t: u32,
    accepting: bool,
    succ: Vec<Option<Box<[u32]>>>,
    win: Option<bool>,
    /// First safe action in index order, once known.
    fallback: Option<Option<u32>>,
}

#[derive(Debug)]
pub struct LazyGame {
    model: Arc<dyn DynamicsModel>,
    spec: Arc<SpecMonitor>,
    space: JointActionSpace,
    depth: usize,
    order: CorrectionOrder,
    nodes: Vec<Node>,
    index: HashMap<(u32, u32, AbstractLabel), u32>,
}

impl LazyGame {
    pub fn new(
        model: Arc<dyn DynamicsModel>,
        spec: Arc<SpecMonitor>,
        root: AbstractLabel,
        depth: usize,
        space: JointActionSpace,
        order: CorrectionOrder,
        max_group_size: usize,
    ) -> Result<Self, AbstractionError> {
        if depth == 0 {
            return Err(AbstractionError::ZeroHorizon);
        }
        if root.len() > max_group_size {
            return Err(AbstractionError::GroupTooLarge { size: root.len(), max: max_group_size });
        }
        if root.len() != space.agents() {
            return Err(AbstractionError::Arity { label: root.len(), space: space.agents() });
        }
        let mut game = Self { model, spec, space, depth, order, nodes: Vec::new(), index: HashMap::new() };
        let start = game.spec.start(&root) as u32;
        game.intern(root, start, 0);
        Ok(game)
    }

    pub fn num_built(&self) -> usize {
        self.nodes.len()
    }

    fn intern(&mut self, label: AbstractLabel, spec: u32, t: u32) -> u32 {
        let key = (t, spec, label);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let (t, spec, label) = key;
        let accepting = self.spec.dfa().is_accepting(spec as usize);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { label: label.clone(), spec, t, accepting, succ: Vec::new(), win: None, fallback: None });
        self.index.insert((t, spec, label), id);
        id
    }

    fn expand(&mut self, s: u32, action: usize) -> Box<[u32]> {
        let node = &self.nodes[s as usize];
        if let Some(Some(row)) = node.succ.get(action) {
            return row.clone();
        }
        let t = node.t;
        let spec = node.spec;
        let joint = self.space.decode(action);
        let succ_labels = self.model.possible_successors(&node.label, &joint);
        let mut row: Vec<u32> = Vec::with_capacity(succ_labels.len());
        for label in succ_labels {
            let q = self.spec.step(spec as usize, &label) as u32;
            let id = self.intern(label, q, t + 1);
            if !row.contains(&id) {
                row.push(id);
            }
        }
        let row: Box<[u32]> = row.into_boxed_slice();
        let slots = &mut self.nodes[s as usize].succ;
        if slots.is_empty() {
            slots.resize(self.space.len(), None);
        }
        slots[action] = Some(row.clone());
        row
    }

    fn win(&mut self, s: u32) -> bool {
        if let Some(w) = self.nodes[s as usize].win {
            return w;
        }
        let node = &self.nodes[s as usize];
        let w = node.accepting && (node.t as usize == self.depth || self.first_safe(s).is_some());
        self.nodes[s as usize].win = Some(w);
        w
    }

    fn first_safe(&mut self, s: u32) -> Option<u32> {
        if let Some(f) = self.nodes[s as usize].fallback {
            return f;
        }
        let found = (0..self.space.len()).find(|&a| self.safe(s, a)).map(|a| a as u32);
        self.nodes[s as usize].fallback = Some(found);
        found
    }

    fn safe(&mut self, s: u32, action: usize) -> bool {
        let node = &self.nodes[s as usize];
        let t = node.t as usize;
        if t >= self.depth {
            return false;
        }
        let built = matches!(node.succ.get(action), Some(Some(_)));
        if t + 1 == self.depth && !built {
            // Horizon states win iff accepting; no need to store them.
            let joint = self.space.decode(action);
            let dfa = self.spec.dfa();
            return self
                .model
                .possible_successors(&node.label, &joint)
                .iter()
                .all(|l| dfa.is_accepting(self.spec.step(node.spec as usize, l)));
        }
        let row = self.expand(s, action);
        row.iter().all(|&x| self.win(x))
    }
}

impl ShieldGame for LazyGame {
    fn space(&self) -> JointActionSpace {
        self.space
    }

    fn depth(&self) -> usize {
        self.depth
    }

    fn root(&self) -> u32 {
        0
    }

    fn time(&self, state: u32) -> usize {
        self.nodes[state as usize].t as usize
    }

    fn label(&self, state: u32) -> &AbstractLabel {
        &self.nodes[state as usize].label
    }

    fn is_winning(&mut self, state: u32) -> bool {
        self.win(state)
    }

    fn is_safe(&mut self, state: u32, action: usize) -> bool {
        self.safe(state, action)
    }

    fn successors(&mut self, state: u32, action: usize) -> Vec<u32> {
        if self.time(state) >= self.depth {
            return Vec::new();
        }
        self.expand(state, action).to_vec()
    }

    fn correct(&mut self, state: u32, proposed: usize) -> Option<usize> {
        if self.safe(state, proposed) {
            return Some(proposed);
        }
        match self.order {
            CorrectionOrder::Fixed => self.first_safe(state).map(|a| a as usize),
            CorrectionOrder::Nearest => self
                .order
                .candidates(self.space, proposed)
                .into_iter()
                .find(|&a| self.safe(state, a)),
        }
    }

    fn to_json(&mut self) -> Value {
        let states: Vec<Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                json!({
                    "id": id,
                    "t": n.t,
                    "spec": n.spec,
                    "label": n.label.to_json(),
                    "accepting": n.accepting,
                    "winning": n.win,
                })
            })
            .collect();
        let mut transitions = Vec::new();
        for (id, n) in self.nodes.iter().enumerate() {
            for (a, row) in n.succ.iter().enumerate() {
                if let Some(row) = row {
                    transitions.push(json!({
                        "from": id,
                        "action": crate::actions::format_joint(&self.space.decode(a)),
                        "to": row.to_vec(),
                    }));
                }
            }
        }
        json!({"depth": self.depth, "lazy": true, "states": states, "transitions": transitions})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{unroll, AgentAbs, Geometry};
    use crate::actions::{Action, GRID_ACTIONS};
    use crate::dynamics::{ExactGrid, LearnedTabular};
    use crate::game::{build_game, winning_region};
    use proptest::prelude::*;
    use smallvec::SmallVec;

    fn root(g: &Geometry, cells: &[(i32, i32)]) -> AbstractLabel {
        let agents: SmallVec<[AgentAbs; 4]> = cells.iter().map(|&(x, y)| AgentAbs::cell(x, y)).collect();
        g.label(agents, None, false)
    }

    #[test]
    fn head_on_is_corrected_to_stay() {
        let g = Geometry::grid(2, 1, &[]);
        let spec = Arc::new(SpecMonitor::compile("G !collision").unwrap());
        let space = JointActionSpace::new(&GRID_ACTIONS, 2);
        let mut game = LazyGame::new(
            Arc::new(ExactGrid::new(g.clone())),
            spec,
            root(&g, &[(0, 0), (1, 0)]),
            2,
            space,
            CorrectionOrder::Fixed,
            4,
        )
        .unwrap();
        let rl = space.encode(&[Action::Right, Action::Left]).unwrap();
        assert!(game.is_winning(0));
        assert_eq!(game.correct(0, rl), Some(0));
        let safe = space.encode(&[Action::Left, Action::Stay]).unwrap();
        assert_eq!(game.correct(0, safe), Some(safe));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn agrees_with_explicit_solver(
            cells in proptest::collection::vec((0i32..3, 0i32..3), 2),
            k in 1usize..3,
            learned in any::<bool>(),
            queries in proptest::collection::vec(0usize..25, 1..6),
        ) {
            let g = Geometry::grid(3, 3, &[]);
            let model: Arc<dyn DynamicsModel> = if learned {
                Arc::new(LearnedTabular::new(g.clone(), 5, true))
            } else {
                Arc::new(ExactGrid::new(g.clone()))
            };
            let spec = Arc::new(SpecMonitor::compile("G !collision").unwrap());
            let space = JointActionSpace::new(&GRID_ACTIONS, 2);
            let r = root(&g, &cells);
            let explicit = build_game(unroll(model.as_ref(), &r, k, space, 4).unwrap(), &spec);
            let w = winning_region(&explicit);
            let mut lazy = LazyGame::new(model, spec, r, k, space, CorrectionOrder::Fixed, 4).unwrap();
            prop_assert_eq!(lazy.is_winning(0), w.contains(0));
            for a in queries {
                let expect = explicit.successors(0, a).iter().all(|&x| w.contains(x));
                prop_assert_eq!(lazy.is_safe(0, a), expect);
            }
        }
    }
}
