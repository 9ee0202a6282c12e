//! Symbolic abstraction of raw environment states and bounded unrolling of a
//! dynamics model into layered successor relations.

use std::collections::HashMap;

use serde_json::{json, Value};
use smallvec::SmallVec;
use thiserror::Error;

use crate::actions::JointActionSpace;
use crate::dynamics::DynamicsModel;
use crate::env::{GridState, ParticleState};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("group of {size} agents exceeds max_group_size {max}")]
    GroupTooLarge { size: usize, max: usize },
    #[error("unrolling horizon must be at least 1")]
    ZeroHorizon,
    #[error("label has {label} agents but the action space has {space}")]
    Arity { label: usize, space: usize },
}

/// One agent's abstract state: its cell and, in continuous environments, the
/// sign of its velocity on each axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentAbs {
    pub x: i32,
    pub y: i32,
    pub heading: (i8, i8),
}

impl AgentAbs {
    pub fn cell(x: i32, y: i32) -> Self {
        Self { x, y, heading: (0, 0) }
    }

    pub fn chebyshev(&self, other: &AgentAbs) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn same_cell(&self, other: &AgentAbs) -> bool {
        self.x == other.x && self.y == other.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelProp {
    Collision,
    OutOfBounds,
    AtObstacle,
}

impl LabelProp {
    pub const ALL: [LabelProp; 3] = [LabelProp::Collision, LabelProp::OutOfBounds, LabelProp::AtObstacle];

    pub fn name(self) -> &'static str {
        match self {
            LabelProp::Collision => "collision",
            LabelProp::OutOfBounds => "out_of_bounds",
            LabelProp::AtObstacle => "at_obstacle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn bit(self) -> u8 {
        match self {
            LabelProp::Collision => 1,
            LabelProp::OutOfBounds => 2,
            LabelProp::AtObstacle => 4,
        }
    }
}

pub type AgentCells = SmallVec<[AgentAbs; 4]>;

/// Abstract state of a monitored group: per-agent entries in group order plus
/// propositions derived from them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbstractLabel {
    agents: AgentCells,
    props: u8,
}

impl AbstractLabel {
    pub fn agents(&self) -> &[AgentAbs] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn holds(&self, prop: LabelProp) -> bool {
        self.props & prop.bit() != 0
    }

    pub fn collision(&self) -> bool {
        self.holds(LabelProp::Collision)
    }

    pub fn out_of_bounds(&self) -> bool {
        self.holds(LabelProp::OutOfBounds)
    }

    pub fn at_obstacle(&self) -> bool {
        self.holds(LabelProp::AtObstacle)
    }

    pub fn to_json(&self) -> Value {
        let cells: Vec<Value> = self
            .agents
            .iter()
            .map(|a| json!({"x": a.x, "y": a.y, "heading": [a.heading.0, a.heading.1]}))
            .collect();
        json!({
            "agents": cells,
            "collision": self.collision(),
            "out_of_bounds": self.out_of_bounds(),
            "at_obstacle": self.at_obstacle(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighborhood {
    /// Self plus the four orthogonal neighbors.
    VonNeumann,
    /// The 3x3 block around the cell.
    Moore,
}

/// Static layout of the abstract state space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    min: (i32, i32),
    max: (i32, i32),
    obstacles: Vec<bool>,
    collision_radius: i32,
    neighborhood: Neighborhood,
    headings: bool,
}

impl Geometry {
    /// Gridworld: cells `0..width x 0..height`; collision is same-cell
    /// occupancy or a swap.
    pub fn grid(width: usize, height: usize, obstacles: &[(i32, i32)]) -> Self {
        let mut g = Self {
            min: (0, 0),
            max: (width as i32 - 1, height as i32 - 1),
            obstacles: vec![false; width * height],
            collision_radius: 0,
            neighborhood: Neighborhood::VonNeumann,
            headings: false,
        };
        for &(x, y) in obstacles {
            if let Some(i) = g.index(x, y) {
                g.obstacles[i] = true;
            }
        }
        g
    }

    /// Particle arena `[-bound, bound]^2` discretized into cells of
    /// `cell_width`. Collision is flagged for agents in the same or adjacent
    /// cells, which over-approximates physical overlap when the agent
    /// diameter does not exceed the cell width.
    pub fn particle(bound: f64, cell_width: f64) -> Self {
        let lo = (-bound / cell_width).floor() as i32;
        let hi = (bound / cell_width).ceil() as i32 - 1;
        let side = (hi - lo + 1) as usize;
        Self {
            min: (lo, lo),
            max: (hi, hi),
            obstacles: vec![false; side * side],
            collision_radius: 1,
            neighborhood: Neighborhood::Moore,
            headings: true,
        }
    }

    pub fn min(&self) -> (i32, i32) {
        self.min
    }

    pub fn max(&self) -> (i32, i32) {
        self.max
    }

    pub fn collision_radius(&self) -> i32 {
        self.collision_radius
    }

    pub fn neighborhood(&self) -> Neighborhood {
        self.neighborhood
    }

    pub fn has_headings(&self) -> bool {
        self.headings
    }

    fn index(&self, x: i32, y: i32) -> Option<usize> {
        if !self.in_bounds(x, y) {
            return None;
        }
        let w = (self.max.0 - self.min.0 + 1) as usize;
        Some((y - self.min.1) as usize * w + (x - self.min.0) as usize)
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= self.min.0 && x <= self.max.0 && y >= self.min.1 && y <= self.max.1
    }

    pub fn is_obstacle(&self, x: i32, y: i32) -> bool {
        self.index(x, y).is_some_and(|i| self.obstacles[i])
    }

    pub fn is_free(&self, x: i32, y: i32) -> bool {
        self.in_bounds(x, y) && !self.is_obstacle(x, y)
    }

    pub fn clamp(&self, x: i32, y: i32) -> (i32, i32) {
        (x.clamp(self.min.0, self.max.0), y.clamp(self.min.1, self.max.1))
    }

    /// True iff two agents are close enough to count as colliding.
    pub fn conflict(&self, a: &AgentAbs, b: &AgentAbs) -> bool {
        a.chebyshev(b) <= self.collision_radius
    }

    /// Builds a label and derives its propositions. `prev` holds the same
    /// agents one step earlier and enables swap detection.
    pub fn label(&self, agents: AgentCells, prev: Option<&[AgentAbs]>, out_of_bounds: bool) -> AbstractLabel {
        let mut props = 0;
        if out_of_bounds || agents.iter().any(|a| !self.in_bounds(a.x, a.y)) {
            props |= LabelProp::OutOfBounds.bit();
        }
        if agents.iter().any(|a| self.is_obstacle(a.x, a.y)) {
            props |= LabelProp::AtObstacle.bit();
        }
        if self.any_collision(&agents, prev) {
            props |= LabelProp::Collision.bit();
        }
        AbstractLabel { agents, props }
    }

    fn any_collision(&self, agents: &[AgentAbs], prev: Option<&[AgentAbs]>) -> bool {
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                if self.conflict(&agents[i], &agents[j]) {
                    return true;
                }
                if let Some(prev) = prev {
                    let swapped = prev[i].same_cell(&agents[j])
                        && prev[j].same_cell(&agents[i])
                        && !agents[i].same_cell(&agents[j]);
                    if swapped {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Gridworld abstraction: the identity on cells of the selected agents.
pub fn abstract_grid(state: &GridState, agents: &[usize], geometry: &Geometry) -> AbstractLabel {
    let cells: AgentCells = agents
        .iter()
        .map(|&i| {
            let (x, y) = state.cells[i];
            AgentAbs::cell(x, y)
        })
        .collect();
    geometry.label(cells, None, false)
}

fn sign_bucket(v: f64) -> i8 {
    const EPS: f64 = 1e-9;
    if v > EPS {
        1
    } else if v < -EPS {
        -1
    } else {
        0
    }
}

/// Particle abstraction: position floored onto cells of `cell_width`
/// (clamped to the arena, flagging `out_of_bounds`), velocity reduced to
/// per-axis signs.
pub fn abstract_particle(
    state: &ParticleState,
    agents: &[usize],
    geometry: &Geometry,
    cell_width: f64,
) -> AbstractLabel {
    let mut oob = false;
    let cells: AgentCells = agents
        .iter()
        .map(|&i| {
            let p = &state.agents[i];
            let x = (p.pos[0] / cell_width).floor() as i32;
            let y = (p.pos[1] / cell_width).floor() as i32;
            if !geometry.in_bounds(x, y) {
                oob = true;
            }
            let (x, y) = geometry.clamp(x, y);
            AgentAbs { x, y, heading: (sign_bucket(p.vel[0]), sign_bucket(p.vel[1])) }
        })
        .collect();
    geometry.label(cells, None, oob)
}

/// Layered successor relation of a model, `depth` steps from `root`.
#[derive(Clone, Debug)]
pub struct EnvUnrolling {
    space: JointActionSpace,
    layers: Vec<Vec<AbstractLabel>>,
    /// `edges[t][i][a]`: ids in layer `t + 1` reachable from label `i` of
    /// layer `t` under joint action `a`.
    edges: Vec<Vec<Vec<Vec<u32>>>>,
}

impl EnvUnrolling {
    pub fn root(&self) -> &AbstractLabel {
        &self.layers[0][0]
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn space(&self) -> JointActionSpace {
        self.space
    }

    pub fn layer(&self, t: usize) -> &[AbstractLabel] {
        &self.layers[t]
    }

    pub fn successors(&self, t: usize, label: usize, action: usize) -> &[u32] {
        &self.edges[t][label][action]
    }
}

/// Breadth-first expansion of `model` from `root` for `k` steps, merging
/// equal labels within each layer.
pub fn unroll(
    model: &dyn DynamicsModel,
    root: &AbstractLabel,
    k: usize,
    space: JointActionSpace,
    max_group_size: usize,
) -> Result<EnvUnrolling, AbstractionError> {
    if k == 0 {
        return Err(AbstractionError::ZeroHorizon);
    }
    if root.len() > max_group_size {
        return Err(AbstractionError::GroupTooLarge { size: root.len(), max: max_group_size });
    }
    if root.len() != space.agents() {
        return Err(AbstractionError::Arity { label: root.len(), space: space.agents() });
    }
    let mut layers = vec![vec![root.clone()]];
    let mut edges = Vec::with_capacity(k);
    for t in 0..k {
        let mut next: Vec<AbstractLabel> = Vec::new();
        let mut index: HashMap<AbstractLabel, u32> = HashMap::new();
        let mut layer_edges = Vec::with_capacity(layers[t].len());
        for label in &layers[t] {
            let mut per_action = Vec::with_capacity(space.len());
            for a in 0..space.len() {
                let joint = space.decode(a);
                let ids: Vec<u32> = model
                    .possible_successors(label, &joint)
                    .into_iter()
                    .map(|succ| {
                        *index.entry(succ).or_insert_with_key(|s| {
                            next.push(s.clone());
                            (next.len() - 1) as u32
                        })
                    })
                    .collect();
                per_action.push(ids);
            }
            layer_edges.push(per_action);
        }
        edges.push(layer_edges);
        layers.push(next);
    }
    Ok(EnvUnrolling { space, layers, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{Action, GRID_ACTIONS};
    use crate::dynamics::ExactGrid;
    use crate::env::{Particle, ParticleState};
    use smallvec::smallvec;
    use std::collections::BTreeSet;

    fn grid_state(cells: &[(i32, i32)]) -> GridState {
        GridState { cells: cells.to_vec(), done: vec![false; cells.len()], steps: 0 }
    }

    #[test]
    fn grid_abstraction_is_identity() {
        let g = Geometry::grid(5, 5, &[]);
        let l = abstract_grid(&grid_state(&[(1, 2), (3, 4)]), &[0, 1], &g);
        assert_eq!(l.agents(), &[AgentAbs::cell(1, 2), AgentAbs::cell(3, 4)]);
        assert!(!l.collision());
        let stacked = abstract_grid(&grid_state(&[(2, 2), (2, 2)]), &[0, 1], &g);
        assert!(stacked.collision());
    }

    #[test]
    fn particle_cells_floor_position() {
        let g = Geometry::particle(2.0, 0.5);
        let s = ParticleState {
            agents: vec![Particle { pos: [0.7, 1.3], vel: [0.2, -0.1] }],
            steps: 0,
        };
        let l = abstract_particle(&s, &[0], &g, 0.5);
        assert_eq!(l.agents()[0], AgentAbs { x: 1, y: 2, heading: (1, -1) });
        assert!(!l.out_of_bounds());

        let far = ParticleState { agents: vec![Particle { pos: [5.0, -0.2], vel: [0.0; 2] }], steps: 0 };
        let l = abstract_particle(&far, &[0], &g, 0.5);
        assert!(l.out_of_bounds());
        assert_eq!((l.agents()[0].x, l.agents()[0].y), (3, -1));
    }

    #[test]
    fn swaps_count_as_collision() {
        let g = Geometry::grid(3, 1, &[]);
        let prev = [AgentAbs::cell(0, 0), AgentAbs::cell(1, 0)];
        let swapped = g.label(smallvec![AgentAbs::cell(1, 0), AgentAbs::cell(0, 0)], Some(&prev), false);
        assert!(swapped.collision());
        let follow = g.label(smallvec![AgentAbs::cell(1, 0), AgentAbs::cell(2, 0)], Some(&prev), false);
        assert!(!follow.collision());
    }

    #[test]
    fn label_props_for_obstacles() {
        let g = Geometry::grid(3, 3, &[(1, 1)]);
        let l = g.label(smallvec![AgentAbs::cell(1, 1)], None, false);
        assert!(l.at_obstacle());
        assert!(!l.out_of_bounds());
    }

    #[test]
    fn corner_agent_one_step() {
        let g = Geometry::grid(3, 3, &[]);
        let model = ExactGrid::new(g.clone());
        let root = g.label(smallvec![AgentAbs::cell(0, 0)], None, false);
        let space = JointActionSpace::new(&GRID_ACTIONS, 1);
        let u = unroll(&model, &root, 1, space, 4).unwrap();
        let cells: BTreeSet<(i32, i32)> = u.layer(1).iter().map(|l| (l.agents()[0].x, l.agents()[0].y)).collect();
        assert_eq!(cells, BTreeSet::from([(0, 0), (0, 1), (1, 0)]));
        // up and left are blocked and resolve to staying.
        let stay = u.successors(0, 0, space.encode(&[Action::Stay]).unwrap());
        let up = u.successors(0, 0, space.encode(&[Action::Up]).unwrap());
        assert_eq!(stay, up);
    }

    #[test]
    fn stay_only_alphabet() {
        static STAY: [Action; 1] = [Action::Stay];
        let g = Geometry::grid(3, 3, &[]);
        let model = ExactGrid::new(g.clone());
        let root = g.label(smallvec![AgentAbs::cell(1, 1)], None, false);
        let u = unroll(&model, &root, 1, JointActionSpace::new(&STAY, 1), 4).unwrap();
        assert_eq!(u.layer(1), &[root]);
    }

    #[test]
    fn two_agents_can_collide_within_two_steps() {
        let g = Geometry::grid(4, 1, &[]);
        let model = ExactGrid::new(g.clone());
        let root = g.label(smallvec![AgentAbs::cell(0, 0), AgentAbs::cell(2, 0)], None, false);
        let u = unroll(&model, &root, 2, JointActionSpace::new(&GRID_ACTIONS, 2), 4).unwrap();
        assert!(u.layer(1).iter().any(|l| l.collision()));
        assert!(u.layer(2).iter().any(|l| l.collision()));
    }

    #[test]
    fn unroll_errors() {
        let g = Geometry::grid(3, 3, &[]);
        let model = ExactGrid::new(g.clone());
        let root = g.label(smallvec![AgentAbs::cell(0, 0), AgentAbs::cell(1, 0)], None, false);
        let space = JointActionSpace::new(&GRID_ACTIONS, 2);
        assert_eq!(
            unroll(&model, &root, 1, space, 1).unwrap_err(),
            AbstractionError::GroupTooLarge { size: 2, max: 1 }
        );
        assert_eq!(unroll(&model, &root, 0, space, 4).unwrap_err(), AbstractionError::ZeroHorizon);
        assert_eq!(
            unroll(&model, &root, 1, JointActionSpace::new(&GRID_ACTIONS, 1), 4).unwrap_err(),
            AbstractionError::Arity { label: 2, space: 1 }
        );
    }
}
