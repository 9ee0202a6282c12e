//! Possible-successor predictors over abstract labels.
//!
//! Models are per-agent factored: the joint successor set is the cross
//! product of each agent's successor set, relabelled by the geometry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::abstraction::{AbstractLabel, AgentAbs, AgentCells, Geometry, Neighborhood};
use crate::actions::Action;
use crate::env::Particle;

pub type AgentSuccessors = SmallVec<[AgentAbs; 8]>;

pub trait DynamicsModel: Send + Sync + fmt::Debug {
    fn geometry(&self) -> &Geometry;

    /// Sorted, deduplicated and never empty.
    fn agent_successors(&self, agent: &AgentAbs, action: Action) -> AgentSuccessors;

    /// Records one observed joint transition. Models that do not learn
    /// ignore it.
    fn observe(&mut self, _label: &AbstractLabel, _joint: &[Action], _next: &AbstractLabel) {}

    /// Every label the group may occupy after `joint`, in lexicographic
    /// order of the per-agent choices.
    fn possible_successors(&self, label: &AbstractLabel, joint: &[Action]) -> Vec<AbstractLabel> {
        let per_agent: SmallVec<[AgentSuccessors; 4]> = label
            .agents()
            .iter()
            .zip(joint)
            .map(|(agent, &action)| self.agent_successors(agent, action))
            .collect();
        let total: usize = per_agent.iter().map(|s| s.len()).product();
        let mut out = Vec::with_capacity(total);
        let mut pick: SmallVec<[usize; 4]> = SmallVec::from_elem(0, per_agent.len());
        loop {
            let cells: AgentCells = pick.iter().zip(&per_agent).map(|(&i, s)| s[i]).collect();
            out.push(self.geometry().label(cells, Some(label.agents()), false));
            let mut slot = per_agent.len();
            loop {
                if slot == 0 {
                    return out;
                }
                slot -= 1;
                pick[slot] += 1;
                if pick[slot] < per_agent[slot].len() {
                    break;
                }
                pick[slot] = 0;
            }
        }
    }
}

/// Closed-form gridworld kinematics: moves into walls or obstacles resolve
/// to staying in place.
#[derive(Clone, Debug)]
pub struct ExactGrid {
    geometry: Geometry,
}

impl ExactGrid {
    pub fn new(geometry: Geometry) -> Self {
        Self { geometry }
    }
}

/// Next cell of a gridworld agent under exact kinematics.
pub fn grid_move(geometry: &Geometry, cell: (i32, i32), action: Action) -> (i32, i32) {
    let (dx, dy) = action.delta();
    let (nx, ny) = (cell.0 + dx, cell.1 + dy);
    if geometry.is_free(nx, ny) {
        (nx, ny)
    } else {
        cell
    }
}

impl DynamicsModel for ExactGrid {
    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn agent_successors(&self, agent: &AgentAbs, action: Action) -> AgentSuccessors {
        let (x, y) = grid_move(&self.geometry, (agent.x, agent.y), action);
        smallvec::smallvec![AgentAbs { x, y, heading: agent.heading }]
    }
}

/// Observation counts keyed by (agent state, action), shared by all agents.
#[derive(Clone, Debug, Default)]
pub struct TransitionCounts {
    table: HashMap<(AgentAbs, Action), BTreeMap<AgentAbs, u32>>,
}

impl TransitionCounts {
    pub fn record(&mut self, from: AgentAbs, action: Action, to: AgentAbs) {
        *self.table.entry((from, action)).or_default().entry(to).or_insert(0) += 1;
    }

    pub fn successors(&self, from: &AgentAbs, action: Action) -> Option<&BTreeMap<AgentAbs, u32>> {
        self.table.get(&(*from, action))
    }

    pub fn count(&self, from: &AgentAbs, action: Action, to: &AgentAbs) -> u32 {
        self.successors(from, action).and_then(|m| m.get(to).copied()).unwrap_or(0)
    }

    pub fn total(&self, from: &AgentAbs, action: Action) -> u32 {
        self.successors(from, action).map_or(0, |m| m.values().sum())
    }

    pub fn num_keys(&self) -> usize {
        self.table.len()
    }
}

/// One per-agent transition of the replay dataset (`rollouts.csv`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub episode: usize,
    pub step: usize,
    pub agent_id: usize,
    pub cell_x: i32,
    pub cell_y: i32,
    pub action: Action,
    pub next_x: i32,
    pub next_y: i32,
}

/// Count-based model. A key with at least `n_min` observations predicts its
/// observed support; otherwise the pessimistic completion (the cell's
/// neighborhood) is added so that the true successor is always included.
#[derive(Clone, Debug)]
pub struct LearnedTabular {
    geometry: Geometry,
    counts: TransitionCounts,
    n_min: u32,
    completion: bool,
}

impl LearnedTabular {
    pub fn new(geometry: Geometry, n_min: u32, completion: bool) -> Self {
        Self { geometry, counts: TransitionCounts::default(), n_min, completion }
    }

    /// Rebuilds the count tables from a replay dataset.
    pub fn fit(geometry: Geometry, n_min: u32, completion: bool, data: &[RolloutRecord]) -> Self {
        let mut model = Self::new(geometry, n_min, completion);
        for r in data {
            model.record(
                AgentAbs::cell(r.cell_x, r.cell_y),
                r.action,
                AgentAbs::cell(r.next_x, r.next_y),
            );
        }
        model
    }

    pub fn record(&mut self, from: AgentAbs, action: Action, to: AgentAbs) {
        self.counts.record(from, action, to);
    }

    pub fn counts(&self) -> &TransitionCounts {
        &self.counts
    }

    pub fn n_min(&self) -> u32 {
        self.n_min
    }

    pub fn completion_enabled(&self) -> bool {
        self.completion
    }

    /// Over-approximation of where an agent can be one step later.
    pub fn completion(&self, agent: &AgentAbs) -> AgentSuccessors {
        let g = &self.geometry;
        let mut out = AgentSuccessors::new();
        match g.neighborhood() {
            Neighborhood::VonNeumann => {
                for (dx, dy) in [(0, 0), (0, -1), (0, 1), (-1, 0), (1, 0)] {
                    let (x, y) = (agent.x + dx, agent.y + dy);
                    if g.is_free(x, y) {
                        out.push(AgentAbs { x, y, heading: agent.heading });
                    }
                }
            }
            Neighborhood::Moore => {
                let headings: &[i8] = if g.has_headings() { &[-1, 0, 1] } else { &[0] };
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (x, y) = g.clamp(agent.x + dx, agent.y + dy);
                        if g.is_obstacle(x, y) {
                            continue;
                        }
                        for &hx in headings {
                            for &hy in headings {
                                out.push(AgentAbs { x, y, heading: (hx, hy) });
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            out.push(*agent);
        }
        out.sort();
        out.dedup();
        out
    }
}

impl DynamicsModel for LearnedTabular {
    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn agent_successors(&self, agent: &AgentAbs, action: Action) -> AgentSuccessors {
        let observed = self.counts.successors(agent, action);
        let total = self.counts.total(agent, action);
        let mut out: AgentSuccessors = observed.map(|m| m.keys().copied().collect()).unwrap_or_default();
        if total < self.n_min {
            if self.completion {
                out.extend(self.completion(agent));
                out.sort();
                out.dedup();
            } else if out.is_empty() {
                out.push(*agent);
            }
        }
        out
    }

    fn observe(&mut self, label: &AbstractLabel, joint: &[Action], next: &AbstractLabel) {
        assert_eq!(label.len(), next.len(), "observed labels differ in group size");
        for ((from, &action), to) in label.agents().iter().zip(joint).zip(next.agents()) {
            self.record(*from, action, *to);
        }
    }
}

/// One braking step: decelerates by `decel` against the velocity, stopping
/// exactly when the speed would cross zero. Position integrates the mean of
/// the old and new velocity, which makes the total stopping distance
/// `|v|^2 / (2 decel)` whenever the speed is a multiple of `decel`.
pub fn brake_step(p: &Particle, decel: f64, dt: f64) -> Particle {
    let speed = (p.vel[0] * p.vel[0] + p.vel[1] * p.vel[1]).sqrt();
    let vel = if speed <= decel * dt {
        [0.0, 0.0]
    } else {
        let scale = (speed - decel * dt) / speed;
        [p.vel[0] * scale, p.vel[1] * scale]
    };
    let pos = [
        p.pos[0] + 0.5 * (p.vel[0] + vel[0]) * dt,
        p.pos[1] + 0.5 * (p.vel[1] + vel[1]) * dt,
    ];
    Particle { pos, vel }
}

/// Full stopping trajectory from `p`, starting with `p` itself and ending at
/// the first state with zero velocity.
pub fn brake_successor(p: &Particle, decel: f64, dt: f64) -> Vec<Particle> {
    assert!(decel > 0.0 && dt > 0.0, "braking needs positive deceleration and time step");
    let mut out = vec![*p];
    let mut cur = *p;
    while cur.vel != [0.0, 0.0] {
        cur = brake_step(&cur, decel, dt);
        out.push(cur);
    }
    out
}
