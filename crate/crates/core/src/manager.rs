//! Per-step regrouping of agents and management of the live shield pool.
//!
//! Each step the active agents are clustered by proximity; a group keeps its
//! shield while the shield is live and predicted the group's current label,
//! and otherwise gets a freshly synthesized one. Groups are then filtered
//! independently and their shields advanced with the executed actions.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};
use smallvec::SmallVec;
use thiserror::Error;

use crate::abstraction::{unroll, AbstractLabel, AgentAbs, AgentCells, Geometry};
use crate::actions::{format_joint, Action, JointActionSpace};
use crate::dynamics::DynamicsModel;
use crate::game::{
    build_game, extract_shield, winning_region, CorrectionOrder, GameError, LazyGame, ShieldGame, SpecMonitor,
};
use crate::shield::{Shield, ShieldError};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ManagerError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
}

impl ManagerError {
    pub fn is_unsafe_start(&self) -> bool {
        matches!(self, ManagerError::Game(GameError::UnsafeStart { .. }))
    }

    pub fn is_label_mismatch(&self) -> bool {
        matches!(self, ManagerError::Shield(ShieldError::LabelMismatch { .. }))
    }
}

/// What to do when a live shield did not predict its group's label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MismatchPolicy {
    /// Fail the step with `LabelMismatch`.
    #[default]
    Abort,
    /// Synthesize a new shield from the observed label.
    Recompute,
}

impl FromStr for MismatchPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abort" => Ok(Self::Abort),
            "recompute" => Ok(Self::Recompute),
            other => Err(format!("unknown mismatch policy {other:?} (expected abort or recompute)")),
        }
    }
}

/// How games are solved when a shield is synthesized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SynthesisMode {
    /// Explicit tables when the game is small, on-demand otherwise.
    #[default]
    Auto,
    Eager,
    Lazy,
}

impl FromStr for SynthesisMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "eager" => Ok(Self::Eager),
            "lazy" => Ok(Self::Lazy),
            other => Err(format!("unknown synthesis mode {other:?} (expected auto, eager or lazy)")),
        }
    }
}

/// Largest `(|A|^m)^k` for which `Auto` builds explicit tables.
pub const EAGER_LIMIT: usize = 125;

#[derive(Clone, Debug, PartialEq)]
pub struct ManagerConfig {
    pub k: usize,
    pub max_group_size: usize,
    pub unsafe_penalty: f64,
    /// Solve one extra step so horizon states keep a safe continuation.
    pub lookahead_margin: bool,
    pub mismatch: MismatchPolicy,
    pub synthesis: SynthesisMode,
    pub correction: CorrectionOrder,
    pub record_timing: bool,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_group_size: 4,
            unsafe_penalty: -10.0,
            lookahead_margin: false,
            mismatch: MismatchPolicy::Abort,
            synthesis: SynthesisMode::Auto,
            correction: CorrectionOrder::Fixed,
            record_timing: false,
        }
    }
}

impl ManagerConfig {
    fn game_depth(&self) -> usize {
        self.k + self.lookahead_margin as usize
    }
}

/// Partition of the active agents; each group is sorted and groups are
/// ordered by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub groups: Vec<Vec<usize>>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups active agents whose cells are within Chebyshev distance
/// `2 * horizon + collision_radius`: farther apart, no joint action sequence
/// of length `horizon` can bring them into conflict.
pub fn cluster_agents(cells: &[AgentAbs], active: &[bool], horizon: usize, collision_radius: i32) -> ClusterAssignment {
    let n = cells.len();
    let threshold = 2 * horizon as i32 + collision_radius;
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if active[i] && active[j] && cells[i].chebyshev(&cells[j]) <= threshold {
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: Vec<Option<usize>> = vec![None; n];
    for i in (0..n).filter(|&i| active[i]) {
        let root = uf.find(i);
        match slot[root] {
            Some(g) => groups[g].push(i),
            None => {
                slot[root] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    ClusterAssignment { groups }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecomputeReason {
    NewGroup,
    Expired,
    Escaped,
}

impl RecomputeReason {
    pub fn name(self) -> &'static str {
        match self {
            RecomputeReason::NewGroup => "new_group",
            RecomputeReason::Expired => "expired",
            RecomputeReason::Escaped => "escaped",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plan {
    /// Keep the pool shield at this index.
    Reuse(usize),
    Recompute(RecomputeReason),
}

/// Live shields, at most one per group signature.
#[derive(Debug, Default)]
pub struct ShieldPool {
    shields: Vec<Shield>,
}

impl ShieldPool {
    pub fn len(&self) -> usize {
        self.shields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shields.is_empty()
    }

    pub fn shields(&self) -> &[Shield] {
        &self.shields
    }

    pub fn shields_mut(&mut self) -> &mut [Shield] {
        &mut self.shields
    }

    pub fn insert(&mut self, shield: Shield) {
        self.shields.retain(|s| s.signature() != shield.signature());
        self.shields.push(shield);
    }

    pub fn clear(&mut self) {
        self.shields.clear();
    }

    fn position(&self, signature: &[usize]) -> Option<usize> {
        self.shields.iter().position(|s| s.signature() == signature)
    }
}

/// Decides, per group, whether a pool shield can keep monitoring it.
pub fn reconcile(pool: &mut ShieldPool, clusters: &ClusterAssignment, labels: &[AbstractLabel]) -> Vec<Plan> {
    clusters
        .groups
        .iter()
        .zip(labels)
        .map(|(group, label)| match pool.position(group) {
            None => Plan::Recompute(RecomputeReason::NewGroup),
            Some(i) if pool.shields[i].is_expired() => Plan::Recompute(RecomputeReason::Expired),
            Some(i) if pool.shields[i].covers(label) => Plan::Reuse(i),
            Some(_) => Plan::Recompute(RecomputeReason::Escaped),
        })
        .collect()
}

/// Synthesizes a shield for `agents` rooted at their current `label`.
pub fn recompute_shield(
    agents: Vec<usize>,
    label: AbstractLabel,
    model: &Arc<dyn DynamicsModel>,
    spec: &Arc<SpecMonitor>,
    actions: &'static [Action],
    cfg: &ManagerConfig,
) -> Result<Shield, GameError> {
    let depth = cfg.game_depth();
    let space = JointActionSpace::new(actions, agents.len());
    if agents.len() > cfg.max_group_size {
        return Err(crate::abstraction::AbstractionError::GroupTooLarge {
            size: agents.len(),
            max: cfg.max_group_size,
        }
        .into());
    }
    let eager = match cfg.synthesis {
        SynthesisMode::Eager => true,
        SynthesisMode::Lazy => false,
        SynthesisMode::Auto => {
            let size = (space.len() as f64).powi(depth as i32);
            size <= EAGER_LIMIT as f64
        }
    };
    let game: Box<dyn ShieldGame> = if eager {
        let unrolling = unroll(model.as_ref(), &label, depth, space, cfg.max_group_size)?;
        let game = build_game(unrolling, spec);
        let win = winning_region(&game);
        Box::new(extract_shield(game, win, cfg.correction)?)
    } else {
        Box::new(LazyGame::new(
            model.clone(),
            spec.clone(),
            label,
            depth,
            space,
            cfg.correction,
            cfg.max_group_size,
        )?)
    };
    Shield::new(game, agents, cfg.k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupEvent {
    pub agents: Vec<usize>,
    pub plan: Plan,
    pub corrected: Vec<usize>,
    pub synthesis_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Executed joint action (proposals of inactive agents pass through).
    pub actions: Vec<Action>,
    pub corrected: Vec<bool>,
    /// `unsafe_penalty` for corrected agents, zero otherwise.
    pub penalties: Vec<f64>,
    pub groups: Vec<GroupEvent>,
    pub recomputes: usize,
    pub synthesis_ms: f64,
}

impl StepReport {
    pub fn to_json(&self, episode: usize, step: usize) -> Value {
        let groups: Vec<Value> = self
            .groups
            .iter()
            .map(|g| {
                let decision = match g.plan {
                    Plan::Reuse(_) => "reuse".to_string(),
                    Plan::Recompute(r) => format!("recompute:{}", r.name()),
                };
                json!({
                    "agents": g.agents,
                    "decision": decision,
                    "corrected": g.corrected,
                    "synthesis_ms": g.synthesis_ms,
                })
            })
            .collect();
        json!({
            "episode": episode,
            "step": step,
            "actions": format_joint(&self.actions),
            "groups": groups,
        })
    }
}

/// Owns the shield pool and runs one shielding round per environment step.
#[derive(Debug)]
pub struct DynamicManager {
    cfg: ManagerConfig,
    model: Arc<dyn DynamicsModel>,
    spec: Arc<SpecMonitor>,
    actions: &'static [Action],
    pool: ShieldPool,
}

impl DynamicManager {
    pub fn new(
        cfg: ManagerConfig,
        model: Arc<dyn DynamicsModel>,
        spec: Arc<SpecMonitor>,
        actions: &'static [Action],
    ) -> Self {
        Self { cfg, model, spec, actions, pool: ShieldPool::default() }
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &ShieldPool {
        &self.pool
    }

    pub fn pool_mut(&mut self) -> &mut ShieldPool {
        &mut self.pool
    }

    pub fn geometry(&self) -> &Geometry {
        self.model.geometry()
    }

    /// Drops all shields, e.g. at an episode boundary.
    pub fn reset(&mut self) {
        self.pool.clear();
    }

    pub fn group_label(&self, cells: &[AgentAbs], group: &[usize]) -> AbstractLabel {
        let agents: AgentCells = group.iter().map(|&i| cells[i]).collect();
        self.geometry().label(agents, None, false)
    }

    /// Clusters, reconciles, synthesizes and filters. `cells` holds every
    /// agent's abstract state; inactive agents are not shielded.
    pub fn shield_step(
        &mut self,
        cells: &[AgentAbs],
        active: &[bool],
        proposed: &[Action],
    ) -> Result<StepReport, ManagerError> {
        let n = cells.len();
        assert!(active.len() == n && proposed.len() == n, "per-agent inputs must align");
        let clusters = cluster_agents(cells, active, self.cfg.game_depth(), self.geometry().collision_radius());
        let labels: Vec<AbstractLabel> = clusters.groups.iter().map(|g| self.group_label(cells, g)).collect();
        let plans = reconcile(&mut self.pool, &clusters, &labels);

        if self.cfg.mismatch == MismatchPolicy::Abort {
            for ((group, label), plan) in clusters.groups.iter().zip(&labels).zip(&plans) {
                if *plan == Plan::Recompute(RecomputeReason::Escaped) {
                    let cells: Vec<String> = label.agents().iter().map(|a| format!("({},{})", a.x, a.y)).collect();
                    return Err(ShieldError::LabelMismatch {
                        agents: group.clone(),
                        observed: format!("[{}]", cells.join(",")),
                    }
                    .into());
                }
            }
        }

        // Reused shields leave the old pool; everything else is dropped.
        let mut old: Vec<Option<Shield>> = std::mem::take(&mut self.pool.shields).into_iter().map(Some).collect();
        let mut slots: Vec<Option<Shield>> = plans
            .iter()
            .map(|p| match *p {
                Plan::Reuse(i) => old[i].take(),
                Plan::Recompute(_) => None,
            })
            .collect();

        let todo: Vec<usize> = (0..plans.len()).filter(|&g| slots[g].is_none()).collect();
        let (model, spec, actions, cfg) = (&self.model, &self.spec, self.actions, &self.cfg);
        let fresh: Vec<(usize, Result<Shield, GameError>, f64)> = todo
            .par_iter()
            .map(|&g| {
                let start = cfg.record_timing.then(Instant::now);
                let shield = recompute_shield(clusters.groups[g].clone(), labels[g].clone(), model, spec, actions, cfg);
                let ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
                (g, shield, ms)
            })
            .collect();
        let mut synth_ms = vec![0.0; plans.len()];
        for (g, shield, ms) in fresh {
            slots[g] = Some(shield?);
            synth_ms[g] = ms;
        }
        let mut shields: Vec<Shield> = slots.into_iter().map(|s| s.expect("every group has a shield")).collect();

        let filtered: Vec<Result<SmallVec<[Action; 4]>, ShieldError>> = shields
            .par_iter_mut()
            .zip(clusters.groups.par_iter())
            .zip(labels.par_iter())
            .map(|((shield, group), label)| {
                let proposal: SmallVec<[Action; 4]> = group.iter().map(|&i| proposed[i]).collect();
                let out = shield.filter(label, &proposal)?;
                shield.advance(label, &out.action)?;
                Ok(out.action)
            })
            .collect();

        let mut executed = proposed.to_vec();
        let mut corrected = vec![false; n];
        let mut groups = Vec::with_capacity(plans.len());
        for (g, result) in filtered.into_iter().enumerate() {
            let joint = result?;
            let mut fixed = Vec::new();
            for (&agent, &a) in clusters.groups[g].iter().zip(&joint) {
                if a != proposed[agent] {
                    corrected[agent] = true;
                    fixed.push(agent);
                }
                executed[agent] = a;
            }
            groups.push(GroupEvent {
                agents: clusters.groups[g].clone(),
                plan: plans[g],
                corrected: fixed,
                synthesis_ms: synth_ms[g],
            });
        }
        self.pool.shields = std::mem::take(&mut shields);
        let penalties = corrected.iter().map(|&c| if c { self.cfg.unsafe_penalty } else { 0.0 }).collect();
        Ok(StepReport {
            actions: executed,
            corrected,
            penalties,
            groups,
            recomputes: todo.len(),
            synthesis_ms: synth_ms.iter().sum(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::GRID_ACTIONS;
    use crate::dynamics::ExactGrid;

    fn cells(list: &[(i32, i32)]) -> Vec<AgentAbs> {
        list.iter().map(|&(x, y)| AgentAbs::cell(x, y)).collect()
    }

    fn manager(width: usize, height: usize, k: usize) -> DynamicManager {
        let g = Geometry::grid(width, height, &[]);
        DynamicManager::new(
            ManagerConfig { k, ..Default::default() },
            Arc::new(ExactGrid::new(g)),
            Arc::new(SpecMonitor::compile("G !collision").unwrap()),
            &GRID_ACTIONS,
        )
    }

    #[test]
    fn clustering_threshold() {
        let k = 2;
        let far = cluster_agents(&cells(&[(0, 0), (5, 0)]), &[true; 2], k, 0);
        assert_eq!(far.groups, vec![vec![0], vec![1]]);
        let near = cluster_agents(&cells(&[(0, 0), (1, 0)]), &[true; 2], k, 0);
        assert_eq!(near.groups, vec![vec![0, 1]]);
        let chain = cluster_agents(&cells(&[(0, 0), (8, 0), (4, 0)]), &[true; 3], k, 0);
        assert_eq!(chain.groups, vec![vec![0, 1, 2]]);
        let inactive = cluster_agents(&cells(&[(0, 0), (1, 0)]), &[true, false], k, 0);
        assert_eq!(inactive.groups, vec![vec![0]]);
    }

    #[test]
    fn reconcile_decisions() {
        let mut m = manager(10, 1, 2);
        let c = cells(&[(0, 0), (9, 0)]);
        let r = m.shield_step(&c, &[true; 2], &[Action::Stay, Action::Stay]).unwrap();
        assert!(r.groups.iter().all(|g| g.plan == Plan::Recompute(RecomputeReason::NewGroup)));
        let r = m.shield_step(&c, &[true; 2], &[Action::Stay, Action::Stay]).unwrap();
        assert!(r.groups.iter().all(|g| matches!(g.plan, Plan::Reuse(_))));
        let r = m.shield_step(&c, &[true; 2], &[Action::Stay, Action::Stay]).unwrap();
        assert!(r.groups.iter().all(|g| g.plan == Plan::Recompute(RecomputeReason::Expired)));
        // Agents brought together form a new pair group.
        let close = cells(&[(3, 0), (5, 0)]);
        let r = m.shield_step(&close, &[true; 2], &[Action::Stay, Action::Stay]).unwrap();
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].plan, Plan::Recompute(RecomputeReason::NewGroup));
    }

    #[test]
    fn escape_aborts_or_recomputes() {
        let mut m = manager(10, 1, 3);
        m.shield_step(&cells(&[(0, 0)]), &[true], &[Action::Stay]).unwrap();
        let err = m.shield_step(&cells(&[(2, 0)]), &[true], &[Action::Stay]).unwrap_err();
        assert!(err.is_label_mismatch());
        let mut m = manager(10, 1, 3);
        m.cfg.mismatch = MismatchPolicy::Recompute;
        m.shield_step(&cells(&[(0, 0)]), &[true], &[Action::Stay]).unwrap();
        let r = m.shield_step(&cells(&[(2, 0)]), &[true], &[Action::Stay]).unwrap();
        assert_eq!(r.groups[0].plan, Plan::Recompute(RecomputeReason::Escaped));
    }

    #[test]
    fn head_on_pair_is_stopped_and_penalized() {
        let mut m = manager(2, 1, 1);
        let r = m.shield_step(&cells(&[(0, 0), (1, 0)]), &[true; 2], &[Action::Right, Action::Left]).unwrap();
        assert_eq!(r.actions, vec![Action::Stay, Action::Stay]);
        assert_eq!(r.penalties, vec![-10.0, -10.0]);
    }

    #[test]
    fn safe_proposals_pass_and_count_down() {
        let mut m = manager(8, 8, 2);
        let r = m.shield_step(&cells(&[(0, 0), (7, 7)]), &[true; 2], &[Action::Right, Action::Up]).unwrap();
        assert_eq!(r.actions, vec![Action::Right, Action::Up]);
        assert_eq!(r.penalties, vec![0.0, 0.0]);
        assert!(m.pool().shields().iter().all(|s| s.remaining() == 1));
    }

    #[test]
    fn stacked_agents_are_an_unsafe_start() {
        let mut m = manager(3, 3, 2);
        let err = m.shield_step(&cells(&[(1, 1), (1, 1)]), &[true; 2], &[Action::Stay; 2]).unwrap_err();
        assert!(err.is_unsafe_start());
    }

    #[test]
    fn oversized_groups_are_rejected() {
        let mut m = manager(6, 1, 1);
        m.cfg.max_group_size = 2;
        let err = m.shield_step(&cells(&[(0, 0), (1, 0), (2, 0)]), &[true; 3], &[Action::Stay; 3]).unwrap_err();
        assert!(matches!(err, ManagerError::Game(GameError::Abstraction(_))));
    }

    #[test]
    fn far_pairs_filter_independently() {
        let mut joint = manager(12, 1, 1);
        let c = cells(&[(0, 0), (1, 0), (10, 0), (11, 0)]);
        let p = [Action::Right, Action::Left, Action::Right, Action::Stay];
        let r = joint.shield_step(&c, &[true; 4], &p).unwrap();
        assert_eq!(r.groups.len(), 2);
        let mut left = manager(12, 1, 1);
        let a = left.shield_step(&c[..2], &[true; 2], &p[..2]).unwrap();
        let mut right = manager(12, 1, 1);
        let b = right.shield_step(&c[2..], &[true; 2], &p[2..]).unwrap();
        assert_eq!(&r.actions[..2], a.actions.as_slice());
        assert_eq!(&r.actions[2..], b.actions.as_slice());
    }
}
