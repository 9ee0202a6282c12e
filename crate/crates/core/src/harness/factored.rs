//! Factored shielding: a static partition of the map into square regions,
//! one shield per region.
//!
//! Each region's shield sees only the agents currently inside it. A move
//! that leaves the region is judged by the destination region alone: it is
//! accepted only if no agent of that region occupies or neighbours the
//! destination cell and no earlier entrant claimed it. Jointly safe moves
//! across a border are therefore sometimes rejected.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use crate::abstraction::{AbstractLabel, AgentAbs, AgentCells};
use crate::actions::Action;
use crate::dynamics::DynamicsModel;
use crate::game::SpecMonitor;
use crate::manager::{recompute_shield, ManagerConfig, ManagerError};

#[derive(Clone, Debug, PartialEq)]
pub struct FactoredReport {
    pub actions: Vec<Action>,
    pub corrected: Vec<bool>,
    pub penalties: Vec<f64>,
    /// Region shields synthesized this step.
    pub recomputes: usize,
    pub synthesis_ms: f64,
    /// Synthesis time of the region shield that monitored each agent.
    pub agent_synthesis_ms: Vec<f64>,
    /// Agents whose border crossing was rejected.
    pub rejected: Vec<usize>,
}

#[derive(Debug)]
pub struct FactoredShield {
    region_size: i32,
    model: Arc<dyn DynamicsModel>,
    spec: Arc<SpecMonitor>,
    actions: &'static [Action],
    cfg: ManagerConfig,
    /// Region decisions by (label, internal proposal). Valid because the
    /// model is frozen during a run.
    memo: HashMap<(AbstractLabel, Vec<Action>), Vec<Action>>,
}

impl FactoredShield {
    pub fn new(
        region_size: usize,
        cfg: ManagerConfig,
        model: Arc<dyn DynamicsModel>,
        spec: Arc<SpecMonitor>,
        actions: &'static [Action],
    ) -> Self {
        assert!(region_size > 0, "regions need a positive size");
        Self { region_size: region_size as i32, model, spec, actions, cfg, memo: HashMap::new() }
    }

    pub fn region_of(&self, cell: &AgentAbs) -> (i32, i32) {
        let (x0, y0) = self.model.geometry().min();
        ((cell.x - x0).div_euclid(self.region_size), (cell.y - y0).div_euclid(self.region_size))
    }

    fn leaves_region(&self, cell: &AgentAbs, action: Action) -> bool {
        let home = self.region_of(cell);
        self.model.agent_successors(cell, action).iter().any(|c| self.region_of(c) != home)
    }

    pub fn step(&mut self, cells: &[AgentAbs], active: &[bool], proposed: &[Action]) -> Result<FactoredReport, ManagerError> {
        let n = cells.len();
        assert!(active.len() == n && proposed.len() == n, "per-agent inputs must align");
        let stay = self.actions[0];
        let crossing: Vec<bool> = (0..n).map(|i| active[i] && self.leaves_region(&cells[i], proposed[i])).collect();

        let mut regions: BTreeMap<(i32, i32), Vec<usize>> = BTreeMap::new();
        for i in (0..n).filter(|&i| active[i]) {
            regions.entry(self.region_of(&cells[i])).or_default().push(i);
        }

        // Internal games: crossing agents are assumed to hold their cell.
        let mut executed = proposed.to_vec();
        let mut recomputes = 0;
        let mut synthesis_ms = 0.0;
        let mut agent_synthesis_ms = vec![0.0; n];
        for group in regions.values() {
            let agents: AgentCells = group.iter().map(|&i| cells[i]).collect();
            let label = self.model.geometry().label(agents, None, false);
            let internal: Vec<Action> = group.iter().map(|&i| if crossing[i] { stay } else { proposed[i] }).collect();
            recomputes += 1;
            let key = (label, internal);
            let decided = match self.memo.get(&key) {
                Some(a) => a.clone(),
                None => {
                    let start = self.cfg.record_timing.then(Instant::now);
                    let mut shield =
                        recompute_shield(group.clone(), key.0.clone(), &self.model, &self.spec, self.actions, &self.cfg)?;
                    let out = shield.filter(&key.0, &key.1)?;
                    let ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
                    synthesis_ms += ms;
                    for &i in group {
                        agent_synthesis_ms[i] = ms;
                    }
                    let a = out.action.to_vec();
                    self.memo.insert(key.clone(), a.clone());
                    a
                }
            };
            let internal = key.1;
            let self_exit = group
                .iter()
                .zip(&internal)
                .zip(&decided)
                .any(|((&i, &p), &a)| a != p && self.leaves_region(&cells[i], a));
            if self_exit {
                // A correction that itself leaves the region cannot be
                // confirmed here; fall back to holding every cell.
                for &i in group {
                    executed[i] = stay;
                }
                continue;
            }
            for (&i, &a) in group.iter().zip(&decided) {
                executed[i] = if crossing[i] && a == stay { proposed[i] } else { a };
            }
        }

        // Border crossings, judged by the destination region in id order.
        let mut claimed: Vec<AgentAbs> = Vec::new();
        let mut rejected = Vec::new();
        let pending: Vec<usize> = (0..n).filter(|&i| crossing[i] && executed[i] == proposed[i]).collect();
        for i in pending {
            let targets = self.model.agent_successors(&cells[i], proposed[i]);
            let home = self.region_of(&cells[i]);
            let clear = targets.iter().all(|d| {
                let region = self.region_of(d);
                if region == home {
                    return true;
                }
                let crowded = (0..n).any(|j| {
                    j != i && active[j] && self.region_of(&cells[j]) == region && cells[j].chebyshev(d) <= 1
                });
                let taken = claimed.iter().any(|c| c.chebyshev(d) <= self.model.geometry().collision_radius());
                !crowded && !taken
            });
            if clear {
                claimed.extend(targets.iter().copied());
            } else {
                executed[i] = stay;
                rejected.push(i);
            }
        }

        let corrected: Vec<bool> = (0..n).map(|i| active[i] && executed[i] != proposed[i]).collect();
        let penalties = corrected.iter().map(|&c| if c { self.cfg.unsafe_penalty } else { 0.0 }).collect();
        Ok(FactoredReport {
            actions: executed,
            corrected,
            penalties,
            recomputes,
            synthesis_ms,
            agent_synthesis_ms,
            rejected,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::Geometry;
    use crate::actions::GRID_ACTIONS;
    use crate::dynamics::ExactGrid;

    fn fs(width: usize, height: usize) -> FactoredShield {
        let g = Geometry::grid(width, height, &[]);
        FactoredShield::new(
            3,
            ManagerConfig::default(),
            Arc::new(ExactGrid::new(g)),
            Arc::new(SpecMonitor::compile("G !collision").unwrap()),
            &GRID_ACTIONS,
        )
    }

    fn cells(list: &[(i32, i32)]) -> Vec<AgentAbs> {
        list.iter().map(|&(x, y)| AgentAbs::cell(x, y)).collect()
    }

    #[test]
    fn interior_move_passes() {
        let mut f = fs(9, 9);
        let r = f.step(&cells(&[(4, 4)]), &[true], &[Action::Up]).unwrap();
        assert_eq!(r.actions, vec![Action::Up]);
        assert_eq!(r.recomputes, 1);
    }

    #[test]
    fn crossing_into_an_empty_region_passes() {
        let mut f = fs(9, 9);
        let r = f.step(&cells(&[(2, 4)]), &[true], &[Action::Right]).unwrap();
        assert_eq!(r.actions, vec![Action::Right]);
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn following_across_a_border_is_rejected() {
        let mut f = fs(9, 9);
        let r = f.step(&cells(&[(2, 4), (3, 4)]), &[true; 2], &[Action::Right, Action::Right]).unwrap();
        assert_eq!(r.actions, vec![Action::Stay, Action::Right]);
        assert_eq!(r.rejected, vec![0]);
        assert_eq!(r.penalties, vec![-10.0, 0.0]);
    }

    #[test]
    fn two_entrants_cannot_claim_one_cell() {
        let mut f = fs(9, 9);
        let r = f.step(&cells(&[(2, 3), (3, 2)]), &[true; 2], &[Action::Right, Action::Down]).unwrap();
        assert_eq!(r.actions, vec![Action::Right, Action::Stay]);
        assert_eq!(r.rejected, vec![1]);
    }

    #[test]
    fn entering_next_to_a_resident_is_rejected() {
        let mut f = fs(9, 9);
        let r = f.step(&cells(&[(2, 4), (4, 4)]), &[true; 2], &[Action::Right, Action::Left]).unwrap();
        assert_eq!(r.actions, vec![Action::Stay, Action::Left]);
    }

    #[test]
    fn in_region_conflict_is_corrected() {
        let mut f = fs(9, 9);
        let r = f.step(&cells(&[(0, 0), (1, 0)]), &[true; 2], &[Action::Right, Action::Left]).unwrap();
        assert_eq!(r.actions, vec![Action::Stay, Action::Stay]);
    }
}
