use rand::seq::SliceRandom;
use rand::Rng;

use super::{GridMap, MapError, StepOutcome, COLLISION_PENALTY, LIVING_PENALTY, TARGET_REWARD};
use crate::abstraction::Geometry;
use crate::actions::Action;
use crate::dynamics::grid_move;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    pub cells: Vec<(i32, i32)>,
    pub done: Vec<bool>,
    pub steps: usize,
}

/// Simultaneous-move gridworld. Agents that reach their target stay there
/// and no longer collide.
#[derive(Clone, Debug)]
pub struct GridEnv {
    map: GridMap,
    geometry: Geometry,
    step_limit: usize,
}

impl GridEnv {
    pub fn new(map: GridMap, step_limit: usize) -> Self {
        let geometry = map.geometry();
        Self { map, geometry, step_limit }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn num_agents(&self) -> usize {
        self.map.num_agents()
    }

    pub fn step_limit(&self) -> usize {
        self.step_limit
    }

    /// Agents at their listed start cells.
    pub fn reset(&self) -> GridState {
        let n = self.num_agents();
        let mut state = GridState { cells: self.map.starts.clone(), done: vec![false; n], steps: 0 };
        self.mark_arrivals(&mut state);
        state
    }

    /// Agents on uniformly drawn distinct free cells other than targets.
    pub fn reset_random<R: Rng>(&self, rng: &mut R) -> Result<GridState, MapError> {
        let n = self.num_agents();
        let mut free: Vec<(i32, i32)> =
            self.map.free_cells().into_iter().filter(|c| !self.map.targets.contains(c)).collect();
        if free.len() < n {
            return Err(MapError::NotEnoughCells { agents: n, free: free.len() });
        }
        let (picked, _) = free.partial_shuffle(rng, n);
        Ok(GridState { cells: picked.to_vec(), done: vec![false; n], steps: 0 })
    }

    fn mark_arrivals(&self, state: &mut GridState) {
        for (i, done) in state.done.iter_mut().enumerate() {
            *done |= state.cells[i] == self.map.targets[i];
        }
    }

    pub fn step(&self, state: &GridState, actions: &[Action]) -> StepOutcome<GridState> {
        let n = self.num_agents();
        assert_eq!(actions.len(), n, "one action per agent");
        let mut next = state.clone();
        next.steps += 1;
        for i in 0..n {
            if !state.done[i] {
                next.cells[i] = grid_move(&self.geometry, state.cells[i], actions[i]);
            }
        }
        let mut colliding = vec![false; n];
        let mut collisions = 0;
        for i in 0..n {
            for j in i + 1..n {
                if state.done[i] || state.done[j] {
                    continue;
                }
                let stacked = next.cells[i] == next.cells[j];
                let swapped = next.cells[i] == state.cells[j] && next.cells[j] == state.cells[i];
                if stacked || swapped {
                    colliding[i] = true;
                    colliding[j] = true;
                    collisions += 1;
                }
            }
        }
        let mut rewards = vec![0.0; n];
        let mut arrived = vec![false; n];
        for i in 0..n {
            if state.done[i] {
                continue;
            }
            rewards[i] = LIVING_PENALTY;
            if colliding[i] {
                rewards[i] += COLLISION_PENALTY;
            }
            if next.cells[i] == self.map.targets[i] {
                rewards[i] += TARGET_REWARD;
                arrived[i] = true;
                next.done[i] = true;
            }
        }
        let episode_done = next.done.iter().all(|&d| d) || next.steps >= self.step_limit;
        StepOutcome { state: next, rewards, colliding, collisions, arrived, episode_done }
    }
}
