use rand::Rng;

use super::StepOutcome;
use crate::actions::Action;
use crate::dynamics::brake_step;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub agents: Vec<Particle>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleConfig {
    pub agents: usize,
    /// Arena half-width; positions beyond it are penalized.
    pub bound: f64,
    pub dt: f64,
    /// Velocity change per acceleration action, per axis.
    pub accel: f64,
    /// Per-axis speed limit.
    pub v_max: f64,
    pub brake_decel: f64,
    /// Physical radius; two agents collide when their centers are closer
    /// than twice this.
    pub radius: f64,
    pub goal_radius: f64,
    pub collision_penalty: f64,
    pub out_of_range_penalty: f64,
    pub step_limit: usize,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            agents: 2,
            bound: 2.0,
            dt: 1.0,
            accel: 0.25,
            v_max: 0.5,
            brake_decel: 0.5,
            radius: 0.15,
            goal_radius: 0.25,
            collision_penalty: -10.0,
            out_of_range_penalty: -1.0,
            step_limit: 50,
        }
    }
}

/// Point-mass agents with velocity: `stay` keeps the current velocity,
/// acceleration actions nudge one axis and `brake` decelerates.
#[derive(Clone, Debug)]
pub struct ParticleEnv {
    cfg: ParticleConfig,
    starts: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
}

impl ParticleEnv {
    /// Agents evenly spaced on a circle, each heading for the antipodal
    /// point so that all paths cross near the center.
    pub fn new(cfg: ParticleConfig) -> Self {
        let n = cfg.agents;
        let r = 0.75 * cfg.bound;
        let mut starts = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            let theta = std::f64::consts::TAU * i as f64 / n as f64 + std::f64::consts::FRAC_PI_8;
            let p = [r * theta.cos(), r * theta.sin()];
            starts.push(p);
            targets.push([-p[0], -p[1]]);
        }
        Self { cfg, starts, targets }
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.cfg
    }

    pub fn num_agents(&self) -> usize {
        self.cfg.agents
    }

    pub fn targets(&self) -> &[[f64; 2]] {
        &self.targets
    }

    pub fn reset(&self) -> ParticleState {
        ParticleState {
            agents: self.starts.iter().map(|&pos| Particle { pos, vel: [0.0; 2] }).collect(),
            steps: 0,
        }
    }

    /// Uniform positions at rest, at least four radii apart.
    pub fn reset_random<R: Rng>(&self, rng: &mut R) -> ParticleState {
        let lim = self.cfg.bound - self.cfg.radius;
        let mut agents: Vec<Particle> = Vec::with_capacity(self.cfg.agents);
        while agents.len() < self.cfg.agents {
            let pos = [rng.gen_range(-lim..lim), rng.gen_range(-lim..lim)];
            if agents.iter().all(|a| dist(a.pos, pos) >= 4.0 * self.cfg.radius) {
                agents.push(Particle { pos, vel: [0.0; 2] });
            }
        }
        ParticleState { agents, steps: 0 }
    }

    pub fn is_done(&self, state: &ParticleState, i: usize) -> bool {
        let a = &state.agents[i];
        a.pos == self.targets[i] && a.vel == [0.0, 0.0]
    }

    pub fn done_flags(&self, state: &ParticleState) -> Vec<bool> {
        (0..self.cfg.agents).map(|i| self.is_done(state, i)).collect()
    }

    pub fn move_particle(&self, p: &Particle, action: Action) -> Particle {
        let c = &self.cfg;
        if action == Action::Brake {
            return brake_step(p, c.brake_decel, c.dt);
        }
        let (dx, dy) = action.delta();
        let vel = [
            (p.vel[0] + dx as f64 * c.accel).clamp(-c.v_max, c.v_max),
            (p.vel[1] + dy as f64 * c.accel).clamp(-c.v_max, c.v_max),
        ];
        let pos = [
            p.pos[0] + 0.5 * (p.vel[0] + vel[0]) * c.dt,
            p.pos[1] + 0.5 * (p.vel[1] + vel[1]) * c.dt,
        ];
        Particle { pos, vel }
    }

    pub fn step(&self, state: &ParticleState, actions: &[Action]) -> StepOutcome<ParticleState> {
        let n = self.cfg.agents;
        assert_eq!(actions.len(), n, "one action per agent");
        let done = self.done_flags(state);
        let mut next = state.clone();
        next.steps += 1;
        let mut arrived = vec![false; n];
        for i in 0..n {
            if done[i] {
                continue;
            }
            let mut p = self.move_particle(&state.agents[i], actions[i]);
            if dist(p.pos, self.targets[i]) <= self.cfg.goal_radius {
                p = Particle { pos: self.targets[i], vel: [0.0; 2] };
                arrived[i] = true;
            }
            next.agents[i] = p;
        }
        let mut colliding = vec![false; n];
        let mut collisions = 0;
        for i in 0..n {
            for j in i + 1..n {
                if done[i] || done[j] {
                    continue;
                }
                if dist(next.agents[i].pos, next.agents[j].pos) < 2.0 * self.cfg.radius {
                    colliding[i] = true;
                    colliding[j] = true;
                    collisions += 1;
                }
            }
        }
        let mut rewards = vec![0.0; n];
        for i in 0..n {
            if done[i] {
                continue;
            }
            let p = &next.agents[i];
            rewards[i] = -dist(p.pos, self.targets[i]);
            if colliding[i] {
                rewards[i] += self.cfg.collision_penalty;
            }
            if p.pos[0].abs() > self.cfg.bound || p.pos[1].abs() > self.cfg.bound {
                rewards[i] += self.cfg.out_of_range_penalty;
            }
        }
        let all_done = (0..n).all(|i| done[i] || arrived[i]);
        let episode_done = all_done || next.steps >= self.cfg.step_limit;
        StepOutcome { state: next, rewards, colliding, collisions, arrived, episode_done }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
