//! Experiment runner: shielded Q-learning on grid maps or particles with
//! dynamic, factored or no shielding, plus metrics and greedy evaluation.

pub mod config;
pub mod factored;
pub mod metrics;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::abstraction::{abstract_particle, AgentAbs, Geometry};
use crate::actions::{format_joint, Action, GRID_ACTIONS, PARTICLE_ACTIONS};
use crate::dynamics::{DynamicsModel, ExactGrid, LearnedTabular, RolloutRecord};
use crate::env::{GridEnv, GridMap, GridState, MapError, ParticleConfig, ParticleEnv, ParticleState, StepOutcome};
use crate::game::{GameError, SpecMonitor};
use crate::manager::{DynamicManager, ManagerConfig, ManagerError, Plan};
use crate::marl::{QState, QTable, QTableError};

pub use config::{Algorithm, ConfigError, EnvKind, ExperimentConfig, ModelKind, ParticleParams};
pub use factored::{FactoredReport, FactoredShield};
pub use metrics::{safety_rate, AbortKind, EpisodeMetrics, MeanStd, MetricsError, MetricsRow, SeedSummary, Summary};

/// Offsets the pretraining stream from the learning stream of a seed.
const PRETRAIN_SALT: u64 = 0x005e_ed0f_da7a;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Spec(#[from] GameError),
    #[error("shielding failed: {0}")]
    Shield(ManagerError),
    #[error(transparent)]
    QTable(#[from] QTableError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Map(_) | HarnessError::Spec(_) => 2,
            HarnessError::Shield(e) if e.is_unsafe_start() || e.is_label_mismatch() => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Uniform view of the two environments for the training loop.
pub trait Simulator: Sync {
    type State: Clone;

    fn actions(&self) -> &'static [Action];
    fn geometry(&self) -> &Geometry;
    fn num_agents(&self) -> usize;
    fn reset(&self, random: bool, rng: &mut ChaCha8Rng) -> Result<Self::State, HarnessError>;
    fn step(&self, state: &Self::State, actions: &[Action]) -> StepOutcome<Self::State>;
    fn cells(&self, state: &Self::State) -> Vec<AgentAbs>;
    fn done(&self, state: &Self::State) -> Vec<bool>;
}

#[derive(Debug)]
pub struct GridSim {
    pub env: GridEnv,
}

impl Simulator for GridSim {
    type State = GridState;

    fn actions(&self) -> &'static [Action] {
        &GRID_ACTIONS
    }

    fn geometry(&self) -> &Geometry {
        self.env.geometry()
    }

    fn num_agents(&self) -> usize {
        self.env.num_agents()
    }

    fn reset(&self, random: bool, rng: &mut ChaCha8Rng) -> Result<GridState, HarnessError> {
        if random {
            Ok(self.env.reset_random(rng)?)
        } else {
            Ok(self.env.reset())
        }
    }

    fn step(&self, state: &GridState, actions: &[Action]) -> StepOutcome<GridState> {
        self.env.step(state, actions)
    }

    fn cells(&self, state: &GridState) -> Vec<AgentAbs> {
        state.cells.iter().map(|&(x, y)| AgentAbs::cell(x, y)).collect()
    }

    fn done(&self, state: &GridState) -> Vec<bool> {
        state.done.clone()
    }
}

#[derive(Debug)]
pub struct ParticleSim {
    pub env: ParticleEnv,
    geometry: Geometry,
    cell_width: f64,
    everyone: Vec<usize>,
}

impl ParticleSim {
    pub fn new(env: ParticleEnv, cell_width: f64) -> Self {
        let geometry = Geometry::particle(env.config().bound, cell_width);
        let everyone = (0..env.num_agents()).collect();
        Self { env, geometry, cell_width, everyone }
    }
}

impl Simulator for ParticleSim {
    type State = ParticleState;

    fn actions(&self) -> &'static [Action] {
        &PARTICLE_ACTIONS
    }

    fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn num_agents(&self) -> usize {
        self.env.num_agents()
    }

    fn reset(&self, random: bool, rng: &mut ChaCha8Rng) -> Result<ParticleState, HarnessError> {
        Ok(if random { self.env.reset_random(rng) } else { self.env.reset() })
    }

    fn step(&self, state: &ParticleState, actions: &[Action]) -> StepOutcome<ParticleState> {
        self.env.step(state, actions)
    }

    fn cells(&self, state: &ParticleState) -> Vec<AgentAbs> {
        abstract_particle(state, &self.everyone, &self.geometry, self.cell_width).agents().to_vec()
    }

    fn done(&self, state: &ParticleState) -> Vec<bool> {
        self.env.done_flags(state)
    }
}

/// Collects `steps` joint steps of uniformly random play from random starts
/// and fits a count model. Grid transitions are also returned as replay
/// records.
pub fn pretrain_model<S: Simulator>(
    sim: &S,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(LearnedTabular, Vec<RolloutRecord>), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PRETRAIN_SALT);
    let mut model = LearnedTabular::new(sim.geometry().clone(), cfg.model_n_min, cfg.model_completion);
    let mut records = Vec::new();
    let keep_records = !sim.geometry().has_headings();
    let actions = sim.actions();
    let (mut episode, mut step) = (0, 0);
    let mut state = sim.reset(true, &mut rng)?;
    for _ in 0..cfg.model_pretrain_steps {
        let cells = sim.cells(&state);
        let done = sim.done(&state);
        let joint: Vec<Action> = (0..sim.num_agents()).map(|_| actions[rng.gen_range(0..actions.len())]).collect();
        let out = sim.step(&state, &joint);
        let next = sim.cells(&out.state);
        for i in (0..cells.len()).filter(|&i| !done[i]) {
            model.record(cells[i], joint[i], next[i]);
            if keep_records {
                records.push(RolloutRecord {
                    episode,
                    step,
                    agent_id: i,
                    cell_x: cells[i].x,
                    cell_y: cells[i].y,
                    action: joint[i],
                    next_x: next[i].x,
                    next_y: next[i].y,
                });
            }
        }
        step += 1;
        if out.episode_done {
            state = sim.reset(true, &mut rng)?;
            episode += 1;
            step = 0;
        } else {
            state = out.state;
        }
    }
    Ok((model, records))
}

fn manager_config(cfg: &ExperimentConfig) -> ManagerConfig {
    ManagerConfig {
        k: cfg.k,
        max_group_size: cfg.max_group_size,
        unsafe_penalty: cfg.unsafe_penalty,
        lookahead_margin: cfg.lookahead_margin,
        mismatch: cfg.mismatch_policy,
        synthesis: cfg.synthesis,
        correction: cfg.correction,
        record_timing: cfg.record_timing,
    }
}

/// The shielding layer in front of the environment.
#[derive(Debug)]
pub enum Shielding {
    Dynamic(DynamicManager),
    Factored(FactoredShield),
    Off,
}

/// Outcome of passing one joint proposal through the shielding layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub actions: Vec<Action>,
    pub corrected: Vec<bool>,
    pub penalties: Vec<f64>,
    pub recomputes: usize,
    pub synthesis_ms: f64,
    pub agent_recomputes: Vec<usize>,
    pub agent_synthesis_ms: Vec<f64>,
    /// Event-log entry, when shielding is on.
    pub event: Option<Value>,
    /// Agent groups whose shields were synthesized this step.
    pub fresh_groups: Vec<Vec<usize>>,
}

impl Shielding {
    pub fn build(
        cfg: &ExperimentConfig,
        model: Option<Arc<dyn DynamicsModel>>,
        spec: Arc<SpecMonitor>,
        actions: &'static [Action],
    ) -> Self {
        let mcfg = manager_config(cfg);
        match (cfg.algorithm, model) {
            (Algorithm::Ds, Some(model)) => Shielding::Dynamic(DynamicManager::new(mcfg, model, spec, actions)),
            (Algorithm::Fs, Some(model)) => {
                Shielding::Factored(FactoredShield::new(cfg.fs_region_size, mcfg, model, spec, actions))
            }
            _ => Shielding::Off,
        }
    }

    pub fn reset(&mut self) {
        if let Shielding::Dynamic(m) = self {
            m.reset();
        }
    }

    pub fn decide(
        &mut self,
        cells: &[AgentAbs],
        active: &[bool],
        proposed: &[Action],
        episode: usize,
        step: usize,
    ) -> Result<Decision, ManagerError> {
        let n = cells.len();
        match self {
            Shielding::Dynamic(m) => {
                let r = m.shield_step(cells, active, proposed)?;
                let mut agent_recomputes = vec![0; n];
                let mut agent_synthesis_ms = vec![0.0; n];
                let mut fresh_groups = Vec::new();
                for g in &r.groups {
                    if matches!(g.plan, Plan::Recompute(_)) {
                        for &i in &g.agents {
                            agent_recomputes[i] += 1;
                            agent_synthesis_ms[i] += g.synthesis_ms;
                        }
                        fresh_groups.push(g.agents.clone());
                    }
                }
                Ok(Decision {
                    event: Some(r.to_json(episode, step)),
                    actions: r.actions,
                    corrected: r.corrected,
                    penalties: r.penalties,
                    recomputes: r.recomputes,
                    synthesis_ms: r.synthesis_ms,
                    agent_recomputes,
                    agent_synthesis_ms,
                    fresh_groups,
                })
            }
            Shielding::Factored(f) => {
                let r = f.step(cells, active, proposed)?;
                let event = json!({
                    "episode": episode,
                    "step": step,
                    "actions": format_joint(&r.actions),
                    "regions": r.recomputes,
                    "rejected": r.rejected,
                });
                Ok(Decision {
                    agent_recomputes: active.iter().map(|&a| a as usize).collect(),
                    actions: r.actions,
                    corrected: r.corrected,
                    penalties: r.penalties,
                    recomputes: r.recomputes,
                    synthesis_ms: r.synthesis_ms,
                    agent_synthesis_ms: r.agent_synthesis_ms,
                    event: Some(event),
                    fresh_groups: Vec::new(),
                })
            }
            Shielding::Off => Ok(Decision {
                actions: proposed.to_vec(),
                corrected: vec![false; n],
                penalties: vec![0.0; n],
                recomputes: 0,
                synthesis_ms: 0.0,
                agent_recomputes: vec![0; n],
                agent_synthesis_ms: vec![0.0; n],
                event: None,
                fresh_groups: Vec::new(),
            }),
        }
    }

    /// JSON dumps of the live shields monitoring `groups`.
    fn dump_games(&mut self, groups: &[Vec<usize>]) -> Vec<(Vec<usize>, Value)> {
        let Shielding::Dynamic(m) = self else { return Vec::new() };
        m.pool_mut()
            .shields_mut()
            .iter_mut()
            .filter(|s| groups.iter().any(|g| g.as_slice() == s.signature()))
            .map(|s| (s.signature().to_vec(), s.game_mut().to_json()))
            .collect()
    }
}

/// Everything a training run on one seed produces.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeMetrics>,
    pub tables: Vec<QTable>,
    pub rollouts: Vec<RolloutRecord>,
    pub events: Vec<Value>,
    /// `(step, agents, game)` for shields synthesized in the first episode.
    pub games: Vec<(usize, Vec<usize>, Value)>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub dump_game: bool,
    pub dump_automata: bool,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn rows(&self) -> impl Iterator<Item = MetricsRow> + '_ {
        self.runs.iter().flat_map(|r| r.episodes.iter().flat_map(EpisodeMetrics::rows))
    }

    /// `metrics.csv` contents.
    pub fn metrics_csv(&self) -> Result<Vec<u8>, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.into_inner().map_err(|e| HarnessError::Io { path: "metrics.csv".into(), message: e.to_string() })
    }
}

struct Learner<'a, S: Simulator> {
    sim: &'a S,
    cfg: &'a ExperimentConfig,
    seed: u64,
    shielding: Shielding,
    tables: Vec<QTable>,
    rng: ChaCha8Rng,
    log_events: bool,
    dump_games: bool,
    events: Vec<Value>,
    games: Vec<(usize, Vec<usize>, Value)>,
}

impl<S: Simulator> Learner<'_, S> {
    /// Plays one episode; learns when `train` is set, otherwise acts
    /// greedily. Per-step collision counts are appended to `step_log`.
    fn episode(&mut self, episode: usize, train: bool, step_log: &mut Vec<usize>) -> Result<EpisodeMetrics, HarnessError> {
        let n = self.sim.num_agents();
        let mut m = EpisodeMetrics::new(episode, self.seed, n);
        let mut state = self.sim.reset(self.cfg.random_starts, &mut self.rng)?;
        self.shielding.reset();
        if self.sim.done(&state).iter().all(|&d| d) {
            return Ok(m);
        }
        loop {
            let cells = self.sim.cells(&state);
            let active: Vec<bool> = self.sim.done(&state).iter().map(|d| !d).collect();
            let qs: Vec<QState> = (0..n).map(|i| (cells[i], i)).collect();
            let proposed: Vec<Action> = (0..n)
                .map(|i| {
                    if !active[i] {
                        Action::Stay
                    } else if train {
                        self.tables[i].select(&qs[i], &mut self.rng)
                    } else {
                        self.tables[i].greedy(&qs[i])
                    }
                })
                .collect();
            let d = match self.shielding.decide(&cells, &active, &proposed, episode, m.steps) {
                Ok(d) => d,
                Err(e) if e.is_unsafe_start() => {
                    m.abort = Some(AbortKind::UnsafeStart);
                    break;
                }
                Err(e) if e.is_label_mismatch() => {
                    m.abort = Some(AbortKind::LabelMismatch);
                    break;
                }
                Err(e) => return Err(HarnessError::Shield(e)),
            };
            if self.dump_games && episode == 0 && !d.fresh_groups.is_empty() {
                for (agents, game) in self.shielding.dump_games(&d.fresh_groups) {
                    self.games.push((m.steps, agents, game));
                }
            }
            if self.log_events {
                if let Some(ev) = &d.event {
                    self.events.push(ev.clone());
                }
            }
            let out = self.sim.step(&state, &d.actions);
            let next = self.sim.cells(&out.state);
            for i in (0..n).filter(|&i| active[i]) {
                if train {
                    let s_next = (!out.arrived[i]).then_some((next[i], i));
                    self.tables[i].update(qs[i], d.actions[i], out.rewards[i], s_next.as_ref());
                    if d.corrected[i] {
                        self.tables[i].update(qs[i], proposed[i], d.penalties[i], s_next.as_ref());
                    }
                }
                m.rewards[i] += out.rewards[i];
                m.agent_collisions[i] += out.colliding[i] as usize;
                m.corrections[i] += d.corrected[i] as usize;
                m.agent_recomputes[i] += d.agent_recomputes[i];
                m.agent_synthesis_ms[i] += d.agent_synthesis_ms[i];
            }
            m.collisions += out.collisions;
            m.colliding_steps += (out.collisions > 0) as usize;
            m.recomputes += d.recomputes;
            m.synthesis_ms += d.synthesis_ms;
            m.steps += 1;
            step_log.push(out.collisions);
            state = out.state;
            if out.episode_done {
                break;
            }
        }
        Ok(m)
    }
}

fn build_model<S: Simulator>(
    sim: &S,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(Option<Arc<dyn DynamicsModel>>, Vec<RolloutRecord>), HarnessError> {
    if cfg.algorithm == Algorithm::None {
        return Ok((None, Vec::new()));
    }
    match cfg.model {
        ModelKind::Exact => Ok((Some(Arc::new(ExactGrid::new(sim.geometry().clone()))), Vec::new())),
        ModelKind::Learned => {
            let (model, records) = pretrain_model(sim, cfg, seed)?;
            Ok((Some(Arc::new(model)), records))
        }
    }
}

fn train_seed<S: Simulator>(
    sim: &S,
    cfg: &ExperimentConfig,
    spec: &Arc<SpecMonitor>,
    seed: u64,
    opts: &RunOptions,
) -> Result<SeedRun, HarnessError> {
    let (model, rollouts) = build_model(sim, cfg, seed)?;
    let actions = sim.actions();
    let mut learner = Learner {
        sim,
        cfg,
        seed,
        shielding: Shielding::build(cfg, model, spec.clone(), actions),
        tables: (0..sim.num_agents()).map(|_| QTable::new(actions, cfg.q)).collect(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        log_events: cfg.event_log,
        dump_games: opts.dump_game,
        events: Vec::new(),
        games: Vec::new(),
    };
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut log = Vec::new();
    for e in 0..cfg.episodes {
        log.clear();
        episodes.push(learner.episode(e, true, &mut log)?);
        for t in &mut learner.tables {
            t.decay_epsilon();
        }
    }
    Ok(SeedRun { seed, episodes, tables: learner.tables, rollouts, events: learner.events, games: learner.games })
}

/// Loaded environment for a configuration.
pub enum World {
    Grid(GridSim),
    Particle(ParticleSim),
}

impl World {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        Ok(match cfg.env {
            EnvKind::Grid => {
                let map = GridMap::load(&cfg.map_file)?;
                World::Grid(GridSim { env: GridEnv::new(map, cfg.step_limit()) })
            }
            EnvKind::Particle => {
                let p = &cfg.particle;
                let pc = ParticleConfig {
                    agents: p.agents,
                    bound: p.bound,
                    accel: p.accel,
                    v_max: p.v_max,
                    brake_decel: p.brake,
                    radius: p.radius,
                    step_limit: cfg.step_limit(),
                    ..ParticleConfig::default()
                };
                World::Particle(ParticleSim::new(ParticleEnv::new(pc), cfg.cell_width))
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            World::Grid(g) => g.env.map().name.clone(),
            World::Particle(_) => "particle".into(),
        }
    }
}

/// Trains on every configured seed (in parallel) and writes the outputs
/// under `opts.out` when given.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let spec = Arc::new(SpecMonitor::compile(&cfg.safety_spec)?);
    let world = World::from_config(cfg)?;
    let runs: Vec<SeedRun> = cfg
        .seeds
        .par_iter()
        .map(|&seed| match &world {
            World::Grid(sim) => train_seed(sim, cfg, &spec, seed, opts),
            World::Particle(sim) => train_seed(sim, cfg, &spec, seed, opts),
        })
        .collect::<Result<_, _>>()?;
    let seeds = runs.iter().map(|r| SeedSummary::from_episodes(r.seed, &r.episodes)).collect();
    let summary = Summary::aggregate(cfg.algorithm.name(), &world.name(), cfg.k, cfg.episodes, seeds);
    let result = ExperimentResult { runs, summary };
    if let Some(dir) = &opts.out {
        write_outputs(dir, cfg, &spec, &result, opts)?;
    }
    Ok(result)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    spec: &SpecMonitor,
    result: &ExperimentResult,
    opts: &RunOptions,
) -> Result<(), HarnessError> {
    write_file(&dir.join("metrics.csv"), &result.metrics_csv()?)?;
    let summary = serde_json::to_vec_pretty(&result.summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), &summary)?;
    if opts.dump_automata {
        write_file(&dir.join("spec_monitor.dot"), spec.dfa().to_dot("spec_monitor").as_bytes())?;
    }
    for run in &result.runs {
        let seed_dir = dir.join(format!("seed_{}", run.seed));
        for (i, table) in run.tables.iter().enumerate() {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            write_file(&seed_dir.join(format!("qtable_agent{i}.csv")), &buf)?;
        }
        if cfg.model == ModelKind::Learned && !run.rollouts.is_empty() {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &run.rollouts {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| io_err(&seed_dir, e))?;
            write_file(&seed_dir.join("rollouts.csv"), &bytes)?;
        }
        if cfg.event_log {
            let mut buf = Vec::new();
            for ev in &run.events {
                serde_json::to_writer(&mut buf, ev).expect("event serializes");
                buf.push(b'\n');
            }
            write_file(&seed_dir.join("events.jsonl"), &buf)?;
        }
        for (step, agents, game) in &run.games {
            let ids: Vec<String> = agents.iter().map(|a| a.to_string()).collect();
            let name = format!("seed{}_step{}_agents{}.json", run.seed, step, ids.join("-"));
            let bytes = serde_json::to_vec(game).expect("game serializes");
            write_file(&dir.join("games").join(name), &bytes)?;
        }
    }
    Ok(())
}

/// Greedy testing-phase results.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_team_reward: f64,
    pub collisions: usize,
    pub mean_steps: f64,
    pub safety_rate: f64,
    pub aborts: usize,
}

fn eval_with<S: Simulator>(
    sim: &S,
    cfg: &ExperimentConfig,
    spec: Arc<SpecMonitor>,
    tables: Vec<QTable>,
) -> Result<EvalReport, HarnessError> {
    let seed = cfg.seeds[0];
    let (model, _) = build_model(sim, cfg, seed)?;
    let mut learner = Learner {
        sim,
        cfg,
        seed,
        shielding: Shielding::build(cfg, model, spec, sim.actions()),
        tables,
        rng: ChaCha8Rng::seed_from_u64(seed),
        log_events: false,
        dump_games: false,
        events: Vec::new(),
        games: Vec::new(),
    };
    let mut log = Vec::new();
    let mut episodes = Vec::new();
    for e in 0..cfg.eval_episodes {
        episodes.push(learner.episode(e, false, &mut log)?);
    }
    let count = episodes.len().max(1) as f64;
    Ok(EvalReport {
        episodes: episodes.len(),
        mean_team_reward: episodes.iter().map(EpisodeMetrics::team_reward).sum::<f64>() / count,
        collisions: episodes.iter().map(|e| e.collisions).sum(),
        mean_steps: episodes.iter().map(|e| e.steps as f64).sum::<f64>() / count,
        safety_rate: safety_rate(&log).unwrap_or(1.0),
        aborts: episodes.iter().filter(|e| e.abort.is_some()).count(),
    })
}

/// Runs `eval_episodes` greedy episodes with the Q-tables stored in `dir`.
pub fn evaluate(cfg: &ExperimentConfig, dir: &Path) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let spec = Arc::new(SpecMonitor::compile(&cfg.safety_spec)?);
    let world = World::from_config(cfg)?;
    let (agents, actions) = match &world {
        World::Grid(s) => (s.num_agents(), s.actions()),
        World::Particle(s) => (s.num_agents(), s.actions()),
    };
    let mut tables = Vec::with_capacity(agents);
    for i in 0..agents {
        let path = dir.join(format!("qtable_agent{i}.csv"));
        let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        let mut table = QTable::read_csv(file, actions, cfg.q)?;
        table.set_epsilon(0.0);
        tables.push(table);
    }
    match &world {
        World::Grid(sim) => eval_with(sim, cfg, spec, tables),
        World::Particle(sim) => eval_with(sim, cfg, spec, tables),
    }
}

/// Writes `report` as pretty JSON followed by a newline.
pub fn print_json<W: Write, T: serde::Serialize>(mut out: W, report: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!("episodes = 20\nstep_limit = 30\nseeds = 0,1\n{extra}")).unwrap()
    }

    #[test]
    fn one_episode_one_step_gives_one_row_per_agent() {
        let cfg = ExperimentConfig { seeds: vec![3], episodes: 1, step_limit: Some(1), ..Default::default() };
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let rows: Vec<MetricsRow> = r.rows().collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|row| row.steps == 1 && row.episode == 0 && row.seed == 3));
    }

    #[test]
    fn short_runs_are_collision_free_under_ds_and_fs() {
        for alg in ["ds", "fs"] {
            let cfg = quick(&format!("map_file = builtin:bottleneck\nalgorithm = {alg}"));
            let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
            assert_eq!(r.summary.collisions(), 0, "{alg}");
            assert_eq!(r.summary.aborts(), 0, "{alg}");
        }
    }

    #[test]
    fn identical_runs_give_identical_csv() {
        let cfg = quick("map_file = builtin:cross\nalgorithm = none\nrandom_starts = true");
        let a = run_experiment(&cfg, &RunOptions::default()).unwrap().metrics_csv().unwrap();
        let b = run_experiment(&cfg, &RunOptions::default()).unwrap().metrics_csv().unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("episode,seed,agent_id,reward,collisions,steps,corrections,recomputes,synthesis_ms\n"));
    }

    #[test]
    fn learned_pretraining_is_seeded() {
        let cfg = quick("model = learned\nmodel_pretrain_steps = 300");
        let sim = GridSim { env: GridEnv::new(GridMap::builtin("open").unwrap(), 100) };
        let (_, a) = pretrain_model(&sim, &cfg, 4).unwrap();
        let (_, b) = pretrain_model(&sim, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn particle_runs_with_learned_model() {
        let cfg = ExperimentConfig::parse(
            "env = particle\nmodel = learned\nmodel_pretrain_steps = 200000\nepisodes = 5\nseeds = 0\nmismatch_policy = recompute",
        )
        .unwrap();
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(r.runs[0].episodes.len(), 5);
        assert!(r.summary.safety_rate.mean > 0.0);
    }
}
