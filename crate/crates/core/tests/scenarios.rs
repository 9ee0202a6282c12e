use std::sync::Arc;

use dynshield::abstraction::AgentAbs;
use dynshield::actions::{Action, GRID_ACTIONS};
use dynshield::dynamics::{DynamicsModel, ExactGrid};
use dynshield::env::GridMap;
use dynshield::game::SpecMonitor;
use dynshield::harness::{run_experiment, Algorithm, ExperimentConfig, RunOptions, Shielding};

/// Agent 0 steps up to the bottleneck gap while agent 1 leaves it on the
/// far side; the other two agents hold still far away.
fn bottleneck_corrections(algorithm: Algorithm) -> usize {
    let cfg = ExperimentConfig { algorithm, map_file: "builtin:bottleneck".into(), ..Default::default() };
    let map = GridMap::load(&cfg.map_file).unwrap();
    let model: Arc<dyn DynamicsModel> = Arc::new(ExactGrid::new(map.geometry()));
    let spec = Arc::new(SpecMonitor::compile(&cfg.safety_spec).unwrap());
    let mut shielding = Shielding::build(&cfg, Some(model), spec, &GRID_ACTIONS);
    let cells: Vec<AgentAbs> = [(2, 3), (4, 3), (1, 1), (7, 5)].iter().map(|&(x, y)| AgentAbs::cell(x, y)).collect();
    let proposed = [Action::Right, Action::Right, Action::Stay, Action::Stay];
    let d = shielding.decide(&cells, &[true; 4], &proposed, 0, 0).unwrap();
    d.corrected.iter().filter(|&&c| c).count()
}

#[test]
fn following_through_the_gap_is_blocked_only_by_factored_shielding() {
    assert!(bottleneck_corrections(Algorithm::Fs) >= 1);
    assert_eq!(bottleneck_corrections(Algorithm::Ds), 0);
}

fn small(algorithm: Algorithm, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        map_file: "builtin:bottleneck".into(),
        episodes: 30,
        seeds: vec![seed],
        ..Default::default()
    }
}

#[test]
fn reruns_are_byte_identical() {
    for algorithm in [Algorithm::Ds, Algorithm::Fs, Algorithm::None] {
        let cfg = small(algorithm, 7);
        let a = run_experiment(&cfg, &RunOptions::default()).unwrap().metrics_csv().unwrap();
        let b = run_experiment(&cfg, &RunOptions::default()).unwrap().metrics_csv().unwrap();
        assert_eq!(a, b, "{algorithm}");
    }
}

#[test]
fn seeds_change_the_run() {
    let a = run_experiment(&small(Algorithm::None, 1), &RunOptions::default()).unwrap();
    let b = run_experiment(&small(Algorithm::None, 2), &RunOptions::default()).unwrap();
    let rewards = |r: &dynshield::harness::ExperimentResult| r.rows().map(|m| m.reward).collect::<Vec<_>>();
    assert_ne!(rewards(&a), rewards(&b));
}

#[test]
fn shielded_training_never_collides_where_unshielded_does() {
    let ds = run_experiment(&small(Algorithm::Ds, 3), &RunOptions::default()).unwrap();
    let none = run_experiment(&small(Algorithm::None, 3), &RunOptions::default()).unwrap();
    assert_eq!(ds.summary.collisions(), 0);
    assert!(none.summary.collisions() > 0);
    assert!(ds.summary.safety_rate.mean > none.summary.safety_rate.mean);
}

#[test]
fn learned_model_without_completion_can_mispredict() {
    let cfg = ExperimentConfig {
        model: dynshield::harness::ModelKind::Learned,
        model_pretrain_steps: 200,
        model_completion: false,
        ..small(Algorithm::Ds, 0)
    };
    let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert!(r.summary.label_mismatches + r.summary.collisions() > 0);
}
