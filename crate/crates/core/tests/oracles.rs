mod common;

use common::*;
use dynshield::game::{extract_shield, winning_region, CorrectionOrder, LazyGame, ShieldGame};
use dynshield::ltl::{parse, to_monitor_dfa, PropositionAlphabet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn monitors_trap_exactly_on_bad_prefixes_up_to_length_four() {
    for text in CORPUS {
        let f = parse(text).unwrap();
        let alphabet = PropositionAlphabet::of_formula(&f).unwrap();
        let dfa = to_monitor_dfa(&f, &alphabet).unwrap();
        for word in all_words(alphabet.num_letters(), 4) {
            assert_eq!(
                monitor_accepts(&dfa, &word),
                !is_bad_prefix(&f, &alphabet, &word, 6),
                "{text} on {word:?}"
            );
        }
    }
}

#[test]
fn oracle_flags_known_bad_prefixes() {
    let f = parse("G (!a | X a) & G (!a | X b) & G (!b | X !a)").unwrap();
    let alphabet = PropositionAlphabet::of_formula(&f).unwrap();
    let a = alphabet.letter(&["a"]).unwrap();
    assert!(is_bad_prefix(&f, &alphabet, &[a], 6));
    assert!(!is_bad_prefix(&f, &alphabet, &[0, 0], 6));
}

#[test]
fn winning_regions_match_minimax_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let inst = random_instance(&mut rng);
        let game = inst.game();
        let win = winning_region(&game);
        let mut oracle = MinimaxOracle::new(inst.model.as_ref(), &inst.spec, inst.space, inst.depth);
        for s in 0..game.num_states() as u32 {
            let st = game.state(s);
            assert_eq!(win.contains(s), oracle.wins(game.label(s), st.spec as usize, st.t as usize));
        }
    }
}

#[test]
fn dense_and_lazy_games_agree_on_safe_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let inst = random_instance(&mut rng);
        let game = inst.game();
        let win = winning_region(&game);
        let root_wins = win.contains(0);
        let mut lazy = LazyGame::new(
            inst.model.clone(),
            inst.spec.clone(),
            inst.root.clone(),
            inst.depth,
            inst.space,
            CorrectionOrder::Fixed,
            4,
        )
        .unwrap();
        assert_eq!(lazy.is_winning(0), root_wins);
        let Ok(mut dense) = extract_shield(game, win, CorrectionOrder::Fixed) else {
            assert!(!root_wins);
            continue;
        };
        for a in 0..inst.space.len() {
            assert_eq!(dense.is_safe(0, a), lazy.is_safe(0, a));
            assert_eq!(dense.correct(0, a), lazy.correct(0, a));
        }
    }
}
