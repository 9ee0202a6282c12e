//! Reference oracles shared by the integration and acceptance tests. They
//! recompute answers by brute force and never call the solvers under test.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use dynshield::abstraction::{unroll, AbstractLabel, AgentAbs, AgentCells, Geometry};
use dynshield::actions::{Action, JointActionSpace, GRID_ACTIONS};
use dynshield::automata::Dfa;
use dynshield::dynamics::{DynamicsModel, ExactGrid, LearnedTabular};
use dynshield::game::{build_game, SafetyGame, SpecMonitor};
use dynshield::ltl::{Formula, PropositionAlphabet};
use rand::seq::SliceRandom;
use rand::Rng;

/// Safety formulas over propositions `a`, `b`, `c`.
pub const CORPUS: [&str; 12] = [
    "G !a",
    "G (!a & !b)",
    "G (a -> X !b)",
    "G a & X !a",
    "X X !a",
    "G (a -> X X a)",
    "G ((a & b) -> X !a)",
    "!a & X G a",
    "G (a | X a)",
    "G (!a | X a) & G (!a | X b) & G (!b | X !a)",
    "G (a -> X !a) & G (!a -> X a)",
    "a & X (b | X !c) & G (c -> !b)",
];

/// Optimistic finite-trace semantics: obligations past the end of `word`
/// count as met.
fn optimistic(f: &Formula, alphabet: &PropositionAlphabet, word: &[usize], i: usize) -> bool {
    if i >= word.len() {
        return true;
    }
    let atom = |p: &str| alphabet.holds(word[i], alphabet.index_of(p).expect("atom in alphabet"));
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(p) => atom(p),
        Formula::Not(inner) => match &**inner {
            Formula::Atom(p) => !atom(p),
            other => panic!("formula not in negation normal form: {other:?}"),
        },
        Formula::And(a, b) => optimistic(a, alphabet, word, i) && optimistic(b, alphabet, word, i),
        Formula::Or(a, b) => optimistic(a, alphabet, word, i) || optimistic(b, alphabet, word, i),
        Formula::Next(g) => optimistic(g, alphabet, word, i + 1),
        Formula::Always(g) => (i..word.len()).all(|j| optimistic(g, alphabet, word, j)),
        Formula::Eventually(_) | Formula::Until(..) => panic!("oracle only handles the safety fragment"),
    }
}

/// True iff no infinite continuation of `word` satisfies `f`. Optimistic
/// acceptance is prefix-closed, so by König's lemma a continuation exists
/// iff arbitrarily long optimistic extensions exist; `lookahead` letters
/// suffice once it exceeds the number of distinct residual obligations.
pub fn is_bad_prefix(f: &Formula, alphabet: &PropositionAlphabet, word: &[usize], lookahead: usize) -> bool {
    let nnf = f.normalize();
    fn extend(f: &Formula, alphabet: &PropositionAlphabet, word: &mut Vec<usize>, left: usize) -> bool {
        if !optimistic(f, alphabet, word, 0) {
            return false;
        }
        if left == 0 {
            return true;
        }
        for letter in 0..alphabet.num_letters() {
            word.push(letter);
            let ok = extend(f, alphabet, word, left - 1);
            word.pop();
            if ok {
                return true;
            }
        }
        false
    }
    !extend(&nnf, alphabet, &mut word.to_vec(), lookahead)
}

/// Every word over `letters` of length at most `max_len`.
pub fn all_words(letters: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for l in 0..letters {
                let mut v: Vec<usize> = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Monitor verdict after reading `word`: true iff still accepting.
pub fn monitor_accepts(dfa: &Dfa, word: &[usize]) -> bool {
    let run = dfa.run(word).expect("letters within alphabet");
    dfa.is_accepting(*run.last().unwrap())
}

/// Memoized minimax over (label, monitor state, time), straight from the
/// model's successor relation.
pub struct MinimaxOracle<'a> {
    model: &'a dyn DynamicsModel,
    spec: &'a SpecMonitor,
    space: JointActionSpace,
    depth: usize,
    memo: HashMap<(AbstractLabel, usize, usize), bool>,
}

impl<'a> MinimaxOracle<'a> {
    pub fn new(model: &'a dyn DynamicsModel, spec: &'a SpecMonitor, space: JointActionSpace, depth: usize) -> Self {
        Self { model, spec, space, depth, memo: HashMap::new() }
    }

    pub fn wins(&mut self, label: &AbstractLabel, q: usize, t: usize) -> bool {
        let key = (label.clone(), q, t);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let v = self.spec.dfa().is_accepting(q)
            && (t == self.depth || (0..self.space.len()).any(|a| self.safe(label, q, t, a)));
        self.memo.insert(key, v);
        v
    }

    /// Every environment resolution of `a` keeps the agents winning.
    pub fn safe(&mut self, label: &AbstractLabel, q: usize, t: usize, a: usize) -> bool {
        if t >= self.depth {
            return false;
        }
        let joint = self.space.decode(a);
        self.model
            .possible_successors(label, &joint)
            .iter()
            .all(|next| self.wins(next, self.spec.step(q, next), t + 1))
    }
}

/// A small randomized shielding problem.
pub struct Instance {
    pub geometry: Geometry,
    pub model: Arc<dyn DynamicsModel>,
    pub spec: Arc<SpecMonitor>,
    pub root: AbstractLabel,
    pub depth: usize,
    pub space: JointActionSpace,
}

pub const SPECS: [&str; 4] = [
    "G !collision",
    "G (!collision & !at_obstacle)",
    "G (!collision | X !collision)",
    "!collision & X G !collision",
];

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let width = rng.gen_range(2..=4usize);
    let height = rng.gen_range(2..=4usize);
    let agents = rng.gen_range(1..=2usize);
    let mut cells: Vec<(i32, i32)> =
        (0..height as i32).flat_map(|y| (0..width as i32).map(move |x| (x, y))).collect();
    cells.shuffle(rng);
    let obstacles: Vec<(i32, i32)> =
        cells[agents..].iter().copied().filter(|_| rng.gen_bool(0.2)).collect();
    let geometry = Geometry::grid(width, height, &obstacles);
    let model: Arc<dyn DynamicsModel> = if rng.gen_bool(0.5) {
        Arc::new(ExactGrid::new(geometry.clone()))
    } else {
        let mut m = LearnedTabular::new(geometry.clone(), rng.gen_range(1..=3), rng.gen_bool(0.5));
        for _ in 0..rng.gen_range(0..40) {
            let from = AgentAbs::cell(rng.gen_range(0..width as i32), rng.gen_range(0..height as i32));
            let to = AgentAbs::cell(
                (from.x + rng.gen_range(-1..=1)).clamp(0, width as i32 - 1),
                (from.y + rng.gen_range(-1..=1)).clamp(0, height as i32 - 1),
            );
            m.record(from, GRID_ACTIONS[rng.gen_range(0..GRID_ACTIONS.len())], to);
        }
        Arc::new(m)
    };
    let spec = Arc::new(SpecMonitor::compile(SPECS[rng.gen_range(0..SPECS.len())]).unwrap());
    // Stacked starts occur on purpose now and then.
    let mut start: AgentCells = cells[..agents].iter().map(|&(x, y)| AgentAbs::cell(x, y)).collect();
    if agents == 2 && rng.gen_bool(0.1) {
        start[1] = start[0];
    }
    let root = geometry.label(start, None, false);
    Instance {
        geometry,
        model,
        spec,
        root,
        depth: rng.gen_range(1..=3),
        space: JointActionSpace::new(&GRID_ACTIONS, agents),
    }
}

impl Instance {
    pub fn game(&self) -> SafetyGame {
        build_game(unroll(self.model.as_ref(), &self.root, self.depth, self.space, 4).unwrap(), &self.spec)
    }
}

pub fn stay_all(n: usize) -> Vec<Action> {
    vec![Action::Stay; n]
}
