//! Explicit deterministic finite automata with dense state and letter ids.
//!
//! Both the safety monitors compiled from LTL and the environment
//! abstractions are represented with [`Dfa`]. Transition tables are always
//! total, which keeps products and game construction free of partiality
//! checks.

use std::collections::{btree_map, BTreeMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

pub type StateId = usize;
pub type LetterId = usize;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DfaError {
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("transition table has {found} entries, expected {expected}")]
    TableSize { expected: usize, found: usize },
    #[error("state {state} out of range (automaton has {states} states)")]
    BadState { state: StateId, states: usize },
    #[error("letter {letter} is not in an alphabet of {size} letters")]
    UnknownLetter { letter: LetterId, size: usize },
    #[error("letter alignment is malformed: {0}")]
    Alignment(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dfa {
    letters: Vec<String>,
    initial: StateId,
    /// Row-major: `delta[state * letters.len() + letter]`.
    delta: Vec<StateId>,
    accepting: Vec<bool>,
}

/// Maps each letter of a shared alphabet onto a letter of each product
/// factor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LetterAlignment {
    pub names: Vec<String>,
    pub left: Vec<LetterId>,
    pub right: Vec<LetterId>,
}

impl LetterAlignment {
    /// Both factors share the same alphabet, letter for letter.
    pub fn identity(letters: &[String]) -> Self {
        Self {
            names: letters.to_vec(),
            left: (0..letters.len()).collect(),
            right: (0..letters.len()).collect(),
        }
    }
}

impl Dfa {
    pub fn new(
        letters: Vec<String>,
        initial: StateId,
        delta: Vec<StateId>,
        accepting: Vec<bool>,
    ) -> Result<Self, DfaError> {
        if letters.is_empty() {
            return Err(DfaError::EmptyAlphabet);
        }
        let states = accepting.len();
        let expected = states * letters.len();
        if delta.len() != expected || states == 0 {
            return Err(DfaError::TableSize { expected, found: delta.len() });
        }
        if initial >= states {
            return Err(DfaError::BadState { state: initial, states });
        }
        if let Some(&bad) = delta.iter().find(|&&q| q >= states) {
            return Err(DfaError::BadState { state: bad, states });
        }
        Ok(Self { letters, initial, delta, accepting })
    }

    /// The one-state automaton accepting every word.
    pub fn universal(letters: Vec<String>) -> Result<Self, DfaError> {
        let n = letters.len();
        Self::new(letters, 0, vec![0; n], vec![true])
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn num_letters(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[String] {
        &self.letters
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn is_accepting(&self, state: StateId) -> bool {
        self.accepting[state]
    }

    /// Unchecked transition; panics on out-of-range ids.
    #[inline]
    pub fn step(&self, state: StateId, letter: LetterId) -> StateId {
        self.delta[state * self.letters.len() + letter]
    }

    pub fn try_step(&self, state: StateId, letter: LetterId) -> Result<StateId, DfaError> {
        if state >= self.num_states() {
            return Err(DfaError::BadState { state, states: self.num_states() });
        }
        if letter >= self.num_letters() {
            return Err(DfaError::UnknownLetter { letter, size: self.num_letters() });
        }
        Ok(self.step(state, letter))
    }

    /// The state sequence `q0, q1, ..., q|word|` visited on `word`.
    pub fn run(&self, word: &[LetterId]) -> Result<Vec<StateId>, DfaError> {
        let mut states = Vec::with_capacity(word.len() + 1);
        let mut q = self.initial;
        states.push(q);
        for &letter in word {
            q = self.try_step(q, letter)?;
            states.push(q);
        }
        Ok(states)
    }

    pub fn accepts(&self, word: &[LetterId]) -> Result<bool, DfaError> {
        let run = self.run(word)?;
        Ok(self.accepting[*run.last().expect("run is never empty")])
    }

    pub fn is_absorbing(&self, state: StateId) -> bool {
        (0..self.num_letters()).all(|l| self.step(state, l) == state)
    }

    /// A non-accepting absorbing state, if the automaton has one.
    pub fn trap_state(&self) -> Option<StateId> {
        (0..self.num_states()).find(|&q| !self.accepting[q] && self.is_absorbing(q))
    }

    /// Synchronous product restricted to pairs reachable from the initial
    /// pair. A pair accepts iff both components accept.
    pub fn product(a: &Dfa, b: &Dfa, align: &LetterAlignment) -> Result<Dfa, DfaError> {
        let n = align.names.len();
        if n == 0 {
            return Err(DfaError::EmptyAlphabet);
        }
        if align.left.len() != n || align.right.len() != n {
            return Err(DfaError::Alignment(format!(
                "{} shared letters but {} left and {} right images",
                n,
                align.left.len(),
                align.right.len()
            )));
        }
        if let Some(&l) = align.left.iter().find(|&&l| l >= a.num_letters()) {
            return Err(DfaError::UnknownLetter { letter: l, size: a.num_letters() });
        }
        if let Some(&l) = align.right.iter().find(|&&l| l >= b.num_letters()) {
            return Err(DfaError::UnknownLetter { letter: l, size: b.num_letters() });
        }

        let mut ids: BTreeMap<(StateId, StateId), StateId> = BTreeMap::new();
        let mut pairs = vec![(a.initial, b.initial)];
        ids.insert((a.initial, b.initial), 0);
        let mut delta = Vec::new();
        let mut next = 0;
        while next < pairs.len() {
            let (qa, qb) = pairs[next];
            for c in 0..n {
                let succ = (a.step(qa, align.left[c]), b.step(qb, align.right[c]));
                let id = *ids.entry(succ).or_insert_with(|| {
                    pairs.push(succ);
                    pairs.len() - 1
                });
                delta.push(id);
            }
            next += 1;
        }
        let accepting = pairs
            .iter()
            .map(|&(qa, qb)| a.accepting[qa] && b.accepting[qb])
            .collect();
        Dfa::new(align.names.clone(), 0, delta, accepting)
    }

    /// Restricts to reachable states and renumbers them in breadth-first
    /// order, exploring letters in id order.
    pub fn trim(&self) -> Dfa {
        let (order, _) = self.bfs_order(|q| q);
        self.relabel(&order, |q| q)
    }

    /// Minimal equivalent automaton (Hopcroft partition refinement over the
    /// reachable part), canonically numbered in breadth-first order.
    pub fn minimize(&self) -> Dfa {
        let trimmed = self.trim();
        let block_of = trimmed.hopcroft_blocks();
        let (order, _) = trimmed.bfs_order(|q| block_of[q]);
        trimmed.relabel(&order, |q| block_of[q])
    }

    /// Breadth-first traversal over classes given by `class`; returns one
    /// representative per class in discovery order.
    fn bfs_order(&self, class: impl Fn(StateId) -> usize) -> (Vec<StateId>, BTreeMap<usize, usize>) {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        seen.insert(class(self.initial), 0);
        order.push(self.initial);
        queue.push_back(self.initial);
        while let Some(q) = queue.pop_front() {
            for l in 0..self.num_letters() {
                let succ = self.step(q, l);
                let c = class(succ);
                if let btree_map::Entry::Vacant(e) = seen.entry(c) {
                    e.insert(order.len());
                    order.push(succ);
                    queue.push_back(succ);
                }
            }
        }
        (order, seen)
    }

    fn relabel(&self, reps: &[StateId], class: impl Fn(StateId) -> usize) -> Dfa {
        let new_id: BTreeMap<usize, usize> =
            reps.iter().enumerate().map(|(i, &q)| (class(q), i)).collect();
        let mut delta = Vec::with_capacity(reps.len() * self.num_letters());
        for &q in reps {
            for l in 0..self.num_letters() {
                delta.push(new_id[&class(self.step(q, l))]);
            }
        }
        let accepting = reps.iter().map(|&q| self.accepting[q]).collect();
        Dfa::new(self.letters.clone(), 0, delta, accepting).expect("relabel preserves shape")
    }

    fn hopcroft_blocks(&self) -> Vec<usize> {
        let n = self.num_states();
        let m = self.num_letters();
        let mut inverse = vec![Vec::new(); n * m];
        for q in 0..n {
            for l in 0..m {
                inverse[self.step(q, l) * m + l].push(q);
            }
        }

        let mut blocks: Vec<Vec<StateId>> = Vec::new();
        let (acc, rej): (Vec<StateId>, Vec<StateId>) = (0..n).partition(|&q| self.accepting[q]);
        for part in [acc, rej] {
            if !part.is_empty() {
                blocks.push(part);
            }
        }
        let mut block_of = vec![0; n];
        for (b, states) in blocks.iter().enumerate() {
            for &q in states {
                block_of[q] = b;
            }
        }

        let mut work: Vec<usize> = (0..blocks.len()).collect();
        let mut in_work = vec![true; blocks.len()];
        let mut marked = vec![false; n];
        while let Some(splitter) = work.pop() {
            in_work[splitter] = false;
            let splitter_states = blocks[splitter].clone();
            for l in 0..m {
                let mut hits: BTreeMap<usize, Vec<StateId>> = BTreeMap::new();
                for &t in &splitter_states {
                    for &p in &inverse[t * m + l] {
                        hits.entry(block_of[p]).or_default().push(p);
                    }
                }
                for (b, inside) in hits {
                    if inside.len() == blocks[b].len() {
                        continue;
                    }
                    for &q in &inside {
                        marked[q] = true;
                    }
                    let outside: Vec<StateId> =
                        blocks[b].iter().copied().filter(|&q| !marked[q]).collect();
                    for &q in &inside {
                        marked[q] = false;
                    }
                    let new_block = blocks.len();
                    for &q in &inside {
                        block_of[q] = new_block;
                    }
                    let inside_len = inside.len();
                    let outside_len = outside.len();
                    blocks[b] = outside;
                    blocks.push(inside);
                    in_work.push(false);
                    if in_work[b] || inside_len <= outside_len {
                        work.push(new_block);
                        in_work[new_block] = true;
                    } else {
                        work.push(b);
                        in_work[b] = true;
                    }
                }
            }
        }
        block_of
    }

    /// Graphviz rendering; accepting states are drawn as double circles.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", name.replace('"', "'"));
        let _ = writeln!(out, "  rankdir=LR;");
        let _ = writeln!(out, "  __start [shape=point];");
        for q in 0..self.num_states() {
            let shape = if self.accepting[q] { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  {q} [shape={shape}];");
        }
        let _ = writeln!(out, "  __start -> {};", self.initial);
        for q in 0..self.num_states() {
            // Merge parallel edges into one label.
            let mut by_target: BTreeMap<StateId, Vec<&str>> = BTreeMap::new();
            for l in 0..self.num_letters() {
                by_target.entry(self.step(q, l)).or_default().push(&self.letters[l]);
            }
            for (target, labels) in by_target {
                let label = labels.join(" | ").replace('"', "'");
                let _ = writeln!(out, "  {q} -> {target} [label=\"{label}\"];");
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn letters(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("l{i}")).collect()
    }

    /// Naive pairwise distinguishability table; returns number of classes
    /// among reachable states.
    fn table_filling_classes(d: &Dfa) -> usize {
        let d = d.trim();
        let n = d.num_states();
        let mut distinct = vec![vec![false; n]; n];
        for p in 0..n {
            for q in 0..n {
                distinct[p][q] = d.is_accepting(p) != d.is_accepting(q);
            }
        }
        let mut changed = true;
        while changed {
            changed = false;
            for p in 0..n {
                for q in 0..n {
                    if distinct[p][q] {
                        continue;
                    }
                    if (0..d.num_letters()).any(|l| distinct[d.step(p, l)][d.step(q, l)]) {
                        distinct[p][q] = true;
                        changed = true;
                    }
                }
            }
        }
        let mut classes = 0;
        let mut assigned = vec![false; n];
        for p in 0..n {
            if assigned[p] {
                continue;
            }
            classes += 1;
            for q in p..n {
                if !distinct[p][q] {
                    assigned[q] = true;
                }
            }
        }
        classes
    }

    fn words(alphabet: usize, max_len: usize) -> Vec<Vec<LetterId>> {
        let mut all = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for w in &frontier {
                for l in 0..alphabet {
                    let mut w2: Vec<LetterId> = w.clone();
                    w2.push(l);
                    next.push(w2);
                }
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        all
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(matches!(
            Dfa::new(letters(2), 0, vec![0], vec![true]),
            Err(DfaError::TableSize { .. })
        ));
        assert!(matches!(
            Dfa::new(letters(1), 1, vec![0], vec![true]),
            Err(DfaError::BadState { .. })
        ));
        assert!(matches!(
            Dfa::new(letters(1), 0, vec![3], vec![true]),
            Err(DfaError::BadState { .. })
        ));
        assert_eq!(Dfa::new(vec![], 0, vec![], vec![true]), Err(DfaError::EmptyAlphabet));
    }

    #[test]
    fn run_on_empty_word_is_initial() {
        let d = Dfa::new(letters(2), 1, vec![0, 1, 1, 0], vec![true, false]).unwrap();
        assert_eq!(d.run(&[]).unwrap(), vec![1]);
        assert_eq!(d.run(&[1, 0]).unwrap(), vec![1, 0, 0]);
        assert_eq!(
            d.run(&[2]),
            Err(DfaError::UnknownLetter { letter: 2, size: 2 })
        );
    }

    #[test]
    fn universal_run_is_constant() {
        let u = Dfa::universal(letters(3)).unwrap();
        assert_eq!(u.run(&[0, 2, 1, 1]).unwrap(), vec![0; 5]);
        assert!(u.trap_state().is_none());
    }

    #[test]
    fn product_with_universal_is_identity() {
        // 3-state counter mod 3 over one letter, accepting state 0.
        let d = Dfa::new(letters(2), 0, vec![1, 0, 2, 1, 0, 2], vec![true, false, false]).unwrap();
        let u = Dfa::universal(letters(2)).unwrap();
        let p = Dfa::product(&u, &d, &LetterAlignment::identity(d.letters())).unwrap();
        assert_eq!(p, d.trim());
    }

    #[test]
    fn product_rejects_bad_alignment() {
        let u = Dfa::universal(letters(2)).unwrap();
        let align = LetterAlignment { names: letters(1), left: vec![0], right: vec![5] };
        assert!(matches!(Dfa::product(&u, &u, &align), Err(DfaError::UnknownLetter { .. })));
        let align = LetterAlignment { names: letters(2), left: vec![0], right: vec![0, 1] };
        assert!(matches!(Dfa::product(&u, &u, &align), Err(DfaError::Alignment(_))));
    }

    #[test]
    fn product_with_itself_keeps_language() {
        let d = Dfa::new(letters(2), 0, vec![1, 0, 2, 1, 2, 2], vec![true, true, false]).unwrap();
        let p = Dfa::product(&d, &d, &LetterAlignment::identity(d.letters())).unwrap();
        for w in words(2, 5) {
            assert_eq!(p.accepts(&w).unwrap(), d.accepts(&w).unwrap());
        }
    }

    #[test]
    fn minimize_collapses_equivalent_states() {
        // Same shape as a classic textbook example: 6 states, 3 classes.
        let delta = vec![1, 2, 0, 3, 4, 5, 4, 5, 4, 5, 5, 5];
        let acc = vec![false, false, true, true, true, false];
        let d = Dfa::new(letters(2), 0, delta, acc).unwrap();
        let m = d.minimize();
        assert_eq!(m.num_states(), table_filling_classes(&d));
        for w in words(2, 6) {
            assert_eq!(m.accepts(&w).unwrap(), d.accepts(&w).unwrap());
        }
    }

    #[test]
    fn trap_detection() {
        let d = Dfa::new(letters(2), 0, vec![0, 1, 1, 1], vec![true, false]).unwrap();
        assert_eq!(d.trap_state(), Some(1));
        assert!(d.is_absorbing(1));
        assert!(!d.is_absorbing(0));
    }

    #[test]
    fn dot_marks_accepting_states() {
        let d = Dfa::new(letters(1), 0, vec![1, 1], vec![true, false]).unwrap();
        let dot = d.to_dot("m");
        assert!(dot.contains("0 [shape=doublecircle]"));
        assert!(dot.contains("1 [shape=circle]"));
        assert!(dot.contains("0 -> 1"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_dfa(max_states: usize, alphabet: usize) -> impl Strategy<Value = Dfa> {
            (1..=max_states).prop_flat_map(move |n| {
                (
                    0..n,
                    proptest::collection::vec(0..n, n * alphabet),
                    proptest::collection::vec(any::<bool>(), n),
                )
                    .prop_map(move |(init, delta, acc)| {
                        Dfa::new(letters(alphabet), init, delta, acc).unwrap()
                    })
            })
        }

        proptest! {
            #[test]
            fn product_language_is_intersection(a in arb_dfa(8, 2), b in arb_dfa(8, 2)) {
                let p = Dfa::product(&a, &b, &LetterAlignment::identity(a.letters())).unwrap();
                for w in words(2, 5) {
                    prop_assert_eq!(
                        p.accepts(&w).unwrap(),
                        a.accepts(&w).unwrap() && b.accepts(&w).unwrap()
                    );
                }
            }

            #[test]
            fn minimize_matches_table_filling(d in arb_dfa(8, 2)) {
                let m = d.minimize();
                prop_assert_eq!(m.num_states(), table_filling_classes(&d));
                for w in words(2, 5) {
                    prop_assert_eq!(m.accepts(&w).unwrap(), d.accepts(&w).unwrap());
                }
            }

            #[test]
            fn run_respects_delta(d in arb_dfa(6, 3), w in proptest::collection::vec(0usize..3, 0..10)) {
                let run = d.run(&w).unwrap();
                prop_assert_eq!(run.len(), w.len() + 1);
                prop_assert_eq!(run[0], d.initial());
                for i in 0..w.len() {
                    prop_assert_eq!(run[i + 1], d.step(run[i], w[i]));
                }
            }
        }
    }
}
