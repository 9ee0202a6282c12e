//! Monitor construction for safety-fragment formulas.
//!
//! A formula in negation normal form is unfolded into obligation sets: each
//! set is expanded into branches that constrain the current letter and
//! defer obligations to the next position (`X φ` defers `φ`, `G φ` demands
//! `φ` now and defers `G φ`). Subset construction over obligation sets
//! yields a deterministic automaton; states from which no infinite
//! continuation survives are exactly the bad-prefix states and collapse
//! into a single trap during minimization.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Formula, LtlError, PropositionAlphabet};
use crate::automata::Dfa;

/// Upper bound on propositions per specification (2^8 letters).
pub const MAX_PROPOSITIONS: usize = 8;

type Obligations = BTreeSet<Formula>;
type SubsetState = BTreeSet<Obligations>;

#[derive(Clone, Debug)]
struct Branch {
    pos: u32,
    neg: u32,
    next: Obligations,
}

impl Branch {
    fn admits(&self, letter: u32) -> bool {
        self.pos & !letter == 0 && self.neg & letter == 0
    }
}

fn expand(
    mut todo: Vec<Formula>,
    mut branch: Branch,
    alphabet: &PropositionAlphabet,
    out: &mut Vec<Branch>,
) {
    while let Some(f) = todo.pop() {
        match f {
            Formula::True => {}
            Formula::False => return,
            Formula::Atom(p) => {
                branch.pos |= 1 << alphabet.index_of(&p).expect("atoms checked");
                if branch.pos & branch.neg != 0 {
                    return;
                }
            }
            Formula::Not(inner) => {
                let Formula::Atom(p) = *inner else { unreachable!("formula is normalized") };
                branch.neg |= 1 << alphabet.index_of(&p).expect("atoms checked");
                if branch.pos & branch.neg != 0 {
                    return;
                }
            }
            Formula::And(a, b) => {
                todo.push(*a);
                todo.push(*b);
            }
            Formula::Or(a, b) => {
                let mut left = todo.clone();
                left.push(*a);
                expand(left, branch.clone(), alphabet, out);
                todo.push(*b);
            }
            Formula::Next(a) => {
                branch.next.insert(*a);
            }
            Formula::Always(a) => {
                branch.next.insert(Formula::Always(a.clone()));
                todo.push(*a);
            }
            Formula::Eventually(_) | Formula::Until(..) => unreachable!("safety fragment checked"),
        }
    }
    out.push(branch);
}

/// Compiles a safety formula into a minimal total monitor. Accepting states
/// are those reached by words that are not bad prefixes; every bad prefix
/// ends in the unique non-accepting absorbing state.
pub fn to_monitor_dfa(f: &Formula, alphabet: &PropositionAlphabet) -> Result<Dfa, LtlError> {
    if !f.is_safety_fragment() {
        return Err(LtlError::NotSafety(f.to_string()));
    }
    if let Some(missing) = f.atoms().into_iter().find(|a| alphabet.index_of(a).is_none()) {
        return Err(LtlError::UnknownAtom(missing));
    }
    let letters = alphabet.num_letters();
    let root = f.normalize();

    let mut branch_cache: BTreeMap<Obligations, Vec<Branch>> = BTreeMap::new();
    let mut branches_of = |obligations: &Obligations| -> Vec<Branch> {
        branch_cache
            .entry(obligations.clone())
            .or_insert_with(|| {
                let mut out = Vec::new();
                let empty = Branch { pos: 0, neg: 0, next: Obligations::new() };
                expand(obligations.iter().cloned().collect(), empty, alphabet, &mut out);
                out
            })
            .clone()
    };

    let initial: SubsetState = [Obligations::from([root])].into_iter().collect();
    let mut ids: BTreeMap<SubsetState, usize> = BTreeMap::new();
    let mut states = vec![initial.clone()];
    ids.insert(initial, 0);
    let mut delta: Vec<usize> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        let current = states[s].clone();
        let expanded: Vec<Vec<Branch>> = current.iter().map(&mut branches_of).collect();
        let row_start = delta.len();
        delta.resize(row_start + letters, 0);
        for letter in 0..letters {
            let succ: SubsetState = expanded
                .iter()
                .flatten()
                .filter(|b| b.admits(letter as u32))
                .map(|b| b.next.clone())
                .collect();
            let id = match ids.get(&succ) {
                Some(&id) => id,
                None => {
                    let id = states.len();
                    ids.insert(succ.clone(), id);
                    states.push(succ);
                    queue.push_back(id);
                    id
                }
            };
            delta[row_start + letter] = id;
        }
    }
    // Rows were appended in queue order, which equals id order.
    let n = states.len();

    // Greatest fixed point: live states have a live successor. The empty
    // subset (no surviving obligation set) is dead by definition.
    let mut live: Vec<bool> = states.iter().map(|s| !s.is_empty()).collect();
    loop {
        let mut changed = false;
        for q in 0..n {
            if live[q] && !(0..letters).any(|l| live[delta[q * letters + l]]) {
                live[q] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let names = (0..letters).map(|l| alphabet.describe(l)).collect();
    let dfa = Dfa::new(names, 0, delta, live).expect("construction is total");
    Ok(dfa.minimize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse;

    fn monitor(text: &str, props: &[&str]) -> Dfa {
        let alphabet = PropositionAlphabet::new(props).unwrap();
        to_monitor_dfa(&parse(text).unwrap(), &alphabet).unwrap()
    }

    #[test]
    fn never_collision_has_two_states() {
        let alphabet = PropositionAlphabet::new(&["collision"]).unwrap();
        let d = monitor("G !collision", &["collision"]);
        assert_eq!(d.num_states(), 2);
        let safe = d.initial();
        assert!(d.is_accepting(safe));
        let no = alphabet.letter::<&str>(&[]).unwrap();
        let yes = alphabet.letter(&["collision"]).unwrap();
        assert_eq!(d.step(safe, no), safe);
        let trap = d.step(safe, yes);
        assert_ne!(trap, safe);
        assert!(!d.is_accepting(trap));
        assert!(d.is_absorbing(trap));
        assert_eq!(d.run(&[no, yes]).unwrap(), vec![safe, safe, trap]);
    }

    #[test]
    fn true_is_universal() {
        let d = monitor("true", &["a"]);
        assert_eq!(d.num_states(), 1);
        assert!(d.is_accepting(0));
        assert!(d.is_absorbing(0));
    }

    #[test]
    fn deferred_obligation_has_three_states() {
        let d = monitor("G (!a | X !b)", &["a", "b"]);
        assert_eq!(d.num_states(), 3);
        assert!(d.trap_state().is_some());
    }

    #[test]
    fn unsatisfiable_formula_rejects_empty_word() {
        let d = monitor("G a & X !a", &["a"]);
        assert_eq!(d.num_states(), 1);
        assert!(!d.is_accepting(d.initial()));
        // Contradiction only visible one step ahead of the syntax.
        let d = monitor("G (!a | X a) & G (!a | X b) & G (!b | X !a)", &["a", "b"]);
        let alphabet = PropositionAlphabet::new(&["a", "b"]).unwrap();
        let a = alphabet.letter(&["a"]).unwrap();
        assert!(d.is_accepting(d.initial()));
        assert!(!d.accepts(&[a]).unwrap());
    }

    #[test]
    fn rejects_non_safety_and_unknown_atoms() {
        let alphabet = PropositionAlphabet::new(&["a"]).unwrap();
        assert!(matches!(
            to_monitor_dfa(&parse("F a").unwrap(), &alphabet),
            Err(LtlError::NotSafety(_))
        ));
        assert_eq!(
            to_monitor_dfa(&parse("G b").unwrap(), &alphabet),
            Err(LtlError::UnknownAtom("b".into()))
        );
    }

    #[test]
    fn extra_propositions_are_ignored() {
        let d = monitor("G !a", &["a", "b", "c"]);
        assert_eq!(d.num_states(), 2);
        assert_eq!(d.num_letters(), 8);
    }
}
