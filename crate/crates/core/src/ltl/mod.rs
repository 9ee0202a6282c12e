//! Safety-fragment LTL: parsing, normalization and compilation to monitor
//! automata that trap on bad prefixes.

mod monitor;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use monitor::{to_monitor_dfa, MAX_PROPOSITIONS};
pub use parse::parse;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LtlError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown token {found:?} at byte {pos}")]
    UnknownToken { pos: usize, found: char },
    #[error("formula is outside the safety fragment (uses F or U): {0}")]
    NotSafety(String),
    #[error("proposition {0:?} is not in the alphabet")]
    UnknownAtom(String),
    #[error("duplicate proposition {0:?}")]
    DuplicateProposition(String),
    #[error("invalid proposition name {0:?}")]
    InvalidProposition(String),
    #[error("{count} propositions exceed the limit of {limit}")]
    TooManyPropositions { count: usize, limit: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Always(Box<Formula>),
    /// `F φ`, shorthand for `true U φ`.
    Eventually(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    /// Proposition names occurring in the formula, sorted.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(p) => {
                out.insert(p.clone());
            }
            Formula::Not(f) | Formula::Next(f) | Formula::Always(f) | Formula::Eventually(f) => {
                f.collect_atoms(out)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Maximum nesting of `X` along any path of the syntax tree.
    pub fn next_depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 0,
            Formula::Next(f) => 1 + f.next_depth(),
            Formula::Not(f) | Formula::Always(f) | Formula::Eventually(f) => f.next_depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                a.next_depth().max(b.next_depth())
            }
        }
    }

    /// Negation normal form with constant folding. Negations end up only
    /// directly above atoms; a negated until is rewritten with the identity
    /// `!(a U b) = (!b U (!a & !b)) | G !b`.
    pub fn normalize(&self) -> Formula {
        nnf(self, false)
    }

    /// True iff the normalized formula uses only propositional connectives,
    /// `X` and `G`.
    pub fn is_safety_fragment(&self) -> bool {
        fn check(f: &Formula) -> bool {
            match f {
                Formula::True | Formula::False | Formula::Atom(_) => true,
                Formula::Not(inner) => matches!(**inner, Formula::Atom(_)),
                Formula::And(a, b) | Formula::Or(a, b) => check(a) && check(b),
                Formula::Next(f) | Formula::Always(f) => check(f),
                Formula::Eventually(_) | Formula::Until(..) => false,
            }
        }
        check(&self.normalize())
    }
}

fn nnf(f: &Formula, negated: bool) -> Formula {
    use Formula::*;
    match (f, negated) {
        (True, false) | (False, true) => True,
        (True, true) | (False, false) => False,
        (Atom(p), false) => Atom(p.clone()),
        (Atom(p), true) => Formula::not(Atom(p.clone())),
        (Not(g), neg) => nnf(g, !neg),
        (And(a, b), false) => mk_and(nnf(a, false), nnf(b, false)),
        (And(a, b), true) => mk_or(nnf(a, true), nnf(b, true)),
        (Or(a, b), false) => mk_or(nnf(a, false), nnf(b, false)),
        (Or(a, b), true) => mk_and(nnf(a, true), nnf(b, true)),
        (Next(g), neg) => match nnf(g, neg) {
            True => True,
            False => False,
            inner => Formula::next(inner),
        },
        (Always(g), false) | (Eventually(g), true) => match nnf(g, negated) {
            c @ (True | False) => c,
            inner => Formula::always(inner),
        },
        (Eventually(g), false) | (Always(g), true) => match nnf(g, negated) {
            c @ (True | False) => c,
            inner => Formula::eventually(inner),
        },
        (Until(a, b), false) => match (nnf(a, false), nnf(b, false)) {
            (_, True) => True,
            (_, False) => False,
            (True, rhs) => Formula::eventually(rhs),
            (lhs, rhs) => Formula::until(lhs, rhs),
        },
        (Until(a, b), true) => {
            let not_a = nnf(a, true);
            let not_b = nnf(b, true);
            let release_part = match not_b.clone() {
                c @ (True | False) => c,
                inner => Formula::always(inner),
            };
            let until_part = match mk_and(not_a, not_b.clone()) {
                False => False,
                True => True,
                both => match not_b {
                    True => Formula::eventually(both),
                    False => both,
                    nb => Formula::until(nb, both),
                },
            };
            mk_or(until_part, release_part)
        }
    }
}

fn mk_and(a: Formula, b: Formula) -> Formula {
    match (a, b) {
        (Formula::False, _) | (_, Formula::False) => Formula::False,
        (Formula::True, x) | (x, Formula::True) => x,
        (x, y) => Formula::and(x, y),
    }
}

fn mk_or(a: Formula, b: Formula) -> Formula {
    match (a, b) {
        (Formula::True, _) | (_, Formula::True) => Formula::True,
        (Formula::False, x) | (x, Formula::False) => x,
        (x, y) => Formula::or(x, y),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(p) => write!(f, "{p}"),
            Formula::Not(g) => write!(f, "!{}", Paren(g)),
            Formula::And(a, b) => write!(f, "{} & {}", Paren(a), Paren(b)),
            Formula::Or(a, b) => write!(f, "{} | {}", Paren(a), Paren(b)),
            Formula::Next(g) => write!(f, "X {}", Paren(g)),
            Formula::Always(g) => write!(f, "G {}", Paren(g)),
            Formula::Eventually(g) => write!(f, "F {}", Paren(g)),
            Formula::Until(a, b) => write!(f, "{} U {}", Paren(a), Paren(b)),
        }
    }
}

/// Parenthesizes anything that is not an atom or constant.
struct Paren<'a>(&'a Formula);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Formula::True | Formula::False | Formula::Atom(_) => write!(f, "{}", self.0),
            other => write!(f, "({other})"),
        }
    }
}

/// An ordered set of proposition names. A letter is a full truth
/// assignment, encoded as a bitmask where bit `i` is proposition `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropositionAlphabet {
    names: Vec<String>,
}

impl PropositionAlphabet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, LtlError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            if !is_identifier(name) {
                return Err(LtlError::InvalidProposition(name.to_string()));
            }
            if !seen.insert(name) {
                return Err(LtlError::DuplicateProposition(name.to_string()));
            }
            out.push(name.to_string());
        }
        if out.len() > MAX_PROPOSITIONS {
            return Err(LtlError::TooManyPropositions { count: out.len(), limit: MAX_PROPOSITIONS });
        }
        Ok(Self { names: out })
    }

    /// Alphabet over exactly the atoms of `f`, in sorted order.
    pub fn of_formula(f: &Formula) -> Result<Self, LtlError> {
        let atoms: Vec<String> = f.atoms().into_iter().collect();
        Self::new(&atoms)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_letters(&self) -> usize {
        1 << self.names.len()
    }

    pub fn holds(&self, letter: usize, prop: usize) -> bool {
        letter >> prop & 1 == 1
    }

    /// Letter for the given set of true propositions.
    pub fn letter<S: AsRef<str>>(&self, true_props: &[S]) -> Result<usize, LtlError> {
        let mut letter = 0;
        for p in true_props {
            let i = self
                .index_of(p.as_ref())
                .ok_or_else(|| LtlError::UnknownAtom(p.as_ref().to_string()))?;
            letter |= 1 << i;
        }
        Ok(letter)
    }

    /// Human-readable description, e.g. `{a,!b}`.
    pub fn describe(&self, letter: usize) -> String {
        let parts: Vec<String> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| if self.holds(letter, i) { n.clone() } else { format!("!{n}") })
            .collect();
        format!("{{{}}}", parts.join(","))
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_pushes_negation_to_atoms() {
        let f = parse("!(a & X G b)").unwrap().normalize();
        assert_eq!(
            f,
            Formula::or(
                Formula::not(Formula::atom("a")),
                Formula::next(Formula::eventually(Formula::not(Formula::atom("b"))))
            )
        );
        let g = parse("!F !c").unwrap().normalize();
        assert_eq!(g, Formula::always(Formula::atom("c")));
    }

    #[test]
    fn normalize_negated_until() {
        let f = parse("!(a U b)").unwrap().normalize();
        let na = Formula::not(Formula::atom("a"));
        let nb = Formula::not(Formula::atom("b"));
        assert_eq!(
            f,
            Formula::or(
                Formula::until(nb.clone(), Formula::and(na, nb.clone())),
                Formula::always(nb)
            )
        );
    }

    #[test]
    fn normalize_folds_constants() {
        assert_eq!(parse("G true").unwrap().normalize(), Formula::True);
        assert_eq!(parse("a & false").unwrap().normalize(), Formula::False);
        assert_eq!(parse("X (a | !false)").unwrap().normalize(), Formula::True);
        assert_eq!(parse("!true | b").unwrap().normalize(), Formula::atom("b"));
    }

    #[test]
    fn safety_fragment_membership() {
        assert!(Formula::always(Formula::not(Formula::atom("collision"))).is_safety_fragment());
        assert!(!Formula::eventually(Formula::atom("goal")).is_safety_fragment());
        assert!(parse("G (!a | X !b)").unwrap().is_safety_fragment());
        assert!(!parse("a U b").unwrap().is_safety_fragment());
        // Negated eventually is an invariant.
        assert!(parse("!F bad").unwrap().is_safety_fragment());
        assert!(!parse("!G a").unwrap().is_safety_fragment());
        assert!(parse("true").unwrap().is_safety_fragment());
    }

    #[test]
    fn next_depth_counts_nesting() {
        assert_eq!(parse("a").unwrap().next_depth(), 0);
        assert_eq!(parse("G (a | X X b) & X c").unwrap().next_depth(), 2);
    }

    #[test]
    fn display_round_trips_through_parse() {
        for text in ["G !collision", "G (!a | X !b)", "a U (b & c)", "(a -> b) & F c"] {
            let f = parse(text).unwrap();
            assert_eq!(parse(&f.to_string()).unwrap(), f, "{text}");
        }
    }

    #[test]
    fn alphabet_validation() {
        assert!(PropositionAlphabet::new(&["a", "b"]).is_ok());
        assert_eq!(
            PropositionAlphabet::new(&["a", "a"]),
            Err(LtlError::DuplicateProposition("a".into()))
        );
        assert_eq!(
            PropositionAlphabet::new(&["1x"]),
            Err(LtlError::InvalidProposition("1x".into()))
        );
        let nine: Vec<String> = (0..9).map(|i| format!("p{i}")).collect();
        assert_eq!(
            PropositionAlphabet::new(&nine),
            Err(LtlError::TooManyPropositions { count: 9, limit: 8 })
        );
    }

    #[test]
    fn letters_are_bitmasks() {
        let a = PropositionAlphabet::new(&["a", "b"]).unwrap();
        assert_eq!(a.num_letters(), 4);
        assert_eq!(a.letter(&["b"]).unwrap(), 2);
        assert_eq!(a.describe(2), "{!a,b}");
        assert_eq!(a.letter(&["z"]), Err(LtlError::UnknownAtom("z".into())));
    }
}
