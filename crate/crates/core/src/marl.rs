//! Independent tabular Q-learning with ε-greedy exploration.

use std::collections::BTreeMap;
use std::io;

use rand::Rng;
use thiserror::Error;

use crate::abstraction::AgentAbs;
use crate::actions::Action;

/// Per-agent learning state: own abstract cell and own target id.
pub type QState = (AgentAbs, usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
}

impl Default for QParams {
    fn default() -> Self {
        Self { alpha: 0.1, gamma: 0.95, epsilon_start: 1.0, epsilon_decay: 0.999, epsilon_min: 0.05 }
    }
}

#[derive(Debug, Error)]
pub enum QTableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("q-table header does not match the action set: {0}")]
    Header(String),
    #[error("malformed q-table row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    actions: &'static [Action],
    params: QParams,
    epsilon: f64,
    values: BTreeMap<QState, Vec<f64>>,
}

impl QTable {
    pub fn new(actions: &'static [Action], params: QParams) -> Self {
        Self { actions, params, epsilon: params.epsilon_start, values: BTreeMap::new() }
    }

    pub fn actions(&self) -> &'static [Action] {
        self.actions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn index(&self, a: Action) -> usize {
        self.actions.iter().position(|&x| x == a).expect("action belongs to the table's action set")
    }

    pub fn value(&self, s: &QState, a: Action) -> f64 {
        self.values.get(s).map_or(0.0, |row| row[self.index(a)])
    }

    pub fn set(&mut self, s: QState, a: Action, v: f64) {
        let i = self.index(a);
        let n = self.actions.len();
        self.values.entry(s).or_insert_with(|| vec![0.0; n])[i] = v;
    }

    pub fn max_value(&self, s: &QState) -> f64 {
        self.values.get(s).map_or(0.0, |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Highest-valued action; ties go to the earliest action in the set.
    pub fn greedy(&self, s: &QState) -> Action {
        let Some(row) = self.values.get(s) else { return self.actions[0] };
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        self.actions[best]
    }

    pub fn select<R: Rng>(&self, s: &QState, rng: &mut R) -> Action {
        if rng.gen::<f64>() < self.epsilon {
            self.actions[rng.gen_range(0..self.actions.len())]
        } else {
            self.greedy(s)
        }
    }

    /// One-step TD update; `next = None` marks a terminal transition.
    pub fn update(&mut self, s: QState, a: Action, reward: f64, next: Option<&QState>) {
        let bootstrap = next.map_or(0.0, |n| self.max_value(n));
        let old = self.value(&s, a);
        let target = reward + self.params.gamma * bootstrap;
        self.set(s, a, old + self.params.alpha * (target - old));
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon = (self.epsilon * self.params.epsilon_decay).max(self.params.epsilon_min);
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), QTableError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x".to_string(), "y".into(), "heading_x".into(), "heading_y".into(), "target".into()];
        header.extend(self.actions.iter().map(|a| a.name().to_string()));
        w.write_record(&header)?;
        for ((cell, target), row) in &self.values {
            let mut rec = vec![
                cell.x.to_string(),
                cell.y.to_string(),
                cell.heading.0.to_string(),
                cell.heading.1.to_string(),
                target.to_string(),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(input: R, actions: &'static [Action], params: QParams) -> Result<Self, QTableError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let expected: Vec<&str> = ["x", "y", "heading_x", "heading_y", "target"]
            .into_iter()
            .chain(actions.iter().map(|a| a.name()))
            .collect();
        if header.iter().ne(expected.iter().copied()) {
            return Err(QTableError::Header(header.iter().collect::<Vec<_>>().join(",")));
        }
        let mut table = Self::new(actions, params);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| QTableError::Row { row: i + 1, message };
            let int = |j: usize| rec[j].parse::<i64>().map_err(|e| bad(format!("column {j}: {e}")));
            let cell = AgentAbs { x: int(0)? as i32, y: int(1)? as i32, heading: (int(2)? as i8, int(3)? as i8) };
            let target = int(4)? as usize;
            let row = (5..rec.len())
                .map(|j| rec[j].parse::<f64>().map_err(|e| bad(format!("column {j}: {e}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            table.values.insert((cell, target), row);
        }
        Ok(table)
    }
}
