use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use thiserror::Error;

use crate::abstraction::Geometry;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line {line} has width {found}, expected {expected}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("unexpected character {found:?} at line {line}, column {column}")]
    BadChar { line: usize, column: usize, found: char },
    #[error("agent {0} appears more than once")]
    DuplicateStart(usize),
    #[error("target {0} appears more than once")]
    DuplicateTarget(char),
    #[error("agents must be numbered 0..n without gaps; missing {0}")]
    MissingAgent(usize),
    #[error("agent {agent} has no target '{target}'")]
    MissingTarget { agent: usize, target: char },
    #[error("target '{0}' has no agent")]
    OrphanTarget(char),
    #[error("map has no agents")]
    NoAgents,
    #[error("unknown builtin map {0:?}")]
    UnknownBuiltin(String),
    #[error("cannot read map file {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot place {agents} agents on {free} free cells")]
    NotEnoughCells { agents: usize, free: usize },
}

pub const BUILTIN_MAPS: [(&str, &str); 6] = [
    ("open", include_str!("../../maps/open.txt")),
    ("bottleneck", include_str!("../../maps/bottleneck.txt")),
    ("cross", include_str!("../../maps/cross.txt")),
    ("rooms", include_str!("../../maps/rooms.txt")),
    ("ring", include_str!("../../maps/ring.txt")),
    ("maze", include_str!("../../maps/maze.txt")),
];

/// ASCII gridworld: `#` obstacle, `.` free, digit `i` the start of agent
/// `i`, letter `a + i` its target. Coordinates are `(column, row)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<(i32, i32)>,
    pub starts: Vec<(i32, i32)>,
    pub targets: Vec<(i32, i32)>,
}

impl GridMap {
    pub fn parse(name: &str, text: &str) -> Result<Self, MapError> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let width = lines.first().ok_or(MapError::Empty)?.chars().count();
        let mut obstacles = Vec::new();
        let mut starts: Vec<Option<(i32, i32)>> = vec![None; 10];
        let mut targets: Vec<Option<(i32, i32)>> = vec![None; 10];
        for (row, line) in lines.iter().enumerate() {
            let found = line.chars().count();
            if found != width {
                return Err(MapError::Ragged { line: row + 1, expected: width, found });
            }
            for (col, c) in line.chars().enumerate() {
                let cell = (col as i32, row as i32);
                match c {
                    '#' => obstacles.push(cell),
                    '.' => {}
                    '0'..='9' => {
                        let i = c as usize - '0' as usize;
                        if starts[i].replace(cell).is_some() {
                            return Err(MapError::DuplicateStart(i));
                        }
                    }
                    'a'..='j' => {
                        let i = c as usize - 'a' as usize;
                        if targets[i].replace(cell).is_some() {
                            return Err(MapError::DuplicateTarget(c));
                        }
                    }
                    _ => return Err(MapError::BadChar { line: row + 1, column: col + 1, found: c }),
                }
            }
        }
        let n = starts.iter().rposition(Option::is_some).map_or(0, |i| i + 1);
        if n == 0 {
            return Err(MapError::NoAgents);
        }
        if let Some(missing) = (0..n).find(|&i| starts[i].is_none()) {
            return Err(MapError::MissingAgent(missing));
        }
        if let Some(missing) = (0..n).find(|&i| targets[i].is_none()) {
            return Err(MapError::MissingTarget { agent: missing, target: (b'a' + missing as u8) as char });
        }
        if let Some(orphan) = (n..10).find(|&i| targets[i].is_some()) {
            return Err(MapError::OrphanTarget((b'a' + orphan as u8) as char));
        }
        Ok(Self {
            name: name.to_string(),
            width,
            height: lines.len(),
            obstacles,
            starts: starts[..n].iter().map(|s| s.unwrap()).collect(),
            targets: targets[..n].iter().map(|t| t.unwrap()).collect(),
        })
    }

    pub fn builtin(name: &str) -> Result<Self, MapError> {
        let (_, text) = BUILTIN_MAPS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| MapError::UnknownBuiltin(name.to_string()))?;
        Self::parse(name, text)
    }

    /// `builtin:<name>` or a path to a map file.
    pub fn load(source: &str) -> Result<Self, MapError> {
        if let Some(name) = source.strip_prefix("builtin:") {
            return Self::builtin(name);
        }
        let text = std::fs::read_to_string(source)
            .map_err(|e| MapError::Io { path: source.to_string(), message: e.to_string() })?;
        let name = Path::new(source).file_stem().and_then(|s| s.to_str()).unwrap_or("map");
        Self::parse(name, &text)
    }

    pub fn num_agents(&self) -> usize {
        self.starts.len()
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::grid(self.width, self.height, &self.obstacles)
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> Vec<(i32, i32)> {
        let blocked: BTreeSet<(i32, i32)> = self.obstacles.iter().copied().collect();
        let mut out = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                if !blocked.contains(&(x, y)) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Shortest obstacle-avoiding path length between two cells, ignoring
    /// other agents.
    pub fn distance(&self, from: (i32, i32), to: (i32, i32)) -> Option<usize> {
        let g = self.geometry();
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([(from, 0)]);
        while let Some((cell, d)) = queue.pop_front() {
            if cell == to {
                return Some(d);
            }
            for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
                let next = (cell.0 + dx, cell.1 + dy);
                if g.is_free(next.0, next.1) && seen.insert(next) {
                    queue.push_back((next, d + 1));
                }
            }
        }
        None
    }
}
