//! Anatomical sensor graphs and their cyclic schedule.

mod layout;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layout::{SensorLayout, SensorPosition, Side, DSADS_LAYOUT, OPPT_LAYOUT};
pub use schedule::{active_graph, CycleSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("layout error: {0}")]
    Layout(String),
    #[error("layout error: link {from} -> {to} is not mirrored by {to} -> {from}")]
    AsymmetricLink { from: String, to: String },
    #[error("singular degree: node {node} ({name}) has no edges and self-loops are disabled")]
    SingularDegree { node: usize, name: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// The three anatomical edge families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Interconnected,
    Analogous,
    Lateral,
}

impl GraphKind {
    /// Cycle order.
    pub const ALL: [GraphKind; 3] = [
        GraphKind::Interconnected,
        GraphKind::Analogous,
        GraphKind::Lateral,
    ];

    pub fn code(self) -> char {
        match self {
            GraphKind::Interconnected => 'I',
            GraphKind::Analogous => 'A',
            GraphKind::Lateral => 'L',
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            GraphKind::Interconnected => "Interconnected",
            GraphKind::Analogous => "Analogous",
            GraphKind::Lateral => "Lateral",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for GraphKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "interconnected" => Ok(GraphKind::Interconnected),
            "a" | "analogous" => Ok(GraphKind::Analogous),
            "l" | "lateral" => Ok(GraphKind::Lateral),
            _ => Err(format!("unknown graph kind {s:?} (expected I, A or L)")),
        }
    }
}

/// Square 0/1 adjacency in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    cells: Vec<u8>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            n,
            cells: vec![0; n * n],
        }
    }

    pub fn connect(&mut self, i: usize, j: usize) {
        self.cells[i * self.n + j] = 1;
        self.cells[j * self.n + i] = 1;
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j] == 1
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.get(i, j)).count()
    }
}

/// `D^{-1/2} (A [+ I]) D^{-1/2}` with degrees taken from `A [+ I]`.
///
/// Without self-loops a node of degree zero has no finite normalization and is
/// reported as `SingularDegree` (with an empty name; see [`AnatomicalGraph`]).
pub fn normalize(a: &Adjacency, add_self_loops: bool) -> Result<Vec<f64>, GraphError> {
    let n = a.len();
    let weight = |i: usize, j: usize| -> f64 {
        let base = if a.get(i, j) { 1.0 } else { 0.0 };
        if add_self_loops && i == j {
            base + 1.0
        } else {
            base
        }
    };
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = (0..n).map(|j| weight(i, j)).sum();
        if d <= 0.0 {
            return Err(GraphError::SingularDegree {
                node: i,
                name: String::new(),
            });
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv_sqrt[i] * weight(i, j) * inv_sqrt[j];
        }
    }
    Ok(out)
}

pub fn build_interconnected(layout: &SensorLayout) -> Adjacency {
    let mut a = Adjacency::empty(layout.len());
    for p in layout.positions() {
        for &l in &p.links {
            a.connect(p.id, l);
        }
    }
    a
}

pub fn build_analogous(layout: &SensorLayout) -> Adjacency {
    let mut a = Adjacency::empty(layout.len());
    let ps = layout.positions();
    for p in ps {
        for q in ps {
            let mirrored = matches!(
                (p.side, q.side),
                (Side::Left, Side::Right) | (Side::Right, Side::Left)
            );
            if mirrored && layout::mirror_key(&p.name) == layout::mirror_key(&q.name) {
                a.connect(p.id, q.id);
            }
        }
    }
    a
}

pub fn build_lateral(layout: &SensorLayout) -> Adjacency {
    let mut a = Adjacency::empty(layout.len());
    let ps = layout.positions();
    for p in ps {
        for q in ps {
            if p.id != q.id && p.side == q.side {
                a.connect(p.id, q.id);
            }
        }
    }
    a
}

pub fn build(layout: &SensorLayout, kind: GraphKind) -> Adjacency {
    match kind {
        GraphKind::Interconnected => build_interconnected(layout),
        GraphKind::Analogous => build_analogous(layout),
        GraphKind::Lateral => build_lateral(layout),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnatomicalGraph {
    pub kind: GraphKind,
    pub adjacency: Adjacency,
    /// Normalized propagation matrix, row-major `n × n`.
    pub a_hat: Vec<f64>,
    pub self_loops: bool,
}

impl AnatomicalGraph {
    pub fn new(layout: &SensorLayout, kind: GraphKind, add_self_loops: bool) -> Result<Self, GraphError> {
        let adjacency = build(layout, kind);
        let a_hat = normalize(&adjacency, add_self_loops).map_err(|e| match e {
            GraphError::SingularDegree { node, .. } => GraphError::SingularDegree {
                node,
                name: layout.positions()[node].name.clone(),
            },
            other => other,
        })?;
        Ok(AnatomicalGraph {
            kind,
            adjacency,
            a_hat,
            self_loops: add_self_loops,
        })
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.len()
    }
}

/// Propagation matrix used for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphSel {
    Kind(GraphKind),
    /// `Â = I`: nodes are processed independently.
    Identity,
}

impl GraphSel {
    pub fn label(self) -> &'static str {
        match self {
            GraphSel::Kind(k) => k.title(),
            GraphSel::Identity => "Identity",
        }
    }
}

impl fmt::Display for GraphSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// All propagation matrices for one layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSet {
    pub graphs: [AnatomicalGraph; 3],
    identity: Vec<f64>,
}

impl GraphSet {
    pub fn new(layout: &SensorLayout, add_self_loops: bool) -> Result<Self, GraphError> {
        let n = layout.len();
        let mut identity = vec![0.0; n * n];
        for i in 0..n {
            identity[i * n + i] = 1.0;
        }
        Ok(GraphSet {
            graphs: [
                AnatomicalGraph::new(layout, GraphKind::Interconnected, add_self_loops)?,
                AnatomicalGraph::new(layout, GraphKind::Analogous, add_self_loops)?,
                AnatomicalGraph::new(layout, GraphKind::Lateral, add_self_loops)?,
            ],
            identity,
        })
    }

    pub fn get(&self, kind: GraphKind) -> &AnatomicalGraph {
        &self.graphs[kind as usize]
    }

    pub fn a_hat(&self, sel: GraphSel) -> &[f64] {
        match sel {
            GraphSel::Kind(k) => &self.get(k).a_hat,
            GraphSel::Identity => &self.identity,
        }
    }

    pub fn nodes(&self) -> usize {
        self.graphs[0].nodes()
    }
}
