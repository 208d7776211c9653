//! De Bruijn graphs and general labeled out-degree-2 digraphs.
//!
//! Nodes are dense indices `0..n`. Every node carries exactly two outgoing
//! edges, one labeled `+1` and one labeled `-1`; self-loops and parallel
//! edges are allowed. Edge `2*x` is the `+1` edge out of `x`, edge `2*x + 1`
//! the `-1` edge, which fixes a canonical ordering for all traversals.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported de Bruijn depth (node count `2^d`).
pub const MAX_DEBRUIJN_DEPTH: usize = 20;

/// Largest graph accepted by the simple-cycle enumerator.
pub const MAX_CYCLE_ENUM_NODES: usize = 1 << 12;

/// Retry budget for the random Eulerian graph generator.
const GENERATION_RETRIES: usize = 1000;

pub type NodeId = usize;
pub type EdgeId = usize;

/// A `+1`/`-1` symbol: market movement, edge label, player move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(Error::Domain(format!("symbol {v} is not +1 or -1"))),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    /// Edge slot in the canonical ordering: `+1` first.
    fn slot(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    fn from_slot(slot: usize) -> Self {
        if slot == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => write!(f, "+"),
            Sign::Minus => write!(f, "-"),
        }
    }
}

/// A length-`d` history word over `{-1,+1}`, the node type of the de Bruijn
/// graph.
///
/// Stored as a `d`-bit integer with bit 1 meaning `+1`; the oldest symbol is
/// the most significant bit, so appending a symbol is a shift-and-mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MarketState {
    bits: u32,
    depth: u8,
}

impl MarketState {
    pub fn new(symbols: &[Sign]) -> Result<Self> {
        let d = symbols.len();
        if !(1..=MAX_DEBRUIJN_DEPTH).contains(&d) {
            return Err(Error::Size {
                what: "history depth d",
                value: d,
                min: 1,
                max: MAX_DEBRUIJN_DEPTH,
            });
        }
        let mut bits = 0u32;
        for &s in symbols {
            bits = (bits << 1) | u32::from(s == Sign::Plus);
        }
        Ok(Self {
            bits,
            depth: d as u8,
        })
    }

    /// History whose node index in `debruijn(d)` is `index`.
    pub fn from_index(index: usize, d: usize) -> Result<Self> {
        if !(1..=MAX_DEBRUIJN_DEPTH).contains(&d) {
            return Err(Error::Size {
                what: "history depth d",
                value: d,
                min: 1,
                max: MAX_DEBRUIJN_DEPTH,
            });
        }
        if index >= (1usize << d) {
            return Err(Error::Domain(format!(
                "history index {index} out of range for d = {d}"
            )));
        }
        Ok(Self {
            bits: index as u32,
            depth: d as u8,
        })
    }

    /// The all-`-1` history (canonical experiment start state).
    pub fn all_minus(d: usize) -> Result<Self> {
        Self::from_index(0, d)
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    /// Node index in `debruijn(depth)`.
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    /// Symbol `m_{i+1}` for `i` in `0..d`, oldest first.
    pub fn symbol(&self, i: usize) -> Sign {
        debug_assert!(i < self.depth());
        let shift = self.depth() - 1 - i;
        Sign::from_slot(1 - ((self.bits >> shift) & 1) as usize)
    }

    /// Concatenation `m|b`: drop the oldest symbol, append `b`.
    pub fn concat(&self, b: Sign) -> Self {
        let mask = (1u32 << self.depth) - 1;
        Self {
            bits: ((self.bits << 1) | u32::from(b == Sign::Plus)) & mask,
            depth: self.depth,
        }
    }

    /// Concatenation `m|s` for a word `s`, applied symbol by symbol.
    pub fn concat_word(&self, word: &[Sign]) -> Self {
        word.iter().fold(*self, |m, &b| m.concat(b))
    }

    pub fn symbols(&self) -> Vec<Sign> {
        (0..self.depth()).map(|i| self.symbol(i)).collect()
    }
}

impl fmt::Display for MarketState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.depth() {
            write!(f, "{}", self.symbol(i))?;
        }
        Ok(())
    }
}

impl FromStr for MarketState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols: Vec<Sign> = s
            .chars()
            .map(|c| match c {
                '+' => Ok(Sign::Plus),
                '-' => Ok(Sign::Minus),
                _ => Err(Error::Domain(format!(
                    "history string may only contain '+' and '-', got {c:?}"
                ))),
            })
            .collect::<Result<_>>()?;
        Self::new(&symbols)
    }
}

/// A directed edge with its `+1`/`-1` label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub label: Sign,
}

/// Directed graph in which every node has exactly two outgoing edges labeled
/// `+1` and `-1`. Covers de Bruijn graphs and the general Eulerian instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDigraph {
    /// `succ[x][0]` is the `+1` successor of `x`, `succ[x][1]` the `-1` one.
    succ: Vec<[NodeId; 2]>,
}

impl LabeledDigraph {
    /// The de Bruijn graph on `{-1,+1}^d`: node `m` points to `m|+1` (label
    /// `+1`) and `m|-1` (label `-1`).
    pub fn debruijn(d: usize) -> Result<Self> {
        if !(1..=MAX_DEBRUIJN_DEPTH).contains(&d) {
            return Err(Error::Size {
                what: "de Bruijn depth d",
                value: d,
                min: 1,
                max: MAX_DEBRUIJN_DEPTH,
            });
        }
        let n = 1usize << d;
        let mask = n - 1;
        let succ = (0..n)
            .map(|m| [((m << 1) | 1) & mask, (m << 1) & mask])
            .collect();
        Ok(Self { succ })
    }

    /// Build from explicit successor pairs (`+1` target, `-1` target).
    pub fn from_successors(succ: Vec<[NodeId; 2]>) -> Result<Self> {
        let n = succ.len();
        if n == 0 {
            return Err(Error::Structure("graph has no nodes".into()));
        }
        for (x, pair) in succ.iter().enumerate() {
            for &y in pair {
                if y >= n {
                    return Err(Error::Structure(format!(
                        "node {x} has successor {y} outside 0..{n}"
                    )));
                }
            }
        }
        Ok(Self { succ })
    }

    /// Random strongly connected graph with in/out degree 2 and balanced
    /// labels, via stub pairing with rejection on disconnection.
    pub fn random_eulerian(node_count: usize, seed: u64) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::Size {
                what: "node_count",
                value: node_count,
                min: 2,
                max: usize::MAX,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..GENERATION_RETRIES {
            // Two in-stubs per node, matched uniformly to the 2n out-stubs.
            let mut targets: Vec<NodeId> = (0..node_count).flat_map(|x| [x, x]).collect();
            targets.shuffle(&mut rng);
            let succ: Vec<[NodeId; 2]> = (0..node_count)
                .map(|x| [targets[2 * x], targets[2 * x + 1]])
                .collect();
            let g = Self { succ };
            if g.check_eulerian().is_ok() {
                return Ok(g);
            }
        }
        Err(Error::Generation {
            attempts: GENERATION_RETRIES,
            reason: format!("no strongly connected pairing found for {node_count} nodes"),
        })
    }

    pub fn node_count(&self) -> usize {
        self.succ.len()
    }

    pub fn edge_count(&self) -> usize {
         2 * self.succ.len()
    }

    /// Target of the edge out of `x` with the given label.
    pub fn successor(&self, x: NodeId, label: Sign) -> NodeId {
        self.succ[x][label.slot()]
    }

    pub fn edge(&self, e: EdgeId) -> Result<Edge> {
        if e >= self.edge_count() {
            return Err(Error::Domain(format!(
                "edge id {e} out of range (graph has {} edges)",
                self.edge_count()
            )));
        }
        let from = e / 2;
        let label = Sign::from_slot(e % 2);
        Ok(Edge {
            from,
            to: self.succ[from][e % 2],
            label,
        })
    }

    pub fn edge_id(&self, from: NodeId, label: Sign) -> EdgeId {
        2 * from + label.slot()
    }

    /// All edges in canonical order (by source node, `+1` before `-1`).
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.succ.iter().enumerate().flat_map(|(x, pair)| {
            [
                Edge {
                    from: x,
                    to: pair[0],
                    label: Sign::Plus,
                },
                Edge {
                    from: x,
                    to: pair[1],
                    label: Sign::Minus,
                },
            ]
        })
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.node_count()];
        for pair in &self.succ {
            deg[pair[0]] += 1;
            deg[pair[1]] += 1;
        }
        deg
    }

    /// Check the Euler conditions: in-degree 2 everywhere and connectivity.
    pub fn check_eulerian(&self) -> Result<()> {
        for (x, &deg) in self.in_degrees().iter().enumerate() {
            if deg != 2 {
                return Err(Error::Structure(format!(
                    "node {x} has in-degree {deg}, expected 2"
                )));
            }
        }
        // With balanced degrees, forward reachability from node 0 implies
        // strong connectivity.
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &self.succ[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        if let Some(x) = seen.iter().position(|&s| !s) {
            return Err(Error::Structure(format!(
                "graph is disconnected: node {x} unreachable from node 0"
            )));
        }
        Ok(())
    }

    /// Deterministic Eulerian circuit (Hierholzer, start node 0, `+1` edges
    /// first).
    pub fn eulerian_cycle(&self) -> Result<Cycle> {
        self.check_eulerian()?;
        let n = self.node_count();
        let mut next_slot = vec![0usize; n];
        let mut stack: Vec<(NodeId, Option<EdgeId>)> = vec![(0, None)];
        let mut reversed: Vec<EdgeId> = Vec::with_capacity(2 * n);
        while let Some(&(x, e_in)) = stack.last() {
            if next_slot[x] < 2 {
                let slot = next_slot[x];
                next_slot[x] += 1;
                stack.push((self.succ[x][slot], Some(2 * x + slot)));
            } else {
                stack.pop();
                if let Some(e) = e_in {
                    reversed.push(e);
                }
            }
        }
        if reversed.len() != self.edge_count() {
            return Err(Error::Structure(
                "Eulerian traversal did not use every edge".into(),
            ));
        }
        reversed.reverse();
        Ok(Cycle { edges: reversed })
    }

    /// Enumerate all simple cycles (node-disjoint closed walks), each once,
    /// rotated to start at its smallest node. Parallel edges give distinct
    /// cycles. Errors out when more than `cap` cycles exist.
    pub fn simple_cycles(&self, cap: usize) -> Result<Vec<Cycle>> {
        let n = self.node_count();
        if n > MAX_CYCLE_ENUM_NODES {
            return Err(Error::Size {
                what: "node count for cycle enumeration",
                value: n,
                min: 1,
                max: MAX_CYCLE_ENUM_NODES,
            });
        }
        let mut found: Vec<Cycle> = Vec::new();
        let mut on_path = vec![false; n];
        let mut path: Vec<EdgeId> = Vec::new();
        for start in 0..n {
            self.cycle_search(start, start, &mut on_path, &mut path, cap, &mut found)?;
        }
        Ok(found)
    }

    /// Backtracking search for cycles through `start` using only nodes
    /// `>= start`, so each cycle is produced exactly once in canonical
    /// rotation.
    fn cycle_search(
        &self,
        start: NodeId,
        current: NodeId,
        on_path: &mut [bool],
        path: &mut Vec<EdgeId>,
        cap: usize,
        found: &mut Vec<Cycle>,
    ) -> Result<()> {
        on_path[current] = true;
        for slot in 0..2 {
            let e = 2 * current + slot;
            let y = self.succ[current][slot];
            if y == start {
                if found.len() == cap {
                    return Err(Error::Capacity {
                        what: "simple cycle enumeration",
                        reached: cap + 1,
                        cap,
                    });
                }
                let mut edges = path.clone();
                edges.push(e);
                found.push(Cycle { edges });
            } else if y > start && !on_path[y] {
                path.push(e);
                self.cycle_search(start, y, on_path, path, cap, found)?;
                path.pop();
            }
        }
        on_path[current] = false;
        Ok(())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let spec = GraphSpec {
            nodes: (0..self.node_count() as u64).collect(),
            edges: self
                .edges()
                .map(|e| EdgeSpec {
                    from: e.from as u64,
                    to: e.to as u64,
                    label: e.label.as_i8(),
                })
                .collect(),
        };
        serde_json::to_value(spec).expect("graph serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: GraphSpec = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad graph JSON: {e}")))?;
        Self::from_spec(spec)
    }

    fn from_spec(spec: GraphSpec) -> Result<Self> {
        let mut ids = spec.nodes.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != spec.nodes.len() {
            return Err(Error::Config("duplicate node ids in graph spec".into()));
        }
        let index_of = |id: u64| -> Result<usize> {
            ids.binary_search(&id)
                .map_err(|_| Error::Config(format!("edge refers to unknown node id {id}")))
        };
        let n = ids.len();
        let mut succ: Vec<[Option<NodeId>; 2]> = vec![[None, None]; n];
        for e in &spec.edges {
            let from = index_of(e.from)?;
            let to = index_of(e.to)?;
            let slot = Sign::from_i8(e.label)?.slot();
            if succ[from][slot].is_some() {
                return Err(Error::Structure(format!(
                    "node id {} has two outgoing {}1 edges",
                    e.from,
                    if slot == 0 { "+" } else { "-" }
                )));
            }
            succ[from][slot] = Some(to);
        }
        let succ = succ
            .into_iter()
            .enumerate()
            .map(|(x, pair)| match pair {
                [Some(p), Some(m)] => Ok([p, m]),
                _ => Err(Error::Structure(format!(
                    "node id {} is missing an outgoing +1 or -1 edge",
                    ids[x]
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_successors(succ)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphSpec {
    nodes: Vec<u64>,
    edges: Vec<EdgeSpec>,
}

#[derive(Serialize, Deserialize)]
struct EdgeSpec {
    from: u64,
    to: u64,
    label: i8,
}

/// A closed walk, stored as the edge sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    edges: Vec<EdgeId>,
}

impl Cycle {
    /// Validate closedness against a graph and build the cycle.
    pub fn new(graph: &LabeledDigraph, edges: Vec<EdgeId>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Domain("cycle must contain at least one edge".into()));
        }
        for window in edges.windows(2) {
            let a = graph.edge(window[0])?;
            let b = graph.edge(window[1])?;
            if a.to != b.from {
                return Err(Error::Domain(format!(
                    "edges {} and {} are not consecutive",
                    window[0], window[1]
                )));
            }
        }
        let first = graph.edge(edges[0])?;
        let last = graph.edge(*edges.last().unwrap())?;
        if last.to != first.from {
            return Err(Error::Domain("edge sequence is not closed".into()));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Source node of each edge, in traversal order.
    pub fn nodes(&self) -> Vec<NodeId> {
        self.edges.iter().map(|&e| e / 2).collect()
    }

    /// True when no node repeats.
    pub fn is_simple(&self) -> bool {
        let mut sources: Vec<NodeId> = self.edges.iter().map(|&e| e / 2).collect();
        sources.sort_unstable();
        sources.windows(2).all(|w| w[0] != w[1])
    }
}
