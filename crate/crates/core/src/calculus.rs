//! Discrete calculus on labeled digraphs: gradient, Laplacian, mean, and two
//! independent routes to the graph Poisson equation.
//!
//! The Laplacian follows the positive-definite sign convention
//! `lap v(x) = v(x) - (v(x_+)+v(x_-))/2`, so constants are its kernel and, on
//! Eulerian graphs, mean-zero functions are exactly its range. `solve_poisson`
//! pins the additive constant by mean-centering; `debruijn_representation`
//! evaluates the explicit weighted-average formula and agrees with the solver
//! up to that constant.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::digraph::{EdgeId, LabeledDigraph, NodeId, Sign};
use crate::error::{Error, Result};

/// Absolute residual required of a Poisson solution, in max norm.
pub const POISSON_TOL: f64 = 1e-12;

/// Largest system handed to the dense LU factorization; bigger graphs use the
/// damped averaging iteration.
pub const DENSE_NODE_LIMIT: usize = 1 << 10;

const MAX_FIXED_POINT_ITERS: usize = 200_000;

/// Real-valued function on the nodes of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFunction {
    values: Vec<f64>,
}

impl NodeFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain(
                "node function must cover at least one node".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "node function has non-finite value at node {i}"
            )));
        }
        Ok(Self { values })
    }

    pub fn constant(c: f64, n: usize) -> Self {
        Self {
            values: vec![c; n],
        }
    }

    /// Independent uniform values in `[-1, 1]`, deterministic per seed.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            values: (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: NodeId) -> f64 {
        self.values[x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same function shifted to mean zero.
    pub fn centered(&self) -> Self {
        let m = mean(self);
        Self {
            values: self.values.iter().map(|v| v - m).collect(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i.to_string(), serde_json::json!(v)))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let map: std::collections::BTreeMap<String, f64> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("bad node function JSON: {e}")))?;
        let n = map.len();
        let mut values = vec![f64::NAN; n];
        for (key, v) in map {
            let i: usize = key
                .parse()
                .map_err(|_| Error::Config(format!("node key {key:?} is not an integer")))?;
            if i >= n {
                return Err(Error::Config(format!(
                    "node key {i} out of range for {n} entries"
                )));
            }
            values[i] = v;
        }
        Self::new(values)
    }

    fn check_graph(&self, graph: &LabeledDigraph) -> Result<()> {
        if self.len() != graph.node_count() {
            return Err(Error::Domain(format!(
                "node function covers {} nodes, graph has {}",
                self.len(),
                graph.node_count()
            )));
        }
        Ok(())
    }
}

/// Arithmetic mean over nodes, in canonical node order.
pub fn mean(v: &NodeFunction) -> f64 {
    v.values.iter().sum::<f64>() / v.len() as f64
}

/// Edge gradient `v(e_1) - v(e_2)`.
pub fn grad(graph: &LabeledDigraph, v: &NodeFunction, e: EdgeId) -> Result<f64> {
    v.check_graph(graph)?;
    let edge = graph.edge(e)?;
    Ok(v.get(edge.from) - v.get(edge.to))
}

/// Averaging Laplacian `v(x) - (v(x_+)+v(x_-))/2`.
///
/// Out-degree 2 is guaranteed by the graph type, so the only failure modes
/// are size mismatches between the function and the graph.
pub fn laplacian(graph: &LabeledDigraph, v: &NodeFunction, x: NodeId) -> Result<f64> {
    v.check_graph(graph)?;
    if x >= graph.node_count() {
        return Err(Error::Domain(format!(
            "node {x} out of range (graph has {} nodes)",
            graph.node_count()
        )));
    }
    Ok(laplacian_unchecked(graph, v.values(), x))
}

fn laplacian_unchecked(graph: &LabeledDigraph, values: &[f64], x: NodeId) -> f64 {
    let plus = graph.successor(x, Sign::Plus);
    let minus = graph.successor(x, Sign::Minus);
    values[x] - 0.5 * (values[plus] + values[minus])
}

/// Solve `lap H = h - mean(h)` with `mean(H) = 0` on an Eulerian graph.
///
/// Residuals are checked against [`POISSON_TOL`] after the solve; failure to
/// reach the tolerance is a numeric error.
pub fn solve_poisson(graph: &LabeledDigraph, h: &NodeFunction) -> Result<NodeFunction> {
    h.check_graph(graph)?;
    graph.check_eulerian()?;
    let n = graph.node_count();
    let mean_h = mean(h);
    let rhs: Vec<f64> = h.values().iter().map(|v| v - mean_h).collect();

    let solution = if n <= DENSE_NODE_LIMIT {
        dense_solve(graph, &rhs)?
    } else {
        fixed_point_solve(graph, &rhs)?
    };
    let solution = NodeFunction::new(solution)?.centered();

    let residual = (0..n)
        .map(|x| (laplacian_unchecked(graph, solution.values(), x) - rhs[x]).abs())
        .fold(0.0f64, f64::max);
    if residual > POISSON_TOL {
        return Err(Error::Numeric(format!(
            "Poisson residual {residual:.3e} exceeds {POISSON_TOL:.1e}"
        )));
    }
    Ok(solution)
}

/// Dense route: `(I - P + J/n) H = rhs` where `P` is the successor-averaging
/// matrix and `J/n` pins the constant mode. Up to two rounds of iterative
/// refinement keep the residual at tolerance for the largest dense sizes.
fn dense_solve(graph: &LabeledDigraph, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = graph.node_count();
    let mut m = DMatrix::<f64>::from_element(n, n, 1.0 / n as f64);
    for x in 0..n {
        m[(x, x)] += 1.0;
        m[(x, graph.successor(x, Sign::Plus))] -= 0.5;
        m[(x, graph.successor(x, Sign::Minus))] -= 0.5;
    }
    let b = DVector::from_column_slice(rhs);
    let lu = m.clone().lu();
    let mut sol = lu
        .solve(&b)
        .ok_or_else(|| Error::Numeric("singular Poisson system".into()))?;
    for _ in 0..2 {
        let r = &b - &m * &sol;
        if r.amax() <= 0.25 * POISSON_TOL {
            break;
        }
        let delta = lu
            .solve(&r)
            .ok_or_else(|| Error::Numeric("singular Poisson system".into()))?;
        sol += delta;
    }
    Ok(sol.iter().copied().collect())
}

/// Iterative route for graphs past the dense limit: damped successor
/// averaging `H <- (H + P H + rhs) / 2`, which contracts every non-constant
/// mode on a strongly connected graph.
fn fixed_point_solve(graph: &LabeledDigraph, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = graph.node_count();
    let mut current = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let mut residual = 0.0f64;
        for x in 0..n {
            let avg = 0.5
                * (current[graph.successor(x, Sign::Plus)]
                    + current[graph.successor(x, Sign::Minus)]);
            residual = residual.max((current[x] - avg - rhs[x]).abs());
            next[x] = 0.5 * (current[x] + avg + rhs[x]);
        }
        if residual <= 0.5 * POISSON_TOL {
            return Ok(current);
        }
        std::mem::swap(&mut current, &mut next);
    }
    Err(Error::Numeric(format!(
        "fixed-point Poisson iteration did not reach {POISSON_TOL:.1e} within {MAX_FIXED_POINT_ITERS} sweeps"
    )))
}

/// Explicit weighted-average solution on the de Bruijn graph:
/// `H(m) = h(m) + sum_{l=1}^{d-1} 2^{-l} sum_{s in B^l} h(m|s)`.
///
/// Evaluated by depth-indexed averaging (`d - 1` sweeps of successor
/// averaging) rather than literal suffix enumeration, which gives identical
/// values in `O(d 2^d)` time. Not mean-centered; it matches [`solve_poisson`]
/// up to an additive constant.
pub fn debruijn_representation(h: &NodeFunction, d: usize) -> Result<NodeFunction> {
    if !(1..=crate::digraph::MAX_DEBRUIJN_DEPTH).contains(&d) {
        return Err(Error::Size {
            what: "de Bruijn depth d",
            value: d,
            min: 1,
            max: crate::digraph::MAX_DEBRUIJN_DEPTH,
        });
    }
    let n = 1usize << d;
    if h.len() != n {
        return Err(Error::Domain(format!(
            "node function covers {} nodes, debruijn({d}) has {n}",
            h.len()
        )));
    }
    let mask = n - 1;
    let mut level: Vec<f64> = h.values().to_vec();
    let mut total = level.clone();
    for _ in 1..d {
        let averaged: Vec<f64> = (0..n)
            .map(|m| 0.5 * (level[((m << 1) | 1) & mask] + level[(m << 1) & mask]))
            .collect();
        for (t, a) in total.iter_mut().zip(&averaged) {
            *t += a;
        }
        level = averaged;
    }
    NodeFunction::new(total)
}
