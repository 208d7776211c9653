//! The Poisson-based corrector and cycle-average indifference certificates.
//!
//! Two sign conventions are in play and both are exposed explicitly, because
//! silently mixing them is the main foot-gun:
//!
//! - **investor-LP**: corrector `f#(m) = H(m_+) - H(m_-)`, per-node cost
//!   `h(m) - (b(m)/2) f#(m)`;
//! - **general-LP**: corrector `f(x) = (1/2) sum_{e in O_x} b(e) grad H(e)`,
//!   per-node cost `h(e_1) + b(e) f(e_1)`.
//!
//! They are related by `f = -f#/2` and produce identical cycle averages.
//! With `H` solving the graph Poisson equation, every cycle average equals
//! `mean(h)` (the telescoping identity), so the corrector solves both the
//! investor and market linear programs simultaneously.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, NodeFunction};
use crate::digraph::{Cycle, LabeledDigraph, Sign};
use crate::error::{Error, Result};

/// Tolerance for declaring a cycle average equal to `mean(h)`. Looser than
/// the Poisson residual to absorb division by cycle lengths up to `2|V|`.
pub const INDIFFERENCE_TOL: f64 = 1e-11;

/// Which LP formulation a corrector or report uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Cost `h(m) - (b(m)/2) f#(m)` with `f#(m) = H(m_+) - H(m_-)`.
    InvestorLp,
    /// Cost `h(e_1) + b(e) f(e_1)` with `f(x) = (1/2) sum b(e) grad H(e)`.
    GeneralLp,
}

/// Build the corrector for `convention` from a Poisson potential.
///
/// Constant shifts of the potential cancel in both forms.
pub fn corrector_from_potential(
    graph: &LabeledDigraph,
    potential: &NodeFunction,
    convention: Convention,
) -> Result<NodeFunction> {
    if potential.len() != graph.node_count() {
        return Err(Error::Domain(format!(
            "potential covers {} nodes, graph has {}",
            potential.len(),
            graph.node_count()
        )));
    }
    let values = (0..graph.node_count())
        .map(|x| {
            let up = potential.get(graph.successor(x, Sign::Plus));
            let down = potential.get(graph.successor(x, Sign::Minus));
            match convention {
                Convention::InvestorLp => up - down,
                // (1/2)[(H(x)-H(x_+)) - (H(x)-H(x_-))] = (H(x_-)-H(x_+))/2
                Convention::GeneralLp => 0.5 * (down - up),
            }
        })
        .collect();
    NodeFunction::new(values)
}

/// Per-node cost of traversing `edge` under the given convention.
fn edge_cost(
    h: &NodeFunction,
    corrector: &NodeFunction,
    from: usize,
    label: Sign,
    convention: Convention,
) -> f64 {
    match convention {
        Convention::InvestorLp => h.get(from) - 0.5 * label.value() * corrector.get(from),
        Convention::GeneralLp => h.get(from) + label.value() * corrector.get(from),
    }
}

/// Average per-node cost along a cycle.
pub fn cycle_average(
    graph: &LabeledDigraph,
    cycle: &Cycle,
    h: &NodeFunction,
    corrector: &NodeFunction,
    convention: Convention,
) -> Result<f64> {
    if h.len() != graph.node_count() || corrector.len() != graph.node_count() {
        return Err(Error::Domain(
            "h and corrector must cover every node of the graph".into(),
        ));
    }
    let mut total = 0.0;
    for &e in cycle.edges() {
        let edge = graph.edge(e)?;
        total += edge_cost(h, corrector, edge.from, edge.label, convention);
    }
    Ok(total / cycle.len() as f64)
}

/// One row of an LP certificate: a simple cycle and its average cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleRow {
    /// Index in the canonical enumeration order.
    pub cycle: usize,
    pub length: usize,
    pub average: f64,
}

/// Outcome of checking the investor/market linear programs over all simple
/// cycles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpReport {
    pub convention: Convention,
    pub mean_h: f64,
    pub cycle_rows: Vec<CycleRow>,
    /// Max cycle average: the investor LP's optimal bound for this corrector.
    pub m_investor: f64,
    /// Min cycle average: the market LP's optimal bound for this corrector.
    pub m_market: f64,
    pub indifferent: bool,
}

/// Evaluate every simple-cycle average for an arbitrary corrector.
///
/// `m_market <= mean_h <= m_investor` holds for any corrector; equality on
/// both sides (within [`INDIFFERENCE_TOL`]) is indifference.
pub fn lp_report(
    graph: &LabeledDigraph,
    h: &NodeFunction,
    corrector: &NodeFunction,
    convention: Convention,
    cap: usize,
) -> Result<LpReport> {
    graph.check_eulerian()?;
    let cycles = graph.simple_cycles(cap)?;
    let averages: Vec<f64> = cycles
        .par_iter()
        .map(|c| cycle_average(graph, c, h, corrector, convention))
        .collect::<Result<_>>()?;
    let mean_h = calculus::mean(h);
    let cycle_rows: Vec<CycleRow> = averages
        .iter()
        .enumerate()
        .map(|(i, &average)| CycleRow {
            cycle: i,
            length: cycles[i].len(),
            average,
        })
        .collect();
    let m_investor = averages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m_market = averages.iter().copied().fold(f64::INFINITY, f64::min);
    let indifferent = (m_investor - mean_h).abs() <= INDIFFERENCE_TOL
        && (m_market - mean_h).abs() <= INDIFFERENCE_TOL;
    Ok(LpReport {
        convention,
        mean_h,
        cycle_rows,
        m_investor,
        m_market,
        indifferent,
    })
}

/// Solve the Poisson equation for `h`, build the corrector, and certify
/// indifference over every simple cycle.
///
/// The potential is recomputed internally so the certificate does not trust
/// caller inputs.
pub fn verify_indifference(
    graph: &LabeledDigraph,
    h: &NodeFunction,
    convention: Convention,
    cap: usize,
) -> Result<LpReport> {
    let potential = calculus::solve_poisson(graph, h)?;
    let corrector = corrector_from_potential(graph, &potential, convention)?;
    lp_report(graph, h, &corrector, convention, cap)
}
