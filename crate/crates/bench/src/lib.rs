//! Fixtures shared by the benchmarks.

use bidgame::{parse_rational, BudgetDistribution, GameGraph, Objective, Rational, Vertex};

fn q(s: &str) -> Rational {
    parse_rational(s).expect("valid literal")
}

/// A directed cycle of `n` vertices with weights `0, 1, ..., n-1`, plus a
/// chord back to the start from every vertex, so the graph is strongly
/// connected but not complete.
pub fn ring(n: usize) -> GameGraph {
    let vertices = (0..n)
        .map(|i| Vertex {
            id: format!("v{i}"),
            weight: Rational::from_integer((i as i64).into()),
            target: false,
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    edges.extend((1..n).map(|i| (i, 0)));
    GameGraph::new(Objective::MeanPayoff, vertices, edges).expect("ring is well formed")
}

pub fn uniform(budgets: &[&str]) -> BudgetDistribution {
    BudgetDistribution::uniform(budgets.iter().map(|b| q(b)).collect()).expect("valid support")
}
