#![allow(dead_code)]

use bidgame::{parse_rational, BudgetDistribution, GameGraph, Objective, Rational, Vertex};
use proptest::prelude::*;
use rand::Rng;

pub fn q(s: &str) -> Rational {
    parse_rational(s).unwrap()
}

pub fn uniform(budgets: &[&str]) -> BudgetDistribution {
    BudgetDistribution::uniform(budgets.iter().map(|b| q(b)).collect()).unwrap()
}

pub fn mean_payoff_game(weights: &[i64], edges: Vec<(usize, usize)>) -> GameGraph {
    let vertices = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| Vertex {
            id: format!("v{i}"),
            weight: Rational::from_integer(w.into()),
            target: false,
        })
        .collect();
    GameGraph::new(Objective::MeanPayoff, vertices, edges).unwrap()
}

/// t2 - v0 - v1 - t1 with t1 the only target and both ends absorbing.
pub fn path_game() -> GameGraph {
    let mk = |id: &str, target| Vertex {
        id: id.into(),
        weight: q("0"),
        target,
    };
    GameGraph::new(
        Objective::Reachability,
        vec![mk("t2", false), mk("v0", false), mk("v1", false), mk("t1", true)],
        vec![(0, 0), (1, 0), (1, 2), (2, 1), (2, 3), (3, 3)],
    )
    .unwrap()
}

/// Cycle `0 -> 1 -> ... -> 0` plus the given extra edges: strongly connected.
pub fn cycle_plus(weights: &[i64], extra: &[(usize, usize)]) -> GameGraph {
    let n = weights.len();
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    edges.extend(extra.iter().map(|&(a, b)| (a % n, b % n)));
    mean_payoff_game(weights, edges)
}

pub fn arb_strongly_connected(max_vertices: usize) -> impl Strategy<Value = GameGraph> {
    (1..=max_vertices).prop_flat_map(|n| {
        (
            prop::collection::vec(-3i64..=3, n),
            prop::collection::vec((0..n, 0..n), 0..=2 * n),
        )
            .prop_map(|(w, extra)| cycle_plus(&w, &extra))
    })
}

pub fn random_strongly_connected(rng: &mut impl Rng, max_vertices: usize) -> GameGraph {
    let n = rng.gen_range(2..=max_vertices);
    let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(-3..=3)).collect();
    let extra: Vec<(usize, usize)> = (0..rng.gen_range(0..=2 * n))
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .collect();
    cycle_plus(&weights, &extra)
}

/// Finite-horizon optimal average reward in the random-turn game, computed on
/// the original graph: each turn Max moves with probability `p`.
pub fn finite_horizon_rt(game: &GameGraph, p: f64, horizon: usize) -> Vec<f64> {
    let w = game.weights_f64();
    let mut v = vec![0.0; game.len()];
    for _ in 0..horizon {
        v = (0..game.len())
            .map(|x| {
                let succ = game.successors(x);
                let hi = succ.iter().map(|&u| v[u]).fold(f64::NEG_INFINITY, f64::max);
                let lo = succ.iter().map(|&u| v[u]).fold(f64::INFINITY, f64::min);
                w[x] + p * hi + (1.0 - p) * lo
            })
            .collect();
    }
    v.iter().map(|x| x / horizon as f64).collect()
}
