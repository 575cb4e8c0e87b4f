//! Random-turn games: a biased coin decides who moves the token each turn.
//!
//! Mean-payoff values are computed by damped relative value iteration on the
//! Shapley operator of the expanded stochastic game. For a strongly connected
//! graph the value does not depend on the start vertex, and the one-step
//! differences `T h - h` bracket it from both sides at every iteration.

use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{GameGraph, Objective, Rational};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_OPERATOR_APPLICATIONS: u64 = 10_000_000;
const REACH_RESIDUAL: f64 = 1e-12;
const DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Nature,
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtNode {
    pub kind: NodeKind,
    pub source: usize,
    pub weight: f64,
    /// Successor nodes with their probabilities (1.0 for player nodes).
    pub edges: Vec<(usize, f64)>,
}

/// The random-turn game RT(G, p). Vertex `v` of `G` becomes the nature node
/// `3v`, Max's copy `3v + 1` and Min's copy `3v + 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGame {
    bias: f64,
    nodes: Vec<RtNode>,
    targets: Vec<bool>,
}

pub fn nature_node(v: usize) -> usize {
    3 * v
}

pub fn max_node(v: usize) -> usize {
    3 * v + 1
}

pub fn min_node(v: usize) -> usize {
    3 * v + 2
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("bias {p} outside [0, 1]")));
    }
    Ok(())
}

pub fn build_rt(game: &GameGraph, p: f64) -> Result<StochasticGame> {
    check_probability(p)?;
    let weights = game.weights_f64();
    let mut nodes = Vec::with_capacity(3 * game.len());
    let mut targets = Vec::with_capacity(3 * game.len());
    for (v, &weight) in weights.iter().enumerate() {
        let to_natures: Vec<(usize, f64)> = game.successors(v).iter().map(|&u| (nature_node(u), 1.0)).collect();
        nodes.push(RtNode {
            kind: NodeKind::Nature,
            source: v,
            weight,
            edges: vec![(max_node(v), p), (min_node(v), 1.0 - p)],
        });
        nodes.push(RtNode {
            kind: NodeKind::Max,
            source: v,
            weight,
            edges: to_natures.clone(),
        });
        nodes.push(RtNode {
            kind: NodeKind::Min,
            source: v,
            weight,
            edges: to_natures,
        });
        targets.extend([game.is_target(v); 3]);
    }
    Ok(StochasticGame {
        bias: p,
        nodes,
        targets,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanPayoffSolution {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: u64,
    /// Relative values per node, normalized to 0 at node 0.
    pub bias: Vec<f64>,
}

impl StochasticGame {
    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn nodes(&self) -> &[RtNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Keeps only the given choice at every Max and Min node, turning the game
    /// into a Markov chain. `max_choice[v]` and `min_choice[v]` are source
    /// vertices that must be successors of `v`.
    pub fn restrict(&self, max_choice: &[usize], min_choice: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        for node in &mut out.nodes {
            let chosen = match node.kind {
                NodeKind::Nature => continue,
                NodeKind::Max => max_choice[node.source],
                NodeKind::Min => min_choice[node.source],
            };
            let target = nature_node(chosen);
            if !node.edges.iter().any(|&(t, _)| t == target) {
                return Err(Error::InvalidArgument(format!(
                    "vertex {chosen} is not a successor of {}",
                    node.source
                )));
            }
            node.edges = vec![(target, 1.0)];
        }
        Ok(out)
    }

    fn apply(&self, h: &[f64], node: &RtNode) -> f64 {
        let next = match node.kind {
            NodeKind::Nature => node.edges.iter().map(|&(t, pr)| pr * h[t]).sum(),
            NodeKind::Max => node.edges.iter().map(|&(t, _)| h[t]).fold(f64::NEG_INFINITY, f64::max),
            NodeKind::Min => node.edges.iter().map(|&(t, _)| h[t]).fold(f64::INFINITY, f64::min),
        };
        node.weight + next
    }

    /// Mean-payoff value per step. Every step of the expanded game repeats the
    /// weight of its source vertex twice per turn, so this equals the value per
    /// turn of the simplified game.
    pub fn mean_payoff(&self, tol: f64) -> Result<MeanPayoffSolution> {
        self.mean_payoff_from(vec![0.0; self.nodes.len()], tol, MAX_OPERATOR_APPLICATIONS)
    }

    pub fn mean_payoff_from(&self, mut h: Vec<f64>, tol: f64, cap: u64) -> Result<MeanPayoffSolution> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
        }
        if h.len() != self.nodes.len() {
            return Err(Error::InvalidArgument("initial vector has the wrong length".into()));
        }
        let mut diff = vec![0.0; h.len()];
        let mut span = f64::INFINITY;
        for iteration in 1..=cap {
            for (d, node) in diff.iter_mut().zip(&self.nodes) {
                *d = self.apply(&h, node);
            }
            let mut lower = f64::INFINITY;
            let mut upper = f64::NEG_INFINITY;
            for (d, hv) in diff.iter_mut().zip(&h) {
                *d -= hv;
                lower = lower.min(*d);
                upper = upper.max(*d);
            }
            span = upper - lower;
            if span < tol {
                let anchor = h[0];
                return Ok(MeanPayoffSolution {
                    value: 0.5 * (lower + upper),
                    lower,
                    upper,
                    iterations: iteration,
                    bias: h.iter().map(|x| x - anchor).collect(),
                });
            }
            let anchor = h[0] + DAMPING * diff[0];
            for (hv, d) in h.iter_mut().zip(&diff) {
                *hv += DAMPING * d - anchor;
            }
        }
        Err(Error::NonConvergence {
            iterations: cap,
            residual: span,
        })
    }

    /// Least-fixpoint probabilities of reaching a target node.
    pub fn reach_values(&self) -> Result<Vec<f64>> {
        let mut x: Vec<f64> = self.targets.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let mut next = x.clone();
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_OPERATOR_APPLICATIONS {
            residual = 0.0;
            for (i, node) in self.nodes.iter().enumerate() {
                if self.targets[i] {
                    continue;
                }
                let v = self.apply(&x, node) - node.weight;
                residual = f64::max(residual, (v - x[i]).abs());
                next[i] = v;
            }
            std::mem::swap(&mut x, &mut next);
            if residual < REACH_RESIDUAL {
                return Ok(x);
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_OPERATOR_APPLICATIONS,
            residual,
        })
    }
}

#[allow(clippy::needless_range_loop)]
fn karp_min_cycle_mean(weights: &[Rational], succ: impl Fn(usize) -> Vec<usize>) -> Rational {
    let n = weights.len();
    // best[k][v]: lightest walk of exactly k edges from vertex 0 ending in v,
    // where leaving u costs w(u).
    let mut best: Vec<Vec<Option<Rational>>> = vec![vec![None; n]; n + 1];
    best[0][0] = Some(Rational::zero());
    for k in 1..=n {
        for u in 0..n {
            let Some(d) = best[k - 1][u].clone() else { continue };
            let cand = d + &weights[u];
            for v in succ(u) {
                let slot = &mut best[k][v];
                if slot.as_ref().is_none_or(|cur| &cand < cur) {
                    *slot = Some(cand.clone());
                }
            }
        }
    }
    let mut answer: Option<Rational> = None;
    for v in 0..n {
        let Some(dn) = &best[n][v] else { continue };
        let mut worst: Option<Rational> = None;
        for k in 0..n {
            if let Some(dk) = &best[k][v] {
                let mean = (dn - dk) / Rational::from_integer(((n - k) as i64).into());
                if worst.as_ref().is_none_or(|w| &mean > w) {
                    worst = Some(mean);
                }
            }
        }
        if let Some(w) = worst {
            if answer.as_ref().is_none_or(|a| &w < a) {
                answer = Some(w);
            }
        }
    }
    answer.expect("strongly connected graph has a cycle through vertex 0")
}

fn require_strongly_connected(game: &GameGraph) -> Result<()> {
    if !game.is_strongly_connected() {
        return Err(Error::InvalidGame("graph is not strongly connected".into()));
    }
    Ok(())
}

/// Smallest average weight over simple cycles (exact).
pub fn min_cycle_mean(game: &GameGraph) -> Result<Rational> {
    require_strongly_connected(game)?;
    let weights: Vec<Rational> = game.vertices().iter().map(|v| v.weight.clone()).collect();
    Ok(karp_min_cycle_mean(&weights, |u| game.successors(u).to_vec()))
}

/// Largest average weight over simple cycles (exact).
pub fn max_cycle_mean(game: &GameGraph) -> Result<Rational> {
    require_strongly_connected(game)?;
    let weights: Vec<Rational> = game.vertices().iter().map(|v| -v.weight.clone()).collect();
    Ok(-karp_min_cycle_mean(&weights, |u| game.successors(u).to_vec()))
}

fn require_mean_payoff(game: &GameGraph) -> Result<()> {
    if game.objective() != Objective::MeanPayoff {
        return Err(Error::InvalidGame("expected a mean-payoff game".into()));
    }
    require_strongly_connected(game)
}

/// Mean-payoff value of RT(game, p). Biases 0 and 1 are answered exactly by
/// the one-player cycle means.
pub fn solve_rt_mp(game: &GameGraph, p: f64, tol: f64) -> Result<f64> {
    check_probability(p)?;
    require_mean_payoff(game)?;
    if p == 0.0 {
        return Ok(min_cycle_mean(game)?.to_f64().unwrap_or(f64::NAN));
    }
    if p == 1.0 {
        return Ok(max_cycle_mean(game)?.to_f64().unwrap_or(f64::NAN));
    }
    Ok(build_rt(game, p)?.mean_payoff(tol)?.value)
}

/// Per source vertex, the optimal probability that Max reaches a target in RT(game, p).
pub fn solve_rt_reach(game: &GameGraph, p: f64) -> Result<Vec<f64>> {
    check_probability(p)?;
    if game.objective() != Objective::Reachability {
        return Err(Error::InvalidGame("expected a reachability game".into()));
    }
    let values = build_rt(game, p)?.reach_values()?;
    Ok((0..game.len()).map(|v| values[nature_node(v)]).collect())
}

/// Anything that can report MP(RT(G, p)) for a fixed graph.
pub trait RtValue: Sync {
    fn rt_value(&self, p: f64) -> Result<f64>;

    /// Absolute error bound on reported values.
    fn tolerance(&self) -> f64 {
        0.0
    }
}

/// Exact value for graphs where every vertex reaches every vertex in one step:
/// the mover always jumps to the best weight for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCurve {
    pub low: f64,
    pub high: f64,
}

impl AffineCurve {
    pub fn for_game(game: &GameGraph) -> Option<Self> {
        if game.objective() != Objective::MeanPayoff || !game.is_complete_with_loops() {
            return None;
        }
        let w = game.weights_f64();
        Some(Self {
            low: w.iter().copied().fold(f64::INFINITY, f64::min),
            high: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

impl RtValue for AffineCurve {
    fn rt_value(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.low + (self.high - self.low) * p)
    }
}

/// Calls the stochastic solver on every query.
#[derive(Debug, Clone)]
pub struct DirectRt<'a> {
    pub game: &'a GameGraph,
    pub tol: f64,
}

impl RtValue for DirectRt<'_> {
    fn rt_value(&self, p: f64) -> Result<f64> {
        solve_rt_mp(self.game, p, self.tol)
    }

    fn tolerance(&self) -> f64 {
        self.tol
    }
}

/// Sampled MP(RT(G, p)) with monotone piecewise-linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
    tol: f64,
    max_clamp: f64,
}

impl ValueCurve {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest downward step removed when enforcing monotonicity.
    pub fn max_clamp(&self) -> f64 {
        self.max_clamp
    }

    pub fn eval(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let i = self.grid.partition_point(|&g| g < p);
        if i == 0 {
            return self.values[0];
        }
        if i == self.grid.len() {
            return *self.values.last().expect("non-empty curve");
        }
        let (g0, g1) = (self.grid[i - 1], self.grid[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if g1 == g0 {
            return v1;
        }
        v0 + (v1 - v0) * (p - g0) / (g1 - g0)
    }

    /// Adds exact samples and re-establishes monotonicity.
    pub fn insert_samples(&mut self, samples: &[(f64, f64)]) {
        let mut pts: Vec<(f64, f64)> = self.grid.iter().copied().zip(self.values.iter().copied()).collect();
        for &(p, v) in samples {
            match pts.binary_search_by(|probe| probe.0.total_cmp(&p)) {
                Ok(i) => pts[i].1 = v,
                Err(i) => pts.insert(i, (p, v)),
            }
        }
        self.grid = pts.iter().map(|x| x.0).collect();
        self.values = pts.iter().map(|x| x.1).collect();
        self.clamp_monotone();
    }

    fn clamp_monotone(&mut self) {
        for i in 1..self.values.len() {
            let drop = self.values[i - 1] - self.values[i];
            if drop > 0.0 {
                self.max_clamp = self.max_clamp.max(drop);
                self.values[i] = self.values[i - 1];
            }
        }
    }
}

impl RtValue for ValueCurve {
    fn rt_value(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        Ok(self.eval(p))
    }

    fn tolerance(&self) -> f64 {
        self.tol
    }
}

fn solve_points(game: &GameGraph, points: &[f64], tol: f64) -> Result<Vec<f64>> {
    points.par_iter().map(|&p| solve_rt_mp(game, p, tol)).collect()
}

/// Samples MP(RT(G, p)) on a uniform grid, then bisects intervals whose
/// increment is well above the average slope.
pub fn value_curve(game: &GameGraph, grid_size: usize, tol: f64) -> Result<ValueCurve> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    require_mean_payoff(game)?;
    let step = 1.0 / (grid_size - 1) as f64;
    let mut grid: Vec<f64> = (0..grid_size).map(|i| (i as f64 * step).min(1.0)).collect();
    let mut values = solve_points(game, &grid, tol)?;

    let range = values[grid_size - 1] - values[0];
    let steep = 2.0 * range.abs() * step;
    let budget = 4 * grid_size;
    for _ in 0..3 {
        let mids: Vec<f64> = (1..grid.len())
            .filter(|&i| (values[i] - values[i - 1]).abs() > steep && grid[i] - grid[i - 1] > 1e-6)
            .map(|i| 0.5 * (grid[i - 1] + grid[i]))
            .take(budget.saturating_sub(grid.len()))
            .collect();
        if mids.is_empty() {
            break;
        }
        let mid_values = solve_points(game, &mids, tol)?;
        let mut pts: Vec<(f64, f64)> = grid
            .into_iter()
            .zip(values)
            .chain(mids.into_iter().zip(mid_values))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        grid = pts.iter().map(|x| x.0).collect();
        values = pts.iter().map(|x| x.1).collect();
    }

    let mut curve = ValueCurve {
        grid,
        values,
        tol,
        max_clamp: 0.0,
    };
    curve.clamp_monotone();
    Ok(curve)
}

/// The cheapest exact-enough oracle for `game`: the closed form on complete
/// graphs, a sampled curve otherwise.
pub fn rt_oracle(game: &GameGraph, grid_size: usize, tol: f64) -> Result<Box<dyn RtValue>> {
    if let Some(curve) = AffineCurve::for_game(game) {
        return Ok(Box::new(curve));
    }
    Ok(Box::new(value_curve(game, grid_size, tol)?))
}

/// Positional successor choices `(max, min)` that are optimal in RT(game, p),
/// read off the relative values. Ties go to the smallest vertex index.
pub fn positional_choices(game: &GameGraph, p: f64, tol: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    require_mean_payoff(game)?;
    let h = build_rt(game, p)?.mean_payoff(tol)?.bias;
    let pick = |v: usize, better: fn(f64, f64) -> bool| {
        let mut best = game.successors(v)[0];
        for &u in &game.successors(v)[1..] {
            if better(h[nature_node(u)], h[nature_node(best)]) {
                best = u;
            }
        }
        best
    };
    let max = (0..game.len()).map(|v| pick(v, |a, b| a > b)).collect();
    let min = (0..game.len()).map(|v| pick(v, |a, b| a < b)).collect();
    Ok((max, min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{parse_rational, Vertex};

    fn cycle3() -> GameGraph {
        let vertices = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, id)| Vertex {
                id: id.to_string(),
                weight: Rational::from_integer((i as i64).into()),
                target: false,
            })
            .collect();
        GameGraph::new(Objective::MeanPayoff, vertices, vec![(0, 1), (1, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn rt_structure() {
        let g = GameGraph::bowtie();
        let rt = build_rt(&g, 0.5).unwrap();
        assert_eq!(rt.len(), 6);
        for v in 0..2 {
            let n = &rt.nodes()[nature_node(v)];
            assert_eq!(n.edges, vec![(max_node(v), 0.5), (min_node(v), 0.5)]);
            assert_eq!(rt.nodes()[max_node(v)].edges.len(), 2);
        }
        let rt = build_rt(&cycle3(), 0.3).unwrap();
        assert_eq!(rt.len(), 9);
        for v in 0..3 {
            let n = &rt.nodes()[nature_node(v)];
            assert_eq!(n.edges[0].1, 0.3);
            assert!((n.edges[1].1 - 0.7).abs() < 1e-15);
            for k in [nature_node(v), max_node(v), min_node(v)] {
                assert_eq!(rt.nodes()[k].weight, v as f64);
            }
        }
        let rt = build_rt(&g, 1.0).unwrap();
        assert_eq!(rt.nodes()[0].edges[0], (max_node(0), 1.0));
        assert_eq!(rt.nodes()[0].edges[1].1, 0.0);
        assert!(build_rt(&g, 1.5).is_err());
        assert!(build_rt(&g, -0.1).is_err());
    }

    #[test]
    fn bowtie_value_is_the_bias() {
        let g = GameGraph::bowtie();
        for p in [0.0, 0.25, 0.5, 1.0] {
            let v = solve_rt_mp(&g, p, DEFAULT_TOL).unwrap();
            assert!((v - p).abs() < 1e-8, "p={p} v={v}");
        }
    }

    #[test]
    fn cycle_means() {
        let g = cycle3();
        assert_eq!(min_cycle_mean(&g).unwrap(), Rational::from_integer(1.into()));
        assert_eq!(max_cycle_mean(&g).unwrap(), Rational::from_integer(1.into()));
        let b = GameGraph::bowtie();
        assert_eq!(min_cycle_mean(&b).unwrap(), Rational::zero());
        assert_eq!(max_cycle_mean(&b).unwrap(), Rational::from_integer(1.into()));
        // single forced cycle: value independent of bias
        let v = solve_rt_mp(&g, 0.37, DEFAULT_TOL).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bias_independent_of_seed_vector() {
        let g = cycle3();
        let rt = build_rt(&g, 0.4).unwrap();
        let base = rt.mean_payoff(1e-10).unwrap().value;
        for start in 0..rt.len() {
            let mut h = vec![0.0; rt.len()];
            h[start] = 5.0;
            let v = rt.mean_payoff_from(h, 1e-10, MAX_OPERATOR_APPLICATIONS).unwrap().value;
            assert!((v - base).abs() < 1e-9);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = GameGraph::bowtie();
        let rt = build_rt(&g, 0.3).unwrap();
        let err = rt
            .mean_payoff_from(vec![0.0, 7.0, -3.0, 1.0, 0.0, 2.0], 1e-12, 1)
            .unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 1, .. }));
    }

    fn path_game() -> GameGraph {
        // t2 <-> v0 <-> v1 -> t1, with t1 and t2 absorbing; t1 is Max's target.
        let mk = |id: &str, target| Vertex {
            id: id.into(),
            weight: parse_rational("0").unwrap(),
            target,
        };
        GameGraph::new(
            Objective::Reachability,
            vec![mk("t2", false), mk("v0", false), mk("v1", false), mk("t1", true)],
            vec![(0, 0), (1, 0), (1, 2), (2, 1), (2, 3), (3, 3)],
        )
        .unwrap()
    }

    #[test]
    fn reach_values_on_path() {
        let g = path_game();
        let r = solve_rt_reach(&g, 0.5).unwrap();
        assert!((r[1] - 1.0 / 3.0).abs() < 1e-10);
        assert!((r[2] - 2.0 / 3.0).abs() < 1e-10);
        assert_eq!(r[3], 1.0);
        assert_eq!(r[0], 0.0);
        let r1 = solve_rt_reach(&g, 1.0).unwrap();
        assert!((r1[1] - 1.0).abs() < 1e-12);
        assert!(solve_rt_reach(&GameGraph::bowtie(), 0.5).is_err());
    }

    #[test]
    fn curve_matches_bowtie_identity() {
        let g = GameGraph::bowtie();
        let curve = value_curve(&g, 11, 1e-9).unwrap();
        for (p, v) in curve.grid().iter().zip(curve.values()) {
            assert!((p - v).abs() < 1e-8);
        }
        assert!((curve.eval(0.33) - 0.33).abs() < 1e-8);
        assert_eq!(curve.values()[0], 0.0);
        assert_eq!(*curve.values().last().unwrap(), 1.0);
        assert!(value_curve(&g, 1, 1e-9).is_err());
    }

    #[test]
    fn constant_weights_give_constant_curve() {
        let five = Rational::from_integer(5.into());
        let vertices = (0..3)
            .map(|i| Vertex {
                id: format!("v{i}"),
                weight: five.clone(),
                target: false,
            })
            .collect();
        let g = GameGraph::new(
            Objective::MeanPayoff,
            vertices,
            vec![(0, 1), (1, 0), (1, 2), (2, 0), (2, 2)],
        )
        .unwrap();
        let curve = value_curve(&g, 5, 1e-9).unwrap();
        assert!(curve.values().iter().all(|v| (v - 5.0).abs() < 1e-8));
    }

    #[test]
    fn insert_keeps_order_and_monotonicity() {
        let g = GameGraph::bowtie();
        let mut curve = value_curve(&g, 3, 1e-9).unwrap();
        curve.insert_samples(&[(0.25, 0.25), (0.75, 0.7)]);
        assert_eq!(curve.grid().len(), 5);
        assert!(curve.values().windows(2).all(|w| w[0] <= w[1]));
    }
}
