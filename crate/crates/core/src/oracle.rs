//! Brute-force minimax over integer budget units and a finite horizon.
//!
//! Both players bid whole units simultaneously. Pure strategies in a
//! simultaneous-move round have no value in general, so every state gets a
//! bracket: the lower value lets Min answer Max's committed action, the upper
//! value lets Max answer Min's. Values are total weight collected over the
//! remaining rounds; reported values divide by the number of rounds.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{GameGraph, Mechanism, Recipient};
use crate::sim::Side;

pub const MAX_UNITS: u32 = 64;
pub const MAX_HORIZON: usize = 64;
pub const MAX_VERTICES: usize = 6;
/// Upper limit on bid-pair evaluations for one table.
pub const WORK_CAP: f64 = 4e9;
const MAX_FAMILY_ATOMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DiscreteState {
    pub vertex: usize,
    pub units_max: u32,
    pub units_min: u32,
    pub rounds_left: usize,
}

/// An integer-unit policy: `(bid, successor)` for a state, or `None` when the
/// state is outside what the policy covers.
pub trait DiscretePolicy: Sync {
    fn action(&self, state: &DiscreteState) -> Option<(u32, usize)>;
}

impl<T: DiscretePolicy + ?Sized> DiscretePolicy for &T {
    fn action(&self, state: &DiscreteState) -> Option<(u32, usize)> {
        (**self).action(state)
    }
}

/// Bids `bid` units (or everything, if less) and follows `choices`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedBid {
    pub side: Side,
    pub bid: u32,
    pub choices: Vec<usize>,
}

impl DiscretePolicy for FixedBid {
    fn action(&self, s: &DiscreteState) -> Option<(u32, usize)> {
        let own = match self.side {
            Side::Max => s.units_max,
            Side::Min => s.units_min,
        };
        Some((self.bid.min(own), *self.choices.get(s.vertex)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dims {
    vertices: usize,
    a_max: u32,
    b_max: u32,
    /// Richman play keeps `a + b` at this total.
    total: Option<u32>,
}

impl Dims {
    fn new(game: &GameGraph, mech: Mechanism, units_max: u32, units_min: u32) -> Self {
        match mech.recipient {
            Recipient::Poorman => Self {
                vertices: game.len(),
                a_max: units_max,
                b_max: units_min,
                total: None,
            },
            Recipient::Richman => {
                let total = units_max + units_min;
                Self {
                    vertices: game.len(),
                    a_max: total,
                    b_max: total,
                    total: Some(total),
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.vertices * (self.a_max as usize + 1) * (self.b_max as usize + 1)
    }

    fn index(&self, v: usize, a: u32, b: u32) -> usize {
        (v * (self.a_max as usize + 1) + a as usize) * (self.b_max as usize + 1) + b as usize
    }

    fn decode(&self, k: usize) -> (usize, u32, u32) {
        let bw = self.b_max as usize + 1;
        let aw = self.a_max as usize + 1;
        (k / (aw * bw), ((k / bw) % aw) as u32, (k % bw) as u32)
    }

    fn contains(&self, a: u32, b: u32) -> bool {
        a <= self.a_max && b <= self.b_max && self.total.is_none_or(|t| a + b == t)
    }

    fn states(&self) -> usize {
        match self.total {
            Some(t) => self.vertices * (t as usize + 1),
            None => self.len(),
        }
    }
}

fn check_caps(game: &GameGraph, units_max: u32, units_min: u32, horizon: usize) -> Result<()> {
    if game.len() > MAX_VERTICES {
        return Err(Error::StateSpace(format!(
            "{} vertices, at most {MAX_VERTICES}",
            game.len()
        )));
    }
    if units_max > MAX_UNITS || units_min > MAX_UNITS {
        return Err(Error::StateSpace(format!("budgets above {MAX_UNITS} units")));
    }
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(Error::StateSpace(format!(
            "horizon {horizon} outside 1..={MAX_HORIZON}"
        )));
    }
    Ok(())
}

fn check_work(game: &GameGraph, dims: &Dims, horizon: usize) -> Result<()> {
    let deg = (0..game.len()).map(|v| game.successors(v).len()).max().unwrap_or(1) as f64;
    let work =
        horizon as f64 * dims.states() as f64 * (dims.a_max as f64 + 1.0) * (dims.b_max as f64 + 1.0) * deg * deg;
    if work > WORK_CAP {
        return Err(Error::StateSpace(format!(
            "about {work:.1e} bid pairs, cap is {WORK_CAP:.0e}"
        )));
    }
    Ok(())
}

/// One round's result: Max gets the weight of the vertex moved to, plus the
/// table value of the state reached.
struct Round<'a> {
    game: &'a GameGraph,
    mech: Mechanism,
    dims: Dims,
    weights: &'a [f64],
}

impl Round<'_> {
    fn next(&self, a: u32, b: u32, (x, u): (u32, usize), (y, w): (u32, usize)) -> (usize, u32, u32) {
        let max_wins = x > y;
        let (a2, b2) = self.mech.settle(a, b, x, y, max_wins);
        (if max_wins { u } else { w }, a2, b2)
    }

    fn outcome(&self, prev: &[f64], a: u32, b: u32, max: (u32, usize), min: (u32, usize)) -> f64 {
        let (v2, a2, b2) = self.next(a, b, max, min);
        self.weights[v2] + prev[self.dims.index(v2, a2, b2)]
    }

    fn actions(&self, v: usize, units: u32) -> impl Iterator<Item = (u32, usize)> + '_ {
        let succ = self.game.successors(v);
        (0..=units).flat_map(move |bid| succ.iter().map(move |&u| (bid, u)))
    }

    /// `max over Max actions of min over Min actions`, with Max's argmax.
    fn lower(&self, prev: &[f64], v: usize, a: u32, b: u32) -> (f64, (u32, usize)) {
        let mut best = (f64::NEG_INFINITY, (0, self.game.successors(v)[0]));
        for ma in self.actions(v, a) {
            let worst = self.min_reply(prev, v, a, b, ma);
            if worst > best.0 {
                best = (worst, ma);
            }
        }
        best
    }

    /// `min over Min actions of max over Max actions`, with Min's argmin.
    fn upper(&self, prev: &[f64], v: usize, a: u32, b: u32) -> (f64, (u32, usize)) {
        let mut best = (f64::INFINITY, (0, self.game.successors(v)[0]));
        for na in self.actions(v, b) {
            let top = self.max_reply(prev, v, a, b, na);
            if top < best.0 {
                best = (top, na);
            }
        }
        best
    }

    fn max_reply(&self, prev: &[f64], v: usize, a: u32, b: u32, na: (u32, usize)) -> f64 {
        self.actions(v, a)
            .map(|ma| self.outcome(prev, a, b, ma, na))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn min_reply(&self, prev: &[f64], v: usize, a: u32, b: u32, ma: (u32, usize)) -> f64 {
        self.actions(v, b)
            .map(|na| self.outcome(prev, a, b, ma, na))
            .fold(f64::INFINITY, f64::min)
    }
}

const NO_ACTION: (u32, u32) = (u32::MAX, u32::MAX);

/// A policy read from an oracle table.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePolicy {
    side: Side,
    dims: Dims,
    /// `actions[t]` for `t` rounds left; index 0 is unused.
    actions: Vec<Vec<(u32, u32)>>,
}

impl TablePolicy {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn horizon(&self) -> usize {
        self.actions.len() - 1
    }
}

impl DiscretePolicy for TablePolicy {
    fn action(&self, s: &DiscreteState) -> Option<(u32, usize)> {
        if s.vertex >= self.dims.vertices || !self.dims.contains(s.units_max, s.units_min) {
            return None;
        }
        let layer = self.actions.get(s.rounds_left).filter(|_| s.rounds_left > 0)?;
        let (bid, succ) = layer[self.dims.index(s.vertex, s.units_max, s.units_min)];
        ((bid, succ) != NO_ACTION).then_some((bid, succ as usize))
    }
}

/// Value tables (total weight) for every state, per number of rounds left.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    dims: Dims,
    layers: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    /// Total weight collected over the remaining rounds, `None` off the table.
    pub fn total(&self, s: &DiscreteState) -> Option<f64> {
        if s.vertex >= self.dims.vertices || !self.dims.contains(s.units_max, s.units_min) {
            return None;
        }
        let v = self.layers.get(s.rounds_left)?[self.dims.index(s.vertex, s.units_max, s.units_min)];
        (!v.is_nan()).then_some(v)
    }

    /// Average weight per round.
    pub fn average(&self, s: &DiscreteState) -> Option<f64> {
        if s.rounds_left == 0 {
            return None;
        }
        Some(self.total(s)? / s.rounds_left as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTables {
    pub mech: Mechanism,
    pub units_max: u32,
    pub units_min: u32,
    pub lower: ValueTable,
    pub upper: ValueTable,
    /// Max's maxmin action in every state.
    pub max_policy: TablePolicy,
    /// Min's minmax action in every state.
    pub min_policy: TablePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub lower: f64,
    pub upper: f64,
    /// Midpoint of the bracket.
    pub value: f64,
}

impl OracleTables {
    pub fn horizon(&self) -> usize {
        self.lower.horizon()
    }

    pub fn initial_state(&self, start: usize) -> DiscreteState {
        DiscreteState {
            vertex: start,
            units_max: self.units_max,
            units_min: self.units_min,
            rounds_left: self.horizon(),
        }
    }

    pub fn value_at(&self, s: &DiscreteState) -> Option<OracleValue> {
        let lower = self.lower.average(s)?;
        let upper = self.upper.average(s)?;
        Some(OracleValue {
            lower,
            upper,
            value: 0.5 * (lower + upper),
        })
    }

    pub fn value(&self, start: usize) -> Option<OracleValue> {
        self.value_at(&self.initial_state(start))
    }
}

fn empty_layer(dims: &Dims) -> Vec<f64> {
    let mut layer = vec![f64::NAN; dims.len()];
    for (k, x) in layer.iter_mut().enumerate() {
        let (_, a, b) = dims.decode(k);
        if dims.contains(a, b) {
            *x = 0.0;
        }
    }
    layer
}

/// Bid and successor index of the acting side.
type Choice = (u32, u32);

/// Fills one layer from the previous one. `solve` returns the state's value
/// and the acting side's choice.
fn fill_layer<F>(dims: &Dims, solve: F) -> Result<(Vec<f64>, Vec<Choice>)>
where
    F: Fn(usize, u32, u32) -> Result<(f64, (u32, usize))> + Sync,
{
    let cells: Vec<(f64, (u32, u32))> = (0..dims.len())
        .into_par_iter()
        .map(|k| {
            let (v, a, b) = dims.decode(k);
            if !dims.contains(a, b) {
                return Ok((f64::NAN, NO_ACTION));
            }
            let (value, (bid, succ)) = solve(v, a, b)?;
            Ok((value, (bid, succ as u32)))
        })
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().unzip())
}

/// Backward induction over all states up to `horizon` rounds.
pub fn discrete_minimax(
    game: &GameGraph,
    mech: Mechanism,
    units_max: u32,
    units_min: u32,
    horizon: usize,
) -> Result<OracleTables> {
    check_caps(game, units_max, units_min, horizon)?;
    let dims = Dims::new(game, mech, units_max, units_min);
    check_work(game, &dims, horizon)?;
    let weights = game.weights_f64();
    let round = Round {
        game,
        mech,
        dims,
        weights: &weights,
    };
    let mut lower = vec![empty_layer(&dims)];
    let mut upper = vec![empty_layer(&dims)];
    let mut max_actions = vec![Vec::new()];
    let mut min_actions = vec![Vec::new()];
    for _ in 1..=horizon {
        let lo_prev = lower.last().expect("layer 0");
        let up_prev = upper.last().expect("layer 0");
        let (lo, ma) = fill_layer(&dims, |v, a, b| Ok(round.lower(lo_prev, v, a, b)))?;
        let (up, na) = fill_layer(&dims, |v, a, b| Ok(round.upper(up_prev, v, a, b)))?;
        lower.push(lo);
        upper.push(up);
        max_actions.push(ma);
        min_actions.push(na);
    }
    Ok(OracleTables {
        mech,
        units_max,
        units_min,
        lower: ValueTable { dims, layers: lower },
        upper: ValueTable { dims, layers: upper },
        max_policy: TablePolicy {
            side: Side::Max,
            dims,
            actions: max_actions,
        },
        min_policy: TablePolicy {
            side: Side::Min,
            dims,
            actions: min_actions,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub values: ValueTable,
    pub policy: TablePolicy,
    pub units_max: u32,
    pub units_min: u32,
}

impl BestResponse {
    pub fn value(&self, start: usize) -> Option<f64> {
        self.values.average(&DiscreteState {
            vertex: start,
            units_max: self.units_max,
            units_min: self.units_min,
            rounds_left: self.values.horizon(),
        })
    }
}

/// Exact best response of the side opposite to `fixed_side` against a fixed
/// integer-unit policy, for every state.
pub fn best_response_search(
    game: &GameGraph,
    mech: Mechanism,
    fixed: &dyn DiscretePolicy,
    fixed_side: Side,
    units_max: u32,
    units_min: u32,
    horizon: usize,
) -> Result<BestResponse> {
    check_caps(game, units_max, units_min, horizon)?;
    let dims = Dims::new(game, mech, units_max, units_min);
    check_work(game, &dims, horizon)?;
    let weights = game.weights_f64();
    let round = Round {
        game,
        mech,
        dims,
        weights: &weights,
    };
    let mut layers = vec![empty_layer(&dims)];
    let mut actions = vec![Vec::new()];
    for t in 1..=horizon {
        let prev = layers.last().expect("layer 0");
        let (values, acts) = fill_layer(&dims, |v, a, b| {
            let state = DiscreteState {
                vertex: v,
                units_max: a,
                units_min: b,
                rounds_left: t,
            };
            let (bid, succ) = fixed
                .action(&state)
                .ok_or_else(|| Error::Granularity(format!("{state:?}")))?;
            let own = if fixed_side == Side::Max { a } else { b };
            if bid > own || !game.successors(v).contains(&succ) {
                return Err(Error::Granularity(format!(
                    "illegal action ({bid}, {succ}) at {state:?}"
                )));
            }
            Ok(match fixed_side {
                Side::Min => best_reply(
                    round.actions(v, a),
                    |ma| round.outcome(prev, a, b, ma, (bid, succ)),
                    |x, y| x > y,
                ),
                Side::Max => best_reply(
                    round.actions(v, b),
                    |na| round.outcome(prev, a, b, (bid, succ), na),
                    |x, y| x < y,
                ),
            })
        })?;
        layers.push(values);
        actions.push(acts);
    }
    Ok(BestResponse {
        values: ValueTable { dims, layers },
        policy: TablePolicy {
            side: match fixed_side {
                Side::Max => Side::Min,
                Side::Min => Side::Max,
            },
            dims,
            actions,
        },
        units_max,
        units_min,
    })
}

fn best_reply(
    actions: impl Iterator<Item = (u32, usize)>,
    score: impl Fn((u32, usize)) -> f64,
    better: fn(f64, f64) -> bool,
) -> (f64, (u32, usize)) {
    let mut best: Option<(f64, (u32, usize))> = None;
    for act in actions {
        let s = score(act);
        if best.is_none_or(|(bs, _)| better(s, bs)) {
            best = Some((s, act));
        }
    }
    best.expect("every vertex has a successor")
}

/// One of Min's possible budgets, with its probability and her policy.
pub struct FamilyMember<'a> {
    pub weight: f64,
    pub units_min: u32,
    pub policy: &'a dyn DiscretePolicy,
}

/// Max's best response when he only knows a distribution over Min's budget
/// and Min plays a fixed policy for each budget. Max observes both bids and
/// the moves, so he learns which budgets remain consistent with the history.
/// Returns the expected average weight.
pub fn best_response_family(
    game: &GameGraph,
    mech: Mechanism,
    units_max: u32,
    family: &[FamilyMember<'_>],
    start: usize,
    horizon: usize,
) -> Result<f64> {
    if family.is_empty() || family.len() > MAX_FAMILY_ATOMS {
        return Err(Error::StateSpace(format!(
            "family of {} budgets, need 1..={MAX_FAMILY_ATOMS}",
            family.len()
        )));
    }
    for m in family {
        check_caps(game, units_max, m.units_min, horizon)?;
    }
    if start >= game.len() {
        return Err(Error::InvalidArgument(format!("start vertex {start} out of range")));
    }
    let weights = game.weights_f64();
    let total_units = units_max + family.iter().map(|m| m.units_min).max().unwrap_or(0);
    let dims = Dims {
        vertices: game.len(),
        a_max: total_units,
        b_max: total_units,
        total: None,
    };
    let round = Round {
        game,
        mech,
        dims,
        weights: &weights,
    };
    let mut search = FamilySearch {
        round,
        family,
        memo: HashMap::new(),
    };
    let atoms: Vec<(u8, u32)> = family.iter().enumerate().map(|(j, m)| (j as u8, m.units_min)).collect();
    let total = search.value(horizon, start, units_max, &atoms)?;
    Ok(total / horizon as f64)
}

struct FamilySearch<'a, 'b> {
    round: Round<'a>,
    family: &'b [FamilyMember<'b>],
    memo: HashMap<u128, f64>,
}

impl FamilySearch<'_, '_> {
    fn key(t: usize, v: usize, a: u32, atoms: &[(u8, u32)]) -> u128 {
        let mut k = (t as u128) | ((v as u128) << 8) | ((a as u128) << 16);
        for &(j, b) in atoms {
            k |= ((b as u128) | 0x100) << (24 + 9 * j as u32);
        }
        k
    }

    /// Weighted total over the atoms still consistent with the history.
    fn value(&mut self, t: usize, v: usize, a: u32, atoms: &[(u8, u32)]) -> Result<f64> {
        if t == 0 {
            return Ok(0.0);
        }
        let key = Self::key(t, v, a, atoms);
        if let Some(&x) = self.memo.get(&key) {
            return Ok(x);
        }
        let mut replies = Vec::with_capacity(atoms.len());
        for &(j, b) in atoms {
            let state = DiscreteState {
                vertex: v,
                units_max: a,
                units_min: b,
                rounds_left: t,
            };
            let (y, w) = self.family[j as usize]
                .policy
                .action(&state)
                .ok_or_else(|| Error::Granularity(format!("{state:?}")))?;
            if y > b || !self.round.game.successors(v).contains(&w) {
                return Err(Error::Granularity(format!("illegal action ({y}, {w}) at {state:?}")));
            }
            replies.push((y, w));
        }
        let mut best = f64::NEG_INFINITY;
        let succ = self.round.game.successors(v).to_vec();
        for x in 0..=a {
            for &u in &succ {
                // Histories Max can tell apart: Min's bid and where the token went.
                let mut groups: BTreeMap<(u32, usize, u32), Vec<(u8, u32)>> = BTreeMap::new();
                let mut gain = 0.0;
                for (&(j, b), &na) in atoms.iter().zip(&replies) {
                    let (v2, a2, b2) = self.round.next(a, b, (x, u), na);
                    gain += self.family[j as usize].weight * self.round.weights[v2];
                    groups.entry((na.0, v2, a2)).or_default().push((j, b2));
                }
                let mut total = gain;
                for ((_, v2, a2), rest) in groups {
                    total += self.value(t - 1, v2, a2, &rest)?;
                }
                if total > best {
                    best = total;
                }
            }
        }
        self.memo.insert(key, best);
        Ok(best)
    }
}
