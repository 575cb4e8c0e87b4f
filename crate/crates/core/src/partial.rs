//! Mean-payoff values under one-sided partial information.
//!
//! Max knows his own budget `B` but only a distribution over Min's budget.
//! He splits `B` into wallets with cut points `x_1 <= ... <= x_n = B`; wallet
//! `i` plays a full-information game against the slice `C_i - C_{i-1}` of
//! Min's budget, which is worth `p_i = MP(RT(G, bias_i))`. The cut points are
//! admissible when the `p_i` are non-increasing, and Max's value is the best
//! `sum_i gamma(C_i) p_i` over admissible cut points.
//!
//! The fully-informed side of the bowtie is described by the potential
//! `Pot(B, gamma) = sum_j gamma(C_j) B / (B + C_j)`.

use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{to_f64, BudgetDistribution, GameGraph, Mechanism, PriceRule, Rational, Recipient};
use crate::rt::{self, solve_rt_mp, AffineCurve, DirectRt, RtValue};

/// Slack allowed in `p_1 >= p_2 >= ... >= p_n`.
pub const ADMISSIBILITY_BAND: f64 = 1e-9;

/// Bias of the random-turn game equivalent to a full-information game at
/// initial ratio `r`.
pub fn full_info_bias(mech: Mechanism, r: f64) -> f64 {
    match (mech.price, mech.recipient) {
        (PriceRule::FirstPrice, Recipient::Richman) => 0.5,
        (PriceRule::FirstPrice, Recipient::Poorman) => r,
        (PriceRule::AllPay, Recipient::Poorman) if r > 0.5 => (2.0 * r - 1.0) / r,
        (PriceRule::AllPay, Recipient::Poorman) => 0.0,
        // Pure strategies cannot secure anything for Max here; the floor is
        // what Min achieves when she moves every turn.
        (PriceRule::AllPay, Recipient::Richman) => 0.0,
    }
}

pub fn full_info_mp(game: &GameGraph, mech: Mechanism, r: f64, tol: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("ratio {r} outside (0, 1)")));
    }
    solve_rt_mp(game, full_info_bias(mech, r), tol)
}

/// Bias fed to the random-turn game for one wallet segment.
pub fn segment_bias(price: PriceRule, dx: f64, dc: f64) -> f64 {
    match price {
        PriceRule::FirstPrice => {
            if dx + dc > 0.0 {
                dx / (dx + dc)
            } else {
                0.0
            }
        }
        PriceRule::AllPay => {
            if dx > dc {
                1.0 - dc / dx
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub xs: Vec<f64>,
    pub biases: Vec<f64>,
    pub ps: Vec<f64>,
    pub val: f64,
    pub admissible: bool,
}

fn require_poorman(mech: Mechanism) -> Result<()> {
    if mech.recipient != Recipient::Poorman {
        return Err(Error::InvalidArgument(format!(
            "wallet values are defined for poorman bidding, got {mech}"
        )));
    }
    Ok(())
}

fn budget_matches(x: f64, budget: f64) -> bool {
    (x - budget).abs() <= 1e-12 * budget.abs().max(1.0)
}

pub fn val_of_sequence(
    curve: &dyn RtValue,
    xs: &[f64],
    budget: f64,
    gamma: &BudgetDistribution,
    mech: Mechanism,
) -> Result<AdmissibilityReport> {
    require_poorman(mech)?;
    if xs.len() != gamma.len() {
        return Err(Error::InvalidArgument(format!(
            "{} cut points for a support of size {}",
            xs.len(),
            gamma.len()
        )));
    }
    if xs.first().is_some_and(|&x| x < 0.0) || xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "cut points must be non-decreasing and non-negative".into(),
        ));
    }
    if !xs.last().is_some_and(|&x| budget_matches(x, budget)) {
        return Err(Error::InvalidArgument(format!(
            "last cut point must equal the budget {budget}"
        )));
    }
    let cs = gamma.budgets_f64();
    let probs = gamma.probs_f64();
    let mut biases = Vec::with_capacity(xs.len());
    let mut ps = Vec::with_capacity(xs.len());
    let (mut x_prev, mut c_prev) = (0.0, 0.0);
    for (&x, &c) in xs.iter().zip(&cs) {
        let bias = segment_bias(mech.price, x - x_prev, c - c_prev);
        ps.push(curve.rt_value(bias)?);
        biases.push(bias);
        (x_prev, c_prev) = (x, c);
    }
    let val = probs.iter().zip(&ps).map(|(g, p)| g * p).sum();
    let admissible = ps.windows(2).all(|w| w[0] >= w[1] - ADMISSIBILITY_BAND);
    Ok(AdmissibilityReport {
        xs: xs.to_vec(),
        biases,
        ps,
        val,
        admissible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Grid points per free cut point.
    pub points: usize,
    /// Zoom-in passes after the initial uniform pass.
    pub refinements: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            points: 512,
            refinements: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialValue {
    pub value: f64,
    pub xs: Vec<f64>,
    pub biases: Vec<f64>,
    pub ps: Vec<f64>,
    /// Largest change in Val observed one grid step away from the incumbent,
    /// plus the value oracle's own tolerance.
    pub tolerance: f64,
}

struct Segments {
    price: PriceRule,
    cs: Vec<f64>,
    probs: Vec<f64>,
}

impl Segments {
    fn bias(&self, i: usize, a: f64, b: f64) -> f64 {
        let c_prev = if i == 0 { 0.0 } else { self.cs[i - 1] };
        segment_bias(self.price, b - a, self.cs[i] - c_prev)
    }
}

/// One DP layer over pairs `(x_{i-1}, x_i)` drawn from two grids.
/// Values, best incumbents and argmax columns of one grid row.
type Row = (Vec<f64>, Vec<f64>, Vec<u32>);

struct Layer {
    cols: usize,
    p: Vec<f64>,
    best: Vec<f64>,
    parent: Vec<u32>,
}

fn dp_pass(curve: &dyn RtValue, seg: &Segments, grids: &[Vec<f64>]) -> Result<Option<Vec<f64>>> {
    let n = seg.cs.len();
    let mut layers: Vec<Layer> = Vec::with_capacity(n);
    for i in 0..n {
        let (left, right) = (&grids[i], &grids[i + 1]);
        let cols = right.len();
        let rows: Vec<Result<Row>> = left
            .par_iter()
            .enumerate()
            .map(|(ai, &a)| {
                let mut p_row = vec![f64::NAN; cols];
                let mut best_row = vec![f64::NEG_INFINITY; cols];
                let mut parent_row = vec![u32::MAX; cols];
                // Feasible predecessors of `a`, sorted by their p descending,
                // with running maxima of the accumulated value.
                let mut preds: Vec<(f64, f64, u32)> = Vec::new();
                if i > 0 {
                    let prev = &layers[i - 1];
                    preds = (0..grids[i - 1].len())
                        .filter_map(|z| {
                            let k = z * prev.cols + ai;
                            prev.best[k].is_finite().then(|| (prev.p[k], prev.best[k], z as u32))
                        })
                        .collect();
                    preds.sort_by(|x, y| y.0.total_cmp(&x.0));
                    for k in 1..preds.len() {
                        if preds[k - 1].1 > preds[k].1 {
                            preds[k].1 = preds[k - 1].1;
                            preds[k].2 = preds[k - 1].2;
                        }
                    }
                }
                for (bi, &b) in right.iter().enumerate() {
                    if b < a {
                        continue;
                    }
                    let p = curve.rt_value(seg.bias(i, a, b))?;
                    p_row[bi] = p;
                    let gain = seg.probs[i] * p;
                    if i == 0 {
                        best_row[bi] = gain;
                        continue;
                    }
                    let k = preds.partition_point(|e| e.0 >= p - ADMISSIBILITY_BAND);
                    if k > 0 {
                        best_row[bi] = gain + preds[k - 1].1;
                        parent_row[bi] = preds[k - 1].2;
                    }
                }
                Ok((p_row, best_row, parent_row))
            })
            .collect();
        let mut layer = Layer {
            cols,
            p: Vec::with_capacity(left.len() * cols),
            best: Vec::with_capacity(left.len() * cols),
            parent: Vec::with_capacity(left.len() * cols),
        };
        for row in rows {
            let (p, best, parent) = row?;
            layer.p.extend(p);
            layer.best.extend(best);
            layer.parent.extend(parent);
        }
        layers.push(layer);
    }

    // Last grid is the single point B.
    let last = &layers[n - 1];
    let mut best_row = None;
    for a in 0..grids[n - 1].len() {
        let v = last.best[a * last.cols];
        if v.is_finite() && best_row.is_none_or(|(_, bv)| v > bv) {
            best_row = Some((a, v));
        }
    }
    let Some((mut a, _)) = best_row else {
        return Ok(None);
    };
    let mut idx = vec![0usize; n + 1];
    idx[n] = 0;
    for i in (1..n).rev() {
        idx[i] = a;
        a = layers[i].parent[a * layers[i].cols + idx[i + 1]] as usize;
    }
    idx[0] = 0;
    Ok(Some((0..=n).skip(1).map(|i| grids[i][idx[i]]).collect()))
}

fn uniform(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 || hi <= lo {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    let mut g: Vec<f64> = (0..points).map(|k| lo + step * k as f64).collect();
    *g.last_mut().unwrap() = hi;
    g
}

/// Maximizes Val over admissible cut points with a grid DP, zooming in on
/// the incumbent after each pass.
pub fn optimize_with(
    curve: &dyn RtValue,
    budget: f64,
    gamma: &BudgetDistribution,
    mech: Mechanism,
    config: OptimizerConfig,
) -> Result<PartialValue> {
    require_poorman(mech)?;
    if budget.is_nan() || budget < 0.0 {
        return Err(Error::InvalidArgument(format!("budget {budget} must be non-negative")));
    }
    let points = config.points.max(3);
    let seg = Segments {
        price: mech.price,
        cs: gamma.budgets_f64(),
        probs: gamma.probs_f64(),
    };
    let n = seg.cs.len();
    let mut grids: Vec<Vec<f64>> = vec![vec![0.0]];
    for _ in 1..n {
        grids.push(uniform(0.0, budget, points));
    }
    grids.push(vec![budget]);

    let mut spacing = if points > 1 {
        budget / (points - 1) as f64
    } else {
        budget
    };
    let mut xs = dp_pass(curve, &seg, &grids)?
        .ok_or_else(|| Error::InvalidArgument("no admissible cut points on the grid".into()))?;
    for _ in 0..config.refinements {
        if n == 1 || spacing == 0.0 {
            break;
        }
        let half = 4.0 * spacing;
        for i in 1..n {
            let center = xs[i - 1];
            let mut g = uniform((center - half).max(0.0), (center + half).min(budget), points);
            if let Err(pos) = g.binary_search_by(|v| v.total_cmp(&center)) {
                g.insert(pos, center);
            }
            grids[i] = g;
        }
        spacing = 2.0 * half / (points - 1) as f64;
        if let Some(better) = dp_pass(curve, &seg, &grids)? {
            xs = better;
        }
    }

    let report = val_of_sequence(curve, &xs, budget, gamma, mech)?;
    let mut variation: f64 = 0.0;
    for i in 0..n.saturating_sub(1) {
        for delta in [-spacing, spacing] {
            let mut probe = xs.clone();
            let lo = if i == 0 { 0.0 } else { probe[i - 1] };
            probe[i] = (probe[i] + delta).clamp(lo, probe[i + 1]);
            let r = val_of_sequence(curve, &probe, budget, gamma, mech)?;
            if r.admissible {
                variation = variation.max((r.val - report.val).abs());
            }
        }
    }
    Ok(PartialValue {
        value: report.val,
        xs: report.xs,
        biases: report.biases,
        ps: report.ps,
        tolerance: variation + curve.tolerance(),
    })
}

/// Max's value `MP↓(G, B, gamma)` for poorman bidding in a strongly
/// connected game.
pub fn optimize_partial_value(
    game: &GameGraph,
    budget: f64,
    gamma: &BudgetDistribution,
    mech: Mechanism,
    tol: f64,
) -> Result<PartialValue> {
    optimize_partial_value_with(game, budget, gamma, mech, tol, OptimizerConfig::default(), 33)
}

pub fn optimize_partial_value_with(
    game: &GameGraph,
    budget: f64,
    gamma: &BudgetDistribution,
    mech: Mechanism,
    tol: f64,
    config: OptimizerConfig,
    curve_points: usize,
) -> Result<PartialValue> {
    require_poorman(mech)?;
    if let Some(closed) = AffineCurve::for_game(game) {
        return optimize_with(&closed, budget, gamma, mech, config);
    }
    let mut curve = rt::value_curve(game, curve_points, tol)?;
    let first = optimize_with(&curve, budget, gamma, mech, config)?;

    // Sharpen the curve around the biases the incumbent relies on.
    let mut probes: Vec<f64> = Vec::new();
    for &b in &first.biases {
        for d in [0.0, -1.0 / 256.0, 1.0 / 256.0, -1.0 / 64.0, 1.0 / 64.0] {
            probes.push((b + d).clamp(0.0, 1.0));
        }
    }
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    let samples: Vec<(f64, f64)> = probes
        .par_iter()
        .map(|&p| Ok((p, solve_rt_mp(game, p, tol)?)))
        .collect::<Result<_>>()?;
    curve.insert_samples(&samples);
    let second = optimize_with(&curve, budget, gamma, mech, config)?;

    let exact = val_of_sequence(&DirectRt { game, tol }, &second.xs, budget, gamma, mech)?;
    let drift = (exact.val - second.value).abs();
    Ok(PartialValue {
        value: exact.val,
        xs: exact.xs,
        biases: exact.biases,
        ps: exact.ps,
        tolerance: second.tolerance + drift,
    })
}

/// `Pot(B, gamma) = sum_j gamma(C_j) * B / (B + C_j)`, exactly.
pub fn potential(budget: &Rational, gamma: &BudgetDistribution) -> Result<Rational> {
    if budget.is_negative() {
        return Err(Error::InvalidArgument("budget must be non-negative".into()));
    }
    let mut total = Rational::zero();
    for atom in gamma.atoms() {
        let denom = budget + &atom.budget;
        if denom.is_zero() {
            return Err(Error::InvalidArgument("potential undefined: B = 0 and C = 0".into()));
        }
        total += &atom.prob * budget / denom;
    }
    Ok(total)
}

/// `MP↑` on the bowtie: the value Min secures by revealing her budget at
/// once and playing the full-information strategy for it.
pub fn fully_informed_value_bowtie(budget: &Rational, gamma: &BudgetDistribution) -> Result<Rational> {
    potential(budget, gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub mp_down: f64,
    pub mp_up: f64,
    pub gap: f64,
    pub xs: Vec<f64>,
    pub tolerance: f64,
}

/// Both players' pure-strategy values on the bowtie under first-price poorman
/// bidding. A positive gap means the game has no value.
pub fn value_gap_report(budget: &Rational, gamma: &BudgetDistribution, tol: f64) -> Result<GapReport> {
    let down = optimize_partial_value(
        &GameGraph::bowtie(),
        to_f64(budget),
        gamma,
        Mechanism::FIRST_PRICE_POORMAN,
        tol,
    )?;
    let up = to_f64(&fully_informed_value_bowtie(budget, gamma)?);
    Ok(GapReport {
        mp_down: down.value,
        mp_up: up,
        gap: up - down.value,
        xs: down.xs,
        tolerance: down.tolerance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRound {
    pub round: usize,
    pub max_budget: Rational,
    pub min_budgets: Vec<Rational>,
    pub stake_max: Rational,
    pub stake_min: Rational,
    pub potential: Rational,
    /// `B_i >= lambda^i B`
    pub max_spends_slowly: bool,
    /// `C_j^i <= C_j - rho (1 - lambda^i) B` for all j
    pub min_spends_fast: bool,
    /// `Pot(B_i, gamma_i) >= Pot(B, gamma)`
    pub potential_kept: bool,
    /// `x_i / (x_i + y_i) = Pot(B, gamma)`
    pub stake_ratio_is_potential: bool,
    /// `Pot(B_i - x_i, gamma_i) >= Pot(B, gamma) - eps/2`, atom by atom
    pub revealing_step_bound: bool,
    /// The convexity chain `Pot(B_i, gamma_i) >= sum gamma f(.) >= f(Pot) = Pot`
    pub convexity_chain: bool,
}

impl LedgerRound {
    pub fn holds(&self) -> bool {
        self.max_spends_slowly
            && self.min_spends_fast
            && self.potential_kept
            && self.stake_ratio_is_potential
            && self.revealing_step_bound
            && self.convexity_chain
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerReport {
    pub lambda: Rational,
    pub rho: Rational,
    pub initial_potential: Rational,
    /// First round at which Min's smallest budget would have to be
    /// non-positive if she kept hiding it; `None` when no such round exists.
    pub round_bound: Option<usize>,
    pub rounds: Vec<LedgerRound>,
    pub verdict: bool,
}

fn pot_of(budget: &Rational, cs: &[Rational], probs: &[Rational]) -> Rational {
    cs.iter().zip(probs).map(|(c, g)| g * budget / (budget + c)).sum()
}

fn round_bound(c1: &Rational, rho: &Rational, budget: &Rational, lambda: &Rational) -> Option<usize> {
    let limit = c1 - rho * budget;
    if !limit.is_negative() {
        return None;
    }
    let forced = |i: usize| {
        let li = num_traits::pow::pow(lambda.clone(), i);
        !(c1 - rho * (Rational::one() - li) * budget).is_positive()
    };
    let target = 1.0 - to_f64(c1) / to_f64(&(rho * budget));
    let mut i = (target.ln() / to_f64(lambda).ln()).ceil().max(0.0) as usize;
    while i > 0 && forced(i - 1) {
        i -= 1;
    }
    while !forced(i) {
        i += 1;
    }
    Some(i)
}

/// Replays the worst case of the "Min keeps her budget hidden" outcome: each
/// round Max loses exactly his stake `x_i` and Min spends exactly `y_i`.
/// Every invariant is checked in exact arithmetic.
pub fn potential_ledger_check(
    budget: &Rational,
    gamma: &BudgetDistribution,
    eps: &Rational,
    rounds: usize,
) -> Result<LedgerReport> {
    if !eps.is_positive() || eps >= &Rational::one() {
        return Err(Error::InvalidArgument("eps must lie in (0, 1)".into()));
    }
    if !budget.is_positive() {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let two = Rational::from_integer(2.into());
    let half_eps = eps / &two;
    let lambda = Rational::one() - &half_eps;
    let pot0 = potential(budget, gamma)?;
    let rho = pot0.recip() - Rational::one();
    let cs: Vec<Rational> = gamma.atoms().iter().map(|a| a.budget.clone()).collect();
    let probs: Vec<Rational> = gamma.atoms().iter().map(|a| a.prob.clone()).collect();
    let bound = round_bound(&cs[0], &rho, budget, &lambda);
    let last = match bound {
        Some(b) => rounds.min(b.saturating_sub(1)),
        None => rounds,
    };

    let mut max_budget = budget.clone();
    let mut min_budgets = cs.clone();
    let mut lambda_i = Rational::one();
    let mut trace = Vec::with_capacity(last + 1);
    for i in 0..=last {
        let stake_max = &half_eps * &lambda_i * budget;
        let stake_min = &rho * &stake_max;
        let spent_max = (Rational::one() - &lambda_i) * budget;
        let spent_min = &rho * &spent_max;

        let max_spends_slowly = max_budget >= &lambda_i * budget;
        let min_spends_fast = min_budgets.iter().zip(&cs).all(|(ci, c)| ci <= &(c - &spent_min));
        let pot_i = pot_of(&max_budget, &min_budgets, &probs);
        let potential_kept = pot_i >= pot0;
        let stake_ratio_is_potential = &stake_max / (&stake_max + &stake_min) == pot0;

        let reduced = &max_budget - &stake_max;
        let per_atom = min_budgets.iter().all(|c| {
            let drop = &max_budget / (&max_budget + c) - &reduced / (&reduced + c);
            drop <= &stake_max / &max_budget && &stake_max / &max_budget <= half_eps
        });
        let revealing_step_bound = per_atom && pot_of(&reduced, &min_budgets, &probs) >= &pot0 - &half_eps;

        let f = |t: &Rational| t * (budget - &spent_max) / (budget - t * (&spent_max + &spent_min));
        let mixed: Rational = cs
            .iter()
            .zip(&probs)
            .map(|(c, g)| g * f(&(budget / (budget + c))))
            .sum();
        let f_pot = f(&pot0);
        let convexity_chain = pot_i >= mixed && mixed >= f_pot && f_pot == pot0;

        trace.push(LedgerRound {
            round: i,
            max_budget: max_budget.clone(),
            min_budgets: min_budgets.clone(),
            stake_max: stake_max.clone(),
            stake_min: stake_min.clone(),
            potential: pot_i,
            max_spends_slowly,
            min_spends_fast,
            potential_kept,
            stake_ratio_is_potential,
            revealing_step_bound,
            convexity_chain,
        });

        max_budget -= &stake_max;
        for c in &mut min_budgets {
            *c -= &stake_min;
        }
        lambda_i *= &lambda;
    }
    let verdict = trace.iter().all(LedgerRound::holds);
    Ok(LedgerReport {
        lambda,
        rho,
        initial_potential: pot0,
        round_bound: bound,
        rounds: trace,
        verdict,
    })
}

impl LedgerReport {
    pub fn to_json(&self) -> serde_json::Value {
        use crate::game::format_rational as fr;
        serde_json::json!({
            "lambda": fr(&self.lambda),
            "rho": fr(&self.rho),
            "potential": fr(&self.initial_potential),
            "round_bound": self.round_bound,
            "verdict": self.verdict,
            "rounds": self.rounds.iter().map(|r| serde_json::json!({
                "round": r.round,
                "max_budget": r.max_budget.to_f64(),
                "min_budgets": r.min_budgets.iter().map(|c| c.to_f64()).collect::<Vec<_>>(),
                "stake_max": r.stake_max.to_f64(),
                "stake_min": r.stake_min.to_f64(),
                "potential": r.potential.to_f64(),
                "p2": r.max_spends_slowly,
                "p3": r.min_spends_fast,
                "p4": r.potential_kept,
                "stake_ratio": r.stake_ratio_is_potential,
                "revealing_step": r.revealing_step_bound,
                "convexity": r.convexity_chain,
            })).collect::<Vec<_>>(),
        })
    }
}
