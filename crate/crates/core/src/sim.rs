//! Bidding plays with real-valued budgets.
//!
//! Budgets and bids are `f64`. Every round is settled with
//! [`Mechanism::settle`], so a play is a pure function of the two strategies
//! and the setup, and replaying it reproduces the same bits.

use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BudgetDistribution, GameGraph, Mechanism, Recipient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Max,
    Min,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Max => "Max",
            Side::Min => "Min",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundEntry {
    pub bid_max: f64,
    pub bid_min: f64,
    pub winner: Side,
    /// Vertex the token moves to.
    pub vertex: usize,
    /// Weight of `vertex`, credited to Max.
    pub reward: f64,
    /// Budgets after settling the round.
    pub budget_max: f64,
    pub budget_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayRecord {
    pub mech: Mechanism,
    pub start: usize,
    pub initial_max: f64,
    pub initial_min: f64,
    pub entries: Vec<RoundEntry>,
}

impl PlayRecord {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(Inv_max, Inv_min)` over the first `rounds` entries.
    pub fn investments_upto(&self, rounds: usize) -> (f64, f64) {
        self.entries[..rounds].iter().fold((0.0, 0.0), |(im, in_), e| {
            let (a, b) = self.mech.investments(e.bid_max, e.bid_min, e.winner == Side::Max);
            (im + a, in_ + b)
        })
    }

    pub fn investments(&self) -> (f64, f64) {
        self.investments_upto(self.entries.len())
    }

    /// Budgets before round `round` (0-based).
    pub fn budgets_before(&self, round: usize) -> (f64, f64) {
        match round {
            0 => (self.initial_max, self.initial_min),
            r => (self.entries[r - 1].budget_max, self.entries[r - 1].budget_min),
        }
    }

    /// Re-derives every round from the bids and checks the accounting: legal
    /// bids, ties to Min, settlement per mechanism, and the closed-form budget
    /// identities within `1e-9` relative to the total.
    pub fn verify(&self, game: &GameGraph) -> std::result::Result<(), String> {
        let scale = (self.initial_max + self.initial_min).max(1.0);
        let (mut bm, mut bn) = (self.initial_max, self.initial_min);
        let (mut inv_max, mut inv_min) = (0.0, 0.0);
        let mut at = self.start;
        for (round, e) in self.entries.iter().enumerate() {
            if !(0.0..=bm).contains(&e.bid_max) || !(0.0..=bn).contains(&e.bid_min) {
                return Err(format!("round {round}: bid above budget"));
            }
            let max_wins = e.bid_max > e.bid_min;
            if max_wins != (e.winner == Side::Max) {
                return Err(format!("round {round}: wrong winner"));
            }
            if !game.successors(at).contains(&e.vertex) {
                return Err(format!("round {round}: illegal move"));
            }
            let total_before = bm + bn;
            (bm, bn) = self.mech.settle(bm, bn, e.bid_max, e.bid_min, max_wins);
            if (bm, bn) != (e.budget_max, e.budget_min) {
                return Err(format!("round {round}: budgets differ on replay"));
            }
            let (a, b) = self.mech.investments(e.bid_max, e.bid_min, max_wins);
            inv_max += a;
            inv_min += b;
            let (expect_max, expect_min) = match self.mech.recipient {
                Recipient::Poorman => (self.initial_max - inv_max, self.initial_min - inv_min),
                Recipient::Richman => (
                    self.initial_max - inv_max + inv_min,
                    self.initial_min - inv_min + inv_max,
                ),
            };
            if (expect_max - bm).abs() > 1e-9 * scale || (expect_min - bn).abs() > 1e-9 * scale {
                return Err(format!("round {round}: budget identity violated"));
            }
            let total = bm + bn;
            let conserved = match self.mech.recipient {
                Recipient::Richman => (total - total_before).abs() <= 1e-12 * scale,
                Recipient::Poorman => (total_before - total - (a + b)).abs() <= 1e-12 * scale,
            };
            if !conserved {
                return Err(format!("round {round}: total budget not conserved"));
            }
            if bm < 0.0 || bn < 0.0 {
                return Err(format!("round {round}: negative budget"));
            }
            at = e.vertex;
        }
        Ok(())
    }

    pub fn to_csv(&self, game: &GameGraph) -> String {
        let mut out = String::from("round,bid_max,bid_min,winner,vertex,budget_max,budget_min\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i + 1,
                e.bid_max,
                e.bid_min,
                e.winner,
                game.id(e.vertex),
                e.budget_max,
                e.budget_min
            );
        }
        out
    }
}

/// What a strategy sees before bidding.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub game: &'a GameGraph,
    pub mech: Mechanism,
    pub side: Side,
    pub round: usize,
    pub horizon: usize,
    pub vertex: usize,
    /// The acting side's available budget.
    pub budget: f64,
    pub history: &'a [RoundEntry],
}

impl View<'_> {
    pub fn rounds_left(&self) -> usize {
        self.horizon - self.round
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub bid: f64,
    pub successor: usize,
}

pub trait Strategy {
    fn act(&mut self, view: &View<'_>) -> Result<Action>;

    /// Forget any state kept from a previous play.
    fn reset(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub mech: Mechanism,
    pub start: usize,
    pub horizon: usize,
    /// When set, bids are rounded down to a multiple of this step.
    pub granularity: Option<f64>,
}

fn quantize(bid: f64, granularity: Option<f64>) -> f64 {
    match granularity {
        Some(g) => (bid / g).floor() * g,
        None => bid,
    }
}

pub fn run_play(
    game: &GameGraph,
    max: &mut dyn Strategy,
    min: &mut dyn Strategy,
    protocol: &Protocol,
    budget_max: f64,
    budget_min: f64,
) -> Result<PlayRecord> {
    if protocol.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if protocol.start >= game.len() {
        return Err(Error::InvalidArgument(format!(
            "start vertex {} out of range",
            protocol.start
        )));
    }
    if let Some(g) = protocol.granularity {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidArgument(format!("granularity {g} must be positive")));
        }
    }
    for b in [budget_max, budget_min] {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "budget {b} must be finite and non-negative"
            )));
        }
    }
    max.reset();
    min.reset();
    let mut record = PlayRecord {
        mech: protocol.mech,
        start: protocol.start,
        initial_max: budget_max,
        initial_min: budget_min,
        entries: Vec::with_capacity(protocol.horizon),
    };
    let weights = game.weights_f64();
    let (mut bm, mut bn) = (budget_max, budget_min);
    let mut at = protocol.start;
    for round in 0..protocol.horizon {
        let ask = |side: Side, strategy: &mut dyn Strategy, budget: f64| -> Result<Action> {
            let view = View {
                game,
                mech: protocol.mech,
                side,
                round,
                horizon: protocol.horizon,
                vertex: at,
                budget,
                history: &record.entries,
            };
            let mut action = strategy.act(&view)?;
            if !(action.bid >= 0.0 && action.bid <= budget) {
                return Err(Error::IllegalBid {
                    side,
                    round,
                    bid: action.bid,
                    available: budget,
                });
            }
            action.bid = quantize(action.bid, protocol.granularity);
            if !game.successors(at).contains(&action.successor) {
                return Err(Error::IllegalSuccessor {
                    side,
                    round,
                    from: game.id(at).to_string(),
                    vertex: action.successor,
                });
            }
            Ok(action)
        };
        let a = ask(Side::Max, max, bm)?;
        let b = ask(Side::Min, min, bn)?;
        let max_wins = a.bid > b.bid;
        (bm, bn) = protocol.mech.settle(bm, bn, a.bid, b.bid, max_wins);
        at = if max_wins { a.successor } else { b.successor };
        record.entries.push(RoundEntry {
            bid_max: a.bid,
            bid_min: b.bid,
            winner: if max_wins { Side::Max } else { Side::Min },
            vertex: at,
            reward: weights[at],
            budget_max: bm,
            budget_min: bn,
        });
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffEstimate {
    /// Average reward over the last `window` fraction of rounds.
    pub trailing: f64,
    pub full: f64,
}

pub const DEFAULT_WINDOW: f64 = 0.5;

pub fn mp_payoff_estimate(record: &PlayRecord, window: f64) -> Result<PayoffEstimate> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidArgument(format!("window {window} outside (0, 1]")));
    }
    let n = record.entries.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty play record".into()));
    }
    let tail = ((window * n as f64).ceil() as usize).clamp(1, n);
    let sum = |es: &[RoundEntry]| es.iter().map(|e| e.reward).sum::<f64>();
    Ok(PayoffEstimate {
        trailing: sum(&record.entries[n - tail..]) / tail as f64,
        full: sum(&record.entries) / n as f64,
    })
}

/// A full-information bidding rule: own budget, the opponent's budget (as
/// believed by the caller) and the position determine the action.
pub trait BudgetPolicy: Send + Sync {
    fn decide(&self, vertex: usize, own: f64, opp: f64, rounds_left: usize) -> Result<(f64, usize)>;
}

/// Bids a fixed fraction of the own budget, scaled so that the two sides'
/// bids balance when the budget ratio sits at its anchor. Against a matching
/// opponent this wins a share of rounds equal to the anchored share of the
/// total budget, which is the full-information value on complete graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioAnchored {
    pub kappa: f64,
    /// The acting side's anchored share of the total budget.
    pub share: f64,
    pub choices: Vec<usize>,
}

impl RatioAnchored {
    pub fn new(kappa: f64, share: f64, choices: Vec<usize>) -> Self {
        Self { kappa, share, choices }
    }
}

impl BudgetPolicy for RatioAnchored {
    fn decide(&self, vertex: usize, own: f64, _opp: f64, _rounds_left: usize) -> Result<(f64, usize)> {
        let bid = if self.share > self.kappa {
            own * (self.kappa / self.share)
        } else {
            own
        };
        Ok((bid.min(own), self.choices[vertex]))
    }
}

/// Adapts an integer-unit table policy to real budgets: budgets are rounded
/// down to whole units, the remaining horizon is capped at the table's.
pub struct TableBudgetPolicy<P> {
    pub table: P,
    pub side: Side,
    pub unit: f64,
    pub max_units: (u32, u32),
    pub horizon: usize,
}

impl<P: crate::oracle::DiscretePolicy + Send + Sync> BudgetPolicy for TableBudgetPolicy<P> {
    fn decide(&self, vertex: usize, own: f64, opp: f64, rounds_left: usize) -> Result<(f64, usize)> {
        let units = |x: f64, cap: u32| ((x / self.unit + 1e-9).floor().max(0.0) as u32).min(cap);
        let (own_u, opp_u) = match self.side {
            Side::Max => (units(own, self.max_units.0), units(opp, self.max_units.1)),
            Side::Min => (units(own, self.max_units.1), units(opp, self.max_units.0)),
        };
        let (a, b) = match self.side {
            Side::Max => (own_u, opp_u),
            Side::Min => (opp_u, own_u),
        };
        let state = crate::oracle::DiscreteState {
            vertex,
            units_max: a,
            units_min: b,
            rounds_left: rounds_left.clamp(1, self.horizon),
        };
        let (bid, succ) = self
            .table
            .action(&state)
            .ok_or_else(|| Error::Granularity(format!("{state:?}")))?;
        Ok(((bid as f64 * self.unit).min(own), succ))
    }
}

/// Plays a full-information policy, reading the opponent's budget off the
/// history. The opponent's initial budget is part of the strategy.
pub struct FullInfo<P> {
    pub side: Side,
    pub opponent_initial: f64,
    pub policy: P,
}

impl<P: BudgetPolicy> Strategy for FullInfo<P> {
    fn act(&mut self, view: &View<'_>) -> Result<Action> {
        let opp = match (view.history.last(), self.side) {
            (None, _) => self.opponent_initial,
            (Some(e), Side::Max) => e.budget_min,
            (Some(e), Side::Min) => e.budget_max,
        };
        let (bid, successor) = self.policy.decide(view.vertex, view.budget, opp, view.rounds_left())?;
        Ok(Action { bid, successor })
    }
}

/// Min who knows both budgets and plays the full-information policy for her
/// true budget from the first round on.
pub fn naive_fully_informed_min<P: BudgetPolicy>(max_budget: f64, policy: P) -> FullInfo<P> {
    FullInfo {
        side: Side::Min,
        opponent_initial: max_budget,
        policy,
    }
}

/// Max's wallet strategy: the budget is cut at `xs`, and wallet `i` is spent
/// against the slice `C_i - C_{i-1}` of Min's possible budgets. Max moves to
/// the next wallet once Min's investment exceeds `C_i`.
pub struct WalletStrategy {
    xs: Vec<f64>,
    cs: Vec<f64>,
    policies: Vec<Box<dyn BudgetPolicy>>,
    seen: usize,
    wallet: usize,
    balance: f64,
    inv_min: f64,
}

impl WalletStrategy {
    pub fn new(
        xs: Vec<f64>,
        policies: Vec<Box<dyn BudgetPolicy>>,
        gamma: &BudgetDistribution,
        mech: Mechanism,
    ) -> Result<Self> {
        if !mech.is_poorman() {
            return Err(Error::InvalidArgument("wallet strategies need poorman bidding".into()));
        }
        let n = gamma.len();
        if xs.len() != n || policies.len() != n {
            return Err(Error::InvalidArgument(format!(
                "need {n} cut points and policies, got {} and {}",
                xs.len(),
                policies.len()
            )));
        }
        if xs[0] < 0.0 || xs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("cut points must be non-decreasing".into()));
        }
        let first = xs[0];
        Ok(Self {
            xs,
            cs: gamma.budgets_f64(),
            policies,
            seen: 0,
            wallet: 0,
            balance: first,
            inv_min: 0.0,
        })
    }

    /// Wallet per segment anchored at the segment's budget share.
    pub fn ratio_anchored(
        xs: Vec<f64>,
        gamma: &BudgetDistribution,
        mech: Mechanism,
        kappa: f64,
        choices: &[usize],
    ) -> Result<Self> {
        let cs = gamma.budgets_f64();
        let mut policies: Vec<Box<dyn BudgetPolicy>> = Vec::with_capacity(xs.len());
        let (mut x0, mut c0) = (0.0, 0.0);
        for (&x, &c) in xs.iter().zip(&cs) {
            let (dx, dc) = (x - x0, c - c0);
            let share = if dx + dc > 0.0 { dx / (dx + dc) } else { 0.0 };
            policies.push(Box::new(RatioAnchored::new(kappa, share, choices.to_vec())));
            (x0, c0) = (x, c);
        }
        Self::new(xs, policies, gamma, mech)
    }

    pub fn wallet(&self) -> usize {
        self.wallet
    }

    /// Unspent part of the wallets opened so far.
    pub fn balance(&self) -> f64 {
        self.balance
    }
}

impl Strategy for WalletStrategy {
    fn act(&mut self, view: &View<'_>) -> Result<Action> {
        for e in &view.history[self.seen..] {
            let (spent, invested) = view.mech.investments(e.bid_max, e.bid_min, e.winner == Side::Max);
            self.balance -= spent;
            self.inv_min += invested;
        }
        self.seen = view.history.len();
        while self.wallet + 1 < self.xs.len() && self.inv_min > self.cs[self.wallet] {
            self.wallet += 1;
            self.balance += self.xs[self.wallet] - self.xs[self.wallet - 1];
        }
        let own = self.balance.clamp(0.0, view.budget);
        let opp = (self.cs[self.wallet] - self.inv_min).max(0.0);
        let (bid, successor) = self.policies[self.wallet].decide(view.vertex, own, opp, view.rounds_left())?;
        if bid > own {
            return Err(Error::WalletOverdraft {
                wallet: self.wallet,
                bid,
                balance: own,
            });
        }
        Ok(Action { bid, successor })
    }

    fn reset(&mut self) {
        self.seen = 0;
        self.wallet = 0;
        self.balance = self.xs[0];
        self.inv_min = 0.0;
    }
}

/// Always the same bid (capped by the budget) and a fixed successor per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantBid {
    pub bid: f64,
    pub choices: Vec<usize>,
}

impl Strategy for ConstantBid {
    fn act(&mut self, view: &View<'_>) -> Result<Action> {
        Ok(Action {
            bid: self.bid.min(view.budget),
            successor: self.choices[view.vertex],
        })
    }
}

/// Bids a uniformly random fraction of the budget and moves to a random
/// successor. The generator restarts from `seed` at every play.
#[derive(Debug, Clone)]
pub struct RandomBids {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomBids {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Strategy for RandomBids {
    fn act(&mut self, view: &View<'_>) -> Result<Action> {
        let fraction: f64 = self.rng.gen();
        let succ = view.game.successors(view.vertex);
        Ok(Action {
            bid: view.budget * fraction,
            successor: succ[self.rng.gen_range(0..succ.len())],
        })
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }
}

/// Builds the strategy a player uses for a given initial budget.
pub type StrategyFamily<'a> = dyn Fn(f64) -> Result<Box<dyn Strategy>> + Sync + 'a;

/// `sum_{B,C} beta(B) gamma(C) payoff(f_B, g_C)`. Plays run in parallel; the
/// sum is taken in atom order so the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn expected_payoff(
    game: &GameGraph,
    fam_max: &StrategyFamily<'_>,
    fam_min: &StrategyFamily<'_>,
    beta: &BudgetDistribution,
    gamma: &BudgetDistribution,
    protocol: &Protocol,
    window: f64,
) -> Result<PayoffEstimate> {
    let pairs: Vec<(f64, f64, f64)> = beta
        .atoms()
        .iter()
        .flat_map(|b| {
            gamma.atoms().iter().map(move |c| {
                (
                    crate::game::to_f64(&b.budget),
                    crate::game::to_f64(&c.budget),
                    crate::game::to_f64(&(&b.prob * &c.prob)),
                )
            })
        })
        .collect();
    let estimates: Vec<PayoffEstimate> = pairs
        .par_iter()
        .map(|&(b, c, _)| {
            let mut f = fam_max(b)?;
            let mut g = fam_min(c)?;
            let record = run_play(game, f.as_mut(), g.as_mut(), protocol, b, c)?;
            mp_payoff_estimate(&record, window)
        })
        .collect::<Result<_>>()?;
    let mut total = PayoffEstimate {
        trailing: 0.0,
        full: 0.0,
    };
    for (&(_, _, w), e) in pairs.iter().zip(&estimates) {
        total.trailing += w * e.trailing;
        total.full += w * e.full;
    }
    Ok(total)
}
