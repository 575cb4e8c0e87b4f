//! Bidding games on graphs where Max sees only a distribution over Min's budget.
//!
//! - [`game`]: graphs, budget distributions, bidding mechanisms
//! - [`rt`]: random-turn games and their mean-payoff and reachability values
//! - [`threshold`]: threshold ratios and qualitative partial-information values
//! - [`partial`]: wallet cut points, the potential, and the value gap
//! - [`sim`]: plays, strategies and payoff estimates
//! - [`oracle`]: brute-force minimax at integer budget granularity

pub mod error;
pub mod game;
pub mod oracle;
pub mod partial;
pub mod rt;
pub mod sim;
pub mod threshold;

pub use error::{Error, Result};
pub use game::{
    format_rational, parse_rational, Atom, BudgetDistribution, GameGraph, Mechanism, Objective, PriceRule, Rational,
    Recipient, Vertex,
};
pub use oracle::{best_response_family, best_response_search, discrete_minimax, DiscretePolicy, DiscreteState};
pub use partial::{
    full_info_mp, optimize_partial_value, potential, potential_ledger_check, val_of_sequence, value_gap_report,
    AdmissibilityReport, GapReport, LedgerReport, PartialValue,
};
pub use rt::{solve_rt_mp, solve_rt_reach, RtValue, DEFAULT_TOL};
pub use sim::{expected_payoff, mp_payoff_estimate, run_play, PlayRecord, Protocol, Side, Strategy};
pub use threshold::{qualitative_partial_value, threshold_reach_richman, Threshold};
