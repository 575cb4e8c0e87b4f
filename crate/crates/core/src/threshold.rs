//! Threshold ratios of qualitative games and the partial-information value
//! obtained by summing the budget pairs on Max's side of the threshold.

use num_traits::{One, Signed, ToPrimitive};

use crate::error::Result;
use crate::game::{format_rational, BudgetDistribution, GameGraph, Rational};
use crate::rt::solve_rt_reach;

/// Comparisons against an inexact threshold that fall within this band go to Min.
pub const TIE_BAND: f64 = 1e-12;

/// A threshold ratio, exact when known as a rational.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Exact(Rational),
    Approx(f64),
}

impl Threshold {
    pub fn as_f64(&self) -> f64 {
        match self {
            Threshold::Exact(q) => q.to_f64().unwrap_or(f64::NAN),
            Threshold::Approx(x) => *x,
        }
    }

    /// True when a ratio strictly beats the threshold. Exact ties, and
    /// inexact near-ties, lose.
    pub fn is_beaten_by(&self, ratio: &Rational) -> bool {
        match self {
            Threshold::Exact(t) => ratio > t,
            Threshold::Approx(t) => ratio.to_f64().unwrap_or(f64::NAN) > t + TIE_BAND,
        }
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Exact(q) => f.write_str(&format_rational(q)),
            Threshold::Approx(x) => write!(f, "{x}"),
        }
    }
}

/// Per-vertex thresholds of a reachability game.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMap {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl ThresholdMap {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|k| self.values[k])
    }

    /// The threshold at `id` as a small-denominator rational when one lies
    /// within `TIE_BAND` of the computed value.
    pub fn exact(&self, id: &str, max_denominator: u64) -> Option<Threshold> {
        let x = self.get(id)?;
        let snapped = best_rational(x, max_denominator)?;
        let err = (snapped.to_f64()? - x).abs();
        (err <= TIE_BAND).then_some(Threshold::Exact(snapped))
    }
}

/// Closest fraction with bounded denominator, by continued-fraction convergents.
fn best_rational(x: f64, max_denominator: u64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        let ai = a as i128;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > max_denominator as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = rest - a;
        if frac.abs() < 1e-15 {
            break;
        }
        rest = 1.0 / frac;
    }
    (k1 != 0).then(|| Rational::new(h1.into(), k1.into()))
}

/// First-price Richman thresholds: one minus Max's reach probability in the
/// uniform random-turn game.
pub fn threshold_reach_richman(game: &GameGraph) -> Result<ThresholdMap> {
    let reach = solve_rt_reach(game, 0.5)?;
    Ok(ThresholdMap {
        ids: game.vertices().iter().map(|v| v.id.clone()).collect(),
        values: reach.iter().map(|p| (1.0 - p).clamp(0.0, 1.0)).collect(),
    })
}

/// Probability that Max wins: the mass of budget pairs whose ratio beats `th`.
pub fn qualitative_partial_value(th: &Threshold, beta: &BudgetDistribution, gamma: &BudgetDistribution) -> Rational {
    let mut total = Rational::from_integer(0.into());
    for b in beta.atoms() {
        for c in gamma.atoms() {
            let sum = &b.budget + &c.budget;
            // B = C = 0 leaves the ratio undefined; nobody has anything to bid with
            // and ties go to Min.
            if !sum.is_positive() {
                continue;
            }
            if th.is_beaten_by(&(&b.budget / sum)) {
                total += &b.prob * &c.prob;
            }
        }
    }
    total
}

/// Win probability recast as an expected payoff in {-1, 1}.
pub fn expected_signed_payoff(win_probability: &Rational) -> Rational {
    win_probability * Rational::from_integer(2.into()) - Rational::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{parse_rational, Objective, Vertex};

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn path_game() -> GameGraph {
        let mk = |id: &str, target| Vertex {
            id: id.into(),
            weight: q("0"),
            target,
        };
        GameGraph::new(
            Objective::Reachability,
            vec![
                mk("t2", false),
                mk("v0", false),
                mk("v1", false),
                mk("t1", true),
                mk("island", false),
            ],
            vec![(0, 0), (1, 0), (1, 2), (2, 1), (2, 3), (3, 3), (4, 4)],
        )
        .unwrap()
    }

    #[test]
    fn richman_thresholds_on_path() {
        let th = threshold_reach_richman(&path_game()).unwrap();
        assert!((th.get("v0").unwrap() - 2.0 / 3.0).abs() < 1e-10);
        assert!((th.get("v1").unwrap() - 1.0 / 3.0).abs() < 1e-10);
        assert_eq!(th.get("t1"), Some(0.0));
        assert_eq!(th.get("island"), Some(1.0));
        assert_eq!(th.exact("v0", 1000), Some(Threshold::Exact(q("2/3"))));
    }

    #[test]
    fn partial_value_enumerates_winning_pairs() {
        let beta = BudgetDistribution::point(q("1")).unwrap();
        let gamma = BudgetDistribution::uniform(vec![q("0.2"), q("1")]).unwrap();
        let v = qualitative_partial_value(&Threshold::Exact(q("2/3")), &beta, &gamma);
        assert_eq!(v, q("1/2"));
        assert_eq!(expected_signed_payoff(&v), q("0"));
    }

    #[test]
    fn exact_tie_goes_to_min() {
        let one = BudgetDistribution::point(q("1")).unwrap();
        assert_eq!(
            qualitative_partial_value(&Threshold::Exact(q("1/2")), &one, &one),
            q("0")
        );
        assert_eq!(qualitative_partial_value(&Threshold::Approx(0.5), &one, &one), q("0"));
        assert_eq!(
            qualitative_partial_value(&Threshold::Approx(0.5 - 1e-13), &one, &one),
            q("0")
        );
    }

    #[test]
    fn zero_threshold_with_positive_budgets() {
        let beta = BudgetDistribution::uniform(vec![q("1"), q("3")]).unwrap();
        let gamma = BudgetDistribution::uniform(vec![q("2"), q("7")]).unwrap();
        assert_eq!(
            qualitative_partial_value(&Threshold::Exact(q("0")), &beta, &gamma),
            q("1")
        );
    }

    #[test]
    fn continued_fraction_snap() {
        assert_eq!(best_rational(0.6666666666666666, 100), Some(q("2/3")));
        assert_eq!(best_rational(0.25, 100), Some(q("1/4")));
        assert_eq!(best_rational(f64::NAN, 100), None);
    }
}
