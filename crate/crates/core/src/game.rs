//! Game graphs, budget distributions and bidding mechanisms.
//!
//! Everything in this module is exact: weights, budgets and probabilities are
//! arbitrary-precision rationals. Solvers convert to `f64` at their boundary.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Parses `"3"`, `"-1/3"`, `"0.25"` or `"1.5e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::InvalidNumber(text.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(num, den));
    }

    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i64 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.as_bytes().first() {
        Some(b'-') => (true, &mantissa[1..]),
        Some(b'+') => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(all_digits.parse::<BigInt>().map_err(|_| bad())?);
    let shift = exponent - frac_part.len() as i64;
    let ten = Rational::from_integer(BigInt::from(10));
    if shift.unsigned_abs() > 4096 {
        return Err(bad());
    }
    for _ in 0..shift.unsigned_abs() {
        if shift > 0 {
            value *= &ten;
        } else {
            value /= &ten;
        }
    }
    Ok(if negative { -value } else { value })
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn rational_from_json(value: &Value) -> Result<Rational> {
    match value {
        Value::Number(n) => parse_rational(&n.to_string()),
        Value::String(s) => parse_rational(s),
        other => Err(Error::InvalidNumber(other.to_string())),
    }
}

/// Budget ratio `own / (own + other)`.
pub fn ratio(own: &Rational, other: &Rational) -> Result<Rational> {
    let total = own + other;
    if total.is_zero() {
        return Err(Error::InvalidArgument(
            "ratio undefined when both budgets are zero".into(),
        ));
    }
    if own.is_negative() || other.is_negative() {
        return Err(Error::InvalidArgument("budgets must be non-negative".into()));
    }
    Ok(own / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Reachability,
    MeanPayoff,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: String,
    pub weight: Rational,
    pub target: bool,
}

/// A validated directed game graph with vertex weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameGraph {
    objective: Objective,
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize)>,
    successors: Vec<Vec<usize>>,
    strongly_connected: bool,
}

#[derive(Serialize, Deserialize)]
struct RawGame {
    objective: Objective,
    vertices: Vec<RawVertex>,
    edges: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct RawVertex {
    id: String,
    weight: Value,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    target: bool,
}

impl GameGraph {
    pub fn new(objective: Objective, vertices: Vec<Vertex>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidGame("graph has no vertices".into()));
        }
        let mut seen = HashSet::new();
        for v in &vertices {
            if !seen.insert(v.id.as_str()) {
                return Err(Error::InvalidGame(format!("duplicate vertex id {:?}", v.id)));
            }
        }
        let mut successors = vec![Vec::new(); n];
        for &(from, to) in &edges {
            if from >= n || to >= n {
                return Err(Error::InvalidGame(format!("edge ({from}, {to}) out of range")));
            }
            if !successors[from].contains(&to) {
                successors[from].push(to);
            }
        }
        for (v, succ) in successors.iter_mut().enumerate() {
            if succ.is_empty() {
                return Err(Error::InvalidGame(format!(
                    "vertex {:?} has no outgoing edge",
                    vertices[v].id
                )));
            }
            succ.sort_unstable();
        }
        let strongly_connected = is_strongly_connected(&successors);
        match objective {
            Objective::MeanPayoff if !strongly_connected => {
                return Err(Error::InvalidGame(
                    "mean-payoff game graph is not strongly connected".into(),
                ));
            }
            Objective::Reachability if !vertices.iter().any(|v| v.target) => {
                return Err(Error::InvalidGame("reachability game has no target vertex".into()));
            }
            _ => {}
        }
        Ok(Self {
            objective,
            vertices,
            edges,
            successors,
            strongly_connected,
        })
    }

    pub fn parse(text: &[u8]) -> Result<Self> {
        let raw: RawGame = serde_json::from_slice(text)?;
        let mut index = HashMap::new();
        let mut vertices = Vec::with_capacity(raw.vertices.len());
        for (i, v) in raw.vertices.into_iter().enumerate() {
            index.insert(v.id.clone(), i);
            vertices.push(Vertex {
                weight: rational_from_json(&v.weight)?,
                id: v.id,
                target: v.target,
            });
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidGame(format!("edge references unknown vertex {id:?}")))
        };
        let edges = raw
            .edges
            .iter()
            .map(|(a, b)| Ok((lookup(a)?, lookup(b)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(raw.objective, vertices, edges)
    }

    pub fn to_json(&self) -> Value {
        let raw = RawGame {
            objective: self.objective,
            vertices: self
                .vertices
                .iter()
                .map(|v| RawVertex {
                    id: v.id.clone(),
                    weight: Value::String(format_rational(&v.weight)),
                    target: v.target,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b)| (self.vertices[a].id.clone(), self.vertices[b].id.clone()))
                .collect(),
        };
        serde_json::to_value(raw).expect("game serializes")
    }

    /// Two vertices with weights 1 and 0 and every possible edge, self-loops included.
    pub fn bowtie() -> Self {
        let vertices = vec![
            Vertex {
                id: "hi".into(),
                weight: Rational::one(),
                target: false,
            },
            Vertex {
                id: "lo".into(),
                weight: Rational::zero(),
                target: false,
            },
        ];
        let edges = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        Self::new(Objective::MeanPayoff, vertices, edges).expect("bowtie is valid")
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.successors[v]
    }

    pub fn id(&self, v: usize) -> &str {
        &self.vertices[v].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn weight(&self, v: usize) -> &Rational {
        &self.vertices[v].weight
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.vertices.iter().map(|v| to_f64(&v.weight)).collect()
    }

    pub fn is_target(&self, v: usize) -> bool {
        self.vertices[v].target
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected
    }

    /// True when every vertex has an edge to every vertex (the bowtie is the
    /// two-vertex instance). On such graphs the player who moves can always
    /// reach any weight, so the random-turn value is affine in the bias.
    pub fn is_complete_with_loops(&self) -> bool {
        let n = self.len();
        self.successors.iter().all(|s| s.len() == n)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn is_strongly_connected(successors: &[Vec<usize>]) -> bool {
    let mut reversed = vec![Vec::new(); successors.len()];
    for (v, succ) in successors.iter().enumerate() {
        for &u in succ {
            reversed[u].push(v);
        }
    }
    reaches_all(successors) && reaches_all(&reversed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub budget: Rational,
    pub prob: Rational,
}

/// Finite-support distribution over initial budgets, sorted by budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetDistribution {
    atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    atoms: Vec<(Value, Value)>,
}

impl BudgetDistribution {
    pub fn new(pairs: Vec<(Rational, Rational)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut atoms: Vec<Atom> = pairs.into_iter().map(|(budget, prob)| Atom { budget, prob }).collect();
        for a in &atoms {
            if a.budget.is_negative() {
                return Err(Error::InvalidDistribution(format!(
                    "negative budget {}",
                    format_rational(&a.budget)
                )));
            }
            if !a.prob.is_positive() || a.prob > Rational::one() {
                return Err(Error::InvalidDistribution(format!(
                    "probability {} outside (0, 1]",
                    format_rational(&a.prob)
                )));
            }
        }
        atoms.sort_by(|a, b| a.budget.cmp(&b.budget));
        if let Some(w) = atoms.windows(2).find(|w| w[0].budget == w[1].budget) {
            return Err(Error::InvalidDistribution(format!(
                "duplicate budget {}",
                format_rational(&w[0].budget)
            )));
        }
        let total: Rational = atoms.iter().map(|a| &a.prob).sum();
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {}, not 1",
                format_rational(&total)
            )));
        }
        Ok(Self { atoms })
    }

    pub fn point(budget: Rational) -> Result<Self> {
        Self::new(vec![(budget, Rational::one())])
    }

    pub fn uniform(budgets: Vec<Rational>) -> Result<Self> {
        let p = Rational::new(BigInt::one(), BigInt::from(budgets.len().max(1)));
        Self::new(budgets.into_iter().map(|b| (b, p.clone())).collect())
    }

    pub fn parse(text: &[u8]) -> Result<Self> {
        let raw: RawDistribution = serde_json::from_slice(text)?;
        let pairs = raw
            .atoms
            .iter()
            .map(|(b, p)| Ok((rational_from_json(b)?, rational_from_json(p)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    pub fn to_json(&self) -> Value {
        let raw = RawDistribution {
            atoms: self
                .atoms
                .iter()
                .map(|a| {
                    (
                        Value::String(format_rational(&a.budget)),
                        Value::String(format_rational(&a.prob)),
                    )
                })
                .collect(),
        };
        serde_json::to_value(raw).expect("distribution serializes")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn budgets_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| to_f64(&a.budget)).collect()
    }

    pub fn probs_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| to_f64(&a.prob)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceRule {
    FirstPrice,
    AllPay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipient {
    Richman,
    Poorman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mechanism {
    pub price: PriceRule,
    pub recipient: Recipient,
}

impl Mechanism {
    pub const FIRST_PRICE_POORMAN: Self = Self::new(PriceRule::FirstPrice, Recipient::Poorman);
    pub const FIRST_PRICE_RICHMAN: Self = Self::new(PriceRule::FirstPrice, Recipient::Richman);
    pub const ALL_PAY_POORMAN: Self = Self::new(PriceRule::AllPay, Recipient::Poorman);
    pub const ALL_PAY_RICHMAN: Self = Self::new(PriceRule::AllPay, Recipient::Richman);

    pub const ALL: [Self; 4] = [
        Self::FIRST_PRICE_POORMAN,
        Self::FIRST_PRICE_RICHMAN,
        Self::ALL_PAY_POORMAN,
        Self::ALL_PAY_RICHMAN,
    ];

    pub const fn new(price: PriceRule, recipient: Recipient) -> Self {
        Self { price, recipient }
    }

    pub fn is_poorman(&self) -> bool {
        self.recipient == Recipient::Poorman
    }

    /// Amounts each side invests in one bidding: `(max, min)`.
    pub fn investments<T: Copy + Default>(&self, bid_max: T, bid_min: T, max_wins: bool) -> (T, T) {
        match (self.price, max_wins) {
            (PriceRule::AllPay, _) => (bid_max, bid_min),
            (PriceRule::FirstPrice, true) => (bid_max, T::default()),
            (PriceRule::FirstPrice, false) => (T::default(), bid_min),
        }
    }

    /// Budgets after one bidding. Callers guarantee each bid is within its budget.
    pub fn settle<T>(&self, max_budget: T, min_budget: T, bid_max: T, bid_min: T, max_wins: bool) -> (T, T)
    where
        T: Copy + Default + Add<Output = T> + Sub<Output = T>,
    {
        let (paid_max, paid_min) = self.investments(bid_max, bid_min, max_wins);
        match self.recipient {
            Recipient::Poorman => (max_budget - paid_max, min_budget - paid_min),
            Recipient::Richman => (max_budget - paid_max + paid_min, min_budget - paid_min + paid_max),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let price = match self.price {
            PriceRule::FirstPrice => "first-price",
            PriceRule::AllPay => "all-pay",
        };
        let recipient = match self.recipient {
            Recipient::Richman => "richman",
            Recipient::Poorman => "poorman",
        };
        write!(f, "{price}-{recipient}")
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (price, recipient) = lower
            .rsplit_once('-')
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mechanism {s:?}")))?;
        let price = match price {
            "first-price" | "fp" | "first" => PriceRule::FirstPrice,
            "all-pay" | "ap" | "allpay" => PriceRule::AllPay,
            _ => return Err(Error::InvalidArgument(format!("unknown price rule in {s:?}"))),
        };
        let recipient = match recipient {
            "richman" => Recipient::Richman,
            "poorman" => Recipient::Poorman,
            _ => return Err(Error::InvalidArgument(format!("unknown recipient rule in {s:?}"))),
        };
        Ok(Self::new(price, recipient))
    }
}
