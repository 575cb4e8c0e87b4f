use std::path::Path;

use anyhow::{bail, Context, Result};
use bidgame::{parse_rational, BudgetDistribution, GameGraph};

/// A game file, or `bowtie` for the built-in two-vertex game.
pub fn load_game(arg: &str) -> Result<GameGraph> {
    if arg == "bowtie" && !Path::new(arg).exists() {
        return Ok(GameGraph::bowtie());
    }
    let bytes = std::fs::read(arg).with_context(|| format!("reading game file {arg}"))?;
    Ok(GameGraph::parse(&bytes)?)
}

/// `point:B`, `uniform:B1,B2,...`, `atoms:B1@P1,B2@P2,...`, or a JSON file.
pub fn load_distribution(arg: &str) -> Result<BudgetDistribution> {
    if let Some(rest) = arg.strip_prefix("point:") {
        return Ok(BudgetDistribution::point(parse_rational(rest)?)?);
    }
    if let Some(rest) = arg.strip_prefix("uniform:") {
        let budgets = rest
            .split(',')
            .map(|b| parse_rational(b.trim()))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(BudgetDistribution::uniform(budgets)?);
    }
    if let Some(rest) = arg.strip_prefix("atoms:") {
        let mut pairs = Vec::new();
        for atom in rest.split(',') {
            let Some((b, p)) = atom.split_once('@') else {
                bail!("atom {atom:?} is not of the form budget@probability");
            };
            pairs.push((parse_rational(b.trim())?, parse_rational(p.trim())?));
        }
        return Ok(BudgetDistribution::new(pairs)?);
    }
    let bytes = std::fs::read(arg).with_context(|| format!("reading distribution file {arg}"))?;
    Ok(BudgetDistribution::parse(&bytes)?)
}

pub fn vertex(game: &GameGraph, id: Option<&str>) -> Result<usize> {
    match id {
        None => Ok(0),
        Some(id) => game.index_of(id).with_context(|| format!("no vertex with id {id:?}")),
    }
}

/// Comma-separated reals.
pub fn reals(arg: &str) -> Result<Vec<f64>> {
    arg.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("invalid number {x:?}")))
        .collect()
}
