mod input;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bidgame::oracle::{discrete_minimax, DiscretePolicy, DiscreteState, TablePolicy};
use bidgame::partial::{full_info_mp, optimize_partial_value_with, OptimizerConfig};
use bidgame::rt::{positional_choices, solve_rt_mp, solve_rt_reach};
use bidgame::sim::{
    mp_payoff_estimate, naive_fully_informed_min, run_play, FullInfo, Protocol, RandomBids, RatioAnchored, Side,
    Strategy, WalletStrategy, DEFAULT_WINDOW,
};
use bidgame::threshold::expected_signed_payoff;
use bidgame::{
    format_rational, parse_rational, potential, potential_ledger_check, qualitative_partial_value,
    threshold_reach_richman, value_gap_report, Mechanism, Objective, Threshold,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "bidgame", version, about = "Bidding games with partially observed budgets")]
struct Cli {
    /// Convergence tolerance of the random-turn solver
    #[arg(long, global = true, default_value_t = bidgame::DEFAULT_TOL)]
    tol: f64,

    /// Sample points of the random-turn value curve on non-complete graphs
    #[arg(long, global = true, default_value_t = 33)]
    grid: usize,

    /// Seed for randomized strategies
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Print tables as CSV instead of JSON
    #[arg(long, global = true)]
    csv: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Value of the random-turn game with Max-bias p
    SolveRt {
        #[arg(long)]
        game: String,
        #[arg(long)]
        p: f64,
    },
    /// First-price Richman thresholds of a reachability game
    Threshold {
        #[arg(long)]
        game: String,
    },
    /// Max's winning probability when neither budget is known exactly
    QualValue {
        #[arg(long)]
        th: String,
        #[arg(long)]
        beta: String,
        #[arg(long)]
        gamma: String,
    },
    /// Max's optimal value over admissible wallet cut points
    PartialValue {
        #[arg(long)]
        game: String,
        #[arg(long = "B")]
        budget: String,
        #[arg(long)]
        gamma: String,
        #[arg(long, default_value = "first-price-poorman")]
        mech: Mechanism,
        /// Grid points per cut point
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Pot(B, gamma), exactly
    Potential {
        #[arg(long = "B")]
        budget: String,
        #[arg(long)]
        gamma: String,
    },
    /// Both pure values of the bowtie and their gap
    Gap {
        #[arg(long = "B")]
        budget: String,
        #[arg(long)]
        gamma: String,
    },
    /// Exact replay of the hidden-budget bookkeeping
    LedgerCheck {
        #[arg(long = "B")]
        budget: String,
        #[arg(long)]
        gamma: String,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
    },
    /// Plays one game and reports the payoff, or the transcript with --csv
    Simulate(SimulateArgs),
    /// Brute-force minimax at integer budget granularity
    Oracle {
        #[arg(long)]
        game: String,
        #[arg(long, default_value = "first-price-poorman")]
        mech: Mechanism,
        /// Max's budget in units
        #[arg(long)]
        units: u32,
        /// Min's budget in units (defaults to --units)
        #[arg(long)]
        units_min: Option<u32>,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        start: Option<String>,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    game: String,
    #[arg(long, default_value = "first-price-poorman")]
    mech: Mechanism,
    #[arg(long = "B", default_value_t = 1.0)]
    budget_max: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    budget_min: f64,
    #[arg(long, default_value_t = 10_000)]
    horizon: usize,
    #[arg(long)]
    start: Option<String>,
    #[arg(long, value_enum, default_value_t = Policy::Ratio)]
    max_policy: Policy,
    #[arg(long, value_enum, default_value_t = Policy::Ratio)]
    min_policy: Policy,
    /// Fraction of the budget share bid each round by ratio policies
    #[arg(long, default_value_t = 0.002)]
    kappa: f64,
    /// Wallet cut points for Max, e.g. 0.5,1 (requires --gamma)
    #[arg(long)]
    xs: Option<String>,
    /// Max's belief about Min's budget, used by the wallet strategy
    #[arg(long)]
    gamma: Option<String>,
    /// Round bids down to multiples of this step
    #[arg(long)]
    granularity: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Policy {
    Ratio,
    Random,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(n) = std::env::var("BIDGAME_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: BIDGAME_THREADS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    match run(&cli) {
        Ok(out) => {
            let _ = writeln!(std::io::stdout(), "{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let solver_failure = e.downcast_ref::<bidgame::Error>().is_some_and(|e| !e.is_validation());
            ExitCode::from(if solver_failure { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::SolveRt { game, p } => solve_rt(cli, game, *p),
        Command::Threshold { game } => threshold(cli, game),
        Command::QualValue { th, beta, gamma } => qual_value(th, beta, gamma),
        Command::PartialValue {
            game,
            budget,
            gamma,
            mech,
            points,
        } => partial_value(cli, game, budget, gamma, *mech, *points),
        Command::Potential { budget, gamma } => {
            let pot = potential(&parse_rational(budget)?, &input::load_distribution(gamma)?)?;
            Ok(json!({"potential": format_rational(&pot), "value": bidgame::game::to_f64(&pot)}).to_string())
        }
        Command::Gap { budget, gamma } => {
            let report = value_gap_report(&parse_rational(budget)?, &input::load_distribution(gamma)?, cli.tol)?;
            Ok(serde_json::to_string(&report)?)
        }
        Command::LedgerCheck {
            budget,
            gamma,
            eps,
            rounds,
        } => ledger(cli, budget, gamma, eps, *rounds),
        Command::Simulate(args) => simulate(cli, args),
        Command::Oracle {
            game,
            mech,
            units,
            units_min,
            horizon,
            start,
        } => oracle(
            cli,
            game,
            *mech,
            *units,
            units_min.unwrap_or(*units),
            *horizon,
            start.as_deref(),
        ),
    }
}

fn solve_rt(cli: &Cli, game: &str, p: f64) -> Result<String> {
    let game = input::load_game(game)?;
    match game.objective() {
        Objective::MeanPayoff => {
            let value = solve_rt_mp(&game, p, cli.tol)?;
            Ok(json!({"p": p, "value": value}).to_string())
        }
        Objective::Reachability => {
            let values = solve_rt_reach(&game, p)?;
            if cli.csv {
                return Ok(csv_by_vertex(&game, "reach", &values));
            }
            Ok(json!({"p": p, "values": by_vertex(&game, &values)}).to_string())
        }
    }
}

fn by_vertex(game: &bidgame::GameGraph, values: &[f64]) -> Value {
    let map: serde_json::Map<String, Value> = (0..game.len())
        .map(|v| (game.id(v).to_string(), json!(values[v])))
        .collect();
    Value::Object(map)
}

fn csv_by_vertex(game: &bidgame::GameGraph, column: &str, values: &[f64]) -> String {
    let mut out = format!("vertex,{column}");
    for (v, x) in values.iter().enumerate() {
        out.push_str(&format!("\n{},{x}", game.id(v)));
    }
    out
}

fn threshold(cli: &Cli, game: &str) -> Result<String> {
    let game = input::load_game(game)?;
    let th = threshold_reach_richman(&game)?;
    if cli.csv {
        return Ok(csv_by_vertex(&game, "threshold", &th.values));
    }
    Ok(json!({"thresholds": by_vertex(&game, &th.values)}).to_string())
}

fn qual_value(th: &str, beta: &str, gamma: &str) -> Result<String> {
    let th = Threshold::Exact(parse_rational(th)?);
    let value = qualitative_partial_value(&th, &input::load_distribution(beta)?, &input::load_distribution(gamma)?);
    Ok(json!({
        "value": format_rational(&value),
        "probability": bidgame::game::to_f64(&value),
        "expected_payoff": bidgame::game::to_f64(&expected_signed_payoff(&value)),
    })
    .to_string())
}

fn partial_value(cli: &Cli, game: &str, budget: &str, gamma: &str, mech: Mechanism, points: usize) -> Result<String> {
    let game = input::load_game(game)?;
    let budget = bidgame::game::to_f64(&parse_rational(budget)?);
    let gamma = input::load_distribution(gamma)?;
    let config = OptimizerConfig {
        points,
        ..OptimizerConfig::default()
    };
    let value = optimize_partial_value_with(&game, budget, &gamma, mech, cli.tol, config, cli.grid)?;
    Ok(serde_json::to_string(&value)?)
}

fn ledger(cli: &Cli, budget: &str, gamma: &str, eps: &str, rounds: usize) -> Result<String> {
    let report = potential_ledger_check(
        &parse_rational(budget)?,
        &input::load_distribution(gamma)?,
        &parse_rational(eps)?,
        rounds,
    )?;
    if cli.csv {
        let mut out = String::from(
            "round,max_budget,stake_max,stake_min,potential,p2,p3,p4,stake_ratio,revealing_step,convexity",
        );
        for r in &report.rounds {
            out.push_str(&format!(
                "\n{},{},{},{},{},{},{},{},{},{},{}",
                r.round,
                bidgame::game::to_f64(&r.max_budget),
                bidgame::game::to_f64(&r.stake_max),
                bidgame::game::to_f64(&r.stake_min),
                bidgame::game::to_f64(&r.potential),
                r.max_spends_slowly,
                r.min_spends_fast,
                r.potential_kept,
                r.stake_ratio_is_potential,
                r.revealing_step_bound,
                r.convexity_chain,
            ));
        }
        return Ok(out);
    }
    Ok(report.to_json().to_string())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<String> {
    let game = input::load_game(&args.game)?;
    let start = input::vertex(&game, args.start.as_deref())?;
    let (max_choices, min_choices) = positional_choices(&game, 0.5, cli.tol)?;
    let (b, c) = (args.budget_max, args.budget_min);
    if b.is_nan() || c.is_nan() || b + c <= 0.0 {
        bail!("at least one budget must be positive");
    }
    let share = b / (b + c);

    let mut max: Box<dyn Strategy> = match (args.max_policy, &args.xs) {
        (Policy::Random, _) => Box::new(RandomBids::new(cli.seed)),
        (Policy::Ratio, Some(xs)) => {
            let gamma = input::load_distribution(args.gamma.as_deref().context("--xs needs --gamma")?)?;
            Box::new(WalletStrategy::ratio_anchored(
                input::reals(xs)?,
                &gamma,
                args.mech,
                args.kappa,
                &max_choices,
            )?)
        }
        (Policy::Ratio, None) => Box::new(FullInfo {
            side: Side::Max,
            opponent_initial: c,
            policy: RatioAnchored::new(args.kappa, share, max_choices),
        }),
    };
    let mut min: Box<dyn Strategy> = match args.min_policy {
        Policy::Random => Box::new(RandomBids::new(cli.seed.wrapping_add(1))),
        Policy::Ratio => Box::new(naive_fully_informed_min(
            b,
            RatioAnchored::new(args.kappa, 1.0 - share, min_choices),
        )),
    };
    let protocol = Protocol {
        mech: args.mech,
        start,
        horizon: args.horizon,
        granularity: args.granularity,
    };
    let record = run_play(&game, max.as_mut(), min.as_mut(), &protocol, b, c)?;
    if cli.csv {
        return Ok(record.to_csv(&game).trim_end().to_string());
    }
    let estimate = mp_payoff_estimate(&record, args.window)?;
    let (inv_max, inv_min) = record.investments();
    let last = record.entries.last().expect("horizon is positive");
    let theory = if args.xs.is_none() && share > 0.0 && share < 1.0 {
        full_info_mp(&game, args.mech, share, cli.tol).ok()
    } else {
        None
    };
    Ok(json!({
        "trailing": estimate.trailing,
        "full": estimate.full,
        "inv_max": inv_max,
        "inv_min": inv_min,
        "budget_max": last.budget_max,
        "budget_min": last.budget_min,
        "max_wins": record.entries.iter().filter(|e| e.winner == Side::Max).count(),
        "full_information_value": theory,
    })
    .to_string())
}

fn oracle(
    cli: &Cli,
    game: &str,
    mech: Mechanism,
    units_max: u32,
    units_min: u32,
    horizon: usize,
    start: Option<&str>,
) -> Result<String> {
    let game = input::load_game(game)?;
    let start = input::vertex(&game, start)?;
    let tables = discrete_minimax(&game, mech, units_max, units_min, horizon)?;
    if cli.csv {
        let mut out = String::from("vertex,units_max,units_min,lower,upper");
        for v in 0..game.len() {
            for a in 0..=units_max + units_min {
                for b in 0..=units_max + units_min {
                    let s = DiscreteState {
                        vertex: v,
                        units_max: a,
                        units_min: b,
                        rounds_left: horizon,
                    };
                    if let Some(x) = tables.value_at(&s) {
                        out.push_str(&format!("\n{},{a},{b},{},{}", game.id(v), x.lower, x.upper));
                    }
                }
            }
        }
        return Ok(out);
    }
    let value = tables.value(start).context("start state outside the table")?;
    let s = tables.initial_state(start);
    let action = |p: &TablePolicy| {
        p.action(&s)
            .map(|(bid, v)| json!({"bid": bid, "successor": game.id(v)}))
    };
    Ok(json!({
        "lower": value.lower,
        "upper": value.upper,
        "value": value.value,
        "max_action": action(&tables.max_policy),
        "min_action": action(&tables.min_policy),
    })
    .to_string())
}
