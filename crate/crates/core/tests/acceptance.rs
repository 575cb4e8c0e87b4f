//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use bidgame::oracle::{best_response_family, discrete_minimax, FamilyMember};
use bidgame::partial::{optimize_partial_value, potential, potential_ledger_check, val_of_sequence, value_gap_report};
use bidgame::rt::{positional_choices, rt_oracle, solve_rt_mp};
use bidgame::sim::{
    expected_payoff, naive_fully_informed_min, run_play, Protocol, RandomBids, RatioAnchored, Strategy, WalletStrategy,
};
use bidgame::{
    full_info_mp, qualitative_partial_value, threshold_reach_richman, BudgetDistribution, GameGraph, Mechanism, Result,
    Threshold,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn criterion_1() -> Outcome {
    let g = GameGraph::bowtie();
    let mut worst = 0.0f64;
    for k in 0..=10 {
        let p = k as f64 / 10.0;
        let v = solve_rt_mp(&g, p, 1e-9).map_err(fail)?;
        worst = worst.max((v - p).abs());
    }
    check(worst <= 1e-6, format!("max |MP - p| = {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let g = GameGraph::bowtie();
    let cases = [
        (["1", "2"], 1.0 / 3.0),
        (["1", "5"], 0.25),
        (["1", "3"], (5.0 - 2.0 * 2f64.sqrt()) / 8.0),
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (support, expected) in cases {
        let v = optimize_partial_value(&g, 1.0, &uniform(&support), Mechanism::FIRST_PRICE_POORMAN, 1e-9)
            .map_err(fail)?
            .value;
        ok &= (v - expected).abs() <= 1e-4;
        detail.push(format!(
            "{{{},{}}}: {v:.6} (want {expected:.6})",
            support[0], support[1]
        ));
    }
    check(ok, detail.join(", "))
}

fn criterion_3() -> Outcome {
    let gamma = uniform(&["1", "2"]);
    let pot = potential(&q("1"), &gamma).map_err(fail)?;
    let gap = value_gap_report(&q("1"), &gamma, 1e-9).map_err(fail)?.gap;
    check(
        pot == q("5/12") && (gap - 1.0 / 12.0).abs() <= 1e-4,
        format!("Pot = {pot}, gap = {gap:.6}"),
    )
}

fn criterion_4() -> Outcome {
    let th = threshold_reach_richman(&path_game())
        .map_err(fail)?
        .exact("v0", 1000)
        .ok_or("threshold at v0 is not a small fraction")?;
    if th != Threshold::Exact(q("2/3")) {
        return Err(format!("Th(v0) = {th}, want 2/3"));
    }
    let beta = BudgetDistribution::point(q("1")).map_err(fail)?;
    let value = qualitative_partial_value(&th, &beta, &uniform(&["1/5", "1"]));
    // B/(B+C) = 2/3 exactly when C = 1/2: the tie goes to Min.
    let tie = qualitative_partial_value(&th, &beta, &uniform(&["1/2"]));
    check(
        value == q("1/2") && tie == q("0"),
        format!("Th(v0) = {th}, value = {value}, tie = {tie}"),
    )
}

fn criterion_5() -> Outcome {
    let g = GameGraph::bowtie();
    let mut worst = 0.0f64;
    for r in [0.55, 0.7, 0.9] {
        let fp = full_info_mp(&g, Mechanism::FIRST_PRICE_POORMAN, r, 1e-9).map_err(fail)?;
        let ap = full_info_mp(&g, Mechanism::ALL_PAY_POORMAN, r, 1e-9).map_err(fail)?;
        worst = worst.max((fp - r).abs()).max((ap - (2.0 * r - 1.0) / r).abs());
    }
    check(worst <= 1e-6, format!("max deviation {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let report = potential_ledger_check(&q("1"), &uniform(&["1", "2"]), &q("1/10"), 10_000).map_err(fail)?;
    let bound = report.round_bound.ok_or("round bound is infinite")?;
    let invariants = report.rounds.iter().all(|r| {
        r.max_spends_slowly && r.min_spends_fast && r.potential_kept && r.revealing_step_bound && r.convexity_chain
    });
    let ratio = report.rounds.iter().all(|r| r.stake_ratio_is_potential);
    let reached = report.rounds.len() + 1 >= bound;
    check(
        invariants && ratio && reached && report.verdict,
        format!(
            "bound = {bound}, {} rounds checked, verdict = {}",
            report.rounds.len(),
            report.verdict
        ),
    )
}

fn criterion_7() -> Outcome {
    let g = GameGraph::bowtie();
    let mech = Mechanism::FIRST_PRICE_POORMAN;
    let gamma = uniform(&["1", "2"]);
    let beta = BudgetDistribution::point(q("1")).map_err(fail)?;
    let (max_choices, min_choices) = positional_choices(&g, 0.5, 1e-9).map_err(fail)?;
    let kappa = 0.002;

    let fam_max = |_b: f64| -> Result<Box<dyn Strategy>> {
        Ok(Box::new(WalletStrategy::ratio_anchored(
            vec![0.5, 1.0],
            &gamma,
            mech,
            kappa,
            &max_choices,
        )?))
    };
    let fam_min = |c: f64| -> Result<Box<dyn Strategy>> {
        let share = c / (1.0 + c);
        Ok(Box::new(naive_fully_informed_min(
            1.0,
            RatioAnchored::new(kappa, share, min_choices.clone()),
        )))
    };
    let protocol = Protocol {
        mech,
        start: 0,
        horizon: 10_000,
        granularity: None,
    };
    let sim = expected_payoff(&g, &fam_max, &fam_min, &beta, &gamma, &protocol, 0.5).map_err(fail)?;

    // Naive Min for C = 1 and C = 2 at 20 units per budget unit.
    let horizon = 40;
    let t1 = discrete_minimax(&g, mech, 20, 20, horizon).map_err(fail)?;
    let t2 = discrete_minimax(&g, mech, 20, 40, horizon).map_err(fail)?;
    let family = [
        FamilyMember {
            weight: 0.5,
            units_min: 20,
            policy: &t1.min_policy,
        },
        FamilyMember {
            weight: 0.5,
            units_min: 40,
            policy: &t2.min_policy,
        },
    ];
    let br = best_response_family(&g, mech, 20, &family, 0, horizon).map_err(fail)?;

    let lower = 1.0 / 3.0 - 0.05;
    let upper = 5.0 / 12.0 + 0.1;
    check(
        sim.trailing >= lower && br <= upper,
        format!(
            "wallet payoff {:.4} (>= {lower:.4}), best response {br:.4} (<= {upper:.4})",
            sim.trailing
        ),
    )
}

fn conservation_replays(rng: &mut ChaCha8Rng) -> std::result::Result<usize, String> {
    let mut plays = 0;
    for mech in Mechanism::ALL {
        for k in 0..1000u64 {
            let g = if k % 2 == 0 {
                GameGraph::bowtie()
            } else {
                random_strongly_connected(rng, 4)
            };
            let b = rng.gen_range(0.0..4.0);
            let c = rng.gen_range(0.0..4.0);
            let protocol = Protocol {
                mech,
                start: rng.gen_range(0..g.len()),
                horizon: 50,
                granularity: None,
            };
            let mut f = RandomBids::new(rng.gen());
            let mut h = RandomBids::new(rng.gen());
            let rec = run_play(&g, &mut f, &mut h, &protocol, b, c).map_err(fail)?;
            rec.verify(&g).map_err(|e| format!("{mech}: {e}"))?;
            plays += 1;
        }
    }
    Ok(plays)
}

fn monotonicity(rng: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    for _ in 0..3 {
        let g = random_strongly_connected(rng, 4);
        let values: Vec<f64> = (0..=10)
            .map(|k| solve_rt_mp(&g, k as f64 / 10.0, 1e-9))
            .collect::<Result<_>>()
            .map_err(fail)?;
        if let Some(w) = values.windows(2).find(|w| w[1] < w[0] - 2e-6) {
            return Err(format!("MP drops from {} to {}", w[0], w[1]));
        }
    }
    Ok(())
}

/// A non-decreasing sequence ending at `budget`.
fn random_sequence(rng: &mut ChaCha8Rng, n: usize, budget: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.0..=budget)).collect();
    xs.sort_by(f64::total_cmp);
    xs.push(budget);
    xs
}

fn dominance(rng: &mut ChaCha8Rng) -> std::result::Result<usize, String> {
    let bowtie = GameGraph::bowtie();
    // Not complete, so the sampled curve and direct solves are exercised.
    let other = cycle_plus(&[2, -1, 0], &[(0, 0), (1, 1)]);
    let instances = [
        (&bowtie, uniform(&["1", "2"]), Mechanism::FIRST_PRICE_POORMAN),
        (&bowtie, uniform(&["1", "3"]), Mechanism::FIRST_PRICE_POORMAN),
        (&bowtie, uniform(&["1", "5"]), Mechanism::ALL_PAY_POORMAN),
        (&other, uniform(&["1/2", "1", "2"]), Mechanism::FIRST_PRICE_POORMAN),
    ];
    let mut compared = 0;
    for (g, gamma, mech) in &instances {
        let best = optimize_partial_value(g, 1.0, gamma, *mech, 1e-9).map_err(fail)?;
        let curve = rt_oracle(g, 65, 1e-9).map_err(fail)?;
        let slack = best.tolerance + curve.tolerance() + 1e-6;
        let mut admissible = 0;
        let mut attempts = 0;
        while admissible < 100 {
            attempts += 1;
            if attempts > 100_000 {
                return Err(format!("only {admissible} admissible sequences found"));
            }
            let xs = random_sequence(rng, gamma.len(), 1.0);
            let r = val_of_sequence(curve.as_ref(), &xs, 1.0, gamma, *mech).map_err(fail)?;
            if !r.admissible {
                continue;
            }
            admissible += 1;
            if r.val > best.value + slack {
                return Err(format!("{xs:?} reaches {} above optimum {}", r.val, best.value));
            }
        }
        compared += admissible;
    }
    Ok(compared)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let plays = conservation_replays(&mut rng)?;
    monotonicity(&mut rng)?;
    let sequences = dominance(&mut rng)?;
    Ok(format!(
        "{plays} plays replayed, 3 games monotone, {sequences} admissible sequences dominated"
    ))
}

fn main() -> ExitCode {
    let criteria: [(fn() -> Outcome, Duration); 8] = [
        (criterion_1, Duration::from_secs(1)),
        (criterion_2, Duration::from_secs(10)),
        (criterion_3, Duration::from_secs(1)),
        (criterion_4, Duration::from_secs(1)),
        (criterion_5, Duration::from_secs(1)),
        (criterion_6, Duration::from_secs(1)),
        (criterion_7, Duration::from_secs(120)),
        (criterion_8, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (i, (run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {}: {} {detail} ({:.3}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
