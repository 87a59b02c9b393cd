use std::path::Path;

use anyhow::Result;
use catalysis_core::scheduler::{
    actual_solution, anneal as anneal_one, anneal_chains, counterfactual_analysis, energy, AnnealSchedule,
    AssignmentConstraints, AssignmentProblem, ScheduleSolution, SchedulerError,
};
use serde::Serialize;
use serde_json::json;

use crate::args::{AnnealArgs, CounterfactualArgs};
use crate::error::usage;
use crate::output::Run;

#[derive(Serialize)]
struct EnergyRow {
    rank: usize,
    energy: f64,
}

pub fn anneal(out: &Path, args: &AnnealArgs) -> Result<()> {
    let mut run = Run::new(out, "anneal")?;
    let c = run.conference(&args.conference)?;
    let constraints: AssignmentConstraints = match &args.constraints {
        Some(path) => run.json(path)?,
        None => AssignmentConstraints::default(),
    };
    let schedule: AnnealSchedule = match &args.schedule {
        Some(path) => run.json(path)?,
        None => AnnealSchedule::default(),
    };
    if args.solutions == 0 {
        return Err(usage("--solutions must be positive"));
    }
    let seed = run.seed(args.seed);
    let problem = match args.selection.kind {
        Some(kind) => AssignmentProblem::for_kind(c.clone(), kind.into(), constraints.clone())?,
        None => {
            let indices = args
                .selection
                .sessions
                .iter()
                .map(|id| {
                    c.sessions
                        .iter()
                        .position(|s| &s.id == id)
                        .ok_or_else(|| SchedulerError::UnknownSession(id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            AssignmentProblem::new(c.clone(), &indices, constraints.clone())?
        }
    };
    let session_ids = problem.session_ids();
    run.config(&json!({
        "sessions": session_ids,
        "constraints": constraints,
        "schedule": schedule,
        "solutions": args.solutions,
        "chains": args.chains,
    }))?;

    let solutions = if args.chains {
        anneal_chains(&problem, &schedule, args.solutions, seed)
    } else {
        anneal_one(&problem, &schedule, args.solutions, seed)
    };
    let actual = energy(&actual_solution(&c, &session_ids)?, &problem);
    run.write_json("solutions.json", &solutions)?;
    run.write_csv("energies.csv", solutions.iter().map(|s| EnergyRow { rank: s.rank, energy: s.energy }))?;
    run.write_json(
        "anneal.json",
        &json!({
            "sessions": session_ids,
            "n_solutions": solutions.len(),
            "best_energy": solutions.first().map(|s| s.energy),
            "actual_energy": actual,
        }),
    )?;
    run.finish()
}

#[derive(Serialize)]
struct CombinationRow {
    discussion: usize,
    small_group: usize,
    i_bar_cf: f64,
    actual_greater: bool,
    shares_small_groups: bool,
}

pub fn counterfactual(out: &Path, args: &CounterfactualArgs) -> Result<()> {
    let mut run = Run::new(out, "counterfactual")?;
    let c = run.conference(&args.conference)?;
    let discussion: Vec<ScheduleSolution> = run.json(&args.discussion)?;
    let small_group: Vec<ScheduleSolution> = run.json(&args.small_group)?;
    run.config(&json!({ "n_discussion": discussion.len(), "n_small_group": small_group.len() }))?;

    let report = counterfactual_analysis(&c, &discussion, &small_group)?;
    run.write_csv(
        "counterfactual.csv",
        report.combinations.iter().map(|r| CombinationRow {
            discussion: r.discussion,
            small_group: r.small_group,
            i_bar_cf: r.i_bar,
            actual_greater: report.i_bar_actual > r.i_bar,
            shares_small_groups: r.shares_small_groups,
        }),
    )?;
    run.write_json(
        "counterfactual.json",
        &json!({
            "n_collaborating_pairs": report.n_collaborating_pairs,
            "i_bar_actual": report.i_bar_actual,
            "n_combinations": report.combinations.len(),
            "fraction_actual_greater": report.fraction_actual_greater,
            "wilcoxon": report.wilcoxon,
        }),
    )?;
    run.finish()
}
