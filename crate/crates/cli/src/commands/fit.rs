use std::path::Path;

use anyhow::Result;
use catalysis_core::fitting::{
    fit as fit_model, pattern_probabilities, FitData, FitOptions, FitResult, ModelKind, NelderMeadOptions,
};
use catalysis_core::model_selection::{cumulative_collaboration_curve, select_data, CurveOptions};
use serde::Serialize;
use serde_json::json;

use super::model::{check_step, prediction_rows};
use crate::args::{CurveArgs, FitArgs, SearchArgs, SelectArgs};
use crate::error::usage;
use crate::model_file::ModelSpec;
use crate::output::Run;

fn fit_options(search: &SearchArgs, grid: Option<Vec<Vec<f64>>>, seed: u64) -> Result<FitOptions> {
    check_step(search.step)?;
    if search.max_iterations == 0 {
        return Err(usage("--max-iterations must be positive"));
    }
    Ok(FitOptions {
        grid,
        random_starts: search.random_starts,
        refine: search.refine,
        seed,
        step: search.step,
        nelder_mead: NelderMeadOptions { max_iterations: search.max_iterations, ..Default::default() },
    })
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    result: &'a FitResult,
    aic: f64,
}

pub fn fit(out: &Path, args: &FitArgs) -> Result<()> {
    let mut run = Run::new(out, "fit")?;
    let c = run.conference(&args.conference)?;
    let grid = match &args.grid {
        Some(path) => Some(run.json::<Vec<Vec<f64>>>(path)?),
        None => None,
    };
    let seed = run.seed(args.search.seed);
    let opts = fit_options(&args.search, grid, seed)?;
    run.config(&json!({
        "model": args.model,
        "grid": opts.grid,
        "random_starts": opts.random_starts,
        "refine": opts.refine,
        "step": opts.step,
        "max_iterations": opts.nelder_mead.max_iterations,
    }))?;

    let data = FitData::from_conference(&c)?;
    let result = fit_model(args.model, &data, &opts)?;
    run.write_json("fit.json", &FitReport { result: &result, aic: result.aic() })?;
    if args.emit_predictions {
        let by_pattern = pattern_probabilities(result.kind, &result.params, &data, opts.step)?;
        run.write_csv("predictions.csv", prediction_rows(&data, &by_pattern))?;
    }
    run.finish()
}

#[derive(Serialize)]
struct SelectionCsvRow {
    model: ModelKind,
    k_params: usize,
    nll: Option<f64>,
    aic: Option<f64>,
    delta_aic: Option<f64>,
    relative_likelihood: Option<f64>,
    converged: bool,
    error: Option<String>,
}

pub fn select(out: &Path, args: &SelectArgs) -> Result<()> {
    let mut run = Run::new(out, "select")?;
    let c = run.conference(&args.conference)?;
    let seed = run.seed(args.search.seed);
    let opts = fit_options(&args.search, None, seed)?;
    let mut kinds = if args.models.is_empty() { ModelKind::ALL.to_vec() } else { args.models.clone() };
    kinds.sort();
    kinds.dedup();
    run.config(&json!({
        "models": kinds,
        "random_starts": opts.random_starts,
        "refine": opts.refine,
        "step": opts.step,
        "max_iterations": opts.nelder_mead.max_iterations,
    }))?;

    let data = FitData::from_conference(&c)?;
    let rows = select_data(&data, &kinds, &opts);
    run.write_csv(
        "selection.csv",
        rows.iter().map(|r| SelectionCsvRow {
            model: r.kind,
            k_params: r.k_params,
            nll: r.nll,
            aic: r.aic,
            delta_aic: r.delta_aic,
            relative_likelihood: r.relative_likelihood,
            converged: r.converged,
            error: r.error.clone(),
        }),
    )?;
    run.write_json(
        "selection.json",
        &json!({
            "n_pairs": data.n_pairs(),
            "n_collaborating": data.n_positive,
            "rows": rows,
        }),
    )?;
    run.finish()
}

#[derive(Serialize)]
struct CurveCsvRow {
    upper: f64,
    n_pairs: usize,
    observed: usize,
    predicted_mean: f64,
    band_low: f64,
    band_high: f64,
    residual: f64,
    covered: bool,
}

pub fn curve(out: &Path, args: &CurveArgs) -> Result<()> {
    let mut run = Run::new(out, "curve")?;
    let c = run.conference(&args.conference)?;
    let spec = ModelSpec::load(&mut run, &args.model)?;
    if args.bins == 0 || args.sims == 0 {
        return Err(usage("--bins and --sims must be positive"));
    }
    let seed = run.seed(args.seed);
    let opts = CurveOptions { n_bins: args.bins, n_sims: args.sims, seed, lambda: args.lambda };
    run.config(&json!({ "model": spec, "bins": args.bins, "sims": args.sims, "lambda": args.lambda }))?;

    let report = cumulative_collaboration_curve(&c, spec.model, &spec.params, &opts)?;
    run.write_csv(
        "curve.csv",
        report.bins.iter().map(|b| CurveCsvRow {
            upper: b.upper,
            n_pairs: b.n_pairs,
            observed: b.observed,
            predicted_mean: b.predicted_mean,
            band_low: b.band_low,
            band_high: b.band_high,
            residual: b.residual,
            covered: b.covered(),
        }),
    )?;
    run.write_json(
        "curve.json",
        &json!({
            "model": spec,
            "lambda": report.lambda,
            "n_sims": report.n_sims,
            "seed": report.seed,
            "n_bins": report.bins.len(),
            "coverage": report.coverage(),
        }),
    )?;
    run.finish()
}
