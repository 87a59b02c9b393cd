use std::path::Path;

use anyhow::{Context, Result};
use catalysis_core::conference::{Conference, PairId};
use catalysis_core::dynamics::{Dynamics, ModelParams};
use catalysis_core::fitting::{model_params, pattern_probabilities, FitData};
use catalysis_core::interaction::{profile_from_index, ScheduleIndex};
use catalysis_core::potential::{Landscape, Regime, StationaryKind};
use serde::Serialize;
use serde_json::json;

use crate::args::{PotentialArgs, SimulateArgs};
use crate::error::usage;
use crate::model_file::ModelSpec;
use crate::output::Run;

pub fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--step must be positive, got {step}")))
    }
}

fn parse_pair(c: &Conference, text: &str) -> Result<PairId> {
    let Some((a, b)) = text.split_once(',') else {
        return Err(usage(format!("--pair expects ID,ID, got '{text}'")));
    };
    let (a, b) = (a.trim(), b.trim());
    for id in [a, b] {
        if c.participant(id).is_none() {
            return Err(usage(format!("--pair {text}: unknown participant {id}")));
        }
    }
    if a == b {
        return Err(usage(format!("--pair {text}: a pair needs two different participants")));
    }
    Ok(PairId::new(a, b))
}

/// Per-pair predictions in the same row layout as `fit --emit-predictions`.
#[derive(Serialize)]
pub struct PredictionRow {
    pub pair_id: String,
    pub k0: u8,
    pub i_tot: f64,
    pub collaborated: bool,
    pub p: f64,
}

pub fn prediction_rows(data: &FitData, by_pattern: &[f64]) -> Vec<PredictionRow> {
    data.pairs
        .iter()
        .map(|r| PredictionRow {
            pair_id: r.pair.to_string(),
            k0: r.k0,
            i_tot: data.patterns[r.pattern].i_tot,
            collaborated: r.collaborated,
            p: by_pattern[r.pattern],
        })
        .collect()
}

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    pair_id: &'a str,
    t: f64,
    intensity: f64,
    p: f64,
}

pub fn simulate(out: &Path, args: &SimulateArgs) -> Result<()> {
    let mut run = Run::new(out, "simulate")?;
    let c = run.conference(&args.conference)?;
    let spec = ModelSpec::load(&mut run, &args.model)?;
    check_step(args.step)?;
    let pairs = args.pairs.iter().map(|p| parse_pair(&c, p)).collect::<Result<Vec<_>>>()?;
    if !pairs.is_empty() && !spec.model.is_dynamic() {
        return Err(usage(format!("trajectories need an ODE model, {} is static", spec.model)));
    }
    run.config(&json!({ "model": spec, "step": args.step, "pairs": args.pairs }))?;

    let data = FitData::from_conference(&c)?;
    let by_pattern = pattern_probabilities(spec.model, &spec.params, &data, args.step)?;
    run.write_csv("p_collab.csv", prediction_rows(&data, &by_pattern))?;

    if !pairs.is_empty() {
        let params = model_params(spec.model, &spec.params)?;
        let dynamics = Dynamics::new(&params)?;
        let index = ScheduleIndex::new(&c);
        let mut rows = Vec::new();
        let ids: Vec<String> = pairs.iter().map(|p| p.to_string()).collect();
        for (pair, id) in pairs.iter().zip(&ids) {
            let profile = profile_from_index(&index, pair, c.k0(pair), params.a(), params.i_max())?;
            let tr = dynamics
                .integrate(&profile, params.p_min(), args.step)
                .with_context(|| format!("integrating pair {id}"))?;
            rows.extend(tr.times.iter().zip(&tr.probabilities).map(|(&t, &p)| TrajectoryRow {
                pair_id: id,
                t,
                intensity: profile.intensity_at(t),
                p,
            }));
        }
        run.write_csv("trajectories.csv", rows)?;
    }
    run.finish()
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::LowI => "low",
        Regime::MedI => "medium",
        Regime::HighI => "high",
    }
}

#[derive(Serialize)]
struct PotentialRow {
    i: f64,
    p: f64,
    v: f64,
    dv_dp: f64,
    regime: &'static str,
}

#[derive(Serialize)]
struct StationaryRow {
    i: f64,
    p: f64,
    kind: &'static str,
}

pub fn potential(out: &Path, args: &PotentialArgs) -> Result<()> {
    let mut run = Run::new(out, "potential")?;
    let spec = ModelSpec::load(&mut run, &args.model)?;
    let ModelParams::Nonlinear(q) = model_params(spec.model, &spec.params)? else {
        return Err(usage(format!("the potential belongs to nonlinear_catalysis, not {}", spec.model)));
    };
    let landscape = Landscape::new(q)?;
    if args.points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let mut intensities = args.intensity.clone();
    if intensities.is_empty() {
        intensities = vec![0.0, 0.5 * q.i_c, q.i_c, landscape.i_cint(), q.i_max];
        intensities.dedup();
    }
    if let Some(bad) = intensities.iter().find(|i| !(0.0..=q.i_max).contains(*i)) {
        return Err(usage(format!("intensity {bad} outside [0, {}]", q.i_max)));
    }
    run.config(&json!({ "model": spec, "intensity": intensities, "points": args.points }))?;

    let mut samples = Vec::new();
    let mut stationary = Vec::new();
    for &i in &intensities {
        let regime = regime_name(landscape.regime(i));
        for k in 0..args.points {
            let p = k as f64 / (args.points - 1) as f64;
            samples.push(PotentialRow { i, p, v: landscape.value(i, p)?, dv_dp: landscape.gradient(i, p)?, regime });
        }
        for s in landscape.stationary_points(i)? {
            let kind = match s.kind {
                StationaryKind::Min => "min",
                StationaryKind::Max => "max",
            };
            stationary.push(StationaryRow { i, p: s.p, kind });
        }
    }
    run.write_csv("potential.csv", samples)?;
    run.write_csv("stationary.csv", stationary)?;
    run.write_json(
        "landscape.json",
        &json!({
            "params": q,
            "i_cint": landscape.i_cint(),
            "diagnostics": landscape.diagnostics(),
        }),
    )?;
    run.finish()
}
