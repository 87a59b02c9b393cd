//! Candidate comparison by AIC, and cumulative collaboration curves.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conference::{Conference, PairId};
use crate::dynamics::{Dynamics, DEFAULT_STEP};
use crate::fitting::{
    fit, model_params, pattern_probabilities, static_prediction, FitData, FitError, FitOptions, FitResult, ModelKind,
};
use crate::interaction::{scale_intensity, InteractionError, ScheduleIndex};
use crate::stats::{quantile_sorted, replicate_rng};

/// A candidate and its parameter count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CandidateModel {
    pub kind: ModelKind,
    pub k_params: usize,
}

impl CandidateModel {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, k_params: kind.k_params() }
    }
}

/// What a model needs to know about one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub k0: u8,
    pub i_tot: f64,
    /// Largest raw level `s(t)` over the conference.
    pub max_level: f64,
    /// `(duration, raw level)` for every timeline segment.
    pub segments: Vec<(f64, f64)>,
}

impl PairFeatures {
    pub fn from_index(index: &ScheduleIndex, pair: &PairId, k0: u8) -> Result<Self, InteractionError> {
        let levels = index.exposure_levels(pair)?;
        Ok(Self {
            k0,
            i_tot: index.total_effective_interaction(pair)?,
            max_level: levels.iter().copied().fold(0.0, f64::max),
            segments: index.segments().iter().map(|s| s.duration()).zip(levels).collect(),
        })
    }
}

/// Collaboration probability of one pair, clamped to `[0, 1]`.
pub fn predict(kind: ModelKind, params: &[f64], features: &PairFeatures) -> Result<f64, FitError> {
    if params.len() != kind.k_params() {
        return Err(FitError::Dimension { expected: kind.k_params(), got: params.len() });
    }
    let p = match static_prediction(kind, params, features.k0, features.i_tot, features.max_level) {
        Some(p) => p,
        None => {
            let mp = model_params(kind, params)?;
            let dynamics = Dynamics::new(&mp)?;
            let pieces =
                features.segments.iter().map(|&(d, lv)| (d, scale_intensity(lv, features.k0, mp.a(), mp.i_max())));
            dynamics.terminal_probability(pieces, mp.p_min(), DEFAULT_STEP)?.p
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

pub fn aic(nll: f64, k_params: usize) -> f64 {
    2.0 * k_params as f64 + 2.0 * nll
}

/// Evidence weight of a model with `aic` against the best, `aic_min`.
pub fn relative_likelihood(aic: f64, aic_min: f64) -> f64 {
    ((aic_min - aic) / 2.0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRow {
    pub kind: ModelKind,
    pub k_params: usize,
    /// `None` when the fit failed; see `error`.
    pub nll: Option<f64>,
    pub aic: Option<f64>,
    pub delta_aic: Option<f64>,
    pub relative_likelihood: Option<f64>,
    pub params: Vec<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Fits every kind and ranks by AIC. Failed fits become rows carrying the
/// error, placed after the successful ones.
pub fn select_data(data: &FitData, kinds: &[ModelKind], opts: &FitOptions) -> Vec<SelectionRow> {
    let fits: Vec<(ModelKind, Result<FitResult, FitError>)> =
        kinds.par_iter().map(|&k| (k, fit(k, data, opts))).collect();
    rows_from_fits(fits)
}

fn rows_from_fits(fits: Vec<(ModelKind, Result<FitResult, FitError>)>) -> Vec<SelectionRow> {
    let aic_min = fits.iter().filter_map(|(_, r)| r.as_ref().ok().map(FitResult::aic)).fold(f64::INFINITY, f64::min);
    let mut rows: Vec<SelectionRow> = fits
        .into_iter()
        .map(|(kind, r)| match r {
            Ok(f) => {
                let a = f.aic();
                SelectionRow {
                    kind,
                    k_params: f.k_params,
                    nll: Some(f.nll),
                    aic: Some(a),
                    delta_aic: Some(a - aic_min),
                    relative_likelihood: Some(relative_likelihood(a, aic_min)),
                    params: f.params,
                    converged: f.converged,
                    error: None,
                }
            }
            Err(e) => SelectionRow {
                kind,
                k_params: kind.k_params(),
                nll: None,
                aic: None,
                delta_aic: None,
                relative_likelihood: None,
                params: vec![],
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &SelectionRow| r.aic.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then(a.kind.cmp(&b.kind))
    });
    rows
}

pub fn select(c: &Conference, kinds: &[ModelKind], opts: &FitOptions) -> Result<Vec<SelectionRow>, FitError> {
    if kinds.is_empty() {
        return Err(FitError::Params("no candidate models given".into()));
    }
    Ok(select_data(&FitData::from_conference(c)?, kinds, opts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveOptions {
    pub n_bins: usize,
    pub n_sims: usize,
    pub seed: u64,
    /// Weight of `K0` on the interaction axis in effective minutes; `None`
    /// uses the model's `a` times the total session minutes (0 for models
    /// without `a`).
    pub lambda: Option<f64>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { n_bins: 20, n_sims: 100, seed: 0, lambda: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBin {
    /// Inclusive upper edge on the interaction axis.
    pub upper: f64,
    pub n_pairs: usize,
    /// Cumulative counts up to `upper`.
    pub observed: usize,
    pub predicted_mean: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub residual: f64,
}

impl CurveBin {
    pub fn covered(&self) -> bool {
        self.band_low <= self.observed as f64 && self.observed as f64 <= self.band_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub lambda: f64,
    pub n_sims: usize,
    pub seed: u64,
    pub bins: Vec<CurveBin>,
}

impl CurveReport {
    pub fn coverage(&self) -> f64 {
        if self.bins.is_empty() {
            return 1.0;
        }
        self.bins.iter().filter(|b| b.covered()).count() as f64 / self.bins.len() as f64
    }
}

/// Quantile edges of `x` (deduplicated, last edge = max).
fn quantile_edges(x: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..=n_bins).map(|k| quantile_sorted(&sorted, k as f64 / n_bins as f64)).collect();
    edges.dedup();
    edges
}

/// Curve from per-pair axis values, outcomes and probabilities.
pub fn curve_from_probabilities(
    axis: &[f64],
    outcomes: &[bool],
    probabilities: &[f64],
    lambda: f64,
    opts: &CurveOptions,
) -> CurveReport {
    let edges = quantile_edges(axis, opts.n_bins.max(1));
    let bin_of: Vec<usize> = axis.iter().map(|&v| edges.partition_point(|&e| e < v).min(edges.len() - 1)).collect();
    let cumulate = |hits: &mut dyn Iterator<Item = usize>| {
        let mut counts = vec![0usize; edges.len()];
        for b in hits {
            counts[b] += 1;
        }
        let mut acc = 0;
        counts
            .iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect::<Vec<_>>()
    };
    let n_pairs = cumulate(&mut bin_of.iter().copied());
    let observed = cumulate(&mut bin_of.iter().zip(outcomes).filter(|(_, &y)| y).map(|(&b, _)| b));
    let sims: Vec<Vec<usize>> = (0..opts.n_sims as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(opts.seed, r);
            let hits: Vec<usize> =
                bin_of.iter().zip(probabilities).filter(|(_, &p)| rng.random::<f64>() < p).map(|(&b, _)| b).collect();
            cumulate(&mut hits.into_iter())
        })
        .collect();
    let bins = edges
        .iter()
        .enumerate()
        .map(|(k, &upper)| {
            let mut column: Vec<f64> = sims.iter().map(|s| s[k] as f64).collect();
            column.sort_by(f64::total_cmp);
            let mean = if column.is_empty() { 0.0 } else { column.iter().sum::<f64>() / column.len() as f64 };
            let (lo, hi) = if column.is_empty() {
                (0.0, 0.0)
            } else {
                (quantile_sorted(&column, 0.025), quantile_sorted(&column, 0.975))
            };
            CurveBin {
                upper,
                n_pairs: n_pairs[k],
                observed: observed[k],
                predicted_mean: mean,
                band_low: lo,
                band_high: hi,
                residual: observed[k] as f64 - mean,
            }
        })
        .collect();
    CurveReport { lambda, n_sims: opts.n_sims, seed: opts.seed, bins }
}

/// Cumulative number of collaborations against total interaction
/// `i_tot + λ·K0`, observed and simulated from the model.
pub fn cumulative_collaboration_curve(
    c: &Conference,
    kind: ModelKind,
    params: &[f64],
    opts: &CurveOptions,
) -> Result<CurveReport, FitError> {
    let data = FitData::from_conference(c)?;
    if data.n_pairs() == 0 {
        return Err(FitError::NoPairs);
    }
    let lambda = match opts.lambda {
        Some(l) => l,
        None => match model_params(kind, params) {
            Ok(mp) => mp.a() * c.total_session_minutes() as f64,
            Err(_) => 0.0,
        },
    };
    let by_pattern = pattern_probabilities(kind, params, &data, DEFAULT_STEP)?;
    let axis: Vec<f64> = data.pairs.iter().map(|p| data.patterns[p.pattern].i_tot + lambda * p.k0 as f64).collect();
    let outcomes: Vec<bool> = data.pairs.iter().map(|p| p.collaborated).collect();
    let probs: Vec<f64> = data.pairs.iter().map(|p| by_pattern[p.pattern]).collect();
    Ok(curve_from_probabilities(&axis, &outcomes, &probs, lambda, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, generate_conference, generate_outcomes, SynthSpec, Truth};

    fn features(k0: u8, i_tot: f64, max_level: f64) -> PairFeatures {
        PairFeatures { k0, i_tot, max_level, segments: vec![(100.0, max_level)] }
    }

    #[test]
    fn regression_predictions() {
        let f = features(2, 27.5, 0.5);
        let p = predict(ModelKind::LinearK0Itot, &[0.01, 0.002, 0.01], &f).unwrap();
        assert!((p - 0.085).abs() < 1e-12);
        let constant = predict(ModelKind::ConstantP, &[0.07], &f).unwrap();
        assert_eq!(predict(ModelKind::LinearK0, &[0.0, 0.07], &f).unwrap(), constant);
        assert_eq!(predict(ModelKind::LinearK0, &[-1.0, 0.07], &f).unwrap(), 0.0);
        assert_eq!(predict(ModelKind::RandomUniform, &[], &f).unwrap(), 0.5);
    }

    #[test]
    fn threshold_never_crossed() {
        for lv in [0.0, 0.2, 0.66] {
            assert_eq!(predict(ModelKind::Threshold, &[0.9, 0.4, 0.02], &features(0, 10.0, lv)).unwrap(), 0.02);
        }
        assert_eq!(predict(ModelKind::Threshold, &[0.3, 0.4, 0.02], &features(0, 10.0, 0.5)).unwrap(), 0.4);
    }

    #[test]
    fn dynamic_prediction_matches_pattern_path() {
        let c = generate(&SynthSpec { seed: 2, ..Default::default() }).unwrap();
        let truth = Truth::strong_small_group();
        let data = FitData::from_conference(&c).unwrap();
        let by_pattern = pattern_probabilities(truth.model, &truth.params, &data, DEFAULT_STEP).unwrap();
        let index = ScheduleIndex::new(&c);
        for rec in data.pairs.iter().step_by(97) {
            let f = PairFeatures::from_index(&index, &rec.pair, rec.k0).unwrap();
            let p = predict(truth.model, &truth.params, &f).unwrap();
            assert!((p - by_pattern[rec.pattern]).abs() < 1e-12);
        }
    }

    #[test]
    fn aic_arithmetic() {
        assert_eq!(aic(100.0, 3), 206.0);
        assert!((relative_likelihood(385.62, 375.88) - 0.0077).abs() < 5e-5);
        assert!((relative_likelihood(430.53, 407.96) - 1.3e-5).abs() < 5e-7);
    }

    fn data_from(truth: Truth, seed: u64) -> FitData {
        let c = generate_conference(&SynthSpec { seed, ..Default::default() }).unwrap();
        FitData::from_conference(&generate_outcomes(&c, &truth, seed).unwrap()).unwrap()
    }

    #[test]
    fn single_model_has_unit_relative_likelihood() {
        let data = data_from(Truth { model: ModelKind::ConstantP, params: vec![0.05] }, 1);
        let rows = select_data(&data, &[ModelKind::ConstantP], &FitOptions::default());
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].relative_likelihood, Some(1.0));
    }

    #[test]
    fn rows_sorted_with_best_at_one() {
        let data = data_from(Truth { model: ModelKind::ConstantP, params: vec![0.05] }, 3);
        let kinds = [ModelKind::RandomUniform, ModelKind::ConstantP, ModelKind::LinearK0, ModelKind::Threshold];
        let rows = select_data(&data, &kinds, &FitOptions::default());
        assert_eq!(rows[0].relative_likelihood, Some(1.0));
        assert!(rows.windows(2).all(|w| w[0].aic <= w[1].aic));
        assert!(rows[1..].iter().all(|r| r.relative_likelihood.unwrap() < 1.0));
    }

    #[test]
    fn constant_data_prefers_fewer_parameters() {
        let mut wins = 0;
        for seed in 0..10 {
            let data = data_from(Truth { model: ModelKind::ConstantP, params: vec![0.05] }, seed);
            let rows = select_data(&data, &[ModelKind::ConstantP, ModelKind::LinearK0Itot], &FitOptions::default());
            if rows[0].kind == ModelKind::ConstantP {
                wins += 1;
            }
        }
        assert!(wins >= 8, "{wins}/10");
    }

    #[test]
    fn failed_fit_is_reported_not_fatal() {
        let fits = vec![
            (ModelKind::ConstantP, Err(FitError::NoPairs)),
            (
                ModelKind::RandomUniform,
                fit(
                    ModelKind::RandomUniform,
                    &data_from(Truth { model: ModelKind::ConstantP, params: vec![0.05] }, 0),
                    &FitOptions::default(),
                ),
            ),
        ];
        let rows = rows_from_fits(fits);
        assert_eq!(rows[0].kind, ModelKind::RandomUniform);
        assert!(rows[1].error.is_some() && rows[1].aic.is_none());
    }

    #[test]
    fn degenerate_bands() {
        let axis: Vec<f64> = (0..50).map(f64::from).collect();
        let outcomes: Vec<bool> = (0..50).map(|i| i % 7 == 0).collect();
        let zero = curve_from_probabilities(&axis, &outcomes, &[0.0; 50], 0.0, &CurveOptions::default());
        assert!(zero.bins.iter().all(|b| b.band_low == 0.0 && b.band_high == 0.0 && b.predicted_mean == 0.0));
        assert_eq!(zero.bins.last().unwrap().observed, 8);
        let exact: Vec<f64> = outcomes.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
        let same = curve_from_probabilities(&axis, &outcomes, &exact, 0.0, &CurveOptions::default());
        assert!(same.bins.iter().all(|b| b.residual == 0.0 && b.band_low == b.band_high));
        assert_eq!(same.coverage(), 1.0);
    }

    #[test]
    fn curve_is_cumulative_and_reproducible() {
        let c = generate(&SynthSpec { seed: 4, ..Default::default() }).unwrap();
        let truth = Truth::strong_small_group();
        let opts = CurveOptions::default();
        let r = cumulative_collaboration_curve(&c, truth.model, &truth.params, &opts).unwrap();
        assert!(r.bins.windows(2).all(|w| w[0].observed <= w[1].observed && w[0].upper < w[1].upper));
        assert_eq!(r.bins.last().unwrap().observed, c.collaborating_pairs().len());
        assert!((r.lambda - 0.1 * c.total_session_minutes() as f64).abs() < 1e-12);
        assert_eq!(r, cumulative_collaboration_curve(&c, truth.model, &truth.params, &opts).unwrap());
    }
}
