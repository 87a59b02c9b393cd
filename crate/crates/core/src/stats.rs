//! Rank tests, bootstrap intervals, kernel densities and odds for the
//! empirical comparisons between collaborating and other pairs.
//!
//! Randomness comes from `ChaCha8Rng`. Bootstrap replicate `i` uses stream `i`
//! of the generator seeded with the caller's seed, and indices are drawn as
//! `u64`, so results do not depend on platform or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::conference::{eligible_pairs, Conference, SessionKind};
use crate::interaction::ScheduleIndex;
use crate::numeric::neumaier_sum;

/// Largest pooled sample size that gets an exact null distribution.
pub const EXACT_CUTOFF: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("all differences are zero")]
    AllZero,
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("need at least one collaborating and one non-collaborating pair")]
    DegenerateSplit,
    #[error(transparent)]
    Interaction(#[from] crate::interaction::InteractionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample larger (or differences positive).
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    /// `U` of the first sample, or `W+` (`min(W+, W-)` when two-sided).
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub alternative: Alternative,
    pub n1: usize,
    pub n2: usize,
    pub ties_corrected: bool,
}

/// Midranks (1-based) of `values`, plus the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn combine(p_greater: f64, p_less: f64, alt: Alternative) -> f64 {
    let p = match alt {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => 2.0 * p_greater.min(p_less),
    };
    p.clamp(0.0, 1.0)
}

/// Normal-approximation tails for a statistic with the given moments,
/// continuity-corrected by half a unit.
fn normal_tails(stat: f64, mean: f64, var: f64) -> (f64, f64) {
    if !(var > 0.0) {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let greater = upper_tail((stat - mean - 0.5) / sd);
    let less = upper_tail(-(stat - mean + 0.5) / sd);
    (greater.min(1.0), less.min(1.0))
}

/// Tail probabilities from counts indexed by doubled statistic.
fn exact_tails(counts: &[f64], observed_doubled: usize) -> (f64, f64) {
    let total = neumaier_sum(counts.iter().copied());
    let ge = neumaier_sum(counts[observed_doubled.min(counts.len())..].iter().copied());
    let le = neumaier_sum(counts[..=observed_doubled.min(counts.len() - 1)].iter().copied());
    (ge / total, le / total)
}

/// Mann–Whitney U test of `x` against `y`.
pub fn mann_whitney_u(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestReport, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let (p_greater, p_less, method) = if n <= EXACT_CUTOFF {
        // counts[k][s]: subsets of size k whose doubled rank sum is s.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
        counts[0][0] = 1.0;
        for &d in &doubled {
            for k in (1..=n1).rev() {
                for s in (d..=max_sum).rev() {
                    counts[k][s] += counts[k - 1][s - d];
                }
            }
        }
        let observed = (2.0 * rank_sum).round() as usize;
        let (g, l) = exact_tails(&counts[n1], observed);
        (g, l, TestMethod::Exact)
    } else {
        let mean = (n1 * n2) as f64 / 2.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1)) as f64;
        let var = (n1 * n2) as f64 / 12.0 * ((n + 1) as f64 - tie_term);
        let (g, l) = normal_tails(u, mean, var);
        (g, l, TestMethod::NormalApprox)
    };
    Ok(TestReport {
        statistic: u,
        p_value: combine(p_greater, p_less, alternative),
        method,
        alternative,
        n1,
        n2,
        ties_corrected: !ties.is_empty(),
    })
}

/// Wilcoxon signed-rank test of a zero median. Zeros are dropped.
pub fn wilcoxon_signed_rank(differences: &[f64], alternative: Alternative) -> Result<TestReport, StatsError> {
    if differences.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::AllZero);
    }
    let n = nonzero.len();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&nonzero).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let (p_greater, p_less, method) = if n <= EXACT_CUTOFF {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max_sum + 1];
        counts[0] = 1.0;
        for &d in &doubled {
            for s in (d..=max_sum).rev() {
                counts[s] += counts[s - d];
            }
        }
        let (g, l) = exact_tails(&counts, (2.0 * w_plus).round() as usize);
        (g, l, TestMethod::Exact)
    } else {
        let nf = n as f64;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let (g, l) = normal_tails(w_plus, total / 2.0, var);
        (g, l, TestMethod::NormalApprox)
    };
    let statistic = match alternative {
        Alternative::TwoSided => w_plus.min(total - w_plus),
        _ => w_plus,
    };
    Ok(TestReport {
        statistic,
        p_value: combine(p_greater, p_less, alternative),
        method,
        alternative,
        n1: n,
        n2: 0,
        ties_corrected: !ties.is_empty(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

/// Generator for bootstrap replicate `index`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Percentile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn mean(x: &[f64]) -> f64 {
    neumaier_sum(x.iter().copied()) / x.len() as f64
}

fn check_level(level: f64) -> Result<(), StatsError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(StatsError::BadLevel(level))
    }
}

/// Resampled values of `stat` over `n_resamples` bootstrap draws of `x`.
pub fn bootstrap_replicates<F>(x: &[f64], n_resamples: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len() as u64;
    (0..n_resamples as u64)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let mut rng = replicate_rng(seed, i);
            buf.clear();
            buf.extend((0..n).map(|_| x[rng.random_range(0..n) as usize]));
            stat(buf)
        })
        .collect()
}

/// Percentile interval from replicates (sorted in place).
pub fn percentile_interval(replicates: &mut [f64], level: f64) -> (f64, f64) {
    replicates.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(replicates, tail), quantile_sorted(replicates, 1.0 - tail))
}

/// Bootstrap percentile interval for the mean.
pub fn bootstrap_mean(x: &[f64], n_resamples: usize, level: f64, seed: u64) -> Result<BootstrapSummary, StatsError> {
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_level(level)?;
    let mut reps = bootstrap_replicates(x, n_resamples, seed, mean);
    let (ci_low, ci_high) = percentile_interval(&mut reps, level);
    Ok(BootstrapSummary { mean: mean(x), ci_low, ci_high, level, n_resamples, seed })
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 1.0;
    }
    let m = mean(x);
    let sd = (neumaier_sum(x.iter().map(|v| (v - m) * (v - m))) / (n - 1.0)).sqrt();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        1e-3 * (1.0 + m.abs())
    }
}

/// Gaussian kernel density evaluated on `n_points` evenly spaced points
/// spanning the data plus three bandwidths either side.
pub fn kde_samples(x: &[f64], n_points: usize) -> Vec<(f64, f64)> {
    if x.is_empty() || n_points == 0 {
        return vec![];
    }
    let h = silverman_bandwidth(x);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (x.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..n_points)
        .map(|k| {
            let t = if n_points == 1 { 0.5 } else { k as f64 / (n_points - 1) as f64 };
            let at = lo + t * (hi - lo);
            let density = norm * neumaier_sum(x.iter().map(|v| (-0.5 * ((at - v) / h).powi(2)).exp()));
            (at, density)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self { n_resamples: 1000, level: 0.95, seed: 0 }
    }
}

/// Exposure of collaborating versus non-collaborating pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub n_collaborating: usize,
    pub n_other: usize,
    pub mean_collaborating: f64,
    pub mean_other: f64,
    /// `mean_collaborating / mean_other` (1 when the means coincide).
    pub ratio: f64,
    /// One-sided: collaborators interacted more.
    pub mann_whitney: TestReport,
    pub bootstrap_collaborating: BootstrapSummary,
    pub bootstrap_other: BootstrapSummary,
    pub kde_collaborating: Vec<(f64, f64)>,
    pub kde_other: Vec<(f64, f64)>,
}

/// `(i_tot of collaborating pairs, i_tot of the rest)`, pooled over
/// conferences.
pub fn split_interaction(conferences: &[Conference]) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for c in conferences {
        let index = ScheduleIndex::new(c);
        for o in eligible_pairs(c) {
            let v = index.total_effective_interaction(&o.pair)?;
            if o.collaborated {
                yes.push(v)
            } else {
                no.push(v)
            }
        }
    }
    Ok((yes, no))
}

pub fn gap_from_samples(collaborating: &[f64], other: &[f64], opts: &ResampleOptions) -> Result<GapReport, StatsError> {
    if collaborating.is_empty() || other.is_empty() {
        return Err(StatsError::DegenerateSplit);
    }
    let (m1, m0) = (mean(collaborating), mean(other));
    let ratio = if m1 == m0 { 1.0 } else { m1 / m0 };
    Ok(GapReport {
        n_collaborating: collaborating.len(),
        n_other: other.len(),
        mean_collaborating: m1,
        mean_other: m0,
        ratio,
        mann_whitney: mann_whitney_u(collaborating, other, Alternative::Greater)?,
        bootstrap_collaborating: bootstrap_mean(collaborating, opts.n_resamples, opts.level, opts.seed)?,
        bootstrap_other: bootstrap_mean(other, opts.n_resamples, opts.level, opts.seed.wrapping_add(1))?,
        kde_collaborating: kde_samples(collaborating, 200),
        kde_other: kde_samples(other, 200),
    })
}

pub fn collaboration_gap_analysis(conferences: &[Conference], opts: &ResampleOptions) -> Result<GapReport, StatsError> {
    let (yes, no) = split_interaction(conferences)?;
    gap_from_samples(&yes, &no, opts)
}

/// Odds of one stratum with a bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumOdds {
    pub n_pairs: usize,
    pub n_collaborating: usize,
    /// `None` when the stratum is empty or every pair collaborated.
    pub odds: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddsReport {
    /// Pairs sharing no small-group session.
    pub none: StratumOdds,
    /// Pairs sharing exactly one small-group session.
    pub one: StratumOdds,
    pub odds_ratio: Option<f64>,
    pub ratio_ci: Option<(f64, f64)>,
}

fn odds_of(outcomes: &[f64]) -> f64 {
    let p = mean(outcomes);
    p / (1.0 - p)
}

fn stratum(outcomes: &[f64], opts: &ResampleOptions, seed: u64) -> (StratumOdds, Vec<f64>) {
    let n = outcomes.len();
    let k = outcomes.iter().filter(|v| **v > 0.5).count();
    if n == 0 || k == n {
        return (StratumOdds { n_pairs: n, n_collaborating: k, odds: None, ci: None }, vec![]);
    }
    let reps = bootstrap_replicates(outcomes, opts.n_resamples, seed, odds_of);
    let mut sorted = reps.clone();
    let ci = percentile_interval(&mut sorted, opts.level);
    (StratumOdds { n_pairs: n, n_collaborating: k, odds: Some(odds_of(outcomes)), ci: Some(ci) }, reps)
}

/// Odds of collaborating for `K0 = 0` pairs that shared exactly one
/// small-group session versus none, pooled over conferences.
pub fn mini_session_odds(conferences: &[Conference], opts: &ResampleOptions) -> Result<OddsReport, StatsError> {
    check_level(opts.level)?;
    let mut none = Vec::new();
    let mut one = Vec::new();
    for c in conferences {
        let index = ScheduleIndex::new(c);
        let small: Vec<usize> =
            c.sessions.iter().enumerate().filter(|(_, s)| s.kind == SessionKind::SmallGroup).map(|(k, _)| k).collect();
        for o in eligible_pairs(c).into_iter().filter(|o| o.k0 == 0) {
            let shared = small.iter().filter(|&&k| index.shared_group_size(k, &o.pair).is_some()).count();
            let y = if o.collaborated { 1.0 } else { 0.0 };
            match shared {
                0 => none.push(y),
                1 => one.push(y),
                _ => {}
            }
        }
    }
    Ok(odds_from_strata(&none, &one, opts))
}

/// Odds report from 0/1 outcomes of the two strata.
pub fn odds_from_strata(none: &[f64], one: &[f64], opts: &ResampleOptions) -> OddsReport {
    let (s0, r0) = stratum(none, opts, opts.seed);
    let (s1, r1) = stratum(one, opts, opts.seed.wrapping_add(1));
    let (odds_ratio, ratio_ci) = match (s0.odds, s1.odds) {
        (Some(o0), Some(o1)) if o0 > 0.0 => {
            let mut ratios: Vec<f64> = r1.iter().zip(&r0).map(|(a, b)| a / b).collect();
            (Some(o1 / o0), Some(percentile_interval(&mut ratios, opts.level)))
        }
        _ => (None, None),
    };
    OddsReport { none: s0, one: s1, odds_ratio, ratio_ci }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    /// Exact one-sided tails of U by listing every split of the pooled data.
    fn enumerate_u(x: &[f64], y: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let n = pooled.len();
        let (ranks, _) = midranks(&pooled);
        let observed: f64 = ranks[..x.len()].iter().sum();
        let (mut ge, mut le, mut total) = (0u64, 0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != x.len() {
                continue;
            }
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            total += 1;
            if s >= observed - 1e-9 {
                ge += 1;
            }
            if s <= observed + 1e-9 {
                le += 1;
            }
        }
        (ge as f64 / total as f64, le as f64 / total as f64)
    }

    fn enumerate_w(d: &[f64]) -> (f64, f64) {
        let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
        let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
        let (ranks, _) = midranks(&abs);
        let observed: f64 = ranks.iter().zip(&nz).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
        let n = nz.len();
        let (mut ge, mut le) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if s >= observed - 1e-9 {
                ge += 1;
            }
            if s <= observed + 1e-9 {
                le += 1;
            }
        }
        let total = (1u64 << n) as f64;
        (ge as f64 / total, le as f64 / total)
    }

    #[test]
    fn u_extremes() {
        let (x, y) = ([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]);
        let less = mann_whitney_u(&x, &y, Alternative::Less).unwrap();
        assert_eq!(less.statistic, 0.0);
        assert!((less.p_value - 0.05).abs() < 1e-15);
        let greater = mann_whitney_u(&y, &x, Alternative::Greater).unwrap();
        assert_eq!(greater.statistic, 9.0);
        assert!((greater.p_value - 0.05).abs() < 1e-15);
        assert_eq!(greater.method, TestMethod::Exact);
    }

    #[test]
    fn u_identical_samples() {
        let x = [1.0, 2.0, 2.0, 5.0];
        assert_eq!(mann_whitney_u(&x, &x, Alternative::TwoSided).unwrap().p_value, 1.0);
    }

    #[test]
    fn u_matches_enumeration_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 2..=10 {
            for n1 in 1..n {
                for _ in 0..20 {
                    let draw = |rng: &mut ChaCha8Rng| f64::from(rng.random_range(0..5u8));
                    let x: Vec<f64> = (0..n1).map(|_| draw(&mut rng)).collect();
                    let y: Vec<f64> = (0..n - n1).map(|_| draw(&mut rng)).collect();
                    let (ge, le) = enumerate_u(&x, &y);
                    for (alt, want) in [
                        (Alternative::Greater, ge),
                        (Alternative::Less, le),
                        (Alternative::TwoSided, (2.0 * ge.min(le)).min(1.0)),
                    ] {
                        let got = mann_whitney_u(&x, &y, alt).unwrap().p_value;
                        assert!((got - want).abs() < 1e-12, "{x:?} {y:?} {alt:?}: {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn u_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..3.0)).collect();
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(0.5..3.5)).collect();
        let a = mann_whitney_u(&x, &y, Alternative::TwoSided).unwrap();
        let t = |v: &Vec<f64>| v.iter().map(|z| (2.0 * z).exp() - 7.0).collect::<Vec<_>>();
        let b = mann_whitney_u(&t(&x), &t(&y), Alternative::TwoSided).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn u_detects_large_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng) + 0.5).collect();
        let y: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();
        let r = mann_whitney_u(&x, &y, Alternative::Greater).unwrap();
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert!(r.p_value < 1e-6, "{}", r.p_value);
    }

    #[test]
    fn u_rejects_empty() {
        assert_eq!(mann_whitney_u(&[], &[1.0], Alternative::Less), Err(StatsError::EmptySample));
    }

    #[test]
    fn w_all_positive() {
        let r = wilcoxon_signed_rank(&[0.3, 1.2, 2.0, 0.1, 5.0, 0.7], Alternative::Greater).unwrap();
        assert!((r.p_value - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn w_antisymmetric() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.5, -2.5, 4.0, -4.0], Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn w_matches_enumeration_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 1..=10 {
            for _ in 0..40 {
                let d: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-4..=4i8))).collect();
                if d.iter().all(|v| *v == 0.0) {
                    assert_eq!(wilcoxon_signed_rank(&d, Alternative::TwoSided), Err(StatsError::AllZero));
                    continue;
                }
                let (ge, le) = enumerate_w(&d);
                for (alt, want) in [
                    (Alternative::Greater, ge),
                    (Alternative::Less, le),
                    (Alternative::TwoSided, (2.0 * ge.min(le)).min(1.0)),
                ] {
                    let got = wilcoxon_signed_rank(&d, alt).unwrap().p_value;
                    assert!((got - want).abs() < 1e-12, "{d:?} {alt:?}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn w_permutation_invariant() {
        let mut d: Vec<f64> = (0..40).map(|k| (k as f64 * 0.37).sin() + 0.2).collect();
        let a = wilcoxon_signed_rank(&d, Alternative::TwoSided).unwrap();
        d.reverse();
        d.swap(3, 17);
        assert_eq!(a, wilcoxon_signed_rank(&d, Alternative::TwoSided).unwrap());
    }

    #[test]
    fn w_large_positive_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d: Vec<f64> = (0..2500).map(|_| rng.random_range(-0.2..1.0)).collect();
        let r = wilcoxon_signed_rank(&d, Alternative::TwoSided).unwrap();
        assert!(r.p_value < 1e-5);
    }

    #[test]
    fn bootstrap_constant_sample() {
        let b = bootstrap_mean(&[2.5; 40], 1000, 0.95, 1).unwrap();
        assert_eq!((b.mean, b.ci_low, b.ci_high), (2.5, 2.5, 2.5));
    }

    #[test]
    fn bootstrap_reproducible() {
        let x: Vec<f64> = (0..50).map(|k| (k as f64).sqrt()).collect();
        assert_eq!(bootstrap_mean(&x, 1000, 0.95, 7).unwrap(), bootstrap_mean(&x, 1000, 0.95, 7).unwrap());
        assert_ne!(bootstrap_mean(&x, 1000, 0.95, 7).unwrap(), bootstrap_mean(&x, 1000, 0.95, 8).unwrap());
    }

    #[test]
    fn bootstrap_width_scales_with_root_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let small: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let large: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let w = |x: &[f64]| {
            let b = bootstrap_mean(x, 1000, 0.95, 3).unwrap();
            b.ci_high - b.ci_low
        };
        let ratio = w(&small) / w(&large);
        assert!((ratio - 10.0).abs() < 1.5, "{ratio}");
    }

    #[test]
    fn bootstrap_rejects_bad_input() {
        assert_eq!(bootstrap_mean(&[], 10, 0.95, 0), Err(StatsError::EmptySample));
        assert_eq!(bootstrap_mean(&[1.0], 10, 1.0, 0), Err(StatsError::BadLevel(1.0)));
    }

    #[test]
    fn kde_integrates_to_one() {
        let x = [0.0, 0.5, 1.0, 4.0, 4.2];
        let pts = kde_samples(&x, 2000);
        let dx = pts[1].0 - pts[0].0;
        let area: f64 = pts.iter().map(|p| p.1 * dx).sum();
        assert!((area - 1.0).abs() < 1e-2, "{area}");
    }

    #[test]
    fn odds_arithmetic() {
        let mut one = vec![1.0; 3];
        one.extend([0.0; 20]);
        let none = vec![0.0; 30];
        let r = odds_from_strata(&none, &one, &ResampleOptions::default());
        assert!((r.one.odds.unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(r.none.odds, Some(0.0));
        assert_eq!(r.none.ci.unwrap().0, 0.0);
        assert_eq!(r.odds_ratio, None);
        let empty = odds_from_strata(&[], &one, &ResampleOptions::default());
        assert_eq!(empty.none.odds, None);
    }

    #[test]
    fn identical_exposure_gives_unit_ratio() {
        let r = gap_from_samples(&[3.0; 5], &[3.0; 40], &ResampleOptions::default()).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(gap_from_samples(&[], &[1.0], &ResampleOptions::default()), Err(StatsError::DegenerateSplit));
    }
}
