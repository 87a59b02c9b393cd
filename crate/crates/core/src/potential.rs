//! Piecewise-quadratic catalysis potential `V(P; I)`.
//!
//! For intensities below the critical value `i_c` the landscape has two
//! wells (at `p_low` and `p_high`) separated by a cusp barrier at `p_med`. The
//! barrier slides down into the lower well as `I → i_c`; above `i_c` only the
//! upper well survives. Between `i_c` and `i_cint` the leftmost branch is the
//! quadratic `V3`, joined to the strengthening branch at `p_int`.
//!
//! Every branch is a quadratic with curvature `S` (left of a well) or `W`
//! (right of a well), so the gradient on a branch is `2·curvature·(P − vertex)`.
//! Branch values use the closed forms of the full (arbitrary-constant)
//! version; the evaluator is checked against the symmetric and 2:1 special
//! cases in the tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grid resolution used to bracket the roots defining `i_cint`.
const ICINT_GRID: usize = 1000;
/// Absolute bisection tolerance on intensity.
const ICINT_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("inadmissible parameters: {0}")]
    Params(String),
    #[error("intensity {i} outside [0, {i_max}]")]
    IntensityOutOfRange { i: f64, i_max: f64 },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
}

/// Parameters of the nonlinear catalysis model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalysisParams {
    /// Strengthening rate (1/min).
    pub s: f64,
    /// Weakening rate (1/min).
    pub w: f64,
    pub p_min: f64,
    pub p_mem: f64,
    pub p_max: f64,
    /// Critical intensity at which the barrier vanishes.
    pub i_c: f64,
    pub i_max: f64,
    /// Prior-knowledge scaling.
    pub a: f64,
}

impl CatalysisParams {
    /// Parameter values of the worked conference example
    /// (`a=0.02, I_c=0.2, I_max=0.6, P_min=0.1, P_mem=0.6, P_max=0.9, W=1, S=0.5`).
    pub fn worked_example() -> Self {
        Self { s: 0.5, w: 1.0, p_min: 0.1, p_mem: 0.6, p_max: 0.9, i_c: 0.2, i_max: 0.6, a: 0.02 }
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        let all = [self.s, self.w, self.p_min, self.p_mem, self.p_max, self.i_c, self.i_max, self.a];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(PotentialError::Params("non-finite value".into()));
        }
        if !(0.0 <= self.p_min && self.p_min < self.p_mem && self.p_mem < self.p_max && self.p_max <= 1.0) {
            return Err(PotentialError::Params(format!(
                "need 0 <= p_min < p_mem < p_max <= 1 (got {}, {}, {})",
                self.p_min, self.p_mem, self.p_max
            )));
        }
        if !(0.0 < self.i_c && self.i_c < self.i_max) {
            return Err(PotentialError::Params(format!("need 0 < i_c < i_max (got {}, {})", self.i_c, self.i_max)));
        }
        if !(self.s > 0.0 && self.w > 0.0) {
            return Err(PotentialError::Params("rates S and W must be positive".into()));
        }
        if self.a < 0.0 {
            return Err(PotentialError::Params("a must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    LowI,
    MedI,
    HighI,
}

/// Branch delimiters at one intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchGeometry {
    pub p_low: f64,
    pub p_med: f64,
    pub p_high: f64,
    /// Junction of `V3` and the strengthening branch (medium regime only).
    pub p_int: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StationaryKind {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub p: f64,
    pub kind: StationaryKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BranchKind {
    V1,
    V2,
    V3,
    Strengthen,
    Weaken,
}

/// One quadratic branch, valid for `P` below `upper` (and at or above the
/// previous branch's `upper`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub upper: f64,
    pub curvature: f64,
    pub vertex: f64,
    pub(crate) kind: BranchKind,
}

impl Piece {
    #[inline]
    pub fn gradient(&self, p: f64) -> f64 {
        2.0 * self.curvature * (p - self.vertex)
    }
}

/// The potential restricted to one intensity: an ordered list of branches.
#[derive(Debug, Clone, Copy)]
pub struct Slice {
    pieces: [Piece; 4],
    len: usize,
    intensity: f64,
}

impl Slice {
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces[..self.len]
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Index of the branch containing `p`; exact junctions go to the right.
    #[inline]
    pub fn piece_index(&self, p: f64) -> usize {
        let pieces = self.pieces();
        pieces[..pieces.len() - 1].iter().position(|pc| p < pc.upper).unwrap_or(pieces.len() - 1)
    }

    /// `(lower, upper)` bounds of branch `idx`.
    pub fn bounds(&self, idx: usize) -> (f64, f64) {
        let lo = if idx == 0 { f64::NEG_INFINITY } else { self.pieces[idx - 1].upper };
        let hi = if idx + 1 == self.len { f64::INFINITY } else { self.pieces[idx].upper };
        (lo, hi)
    }

    /// `dV/dP`, no domain checks (integrator stages may step slightly outside
    /// `[0, 1]`; the outer branches extend naturally).
    #[inline]
    pub fn gradient(&self, p: f64) -> f64 {
        self.pieces[self.piece_index(p)].gradient(p)
    }

    fn push(&mut self, piece: Piece) {
        let lower = if self.len == 0 { f64::NEG_INFINITY } else { self.pieces[self.len - 1].upper };
        if piece.upper > lower {
            self.pieces[self.len] = piece;
            self.len += 1;
        }
    }
}

/// Prepared evaluator: parameters plus the precomputed `i_cint`.
#[derive(Debug, Clone, Copy)]
pub struct Landscape {
    params: CatalysisParams,
    i_cint: f64,
}

impl Landscape {
    pub fn new(params: CatalysisParams) -> Result<Self, PotentialError> {
        params.validate()?;
        Ok(Self { params, i_cint: compute_i_cint_unchecked(&params) })
    }

    pub fn params(&self) -> &CatalysisParams {
        &self.params
    }

    pub fn i_cint(&self) -> f64 {
        self.i_cint
    }

    pub fn regime(&self, i: f64) -> Regime {
        if i <= self.params.i_c {
            Regime::LowI
        } else if i <= self.i_cint {
            Regime::MedI
        } else {
            Regime::HighI
        }
    }

    pub fn geometry(&self, i: f64) -> BranchGeometry {
        let q = &self.params;
        let spread = q.p_mem - q.p_min;
        let p_low = q.p_min + spread * i / (4.0 * q.i_c);
        // (m(I + 2Ic) - M(I - 2Ic)) / 4Ic, written relative to p_low so the
        // two coincide exactly at I = Ic.
        let p_med = p_low + spread * (q.i_c - i) / (2.0 * q.i_c);
        let p_high = q.p_mem + (q.p_max - q.p_mem) * i / q.i_max;
        let p_int = (self.regime(i) == Regime::MedI).then(|| p_int(q, i));
        BranchGeometry { p_low, p_med, p_high, p_int }
    }

    /// Branch decomposition at intensity `i` (no range checks).
    pub fn slice(&self, i: f64) -> Slice {
        let q = &self.params;
        let g = self.geometry(i);
        let blank = Piece { upper: 0.0, curvature: 0.0, vertex: 0.0, kind: BranchKind::V1 };
        let mut slice = Slice { pieces: [blank; 4], len: 0, intensity: i };
        let strengthen = |upper| Piece { upper, curvature: q.s, vertex: g.p_high, kind: BranchKind::Strengthen };
        let weaken = Piece { upper: f64::INFINITY, curvature: q.w, vertex: g.p_high, kind: BranchKind::Weaken };
        match self.regime(i) {
            Regime::LowI => {
                slice.push(Piece { upper: g.p_low, curvature: q.s, vertex: g.p_low, kind: BranchKind::V1 });
                slice.push(Piece { upper: g.p_med, curvature: q.w, vertex: g.p_low, kind: BranchKind::V2 });
                slice.push(strengthen(g.p_high));
            }
            Regime::MedI => {
                let p_int = g.p_int.expect("medium regime has p_int");
                slice.push(Piece { upper: p_int, curvature: q.s, vertex: g.p_low, kind: BranchKind::V3 });
                slice.push(strengthen(g.p_high));
            }
            Regime::HighI => slice.push(strengthen(g.p_high)),
        }
        slice.push(weaken);
        slice
    }

    fn check(&self, i: f64, p: f64) -> Result<(), PotentialError> {
        if !(0.0..=self.params.i_max).contains(&i) {
            return Err(PotentialError::IntensityOutOfRange { i, i_max: self.params.i_max });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(PotentialError::ProbabilityOutOfRange(p));
        }
        Ok(())
    }

    pub fn value(&self, i: f64, p: f64) -> Result<f64, PotentialError> {
        self.check(i, p)?;
        let slice = self.slice(i);
        let piece = slice.pieces()[slice.piece_index(p)];
        Ok(branch_value(&self.params, piece.kind, i, p))
    }

    pub fn gradient(&self, i: f64, p: f64) -> Result<f64, PotentialError> {
        self.check(i, p)?;
        Ok(self.slice(i).gradient(p))
    }

    /// Wells and barriers in `[0, 1]`, ordered by `P`.
    pub fn stationary_points(&self, i: f64) -> Result<Vec<StationaryPoint>, PotentialError> {
        self.check(i, 0.0)?;
        let g = self.geometry(i);
        if i < self.params.i_c {
            return Ok(vec![
                StationaryPoint { p: g.p_low, kind: StationaryKind::Min },
                StationaryPoint { p: g.p_med, kind: StationaryKind::Max },
                StationaryPoint { p: g.p_high, kind: StationaryKind::Min },
            ]);
        }
        Ok(scan_stationary(&self.slice(i)))
    }

    /// Landscapes whose medium regime is malformed (possible when `S < W`):
    /// a second well survives, or the `V3` junction passes the upper well so
    /// `V3` meets the weakening branch with a jump. Returns one message per
    /// problem found on a 200-point scan of `(i_c, i_cint]`; empty when the
    /// landscape is well formed.
    pub fn diagnostics(&self) -> Vec<String> {
        let q = &self.params;
        let mut out = Vec::new();
        let hi = self.i_cint.min(q.i_max);
        if hi <= q.i_c {
            return out;
        }
        let (mut second_well, mut overshoot) = (false, false);
        for k in 1..=200 {
            let i = q.i_c + (hi - q.i_c) * k as f64 / 200.0;
            let g = self.geometry(i);
            let Some(p_int) = g.p_int else { continue };
            if !second_well && p_int > g.p_low {
                second_well = true;
                out.push(format!(
                    "medium regime keeps a lower well at I={i:.6}: p_int={p_int:.6} > p_low={:.6}",
                    g.p_low
                ));
            }
            if !overshoot && p_int > g.p_high {
                overshoot = true;
                out.push(format!(
                    "V3 junction passes the upper well at I={i:.6}: p_int={p_int:.6} > p_high={:.6}",
                    g.p_high
                ));
            }
        }
        out
    }
}

/// Minima and cusp maxima of a slice inside `[0, 1]`.
fn scan_stationary(slice: &Slice) -> Vec<StationaryPoint> {
    let pieces = slice.pieces();
    let mut out: Vec<StationaryPoint> = Vec::new();
    let mut push = |p: f64, kind| {
        if (0.0..=1.0).contains(&p) && !out.iter().any(|s: &StationaryPoint| s.p == p) {
            out.push(StationaryPoint { p, kind });
        }
    };
    for (idx, pc) in pieces.iter().enumerate() {
        let (lo, hi) = slice.bounds(idx);
        if lo < pc.vertex && pc.vertex < hi {
            push(pc.vertex, StationaryKind::Min);
        }
        if idx + 1 < pieces.len() {
            let x = pc.upper;
            let next = &pieces[idx + 1];
            // Each side of a junction is a convex quadratic, so the side is
            // "higher" unless its slope points away from the junction.
            let left = pc.gradient(x);
            let right = next.gradient(x);
            let left_higher = left <= 0.0;
            let right_higher = right >= 0.0;
            if left_higher && right_higher {
                push(x, StationaryKind::Min);
            } else if left > 0.0 && right < 0.0 {
                push(x, StationaryKind::Max);
            }
        }
    }
    out.sort_by(|a, b| a.p.total_cmp(&b.p));
    out
}

fn sq(x: f64) -> f64 {
    x * x
}

/// Verbatim branch expressions of the full potential.
fn branch_value(q: &CatalysisParams, kind: BranchKind, i: f64, p: f64) -> f64 {
    let (s, w, m, mm, x, ic, imax) = (q.s, q.w, q.p_min, q.p_mem, q.p_max, q.i_c, q.i_max);
    match kind {
        BranchKind::V1 | BranchKind::V3 => v1(s, w, m, mm, x, ic, imax, i, p) / sq(imax),
        BranchKind::V2 => v2(s, w, m, mm, x, ic, imax, i, p) / sq(imax),
        BranchKind::Strengthen => s * sq((mm - p) * imax + (x - mm) * i) / sq(imax),
        BranchKind::Weaken => w * sq((mm - p) * imax + (x - mm) * i) / sq(imax),
    }
}

#[allow(clippy::too_many_arguments)]
fn v1(s: f64, w: f64, m: f64, mm: f64, x: f64, ic: f64, imax: f64, i: f64, p: f64) -> f64 {
    let d = mm - m;
    let inner =
        ((8.0 * p * p - 16.0 * p * m + 2.0 * mm * mm - 4.0 * mm * m + 10.0 * m * m) * s - 2.0 * d * d * w) * ic * ic
            - 4.0 * d * i * ((-m / 2.0 - mm / 2.0 + p) * s - w * d) * ic
            + i * i * d * d * (s - 2.0 * w);
    (inner * imax * imax
        + 4.0 * i * s * ic * d * (x - mm) * (i + 2.0 * ic) * imax
        + 8.0 * i * i * s * ic * ic * sq(x - mm))
        / (8.0 * ic * ic)
}

#[allow(clippy::too_many_arguments)]
fn v2(s: f64, w: f64, m: f64, mm: f64, x: f64, ic: f64, imax: f64, i: f64, p: f64) -> f64 {
    let d = mm - m;
    let inner = ((4.0 * s - 4.0 * w) * mm * mm - 8.0 * m * (s - w) * mm
        + 4.0 * s * m * m
        + 16.0 * (p - m / 2.0) * (p - 3.0 * m / 2.0) * w)
        * ic
        * ic
        - 8.0 * d * ((-s / 2.0 - w) * mm + p * w + m * s / 2.0) * i * ic
        + i * i * d * d * (s - 3.0 * w);
    (inner * imax * imax
        + 8.0 * i * s * ic * d * (x - mm) * (i + 2.0 * ic) * imax
        + 16.0 * i * i * s * ic * ic * sq(x - mm))
        / (16.0 * ic * ic)
}

/// Denominator of `p_int` (up to the constant `16 S I_c`).
fn p_int_denominator(q: &CatalysisParams, i: f64) -> f64 {
    let d = q.p_mem - q.p_min;
    ((q.p_max - q.p_mem) * i + q.i_max * d) * q.i_c - i * q.i_max * d / 4.0
}

/// Junction of `V3` with the strengthening branch.
pub fn p_int(q: &CatalysisParams, i: f64) -> f64 {
    let (s, w, m, mm, x, ic, imax) = (q.s, q.w, q.p_min, q.p_mem, q.p_max, q.i_c, q.i_max);
    let d = mm - m;
    let num = (8.0 * s * (mm + m) * (x - mm) * i
        + 6.0 * ((s + w / 3.0) * mm + 5.0 * (s - w / 5.0) * m / 3.0) * d * imax)
        * ic
        * ic
        - 4.0 * d * (s * (x - mm) * i + ((s + 2.0 * w) * mm + m * (s - 2.0 * w)) * imax / 2.0) * i * ic
        - i * i * imax * d * d * (s - 2.0 * w);
    num / (16.0 * s * ic * p_int_denominator(q, i))
}

fn compute_i_cint_unchecked(q: &CatalysisParams) -> f64 {
    let (lo, hi) = (q.i_c, q.i_max);
    let grid: Vec<f64> = (0..=ICINT_GRID).map(|k| lo + (hi - lo) * k as f64 / ICINT_GRID as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&i| p_int(q, i)).collect();
    let dens: Vec<f64> = grid.iter().map(|&i| p_int_denominator(q, i)).collect();
    let mut best = q.i_max;
    for target in [0.0, 1.0] {
        let f = |i: f64| p_int(q, i) - target;
        for k in 0..ICINT_GRID {
            let (fa, fb) = (values[k] - target, values[k + 1] - target);
            if !(fa.is_finite() && fb.is_finite()) {
                continue;
            }
            if fa == 0.0 {
                best = best.min(grid[k]);
                break;
            }
            if fa * fb > 0.0 {
                continue;
            }
            // A sign change across a pole of P_int is not a root.
            if dens[k] * dens[k + 1] <= 0.0 {
                continue;
            }
            let (mut a, mut b, mut fa) = (grid[k], grid[k + 1], fa);
            while b - a > ICINT_TOL {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            best = best.min(0.5 * (a + b));
            break;
        }
    }
    best.min(q.i_max)
}

/// Intensity separating the medium and high regimes.
pub fn compute_i_cint(params: &CatalysisParams) -> Result<f64, PotentialError> {
    params.validate()?;
    Ok(compute_i_cint_unchecked(params))
}

pub fn potential_value(params: &CatalysisParams, i: f64, p: f64) -> Result<f64, PotentialError> {
    Landscape::new(*params)?.value(i, p)
}

pub fn potential_gradient(params: &CatalysisParams, i: f64, p: f64) -> Result<f64, PotentialError> {
    Landscape::new(*params)?.gradient(i, p)
}

pub fn stationary_points(params: &CatalysisParams, i: f64) -> Result<Vec<StationaryPoint>, PotentialError> {
    Landscape::new(*params)?.stationary_points(i)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::CatalysisParams;
    use rand::Rng;

    /// Random admissible parameters with `S >= W` (left-steep wells).
    pub fn random_params<R: Rng>(rng: &mut R) -> CatalysisParams {
        let mut ps = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        ps.sort_by(f64::total_cmp);
        let i_max = rng.random_range(0.1..5.0);
        let w = (rng.random_range(-3.0..1.5f64)).exp();
        CatalysisParams {
            s: w * rng.random_range(1.0..4.0),
            w,
            p_min: ps[0],
            p_mem: ps[1].max(ps[0] + 1e-3),
            p_max: ps[2].max(ps[1] + 2e-3).min(1.0),
            i_c: i_max * rng.random_range(0.02..0.98),
            i_max,
            a: rng.random_range(0.0..0.5),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::random_params;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn special(s_over_w: f64, p_mem: f64) -> CatalysisParams {
        CatalysisParams { s: s_over_w, w: 1.0, p_min: 0.0, p_mem, p_max: 1.0, i_c: 0.5, i_max: 1.0, a: 0.0 }
    }

    fn barrier_at_unit_intensity() -> CatalysisParams {
        CatalysisParams { s: 1.0, w: 1.0, p_min: 0.1, p_mem: 0.4, p_max: 0.8, i_c: 1.0, i_max: 5.0, a: 0.0 }
    }

    /// Closed form of the symmetric case (S = W), evaluated independently.
    fn simplest(w: f64, m: f64, i: f64, p: f64) -> f64 {
        if p < 0.5 * m * (1.0 - i) {
            w * (sq(p - 0.5 * i * m) - 0.25 * i * (m + 2.0) * (3.0 * i * m - 2.0 * i - 2.0 * m))
        } else {
            w * sq(p - i - (1.0 - i) * m)
        }
    }

    #[test]
    fn simplest_case_upper_branch() {
        let q = special(1.0, 0.6);
        let l = Landscape::new(q).unwrap();
        for p in [0.3, 0.45, 0.6, 0.8, 1.0] {
            let v = l.value(0.0, p).unwrap();
            assert!((v - sq(p - 0.6)).abs() < 1e-12, "P={p}: {v}");
        }
    }

    #[test]
    fn simplest_case_minimum_at_zero() {
        let l = Landscape::new(special(1.0, 0.6)).unwrap();
        let sp = l.stationary_points(0.0).unwrap();
        assert_eq!(sp[0], StationaryPoint { p: 0.0, kind: StationaryKind::Min });
        assert!((l.value(0.0, 0.0).unwrap() - simplest(1.0, 0.6, 0.0, 0.0)).abs() < 1e-12);
        assert!(l.value(0.0, 0.05).unwrap() > l.value(0.0, 0.0).unwrap());
    }

    #[test]
    fn worked_example_wells_at_zero_intensity() {
        let l = Landscape::new(CatalysisParams::worked_example()).unwrap();
        let sp = l.stationary_points(0.0).unwrap();
        let minima: Vec<f64> = sp.iter().filter(|s| s.kind == StationaryKind::Min).map(|s| s.p).collect();
        assert_eq!(minima.len(), 2);
        assert!((minima[0] - 0.1).abs() < 1e-12);
        assert!((minima[1] - 0.6).abs() < 1e-12);
        assert!(l.diagnostics().is_empty());
    }

    #[test]
    fn zero_intensity_barrier_at_midpoint() {
        let q = barrier_at_unit_intensity();
        let sp = stationary_points(&q, 0.0).unwrap();
        assert_eq!(sp.len(), 3);
        assert!((sp[0].p - q.p_min).abs() < 1e-15);
        assert_eq!(sp[1].kind, StationaryKind::Max);
        assert!((sp[1].p - 0.5 * (q.p_min + q.p_mem)).abs() < 1e-15);
        assert!((sp[2].p - q.p_mem).abs() < 1e-15);
    }

    #[test]
    fn single_well_at_p_max_for_full_intensity() {
        let q = barrier_at_unit_intensity();
        let sp = stationary_points(&q, q.i_max).unwrap();
        assert_eq!(sp, vec![StationaryPoint { p: q.p_max, kind: StationaryKind::Min }]);
    }

    #[test]
    fn barrier_exists_iff_below_critical() {
        let q = barrier_at_unit_intensity();
        let l = Landscape::new(q).unwrap();
        for k in 0..=500 {
            let i = q.i_max * k as f64 / 500.0;
            let has_barrier = l.stationary_points(i).unwrap().iter().any(|s| s.kind == StationaryKind::Max);
            assert_eq!(has_barrier, i < 1.0, "I={i}");
        }
    }

    #[test]
    fn gradient_vanishes_at_minima() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = random_params(&mut rng);
            let l = Landscape::new(q).unwrap();
            let i = rng.random_range(0.0..q.i_max);
            for sp in l.stationary_points(i).unwrap() {
                if sp.kind == StationaryKind::Min {
                    assert!(l.gradient(i, sp.p).unwrap().abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn high_regime_upper_branch_gradient() {
        let q = special(2.0, 0.6);
        let l = Landscape::new(q).unwrap();
        let i = 0.99;
        assert_eq!(l.regime(i), Regime::HighI);
        let p_high = q.p_mem + (q.p_max - q.p_mem) * i / q.i_max;
        let p = 0.999;
        let g = l.gradient(i, p).unwrap();
        assert!(g > 0.0);
        assert!((g - 2.0 * q.w * (p - p_high)).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let q = barrier_at_unit_intensity();
        assert!(matches!(potential_value(&q, -0.1, 0.5), Err(PotentialError::IntensityOutOfRange { .. })));
        assert!(matches!(potential_value(&q, 5.1, 0.5), Err(PotentialError::IntensityOutOfRange { .. })));
        assert!(matches!(potential_gradient(&q, 1.0, 1.5), Err(PotentialError::ProbabilityOutOfRange(_))));
        let mut bad = q;
        bad.p_mem = 0.05;
        assert!(matches!(potential_value(&bad, 0.0, 0.5), Err(PotentialError::Params(_))));
    }

    /// Dense scan for the first I in (i_c, i_max] where P_int leaves (0, 1).
    fn scan_i_cint(q: &CatalysisParams, step: f64) -> f64 {
        let mut i = q.i_c;
        let mut prev = p_int(q, i);
        while i < q.i_max {
            let next_i = (i + step).min(q.i_max);
            let v = p_int(q, next_i);
            if (prev > 0.0) != (v > 0.0) || (prev < 1.0) != (v < 1.0) {
                return next_i;
            }
            prev = v;
            i = next_i;
        }
        q.i_max
    }

    #[test]
    fn i_cint_matches_scan_simplified() {
        let q = special(2.0, 0.6);
        let got = compute_i_cint(&q).unwrap();
        let scan = scan_i_cint(&q, 1e-5);
        assert!((got - scan).abs() <= 1e-5, "{got} vs {scan}");
        assert!(got < 1.0);
    }

    #[test]
    fn i_cint_exceeds_critical_intensity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = random_params(&mut rng);
            let got = compute_i_cint(&q).unwrap();
            assert!(got > q.i_c, "{q:?}: {got}");
            let scan = scan_i_cint(&q, (q.i_max - q.i_c) * 1e-5);
            assert!((got - scan).abs() <= (q.i_max - q.i_c) * 1e-5 + 1e-9, "{got} vs {scan}");
        }
    }

    #[test]
    fn i_cint_degenerate_memory_near_max() {
        let mut q = CatalysisParams::worked_example();
        q.s = 1.5;
        q.p_mem = q.p_max - 1e-9;
        let got = compute_i_cint(&q).unwrap();
        let scan = scan_i_cint(&q, (q.i_max - q.i_c) * 1e-6);
        assert!((got - scan).abs() <= 1e-6, "{got} vs {scan}");
    }

    #[test]
    fn diagnostics_flag_second_well() {
        // Weakening far stronger than strengthening keeps V3's vertex inside
        // its branch above the critical intensity.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut flagged = 0;
        for _ in 0..200 {
            let mut q = random_params(&mut rng);
            q.s = q.w * 0.02;
            let l = Landscape::new(q).unwrap();
            if !l.diagnostics().is_empty() {
                flagged += 1;
                let i = 0.5 * (q.i_c + l.i_cint());
                let g = l.geometry(i);
                if g.p_int.unwrap() > g.p_low {
                    let sp = l.stationary_points(i).unwrap();
                    assert!(sp.iter().any(|s| s.kind == StationaryKind::Min && s.p == g.p_low));
                }
            }
        }
        assert!(flagged > 0);
    }
}
