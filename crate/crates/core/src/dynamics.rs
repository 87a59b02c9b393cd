//! Collaboration-probability dynamics and their RK4 integration.
//!
//! Both models are piecewise affine in `P` at fixed intensity: the linear
//! model is a single affine law `dP/dt = -β(P - v)`, the nonlinear model is
//! `-dV/dP`, one affine law per branch of the potential. [`Field`] captures
//! that shape, which lets the integrator fast-forward whole constant-intensity
//! segments in closed form whenever every RK4 stage stays on one branch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conference::{Conference, PairId};
use crate::interaction::{profile_from_index, InteractionError, InteractionProfile, ScheduleIndex};
use crate::potential::{CatalysisParams, Landscape, PotentialError};

/// Default RK4 step in minutes.
pub const DEFAULT_STEP: f64 = 0.5;
/// Probabilities handed to the likelihood are clipped to `[EPS, 1 - EPS]`.
pub const PROBABILITY_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("inadmissible parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error("step size must be positive and finite (got {0})")]
    BadStep(f64),
    #[error("non-finite state at t={t} (intensity {intensity})")]
    NonFinite { t: f64, intensity: f64 },
}

/// Anchor of the weakening term of the linear model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakeningForm {
    /// `-W (P - p_min)/p_max (1 - I/I_max)`: relaxes to `p_min` once
    /// interaction stops.
    #[default]
    MinAnchored,
    /// `-W (P - p_max)/p_max (1 - I/I_max)`, the form as printed.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub s: f64,
    pub w: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub i_max: f64,
    pub a: f64,
    #[serde(default)]
    pub weakening: WeakeningForm,
}

impl LinearParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all = [self.s, self.w, self.p_min, self.p_max, self.i_max, self.a];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Params("non-finite value".into()));
        }
        if !(0.0 <= self.p_min && self.p_min < self.p_max && self.p_max <= 1.0) {
            return Err(DynamicsError::Params(format!(
                "need 0 <= p_min < p_max <= 1 (got {}, {})",
                self.p_min, self.p_max
            )));
        }
        if !(self.s > 0.0 && self.w > 0.0) {
            return Err(DynamicsError::Params("rates S and W must be positive".into()));
        }
        if !(self.i_max > 0.0) || self.a < 0.0 {
            return Err(DynamicsError::Params("need i_max > 0 and a >= 0".into()));
        }
        Ok(())
    }

    /// Largest relaxation rate over all intensities (1/min).
    pub fn max_rate(&self) -> f64 {
        (self.s / (self.p_max - self.p_min)).max(self.w / self.p_max)
    }

    /// `(β, v)` with `dP/dt = -β (P - v)` at intensity `i`.
    fn affine(&self, i: f64) -> (f64, f64) {
        let rel = i / self.i_max;
        let grow = self.s * rel / (self.p_max - self.p_min);
        let decay = self.w * (1.0 - rel) / self.p_max;
        let anchor = match self.weakening {
            WeakeningForm::MinAnchored => self.p_min,
            WeakeningForm::AsPrinted => self.p_max,
        };
        let beta = grow + decay;
        (beta, (grow * self.p_max + decay * anchor) / beta)
    }
}

/// Linear-model rate of change.
pub fn rhs_linear(params: &LinearParams, i: f64, p: f64) -> f64 {
    let rel = i / params.i_max;
    let weak = match params.weakening {
        WeakeningForm::MinAnchored => p - params.p_min,
        WeakeningForm::AsPrinted => p - params.p_max,
    };
    params.s * rel * (1.0 - p / params.p_max) / (1.0 - params.p_min / params.p_max)
        - params.w * (weak / params.p_max) * (1.0 - rel)
}

/// Nonlinear-model rate of change, `-dV/dP`. `P` slightly outside `[0, 1]`
/// is tolerated.
pub fn rhs_nonlinear(params: &CatalysisParams, i: f64, p: f64) -> Result<f64, DynamicsError> {
    let landscape = Landscape::new(*params)?;
    if !(0.0..=params.i_max).contains(&i) {
        return Err(PotentialError::IntensityOutOfRange { i, i_max: params.i_max }.into());
    }
    Ok(-landscape.slice(i).gradient(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelParams {
    Linear(LinearParams),
    Nonlinear(CatalysisParams),
}

impl ModelParams {
    pub fn p_min(&self) -> f64 {
        match self {
            Self::Linear(l) => l.p_min,
            Self::Nonlinear(n) => n.p_min,
        }
    }

    pub fn a(&self) -> f64 {
        match self {
            Self::Linear(l) => l.a,
            Self::Nonlinear(n) => n.a,
        }
    }

    pub fn i_max(&self) -> f64 {
        match self {
            Self::Linear(l) => l.i_max,
            Self::Nonlinear(n) => n.i_max,
        }
    }

    /// Largest relaxation rate `β` of the affine branches (1/min). RK4 at
    /// step `h` keeps every stage on the current side of a well while
    /// `β·h` stays below about 1.29.
    pub fn max_rate(&self) -> f64 {
        match self {
            Self::Linear(l) => l.max_rate(),
            Self::Nonlinear(n) => 2.0 * n.s.max(n.w),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct AffinePiece {
    upper: f64,
    beta: f64,
    vertex: f64,
}

/// Right-hand side at one fixed intensity, as ordered affine branches.
#[derive(Debug, Clone, Copy)]
pub struct Field {
    pieces: [AffinePiece; 4],
    len: usize,
}

impl Field {
    fn index(&self, p: f64) -> usize {
        self.pieces[..self.len - 1].iter().position(|pc| p < pc.upper).unwrap_or(self.len - 1)
    }

    fn bounds(&self, idx: usize) -> (f64, f64) {
        let lo = if idx == 0 { f64::NEG_INFINITY } else { self.pieces[idx - 1].upper };
        let hi = if idx + 1 == self.len { f64::INFINITY } else { self.pieces[idx].upper };
        (lo, hi)
    }

    #[inline]
    pub fn rate(&self, p: f64) -> f64 {
        let pc = &self.pieces[self.index(p)];
        -pc.beta * (p - pc.vertex)
    }

    fn rk4_step(&self, p: f64, h: f64) -> f64 {
        let k1 = self.rate(p);
        let k2 = self.rate(p + 0.5 * h * k1);
        let k3 = self.rate(p + 0.5 * h * k2);
        let k4 = self.rate(p + h * k3);
        p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    /// If every RK4 stage from `p` stays on `p`'s branch, return that branch's
    /// `(vertex, growth factor)`: one step maps `P - v` to `factor·(P - v)`,
    /// and repeated steps stay on the branch.
    fn closed_form(&self, p: f64, h: f64) -> Option<(f64, f64)> {
        let idx = self.index(p);
        let pc = &self.pieces[idx];
        let (lo, hi) = self.bounds(idx);
        // Later steps only shrink towards the vertex, so it must lie on the
        // branch (or on its boundary) too.
        if !(lo <= pc.vertex && pc.vertex <= hi) {
            return None;
        }
        let z = pc.beta * h;
        let factor = stability_polynomial(z);
        if !(factor > 0.0 && factor < 1.0) {
            return None;
        }
        let d = p - pc.vertex;
        let stages = [1.0 - 0.5 * z, 1.0 - 0.5 * z + 0.25 * z * z, 1.0 - z + 0.5 * z * z - 0.25 * z * z * z, factor];
        stages.iter().map(|f| pc.vertex + f * d).all(|q| lo <= q && q < hi).then_some((pc.vertex, factor))
    }
}

/// RK4 applied to `y' = -β y` over one step: `y ↦ R(βh) y`.
fn stability_polynomial(z: f64) -> f64 {
    1.0 - z + z * z / 2.0 - z * z * z / 6.0 + z * z * z * z / 24.0
}

/// Validated model ready for integration.
#[derive(Debug, Clone, Copy)]
pub enum Dynamics {
    Linear(LinearParams),
    Nonlinear(Landscape),
}

impl Dynamics {
    pub fn new(params: &ModelParams) -> Result<Self, DynamicsError> {
        match params {
            ModelParams::Linear(l) => {
                l.validate()?;
                Ok(Self::Linear(*l))
            }
            ModelParams::Nonlinear(n) => Ok(Self::Nonlinear(Landscape::new(*n)?)),
        }
    }

    pub fn field(&self, i: f64) -> Field {
        let blank = AffinePiece { upper: f64::INFINITY, beta: 0.0, vertex: 0.0 };
        let mut field = Field { pieces: [blank; 4], len: 0 };
        match self {
            Self::Linear(l) => {
                let (beta, vertex) = l.affine(i);
                field.pieces[0] = AffinePiece { upper: f64::INFINITY, beta, vertex };
                field.len = 1;
            }
            Self::Nonlinear(land) => {
                let slice = land.slice(i);
                for (k, pc) in slice.pieces().iter().enumerate() {
                    field.pieces[k] = AffinePiece { upper: pc.upper, beta: 2.0 * pc.curvature, vertex: pc.vertex };
                }
                field.len = slice.pieces().len();
            }
        }
        field
    }

    pub fn rhs(&self, i: f64, p: f64) -> f64 {
        self.field(i).rate(p)
    }

    /// Stepwise RK4 over a profile, recording every step.
    pub fn integrate(&self, profile: &InteractionProfile, p0: f64, h: f64) -> Result<Trajectory, DynamicsError> {
        check_step(h)?;
        let mut times = vec![profile.t_start];
        let mut probabilities = vec![p0];
        let mut clamp_events = 0;
        let mut p = p0;
        for (start, end, intensity) in profile.pieces() {
            let field = self.field(intensity);
            let (n, rem) = split_segment(end - start, h);
            let steps = n + usize::from(rem > 0.0);
            let mut t = start;
            for k in 0..steps {
                let step = if k < n { h } else { rem };
                p = clamp(field.rk4_step(p, step), &mut clamp_events);
                if !p.is_finite() {
                    return Err(DynamicsError::NonFinite { t, intensity });
                }
                t = if k + 1 == steps { end } else { t + step };
                times.push(t);
                probabilities.push(p);
            }
        }
        Ok(Trajectory { times, probabilities, p_collab: p, clamp_events })
    }

    /// Probability at the end of `pieces` (`(duration, intensity)` in time
    /// order), started from `p0`. Same step schedule as [`Self::integrate`].
    pub fn terminal_probability<I>(&self, pieces: I, p0: f64, h: f64) -> Result<Terminal, DynamicsError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        check_step(h)?;
        let mut clamp_events = 0;
        let mut p = p0;
        let mut t = 0.0;
        for (duration, intensity) in pieces {
            p = self.field(intensity).advance(p, duration, h, &mut clamp_events);
            t += duration;
            if !p.is_finite() {
                return Err(DynamicsError::NonFinite { t, intensity });
            }
        }
        Ok(Terminal { p, clamp_events })
    }
}

impl Field {
    /// Carries `p` across `duration` minutes at this field's intensity with
    /// the fixed-step schedule, jumping straight to the end of any run of
    /// full steps that stays on one branch. `h` must be positive.
    pub fn advance(&self, p: f64, duration: f64, h: f64, clamp_events: &mut usize) -> f64 {
        let (n, rem) = split_segment(duration, h);
        let mut p = p;
        let mut done = 0;
        while done < n {
            if let Some((vertex, factor)) = self.closed_form(p, h) {
                p = vertex + (p - vertex) * factor.powi((n - done) as i32);
                break;
            }
            p = clamp(self.rk4_step(p, h), clamp_events);
            done += 1;
        }
        if rem > 0.0 {
            p = clamp(self.rk4_step(p, rem), clamp_events);
        }
        p
    }
}

fn check_step(h: f64) -> Result<(), DynamicsError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::BadStep(h))
    }
}

/// Full steps and the shortened final step landing on the segment end.
fn split_segment(length: f64, h: f64) -> (usize, f64) {
    if !(length > 0.0) {
        return (0, 0.0);
    }
    let n = (length / h + 1e-9).floor();
    let rem = length - n * h;
    let rem = if rem <= 1e-9 * h { 0.0 } else { rem };
    (n as usize, rem)
}

fn clamp(p: f64, events: &mut usize) -> f64 {
    if p < 0.0 {
        *events += 1;
        0.0
    } else if p > 1.0 {
        *events += 1;
        1.0
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub p_collab: f64,
    /// Steps whose result had to be clamped into `[0, 1]`.
    pub clamp_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub p: f64,
    pub clamp_events: usize,
}

pub fn integrate(
    params: &ModelParams,
    profile: &InteractionProfile,
    p0: f64,
    h: f64,
) -> Result<Trajectory, DynamicsError> {
    Dynamics::new(params)?.integrate(profile, p0, h)
}

/// `P` at `t_collab` for one pair, integrated from `p_min` and clipped for
/// likelihood use.
pub fn collaboration_probability(params: &ModelParams, c: &Conference, pair: &PairId) -> Result<f64, DynamicsError> {
    let dynamics = Dynamics::new(params)?;
    let index = ScheduleIndex::new(c);
    let profile = profile_from_index(&index, pair, c.k0(pair), params.a(), params.i_max())?;
    let pieces = profile.pieces().map(|(s, e, v)| (e - s, v));
    let end = dynamics.terminal_probability(pieces, params.p_min(), DEFAULT_STEP)?;
    Ok(clip_probability(end.p))
}

pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
}
