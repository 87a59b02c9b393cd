//! Pairwise interaction derived from the schedule.
//!
//! A pair co-attending a session of `T` minutes in a group of `N` people
//! accumulates `2T/N` effective minutes; the sum over sessions is the total
//! effective interaction `I_tot`. The instantaneous intensity profile used by
//! the dynamics is
//!
//! ```text
//! I(t) = I_max / (6a + 1) * (a*K0 + s(t)),
//! s(t) = 2/N during a co-attended session, 0 during a session the pair
//!        spends apart, 2/N_tot outside session times.
//! ```

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::conference::{Conference, PairId, Role, MAX_K0};

#[derive(Debug, Error, PartialEq)]
pub enum InteractionError {
    #[error("session duration must be positive (got {0})")]
    NonPositiveDuration(f64),
    #[error("group size must be at least 2 (got {0})")]
    GroupTooSmall(usize),
    #[error("unknown pair {0}")]
    UnknownPair(PairId),
    #[error("invalid profile parameters: a={a}, i_max={i_max}")]
    BadScaling { a: f64, i_max: f64 },
}

/// Effective minutes `2T/N` for one co-attended session.
pub fn session_effective_interaction(duration: f64, group_size: usize) -> Result<f64, InteractionError> {
    if !(duration > 0.0) {
        return Err(InteractionError::NonPositiveDuration(duration));
    }
    if group_size < 2 {
        return Err(InteractionError::GroupTooSmall(group_size));
    }
    Ok(2.0 * duration / group_size as f64)
}

/// One constant piece of the conference timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Index into `Conference::sessions`, or `None` between sessions.
    pub session: Option<usize>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Per-session group lookup shared by all pairs of one conference.
#[derive(Debug, Clone)]
pub struct ScheduleIndex {
    segments: Vec<Segment>,
    /// For each session: participant id → (group index, group size).
    membership: Vec<HashMap<String, (usize, usize)>>,
    durations: Vec<f64>,
    n_total: usize,
    fellows: HashMap<String, ()>,
    t_start: f64,
    t_collab: f64,
}

impl ScheduleIndex {
    pub fn new(c: &Conference) -> Self {
        let mut segments = Vec::new();
        let mut cursor = c.t_start as f64;
        for (k, s) in c.sessions.iter().enumerate() {
            let (start, end) = (s.start as f64, s.end as f64);
            if start > cursor {
                segments.push(Segment { start: cursor, end: start, session: None });
            }
            segments.push(Segment { start, end, session: Some(k) });
            cursor = end;
        }
        let t_collab = c.t_collab as f64;
        if t_collab > cursor {
            segments.push(Segment { start: cursor, end: t_collab, session: None });
        }
        let membership = c
            .sessions
            .iter()
            .map(|s| {
                let mut m = HashMap::new();
                for (gi, g) in s.groups.iter().enumerate() {
                    for id in g {
                        m.insert(id.clone(), (gi, g.len()));
                    }
                }
                m
            })
            .collect();
        let fellows = c.participants.iter().filter(|p| p.role == Role::Fellow).map(|p| (p.id.clone(), ())).collect();
        Self {
            segments,
            membership,
            durations: c.sessions.iter().map(|s| s.duration() as f64).collect(),
            n_total: c.n_total(),
            fellows,
            t_start: c.t_start as f64,
            t_collab,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_collab(&self) -> f64 {
        self.t_collab
    }

    /// Between-session baseline `2 / N_tot`.
    pub fn baseline(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            2.0 / self.n_total as f64
        }
    }

    fn check_pair(&self, pair: &PairId) -> Result<(), InteractionError> {
        if pair.first == pair.second
            || !self.fellows.contains_key(&pair.first)
            || !self.fellows.contains_key(&pair.second)
        {
            return Err(InteractionError::UnknownPair(pair.clone()));
        }
        Ok(())
    }

    /// Group size of the group both members attend in session `k`.
    pub fn shared_group_size(&self, k: usize, pair: &PairId) -> Option<usize> {
        let m = &self.membership[k];
        match (m.get(&pair.first), m.get(&pair.second)) {
            (Some(&(ga, n)), Some(&(gb, _))) if ga == gb => Some(n),
            _ => None,
        }
    }

    /// `I_tot` for a pair in effective minutes.
    pub fn total_effective_interaction(&self, pair: &PairId) -> Result<f64, InteractionError> {
        self.check_pair(pair)?;
        let mut total = 0.0;
        for k in 0..self.membership.len() {
            if let Some(n) = self.shared_group_size(k, pair) {
                total += session_effective_interaction(self.durations[k], n)?;
            }
        }
        Ok(total)
    }

    /// Raw intensity levels `s(t)` on each timeline segment.
    pub fn exposure_levels(&self, pair: &PairId) -> Result<Vec<f64>, InteractionError> {
        self.check_pair(pair)?;
        let baseline = self.baseline();
        Ok(self
            .segments
            .iter()
            .map(|seg| match seg.session {
                None => baseline,
                Some(k) => match self.shared_group_size(k, pair) {
                    Some(n) => 2.0 / n as f64,
                    None => 0.0,
                },
            })
            .collect())
    }
}

/// Piecewise-constant, right-continuous intensity `I(t)` on
/// `[t_start, t_collab]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionProfile {
    pub pair: PairId,
    pub k0: u8,
    /// `(time, intensity)`: the intensity holds from `time` up to the next
    /// breakpoint (or `t_end`).
    pub breakpoints: Vec<(f64, f64)>,
    pub t_start: f64,
    pub t_end: f64,
    /// Effective minutes; independent of `a` and `i_max`.
    pub i_tot: f64,
}

impl InteractionProfile {
    /// Build a profile directly from `(duration, intensity)` pieces starting at
    /// `t_start`. Used for synthetic scenarios and tests.
    pub fn from_pieces(t_start: f64, pieces: &[(f64, f64)]) -> Self {
        let mut t = t_start;
        let mut breakpoints = Vec::with_capacity(pieces.len());
        for &(d, v) in pieces {
            breakpoints.push((t, v));
            t += d;
        }
        Self { pair: PairId::new("", ""), k0: 0, breakpoints, t_start, t_end: t, i_tot: 0.0 }
    }

    pub fn intensity_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&(bt, _)| bt <= t);
        if idx == 0 {
            self.breakpoints.first().map_or(0.0, |b| b.1)
        } else {
            self.breakpoints[idx - 1].1
        }
    }

    /// `(start, end, intensity)` for every piece, in time order.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints.iter().enumerate().map(move |(i, &(t, v))| {
            let end = self.breakpoints.get(i + 1).map_or(self.t_end, |b| b.0);
            (t, end, v)
        })
    }

    pub fn max_intensity(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.1).fold(0.0, f64::max)
    }
}

/// Scale raw levels into intensities: `I_max/(6a+1) * (a*K0 + s)`.
pub fn scale_intensity(level: f64, k0: u8, a: f64, i_max: f64) -> f64 {
    i_max / (MAX_K0 as f64 * a + 1.0) * (a * k0 as f64 + level)
}

pub fn total_effective_interaction(c: &Conference, pair: &PairId) -> Result<f64, InteractionError> {
    ScheduleIndex::new(c).total_effective_interaction(pair)
}

pub fn interaction_profile(
    c: &Conference,
    pair: &PairId,
    a: f64,
    i_max: f64,
) -> Result<InteractionProfile, InteractionError> {
    profile_from_index(&ScheduleIndex::new(c), pair, c.k0(pair), a, i_max)
}

pub fn profile_from_index(
    index: &ScheduleIndex,
    pair: &PairId,
    k0: u8,
    a: f64,
    i_max: f64,
) -> Result<InteractionProfile, InteractionError> {
    if !(a >= 0.0) || !(i_max > 0.0) {
        return Err(InteractionError::BadScaling { a, i_max });
    }
    let levels = index.exposure_levels(pair)?;
    let breakpoints =
        index.segments().iter().zip(&levels).map(|(seg, &s)| (seg.start, scale_intensity(s, k0, a, i_max))).collect();
    Ok(InteractionProfile {
        pair: pair.clone(),
        k0,
        breakpoints,
        t_start: index.t_start(),
        t_end: index.t_collab(),
        i_tot: index.total_effective_interaction(pair)?,
    })
}

/// Horizontal axis of cumulative-collaboration curves: `I_tot + λ·K0`.
pub fn total_interaction(i_tot: f64, k0: u8, lambda: f64) -> f64 {
    i_tot + lambda * k0 as f64
}
