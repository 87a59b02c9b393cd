//! Synthetic conferences with known collaboration mechanisms.
//!
//! The timetable starts at minute 60 (the origin is an hour before the first
//! session), leaves 30 minutes between sessions, fits at most
//! [`SESSIONS_PER_DAY`] sessions into a day and starts the next day at the
//! same clock time. Proposals are due an hour after the last session.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conference::{Conference, Participant, PriorKnowledgeMatrix, ProposalTeam, Session, SessionKind};
use crate::dynamics::DEFAULT_STEP;
use crate::fitting::{pattern_probabilities, FitData, FitError, ModelKind};
use crate::scheduler::{
    anneal, apply_solution, AnnealSchedule, AssignmentConstraints, AssignmentProblem, SchedulerError,
};

pub const SESSIONS_PER_DAY: usize = 4;
const DAY_MINUTES: i64 = 1440;
const FIRST_SESSION: i64 = 60;
const BREAK_MINUTES: i64 = 30;
const PROPOSAL_GAP: i64 = 60;
/// Fellows per discussion group when no facilitators lead them.
const DISCUSSION_TARGET: usize = 10;
const SMALL_GROUP_TARGET: usize = 4;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Generating mechanism: a candidate model and its parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub model: ModelKind,
    pub params: Vec<f64>,
}

impl Truth {
    /// Nonlinear catalysis where a shared small group lifts a pair over the
    /// critical intensity, a discussion group does so only for pairs that
    /// already know each other well, and about 6% of pairs collaborate.
    pub fn strong_small_group() -> Self {
        Self {
            model: ModelKind::NonlinearCatalysis,
            // s, w, p_min, p_mem, p_max, i_c, i_max, a
            params: vec![0.2, 0.02, 0.01, 0.15, 0.8, 0.25, 1.0, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_fellows: usize,
    /// One facilitator leads each discussion group; zero means unled
    /// groups of about ten fellows.
    pub n_facilitators: usize,
    pub n_discussion_sessions: usize,
    pub n_small_group_sessions: usize,
    pub discussion_minutes: i64,
    pub small_group_minutes: i64,
    /// Probability of each prior-knowledge score 0..=6.
    pub k0_distribution: [f64; 7],
    /// Distinct values of the `discipline` attribute.
    pub n_disciplines: usize,
    pub truth: Truth,
    pub anneal: AnnealSchedule,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_fellows: 50,
            n_facilitators: 5,
            n_discussion_sessions: 4,
            n_small_group_sessions: 3,
            discussion_minutes: 75,
            small_group_minutes: 30,
            k0_distribution: [0.62, 0.2, 0.1, 0.04, 0.02, 0.015, 0.005],
            n_disciplines: 4,
            truth: Truth::strong_small_group(),
            anneal: AnnealSchedule { sweeps: 200, ..Default::default() },
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn check(&self) -> Result<(), SynthError> {
        let total: f64 = self.k0_distribution.iter().sum();
        if self.k0_distribution.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(SynthError::Spec(format!("k0 distribution must be non-negative and sum to 1, got {total}")));
        }
        if self.n_fellows < 2 {
            return Err(SynthError::Spec("need at least two fellows".into()));
        }
        if self.discussion_minutes <= 0 || self.small_group_minutes <= 0 {
            return Err(SynthError::Spec("session lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Sizes of `g` groups splitting `n` as evenly as possible.
fn even_sizes(n: usize, g: usize) -> Vec<usize> {
    (0..g).map(|i| n / g + usize::from(i < n % g)).collect()
}

fn fill(members: &[String], sizes: &[usize]) -> Vec<Vec<String>> {
    let mut rest = members;
    sizes
        .iter()
        .map(|&k| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        })
        .collect()
}

fn draw_category<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Builds the timetable, draws prior knowledge and attributes, and places
/// fellows with the annealer under default constraints. No outcomes.
pub fn generate_conference(spec: &SynthSpec) -> Result<Conference, SynthError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_fellows.to_string().len();
    let fellows: Vec<String> = (0..spec.n_fellows).map(|i| format!("F{i:0width$}")).collect();
    let facilitators: Vec<String> = (0..spec.n_facilitators).map(|i| format!("H{i:02}")).collect();

    let mut participants = Vec::new();
    for id in &fellows {
        let mut p = Participant::fellow(id.clone());
        if spec.n_disciplines > 0 {
            let d = rng.random_range(0..spec.n_disciplines as u64);
            p.attributes.insert("discipline".into(), format!("D{d}"));
        }
        participants.push(p);
    }
    participants.extend(facilitators.iter().map(|id| Participant::facilitator(id.clone())));

    let mut prior_knowledge = PriorKnowledgeMatrix::new();
    for (i, a) in fellows.iter().enumerate() {
        for b in &fellows[i + 1..] {
            let k0 = draw_category(&mut rng, &spec.k0_distribution) as u8;
            if k0 > 0 {
                prior_knowledge.set(a, b, k0);
            }
        }
    }

    let n_disc_groups =
        if spec.n_facilitators > 0 { spec.n_facilitators } else { spec.n_fellows.div_ceil(DISCUSSION_TARGET) };
    let disc_sizes = even_sizes(spec.n_fellows, n_disc_groups);
    let small_sizes = even_sizes(spec.n_fellows, spec.n_fellows.div_ceil(SMALL_GROUP_TARGET));

    // Interleave the two kinds, discussions first.
    let mut kinds = Vec::new();
    let (mut d, mut s) = (spec.n_discussion_sessions, spec.n_small_group_sessions);
    while d + s > 0 {
        if d > 0 {
            kinds.push(SessionKind::Discussion);
            d -= 1;
        }
        if s > 0 {
            kinds.push(SessionKind::SmallGroup);
            s -= 1;
        }
    }
    let mut sessions = Vec::new();
    let mut cursor = FIRST_SESSION;
    for (k, kind) in kinds.into_iter().enumerate() {
        if k > 0 && k % SESSIONS_PER_DAY == 0 {
            cursor = FIRST_SESSION + DAY_MINUTES * (k / SESSIONS_PER_DAY) as i64;
        }
        let minutes = match kind {
            SessionKind::SmallGroup => spec.small_group_minutes,
            _ => spec.discussion_minutes,
        };
        let mut groups = match kind {
            SessionKind::SmallGroup => fill(&fellows, &small_sizes),
            _ => fill(&fellows, &disc_sizes),
        };
        if kind == SessionKind::Discussion {
            for (g, fac) in groups.iter_mut().zip(&facilitators) {
                g.insert(0, fac.clone());
            }
        }
        sessions.push(Session {
            id: format!("{}{k}", if kind == SessionKind::SmallGroup { "S" } else { "D" }),
            kind,
            start: cursor,
            end: cursor + minutes,
            groups,
            group_topics: None,
        });
        cursor += minutes + BREAK_MINUTES;
    }
    let t_collab = sessions.last().map_or(FIRST_SESSION, |s| s.end + PROPOSAL_GAP);
    let mut c = Conference {
        name: Some(format!("synthetic-{}", spec.seed)),
        participants,
        sessions,
        prior_knowledge,
        proposal_teams: vec![],
        t_start: 0,
        t_collab,
    };
    for kind in [SessionKind::Discussion, SessionKind::SmallGroup] {
        let anneal_seed: u64 = rng.random();
        if !c.sessions.iter().any(|s| s.kind == kind) {
            continue;
        }
        let problem = AssignmentProblem::for_kind(c.clone(), kind, AssignmentConstraints::default())?;
        let best = anneal(&problem, &spec.anneal, 1, anneal_seed);
        c = apply_solution(&c, &best[0])?;
    }
    Ok(c)
}

/// Model probability for every eligible pair, in [`FitData`] pair order.
pub fn pair_probabilities(c: &Conference, truth: &Truth) -> Result<(FitData, Vec<f64>), SynthError> {
    let data = FitData::from_conference(c)?;
    let by_pattern = pattern_probabilities(truth.model, &truth.params, &data, DEFAULT_STEP)?;
    let probs = data.pairs.iter().map(|p| by_pattern[p.pattern]).collect();
    Ok((data, probs))
}

/// Replaces the proposal teams by independent Bernoulli draws, one
/// two-person team per collaborating pair.
pub fn generate_outcomes(c: &Conference, truth: &Truth, seed: u64) -> Result<Conference, SynthError> {
    let (data, probs) = pair_probabilities(c, truth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = c.clone();
    out.proposal_teams = data
        .pairs
        .iter()
        .zip(&probs)
        .filter(|(_, &p)| rng.random::<f64>() < p)
        .map(|(rec, _)| ProposalTeam { members: vec![rec.pair.first.clone(), rec.pair.second.clone()], funded: false })
        .collect();
    Ok(out)
}

/// Conference plus outcomes drawn from `spec.truth`.
pub fn generate(spec: &SynthSpec) -> Result<Conference, SynthError> {
    let c = generate_conference(spec)?;
    generate_outcomes(&c, &spec.truth, spec.seed.wrapping_add(0x5eed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conference::{eligible_pairs, validate};
    use crate::interaction::ScheduleIndex;

    fn small_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            n_fellows: 24,
            n_facilitators: 3,
            anneal: AnnealSchedule { sweeps: 30, ..Default::default() },
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn fifty_two_fellows_give_1326_pairs() {
        let spec =
            SynthSpec { n_fellows: 52, n_small_group_sessions: 0, n_discussion_sessions: 0, ..Default::default() };
        let c = generate_conference(&spec).unwrap();
        assert_eq!(c.fellow_ids().len(), 52);
        let n = c.fellow_ids().len();
        assert_eq!(n * (n - 1) / 2, 1326);
    }

    #[test]
    fn no_sessions_means_baseline_only() {
        let spec = SynthSpec { n_small_group_sessions: 0, n_discussion_sessions: 0, ..small_spec(1) };
        let c = generate_conference(&spec).unwrap();
        assert!(validate(&c).is_empty());
        let index = ScheduleIndex::new(&c);
        let pair = &eligible_pairs(&c)[0].pair;
        assert_eq!(index.total_effective_interaction(pair).unwrap(), 0.0);
        assert!(index.exposure_levels(pair).unwrap().iter().all(|v| *v == index.baseline()));
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate(&small_spec(3)).unwrap();
        assert_eq!(a.to_json(), generate(&small_spec(3)).unwrap().to_json());
        assert_ne!(a.to_json(), generate(&small_spec(4)).unwrap().to_json());
        assert!(validate(&a).is_empty(), "{:?}", validate(&a));
        let back = Conference::from_json(&a.to_json()).unwrap();
        assert!(validate(&back).is_empty());
        assert_eq!(back, a);
    }

    #[test]
    fn default_spec_is_feasible() {
        let c = generate(&SynthSpec::default()).unwrap();
        assert!(validate(&c).is_empty());
        assert_eq!(c.sessions.len(), 7);
        assert!(c.t_collab >= c.sessions.last().unwrap().end + 60);
    }

    #[test]
    fn extreme_probabilities() {
        let c = generate_conference(&small_spec(5)).unwrap();
        let never = Truth { model: ModelKind::ConstantP, params: vec![0.0] };
        assert!(generate_outcomes(&c, &never, 1).unwrap().proposal_teams.is_empty());
        let always = Truth { model: ModelKind::ConstantP, params: vec![1.0] };
        let all = generate_outcomes(&c, &always, 1).unwrap();
        assert_eq!(all.proposal_teams.len(), eligible_pairs(&c).len());
    }

    #[test]
    fn frequency_matches_mean_probability() {
        let c = generate_conference(&small_spec(6)).unwrap();
        let truth = Truth::strong_small_group();
        let (_, probs) = pair_probabilities(&c, &truth).unwrap();
        let n = probs.len() as f64;
        let mean: f64 = probs.iter().sum::<f64>() / n;
        let var: f64 = probs.iter().map(|p| p * (1.0 - p)).sum::<f64>();
        let reps = 200;
        let total: usize = (0..reps).map(|s| generate_outcomes(&c, &truth, s).unwrap().proposal_teams.len()).sum();
        let freq = total as f64 / (reps as f64 * n);
        let se = (var / reps as f64).sqrt() / n;
        assert!((freq - mean).abs() < 3.0 * se, "{freq} vs {mean} (se {se})");
    }

    #[test]
    fn rejects_bad_distribution() {
        let spec = SynthSpec { k0_distribution: [0.5; 7], ..Default::default() };
        assert!(matches!(generate_conference(&spec), Err(SynthError::Spec(_))));
    }
}
