//! Group assignment by simulated annealing, and the comparison of the
//! realised schedule against alternative ones.
//!
//! Only fellows move. Each assigned session keeps its groups, facilitators and
//! topics; the fellows attending it are permuted among the fellow slots by
//! swapping two fellows from different groups, so group sizes never change.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conference::{eligible_pairs, Conference, PairId, SessionKind};
use crate::stats::{wilcoxon_signed_rank, Alternative, TestReport};

/// Inclusive group-size bounds (facilitators included).
pub const DISCUSSION_GROUP_SIZE: (usize, usize) = (8, 12);
pub const SMALL_GROUP_SIZE: (usize, usize) = (3, 4);

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("session {session}: {reason}")]
    InfeasibleSizes { session: String, reason: String },
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("no sessions to assign")]
    NoSessions,
    #[error("no collaborating pairs recorded")]
    NoCollaborators,
    #[error("solution list is empty")]
    NoSolutions,
    #[error("invalid solution: {0}")]
    Structure(String),
}

/// Penalty weights. The defaults are choices of this crate, not measured
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    /// Per extra meeting of a pair in small groups.
    pub repeat_small: f64,
    /// Per extra meeting of a pair in discussion or other sessions.
    pub repeat_other: f64,
    /// Per small-group pair whose prior knowledge exceeds the ceiling.
    pub prior_knowledge: f64,
    /// Per fellow placed on a discussion topic rated below the minimum.
    pub low_interest: f64,
    /// Per same-valued pair, per diversity attribute, per group.
    pub homogeneity: f64,
    /// Subtracted per fellow placed on a topic rated at or above the
    /// reward threshold.
    pub interest_reward: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            repeat_small: 100.0,
            repeat_other: 1.0,
            prior_knowledge: 10.0,
            low_interest: 1000.0,
            homogeneity: 1.0,
            interest_reward: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignmentConstraints {
    pub min_interest: u8,
    pub reward_interest: u8,
    /// Largest prior knowledge tolerated inside a small group.
    pub k0_ceiling: u8,
    /// Attributes to diversify; `None` uses every attribute key present.
    pub diversity_attributes: Option<Vec<String>>,
    pub enforce_size_bounds: bool,
    pub weights: EnergyWeights,
}

impl Default for AssignmentConstraints {
    fn default() -> Self {
        Self {
            min_interest: 3,
            reward_interest: 4,
            k0_ceiling: 0,
            diversity_attributes: None,
            enforce_size_bounds: true,
            weights: EnergyWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    /// Starting temperature; `None` calibrates it from probe moves.
    pub initial_temperature: Option<f64>,
    pub target_acceptance: f64,
    pub probes: usize,
    /// Temperature factor applied after every sweep.
    pub cooling: f64,
    pub sweeps: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { initial_temperature: None, target_acceptance: 0.8, probes: 100, cooling: 0.995, sweeps: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionAssignment {
    pub session_id: String,
    /// Full member lists (facilitators first), in the session's group order.
    pub groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub assignment: Vec<SessionAssignment>,
    pub energy: f64,
    pub rank: usize,
}

#[derive(Debug, Clone)]
struct SessionSlots {
    id: String,
    kind: SessionKind,
    facilitators: Vec<Vec<String>>,
    capacity: Vec<usize>,
    attendees: Vec<usize>,
    /// `[group][fellow]` placement cost, discussion sessions with topics only.
    topic_cost: Option<Vec<Vec<f64>>>,
}

impl SessionSlots {
    fn class(&self) -> usize {
        usize::from(self.kind != SessionKind::SmallGroup)
    }

    fn movable(&self) -> bool {
        self.capacity.iter().filter(|&&c| c > 0).count() >= 2
    }
}

/// Sessions to (re)assign together with the fixed parts of the conference.
///
/// Group sizes, facilitators and attendance are read from the sessions'
/// current groups; where the fellows currently sit only matters as a
/// template.
#[derive(Debug, Clone)]
pub struct AssignmentProblem {
    conference: Conference,
    constraints: AssignmentConstraints,
    fellows: Vec<String>,
    sessions: Vec<SessionSlots>,
    /// Static pair costs for small groups (0) and other sessions (1).
    pair_cost: [Vec<f64>; 2],
}

impl AssignmentProblem {
    pub fn new(
        conference: Conference,
        session_indices: &[usize],
        constraints: AssignmentConstraints,
    ) -> Result<Self, SchedulerError> {
        if session_indices.is_empty() {
            return Err(SchedulerError::NoSessions);
        }
        let fellows: Vec<String> = conference.fellow_ids().into_iter().map(str::to_owned).collect();
        let fellow_index: HashMap<&str, usize> = fellows.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
        let mut sessions = Vec::with_capacity(session_indices.len());
        for &k in session_indices {
            let s = conference.sessions.get(k).ok_or_else(|| SchedulerError::UnknownSession(format!("#{k}")))?;
            let infeasible = |reason: String| SchedulerError::InfeasibleSizes { session: s.id.clone(), reason };
            let bounds = match s.kind {
                SessionKind::Discussion => Some(DISCUSSION_GROUP_SIZE),
                SessionKind::SmallGroup => Some(SMALL_GROUP_SIZE),
                SessionKind::Other => None,
            };
            let mut facilitators = Vec::new();
            let mut capacity = Vec::new();
            let mut attendees = Vec::new();
            let mut seen = HashSet::new();
            for group in &s.groups {
                if let (Some((lo, hi)), true) = (bounds, constraints.enforce_size_bounds) {
                    if group.len() < lo || group.len() > hi {
                        return Err(infeasible(format!("group of {} outside {lo}..={hi}", group.len())));
                    }
                }
                let mut fixed = Vec::new();
                let mut slots = 0;
                for m in group {
                    if !seen.insert(m.as_str()) {
                        return Err(infeasible(format!("{m} appears twice")));
                    }
                    match fellow_index.get(m.as_str()) {
                        Some(&i) => {
                            attendees.push(i);
                            slots += 1;
                        }
                        None => fixed.push(m.clone()),
                    }
                }
                facilitators.push(fixed);
                capacity.push(slots);
            }
            let topic_cost = match (&s.group_topics, s.kind) {
                (Some(topics), SessionKind::Discussion) => Some(
                    topics
                        .iter()
                        .map(|t| fellows.iter().map(|f| topic_cost(&conference, &constraints, f, t)).collect())
                        .collect(),
                ),
                _ => None,
            };
            sessions.push(SessionSlots {
                id: s.id.clone(),
                kind: s.kind,
                facilitators,
                capacity,
                attendees,
                topic_cost,
            });
        }
        let pair_cost = pair_costs(&conference, &constraints, &fellows);
        Ok(Self { conference, constraints, fellows, sessions, pair_cost })
    }

    /// Every session of one kind.
    pub fn for_kind(
        conference: Conference,
        kind: SessionKind,
        constraints: AssignmentConstraints,
    ) -> Result<Self, SchedulerError> {
        let idx: Vec<usize> =
            conference.sessions.iter().enumerate().filter(|(_, s)| s.kind == kind).map(|(k, _)| k).collect();
        Self::new(conference, &idx, constraints)
    }

    pub fn conference(&self) -> &Conference {
        &self.conference
    }

    pub fn constraints(&self) -> &AssignmentConstraints {
        &self.constraints
    }

    pub fn session_ids(&self) -> Vec<&str> {
        self.sessions.iter().map(|s| s.id.as_str()).collect()
    }

    fn n(&self) -> usize {
        self.fellows.len()
    }

    fn pair(&self, a: usize, b: usize) -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        lo * self.n() + hi
    }

    fn repeat_weight(&self, class: usize) -> f64 {
        let w = &self.constraints.weights;
        if class == 0 {
            w.repeat_small
        } else {
            w.repeat_other
        }
    }

    fn state_from_groups(&self, groups: Vec<Vec<Vec<usize>>>) -> State {
        let n = self.n();
        let mut loc = vec![vec![(u32::MAX, u32::MAX); n]; groups.len()];
        let mut counts = [vec![0u16; n * n], vec![0u16; n * n]];
        for (s, sess) in groups.iter().enumerate() {
            let class = self.sessions[s].class();
            for (g, members) in sess.iter().enumerate() {
                for (p, &f) in members.iter().enumerate() {
                    loc[s][f] = (g as u32, p as u32);
                    for &other in &members[..p] {
                        counts[class][self.pair(f, other)] += 1;
                    }
                }
            }
        }
        State { groups, loc, counts }
    }

    fn random_state(&self, rng: &mut ChaCha8Rng) -> State {
        let groups = self
            .sessions
            .iter()
            .map(|s| {
                let mut pool = s.attendees.clone();
                pool.shuffle(rng);
                let mut rest = pool.as_slice();
                s.capacity
                    .iter()
                    .map(|&c| {
                        let (head, tail) = rest.split_at(c);
                        rest = tail;
                        head.to_vec()
                    })
                    .collect()
            })
            .collect();
        self.state_from_groups(groups)
    }

    fn full_energy(&self, st: &State) -> f64 {
        let mut e = 0.0;
        for (s, sess) in st.groups.iter().enumerate() {
            let slots = &self.sessions[s];
            let cost = &self.pair_cost[slots.class()];
            for (g, members) in sess.iter().enumerate() {
                for (p, &f) in members.iter().enumerate() {
                    for &other in &members[..p] {
                        e += cost[self.pair(f, other)];
                    }
                    if let Some(tc) = &slots.topic_cost {
                        e += tc[g][f];
                    }
                }
            }
        }
        for class in 0..2 {
            let w = self.repeat_weight(class);
            e += w * st.counts[class].iter().map(|&c| f64::from(c.saturating_sub(1))).sum::<f64>();
        }
        e
    }

    fn swap_delta(&self, st: &State, s: usize, a: usize, b: usize) -> f64 {
        let slots = &self.sessions[s];
        let class = slots.class();
        let cost = &self.pair_cost[class];
        let counts = &st.counts[class];
        let w = self.repeat_weight(class);
        let (ga, _) = st.loc[s][a];
        let (gb, _) = st.loc[s][b];
        let lost = |c: u16| if c >= 2 { w } else { 0.0 };
        let gained = |c: u16| if c >= 1 { w } else { 0.0 };
        let mut d = 0.0;
        for (mover, stayer, group) in [(a, b, ga), (b, a, gb)] {
            for &x in &st.groups[s][group as usize] {
                if x == mover {
                    continue;
                }
                let (out, inn) = (self.pair(mover, x), self.pair(stayer, x));
                d += cost[inn] - cost[out] - lost(counts[out]) + gained(counts[inn]);
            }
        }
        if let Some(tc) = &slots.topic_cost {
            let (ga, gb) = (ga as usize, gb as usize);
            d += tc[gb][a] + tc[ga][b] - tc[ga][a] - tc[gb][b];
        }
        d
    }

    fn apply_swap(&self, st: &mut State, s: usize, a: usize, b: usize) {
        let class = self.sessions[s].class();
        let (ga, pa) = st.loc[s][a];
        let (gb, pb) = st.loc[s][b];
        for (mover, stayer, group) in [(a, b, ga), (b, a, gb)] {
            for i in 0..st.groups[s][group as usize].len() {
                let x = st.groups[s][group as usize][i];
                if x == mover {
                    continue;
                }
                let (out, inn) = (self.pair(mover, x), self.pair(stayer, x));
                st.counts[class][out] -= 1;
                st.counts[class][inn] += 1;
            }
        }
        st.groups[s][ga as usize][pa as usize] = b;
        st.groups[s][gb as usize][pb as usize] = a;
        st.loc[s][a] = (gb, pb);
        st.loc[s][b] = (ga, pa);
    }

    fn propose(&self, st: &State, movable: &[usize], rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
        let s = movable[rng.random_range(0..movable.len() as u64) as usize];
        let attendees = &self.sessions[s].attendees;
        let pick = |rng: &mut ChaCha8Rng| attendees[rng.random_range(0..attendees.len() as u64) as usize];
        let a = pick(rng);
        loop {
            let b = pick(rng);
            if st.loc[s][b].0 != st.loc[s][a].0 {
                return (s, a, b);
            }
        }
    }

    fn canonical_key(&self, groups: &[Vec<Vec<usize>>]) -> Vec<u32> {
        let mut key = Vec::new();
        for sess in groups {
            let mut sorted: Vec<Vec<u32>> = sess
                .iter()
                .map(|g| {
                    let mut g: Vec<u32> = g.iter().map(|&f| f as u32).collect();
                    g.sort_unstable();
                    g
                })
                .collect();
            sorted.sort();
            for g in sorted {
                key.extend(g);
                key.push(u32::MAX);
            }
            key.push(u32::MAX - 1);
        }
        key
    }

    fn to_solution(&self, groups: &[Vec<Vec<usize>>], energy: f64, rank: usize) -> ScheduleSolution {
        let assignment = self
            .sessions
            .iter()
            .zip(groups)
            .map(|(slots, sess)| SessionAssignment {
                session_id: slots.id.clone(),
                groups: sess
                    .iter()
                    .zip(&slots.facilitators)
                    .map(|(members, fixed)| {
                        let mut ids: Vec<String> = members.iter().map(|&f| self.fellows[f].clone()).collect();
                        ids.sort();
                        fixed.iter().cloned().chain(ids).collect()
                    })
                    .collect(),
            })
            .collect();
        ScheduleSolution { assignment, energy, rank }
    }

    /// Internal groups of a solution, or a description of what is wrong.
    fn groups_of(&self, sol: &ScheduleSolution) -> Result<Vec<Vec<Vec<usize>>>, String> {
        let index: HashMap<&str, usize> = self.fellows.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
        let by_id: HashMap<&str, &SessionAssignment> =
            sol.assignment.iter().map(|a| (a.session_id.as_str(), a)).collect();
        let mut out = Vec::with_capacity(self.sessions.len());
        for slots in &self.sessions {
            let a = by_id.get(slots.id.as_str()).ok_or_else(|| format!("session {} missing", slots.id))?;
            if a.groups.len() != slots.capacity.len() {
                return Err(format!("session {}: expected {} groups", slots.id, slots.capacity.len()));
            }
            let mut placed = BTreeSet::new();
            let mut sess = Vec::with_capacity(a.groups.len());
            for ((members, fixed), &cap) in a.groups.iter().zip(&slots.facilitators).zip(&slots.capacity) {
                let mut fellows = Vec::new();
                let mut others = BTreeSet::new();
                for m in members {
                    match index.get(m.as_str()) {
                        Some(&i) => {
                            if !placed.insert(i) {
                                return Err(format!("session {}: {m} placed twice", slots.id));
                            }
                            fellows.push(i);
                        }
                        None => {
                            others.insert(m.as_str());
                        }
                    }
                }
                if fellows.len() != cap || others != fixed.iter().map(String::as_str).collect() {
                    return Err(format!("session {}: group composition differs from the slots", slots.id));
                }
                sess.push(fellows);
            }
            if placed != slots.attendees.iter().copied().collect() {
                return Err(format!("session {}: attendance differs", slots.id));
            }
            out.push(sess);
        }
        Ok(out)
    }

    fn run_chain(&self, schedule: &AnnealSchedule, keep: usize, rng: &mut ChaCha8Rng) -> Vec<KeptState> {
        let mut st = self.random_state(rng);
        let mut energy = self.full_energy(&st);
        let mut keeper = Keeper::new(keep);
        keeper.offer(energy, &st.groups, self);
        let movable: Vec<usize> = (0..self.sessions.len()).filter(|&s| self.sessions[s].movable()).collect();
        if movable.is_empty() {
            return keeper.finish(self);
        }
        let mut temperature = schedule.initial_temperature.unwrap_or_else(|| {
            let uphill: Vec<f64> = (0..schedule.probes)
                .map(|_| {
                    let (s, a, b) = self.propose(&st, &movable, rng);
                    self.swap_delta(&st, s, a, b)
                })
                .filter(|d| *d > 0.0)
                .collect();
            if uphill.is_empty() {
                1.0
            } else {
                let mean = uphill.iter().sum::<f64>() / uphill.len() as f64;
                -mean / schedule.target_acceptance.ln()
            }
        });
        let moves_per_sweep = self.sessions.iter().map(|s| s.attendees.len()).sum::<usize>().max(1);
        for _ in 0..schedule.sweeps {
            for _ in 0..moves_per_sweep {
                let (s, a, b) = self.propose(&st, &movable, rng);
                let d = self.swap_delta(&st, s, a, b);
                if d <= 0.0 || rng.random::<f64>() < (-d / temperature).exp() {
                    self.apply_swap(&mut st, s, a, b);
                    energy += d;
                    keeper.offer(energy, &st.groups, self);
                }
            }
            temperature *= schedule.cooling;
        }
        keeper.finish(self)
    }
}

#[derive(Debug, Clone)]
struct State {
    groups: Vec<Vec<Vec<usize>>>,
    /// `[session][fellow]` → (group, position).
    loc: Vec<Vec<(u32, u32)>>,
    /// Pair meeting counts for small groups (0) and other sessions (1).
    counts: [Vec<u16>; 2],
}

/// Energy, canonical key and group layout of a kept annealing state.
type KeptState = (f64, Vec<u32>, Vec<Vec<Vec<usize>>>);

/// The best distinct states seen so far.
struct Keeper {
    cap: usize,
    items: Vec<KeptState>,
    keys: HashSet<Vec<u32>>,
}

impl Keeper {
    fn new(cap: usize) -> Self {
        Self { cap, items: Vec::new(), keys: HashSet::new() }
    }

    fn worst(&self) -> Option<usize> {
        (0..self.items.len()).max_by(|&i, &j| self.items[i].0.total_cmp(&self.items[j].0))
    }

    fn offer(&mut self, energy: f64, groups: &[Vec<Vec<usize>>], problem: &AssignmentProblem) {
        if self.cap == 0 {
            return;
        }
        if self.items.len() == self.cap {
            let w = self.worst().expect("keeper is full");
            if energy >= self.items[w].0 {
                return;
            }
        }
        let key = problem.canonical_key(groups);
        if self.keys.contains(&key) {
            return;
        }
        self.keys.insert(key.clone());
        self.items.push((energy, key, groups.to_vec()));
        if self.items.len() > self.cap {
            let w = self.worst().expect("keeper is non-empty");
            let (_, key, _) = self.items.swap_remove(w);
            self.keys.remove(&key);
        }
    }

    /// Items with exact energies, best first.
    fn finish(self, problem: &AssignmentProblem) -> Vec<KeptState> {
        let mut items: Vec<_> = self
            .items
            .into_iter()
            .map(|(_, key, groups)| {
                let e = problem.full_energy(&problem.state_from_groups(groups.clone()));
                (e, key, groups)
            })
            .collect();
        items.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        items
    }
}

fn topic_cost(c: &Conference, k: &AssignmentConstraints, fellow: &str, topic: &str) -> f64 {
    let rating = c.participant(fellow).and_then(|p| p.topic_interests.as_ref()).and_then(|m| m.get(topic).copied());
    match rating {
        Some(r) if r < k.min_interest => k.weights.low_interest,
        Some(r) if r >= k.reward_interest => -k.weights.interest_reward,
        _ => 0.0,
    }
}

fn pair_costs(c: &Conference, k: &AssignmentConstraints, fellows: &[String]) -> [Vec<f64>; 2] {
    let n = fellows.len();
    let attributes: Vec<String> = match &k.diversity_attributes {
        Some(a) => a.clone(),
        None => fellows
            .iter()
            .filter_map(|f| c.participant(f))
            .flat_map(|p| p.attributes.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let values: Vec<Vec<Option<&String>>> = fellows
        .iter()
        .map(|f| {
            let p = c.participant(f);
            attributes.iter().map(|a| p.and_then(|p| p.attributes.get(a))).collect()
        })
        .collect();
    let mut small = vec![0.0; n * n];
    let mut other = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let same = values[i].iter().zip(&values[j]).filter(|(x, y)| x.is_some() && x == y).count();
            let h = k.weights.homogeneity * same as f64;
            let known = c.prior_knowledge.get(&fellows[i], &fellows[j]) > k.k0_ceiling;
            other[i * n + j] = h;
            small[i * n + j] = h + if known { k.weights.prior_knowledge } else { 0.0 };
        }
    }
    [small, other]
}

/// Energy of a solution; `+∞` when it does not fit the problem's slots.
pub fn energy(solution: &ScheduleSolution, problem: &AssignmentProblem) -> f64 {
    match problem.groups_of(solution) {
        Ok(groups) => problem.full_energy(&problem.state_from_groups(groups)),
        Err(_) => f64::INFINITY,
    }
}

/// Checks that a solution fits the problem's slots.
pub fn check_solution(solution: &ScheduleSolution, problem: &AssignmentProblem) -> Result<(), SchedulerError> {
    problem.groups_of(solution).map(|_| ()).map_err(SchedulerError::Structure)
}

/// One annealing chain; returns up to `n_solutions` best distinct solutions
/// seen, ranked by energy.
pub fn anneal(
    problem: &AssignmentProblem,
    schedule: &AnnealSchedule,
    n_solutions: usize,
    seed: u64,
) -> Vec<ScheduleSolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    problem
        .run_chain(schedule, n_solutions, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(rank, (e, _, groups))| problem.to_solution(&groups, e, rank))
        .collect()
}

/// Independent chains (chain `i` uses stream `i` of `seed`), each
/// contributing its best state. Duplicates are merged, so fewer than
/// `n_chains` solutions may come back.
pub fn anneal_chains(
    problem: &AssignmentProblem,
    schedule: &AnnealSchedule,
    n_chains: usize,
    seed: u64,
) -> Vec<ScheduleSolution> {
    let bests: Vec<_> = (0..n_chains as u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            problem.run_chain(schedule, 1, &mut rng).into_iter().next()
        })
        .collect();
    let mut seen = HashSet::new();
    let mut unique: Vec<_> = bests.into_iter().filter(|b| seen.insert(b.1.clone())).collect();
    unique.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    unique.into_iter().enumerate().map(|(rank, (e, _, groups))| problem.to_solution(&groups, e, rank)).collect()
}

/// Copy of `c` with the solution's groups installed.
pub fn apply_solution(c: &Conference, solution: &ScheduleSolution) -> Result<Conference, SchedulerError> {
    let mut out = c.clone();
    for a in &solution.assignment {
        let s = out
            .sessions
            .iter_mut()
            .find(|s| s.id == a.session_id)
            .ok_or_else(|| SchedulerError::UnknownSession(a.session_id.clone()))?;
        if s.group_topics.as_ref().is_some_and(|t| t.len() != a.groups.len()) {
            return Err(SchedulerError::Structure(format!("session {}: group count changed", a.session_id)));
        }
        s.groups = a.groups.clone();
    }
    Ok(out)
}

/// The realised groups of the given sessions, as a solution.
pub fn actual_solution(c: &Conference, session_ids: &[&str]) -> Result<ScheduleSolution, SchedulerError> {
    let assignment = session_ids
        .iter()
        .map(|id| {
            c.sessions
                .iter()
                .find(|s| s.id == *id)
                .map(|s| SessionAssignment { session_id: s.id.clone(), groups: s.groups.clone() })
                .ok_or_else(|| SchedulerError::UnknownSession((*id).to_owned()))
        })
        .collect::<Result<_, _>>()?;
    Ok(ScheduleSolution { assignment, energy: f64::NAN, rank: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationResult {
    pub discussion: usize,
    pub small_group: usize,
    /// Mean `I_tot` of the collaborating pairs under this schedule.
    pub i_bar: f64,
    /// Small groups identical (as partitions) to the realised ones.
    pub shares_small_groups: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualReport {
    pub n_collaborating_pairs: usize,
    pub i_bar_actual: f64,
    /// Index `d * n_small + s`.
    pub combinations: Vec<CombinationResult>,
    /// `None` when every difference is zero.
    pub wilcoxon: Option<TestReport>,
    pub fraction_actual_greater: f64,
}

fn partition_key(groups: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut key: Vec<Vec<String>> = groups
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.sort();
            g
        })
        .collect();
    key.sort();
    key
}

/// Mean effective minutes over `pairs` contributed by the sessions of
/// `sol`.
fn mean_contribution(
    sol: &ScheduleSolution,
    durations: &HashMap<&str, f64>,
    pairs: &[PairId],
) -> Result<f64, SchedulerError> {
    let mut total = 0.0;
    for a in &sol.assignment {
        let t = *durations
            .get(a.session_id.as_str())
            .ok_or_else(|| SchedulerError::UnknownSession(a.session_id.clone()))?;
        let lookup: HashMap<&str, usize> =
            a.groups.iter().enumerate().flat_map(|(g, m)| m.iter().map(move |id| (id.as_str(), g))).collect();
        for p in pairs {
            if let (Some(&ga), Some(&gb)) = (lookup.get(p.first.as_str()), lookup.get(p.second.as_str())) {
                if ga == gb {
                    total += 2.0 * t / a.groups[ga].len() as f64;
                }
            }
        }
    }
    Ok(total / pairs.len() as f64)
}

fn covered(solutions: &[ScheduleSolution]) -> BTreeSet<String> {
    solutions.iter().flat_map(|s| s.assignment.iter().map(|a| a.session_id.clone())).collect()
}

/// Compares the collaborating pairs' mean interaction under the realised
/// schedule with every discussion × small-group combination.
///
/// `I_tot` is additive over sessions, so each combination's mean is the
/// untouched sessions' part plus one term per solution list.
pub fn counterfactual_analysis(
    c: &Conference,
    discussion: &[ScheduleSolution],
    small_group: &[ScheduleSolution],
) -> Result<CounterfactualReport, SchedulerError> {
    if discussion.is_empty() || small_group.is_empty() {
        return Err(SchedulerError::NoSolutions);
    }
    let pairs: Vec<PairId> = eligible_pairs(c).into_iter().filter(|o| o.collaborated).map(|o| o.pair).collect();
    if pairs.is_empty() {
        return Err(SchedulerError::NoCollaborators);
    }
    let (disc_ids, small_ids) = (covered(discussion), covered(small_group));
    if let Some(id) = disc_ids.intersection(&small_ids).next() {
        return Err(SchedulerError::Structure(format!("session {id} appears in both solution lists")));
    }
    let durations: HashMap<&str, f64> = c.sessions.iter().map(|s| (s.id.as_str(), s.duration() as f64)).collect();

    let all_ids: Vec<&str> = c.sessions.iter().map(|s| s.id.as_str()).collect();
    let untouched: Vec<&str> =
        all_ids.iter().copied().filter(|id| !disc_ids.contains(*id) && !small_ids.contains(*id)).collect();
    let base = mean_contribution(&actual_solution(c, &untouched)?, &durations, &pairs)?;
    let disc_actual = actual_solution(c, &disc_ids.iter().map(String::as_str).collect::<Vec<_>>())?;
    let small_ids_vec: Vec<&str> = small_ids.iter().map(String::as_str).collect();
    let small_actual = actual_solution(c, &small_ids_vec)?;
    let i_bar_actual = base
        + mean_contribution(&disc_actual, &durations, &pairs)?
        + mean_contribution(&small_actual, &durations, &pairs)?;

    let disc_terms =
        discussion.par_iter().map(|d| mean_contribution(d, &durations, &pairs)).collect::<Result<Vec<_>, _>>()?;
    let small_terms =
        small_group.par_iter().map(|s| mean_contribution(s, &durations, &pairs)).collect::<Result<Vec<_>, _>>()?;
    let actual_keys: HashMap<&str, Vec<Vec<String>>> =
        small_actual.assignment.iter().map(|a| (a.session_id.as_str(), partition_key(&a.groups))).collect();
    let shares: Vec<bool> = small_group
        .iter()
        .map(|s| {
            s.assignment.len() == actual_keys.len()
                && s.assignment
                    .iter()
                    .all(|a| actual_keys.get(a.session_id.as_str()) == Some(&partition_key(&a.groups)))
        })
        .collect();

    let mut combinations = Vec::with_capacity(discussion.len() * small_group.len());
    for (d, dt) in disc_terms.iter().enumerate() {
        for (s, st) in small_terms.iter().enumerate() {
            combinations.push(CombinationResult {
                discussion: d,
                small_group: s,
                i_bar: base + dt + st,
                shares_small_groups: shares[s],
            });
        }
    }
    let differences: Vec<f64> = combinations.iter().map(|r| i_bar_actual - r.i_bar).collect();
    let greater = differences.iter().filter(|d| **d > 0.0).count();
    Ok(CounterfactualReport {
        n_collaborating_pairs: pairs.len(),
        i_bar_actual,
        fraction_actual_greater: greater as f64 / differences.len() as f64,
        wilcoxon: wilcoxon_signed_rank(&differences, Alternative::TwoSided).ok(),
        combinations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conference::{Participant, ProposalTeam, Session};
    use crate::interaction::ScheduleIndex;

    fn conference(n: usize, sessions: Vec<(SessionKind, Vec<Vec<usize>>)>) -> Conference {
        let ids: Vec<String> = (0..n).map(|i| format!("f{i:02}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let mut c = crate::conference::fixtures::tiny(&refs);
        c.sessions = sessions
            .into_iter()
            .enumerate()
            .map(|(k, (kind, groups))| Session {
                id: format!("s{k}"),
                kind,
                start: 60 + 100 * k as i64,
                end: 90 + 100 * k as i64,
                groups: groups.iter().map(|g| g.iter().map(|&i| ids[i].clone()).collect()).collect(),
                group_topics: None,
            })
            .collect();
        c.t_collab = 100 * (c.sessions.len() as i64 + 1);
        c
    }

    fn only_repeats() -> AssignmentConstraints {
        AssignmentConstraints {
            weights: EnergyWeights {
                repeat_small: 100.0,
                repeat_other: 1.0,
                prior_knowledge: 0.0,
                low_interest: 0.0,
                homogeneity: 0.0,
                interest_reward: 0.0,
            },
            ..Default::default()
        }
    }

    fn current(problem: &AssignmentProblem) -> ScheduleSolution {
        actual_solution(problem.conference(), &problem.session_ids()).unwrap()
    }

    #[test]
    fn repeated_small_group_pairs_are_penalised() {
        let c = conference(
            6,
            vec![
                (SessionKind::SmallGroup, vec![vec![0, 1, 2], vec![3, 4, 5]]),
                (SessionKind::SmallGroup, vec![vec![0, 1, 3], vec![2, 4, 5]]),
            ],
        );
        let p = AssignmentProblem::for_kind(c, SessionKind::SmallGroup, only_repeats()).unwrap();
        assert_eq!(energy(&current(&p), &p), 200.0);
    }

    #[test]
    fn homogeneous_group_penalty() {
        let mut c = conference(4, vec![(SessionKind::Other, vec![vec![0, 1, 2, 3]])]);
        for p in &mut c.participants {
            p.attributes.insert("discipline".into(), "physics".into());
        }
        let mut k = only_repeats();
        k.weights.homogeneity = 2.5;
        let p = AssignmentProblem::for_kind(c, SessionKind::Other, k).unwrap();
        assert_eq!(energy(&current(&p), &p), 6.0 * 2.5);
    }

    #[test]
    fn soft_terms_only_when_hard_rules_hold() {
        let mut c = conference(8, vec![(SessionKind::Discussion, vec![vec![0, 1, 2, 3, 4, 5, 6, 7]])]);
        c.sessions[0].group_topics = Some(vec!["t".into()]);
        for (i, p) in c.participants.iter_mut().enumerate() {
            p.topic_interests = Some([("t".to_string(), if i < 2 { 5 } else { 3 })].into());
        }
        let p = AssignmentProblem::for_kind(c, SessionKind::Discussion, AssignmentConstraints::default()).unwrap();
        assert_eq!(energy(&current(&p), &p), -2.0 * 0.5);
    }

    #[test]
    fn low_interest_and_prior_knowledge_penalties() {
        let mut c = conference(
            8,
            vec![
                (SessionKind::Discussion, vec![vec![0, 1, 2, 3, 4, 5, 6, 7]]),
                (SessionKind::SmallGroup, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]),
            ],
        );
        c.sessions[0].group_topics = Some(vec!["t".into()]);
        c.participants[0].topic_interests = Some([("t".to_string(), 2)].into());
        c.prior_knowledge.set("f00", "f01", 2);
        let w = EnergyWeights::default();
        let d =
            AssignmentProblem::for_kind(c.clone(), SessionKind::Discussion, AssignmentConstraints::default()).unwrap();
        assert_eq!(energy(&current(&d), &d), w.low_interest);
        let s = AssignmentProblem::for_kind(c, SessionKind::SmallGroup, AssignmentConstraints::default()).unwrap();
        assert_eq!(energy(&current(&s), &s), w.prior_knowledge);
    }

    #[test]
    fn malformed_solution_has_infinite_energy() {
        let c = conference(6, vec![(SessionKind::SmallGroup, vec![vec![0, 1, 2], vec![3, 4, 5]])]);
        let p = AssignmentProblem::for_kind(c, SessionKind::SmallGroup, only_repeats()).unwrap();
        let mut sol = current(&p);
        sol.assignment[0].groups[1][0] = "f00".into();
        assert_eq!(energy(&sol, &p), f64::INFINITY);
        sol.assignment.clear();
        assert_eq!(energy(&sol, &p), f64::INFINITY);
    }

    #[test]
    fn size_bounds_enforced() {
        let c = conference(5, vec![(SessionKind::Discussion, vec![vec![0, 1, 2, 3, 4]])]);
        let err =
            AssignmentProblem::for_kind(c, SessionKind::Discussion, AssignmentConstraints::default()).unwrap_err();
        assert!(matches!(err, SchedulerError::InfeasibleSizes { .. }));
    }

    /// All ways to split four fellows into two unordered pairs.
    fn pairings() -> Vec<Vec<Vec<usize>>> {
        vec![vec![vec![0, 1], vec![2, 3]], vec![vec![0, 2], vec![1, 3]], vec![vec![0, 3], vec![1, 2]]]
    }

    #[test]
    fn perfect_rotation_matches_brute_force() {
        let base = conference(4, vec![(SessionKind::Other, pairings()[0].clone()); 2]);
        let p = AssignmentProblem::for_kind(base.clone(), SessionKind::Other, only_repeats()).unwrap();
        let mut brute = f64::INFINITY;
        for a in pairings() {
            for b in pairings() {
                let c = conference(4, vec![(SessionKind::Other, a.clone()), (SessionKind::Other, b)]);
                let q = AssignmentProblem::for_kind(c, SessionKind::Other, only_repeats()).unwrap();
                brute = brute.min(energy(&current(&q), &q));
            }
        }
        assert_eq!(brute, 0.0);
        let best = anneal(&p, &AnnealSchedule { sweeps: 50, ..Default::default() }, 1, 3);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].energy, brute);
        assert_eq!(energy(&best[0], &p), brute);
    }

    fn rotation_problem() -> AssignmentProblem {
        let groups: Vec<Vec<usize>> = (0..6).map(|g| (4 * g..4 * g + 4).collect()).collect();
        let c = conference(24, vec![(SessionKind::SmallGroup, groups); 3]);
        AssignmentProblem::for_kind(c, SessionKind::SmallGroup, only_repeats()).unwrap()
    }

    #[test]
    fn anneal_removes_repeats() {
        let p = rotation_problem();
        assert_eq!(energy(&current(&p), &p), 100.0 * 6.0 * 6.0 * 2.0);
        let sols = anneal(&p, &AnnealSchedule::default(), 5, 11);
        assert_eq!(sols[0].energy, 0.0);
    }

    #[test]
    fn ranked_distinct_valid_and_deterministic() {
        let p = rotation_problem();
        let schedule = AnnealSchedule { sweeps: 100, ..Default::default() };
        let sols = anneal(&p, &schedule, 20, 5);
        assert_eq!(sols.len(), 20);
        assert!(sols.windows(2).all(|w| w[0].energy <= w[1].energy));
        let keys: HashSet<_> = sols.iter().map(|s| format!("{:?}", partition_key(&s.assignment[0].groups))).collect();
        assert!(keys.len() > 1);
        for (rank, s) in sols.iter().enumerate() {
            assert_eq!(s.rank, rank);
            check_solution(s, &p).unwrap();
            assert_eq!(energy(s, &p), s.energy);
        }
        assert_eq!(sols, anneal(&p, &schedule, 20, 5));
        let chains = anneal_chains(&p, &schedule, 4, 5);
        assert!(!chains.is_empty() && chains.len() <= 4);
        assert_eq!(chains, anneal_chains(&p, &schedule, 4, 5));
    }

    #[test]
    fn incremental_energy_matches_full_recomputation() {
        let mut c = conference(
            16,
            vec![
                (SessionKind::Discussion, vec![(0..8).collect(), (8..16).collect()]),
                (SessionKind::SmallGroup, (0..4).map(|g| (4 * g..4 * g + 4).collect()).collect()),
                (SessionKind::SmallGroup, (0..4).map(|g| (4 * g..4 * g + 4).collect()).collect()),
            ],
        );
        c.sessions[0].group_topics = Some(vec!["a".into(), "b".into()]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in &mut c.participants {
            p.attributes.insert("field".into(), ["bio", "chem", "phys"][rng.random_range(0..3usize)].into());
            p.topic_interests = Some(
                [("a".to_string(), rng.random_range(1..=5u8)), ("b".to_string(), rng.random_range(1..=5u8))].into(),
            );
        }
        c.prior_knowledge.set("f00", "f05", 1);
        c.prior_knowledge.set("f03", "f09", 3);
        let p = AssignmentProblem::new(c, &[0, 1, 2], AssignmentConstraints::default()).unwrap();
        let mut st = p.random_state(&mut rng);
        let mut e = p.full_energy(&st);
        let movable: Vec<usize> = (0..3).collect();
        for _ in 0..2000 {
            let (s, a, b) = p.propose(&st, &movable, &mut rng);
            e += p.swap_delta(&st, s, a, b);
            p.apply_swap(&mut st, s, a, b);
            assert!((e - p.full_energy(&st)).abs() < 1e-9);
        }
    }

    fn with_collaborations(mut c: Conference, pairs: &[(usize, usize)]) -> Conference {
        c.proposal_teams = pairs
            .iter()
            .map(|&(a, b)| ProposalTeam { members: vec![format!("f{a:02}"), format!("f{b:02}")], funded: false })
            .collect();
        c
    }

    fn two_kind_conference() -> Conference {
        let c = conference(
            8,
            vec![
                (SessionKind::Discussion, vec![(0..8).collect()]),
                (SessionKind::SmallGroup, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]),
                (SessionKind::SmallGroup, vec![vec![0, 4, 2, 6], vec![1, 5, 3, 7]]),
            ],
        );
        with_collaborations(c, &[(0, 1), (0, 2)])
    }

    #[test]
    fn identical_counterfactuals_have_zero_difference() {
        let c = two_kind_conference();
        let d = actual_solution(&c, &["s0"]).unwrap();
        let s = actual_solution(&c, &["s1", "s2"]).unwrap();
        let r = counterfactual_analysis(&c, &[d.clone(), d], &[s.clone(), s]).unwrap();
        assert_eq!(r.combinations.len(), 4);
        assert!(r.combinations.iter().all(|x| x.i_bar == r.i_bar_actual && x.shares_small_groups));
        assert_eq!(r.wilcoxon, None);
        assert_eq!(r.fraction_actual_greater, 0.0);
    }

    #[test]
    fn swap_of_bystanders_changes_nothing() {
        let c = two_kind_conference();
        let d = actual_solution(&c, &["s0"]).unwrap();
        let mut s = actual_solution(&c, &["s1", "s2"]).unwrap();
        // f03 and f07 trade small groups in s1; neither collaborated.
        s.assignment[0].groups = vec![
            ["f00", "f01", "f02", "f07"].map(String::from).to_vec(),
            ["f04", "f05", "f06", "f03"].map(String::from).to_vec(),
        ];
        let r = counterfactual_analysis(&c, &[d], &[s]).unwrap();
        assert_eq!(r.combinations[0].i_bar, r.i_bar_actual);
        assert!(!r.combinations[0].shares_small_groups);
    }

    #[test]
    fn additive_decomposition_matches_rebuilt_conference() {
        let c = two_kind_conference();
        let disc = AssignmentProblem::for_kind(c.clone(), SessionKind::Discussion, only_repeats()).unwrap();
        let small = AssignmentProblem::for_kind(c.clone(), SessionKind::SmallGroup, only_repeats()).unwrap();
        let ds = vec![current(&disc)];
        let ss = anneal(&small, &AnnealSchedule { sweeps: 20, ..Default::default() }, 6, 2);
        let r = counterfactual_analysis(&c, &ds, &ss).unwrap();
        let collab: Vec<PairId> = eligible_pairs(&c).into_iter().filter(|o| o.collaborated).map(|o| o.pair).collect();
        for combo in &r.combinations {
            let rebuilt =
                apply_solution(&apply_solution(&c, &ds[combo.discussion]).unwrap(), &ss[combo.small_group]).unwrap();
            let index = ScheduleIndex::new(&rebuilt);
            let mean =
                collab.iter().map(|p| index.total_effective_interaction(p).unwrap()).sum::<f64>() / collab.len() as f64;
            assert!((mean - combo.i_bar).abs() < 1e-12);
        }
        let index = ScheduleIndex::new(&c);
        let actual = collab.iter().map(|p| index.total_effective_interaction(p).unwrap()).sum::<f64>() / 2.0;
        assert!((actual - r.i_bar_actual).abs() < 1e-12);
    }

    #[test]
    fn counterfactual_requires_collaborators() {
        let mut c = two_kind_conference();
        c.proposal_teams.clear();
        let d = actual_solution(&c, &["s0"]).unwrap();
        let s = actual_solution(&c, &["s1"]).unwrap();
        assert_eq!(counterfactual_analysis(&c, &[d], &[s]), Err(SchedulerError::NoCollaborators));
    }

    #[test]
    fn facilitators_stay_put() {
        let mut c = conference(10, vec![(SessionKind::Discussion, vec![(0..10).collect()])]);
        c.participants.push(Participant::facilitator("fac"));
        c.sessions[0].groups[0].push("fac".into());
        c.sessions[0].groups[0].truncate(11);
        let p = AssignmentProblem::for_kind(c, SessionKind::Discussion, AssignmentConstraints::default()).unwrap();
        let sols = anneal(&p, &AnnealSchedule { sweeps: 5, ..Default::default() }, 2, 0);
        assert!(sols.iter().all(|s| s.assignment[0].groups[0][0] == "fac"));
    }
}
