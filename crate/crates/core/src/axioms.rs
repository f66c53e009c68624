//! Exhaustive oracles for fairness, efficiency and incentive properties.
//!
//! Officer indices double as priority: officer `i` precedes officer `j` iff
//! `i < j`. Every oracle enumerates within an explicit cap and reports
//! [`Error::CapExceeded`] instead of sampling.

use itertools::Itertools;
use serde::Serialize;

use crate::constraints::{CompiledBounds, UpperBoundSystem};
use crate::error::{Error, Result};
use crate::ids::{OfficerId, StateId};
use crate::mechanisms::{DynamicRun, RunTrace, Step};
use crate::problem::{Allocation, Problem};
use crate::relations::{truthful_idx, Message, PreferenceOrder};
use crate::spaces::MessageSpace;

/// Default cap on the number of message profiles a mechanism may have.
pub const DEFAULT_PROFILE_CAP: u128 = 1_000_000;
/// Default node budget for domination searches.
pub const DEFAULT_SEARCH_BUDGET: u64 = 50_000_000;

/// Why an allocation is visibly unfair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FairnessWitness {
    /// `officer` precedes `envied` and reports `envied`'s state above their own.
    Envy {
        officer: OfficerId,
        envied: OfficerId,
        state: StateId,
    },
    /// `state` has spare capacity and `officer` reports it above their own.
    Waste { officer: OfficerId, state: StateId },
}

impl FairnessWitness {
    /// Re-evaluates the witness against the allocation and profile.
    pub fn replay(&self, a: &Allocation, m: &[Message], problem: &Problem) -> Result<bool> {
        let slots = problem.allocation_indices(a)?;
        let uni = problem.universe();
        Ok(match self {
            FairnessWitness::Envy { officer, envied, state } => {
                let i = problem.officer_index(officer.as_str())?;
                let j = problem.officer_index(envied.as_str())?;
                let s = uni.index_of(state.as_str())?;
                i < j && slots[j] == s && slots[i] != s && m[i].prefers(s, slots[i])
            }
            FairnessWitness::Waste { officer, state } => {
                let i = problem.officer_index(officer.as_str())?;
                let s = uni.index_of(state.as_str())?;
                problem.spare(&slots).contains(s) && m[i].prefers(s, slots[i])
            }
        })
    }
}

fn check_profile(problem: &Problem, m: &[Message]) -> Result<()> {
    if m.len() != problem.n() {
        return Err(Error::ProfileLength {
            expected: problem.n(),
            got: m.len(),
        });
    }
    if m.iter().any(|x| x.universe() != problem.universe()) {
        return Err(Error::UniverseMismatch);
    }
    Ok(())
}

fn check_prefs(problem: &Problem, p: &[PreferenceOrder]) -> Result<()> {
    if p.len() != problem.n() {
        return Err(Error::ProfileLength {
            expected: problem.n(),
            got: p.len(),
        });
    }
    if p.iter().any(|x| x.universe() != problem.universe()) {
        return Err(Error::UniverseMismatch);
    }
    Ok(())
}

/// Index form of [`visibly_unfair_witness`]: `(i, Ok(j))` for envy of `j`,
/// `(i, Err(s))` for waste of `s`.
pub fn unfair_slots(
    problem: &Problem,
    slots: &[usize],
    m: &[Message],
) -> Option<(usize, std::result::Result<usize, usize>)> {
    let spare = problem.spare(slots);
    for (i, mi) in m.iter().enumerate() {
        let ai = slots[i];
        let above = mi.above(ai);
        if above.is_empty() {
            continue;
        }
        if let Some(j) = (i + 1..slots.len()).find(|&j| slots[j] != ai && above.contains(slots[j])) {
            return Some((i, Ok(j)));
        }
        if let Some(s) = above.intersection(spare).first() {
            return Some((i, Err(s)));
        }
    }
    None
}

/// An envy or waste witness, or `None` when `a` is visibly fair under `m`.
pub fn visibly_unfair_witness(a: &Allocation, m: &[Message], problem: &Problem) -> Result<Option<FairnessWitness>> {
    check_profile(problem, m)?;
    let slots = problem.allocation_indices(a)?;
    problem.check_feasible(&slots)?;
    let officer = |k: usize| problem.officers()[k].id.clone();
    let uni = problem.universe();
    Ok(unfair_slots(problem, &slots, m).map(|(i, w)| match w {
        Ok(j) => FairnessWitness::Envy {
            officer: officer(i),
            envied: officer(j),
            state: uni.id(slots[j]).clone(),
        },
        Err(s) => FairnessWitness::Waste {
            officer: officer(i),
            state: uni.id(s).clone(),
        },
    }))
}

/// An allocation that dominates the audited one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DominationWitness {
    pub alternative: Allocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Efficiency {
    Efficient,
    Dominated(DominationWitness),
}

impl Efficiency {
    pub fn is_efficient(&self) -> bool {
        matches!(self, Efficiency::Efficient)
    }

    pub fn witness(&self) -> Option<&DominationWitness> {
        match self {
            Efficiency::Efficient => None,
            Efficiency::Dominated(w) => Some(w),
        }
    }
}

/// Depth-first enumeration of feasible allocations in which every officer
/// either keeps their state or moves to one `better` than it. Returns the
/// first such allocation other than `slots`, in lexicographic state order.
pub fn find_dominating(
    problem: &Problem,
    slots: &[usize],
    better: &dyn Fn(usize, usize, usize) -> bool,
    bounds: Option<&CompiledBounds>,
    budget: u64,
) -> Result<Option<Vec<usize>>> {
    let n = problem.n();
    let cands: Vec<Vec<usize>> = (0..n)
        .map(|k| {
            (0..problem.m())
                .filter(|&s| s == slots[k] || better(k, s, slots[k]))
                .collect()
        })
        .collect();
    struct Search<'a> {
        problem: &'a Problem,
        slots: &'a [usize],
        cands: Vec<Vec<usize>>,
        bounds: Option<&'a CompiledBounds>,
        occ: Vec<usize>,
        counts: Vec<usize>,
        cur: Vec<usize>,
        nodes: u64,
        budget: u64,
    }
    impl Search<'_> {
        fn go(&mut self, k: usize, moved: bool) -> Result<bool> {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::CapExceeded {
                    count: self.nodes as u128,
                    cap: self.budget as u128,
                });
            }
            if k == self.slots.len() {
                return Ok(moved);
            }
            for ci in 0..self.cands[k].len() {
                let s = self.cands[k][ci];
                if self.occ[s] >= self.problem.capacity(s) {
                    continue;
                }
                if let Some(b) = self.bounds {
                    let over = (0..b.len())
                        .any(|h| b.covers[h][k] && b.states[h].contains(s) && self.counts[h] + 1 > b.ceilings[h]);
                    if over {
                        continue;
                    }
                }
                self.occ[s] += 1;
                if let Some(b) = self.bounds {
                    for h in 0..b.len() {
                        if b.covers[h][k] && b.states[h].contains(s) {
                            self.counts[h] += 1;
                        }
                    }
                }
                self.cur.push(s);
                let found = self.go(k + 1, moved || s != self.slots[k])?;
                if found {
                    return Ok(true);
                }
                self.cur.pop();
                if let Some(b) = self.bounds {
                    for h in 0..b.len() {
                        if b.covers[h][k] && b.states[h].contains(s) {
                            self.counts[h] -= 1;
                        }
                    }
                }
                self.occ[s] -= 1;
            }
            Ok(false)
        }
    }
    let mut search = Search {
        problem,
        slots,
        cands,
        bounds,
        occ: vec![0; problem.m()],
        counts: vec![0; bounds.map_or(0, CompiledBounds::len)],
        cur: Vec::with_capacity(n),
        nodes: 0,
        budget,
    };
    Ok(if search.go(0, false)? { Some(search.cur) } else { None })
}

fn verdict(problem: &Problem, found: Option<Vec<usize>>) -> Efficiency {
    match found {
        None => Efficiency::Efficient,
        Some(alt) => Efficiency::Dominated(DominationWitness {
            alternative: problem.allocation(&alt),
        }),
    }
}

/// Visible efficiency: no feasible `a'` in which every officer who moves
/// reports the new state above the old one.
pub fn visibly_efficient(a: &Allocation, m: &[Message], problem: &Problem) -> Result<Efficiency> {
    visibly_efficient_with_budget(a, m, problem, DEFAULT_SEARCH_BUDGET)
}

pub fn visibly_efficient_with_budget(
    a: &Allocation,
    m: &[Message],
    problem: &Problem,
    budget: u64,
) -> Result<Efficiency> {
    check_profile(problem, m)?;
    let slots = problem.allocation_indices(a)?;
    problem.check_feasible(&slots)?;
    let better = |k: usize, new: usize, old: usize| m[k].prefers(new, old);
    Ok(verdict(
        problem,
        find_dominating(problem, &slots, &better, None, budget)?,
    ))
}

/// Pareto efficiency against true preferences.
pub fn pareto_efficient(a: &Allocation, p: &[PreferenceOrder], problem: &Problem) -> Result<Efficiency> {
    check_prefs(problem, p)?;
    let slots = problem.allocation_indices(a)?;
    problem.check_feasible(&slots)?;
    let better = |k: usize, new: usize, old: usize| p[k].prefers(new, old);
    Ok(verdict(
        problem,
        find_dominating(problem, &slots, &better, None, DEFAULT_SEARCH_BUDGET)?,
    ))
}

/// Pareto efficiency among allocations that respect `h`.
pub fn constrained_pareto_efficient(
    a: &Allocation,
    p: &[PreferenceOrder],
    h: &UpperBoundSystem,
    problem: &Problem,
) -> Result<Efficiency> {
    check_prefs(problem, p)?;
    let slots = problem.allocation_indices(a)?;
    problem.check_feasible(&slots)?;
    let compiled = CompiledBounds::new(problem, h)?;
    let counts = compiled.counts(&slots);
    if let Some(bound) = (0..compiled.len()).find(|&b| counts[b] > compiled.ceilings[b]) {
        return Err(Error::BoundViolated {
            bound,
            count: counts[bound],
            ceiling: compiled.ceilings[bound],
        });
    }
    let better = |k: usize, new: usize, old: usize| p[k].prefers(new, old);
    Ok(verdict(
        problem,
        find_dominating(problem, &slots, &better, Some(&compiled), DEFAULT_SEARCH_BUDGET)?,
    ))
}

/// Rebuilds `S^1, ..., S^n` from `a` and returns the trace iff every `a_k`
/// is maximal in `S^k` under `m_k`.
pub fn reconstruct_m_queue(a: &Allocation, m: &[Message], problem: &Problem) -> Result<Option<RunTrace>> {
    check_profile(problem, m)?;
    let slots = problem.allocation_indices(a)?;
    problem.check_feasible(&slots)?;
    let mut trace = RunTrace::new("reconstructed", problem);
    let mut occ = vec![0usize; problem.m()];
    let mut avail = problem.universe().full();
    for (k, (&s, mk)) in slots.iter().zip(m).enumerate() {
        let g = mk.maximal(avail);
        if !g.contains(s) {
            return Ok(None);
        }
        trace.steps.push(Step {
            officer: k,
            available: avail,
            maximal: g,
            zone: None,
            assigned: s,
            message: mk.clone(),
            binding: Default::default(),
            z2: None,
        });
        occ[s] += 1;
        if occ[s] == problem.capacity(s) {
            avail.remove(s);
        }
    }
    Ok(Some(trace))
}

/// A mechanism given by its outcome on every profile of a product message
/// space. Profiles are indexed in mixed radix with officer 0 slowest.
#[derive(Debug, Clone)]
pub struct MechanismUnderTest {
    name: String,
    problem: Problem,
    spaces: Vec<Vec<Message>>,
    strides: Vec<usize>,
    outcomes: Vec<Vec<usize>>,
}

impl MechanismUnderTest {
    /// Evaluates `outcome` on every profile of the product of `spaces`.
    pub fn new<F>(
        name: impl Into<String>,
        problem: &Problem,
        spaces: Vec<Vec<Message>>,
        cap: u128,
        mut outcome: F,
    ) -> Result<Self>
    where
        F: FnMut(&[Message]) -> Result<Vec<usize>>,
    {
        if spaces.len() != problem.n() {
            return Err(Error::ProfileLength {
                expected: problem.n(),
                got: spaces.len(),
            });
        }
        for (k, space) in spaces.iter().enumerate() {
            if space.is_empty() {
                return Err(Error::Precondition(format!(
                    "officer `{}` has an empty message space",
                    problem.officers()[k].id
                )));
            }
            if space.iter().any(|m| m.universe() != problem.universe()) {
                return Err(Error::UniverseMismatch);
            }
        }
        let count = spaces
            .iter()
            .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128))
            .unwrap_or(u128::MAX);
        if count > cap {
            return Err(Error::CapExceeded { count, cap });
        }
        let mut strides = vec![1usize; spaces.len()];
        for k in (0..spaces.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * spaces[k + 1].len();
        }
        let mut outcomes = Vec::with_capacity(count as usize);
        let mut profile: Vec<Message> = spaces.iter().map(|s| s[0].clone()).collect();
        for idx in 0..count as usize {
            for (k, space) in spaces.iter().enumerate() {
                profile[k] = space[(idx / strides[k]) % space.len()].clone();
            }
            let slots = outcome(&profile)?;
            problem.check_feasible(&slots)?;
            outcomes.push(slots);
        }
        Ok(Self {
            name: name.into(),
            problem: problem.clone(),
            spaces,
            strides,
            outcomes,
        })
    }

    /// Enumerates each space and evaluates `outcome` on every profile.
    pub fn from_spaces<F>(
        name: impl Into<String>,
        problem: &Problem,
        spaces: &[MessageSpace],
        cap: u128,
        outcome: F,
    ) -> Result<Self>
    where
        F: FnMut(&[Message]) -> Result<Vec<usize>>,
    {
        let listed = spaces.iter().map(|s| s.enumerate(cap)).collect::<Result<Vec<_>>>()?;
        Self::new(name, problem, listed, cap, outcome)
    }

    /// An explicit table: `table[idx]` is the outcome of profile `idx`.
    pub fn from_table(
        name: impl Into<String>,
        problem: &Problem,
        spaces: Vec<Vec<Message>>,
        table: Vec<Allocation>,
    ) -> Result<Self> {
        let count: usize = spaces.iter().map(Vec::len).product();
        if table.len() != count {
            return Err(Error::Precondition(format!(
                "outcome table has {} rows for {count} profiles",
                table.len()
            )));
        }
        let mut rows = table.into_iter();
        Self::new(name, problem, spaces, u128::MAX, |_| {
            problem.allocation_indices(&rows.next().expect("row count checked"))
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn spaces(&self) -> &[Vec<Message>] {
        &self.spaces
    }

    pub fn profile_count(&self) -> usize {
        self.outcomes.len()
    }

    /// Message indices of profile `idx`.
    pub fn coords(&self, idx: usize) -> Vec<usize> {
        (0..self.spaces.len())
            .map(|k| (idx / self.strides[k]) % self.spaces[k].len())
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn messages(&self, idx: usize) -> Vec<Message> {
        self.coords(idx)
            .iter()
            .enumerate()
            .map(|(k, &c)| self.spaces[k][c].clone())
            .collect()
    }

    pub fn outcome(&self, idx: usize) -> &[usize] {
        &self.outcomes[idx]
    }

    /// Index of the profile made of `profile`'s messages.
    pub fn find(&self, profile: &[Message]) -> Option<usize> {
        if profile.len() != self.spaces.len() {
            return None;
        }
        let coords = profile
            .iter()
            .zip(&self.spaces)
            .map(|(m, space)| space.iter().position(|x| x == m))
            .collect::<Option<Vec<_>>>()?;
        Some(self.index(&coords))
    }

    /// Profiles with officer `i`'s coordinate at zero, in index order.
    fn bases(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let r = self.spaces[i].len();
        let stride = self.strides[i];
        (0..self.outcomes.len() / r).map(move |q| (q / stride) * r * stride + q % stride)
    }

    fn higher_at(&self, idx: usize, i: usize, s: usize) -> usize {
        self.outcomes[idx][..i].iter().filter(|&&x| x == s).count()
    }

    /// Officer `i` could obtain `s` at profile `idx`: fewer than `q_s`
    /// higher-priority officers hold it.
    pub fn available(&self, idx: usize, i: usize, s: usize) -> bool {
        self.higher_at(idx, i, s) < self.problem.capacity(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axiom {
    StrategyProofness,
    Expressiveness,
    Availability,
    WeakAvailability,
    Coherence,
}

/// A unilateral deviation `profile -> profile[officer := deviation]` that
/// violates `axiom`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeviationWitness {
    pub axiom: Axiom,
    pub officer: OfficerId,
    /// The true preference, for axioms quantified over truthful messages.
    pub preference: Option<PreferenceOrder>,
    pub profile: Vec<Message>,
    pub deviation: Message,
    pub outcome: StateId,
    pub deviation_outcome: StateId,
}

impl DeviationWitness {
    /// Re-evaluates the witness against `mech`.
    pub fn replay(&self, mech: &MechanismUnderTest) -> Result<bool> {
        let problem = mech.problem();
        let i = problem.officer_index(self.officer.as_str())?;
        let Some(idx) = mech.find(&self.profile) else {
            return Ok(false);
        };
        let mut dev = self.profile.clone();
        dev[i] = self.deviation.clone();
        let Some(didx) = mech.find(&dev) else {
            return Ok(false);
        };
        let o = mech.outcome(idx)[i];
        let d = mech.outcome(didx)[i];
        let uni = problem.universe();
        if uni.id(o) != &self.outcome || uni.id(d) != &self.deviation_outcome {
            return Ok(false);
        }
        let mi = &self.profile[i];
        let truthful = |p: &PreferenceOrder| truthful_idx(mi, p);
        Ok(match self.axiom {
            Axiom::StrategyProofness => self.preference.as_ref().is_some_and(|p| truthful(p) && p.prefers(d, o)),
            Axiom::Expressiveness => d != o && !mi.comparable_idx(o, d),
            Axiom::Availability => !mech.available(idx, i, d),
            Axiom::WeakAvailability => self
                .preference
                .as_ref()
                .is_some_and(|p| truthful(p) && (d == o || p.prefers(d, o)) && !mech.available(idx, i, d)),
            Axiom::Coherence => d != o && !mi.prefers(o, d),
        })
    }
}

fn preference_cap(mech: &MechanismUnderTest) -> Result<Vec<PreferenceOrder>> {
    let m = mech.problem.m();
    let count: u128 = (1..=m as u128).product();
    let cap = DEFAULT_PROFILE_CAP;
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    Ok(PreferenceOrder::all(mech.problem.universe()).collect())
}

fn witness(
    mech: &MechanismUnderTest,
    axiom: Axiom,
    i: usize,
    preference: Option<&PreferenceOrder>,
    idx: usize,
    dev: usize,
    didx: usize,
) -> DeviationWitness {
    let uni = mech.problem.universe();
    DeviationWitness {
        axiom,
        officer: mech.problem.officers()[i].id.clone(),
        preference: preference.cloned(),
        profile: mech.messages(idx),
        deviation: mech.spaces[i][dev].clone(),
        outcome: uni.id(mech.outcomes[idx][i]).clone(),
        deviation_outcome: uni.id(mech.outcomes[didx][i]).clone(),
    }
}

/// Scans officer, true preference, truthful message, deviation and opponent
/// profile in that order; `bad(p, idx, didx, o, d)` flags a violation.
fn scan_truthful<F>(mech: &MechanismUnderTest, axiom: Axiom, bad: F) -> Result<Option<DeviationWitness>>
where
    F: Fn(&PreferenceOrder, usize, usize, usize, usize, usize) -> bool,
{
    let prefs = preference_cap(mech)?;
    for i in 0..mech.spaces.len() {
        let stride = mech.strides[i];
        for p in &prefs {
            for (t, mt) in mech.spaces[i].iter().enumerate() {
                if !truthful_idx(mt, p) {
                    continue;
                }
                for dev in 0..mech.spaces[i].len() {
                    for base in mech.bases(i) {
                        let idx = base + t * stride;
                        let didx = base + dev * stride;
                        let o = mech.outcomes[idx][i];
                        let d = mech.outcomes[didx][i];
                        if bad(p, i, idx, didx, o, d) {
                            return Ok(Some(witness(mech, axiom, i, Some(p), idx, dev, didx)));
                        }
                    }
                }
            }
        }
    }
    Ok(None)
}

/// Scans officer, profile and deviation in that order.
fn scan_all<F>(mech: &MechanismUnderTest, axiom: Axiom, bad: F) -> Result<Option<DeviationWitness>>
where
    F: Fn(usize, usize, usize, usize) -> bool,
{
    for i in 0..mech.spaces.len() {
        let stride = mech.strides[i];
        let r = mech.spaces[i].len();
        for idx in 0..mech.outcomes.len() {
            let own = (idx / stride) % r;
            let base = idx - own * stride;
            for dev in 0..r {
                let didx = base + dev * stride;
                if bad(i, idx, mech.outcomes[idx][i], mech.outcomes[didx][i]) {
                    return Ok(Some(witness(mech, axiom, i, None, idx, dev, didx)));
                }
            }
        }
    }
    Ok(None)
}

/// First profitable deviation from a truthful message, if any.
pub fn check_strategy_proof(mech: &MechanismUnderTest) -> Result<Option<DeviationWitness>> {
    scan_truthful(mech, Axiom::StrategyProofness, |p, _, _, _, o, d| p.prefers(d, o))
}

/// First deviation whose outcome the officer's message cannot compare with
/// the original outcome.
pub fn check_expressiveness(mech: &MechanismUnderTest) -> Result<Option<DeviationWitness>> {
    scan_all(mech, Axiom::Expressiveness, |i, idx, o, d| {
        let mi = &mech.spaces[i][mech.coords(idx)[i]];
        d != o && !mi.comparable_idx(o, d)
    })
}

/// First deviation outcome that is unavailable at the original profile.
pub fn check_availability(mech: &MechanismUnderTest) -> Result<Option<DeviationWitness>> {
    scan_all(mech, Axiom::Availability, |i, idx, _, d| !mech.available(idx, i, d))
}

/// As [`check_availability`], restricted to truthful messages and deviation
/// outcomes the true preference weakly prefers.
pub fn check_weak_availability(mech: &MechanismUnderTest) -> Result<Option<DeviationWitness>> {
    scan_truthful(mech, Axiom::WeakAvailability, |p, i, idx, _, o, d| {
        (d == o || p.prefers(d, o)) && !mech.available(idx, i, d)
    })
}

/// First deviation with a distinct outcome that the officer's message does
/// not rank strictly below the original.
pub fn check_coherence(mech: &MechanismUnderTest) -> Result<Option<DeviationWitness>> {
    scan_all(mech, Axiom::Coherence, |i, idx, o, d| {
        let mi = &mech.spaces[i][mech.coords(idx)[i]];
        d != o && !mi.prefers(o, d)
    })
}

/// Unilateral deviation scan around one profile, for mechanisms too large to
/// tabulate. For each listed officer, every message of `spaces[i]` replaces
/// `profile[i]`; a deviation the true preference strictly prefers is
/// returned.
pub fn scan_deviations<F>(
    problem: &Problem,
    prefs: &[PreferenceOrder],
    profile: &[Message],
    spaces: &[Vec<Message>],
    officers: impl IntoIterator<Item = usize>,
    mut run: F,
) -> Result<Option<DeviationWitness>>
where
    F: FnMut(&[Message]) -> Result<Vec<usize>>,
{
    check_prefs(problem, prefs)?;
    check_profile(problem, profile)?;
    let base = run(profile)?;
    let uni = problem.universe();
    let mut dev = profile.to_vec();
    for i in officers {
        for alt in &spaces[i] {
            if alt == &profile[i] {
                continue;
            }
            dev[i] = alt.clone();
            let out = run(&dev)?;
            if prefs[i].prefers(out[i], base[i]) {
                return Ok(Some(DeviationWitness {
                    axiom: Axiom::StrategyProofness,
                    officer: problem.officers()[i].id.clone(),
                    preference: Some(prefs[i].clone()),
                    profile: profile.to_vec(),
                    deviation: alt.clone(),
                    outcome: uni.id(base[i]).clone(),
                    deviation_outcome: uni.id(out[i]).clone(),
                }));
            }
        }
        dev[i] = profile[i].clone();
    }
    Ok(None)
}

/// A ranking of a dynamic menu that beats the truthful pick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepwiseWitness {
    pub officer: OfficerId,
    pub menu: Vec<StateId>,
    pub ranking: Vec<StateId>,
    pub truthful: StateId,
    pub obtained: StateId,
}

/// Replays the dynamic mechanism truthfully and, at every step, tries every
/// ranking of the presented menu against the truthful pick.
pub fn check_dynamic_stepwise_dominance(
    problem: &Problem,
    h: &UpperBoundSystem,
    prefs: &[PreferenceOrder],
    cap: u128,
) -> Result<Option<StepwiseWitness>> {
    check_prefs(problem, prefs)?;
    let uni = problem.universe();
    let mut run = DynamicRun::new(problem, h)?;
    while let Some(menu) = run.menu() {
        let k = menu.round;
        let officer = problem.officers()[k].id.clone();
        if menu.z1.is_empty() {
            return Err(Error::NoAdmissibleZone { officer });
        }
        let states: Vec<usize> = menu.z1.iter().collect();
        let count: u128 = (1..=states.len() as u128).product();
        if count > cap {
            return Err(Error::CapExceeded { count, cap });
        }
        let truthful: Vec<usize> = prefs[k]
            .order()
            .iter()
            .copied()
            .filter(|&s| menu.z1.contains(s))
            .collect();
        let pick = truthful[0];
        for ranking in states.iter().copied().permutations(states.len()) {
            let mut trial = run.clone();
            let got = trial.commit(&ranking)?;
            if prefs[k].prefers(got, pick) {
                let ids = |x: &[usize]| x.iter().map(|&s| uni.id(s).clone()).collect();
                return Ok(Some(StepwiseWitness {
                    officer,
                    menu: ids(&states),
                    ranking: ids(&ranking),
                    truthful: uni.id(pick).clone(),
                    obtained: uni.id(got).clone(),
                }));
            }
        }
        run.commit(&truthful)?;
    }
    Ok(None)
}
