//! Sequential assignment engines.
//!
//! Every engine processes officers in priority order, keeps the set `S^k` of
//! states with spare capacity, and records one [`Step`] per officer. A state
//! leaves the available set exactly when its occupancy reaches capacity.

use std::collections::{BTreeMap, BTreeSet};

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::constraints::{CompiledBounds, SolvencyCounterexample, UpperBound, UpperBoundSystem};
use crate::error::{Error, Result};
use crate::ids::{OfficerId, OfficerType, StateId, StateSet, Universe};
use crate::problem::{Allocation, Officer, Problem};
use crate::relations::{Message, PreferenceOrder};
use crate::spaces::{induced_partition, zone_ranking_of, MessageSpace, Partition};

/// A selection rule: which maximal state (m-queue) or which zone (zone
/// engines) an officer is assigned from.
///
/// Orders are lists of state indices. Zone engines read each listed state as
/// the zone containing it. Unlisted states or zones follow in their natural
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    /// State order, partition order, or the reported zone ranking.
    Default,
    Order(Vec<usize>),
    /// Branches on whether `officer` reports `prefers.0` above `prefers.1`.
    When {
        officer: usize,
        prefers: (usize, usize),
        then: Box<Rule>,
        otherwise: Box<Rule>,
    },
}

impl Rule {
    fn resolve<'r>(&'r self, profile: &[Message]) -> &'r Rule {
        let mut rule = self;
        while let Rule::When {
            officer,
            prefers,
            then,
            otherwise,
        } = rule
        {
            let m = &profile[*officer];
            rule = if m.prefers(prefers.0, prefers.1) {
                then
            } else {
                otherwise
            };
        }
        rule
    }

    /// Reads only the officer's own message or none.
    pub fn is_profile_independent(&self, own: usize) -> bool {
        match self {
            Rule::Default | Rule::Order(_) => true,
            Rule::When {
                officer,
                then,
                otherwise,
                ..
            } => *officer == own && then.is_profile_independent(own) && otherwise.is_profile_independent(own),
        }
    }

    /// Checks officer and state indices.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        match self {
            Rule::Default => Ok(()),
            Rule::Order(order) => match order.iter().find(|&&s| s >= m) {
                Some(s) => Err(Error::Precondition(format!("rule names state index {s}"))),
                None => Ok(()),
            },
            Rule::When {
                officer,
                prefers,
                then,
                otherwise,
            } => {
                if *officer >= n {
                    return Err(Error::Precondition(format!("rule names officer index {officer}")));
                }
                if prefers.0 >= m || prefers.1 >= m {
                    return Err(Error::Precondition("rule condition names an unknown state".into()));
                }
                then.validate(n, m)?;
                otherwise.validate(n, m)
            }
        }
    }
}

fn rule_for(rules: &[Rule], k: usize) -> &Rule {
    rules.get(k).unwrap_or(&Rule::Default)
}

/// States in rule order: listed ones first, then the rest by index.
fn state_order(rule: &Rule, m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    let mut seen = StateSet::EMPTY;
    if let Rule::Order(order) = rule {
        for &s in order {
            if !seen.contains(s) {
                seen.insert(s);
                out.push(s);
            }
        }
    }
    out.extend((0..m).filter(|&s| !seen.contains(s)));
    out
}

/// Zones in rule order; `natural` is used for unlisted zones.
fn zone_order(rule: &Rule, p: &Partition, natural: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(p.len());
    let mut seen = vec![false; p.len()];
    if let Rule::Order(order) = rule {
        for &s in order {
            let z = p.zone_of(s);
            if !seen[z] {
                seen[z] = true;
                out.push(z);
            }
        }
    }
    out.extend(natural.iter().copied().filter(|&z| !seen[z]));
    out
}

/// One officer's turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub officer: usize,
    /// States with spare capacity before the assignment (`S^k`).
    pub available: StateSet,
    /// `G(S^k, m_k)`.
    pub maximal: StateSet,
    pub zone: Option<StateSet>,
    pub assigned: usize,
    pub message: Message,
    /// Bounds binding before the assignment.
    pub binding: BTreeSet<usize>,
    /// Dynamic engine only: the states outside the presented menu.
    pub z2: Option<StateSet>,
}

/// Per-step record of a sequential run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTrace {
    pub mechanism: &'static str,
    universe: Universe,
    officers: Vec<OfficerId>,
    pub steps: Vec<Step>,
}

impl RunTrace {
    pub(crate) fn new(mechanism: &'static str, problem: &Problem) -> Self {
        Self {
            mechanism,
            universe: problem.universe().clone(),
            officers: problem.officers().iter().map(|o| o.id.clone()).collect(),
            steps: Vec::with_capacity(problem.n()),
        }
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    /// Assigned state indices in priority order.
    pub fn slots(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.assigned).collect()
    }

    pub fn allocation(&self) -> Allocation {
        Allocation(
            self.steps
                .iter()
                .map(|s| self.universe.id(s.assigned).clone())
                .collect(),
        )
    }

    pub fn profile(&self) -> Vec<Message> {
        self.steps.iter().map(|s| s.message.clone()).collect()
    }

    /// Checks the m-queue structure: every assignment is maximal in its
    /// available set, and the available set shrinks exactly by filled states.
    pub fn audit(&self, problem: &Problem) -> Result<()> {
        let mut occ = vec![0usize; problem.m()];
        let mut avail = problem.universe().full();
        for step in &self.steps {
            if step.available != avail {
                return Err(Error::Precondition(format!(
                    "step {} records available set {:?}, expected {:?}",
                    step.officer, step.available, avail
                )));
            }
            if step.maximal != step.message.maximal(avail) {
                return Err(Error::Precondition(format!(
                    "step {} records a wrong maximal set",
                    step.officer
                )));
            }
            if !step.maximal.contains(step.assigned) {
                return Err(Error::NonMaximalSelection {
                    officer: self.officers[step.officer].clone(),
                    state: self.universe.id(step.assigned).clone(),
                });
            }
            occ[step.assigned] += 1;
            if occ[step.assigned] == problem.capacity(step.assigned) {
                avail.remove(step.assigned);
            }
        }
        Ok(())
    }
}

struct StepView<'a> {
    trace: &'a RunTrace,
    step: &'a Step,
}

impl Serialize for StepView<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let u = &self.trace.universe;
        let ids = |x: StateSet| -> Vec<StateId> { x.iter().map(|s| u.id(s).clone()).collect() };
        let step = self.step;
        let mut st = serializer.serialize_struct("Step", 8)?;
        st.serialize_field("officer", &self.trace.officers[step.officer])?;
        st.serialize_field("available", &ids(step.available))?;
        st.serialize_field("maximal", &ids(step.maximal))?;
        st.serialize_field("zone", &step.zone.map(ids))?;
        st.serialize_field("assigned", u.id(step.assigned))?;
        st.serialize_field("message", &step.message)?;
        st.serialize_field("binding", &step.binding)?;
        st.serialize_field("z2", &step.z2.map(ids))?;
        st.end()
    }
}

impl Serialize for RunTrace {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let steps: Vec<StepView<'_>> = self.steps.iter().map(|step| StepView { trace: self, step }).collect();
        let mut st = serializer.serialize_struct("RunTrace", 2)?;
        st.serialize_field("mechanism", self.mechanism)?;
        st.serialize_field("steps", &steps)?;
        st.end()
    }
}

/// Remaining capacity bookkeeping shared by the engines.
struct Seats {
    occ: Vec<usize>,
    available: StateSet,
}

impl Seats {
    fn new(problem: &Problem) -> Self {
        Self {
            occ: vec![0; problem.m()],
            available: problem.universe().full(),
        }
    }

    fn take(&mut self, problem: &Problem, s: usize) {
        self.occ[s] += 1;
        if self.occ[s] >= problem.capacity(s) {
            self.available.remove(s);
        }
    }
}

fn check_profile(problem: &Problem, profile: &[Message]) -> Result<()> {
    if profile.len() != problem.n() {
        return Err(Error::ProfileLength {
            expected: problem.n(),
            got: profile.len(),
        });
    }
    if profile.iter().any(|m| m.universe() != problem.universe()) {
        return Err(Error::UniverseMismatch);
    }
    Ok(())
}

fn check_rules(problem: &Problem, rules: &[Rule]) -> Result<()> {
    if rules.len() > problem.n() {
        return Err(Error::ProfileLength {
            expected: problem.n(),
            got: rules.len(),
        });
    }
    rules.iter().try_for_each(|r| r.validate(problem.n(), problem.m()))
}

/// The m-queue mechanism: officer `k` receives a state of `G(S^k, m_k)`,
/// the first one in its rule's state order.
pub fn m_queue_run(problem: &Problem, profile: &[Message], rules: &[Rule]) -> Result<RunTrace> {
    check_profile(problem, profile)?;
    check_rules(problem, rules)?;
    let mut seats = Seats::new(problem);
    let mut trace = RunTrace::new("mqueue", problem);
    for (k, m) in profile.iter().enumerate() {
        let avail = seats.available;
        let g = m.maximal(avail);
        let order = state_order(rule_for(rules, k).resolve(profile), problem.m());
        let s = order
            .into_iter()
            .find(|&s| g.contains(s))
            .expect("maximal set of a non-empty available set is non-empty");
        seats.take(problem, s);
        trace.steps.push(Step {
            officer: k,
            available: avail,
            maximal: g,
            zone: None,
            assigned: s,
            message: m.clone(),
            binding: BTreeSet::new(),
            z2: None,
        });
    }
    Ok(trace)
}

/// Each officer receives their best state with spare capacity.
pub fn serial_dictatorship(problem: &Problem, prefs: &[PreferenceOrder]) -> Result<Allocation> {
    if prefs.len() != problem.n() {
        return Err(Error::ProfileLength {
            expected: problem.n(),
            got: prefs.len(),
        });
    }
    if prefs.iter().any(|p| p.universe() != problem.universe()) {
        return Err(Error::UniverseMismatch);
    }
    let mut seats = Seats::new(problem);
    let mut slots = Vec::with_capacity(problem.n());
    for p in prefs {
        let s = p.best_in(seats.available).expect("total capacity covers every officer");
        seats.take(problem, s);
        slots.push(s);
    }
    Ok(problem.allocation(&slots))
}

fn check_partitions(problem: &Problem, partitions: &[Partition]) -> Result<()> {
    if partitions.len() != problem.n() {
        return Err(Error::ProfileLength {
            expected: problem.n(),
            got: partitions.len(),
        });
    }
    if partitions.iter().any(|p| p.universe() != problem.universe()) {
        return Err(Error::UniverseMismatch);
    }
    Ok(())
}

/// Partitioned priority: the rule picks the first zone meeting `S^k`, and the
/// officer receives the best available state of that zone under their
/// message.
pub fn partitioned_priority_run(
    problem: &Problem,
    partitions: &[Partition],
    profile: &[Message],
    rules: &[Rule],
) -> Result<RunTrace> {
    check_profile(problem, profile)?;
    check_partitions(problem, partitions)?;
    check_rules(problem, rules)?;
    let mut seats = Seats::new(problem);
    let mut trace = RunTrace::new("pp", problem);
    for (k, m) in profile.iter().enumerate() {
        let part = &partitions[k];
        if !MessageSpace::Zonal(part.clone()).contains(m) {
            return Err(Error::MessageNotInSpace {
                officer: problem.officers()[k].id.clone(),
            });
        }
        let avail = seats.available;
        let natural: Vec<usize> = (0..part.len()).collect();
        let order = zone_order(rule_for(rules, k).resolve(profile), part, &natural);
        let z = order
            .into_iter()
            .find(|&z| !part.zone(z).intersection(avail).is_empty())
            .ok_or_else(|| Error::EmptyZoneSelection {
                officer: problem.officers()[k].id.clone(),
            })?;
        let zone = part.zone(z);
        let s = m.maximal(avail.intersection(zone)).first().expect("non-empty");
        let g = m.maximal(avail);
        if !g.contains(s) {
            return Err(Error::NonMaximalSelection {
                officer: problem.officers()[k].id.clone(),
                state: problem.universe().id(s).clone(),
            });
        }
        seats.take(problem, s);
        trace.steps.push(Step {
            officer: k,
            available: avail,
            maximal: g,
            zone: Some(zone),
            assigned: s,
            message: m.clone(),
            binding: BTreeSet::new(),
            z2: None,
        });
    }
    Ok(trace)
}

/// Ranked partitioned priority. The default rule takes the highest zone of
/// the reported ranking that meets `S^k`; any selection is checked against
/// both ranked-zone conditions.
pub fn ranked_partitioned_priority_run(
    problem: &Problem,
    partitions: &[Partition],
    profile: &[Message],
    rules: &[Rule],
) -> Result<RunTrace> {
    check_profile(problem, profile)?;
    check_partitions(problem, partitions)?;
    check_rules(problem, rules)?;
    let mut seats = Seats::new(problem);
    let mut trace = RunTrace::new("rpp", problem);
    for (k, m) in profile.iter().enumerate() {
        let officer = problem.officers()[k].id.clone();
        let part = &partitions[k];
        let ranking = zone_ranking_of(part, m).map_err(|_| Error::MessageNotInSpace {
            officer: officer.clone(),
        })?;
        let avail = seats.available;
        let order = zone_order(rule_for(rules, k).resolve(profile), part, ranking.order());
        let z = order
            .into_iter()
            .find(|&z| !part.zone(z).intersection(avail).is_empty())
            .ok_or_else(|| Error::SelectorCondition {
                officer: officer.clone(),
                condition: 1,
                detail: "no zone meets the available set".into(),
            })?;
        let zone = part.zone(z);
        let here = avail.intersection(zone);
        let bottom = m.minimal(zone).first().expect("non-empty zone");
        if here == StateSet::singleton(bottom) {
            let blocker = ranking
                .order()
                .iter()
                .take_while(|&&x| x != z)
                .find(|&&x| avail.contains(m.maximal(part.zone(x)).first().expect("non-empty zone")));
            if let Some(&x) = blocker {
                return Err(Error::SelectorCondition {
                    officer,
                    condition: 2,
                    detail: format!(
                        "only the bottom state `{}` of the selected zone is left while higher-ranked zone {} still offers its top state",
                        problem.universe().id(bottom),
                        x + 1
                    ),
                });
            }
        }
        let s = m.maximal(here).first().expect("non-empty");
        let g = m.maximal(avail);
        if !g.contains(s) {
            return Err(Error::NonMaximalSelection {
                officer,
                state: problem.universe().id(s).clone(),
            });
        }
        seats.take(problem, s);
        trace.steps.push(Step {
            officer: k,
            available: avail,
            maximal: g,
            zone: Some(zone),
            assigned: s,
            message: m.clone(),
            binding: BTreeSet::new(),
            z2: None,
        });
    }
    Ok(trace)
}

/// Bounds binding at the given counts that cover `t`.
fn binding_for(h: &UpperBoundSystem, counts: &[usize], t: &OfficerType) -> BTreeSet<usize> {
    h.bounds()
        .iter()
        .enumerate()
        .filter(|(i, b)| counts[*i] == b.ceiling && b.types.contains(t))
        .map(|(i, _)| i)
        .collect()
}

fn bound_counts(compiled: &CompiledBounds, k: usize, s: usize, counts: &mut [usize]) {
    for (h, c) in counts.iter_mut().enumerate() {
        if compiled.covers[h][k] && compiled.states[h].contains(s) {
            *c += 1;
        }
    }
}

/// The static modular priority mechanism with its modular-induced zones.
#[derive(Debug, Clone)]
pub struct ModularPriority {
    problem: Problem,
    h: UpperBoundSystem,
    compiled: CompiledBounds,
    partitions: BTreeMap<OfficerType, Partition>,
    exo: Vec<Vec<usize>>,
}

impl ModularPriority {
    /// `exo[k]` ranks officer `k`'s zones, as zone indices of the induced
    /// partition for their type; `None` uses partition order for everyone.
    pub fn new(problem: &Problem, h: &UpperBoundSystem, exo: Option<Vec<Vec<usize>>>) -> Result<Self> {
        let compiled = CompiledBounds::new(problem, h)?;
        let partitions: BTreeMap<OfficerType, Partition> = problem
            .types()
            .into_iter()
            .map(|t| {
                let p = induced_partition(h, &t, problem.universe());
                (t, p)
            })
            .collect();
        let exo = match exo {
            Some(exo) => {
                if exo.len() != problem.n() {
                    return Err(Error::ProfileLength {
                        expected: problem.n(),
                        got: exo.len(),
                    });
                }
                for (k, order) in exo.iter().enumerate() {
                    let zones = partitions[problem.officer_type(k)].len();
                    crate::spaces::ZoneRanking::new(order.clone(), zones)?;
                }
                exo
            }
            None => (0..problem.n())
                .map(|k| (0..partitions[problem.officer_type(k)].len()).collect())
                .collect(),
        };
        Ok(Self {
            problem: problem.clone(),
            h: h.clone(),
            compiled,
            partitions,
            exo,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn bounds(&self) -> &UpperBoundSystem {
        &self.h
    }

    pub fn partition(&self, t: &OfficerType) -> &Partition {
        &self.partitions[t]
    }

    /// Officer `k`'s message space.
    pub fn space(&self, k: usize) -> MessageSpace {
        MessageSpace::Zonal(self.partitions[self.problem.officer_type(k)].clone())
    }

    pub fn exogenous(&self, k: usize) -> &[usize] {
        &self.exo[k]
    }

    /// Runs the mechanism. Flags are recomputed from the bound counts before
    /// the first officer and after every assignment.
    pub fn run(&self, profile: &[Message]) -> Result<RunTrace> {
        let problem = &self.problem;
        check_profile(problem, profile)?;
        let mut seats = Seats::new(problem);
        let mut counts = vec![0usize; self.h.len()];
        let mut trace = RunTrace::new("modular", problem);
        for (k, m) in profile.iter().enumerate() {
            let t = problem.officer_type(k);
            let part = &self.partitions[t];
            if !MessageSpace::Zonal(part.clone()).contains(m) {
                return Err(Error::MessageNotInSpace {
                    officer: problem.officers()[k].id.clone(),
                });
            }
            let binding = binding_for(&self.h, &counts, t);
            let blocked = binding
                .iter()
                .fold(StateSet::EMPTY, |acc, &b| acc.union(self.compiled.states[b]));
            let avail = seats.available;
            let z = self.exo[k]
                .iter()
                .copied()
                .find(|&z| {
                    let zone = part.zone(z);
                    zone.intersection(blocked).is_empty() && !zone.intersection(avail).is_empty()
                })
                .ok_or_else(|| Error::NoAdmissibleZone {
                    officer: problem.officers()[k].id.clone(),
                })?;
            let zone = part.zone(z);
            let s = m.maximal(avail.intersection(zone)).first().expect("non-empty");
            let g = m.maximal(avail);
            if !g.contains(s) {
                return Err(Error::NonMaximalSelection {
                    officer: problem.officers()[k].id.clone(),
                    state: problem.universe().id(s).clone(),
                });
            }
            seats.take(problem, s);
            bound_counts(&self.compiled, k, s, &mut counts);
            trace.steps.push(Step {
                officer: k,
                available: avail,
                maximal: g,
                zone: Some(zone),
                assigned: s,
                message: m.clone(),
                binding,
                z2: None,
            });
        }
        Ok(trace)
    }

    /// The truthful profile: each officer's preference restricted to zones.
    pub fn truthful_profile(&self, prefs: &[PreferenceOrder]) -> Result<Vec<Message>> {
        if prefs.len() != self.problem.n() {
            return Err(Error::ProfileLength {
                expected: self.problem.n(),
                got: prefs.len(),
            });
        }
        prefs
            .iter()
            .enumerate()
            .map(|(k, p)| self.space(k).truthful_message(p))
            .collect()
    }
}

/// Convenience wrapper over [`ModularPriority`].
pub fn modular_priority_run(
    problem: &Problem,
    h: &UpperBoundSystem,
    exo: Option<Vec<Vec<usize>>>,
    profile: &[Message],
) -> Result<RunTrace> {
    ModularPriority::new(problem, h, exo)?.run(profile)
}

/// What the dynamic mechanism presents to the active officer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Menu {
    /// Zero-based index of the active officer.
    pub round: usize,
    pub z1: StateSet,
    pub z2: StateSet,
    /// Remaining capacity per state.
    pub remaining: Vec<usize>,
    /// Bounds binding for the active officer's type.
    pub binding: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MenuState {
    pub id: StateId,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BindingBound {
    pub index: usize,
    #[serde(flatten)]
    pub bound: UpperBound,
}

/// Serializable menu with identifiers resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MenuView {
    pub round: usize,
    pub officer_id: OfficerId,
    pub officer_type: OfficerType,
    pub states: Vec<MenuState>,
    pub binding: Vec<BindingBound>,
}

impl Menu {
    pub fn view(&self, problem: &Problem, h: &UpperBoundSystem) -> MenuView {
        let officer = &problem.officers()[self.round];
        MenuView {
            round: self.round,
            officer_id: officer.id.clone(),
            officer_type: officer.otype.clone(),
            states: self
                .z1
                .iter()
                .map(|s| MenuState {
                    id: problem.universe().id(s).clone(),
                    remaining: self.remaining[s],
                })
                .collect(),
            binding: self
                .binding
                .iter()
                .map(|&index| BindingBound {
                    index,
                    bound: h.bounds()[index].clone(),
                })
                .collect(),
        }
    }
}

/// Supplies each officer's ranking over the presented menu.
pub trait RankingProvider {
    fn rank(&mut self, problem: &Problem, menu: &Menu) -> Result<Vec<usize>>;
}

impl<F> RankingProvider for F
where
    F: FnMut(&Problem, &Menu) -> Result<Vec<usize>>,
{
    fn rank(&mut self, problem: &Problem, menu: &Menu) -> Result<Vec<usize>> {
        self(problem, menu)
    }
}

/// Ranks every menu by the officer's true preference.
#[derive(Debug, Clone)]
pub struct TruthProvider {
    prefs: Vec<PreferenceOrder>,
}

impl TruthProvider {
    pub fn new(prefs: Vec<PreferenceOrder>) -> Self {
        Self { prefs }
    }
}

impl RankingProvider for TruthProvider {
    fn rank(&mut self, _problem: &Problem, menu: &Menu) -> Result<Vec<usize>> {
        let p = self
            .prefs
            .get(menu.round)
            .ok_or_else(|| Error::Precondition(format!("no preference for officer {}", menu.round + 1)))?;
        Ok(p.order().iter().copied().filter(|&s| menu.z1.contains(s)).collect())
    }
}

/// The dynamic modular priority mechanism, advanced one officer at a time.
#[derive(Debug, Clone)]
pub struct DynamicRun {
    problem: Problem,
    h: UpperBoundSystem,
    compiled: CompiledBounds,
    seats_occ: Vec<usize>,
    available: StateSet,
    counts: Vec<usize>,
    trace: RunTrace,
}

impl DynamicRun {
    pub fn new(problem: &Problem, h: &UpperBoundSystem) -> Result<Self> {
        let compiled = CompiledBounds::new(problem, h)?;
        Ok(Self {
            problem: problem.clone(),
            h: h.clone(),
            compiled,
            seats_occ: vec![0; problem.m()],
            available: problem.universe().full(),
            counts: vec![0; h.len()],
            trace: RunTrace::new("dynamic-modular", problem),
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn bounds(&self) -> &UpperBoundSystem {
        &self.h
    }

    /// Index of the active officer.
    pub fn round(&self) -> usize {
        self.trace.steps.len()
    }

    pub fn is_complete(&self) -> bool {
        self.round() == self.problem.n()
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn remaining(&self) -> Vec<usize> {
        (0..self.problem.m())
            .map(|s| self.problem.capacity(s) - self.seats_occ[s])
            .collect()
    }

    /// Bound counts so far.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Every bound met with equality so far.
    pub fn binding(&self) -> BTreeSet<usize> {
        self.counts
            .iter()
            .zip(self.h.bounds())
            .enumerate()
            .filter(|(_, (c, b))| **c == b.ceiling)
            .map(|(i, _)| i)
            .collect()
    }

    /// The active officer's menu, or `None` once every officer is placed.
    pub fn menu(&self) -> Option<Menu> {
        if self.is_complete() {
            return None;
        }
        let k = self.round();
        let binding = binding_for(&self.h, &self.counts, self.problem.officer_type(k));
        let blocked = binding
            .iter()
            .fold(StateSet::EMPTY, |acc, &b| acc.union(self.compiled.states[b]));
        let z1 = self.available.difference(blocked);
        Some(Menu {
            round: k,
            z1,
            z2: self.problem.universe().full().difference(z1),
            remaining: self.remaining(),
            binding,
        })
    }

    /// Commits the active officer to the first state of `ranking`, which must
    /// order the menu exactly. Returns the assigned state.
    pub fn commit(&mut self, ranking: &[usize]) -> Result<usize> {
        let menu = self
            .menu()
            .ok_or_else(|| Error::Precondition("every officer is already placed".into()))?;
        let k = menu.round;
        let officer = self.problem.officers()[k].id.clone();
        if menu.z1.is_empty() {
            return Err(Error::NoAdmissibleZone { officer });
        }
        let mut seen = StateSet::EMPTY;
        for &s in ranking {
            if s >= self.problem.m() || !menu.z1.contains(s) {
                let name = if s < self.problem.m() {
                    format!("`{}`", self.problem.universe().id(s))
                } else {
                    format!("index {s}")
                };
                return Err(Error::InvalidRanking {
                    officer,
                    reason: format!("state {name} is not on the menu"),
                });
            }
            if seen.contains(s) {
                return Err(Error::InvalidRanking {
                    officer,
                    reason: format!("state `{}` is ranked twice", self.problem.universe().id(s)),
                });
            }
            seen.insert(s);
        }
        if seen != menu.z1 {
            let missing = menu.z1.difference(seen).first().expect("non-empty difference");
            return Err(Error::InvalidRanking {
                officer,
                reason: format!("menu state `{}` is not ranked", self.problem.universe().id(missing)),
            });
        }
        let s = ranking[0];
        let message = Message::from_index_pairs(
            self.problem.universe(),
            ranking
                .iter()
                .enumerate()
                .flat_map(|(i, &a)| ranking[i + 1..].iter().map(move |&b| (a, b))),
        )
        .expect("a strict order is acyclic");
        let avail = self.available;
        let g = message.maximal(avail);
        self.seats_occ[s] += 1;
        if self.seats_occ[s] >= self.problem.capacity(s) {
            self.available.remove(s);
        }
        bound_counts(&self.compiled, k, s, &mut self.counts);
        self.trace.steps.push(Step {
            officer: k,
            available: avail,
            maximal: g,
            zone: Some(menu.z1),
            assigned: s,
            message,
            binding: menu.binding,
            z2: Some(menu.z2),
        });
        Ok(s)
    }

    /// Commits a ranking given by state identifiers.
    pub fn commit_ids<S: AsRef<str>>(&mut self, ranking: &[S]) -> Result<usize> {
        let officer = self
            .problem
            .officers()
            .get(self.round())
            .map(|o| o.id.clone())
            .ok_or_else(|| Error::Precondition("every officer is already placed".into()))?;
        let idx = ranking
            .iter()
            .map(|s| {
                self.problem
                    .universe()
                    .index_of(s.as_ref())
                    .map_err(|_| Error::InvalidRanking {
                        officer: officer.clone(),
                        reason: format!("unknown state `{}`", s.as_ref()),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        self.commit(&idx)
    }

    pub fn into_trace(self) -> RunTrace {
        self.trace
    }
}

/// Runs the dynamic mechanism to completion with `provider`.
pub fn dynamic_modular_priority_run(
    problem: &Problem,
    h: &UpperBoundSystem,
    provider: &mut dyn RankingProvider,
) -> Result<RunTrace> {
    let mut run = DynamicRun::new(problem, h)?;
    while let Some(menu) = run.menu() {
        if menu.z1.is_empty() {
            return Err(Error::NoAdmissibleZone {
                officer: problem.officers()[menu.round].id.clone(),
            });
        }
        let ranking = provider.rank(problem, &menu)?;
        run.commit(&ranking)?;
    }
    Ok(run.into_trace())
}

/// Outcome of replaying a solvency counterexample through the modular
/// priority mechanism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SolvencyReplay {
    /// Arrival order used for the replay.
    pub order: Vec<OfficerId>,
    /// The placement targeted for every officer but the last.
    pub placed: Vec<(OfficerId, StateId)>,
    pub stranded: OfficerId,
    /// The engine failed with no admissible zone for the last officer.
    pub stranded_reached: bool,
}

/// Places the counterexample's officers first, each steered to its cell by
/// an exogenous ranking and message, then runs the stranded officer. Any
/// officers the placement leaves out follow.
pub fn replay_solvency_counterexample(
    problem: &Problem,
    h: &UpperBoundSystem,
    ce: &SolvencyCounterexample,
) -> Result<SolvencyReplay> {
    let uni = problem.universe();
    let mut by_type: BTreeMap<OfficerType, Vec<Officer>> = BTreeMap::new();
    for o in problem.officers() {
        by_type.entry(o.otype.clone()).or_default().push(o.clone());
    }
    let stranded = by_type
        .get_mut(&ce.officer_type)
        .and_then(|v| v.pop())
        .ok_or_else(|| Error::Precondition(format!("no officer of type `{}`", ce.officer_type)))?;
    let mut placed: Vec<(Officer, usize)> = Vec::new();
    for (t, cells) in &ce.occupancy {
        let pool = by_type
            .get_mut(t)
            .ok_or_else(|| Error::Precondition(format!("no officer of type `{t}`")))?;
        for (s, &count) in cells {
            let si = uni.index_of(s.as_str())?;
            for _ in 0..count {
                let o = pool
                    .pop()
                    .ok_or_else(|| Error::Precondition(format!("too many officers of type `{t}` in the placement")))?;
                placed.push((o, si));
            }
        }
    }
    let mut officers: Vec<Officer> = placed.iter().map(|(o, _)| o.clone()).collect();
    officers.push(stranded.clone());
    officers.extend(by_type.into_values().flatten());
    let reordered = problem.with_officers(officers)?;
    let mut exo = Vec::with_capacity(reordered.n());
    let mut profile = Vec::with_capacity(reordered.n());
    for k in 0..reordered.n() {
        let part = induced_partition(h, reordered.officer_type(k), uni);
        let target = placed.get(k).map(|&(_, s)| s);
        let first = target.map(|s| part.zone_of(s));
        let mut order: Vec<usize> = first.into_iter().collect();
        order.extend((0..part.len()).filter(|&z| Some(z) != first));
        exo.push(order);
        let mut states: Vec<usize> = target.into_iter().collect();
        states.extend((0..uni.len()).filter(|&s| Some(s) != target));
        let pref = PreferenceOrder::from_indices(uni, states)?;
        profile.push(MessageSpace::Zonal(part).truthful_message(&pref)?);
    }
    let engine = ModularPriority::new(&reordered, h, Some(exo))?;
    let stranded_reached = match engine.run(&profile) {
        Err(Error::NoAdmissibleZone { officer }) => officer == stranded.id,
        Err(e) => return Err(e),
        Ok(_) => false,
    };
    Ok(SolvencyReplay {
        order: reordered.officers().iter().map(|o| o.id.clone()).collect(),
        placed: placed.iter().map(|(o, s)| (o.id.clone(), uni.id(*s).clone())).collect(),
        stranded: stranded.id,
        stranded_reached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{check_sequential_solvency, respects_bounds, SolvencyVerdict};
    use crate::relations::validate_message;
    use crate::spaces::{ranked_zonal_message, zonal_message, ZoneRanking};
    use proptest::prelude::*;

    fn order(u: &Universe, ids: &[&str]) -> PreferenceOrder {
        PreferenceOrder::new(u, ids.iter().copied()).unwrap()
    }

    fn alloc(ids: &[&str]) -> Allocation {
        Allocation::new(ids.iter().copied())
    }

    fn ex61() -> (Problem, UpperBoundSystem) {
        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s1", 2), ("s2", 1)]).unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s1"], 1)]).unwrap();
        (p, h)
    }

    #[test]
    fn mqueue_single_officer_gets_top() {
        let p = Problem::build(&[("i1", "t")], &[("s1", 1), ("s2", 1), ("s3", 1)]).unwrap();
        let m = Message::from_order(&order(p.universe(), &["s2", "s3", "s1"]));
        let t = m_queue_run(&p, &[m], &[]).unwrap();
        assert_eq!(t.allocation(), alloc(&["s2"]));
        t.audit(&p).unwrap();
    }

    #[test]
    fn mqueue_rule_reads_other_messages() {
        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s1", 1), ("s2", 1)]).unwrap();
        let u = p.universe().clone();
        let rule = Rule::When {
            officer: 1,
            prefers: (0, 1),
            then: Box::new(Rule::Order(vec![1, 0])),
            otherwise: Box::new(Rule::Order(vec![0, 1])),
        };
        let m1 = Message::empty(&u);
        let up = validate_message([("s1", "s2")], &u).unwrap();
        let down = validate_message([("s2", "s1")], &u).unwrap();
        let rules = [rule, Rule::Default];
        let a = m_queue_run(&p, &[m1.clone(), up], &rules).unwrap().allocation();
        assert_eq!(a, alloc(&["s2", "s1"]));
        let a = m_queue_run(&p, &[m1, down], &rules).unwrap().allocation();
        assert_eq!(a, alloc(&["s1", "s2"]));
    }

    #[test]
    fn serial_dictatorship_examples() {
        let p = Problem::build(
            &[("i1", "t"), ("i2", "t"), ("i3", "t")],
            &[("s1", 1), ("s2", 1), ("s3", 1)],
        )
        .unwrap();
        let pr = order(p.universe(), &["s3", "s1", "s2"]);
        let a = serial_dictatorship(&p, &[pr.clone(), pr.clone(), pr]).unwrap();
        assert_eq!(a, alloc(&["s3", "s1", "s2"]));

        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s1", 1), ("s2", 1)]).unwrap();
        let pr = order(p.universe(), &["s1", "s2"]);
        assert_eq!(
            serial_dictatorship(&p, &[pr.clone(), pr]).unwrap(),
            alloc(&["s1", "s2"])
        );
    }

    fn pp_fixture() -> (Problem, Vec<Partition>, Vec<Rule>) {
        let p = Problem::build(
            &[("i1", "t"), ("i2", "t"), ("i3", "t")],
            &[("s1", 1), ("s2", 1), ("s3", 1)],
        )
        .unwrap();
        let part = Partition::new(p.universe(), [vec!["s1", "s2"], vec!["s3"]]).unwrap();
        let rules = vec![
            Rule::Default,
            Rule::When {
                officer: 2,
                prefers: (0, 1),
                then: Box::new(Rule::Default),
                otherwise: Box::new(Rule::Order(vec![2, 0])),
            },
            Rule::Default,
        ];
        (p, vec![part; 3], rules)
    }

    #[test]
    fn partitioned_priority_manipulation() {
        let (p, parts, rules) = pp_fixture();
        let u = p.universe().clone();
        let m = zonal_message(&parts[0], &[vec!["s1".into(), "s2".into()], vec!["s3".into()]]).unwrap();
        let flipped = zonal_message(&parts[0], &[vec!["s2".into(), "s1".into()], vec!["s3".into()]]).unwrap();
        let truthful = partitioned_priority_run(&p, &parts, &[m.clone(), m.clone(), m.clone()], &rules).unwrap();
        assert_eq!(truthful.allocation(), alloc(&["s1", "s2", "s3"]));
        truthful.audit(&p).unwrap();
        let dev = partitioned_priority_run(&p, &parts, &[m.clone(), m, flipped], &rules).unwrap();
        assert_eq!(dev.allocation(), alloc(&["s1", "s3", "s2"]));
        assert_eq!(dev.steps[1].zone, Some(u.set(["s3"]).unwrap()));
    }

    #[test]
    fn partitioned_single_zone_is_serial_dictatorship() {
        let p = Problem::build(&[("i1", "t"), ("i2", "t"), ("i3", "t")], &[("s1", 1), ("s2", 2)]).unwrap();
        let u = p.universe().clone();
        let parts = vec![Partition::single(&u); 3];
        for a in PreferenceOrder::all(&u) {
            for b in PreferenceOrder::all(&u) {
                let prefs = [a.clone(), b.clone(), a.clone()];
                let profile: Vec<Message> = prefs.iter().map(Message::from_order).collect();
                let t = partitioned_priority_run(&p, &parts, &profile, &[]).unwrap();
                assert_eq!(t.allocation(), serial_dictatorship(&p, &prefs).unwrap());
            }
        }
    }

    #[test]
    fn partitioned_rejects_foreign_messages() {
        let (p, parts, rules) = pp_fixture();
        let m = Message::from_order(&order(p.universe(), &["s1", "s2", "s3"]));
        assert!(matches!(
            partitioned_priority_run(&p, &parts, &[m.clone(), m.clone(), m], &rules),
            Err(Error::MessageNotInSpace { .. })
        ));
    }

    fn zone_rank_fixture() -> (Problem, Vec<Partition>, Message) {
        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s1", 1), ("s2", 1), ("s3", 1)]).unwrap();
        let part = Partition::new(p.universe(), [vec!["s1"], vec!["s2", "s3"]]).unwrap();
        let m = ranked_zonal_message(
            &part,
            &[vec!["s1".into()], vec!["s2".into(), "s3".into()]],
            &ZoneRanking::identity(2),
        )
        .unwrap();
        (p, vec![part; 2], m)
    }

    #[test]
    fn ranked_selector_restrictions() {
        let (p, parts, m) = zone_rank_fixture();
        let profile = [m.clone(), m];
        let t = ranked_partitioned_priority_run(&p, &parts, &profile, &[Rule::Order(vec![1])]).unwrap();
        assert_eq!(t.allocation(), alloc(&["s2", "s1"]));
        t.audit(&p).unwrap();

        let t = ranked_partitioned_priority_run(&p, &parts, &profile, &[]).unwrap();
        assert_eq!(t.allocation(), alloc(&["s1", "s2"]));

        let err = ranked_partitioned_priority_run(&p, &parts, &profile, &[Rule::Order(vec![1]), Rule::Order(vec![1])])
            .unwrap_err();
        assert!(matches!(err, Error::SelectorCondition { condition: 2, .. }), "{err}");
    }

    #[test]
    fn ranked_single_zone_is_serial_dictatorship() {
        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s1", 1), ("s2", 1), ("s3", 1)]).unwrap();
        let u = p.universe().clone();
        let parts = vec![Partition::single(&u); 2];
        for a in PreferenceOrder::all(&u) {
            for b in PreferenceOrder::all(&u) {
                let prefs = [a.clone(), b.clone()];
                let profile: Vec<Message> = prefs.iter().map(Message::from_order).collect();
                let t = ranked_partitioned_priority_run(&p, &parts, &profile, &[]).unwrap();
                assert_eq!(t.allocation(), serial_dictatorship(&p, &prefs).unwrap());
            }
        }
    }

    #[test]
    fn modular_example_6_1() {
        let (p, h) = ex61();
        let engine = ModularPriority::new(&p, &h, None).unwrap();
        let u = p.universe().clone();
        let prefs = [order(&u, &["s2", "s1"]), order(&u, &["s1", "s2"])];
        let profile = engine.truthful_profile(&prefs).unwrap();
        let t = engine.run(&profile).unwrap();
        assert_eq!(t.allocation(), alloc(&["s1", "s2"]));
        t.audit(&p).unwrap();
        assert!(respects_bounds(&t.allocation(), &h, &p).unwrap().passes());
        assert_eq!(t.steps[1].binding, BTreeSet::from([0]));
    }

    #[test]
    fn modular_without_bounds_is_serial_dictatorship() {
        let p = Problem::build(
            &[("i1", "a"), ("i2", "b"), ("i3", "a")],
            &[("s1", 1), ("s2", 1), ("s3", 1)],
        )
        .unwrap();
        let u = p.universe().clone();
        let engine = ModularPriority::new(&p, &UpperBoundSystem::empty(), None).unwrap();
        for a in PreferenceOrder::all(&u) {
            for b in PreferenceOrder::all(&u) {
                let prefs = [a.clone(), b.clone(), a.clone()];
                let t = engine.run(&engine.truthful_profile(&prefs).unwrap()).unwrap();
                assert_eq!(t.allocation(), serial_dictatorship(&p, &prefs).unwrap());
            }
        }
    }

    fn ex51() -> (Problem, UpperBoundSystem, Vec<Vec<usize>>) {
        let officers: Vec<(String, String)> = (1..=8)
            .map(|k| (format!("i{k}"), ((k - 1) % 2 + 1).to_string()))
            .collect();
        let refs: Vec<(&str, &str)> = officers.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let p = Problem::build(&refs, &[("s1", 2), ("s2", 2), ("s3", 2), ("s4", 2)]).unwrap();
        let h = UpperBoundSystem::new(vec![
            UpperBound::new(["1"], ["s1", "s2"], 2),
            UpperBound::new(["2"], ["s3", "s4"], 2),
        ])
        .unwrap();
        let exo = (0..8)
            .map(|k| if k % 2 == 0 { vec![0, 1] } else { vec![1, 0] })
            .collect();
        (p, h, exo)
    }

    #[test]
    fn modular_example_5_1_home_preferences() {
        let (p, h, exo) = ex51();
        let u = p.universe().clone();
        let engine = ModularPriority::new(&p, &h, Some(exo)).unwrap();
        let home1 = order(&u, &["s1", "s2", "s3", "s4"]);
        let home2 = order(&u, &["s3", "s4", "s1", "s2"]);
        let prefs: Vec<_> = (0..8)
            .map(|k| if k % 2 == 0 { home1.clone() } else { home2.clone() })
            .collect();
        let t = engine.run(&engine.truthful_profile(&prefs).unwrap()).unwrap();
        assert_eq!(t.allocation(), alloc(&["s1", "s3", "s1", "s3", "s4", "s2", "s4", "s2"]));
        assert!(respects_bounds(&t.allocation(), &h, &p).unwrap().passes());
        t.audit(&p).unwrap();
    }

    #[test]
    fn modular_ceiling_zero_is_enforced_from_the_start() {
        let p = Problem::build(&[("i1", "t")], &[("s1", 1), ("s2", 1)]).unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s1"], 0)]).unwrap();
        let engine = ModularPriority::new(&p, &h, None).unwrap();
        let prefs = [order(p.universe(), &["s1", "s2"])];
        let t = engine.run(&engine.truthful_profile(&prefs).unwrap()).unwrap();
        assert_eq!(t.allocation(), alloc(&["s2"]));
    }

    #[test]
    fn dynamic_example_6_1() {
        let (p, h) = ex61();
        let u = p.universe().clone();
        let mut run = DynamicRun::new(&p, &h).unwrap();
        let menu = run.menu().unwrap();
        assert_eq!(menu.z1, u.full());
        assert_eq!(menu.remaining, vec![2, 1]);
        assert_eq!(run.commit_ids(&["s2", "s1"]).unwrap(), 1);
        let menu = run.menu().unwrap();
        assert_eq!(menu.z1, u.set(["s1"]).unwrap());
        let view = menu.view(&p, &h);
        assert_eq!(view.officer_id.as_str(), "i2");
        assert_eq!(
            view.states,
            vec![MenuState {
                id: "s1".into(),
                remaining: 2
            }]
        );
        assert!(view.binding.is_empty());
        run.commit_ids(&["s1"]).unwrap();
        assert!(run.menu().is_none());
        assert_eq!(run.trace().allocation(), alloc(&["s2", "s1"]));
        run.trace().audit(&p).unwrap();

        let prefs = vec![order(&u, &["s2", "s1"]), order(&u, &["s1", "s2"])];
        let t = dynamic_modular_priority_run(&p, &h, &mut TruthProvider::new(prefs)).unwrap();
        assert_eq!(t.allocation(), alloc(&["s2", "s1"]));
        assert_eq!(t.steps[1].z2, Some(u.set(["s2"]).unwrap()));
    }

    #[test]
    fn dynamic_menu_excludes_binding_bounds() {
        let (p, h) = ex61();
        let mut run = DynamicRun::new(&p, &h).unwrap();
        run.commit_ids(&["s1", "s2"]).unwrap();
        let menu = run.menu().unwrap();
        assert_eq!(menu.binding, BTreeSet::from([0]));
        assert_eq!(menu.z1, p.universe().set(["s2"]).unwrap());
        assert_eq!(menu.view(&p, &h).binding[0].bound, h.bounds()[0]);
    }

    #[test]
    fn dynamic_rejects_bad_rankings_without_side_effects() {
        let (p, h) = ex61();
        let mut run = DynamicRun::new(&p, &h).unwrap();
        for bad in [vec!["s2"], vec!["s2", "s2"], vec!["s2", "s1", "s1"], vec!["s9", "s1"]] {
            assert!(
                matches!(run.commit_ids(&bad), Err(Error::InvalidRanking { .. })),
                "{bad:?}"
            );
            assert_eq!(run.round(), 0);
        }
        assert!(matches!(run.commit(&[]), Err(Error::InvalidRanking { .. })));
    }

    #[test]
    fn dynamic_without_bounds_is_serial_dictatorship() {
        let p = Problem::build(&[("i1", "a"), ("i2", "b"), ("i3", "a")], &[("s1", 2), ("s2", 1)]).unwrap();
        let u = p.universe().clone();
        for a in PreferenceOrder::all(&u) {
            for b in PreferenceOrder::all(&u) {
                let prefs = vec![a.clone(), b.clone(), b.clone()];
                let t = dynamic_modular_priority_run(
                    &p,
                    &UpperBoundSystem::empty(),
                    &mut TruthProvider::new(prefs.clone()),
                )
                .unwrap();
                assert_eq!(t.allocation(), serial_dictatorship(&p, &prefs).unwrap());
            }
        }
    }

    #[test]
    fn solvency_counterexample_replays() {
        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s", 2)]).unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s"], 1)]).unwrap();
        let SolvencyVerdict::Counterexample(ce) = check_sequential_solvency(&p, &h, 1_000).unwrap() else {
            panic!("expected a counterexample");
        };
        let replay = replay_solvency_counterexample(&p, &h, &ce).unwrap();
        assert!(replay.stranded_reached);
        assert_eq!(replay.placed.len(), 1);
    }

    #[test]
    fn early_stranding_is_a_counterexample() {
        let p = Problem::build(
            &[("i1", "t"), ("i2", "t"), ("i3", "t"), ("i4", "t")],
            &[("s1", 3), ("s2", 1)],
        )
        .unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s1"], 1)]).unwrap();
        let SolvencyVerdict::Counterexample(ce) = check_sequential_solvency(&p, &h, 10_000).unwrap() else {
            panic!("expected a counterexample");
        };
        assert!(replay_solvency_counterexample(&p, &h, &ce).unwrap().stranded_reached);
        let prefs = vec![order(p.universe(), &["s1", "s2"]); 4];
        assert!(matches!(
            dynamic_modular_priority_run(&p, &h, &mut TruthProvider::new(prefs)),
            Err(Error::NoAdmissibleZone { .. })
        ));
    }

    #[test]
    fn trace_serializes_with_identifiers() {
        let (p, h) = ex61();
        let prefs = vec![order(p.universe(), &["s2", "s1"]), order(p.universe(), &["s1", "s2"])];
        let t = dynamic_modular_priority_run(&p, &h, &mut TruthProvider::new(prefs)).unwrap();
        let debug = format!("{:?}", t.steps[0].message);
        assert!(debug.contains("s2"), "{debug}");
        let t2 = t.clone();
        assert_eq!(t, t2);
    }

    fn arb_zonal_instance() -> impl Strategy<Value = (Problem, Vec<Partition>, Vec<Message>, bool)> {
        (1usize..=3, 2usize..=4, any::<u64>(), any::<bool>()).prop_map(|(n, m, seed, ranked)| {
            let mut x = seed;
            let mut next = |b: usize| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 33) as usize % b
            };
            let officers: Vec<(String, String)> = (1..=n).map(|k| (format!("i{k}"), "t".to_string())).collect();
            let refs: Vec<(&str, &str)> = officers.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let names: Vec<String> = (1..=m).map(|s| format!("s{s}")).collect();
            let caps: Vec<(&str, usize)> = names.iter().map(|s| (s.as_str(), 1 + next(2))).collect();
            let total: usize = caps.iter().map(|c| c.1).sum();
            let caps = if total < n {
                names.iter().map(|s| (s.as_str(), n)).collect()
            } else {
                caps
            };
            let p = Problem::build(&refs, &caps).unwrap();
            let u = p.universe().clone();
            let mut parts = Vec::new();
            let mut profile = Vec::new();
            for _ in 0..n {
                let mut zones: BTreeMap<usize, StateSet> = BTreeMap::new();
                for s in 0..m {
                    zones.entry(next(2)).or_default().insert(s);
                }
                let part = Partition::from_sets(&u, zones.into_values().collect()).unwrap();
                let space = if ranked {
                    MessageSpace::RankedZonal(part.clone())
                } else {
                    MessageSpace::Zonal(part.clone())
                };
                let all = space.enumerate(10_000).unwrap();
                profile.push(all[next(all.len())].clone());
                parts.push(part);
            }
            (p, parts, profile, ranked)
        })
    }

    fn arb_bounded() -> impl Strategy<Value = (Problem, UpperBoundSystem, Vec<PreferenceOrder>)> {
        (1usize..=4, 2usize..=4, any::<u64>()).prop_map(|(n, m, seed)| {
            let mut x = seed;
            let mut next = move |b: usize| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 33) as usize % b
            };
            let officers: Vec<(String, String)> = (1..=n).map(|k| (format!("i{k}"), format!("t{}", next(2)))).collect();
            let refs: Vec<(&str, &str)> = officers.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let names: Vec<String> = (1..=m).map(|s| format!("s{s}")).collect();
            let mut caps: Vec<(&str, usize)> = names.iter().map(|s| (s.as_str(), 1 + next(2))).collect();
            while caps.iter().map(|c| c.1).sum::<usize>() < n {
                caps[0].1 += 1;
            }
            let p = Problem::build(&refs, &caps).unwrap();
            let bounds = (0..1 + next(2))
                .map(|_| {
                    let types: Vec<String> = (0..2).filter(|_| next(2) == 0).map(|t| format!("t{t}")).collect();
                    let types = if types.is_empty() {
                        vec!["t0".to_string()]
                    } else {
                        types
                    };
                    let states: Vec<&str> = names.iter().filter(|_| next(2) == 0).map(String::as_str).collect();
                    UpperBound::new(types.iter().map(String::as_str), states, next(3))
                })
                .collect();
            let h = UpperBoundSystem::new(bounds).unwrap();
            let all: Vec<PreferenceOrder> = PreferenceOrder::all(p.universe()).collect();
            let prefs = (0..n).map(|_| all[next(all.len())].clone()).collect();
            (p, h, prefs)
        })
    }

    proptest! {
        #[test]
        fn solvency_verdict_predicts_the_engines(case in arb_bounded()) {
            let (p, h, prefs) = case;
            match check_sequential_solvency(&p, &h, 1_000_000).unwrap() {
                SolvencyVerdict::Solvent { .. } => {
                    let engine = ModularPriority::new(&p, &h, None).unwrap();
                    let t = engine.run(&engine.truthful_profile(&prefs).unwrap()).unwrap();
                    prop_assert!(respects_bounds(&t.allocation(), &h, &p).unwrap().passes());
                    t.audit(&p).unwrap();
                    let d = dynamic_modular_priority_run(&p, &h, &mut TruthProvider::new(prefs)).unwrap();
                    prop_assert!(respects_bounds(&d.allocation(), &h, &p).unwrap().passes());
                    d.audit(&p).unwrap();
                }
                SolvencyVerdict::Counterexample(ce) => {
                    prop_assert!(replay_solvency_counterexample(&p, &h, &ce).unwrap().stranded_reached);
                }
                SolvencyVerdict::Inconclusive { .. } => prop_assert!(false, "budget too small"),
            }
        }
    }

    proptest! {
        #[test]
        fn engines_follow_the_m_queue(inst in arb_zonal_instance()) {
            let (p, parts, profile, ranked) = inst;
            let t = if ranked {
                ranked_partitioned_priority_run(&p, &parts, &profile, &[]).unwrap()
            } else {
                partitioned_priority_run(&p, &parts, &profile, &[]).unwrap()
            };
            prop_assert!(t.audit(&p).is_ok());
            let q = m_queue_run(&p, &profile, &[]).unwrap();
            prop_assert!(q.audit(&p).is_ok());
            prop_assert!(p.check_feasible(&t.slots()).is_ok());
        }

        #[test]
        fn later_messages_do_not_move_earlier_officers(inst in arb_zonal_instance(), pick in any::<usize>()) {
            let (p, parts, profile, ranked) = inst;
            let n = p.n();
            let i = pick % n;
            let space = if ranked { MessageSpace::RankedZonal(parts[i].clone()) } else { MessageSpace::Zonal(parts[i].clone()) };
            let run = |prof: &[Message]| if ranked {
                ranked_partitioned_priority_run(&p, &parts, prof, &[]).unwrap().slots()
            } else {
                partitioned_priority_run(&p, &parts, prof, &[]).unwrap().slots()
            };
            let base = run(&profile);
            for alt in space.enumerate(10_000).unwrap() {
                let mut prof = profile.clone();
                prof[i] = alt;
                prop_assert_eq!(&run(&prof)[..i], &base[..i]);
            }
        }

        #[test]
        fn modular_zone_ignores_own_message(seed in any::<u64>()) {
            let (p, h, exo) = ex51();
            let u = p.universe().clone();
            let engine = ModularPriority::new(&p, &h, Some(exo)).unwrap();
            let mut x = seed;
            let all: Vec<PreferenceOrder> = PreferenceOrder::all(&u).collect();
            let prefs: Vec<PreferenceOrder> = (0..8).map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                all[(x >> 33) as usize % all.len()].clone()
            }).collect();
            let profile = engine.truthful_profile(&prefs).unwrap();
            let base = engine.run(&profile).unwrap();
            prop_assert!(respects_bounds(&base.allocation(), &h, &p).unwrap().passes());
            let k = (x >> 7) as usize % 8;
            for alt in engine.space(k).enumerate(100).unwrap() {
                let mut prof = profile.clone();
                prof[k] = alt;
                let t = engine.run(&prof).unwrap();
                prop_assert_eq!(t.steps[k].zone, base.steps[k].zone);
                prop_assert_eq!(&t.slots()[..k], &base.slots()[..k]);
            }
        }
    }
}
