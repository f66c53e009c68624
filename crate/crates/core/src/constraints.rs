//! Modular upper-bound systems and the sequential-solvency verifier.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ids::{OfficerType, StateId, StateSet};
use crate::problem::{Allocation, Problem};

/// At most `ceiling` officers whose type is in `types` may hold a state in
/// `states`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpperBound {
    pub types: BTreeSet<OfficerType>,
    pub states: BTreeSet<StateId>,
    pub ceiling: usize,
}

impl UpperBound {
    pub fn new<T, S>(types: T, states: S, ceiling: usize) -> Self
    where
        T: IntoIterator,
        T::Item: Into<OfficerType>,
        S: IntoIterator,
        S::Item: Into<StateId>,
    {
        Self {
            types: types.into_iter().map(Into::into).collect(),
            states: states.into_iter().map(Into::into).collect(),
            ceiling,
        }
    }

    pub fn covers(&self, s: &StateId, t: &OfficerType) -> bool {
        self.states.contains(s) && self.types.contains(t)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct UpperBoundSystem {
    bounds: Vec<UpperBound>,
}

impl UpperBoundSystem {
    pub fn new(bounds: Vec<UpperBound>) -> Result<Self> {
        if let Some(h) = bounds.iter().position(|b| b.types.is_empty()) {
            return Err(Error::EmptyBoundTypes(h));
        }
        Ok(Self { bounds })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn bounds(&self) -> &[UpperBound] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    /// Union of two systems.
    pub fn union(&self, other: &UpperBoundSystem) -> UpperBoundSystem {
        let mut bounds = self.bounds.clone();
        bounds.extend(other.bounds.iter().cloned());
        UpperBoundSystem { bounds }
    }

    /// Checks that every referenced state exists in the problem.
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        for b in &self.bounds {
            for s in &b.states {
                problem.universe().index_of(s.as_str())?;
            }
        }
        Ok(())
    }
}

/// Indices of the bounds covering state `s` for type `t`.
pub fn signature(h: &UpperBoundSystem, s: &StateId, t: &OfficerType) -> BTreeSet<usize> {
    h.bounds
        .iter()
        .enumerate()
        .filter(|(_, b)| b.covers(s, t))
        .map(|(i, _)| i)
        .collect()
}

/// An upper-bound system compiled against a problem's officers and states.
#[derive(Debug, Clone)]
pub struct CompiledBounds {
    /// `covers[h][k]`: officer `k`'s type is covered by bound `h`.
    pub covers: Vec<Vec<bool>>,
    pub states: Vec<StateSet>,
    pub ceilings: Vec<usize>,
}

impl CompiledBounds {
    pub fn new(problem: &Problem, h: &UpperBoundSystem) -> Result<Self> {
        h.validate(problem)?;
        let uni = problem.universe();
        Ok(Self {
            covers: h
                .bounds
                .iter()
                .map(|b| problem.officers().iter().map(|o| b.types.contains(&o.otype)).collect())
                .collect(),
            states: h
                .bounds
                .iter()
                .map(|b| uni.set(b.states.iter()).expect("validated"))
                .collect(),
            ceilings: h.bounds.iter().map(|b| b.ceiling).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ceilings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ceilings.is_empty()
    }

    /// Bound counts for a (possibly partial) assignment; `slots[k]` is officer
    /// `k`'s state.
    pub fn counts(&self, slots: &[usize]) -> Vec<usize> {
        (0..self.len())
            .map(|h| {
                slots
                    .iter()
                    .enumerate()
                    .filter(|&(k, &s)| self.covers[h][k] && self.states[h].contains(s))
                    .count()
            })
            .collect()
    }

    pub fn respects(&self, slots: &[usize]) -> bool {
        self.counts(slots).iter().zip(&self.ceilings).all(|(c, k)| c <= k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundViolation {
    pub bound: usize,
    pub count: usize,
    pub ceiling: usize,
    pub overflow: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundsVerdict {
    pub violations: Vec<BoundViolation>,
    /// Bound counts, aligned with the system.
    pub counts: Vec<usize>,
}

impl BoundsVerdict {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Counts every bound on a feasible allocation and reports overflows.
pub fn respects_bounds(a: &Allocation, h: &UpperBoundSystem, problem: &Problem) -> Result<BoundsVerdict> {
    let slots = problem.allocation_indices(a)?;
    problem.check_feasible(&slots)?;
    let compiled = CompiledBounds::new(problem, h)?;
    let counts = compiled.counts(&slots);
    let violations = counts
        .iter()
        .zip(&compiled.ceilings)
        .enumerate()
        .filter(|(_, (c, k))| c > k)
        .map(|(bound, (&count, &ceiling))| BoundViolation {
            bound,
            count,
            ceiling,
            overflow: count - ceiling,
        })
        .collect();
    Ok(BoundsVerdict { violations, counts })
}

/// Indices of the bounds met with equality; errors when a bound is exceeded.
pub fn binding_bounds(a: &Allocation, h: &UpperBoundSystem, problem: &Problem) -> Result<BTreeSet<usize>> {
    let v = respects_bounds(a, h, problem)?;
    if let Some(x) = v.violations.first() {
        return Err(Error::BoundViolated {
            bound: x.bound,
            count: x.count,
            ceiling: x.ceiling,
        });
    }
    Ok(v.counts
        .iter()
        .zip(h.bounds())
        .enumerate()
        .filter(|(_, (c, b))| **c == b.ceiling)
        .map(|(i, _)| i)
        .collect())
}

pub const DEFAULT_SOLVENCY_BUDGET: u64 = 10_000_000;

/// A placement of some officers that leaves a further officer, of type
/// `officer_type`, with no admissible state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SolvencyCounterexample {
    pub officer_type: OfficerType,
    /// Officers of each type placed in each state.
    pub occupancy: BTreeMap<OfficerType, BTreeMap<StateId, usize>>,
    /// Bounds met with equality by the placement.
    pub binding: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SolvencyVerdict {
    Solvent { nodes: u64 },
    Counterexample(SolvencyCounterexample),
    Inconclusive { nodes: u64, budget: u64 },
}

struct Class {
    states: Vec<usize>,
    capacity: usize,
    /// Bounds containing the class's states.
    bounds: Vec<usize>,
}

/// Searches for a placement of some of the other officers that respects `h`
/// and leaves an officer without a state that has spare capacity and no
/// binding bound for its type. Placements of fewer than `n - 1` officers are
/// included because the engines place officers one at a time.
///
/// Officers are collapsed to types and states with identical capacity and
/// bound membership to classes. The search enumerates the set of bounds
/// required to bind, prunes on seat totals, then runs a depth-first search
/// over type-by-class occupancy counts. Running out of `budget` nodes yields
/// [`SolvencyVerdict::Inconclusive`].
pub fn check_sequential_solvency(problem: &Problem, h: &UpperBoundSystem, budget: u64) -> Result<SolvencyVerdict> {
    h.validate(problem)?;
    let uni = problem.universe();
    let m = problem.m();
    let member: Vec<StateSet> = h
        .bounds()
        .iter()
        .map(|b| uni.set(b.states.iter()).expect("validated"))
        .collect();

    let mut classes: Vec<Class> = Vec::new();
    let mut key_of: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
    for s in 0..m {
        let bounds: Vec<usize> = (0..h.len()).filter(|&b| member[b].contains(s)).collect();
        let key = (problem.capacity(s), bounds.clone());
        let c = *key_of.entry(key).or_insert_with(|| {
            classes.push(Class {
                states: Vec::new(),
                capacity: 0,
                bounds,
            });
            classes.len() - 1
        });
        classes[c].states.push(s);
        classes[c].capacity += problem.capacity(s);
    }

    let counts = problem.type_counts();
    let types: Vec<OfficerType> = counts.keys().cloned().collect();
    let mut nodes = 0u64;
    for (ti, tau) in types.iter().enumerate() {
        let others: Vec<usize> = types
            .iter()
            .enumerate()
            .map(|(j, t)| counts[t] - usize::from(j == ti))
            .collect();
        let total_others: usize = others.iter().sum();
        let h_tau: Vec<usize> = (0..h.len())
            .filter(|&b| h.bounds()[b].types.contains(tau) && !member[b].is_empty())
            .collect();
        if h_tau.len() > 24 {
            return Err(Error::CapExceeded {
                count: 1u128 << h_tau.len(),
                cap: 1 << 24,
            });
        }
        for pattern in 0u32..(1u32 << h_tau.len()) {
            let blocking: Vec<usize> = (0..h_tau.len())
                .filter(|&j| pattern >> j & 1 == 1)
                .map(|j| h_tau[j])
                .collect();
            let covered = blocking.iter().fold(StateSet::EMPTY, |acc, &b| acc.union(member[b]));
            let must_fill: Vec<bool> = classes.iter().map(|c| !covered.contains(c.states[0])).collect();
            let fill: usize = classes
                .iter()
                .zip(&must_fill)
                .filter(|(_, f)| **f)
                .map(|(c, _)| c.capacity)
                .sum();
            let largest = blocking.iter().map(|&b| h.bounds()[b].ceiling).max().unwrap_or(0);
            if fill + largest > total_others {
                continue;
            }
            let mut search = Search {
                h,
                types: &types,
                classes: &classes,
                must_fill: &must_fill,
                blocking: &blocking,
                remaining: others.clone(),
                class_used: vec![0; classes.len()],
                bound_used: vec![0; h.len()],
                x: vec![vec![0; classes.len()]; types.len()],
                order: class_order(&classes, &must_fill),
                nodes: &mut nodes,
                budget,
            };
            match search.run(0, 0) {
                Outcome::Found => {
                    let x = search.x.clone();
                    let bound_used = search.bound_used.clone();
                    return Ok(SolvencyVerdict::Counterexample(counterexample(
                        problem,
                        h,
                        &types,
                        &classes,
                        tau,
                        &x,
                        &bound_used,
                    )));
                }
                Outcome::Exhausted => {
                    return Ok(SolvencyVerdict::Inconclusive { nodes, budget });
                }
                Outcome::None => {}
            }
        }
    }
    Ok(SolvencyVerdict::Solvent { nodes })
}

fn class_order(classes: &[Class], must_fill: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by_key(|&c| (!must_fill[c], classes[c].capacity, c));
    order
}

fn counterexample(
    problem: &Problem,
    h: &UpperBoundSystem,
    types: &[OfficerType],
    classes: &[Class],
    tau: &OfficerType,
    x: &[Vec<usize>],
    bound_used: &[usize],
) -> SolvencyCounterexample {
    let uni = problem.universe();
    let mut per_state = vec![vec![0usize; problem.m()]; types.len()];
    for (c, class) in classes.iter().enumerate() {
        let mut room: Vec<usize> = class.states.iter().map(|&s| problem.capacity(s)).collect();
        for (t, row) in x.iter().enumerate() {
            let mut left = row[c];
            for (j, &s) in class.states.iter().enumerate() {
                let take = left.min(room[j]);
                per_state[t][s] += take;
                room[j] -= take;
                left -= take;
            }
        }
    }
    SolvencyCounterexample {
        officer_type: tau.clone(),
        occupancy: types
            .iter()
            .enumerate()
            .map(|(t, ty)| {
                (
                    ty.clone(),
                    (0..problem.m()).map(|s| (uni.id(s).clone(), per_state[t][s])).collect(),
                )
            })
            .collect(),
        binding: (0..h.len())
            .filter(|&b| bound_used[b] == h.bounds()[b].ceiling)
            .collect(),
    }
}

enum Outcome {
    Found,
    None,
    Exhausted,
}

struct Search<'a> {
    h: &'a UpperBoundSystem,
    types: &'a [OfficerType],
    classes: &'a [Class],
    must_fill: &'a [bool],
    blocking: &'a [usize],
    remaining: Vec<usize>,
    class_used: Vec<usize>,
    bound_used: Vec<usize>,
    x: Vec<Vec<usize>>,
    order: Vec<usize>,
    nodes: &'a mut u64,
    budget: u64,
}

impl Search<'_> {
    fn covers(&self, b: usize, t: usize) -> bool {
        self.h.bounds()[b].types.contains(&self.types[t])
    }

    fn limit(&self, t: usize, c: usize) -> usize {
        let class = &self.classes[c];
        let mut lim = self.remaining[t].min(class.capacity - self.class_used[c]);
        for &b in &class.bounds {
            if self.covers(b, t) {
                lim = lim.min(self.h.bounds()[b].ceiling - self.bound_used[b]);
            }
        }
        lim
    }

    /// Remaining requirements can still be met by the cells after `(t, pos)`.
    fn feasible(&self, t: usize, pos: usize) -> bool {
        let later_types: usize = self.remaining[t + 1..].iter().sum();
        for (c, class) in self.classes.iter().enumerate() {
            if !self.must_fill[c] {
                continue;
            }
            let need = class.capacity - self.class_used[c];
            let open_here = self.order[pos..].contains(&c);
            let supply = later_types + if open_here { self.remaining[t] } else { 0 };
            if need > supply {
                return false;
            }
        }
        for &b in self.blocking {
            let need = self.h.bounds()[b].ceiling - self.bound_used[b];
            if need == 0 {
                continue;
            }
            let mut supply = 0;
            for u in t..self.types.len() {
                if self.covers(b, u) {
                    supply += self.remaining[u];
                }
            }
            if need > supply {
                return false;
            }
        }
        true
    }

    fn complete(&self) -> bool {
        self.classes
            .iter()
            .enumerate()
            .all(|(c, class)| !self.must_fill[c] || self.class_used[c] == class.capacity)
            && self
                .blocking
                .iter()
                .all(|&b| self.bound_used[b] == self.h.bounds()[b].ceiling)
    }

    fn set(&mut self, t: usize, c: usize, v: usize, sign: bool) {
        let apply = |x: &mut usize| {
            if sign {
                *x += v
            } else {
                *x -= v
            }
        };
        apply(&mut self.class_used[c]);
        for i in 0..self.classes[c].bounds.len() {
            let b = self.classes[c].bounds[i];
            if self.covers(b, t) {
                apply(&mut self.bound_used[b]);
            }
        }
        if sign {
            self.remaining[t] -= v;
            self.x[t][c] += v;
        } else {
            self.remaining[t] += v;
            self.x[t][c] -= v;
        }
    }

    fn run(&mut self, t: usize, pos: usize) -> Outcome {
        *self.nodes += 1;
        if *self.nodes > self.budget {
            return Outcome::Exhausted;
        }
        if t == self.types.len() {
            return if self.complete() { Outcome::Found } else { Outcome::None };
        }
        if pos == self.order.len() {
            return self.run(t + 1, 0);
        }
        if !self.feasible(t, pos) {
            return Outcome::None;
        }
        let c = self.order[pos];
        let lim = self.limit(t, c);
        for v in (0..=lim).rev() {
            self.set(t, c, v, true);
            let r = self.run(t, pos + 1);
            if matches!(r, Outcome::Found) {
                return r;
            }
            self.set(t, c, v, false);
            if matches!(r, Outcome::Exhausted) {
                return r;
            }
        }
        Outcome::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;

    fn ex61() -> (Problem, UpperBoundSystem) {
        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s1", 2), ("s2", 1)]).unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s1"], 1)]).unwrap();
        (p, h)
    }

    pub(crate) fn ex52_bounds() -> UpperBoundSystem {
        UpperBoundSystem::new(vec![
            UpperBound::new(["1"], ["s1", "s2", "s3"], 6),
            UpperBound::new(["2"], ["s4", "s5", "s6"], 6),
            UpperBound::new(["3"], ["s7", "s8", "s9"], 6),
            UpperBound::new(["1", "2", "3"], ["s2", "s3", "s5", "s6", "s8", "s9"], 19),
        ])
        .unwrap()
    }

    fn ex52() -> Problem {
        let officers: Vec<(String, String)> = (1..=27)
            .map(|k| (format!("d{k}"), format!("{}", (k - 1) % 3 + 1)))
            .collect();
        let o: Vec<(&str, &str)> = officers.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let states: Vec<String> = (1..=9).map(|k| format!("s{k}")).collect();
        let s: Vec<(&str, usize)> = states.iter().map(|x| (x.as_str(), 4)).collect();
        Problem::build(&o, &s).unwrap()
    }

    fn ex51() -> (Problem, UpperBoundSystem) {
        let p = Problem::build(
            &[
                ("i1", "1"),
                ("i2", "2"),
                ("i3", "1"),
                ("i4", "2"),
                ("i5", "1"),
                ("i6", "2"),
                ("i7", "1"),
                ("i8", "2"),
            ],
            &[("s1", 2), ("s2", 2), ("s3", 2), ("s4", 2)],
        )
        .unwrap();
        let h = UpperBoundSystem::new(vec![
            UpperBound::new(["1"], ["s1", "s2"], 2),
            UpperBound::new(["2"], ["s3", "s4"], 2),
        ])
        .unwrap();
        (p, h)
    }

    #[test]
    fn signature_cases() {
        let h = ex52_bounds();
        assert!(signature(&UpperBoundSystem::empty(), &"s1".into(), &"1".into()).is_empty());
        assert_eq!(signature(&h, &"s2".into(), &"1".into()), BTreeSet::from([0, 3]));
        assert!(signature(&h, &"s4".into(), &"1".into()).is_empty());
        assert_eq!(signature(&h, &"s1".into(), &"1".into()), BTreeSet::from([0]));
        assert_eq!(signature(&h, &"s5".into(), &"1".into()), BTreeSet::from([3]));
    }

    #[test]
    fn empty_bound_types_rejected() {
        let b = UpperBound::new(Vec::<&str>::new(), ["s1"], 1);
        assert_eq!(UpperBoundSystem::new(vec![b]).unwrap_err(), Error::EmptyBoundTypes(0));
    }

    #[test]
    fn example_6_1_bounds() {
        let (p, h) = ex61();
        let a = Allocation::new(["s1", "s2"]);
        assert!(respects_bounds(&a, &h, &p).unwrap().passes());
        assert_eq!(binding_bounds(&a, &h, &p).unwrap(), BTreeSet::from([0]));
        let a = Allocation::new(["s2", "s1"]);
        assert_eq!(binding_bounds(&a, &h, &p).unwrap(), BTreeSet::from([0]));
        assert!(respects_bounds(&a, &UpperBoundSystem::empty(), &p).unwrap().passes());
    }

    #[test]
    fn two_on_s1_overflows_by_one() {
        let p = Problem::build(&[("i1", "t"), ("i2", "t"), ("i3", "t")], &[("s1", 2), ("s2", 2)]).unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s1"], 1)]).unwrap();
        let v = respects_bounds(&Allocation::new(["s1", "s1", "s2"]), &h, &p).unwrap();
        assert_eq!(
            v.violations,
            vec![BoundViolation {
                bound: 0,
                count: 2,
                ceiling: 1,
                overflow: 1
            }]
        );
        assert!(matches!(
            binding_bounds(&Allocation::new(["s1", "s1", "s2"]), &h, &p),
            Err(Error::BoundViolated { .. })
        ));
    }

    #[test]
    fn infeasible_allocation_is_an_error() {
        let (p, h) = ex61();
        assert!(matches!(
            respects_bounds(&Allocation::new(["s2", "s2"]), &h, &p),
            Err(Error::InfeasibleAllocation { .. })
        ));
    }

    #[test]
    fn unknown_bound_state() {
        let (p, _) = ex61();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s9"], 1)]).unwrap();
        assert!(matches!(
            respects_bounds(&Allocation::new(["s1", "s2"]), &h, &p),
            Err(Error::UnknownState(_))
        ));
    }

    #[test]
    fn solvency_of_examples() {
        let (p, h) = ex51();
        assert!(matches!(
            check_sequential_solvency(&p, &h, DEFAULT_SOLVENCY_BUDGET).unwrap(),
            SolvencyVerdict::Solvent { .. }
        ));
        assert!(matches!(
            check_sequential_solvency(&ex52(), &ex52_bounds(), DEFAULT_SOLVENCY_BUDGET).unwrap(),
            SolvencyVerdict::Solvent { .. }
        ));
        let (p, h) = ex61();
        assert!(matches!(
            check_sequential_solvency(&p, &h, DEFAULT_SOLVENCY_BUDGET).unwrap(),
            SolvencyVerdict::Solvent { .. }
        ));
    }

    #[test]
    fn forced_violation_counterexample() {
        let p = Problem::build(&[("i1", "t"), ("i2", "t")], &[("s", 2)]).unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s"], 1)]).unwrap();
        match check_sequential_solvency(&p, &h, DEFAULT_SOLVENCY_BUDGET).unwrap() {
            SolvencyVerdict::Counterexample(c) => {
                assert_eq!(c.officer_type, "t".into());
                assert_eq!(c.occupancy[&OfficerType::new("t")][&StateId::new("s")], 1);
                assert_eq!(c.binding, BTreeSet::from([0]));
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn budget_exhaustion_is_inconclusive() {
        let (p, h) = ex51();
        assert!(matches!(
            check_sequential_solvency(&p, &h, 1).unwrap(),
            SolvencyVerdict::Inconclusive { budget: 1, .. }
        ));
    }

    #[test]
    fn zero_ceiling_on_everything_strands_a_lone_officer() {
        let p = Problem::build(&[("i1", "t")], &[("s1", 1)]).unwrap();
        let h = UpperBoundSystem::new(vec![UpperBound::new(["t"], ["s1"], 0)]).unwrap();
        assert!(matches!(
            check_sequential_solvency(&p, &h, 1000).unwrap(),
            SolvencyVerdict::Counterexample(_)
        ));
    }
}
