use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ids::{OfficerId, OfficerType, StateId, StateSet, Universe};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Officer {
    pub id: OfficerId,
    #[serde(rename = "type")]
    pub otype: OfficerType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct State {
    pub id: StateId,
    pub capacity: usize,
}

/// Officers in priority order (first is highest) and capacitated states.
#[derive(Debug, Clone)]
pub struct Problem {
    officers: Vec<Officer>,
    states: Vec<State>,
    universe: Universe,
    capacities: Vec<usize>,
}

impl Problem {
    pub fn new(officers: Vec<Officer>, states: Vec<State>) -> Result<Self> {
        let universe = Universe::new(states.iter().map(|s| s.id.clone()))?;
        let mut seen = BTreeSet::new();
        for o in &officers {
            if !seen.insert(o.id.clone()) {
                return Err(Error::DuplicateOfficer(o.id.clone()));
            }
        }
        for s in &states {
            if s.capacity == 0 {
                return Err(Error::ZeroCapacity(s.id.clone()));
            }
        }
        let capacity: usize = states.iter().map(|s| s.capacity).sum();
        if capacity < officers.len() {
            return Err(Error::CapacityShortfall {
                capacity,
                officers: officers.len(),
            });
        }
        let capacities = states.iter().map(|s| s.capacity).collect();
        Ok(Self {
            officers,
            states,
            universe,
            capacities,
        })
    }

    /// Shorthand for tests and fixtures: `(id, type)` officers and
    /// `(id, capacity)` states.
    pub fn build(officers: &[(&str, &str)], states: &[(&str, usize)]) -> Result<Self> {
        Self::new(
            officers
                .iter()
                .map(|(id, t)| Officer {
                    id: OfficerId::new(id),
                    otype: OfficerType::new(t),
                })
                .collect(),
            states
                .iter()
                .map(|(id, q)| State {
                    id: StateId::new(id),
                    capacity: *q,
                })
                .collect(),
        )
    }

    pub fn officers(&self) -> &[Officer] {
        &self.officers
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn n(&self) -> usize {
        self.officers.len()
    }

    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn capacity(&self, s: usize) -> usize {
        self.capacities[s]
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    pub fn officer_index(&self, id: &str) -> Result<usize> {
        self.officers
            .iter()
            .position(|o| o.id.as_str() == id)
            .ok_or_else(|| Error::UnknownOfficer(OfficerId::new(id)))
    }

    pub fn officer_type(&self, k: usize) -> &OfficerType {
        &self.officers[k].otype
    }

    pub fn types(&self) -> BTreeSet<OfficerType> {
        self.officers.iter().map(|o| o.otype.clone()).collect()
    }

    /// Number of officers of each type.
    pub fn type_counts(&self) -> BTreeMap<OfficerType, usize> {
        let mut counts = BTreeMap::new();
        for o in &self.officers {
            *counts.entry(o.otype.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Same states, officers replaced.
    pub fn with_officers(&self, officers: Vec<Officer>) -> Result<Self> {
        Self::new(officers, self.states.clone())
    }

    /// Checks an index allocation against capacities.
    pub fn check_feasible(&self, slots: &[usize]) -> Result<()> {
        if slots.len() != self.n() {
            return Err(Error::AllocationLength {
                expected: self.n(),
                got: slots.len(),
            });
        }
        let mut occ = vec![0usize; self.m()];
        for &s in slots {
            if s >= self.m() {
                return Err(Error::Precondition(format!("state index {s} out of range")));
            }
            occ[s] += 1;
        }
        for (s, &o) in occ.iter().enumerate() {
            if o > self.capacities[s] {
                return Err(Error::InfeasibleAllocation {
                    state: self.universe.id(s).clone(),
                    occupancy: o,
                    capacity: self.capacities[s],
                });
            }
        }
        Ok(())
    }

    /// States that still have spare capacity after the given assignments.
    pub fn spare(&self, slots: &[usize]) -> StateSet {
        let mut occ = vec![0usize; self.m()];
        for &s in slots {
            occ[s] += 1;
        }
        (0..self.m()).filter(|&s| occ[s] < self.capacities[s]).collect()
    }

    /// Every feasible allocation, in lexicographic order of state indices.
    /// Errors when the count would exceed `cap`.
    pub fn feasible_allocations(&self, cap: u128) -> Result<Vec<Vec<usize>>> {
        let bound = (self.m() as u128).checked_pow(self.n() as u32).unwrap_or(u128::MAX);
        if bound > cap {
            return Err(Error::CapExceeded { count: bound, cap });
        }
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(self.n());
        let mut occ = vec![0usize; self.m()];
        fn rec(p: &Problem, cur: &mut Vec<usize>, occ: &mut [usize], out: &mut Vec<Vec<usize>>) {
            if cur.len() == p.n() {
                out.push(cur.clone());
                return;
            }
            for s in 0..p.m() {
                if occ[s] < p.capacities[s] {
                    occ[s] += 1;
                    cur.push(s);
                    rec(p, cur, occ, out);
                    cur.pop();
                    occ[s] -= 1;
                }
            }
        }
        rec(self, &mut cur, &mut occ, &mut out);
        Ok(out)
    }

    pub fn allocation(&self, slots: &[usize]) -> Allocation {
        Allocation(slots.iter().map(|&s| self.universe.id(s).clone()).collect())
    }

    pub fn allocation_indices(&self, a: &Allocation) -> Result<Vec<usize>> {
        if a.0.len() != self.n() {
            return Err(Error::AllocationLength {
                expected: self.n(),
                got: a.0.len(),
            });
        }
        a.0.iter().map(|s| self.universe.index_of(s.as_str())).collect()
    }
}

/// One state per officer, aligned with the problem's priority order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Allocation(pub Vec<StateId>);

impl Allocation {
    pub fn new<I, S>(states: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<StateId>,
    {
        Self(states.into_iter().map(Into::into).collect())
    }

    pub fn get(&self, k: usize) -> &StateId {
        &self.0[k]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for Allocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}
