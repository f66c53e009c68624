//! Strict comparison relations over states.
//!
//! A [`Message`] stores its pairs exactly as reported. Maximal elements and
//! comparability are evaluated on the raw pairs; [`transitive_closure`] is
//! provided for diagnostics only and is never applied implicitly.

use std::collections::BTreeSet;
use std::fmt;

use itertools::Itertools;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ids::{StateId, StateSet, Universe};

/// An irreflexive, acyclic relation over a [`Universe`]; `(a, b)` reads "a
/// strictly above b".
#[derive(Clone, PartialEq, Eq)]
pub struct Message {
    universe: Universe,
    /// `above[b]` holds every `a` with `(a, b)` in the relation.
    above: Vec<u64>,
}

impl Message {
    pub fn empty(universe: &Universe) -> Self {
        Self {
            universe: universe.clone(),
            above: vec![0; universe.len()],
        }
    }

    /// Builds a message from index pairs, validating irreflexivity and
    /// acyclicity.
    pub fn from_index_pairs<I>(universe: &Universe, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut above = vec![0u64; universe.len()];
        for (a, b) in pairs {
            if a >= universe.len() || b >= universe.len() {
                return Err(Error::Precondition(format!(
                    "pair ({a}, {b}) is outside a universe of {} states",
                    universe.len()
                )));
            }
            if a == b {
                return Err(Error::ReflexivePair(universe.id(a).clone()));
            }
            above[b] |= 1 << a;
        }
        let m = Self {
            universe: universe.clone(),
            above,
        };
        if let Some(cycle) = m.find_cycle() {
            return Err(Error::Cycle(
                cycle.into_iter().map(|i| universe.id(i).clone()).collect(),
            ));
        }
        Ok(m)
    }

    /// The complete message of a total order.
    pub fn from_order(p: &PreferenceOrder) -> Self {
        let mut above = vec![0u64; p.universe.len()];
        for (a, b) in p.order.iter().tuple_combinations() {
            above[*b] |= 1 << a;
        }
        Self {
            universe: p.universe.clone(),
            above,
        }
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    /// `a` strictly above `b` (index form).
    pub fn prefers(&self, a: usize, b: usize) -> bool {
        self.above[b] >> a & 1 == 1
    }

    /// States directly above `b`.
    pub fn above(&self, b: usize) -> StateSet {
        StateSet(self.above[b])
    }

    /// States directly below `a`.
    pub fn below(&self, a: usize) -> StateSet {
        (0..self.above.len()).filter(|&b| self.prefers(a, b)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.above.iter().all(|&m| m == 0)
    }

    pub fn pair_count(&self) -> usize {
        self.above.iter().map(|m| m.count_ones() as usize).sum()
    }

    /// Pairs as indices, ordered by (upper, lower).
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.above.len())
            .flat_map(|b| StateSet(self.above[b]).iter().map(move |a| (a, b)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Pairs as identifiers, in lexicographic order.
    pub fn pairs(&self) -> BTreeSet<(StateId, StateId)> {
        self.index_pairs()
            .into_iter()
            .map(|(a, b)| (self.universe.id(a).clone(), self.universe.id(b).clone()))
            .collect()
    }

    /// `G(X, m)` on index sets: members of `x` not dominated inside `x`.
    pub fn maximal(&self, x: StateSet) -> StateSet {
        x.iter().filter(|&s| self.above[s] & x.0 == 0).collect()
    }

    /// Members of `x` dominating no other member of `x`.
    pub fn minimal(&self, x: StateSet) -> StateSet {
        x.iter().filter(|&s| x.iter().all(|t| !self.prefers(s, t))).collect()
    }

    pub fn comparable_idx(&self, a: usize, b: usize) -> bool {
        a == b || self.prefers(a, b) || self.prefers(b, a)
    }

    /// Pairs restricted to `x`.
    pub fn restrict(&self, x: StateSet) -> Message {
        let above = self
            .above
            .iter()
            .enumerate()
            .map(|(b, &m)| if x.contains(b) { m & x.0 } else { 0 })
            .collect();
        Message {
            universe: self.universe.clone(),
            above,
        }
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        let n = self.above.len();
        let below: Vec<StateSet> = (0..n).map(|a| self.below(a)).collect();
        // 0 unvisited, 1 on stack, 2 done
        let mut color = vec![0u8; n];
        let mut stack: Vec<usize> = Vec::new();
        fn visit(v: usize, below: &[StateSet], color: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
            color[v] = 1;
            stack.push(v);
            for w in below[v].iter() {
                if color[w] == 1 {
                    let start = stack.iter().position(|&x| x == w).unwrap();
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(w);
                    return Some(cycle);
                }
                if color[w] == 0 {
                    if let Some(c) = visit(w, below, color, stack) {
                        return Some(c);
                    }
                }
            }
            stack.pop();
            color[v] = 2;
            None
        }
        for v in 0..n {
            if color[v] == 0 {
                if let Some(c) = visit(v, &below, &mut color, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }
}

impl fmt::Debug for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set()
            .entries(
                self.index_pairs()
                    .into_iter()
                    .map(|(a, b)| format!("{}>{}", self.universe.id(a), self.universe.id(b))),
            )
            .finish()
    }
}

impl Serialize for Message {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs = self.pairs();
        let mut seq = serializer.serialize_seq(Some(pairs.len()))?;
        for (a, b) in &pairs {
            seq.serialize_element(&[a, b])?;
        }
        seq.end()
    }
}

/// A strict total order over a universe, best first.
#[derive(Clone, PartialEq, Eq)]
pub struct PreferenceOrder {
    universe: Universe,
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl PreferenceOrder {
    pub fn new<I, S>(universe: &Universe, ranking: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let order = ranking
            .into_iter()
            .map(|s| universe.index_of(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(universe, order)
    }

    pub fn from_indices(universe: &Universe, order: Vec<usize>) -> Result<Self> {
        let n = universe.len();
        if order.len() != n {
            return Err(Error::InvalidOrder(format!(
                "lists {} states, universe has {n}",
                order.len()
            )));
        }
        let mut rank = vec![usize::MAX; n];
        for (r, &s) in order.iter().enumerate() {
            if s >= n || rank[s] != usize::MAX {
                return Err(Error::InvalidOrder(format!(
                    "state `{}` listed twice",
                    universe.id(s.min(n - 1))
                )));
            }
            rank[s] = r;
        }
        Ok(Self {
            universe: universe.clone(),
            order,
            rank,
        })
    }

    /// Every total order over the universe, in lexicographic index order.
    pub fn all(universe: &Universe) -> impl Iterator<Item = PreferenceOrder> + '_ {
        (0..universe.len())
            .permutations(universe.len())
            .map(move |order| PreferenceOrder::from_indices(universe, order).unwrap())
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn ids(&self) -> Vec<StateId> {
        self.order.iter().map(|&i| self.universe.id(i).clone()).collect()
    }

    /// Position of state `s`; 0 is best.
    pub fn rank(&self, s: usize) -> usize {
        self.rank[s]
    }

    pub fn prefers(&self, a: usize, b: usize) -> bool {
        self.rank[a] < self.rank[b]
    }

    /// Best member of `x`.
    pub fn best_in(&self, x: StateSet) -> Option<usize> {
        x.iter().min_by_key(|&s| self.rank[s])
    }

    pub fn worst_in(&self, x: StateSet) -> Option<usize> {
        x.iter().max_by_key(|&s| self.rank[s])
    }
}

impl fmt::Debug for PreferenceOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}",
            self.order.iter().map(|&i| self.universe.id(i).as_str()).join(">")
        )
    }
}

impl Serialize for PreferenceOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.ids().serialize(serializer)
    }
}

/// Validates a reported relation and stores it without closing it.
pub fn validate_message<I, A, B>(pairs: I, universe: &Universe) -> Result<Message>
where
    I: IntoIterator<Item = (A, B)>,
    A: AsRef<str>,
    B: AsRef<str>,
{
    let pairs = pairs
        .into_iter()
        .map(|(a, b)| Ok((universe.index_of(a.as_ref())?, universe.index_of(b.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    Message::from_index_pairs(universe, pairs)
}

/// `G(X, m)`: the members of `x` with nothing in `x` directly above them.
pub fn maximal_elements<I, S>(x: I, m: &Message) -> Result<BTreeSet<StateId>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let set = m.universe.set(x)?;
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(m.universe.ids(m.maximal(set)))
}

pub fn comparable(s: &str, s2: &str, m: &Message) -> Result<bool> {
    let a = m.universe.index_of(s)?;
    let b = m.universe.index_of(s2)?;
    Ok(m.comparable_idx(a, b))
}

/// Every pair of `m` agrees with `p`.
pub fn is_truthful(m: &Message, p: &PreferenceOrder) -> Result<bool> {
    if !m.universe.same(&p.universe) {
        return Err(Error::UniverseMismatch);
    }
    Ok(truthful_idx(m, p))
}

pub(crate) fn truthful_idx(m: &Message, p: &PreferenceOrder) -> bool {
    m.above
        .iter()
        .enumerate()
        .all(|(b, &above)| StateSet(above).iter().all(|a| p.prefers(a, b)))
}

/// Every pair of `coarse` is a pair of `refined`.
pub fn contains_more_information(refined: &Message, coarse: &Message) -> Result<bool> {
    if !refined.universe.same(&coarse.universe) {
        return Err(Error::UniverseMismatch);
    }
    Ok(refined.above.iter().zip(&coarse.above).all(|(r, c)| c & !r == 0))
}

/// Transitive closure of `m`. Diagnostic utility; messages are never closed
/// implicitly.
pub fn transitive_closure(m: &Message) -> Message {
    let n = m.above.len();
    let mut above = m.above.clone();
    for k in 0..n {
        for b in 0..n {
            if above[b] >> k & 1 == 1 {
                above[b] |= above[k];
            }
        }
    }
    Message {
        universe: m.universe.clone(),
        above,
    }
}
