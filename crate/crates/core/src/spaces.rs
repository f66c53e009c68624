//! Message-space families: complete, zonal, ranked-zonal, explicit and
//! modular-induced.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use itertools::Itertools;
use serde::Serialize;

use crate::constraints::{signature, UpperBoundSystem};
use crate::error::{Error, Result};
use crate::ids::{OfficerType, StateId, StateSet, Universe};
use crate::relations::{truthful_idx, Message, PreferenceOrder};

/// Default cap on the number of messages a space may enumerate.
pub const DEFAULT_MESSAGE_CAP: u128 = 720;

/// An ordered partition of the universe into non-empty zones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    universe: Universe,
    zones: Vec<StateSet>,
    zone_of: Vec<usize>,
}

impl Partition {
    pub fn new<Z, S>(universe: &Universe, zones: impl IntoIterator<Item = Z>) -> Result<Self>
    where
        Z: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sets = zones.into_iter().map(|z| universe.set(z)).collect::<Result<Vec<_>>>()?;
        Self::from_sets(universe, sets)
    }

    pub fn from_sets(universe: &Universe, zones: Vec<StateSet>) -> Result<Self> {
        let mut zone_of = vec![usize::MAX; universe.len()];
        for (z, set) in zones.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidPartition(format!("zone {} is empty", z + 1)));
            }
            for s in set.iter() {
                if s >= universe.len() {
                    return Err(Error::InvalidPartition(format!("state index {s} out of range")));
                }
                if zone_of[s] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "state `{}` appears in two zones",
                        universe.id(s)
                    )));
                }
                zone_of[s] = z;
            }
        }
        if let Some(s) = zone_of.iter().position(|&z| z == usize::MAX) {
            return Err(Error::InvalidPartition(format!(
                "state `{}` is in no zone",
                universe.id(s)
            )));
        }
        Ok(Self {
            universe: universe.clone(),
            zones,
            zone_of,
        })
    }

    /// The one-zone partition.
    pub fn single(universe: &Universe) -> Self {
        if universe.is_empty() {
            return Self {
                universe: universe.clone(),
                zones: Vec::new(),
                zone_of: Vec::new(),
            };
        }
        Self::from_sets(universe, vec![universe.full()]).expect("whole universe")
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn zones(&self) -> &[StateSet] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn zone(&self, z: usize) -> StateSet {
        self.zones[z]
    }

    pub fn zone_of(&self, s: usize) -> usize {
        self.zone_of[s]
    }

    pub fn zone_ids(&self, z: usize) -> BTreeSet<StateId> {
        self.universe.ids(self.zones[z])
    }

    /// Zones as identifier lists in universe order.
    pub fn to_ids(&self) -> Vec<Vec<StateId>> {
        self.zones
            .iter()
            .map(|z| z.iter().map(|s| self.universe.id(s).clone()).collect())
            .collect()
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_ids().serialize(serializer)
    }
}

/// A ranking over zone indices, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ZoneRanking(Vec<usize>);

impl ZoneRanking {
    pub fn new(order: Vec<usize>, zones: usize) -> Result<Self> {
        let mut seen = vec![false; zones];
        if order.len() != zones {
            return Err(Error::InvalidZoneRanking(format!(
                "ranks {} zones, partition has {zones}",
                order.len()
            )));
        }
        for &z in &order {
            if z >= zones || seen[z] {
                return Err(Error::InvalidZoneRanking(format!(
                    "zone index {z} repeated or out of range"
                )));
            }
            seen[z] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(zones: usize) -> Self {
        Self((0..zones).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    /// Zone `a` ranked strictly above zone `b`.
    pub fn above(&self, a: usize, b: usize) -> bool {
        let pa = self.0.iter().position(|&z| z == a);
        let pb = self.0.iter().position(|&z| z == b);
        matches!((pa, pb), (Some(x), Some(y)) if x < y)
    }
}

/// How an officer's admissible messages are specified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageSpaceSpec {
    Complete,
    Zonal(Partition),
    RankedZonal(Partition),
    Explicit(Vec<Message>),
    /// The zonal space whose zones are the signature classes of a type.
    ModularInduced(OfficerType),
}

/// A resolved message space over a fixed universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageSpace {
    Complete(Universe),
    Zonal(Partition),
    RankedZonal(Partition),
    Explicit(Universe, Vec<Message>),
}

impl MessageSpace {
    /// Resolves a spec; modular-induced spaces read their zones from `h`.
    pub fn resolve(spec: &MessageSpaceSpec, universe: &Universe, h: &UpperBoundSystem) -> Result<Self> {
        Ok(match spec {
            MessageSpaceSpec::Complete => MessageSpace::Complete(universe.clone()),
            MessageSpaceSpec::Zonal(p) => MessageSpace::Zonal(check_universe(p, universe)?.clone()),
            MessageSpaceSpec::RankedZonal(p) => MessageSpace::RankedZonal(check_universe(p, universe)?.clone()),
            MessageSpaceSpec::Explicit(ms) => {
                if ms.iter().any(|m| m.universe() != universe) {
                    return Err(Error::UniverseMismatch);
                }
                MessageSpace::Explicit(universe.clone(), ms.clone())
            }
            MessageSpaceSpec::ModularInduced(t) => MessageSpace::Zonal(induced_partition(h, t, universe)),
        })
    }

    pub fn universe(&self) -> &Universe {
        match self {
            MessageSpace::Complete(u) | MessageSpace::Explicit(u, _) => u,
            MessageSpace::Zonal(p) | MessageSpace::RankedZonal(p) => p.universe(),
        }
    }

    pub fn partition(&self) -> Option<&Partition> {
        match self {
            MessageSpace::Zonal(p) | MessageSpace::RankedZonal(p) => Some(p),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MessageSpace::Complete(_) => "complete",
            MessageSpace::Zonal(_) => "zonal",
            MessageSpace::RankedZonal(_) => "ranked_zonal",
            MessageSpace::Explicit(..) => "explicit",
        }
    }

    /// Number of messages in the space.
    pub fn count(&self) -> u128 {
        match self {
            MessageSpace::Complete(u) => factorial(u.len()),
            MessageSpace::Zonal(p) => p.zones().iter().map(|z| factorial(z.len())).product(),
            MessageSpace::RankedZonal(p) => {
                p.zones().iter().map(|z| factorial(z.len())).product::<u128>() * factorial(p.len())
            }
            MessageSpace::Explicit(_, ms) => ms.len() as u128,
        }
    }

    /// Every message, each once, in a fixed order: the first zone's order
    /// varies slowest and the zone ranking fastest.
    pub fn enumerate(&self, cap: u128) -> Result<Vec<Message>> {
        let count = self.count();
        if count > cap {
            return Err(Error::CapExceeded { count, cap });
        }
        Ok(match self {
            MessageSpace::Complete(u) => PreferenceOrder::all(u).map(|p| Message::from_order(&p)).collect(),
            MessageSpace::Zonal(p) => zone_orders(p)
                .into_iter()
                .map(|orders| zonal_from_indices(p, &orders))
                .collect(),
            MessageSpace::RankedZonal(p) => {
                let rankings: Vec<ZoneRanking> = (0..p.len()).permutations(p.len()).map(ZoneRanking).collect();
                let mut out = Vec::with_capacity(count as usize);
                for orders in zone_orders(p) {
                    for r in &rankings {
                        out.push(ranked_from_indices(p, &orders, r));
                    }
                }
                out
            }
            MessageSpace::Explicit(_, ms) => {
                let mut seen = HashSet::new();
                ms.iter().filter(|m| seen.insert(m.index_pairs())).cloned().collect()
            }
        })
    }

    /// Membership test without enumeration.
    pub fn contains(&self, m: &Message) -> bool {
        if m.universe() != self.universe() {
            return false;
        }
        match self {
            MessageSpace::Complete(u) => {
                let n = u.len();
                m.pair_count() == n * n.saturating_sub(1) / 2 && (0..n).all(|a| (0..n).all(|b| m.comparable_idx(a, b)))
            }
            MessageSpace::Zonal(p) => match per_zone_orders(p, m) {
                Some(orders) => zonal_from_indices(p, &orders) == *m,
                None => false,
            },
            MessageSpace::RankedZonal(p) => {
                let Some(orders) = per_zone_orders(p, m) else {
                    return false;
                };
                let Some(r) = derived_ranking(p, &orders, m) else {
                    return false;
                };
                ranked_from_indices(p, &orders, &r) == *m
            }
            MessageSpace::Explicit(_, ms) => ms.contains(m),
        }
    }

    /// Richness: for every message and every covering pair, the message with
    /// that pair reversed is also in the space. Returns the first violation;
    /// for zone-structured spaces, pairs linking different zones are tried
    /// before within-zone pairs.
    pub fn check_richness(&self, cap: u128) -> Result<Option<RichnessWitness>> {
        let all = self.enumerate(cap)?;
        let keys: HashSet<Vec<(usize, usize)>> = all.iter().map(|m| m.index_pairs()).collect();
        for m in &all {
            let mut pairs = m.index_pairs();
            if let Some(p) = self.partition() {
                pairs.sort_by_key(|&(a, b)| (p.zone_of(a) == p.zone_of(b), a, b));
            }
            for (a, b) in pairs {
                let between = m.below(a).intersection(m.above(b));
                if !between.is_empty() {
                    continue;
                }
                let mut reversed: Vec<(usize, usize)> =
                    m.index_pairs().into_iter().filter(|&pr| pr != (a, b)).collect();
                reversed.push((b, a));
                reversed.sort_unstable();
                if !keys.contains(&reversed) {
                    let u = m.universe();
                    return Ok(Some(RichnessWitness {
                        message: m.clone(),
                        pair: (u.id(a).clone(), u.id(b).clone()),
                    }));
                }
            }
        }
        Ok(None)
    }

    /// All messages truthful for `p`.
    pub fn truthful_messages(&self, p: &PreferenceOrder, cap: u128) -> Result<Vec<Message>> {
        if p.universe() != self.universe() {
            return Err(Error::UniverseMismatch);
        }
        Ok(self
            .enumerate(cap)?
            .into_iter()
            .filter(|m| truthful_idx(m, p))
            .collect())
    }

    /// A canonical truthful message: the first in enumeration order for
    /// explicit spaces, the restriction of `p` otherwise.
    pub fn truthful_message(&self, p: &PreferenceOrder) -> Result<Message> {
        match self {
            MessageSpace::Complete(_) => Ok(Message::from_order(p)),
            MessageSpace::Zonal(z) => Ok(zonal_message_idx(z, p)),
            MessageSpace::RankedZonal(z) => {
                let orders = restrict_orders(z, p);
                let mut zones: Vec<usize> = (0..z.len()).collect();
                zones.sort_by_key(|&k| p.rank(orders[k][0]));
                Ok(ranked_from_indices(z, &orders, &ZoneRanking(zones)))
            }
            MessageSpace::Explicit(_, ms) => ms
                .iter()
                .find(|m| truthful_idx(m, p))
                .cloned()
                .ok_or_else(|| Error::Precondition("explicit space has no truthful message".into())),
        }
    }
}

fn check_universe<'a>(p: &'a Partition, universe: &Universe) -> Result<&'a Partition> {
    if p.universe() != universe {
        return Err(Error::UniverseMismatch);
    }
    Ok(p)
}

/// A message and a covering pair whose reversal is not in the space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RichnessWitness {
    pub message: Message,
    pub pair: (StateId, StateId),
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Every combination of per-zone orders, first zone slowest.
fn zone_orders(p: &Partition) -> Vec<Vec<Vec<usize>>> {
    p.zones()
        .iter()
        .map(|z| {
            let members: Vec<usize> = z.iter().collect();
            members.iter().copied().permutations(members.len()).collect::<Vec<_>>()
        })
        .multi_cartesian_product()
        .collect::<Vec<_>>()
        .into_iter()
        .chain(std::iter::once(Vec::new()).filter(|_| p.is_empty()))
        .collect()
}

fn restrict_orders(p: &Partition, order: &PreferenceOrder) -> Vec<Vec<usize>> {
    p.zones()
        .iter()
        .map(|z| order.order().iter().copied().filter(|&s| z.contains(s)).collect())
        .collect()
}

fn zonal_pairs(orders: &[Vec<usize>]) -> Vec<(usize, usize)> {
    orders
        .iter()
        .flat_map(|o| o.iter().copied().tuple_combinations::<(usize, usize)>())
        .collect()
}

fn zonal_from_indices(p: &Partition, orders: &[Vec<usize>]) -> Message {
    Message::from_index_pairs(p.universe(), zonal_pairs(orders)).expect("zone orders are acyclic")
}

fn ranked_from_indices(p: &Partition, orders: &[Vec<usize>], r: &ZoneRanking) -> Message {
    let mut pairs = zonal_pairs(orders);
    for (x, y) in r.order().iter().tuple_combinations() {
        pairs.push((orders[*x][0], *orders[*y].last().unwrap()));
    }
    Message::from_index_pairs(p.universe(), pairs).expect("ranked zonal messages are acyclic")
}

fn zonal_message_idx(p: &Partition, order: &PreferenceOrder) -> Message {
    zonal_from_indices(p, &restrict_orders(p, order))
}

/// Recovers each zone's order from a message's within-zone pairs.
fn per_zone_orders(p: &Partition, m: &Message) -> Option<Vec<Vec<usize>>> {
    p.zones()
        .iter()
        .map(|&z| {
            let mut members: Vec<usize> = z.iter().collect();
            members.sort_by_key(|&s| m.above(s).intersection(z).len());
            let ok = members
                .iter()
                .enumerate()
                .all(|(r, &s)| m.above(s).intersection(z).len() == r);
            ok.then_some(members)
        })
        .collect()
}

fn derived_ranking(p: &Partition, orders: &[Vec<usize>], m: &Message) -> Option<ZoneRanking> {
    let l = p.len();
    let mut wins = vec![0usize; l];
    for x in 0..l {
        for y in 0..l {
            if x != y && m.prefers(orders[x][0], *orders[y].last().unwrap()) {
                wins[x] += 1;
            }
        }
    }
    let mut zones: Vec<usize> = (0..l).collect();
    zones.sort_by_key(|&z| std::cmp::Reverse(wins[z]));
    ZoneRanking::new(zones, l).ok()
}

fn orders_from_ids(p: &Partition, per_zone: &[PreferenceOrderOnZone]) -> Result<Vec<Vec<usize>>> {
    if per_zone.len() != p.len() {
        return Err(Error::InvalidPartition(format!(
            "{} zone orders given for {} zones",
            per_zone.len(),
            p.len()
        )));
    }
    per_zone
        .iter()
        .enumerate()
        .map(|(z, order)| {
            let idx = order
                .iter()
                .map(|s| p.universe().index_of(s.as_str()))
                .collect::<Result<Vec<_>>>()?;
            let set: StateSet = idx.iter().copied().collect();
            if idx.len() != p.zone(z).len() || set != p.zone(z) {
                return Err(Error::OrderNotCoveringZone { zone: z });
            }
            Ok(idx)
        })
        .collect()
}

/// A strict order over one zone's states, best first.
pub type PreferenceOrderOnZone = Vec<StateId>;

/// The zonal message with the given within-zone orders and no cross-zone
/// pairs.
pub fn zonal_message(p: &Partition, per_zone: &[PreferenceOrderOnZone]) -> Result<Message> {
    Ok(zonal_from_indices(p, &orders_from_ids(p, per_zone)?))
}

/// Within-zone pairs plus, for every `z` ranked above `z'`, the pair (top of
/// `z`, bottom of `z'`).
pub fn ranked_zonal_message(p: &Partition, per_zone: &[PreferenceOrderOnZone], zr: &ZoneRanking) -> Result<Message> {
    if zr.order().len() != p.len() {
        return Err(Error::InvalidZoneRanking(format!(
            "ranks {} zones, partition has {}",
            zr.order().len(),
            p.len()
        )));
    }
    Ok(ranked_from_indices(p, &orders_from_ids(p, per_zone)?, zr))
}

/// The zone ranking a ranked-zonal message expresses.
pub fn zone_ranking_of(p: &Partition, m: &Message) -> Result<ZoneRanking> {
    let orders = per_zone_orders(p, m)
        .ok_or_else(|| Error::InvalidZoneRanking("message is not complete within zones".into()))?;
    let r = derived_ranking(p, &orders, m)
        .ok_or_else(|| Error::InvalidZoneRanking("message does not rank zones".into()))?;
    if ranked_from_indices(p, &orders, &r) != *m {
        return Err(Error::InvalidZoneRanking("message is not ranked-zonal".into()));
    }
    Ok(r)
}

/// Zones of states sharing a signature for type `t`, ordered by first
/// appearance in the universe.
pub fn induced_partition(h: &UpperBoundSystem, t: &OfficerType, universe: &Universe) -> Partition {
    let mut classes: BTreeMap<BTreeSet<usize>, usize> = BTreeMap::new();
    let mut zones: Vec<StateSet> = Vec::new();
    for (i, s) in universe.states().iter().enumerate() {
        let sig = signature(h, s, t);
        let z = *classes.entry(sig).or_insert_with(|| {
            zones.push(StateSet::EMPTY);
            zones.len() - 1
        });
        zones[z].insert(i);
    }
    if zones.is_empty() {
        return Partition::single(universe);
    }
    Partition::from_sets(universe, zones).expect("signature classes partition the universe")
}

/// Convenience wrappers on specifications.
pub fn enumerate_messages(
    spec: &MessageSpaceSpec,
    universe: &Universe,
    h: &UpperBoundSystem,
    cap: u128,
) -> Result<Vec<Message>> {
    MessageSpace::resolve(spec, universe, h)?.enumerate(cap)
}

pub fn check_richness(
    spec: &MessageSpaceSpec,
    universe: &Universe,
    h: &UpperBoundSystem,
    cap: u128,
) -> Result<Option<RichnessWitness>> {
    MessageSpace::resolve(spec, universe, h)?.check_richness(cap)
}

pub fn truthful_messages(
    spec: &MessageSpaceSpec,
    p: &PreferenceOrder,
    h: &UpperBoundSystem,
    cap: u128,
) -> Result<Vec<Message>> {
    MessageSpace::resolve(spec, p.universe(), h)?.truthful_messages(p, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::UpperBound;
    use crate::relations::{is_truthful, validate_message};
    use proptest::prelude::*;

    fn u(n: usize) -> Universe {
        Universe::new((1..=n).map(|i| format!("s{i}"))).unwrap()
    }

    fn ids(xs: &[&str]) -> Vec<StateId> {
        xs.iter().map(StateId::new).collect()
    }

    fn pairs(m: &Message) -> Vec<(String, String)> {
        m.pairs()
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn pp(xs: &[(&str, &str)]) -> Vec<(String, String)> {
        let mut v: Vec<_> = xs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        v.sort();
        v
    }

    #[test]
    fn zonal_message_examples() {
        let uni = u(4);
        let p = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3", "s4"]]).unwrap();
        let m = zonal_message(&p, &[ids(&["s1", "s2"]), ids(&["s3", "s4"])]).unwrap();
        assert_eq!(pairs(&m), pp(&[("s1", "s2"), ("s3", "s4")]));

        let one = Partition::single(&uni);
        let m = zonal_message(&one, &[ids(&["s2", "s1", "s4", "s3"])]).unwrap();
        let complete = Message::from_order(&PreferenceOrder::new(&uni, ["s2", "s1", "s4", "s3"]).unwrap());
        assert_eq!(m, complete);

        let uni2 = u(2);
        let singles = Partition::new(&uni2, [vec!["s1"], vec!["s2"]]).unwrap();
        assert!(zonal_message(&singles, &[ids(&["s1"]), ids(&["s2"])])
            .unwrap()
            .is_empty());

        assert_eq!(
            zonal_message(&p, &[ids(&["s1"]), ids(&["s3", "s4"])]).unwrap_err(),
            Error::OrderNotCoveringZone { zone: 0 }
        );
        assert_eq!(
            zonal_message(&p, &[ids(&["s1", "s3"]), ids(&["s3", "s4"])]).unwrap_err(),
            Error::OrderNotCoveringZone { zone: 0 }
        );
    }

    #[test]
    fn ranked_zonal_message_examples() {
        let uni = u(3);
        let p = Partition::new(&uni, [vec!["s1"], vec!["s2", "s3"]]).unwrap();
        let m = ranked_zonal_message(&p, &[ids(&["s1"]), ids(&["s2", "s3"])], &ZoneRanking::identity(2)).unwrap();
        assert_eq!(pairs(&m), pp(&[("s2", "s3"), ("s1", "s3")]));
        assert_eq!(zone_ranking_of(&p, &m).unwrap(), ZoneRanking::identity(2));

        let p = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3"]]).unwrap();
        let m = ranked_zonal_message(&p, &[ids(&["s1", "s2"]), ids(&["s3"])], &ZoneRanking::identity(2)).unwrap();
        assert_eq!(pairs(&m), pp(&[("s1", "s2"), ("s1", "s3")]));

        let one = Partition::single(&uni);
        let a = ranked_zonal_message(&one, &[ids(&["s3", "s1", "s2"])], &ZoneRanking::identity(1)).unwrap();
        let b = zonal_message(&one, &[ids(&["s3", "s1", "s2"])]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ranked_cross_pairs_cover_non_adjacent_zones() {
        let uni = u(3);
        let p = Partition::new(&uni, [vec!["s1"], vec!["s2"], vec!["s3"]]).unwrap();
        let m = ranked_zonal_message(
            &p,
            &[ids(&["s1"]), ids(&["s2"]), ids(&["s3"])],
            &ZoneRanking::identity(3),
        )
        .unwrap();
        assert_eq!(pairs(&m), pp(&[("s1", "s2"), ("s1", "s3"), ("s2", "s3")]));
    }

    #[test]
    fn enumeration_counts() {
        let uni = u(3);
        let p = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3"]]).unwrap();
        assert_eq!(MessageSpace::Zonal(p.clone()).enumerate(100).unwrap().len(), 2);
        assert_eq!(MessageSpace::RankedZonal(p).enumerate(100).unwrap().len(), 4);
        assert_eq!(MessageSpace::Complete(uni.clone()).enumerate(100).unwrap().len(), 6);
        assert_eq!(
            MessageSpace::Complete(u(7)).enumerate(DEFAULT_MESSAGE_CAP).unwrap_err(),
            Error::CapExceeded {
                count: 5040,
                cap: DEFAULT_MESSAGE_CAP
            }
        );
    }

    #[test]
    fn enumeration_order_is_deterministic() {
        let uni = u(3);
        let p = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3"]]).unwrap();
        let all = MessageSpace::RankedZonal(p).enumerate(100).unwrap();
        let got: Vec<_> = all.iter().map(pairs).collect();
        assert_eq!(
            got,
            vec![
                pp(&[("s1", "s2"), ("s1", "s3")]),
                pp(&[("s1", "s2"), ("s3", "s2")]),
                pp(&[("s2", "s1"), ("s2", "s3")]),
                pp(&[("s2", "s1"), ("s3", "s1")]),
            ]
        );
    }

    #[test]
    fn richness() {
        let uni = u(3);
        assert_eq!(MessageSpace::Complete(uni.clone()).check_richness(100).unwrap(), None);
        let p = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3"]]).unwrap();
        assert_eq!(MessageSpace::Zonal(p.clone()).check_richness(100).unwrap(), None);
        let w = MessageSpace::RankedZonal(p).check_richness(100).unwrap().unwrap();
        assert_eq!(w.pair, ("s1".into(), "s3".into()));
        assert_eq!(pairs(&w.message), pp(&[("s1", "s2"), ("s1", "s3")]));
    }

    #[test]
    fn truthful_message_sets() {
        let uni = u(3);
        let p = PreferenceOrder::new(&uni, ["s2", "s3", "s1"]).unwrap();
        let complete = MessageSpace::Complete(uni.clone()).truthful_messages(&p, 100).unwrap();
        assert_eq!(complete, vec![Message::from_order(&p)]);

        let part = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3"]]).unwrap();
        let ranked = MessageSpace::RankedZonal(part.clone())
            .truthful_messages(&p, 100)
            .unwrap();
        let got: BTreeSet<_> = ranked.iter().map(pairs).collect();
        let expected: BTreeSet<_> = [pp(&[("s2", "s1"), ("s3", "s1")]), pp(&[("s2", "s1"), ("s2", "s3")])]
            .into_iter()
            .collect();
        assert_eq!(got, expected);

        for q in PreferenceOrder::all(&uni) {
            assert_eq!(
                MessageSpace::Zonal(part.clone())
                    .truthful_messages(&q, 100)
                    .unwrap()
                    .len(),
                1
            );
        }
    }

    #[test]
    fn canonical_truthful_message_is_truthful_and_member() {
        let uni = u(4);
        let part = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3"], vec!["s4"]]).unwrap();
        for space in [
            MessageSpace::Complete(uni.clone()),
            MessageSpace::Zonal(part.clone()),
            MessageSpace::RankedZonal(part.clone()),
        ] {
            for p in PreferenceOrder::all(&uni) {
                let m = space.truthful_message(&p).unwrap();
                assert!(is_truthful(&m, &p).unwrap());
                assert!(space.contains(&m));
            }
        }
    }

    #[test]
    fn membership() {
        let uni = u(3);
        let part = Partition::new(&uni, [vec!["s1", "s2"], vec!["s3"]]).unwrap();
        let zonal = MessageSpace::Zonal(part.clone());
        let ranked = MessageSpace::RankedZonal(part);
        let within = validate_message([("s2", "s1")], &uni).unwrap();
        let cross = validate_message([("s2", "s1"), ("s3", "s1")], &uni).unwrap();
        let bogus = validate_message([("s2", "s1"), ("s3", "s2")], &uni).unwrap();
        assert!(zonal.contains(&within));
        assert!(!zonal.contains(&cross));
        assert!(ranked.contains(&cross));
        assert!(!ranked.contains(&within));
        assert!(!ranked.contains(&bogus));
        assert!(!MessageSpace::Complete(uni.clone()).contains(&within));
    }

    #[test]
    fn induced_partitions() {
        let uni = u(9);
        let h = UpperBoundSystem::new(vec![
            UpperBound::new(["1"], ["s1", "s2", "s3"], 6),
            UpperBound::new(["2"], ["s4", "s5", "s6"], 6),
            UpperBound::new(["3"], ["s7", "s8", "s9"], 6),
            UpperBound::new(["1", "2", "3"], ["s2", "s3", "s5", "s6", "s8", "s9"], 19),
        ])
        .unwrap();
        let z = induced_partition(&h, &"1".into(), &uni);
        let got: Vec<Vec<StateId>> = z.to_ids();
        assert_eq!(
            got,
            vec![
                ids(&["s1"]),
                ids(&["s2", "s3"]),
                ids(&["s4", "s7"]),
                ids(&["s5", "s6", "s8", "s9"])
            ]
        );
        assert_eq!(MessageSpace::Zonal(z).count(), 96);

        let uni = u(4);
        let h = UpperBoundSystem::new(vec![
            UpperBound::new(["1"], ["s1", "s2"], 2),
            UpperBound::new(["2"], ["s3", "s4"], 2),
        ])
        .unwrap();
        for t in ["1", "2"] {
            let z = induced_partition(&h, &t.into(), &uni);
            assert_eq!(z.to_ids(), vec![ids(&["s1", "s2"]), ids(&["s3", "s4"])]);
        }
        let z = induced_partition(&UpperBoundSystem::empty(), &"1".into(), &uni);
        assert_eq!(z.len(), 1);
    }

    #[test]
    fn partition_validation() {
        let uni = u(3);
        assert!(Partition::new(&uni, [vec!["s1", "s2"], vec!["s2", "s3"]]).is_err());
        assert!(Partition::new(&uni, [vec!["s1", "s2"]]).is_err());
        assert!(Partition::new(&uni, [vec!["s1", "s2", "s3"], vec![]]).is_err());
        assert!(ZoneRanking::new(vec![0, 0], 2).is_err());
    }

    fn arb_partition() -> impl Strategy<Value = Partition> {
        (2usize..=5)
            .prop_flat_map(|n| (Just(n), proptest::collection::vec(0usize..3, n)))
            .prop_map(|(n, labels)| {
                let uni = u(n);
                let mut zones: BTreeMap<usize, StateSet> = BTreeMap::new();
                for (s, l) in labels.into_iter().enumerate() {
                    zones.entry(l).or_default().insert(s);
                }
                Partition::from_sets(&uni, zones.into_values().collect()).unwrap()
            })
    }

    proptest! {
        #[test]
        fn zonal_comparability_is_zone_membership(p in arb_partition()) {
            let space = MessageSpace::Zonal(p.clone());
            let n = p.universe().len();
            for m in space.enumerate(10_000).unwrap() {
                for a in 0..n {
                    for b in 0..n {
                        prop_assert_eq!(m.comparable_idx(a, b), a == b || p.zone_of(a) == p.zone_of(b));
                    }
                }
            }
            prop_assert_eq!(space.check_richness(10_000).unwrap(), None);
        }

        #[test]
        fn ranked_messages_have_one_cross_pair_per_zone_pair(p in arb_partition()) {
            let space = MessageSpace::RankedZonal(p.clone());
            let l = p.len();
            let all = space.enumerate(100_000).unwrap();
            prop_assert_eq!(all.len() as u128, space.count());
            for m in &all {
                let cross = m.index_pairs().into_iter().filter(|&(a, b)| p.zone_of(a) != p.zone_of(b)).count();
                prop_assert_eq!(cross, l * (l - 1) / 2);
                prop_assert!(Message::from_index_pairs(p.universe(), m.index_pairs()).is_ok());
                prop_assert!(space.contains(m));
                prop_assert_eq!(&crate::relations::transitive_closure(m), m);
            }
        }

        #[test]
        fn truthful_sets_nonempty_on_rich_spaces(p in arb_partition(), seed in any::<u64>()) {
            let uni = p.universe().clone();
            let mut order: Vec<usize> = (0..uni.len()).collect();
            let mut x = seed;
            for i in (1..order.len()).rev() {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (x >> 33) as usize % (i + 1));
            }
            let pref = PreferenceOrder::from_indices(&uni, order).unwrap();
            for space in [MessageSpace::Complete(uni.clone()), MessageSpace::Zonal(p.clone())] {
                if space.count() <= 10_000 && space.check_richness(10_000).unwrap().is_none() {
                    prop_assert!(!space.truthful_messages(&pref, 10_000).unwrap().is_empty());
                }
            }
        }

        #[test]
        fn induced_zones_share_signatures(
            bounds in proptest::collection::vec((proptest::collection::btree_set(0usize..2, 1..=2), proptest::collection::btree_set(0usize..5, 0..=5), 0usize..3), 0..4)
        ) {
            let uni = u(5);
            let h = UpperBoundSystem::new(bounds.iter().map(|(ts, ss, k)| UpperBound::new(
                ts.iter().map(|t| format!("t{t}")),
                ss.iter().map(|s| format!("s{}", s + 1)),
                *k,
            )).collect()).unwrap();
            for t in ["t0", "t1"] {
                let t = OfficerType::new(t);
                let z = induced_partition(&h, &t, &uni);
                for a in 0..5 {
                    for b in 0..5 {
                        let same = signature(&h, uni.id(a), &t) == signature(&h, uni.id(b), &t);
                        prop_assert_eq!(same, z.zone_of(a) == z.zone_of(b));
                    }
                }
            }
        }
    }
}
