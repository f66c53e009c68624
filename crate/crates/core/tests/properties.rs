//! Properties of the public API over generated instances.

use proptest::prelude::*;
use vfair_core::constraints::{binding_bounds, respects_bounds, signature, UpperBound, UpperBoundSystem};
use vfair_core::mechanisms::{m_queue_run, partitioned_priority_run, serial_dictatorship, Rule};
use vfair_core::relations::{validate_message, Message, PreferenceOrder};
use vfair_core::spaces::{MessageSpace, Partition};
use vfair_core::{Allocation, Officer, Problem, State, StateSet};

const TYPES: [&str; 2] = ["a", "b"];

#[derive(Debug, Clone)]
struct Case {
    problem: Problem,
    slots: Vec<usize>,
    first: Vec<UpperBound>,
    second: Vec<UpperBound>,
}

fn arb_bound(m: usize) -> impl Strategy<Value = UpperBound> {
    (1u8..4, 1u64..(1 << m), 0usize..3).prop_map(|(t, s, c)| {
        let types: Vec<&str> = TYPES
            .iter()
            .enumerate()
            .filter(|(i, _)| t >> i & 1 == 1)
            .map(|(_, t)| *t)
            .collect();
        let states: Vec<String> = StateSet(s).iter().map(|s| format!("s{}", s + 1)).collect();
        UpperBound::new(types, states, c)
    })
}

fn arb_case() -> impl Strategy<Value = Case> {
    (1usize..5, 2usize..5)
        .prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(0usize..2, n),
                proptest::collection::vec(1usize..3, m),
                proptest::collection::vec(0usize..m, n),
                proptest::collection::vec(arb_bound(m), 0..3),
                proptest::collection::vec(arb_bound(m), 0..3),
            )
        })
        .prop_filter_map("seats overflow", |(types, caps, slots, first, second)| {
            let problem = try_problem(&types, &caps)?;
            problem.check_feasible(&slots).ok()?;
            Some(Case {
                problem,
                slots,
                first,
                second,
            })
        })
}

fn problem(types: &[usize], caps: &[usize]) -> Problem {
    try_problem(types, caps).unwrap()
}

fn try_problem(types: &[usize], caps: &[usize]) -> Option<Problem> {
    let officers = types
        .iter()
        .enumerate()
        .map(|(k, &t)| Officer {
            id: format!("i{}", k + 1).into(),
            otype: TYPES[t].into(),
        })
        .collect();
    let states = caps
        .iter()
        .enumerate()
        .map(|(s, &c)| State {
            id: format!("s{}", s + 1).into(),
            capacity: c,
        })
        .collect();
    Problem::new(officers, states).ok()
}

fn arb_partition(m: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0usize..m, m)
}

fn partition(problem: &Problem, labels: &[usize]) -> Partition {
    let mut zones: Vec<StateSet> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for (s, &l) in labels.iter().enumerate() {
        match seen.iter().position(|&x| x == l) {
            Some(z) => zones[z].insert(s),
            None => {
                seen.push(l);
                zones.push(StateSet::singleton(s));
            }
        }
    }
    Partition::from_sets(problem.universe(), zones).unwrap()
}

proptest! {
    #[test]
    fn ceilings_combine_modularly(case in arb_case()) {
        let Case { problem, slots, first, second } = case;
        let a = problem.allocation(&slots);
        let h1 = UpperBoundSystem::new(first).unwrap();
        let h2 = UpperBoundSystem::new(second).unwrap();
        let both = respects_bounds(&a, &h1.union(&h2), &problem).unwrap().passes();
        let each = respects_bounds(&a, &h1, &problem).unwrap().passes() && respects_bounds(&a, &h2, &problem).unwrap().passes();
        prop_assert_eq!(both, each);
    }

    #[test]
    fn signatures_grow_with_the_bound_system(case in arb_case()) {
        let h1 = UpperBoundSystem::new(case.first).unwrap();
        let wider = h1.union(&UpperBoundSystem::new(case.second).unwrap());
        for s in case.problem.universe().states() {
            for t in TYPES {
                prop_assert!(signature(&h1, s, &t.into()).is_subset(&signature(&wider, s, &t.into())));
            }
        }
    }

    #[test]
    fn binding_bounds_are_tight_and_released_by_removal(case in arb_case()) {
        let Case { problem, slots, first, .. } = case;
        let h = UpperBoundSystem::new(first).unwrap();
        let a = problem.allocation(&slots);
        let verdict = respects_bounds(&a, &h, &problem).unwrap();
        prop_assume!(verdict.passes());
        let binding = binding_bounds(&a, &h, &problem).unwrap();
        for &b in &binding {
            prop_assert_eq!(verdict.counts[b], h.bounds()[b].ceiling);
        }
        for k in 0..problem.n() {
            let mut officers = problem.officers().to_vec();
            let gone = officers.remove(k);
            let mut rest = slots.clone();
            let s = rest.remove(k);
            let smaller = problem.with_officers(officers).unwrap();
            let after = binding_bounds(&smaller.allocation(&rest), &h, &smaller).unwrap();
            for &b in &binding {
                if h.bounds()[b].covers(problem.universe().id(s), &gone.otype) {
                    prop_assert!(!after.contains(&b));
                }
            }
        }
    }

    #[test]
    fn enumerated_messages_validate(m in 2usize..5, labels in arb_partition(4), ranked in any::<bool>()) {
        let problem = problem(&[0], &vec![1; m]);
        let part = partition(&problem, &labels[..m]);
        let space = if ranked { MessageSpace::RankedZonal(part) } else { MessageSpace::Zonal(part) };
        for msg in space.enumerate(720).unwrap() {
            let ids: Vec<(String, String)> = msg.pairs().into_iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
            prop_assert_eq!(validate_message(ids, problem.universe()).unwrap(), msg);
        }
    }

    #[test]
    fn occupancy_never_exceeds_capacity(
        caps in proptest::collection::vec(1usize..3, 2..5),
        n in 1usize..5,
        labels in arb_partition(4),
        seed in any::<u64>(),
    ) {
        prop_assume!(caps.iter().sum::<usize>() >= n);
        let problem = problem(&vec![0; n], &caps);
        let part = partition(&problem, &labels[..caps.len()]);
        let msgs = MessageSpace::Zonal(part.clone()).enumerate(720).unwrap();
        let profile: Vec<Message> = (0..n).map(|k| msgs[(seed as usize).wrapping_add(k * 7) % msgs.len()].clone()).collect();
        let trace = partitioned_priority_run(&problem, &vec![part; n], &profile, &[]).unwrap();
        let mut occ = vec![0; caps.len()];
        for step in &trace.steps {
            for s in 0..caps.len() {
                prop_assert_eq!(step.available.contains(s), occ[s] < caps[s]);
            }
            occ[step.assigned] += 1;
            prop_assert!(occ[step.assigned] <= caps[step.assigned]);
        }
    }

    #[test]
    fn complete_messages_give_serial_dictatorship(
        caps in proptest::collection::vec(1usize..3, 2..5),
        orders in proptest::collection::vec(Just((0..4).collect::<Vec<usize>>()).prop_shuffle(), 1..5),
        reverse in any::<bool>(),
    ) {
        let n = orders.len();
        prop_assume!(caps.iter().sum::<usize>() >= n);
        let m = caps.len();
        let problem = problem(&vec![0; n], &caps);
        let prefs: Vec<PreferenceOrder> = orders
            .iter()
            .map(|o| PreferenceOrder::from_indices(problem.universe(), o.iter().copied().filter(|&s| s < m).collect()).unwrap())
            .collect();
        let truthful: Vec<Message> = prefs.iter().map(Message::from_order).collect();
        let rules = if reverse { vec![Rule::Order((0..m).rev().collect()); n] } else { vec![] };
        let sd: Allocation = serial_dictatorship(&problem, &prefs).unwrap();
        prop_assert_eq!(m_queue_run(&problem, &truthful, &rules).unwrap().allocation(), sd);
    }
}
