//! Exhaustive search over "speak or stay silent" configurations: each
//! officer either reports any strict order or sends the empty message. For
//! every configuration the search looks for a profile at which no visibly
//! fair allocation respects the bounds, or at which every fair allocation
//! that does is dominated for some preference consistent with the profile.

use serde::Serialize;
use vfair_core::axioms::{find_dominating, unfair_slots, DEFAULT_SEARCH_BUDGET};
use vfair_core::constraints::{CompiledBounds, UpperBoundSystem};
use vfair_core::relations::{Message, PreferenceOrder};
use vfair_core::spaces::MessageSpace;
use vfair_core::{Allocation, Error, Problem, Result};

use itertools::Itertools;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CaseVerdict {
    /// At `profile` some allocation is visibly fair but none of them
    /// respects the bounds.
    BoundViolation {
        profile: Vec<Message>,
        fair: Vec<Allocation>,
    },
    /// At `profile` every fair, bound-respecting allocation is dominated
    /// among bound-respecting allocations for a consistent preference.
    Dominated {
        profile: Vec<Message>,
        dominations: Vec<Domination>,
    },
    /// Some rule can pick a fair, bound-respecting, undominated allocation
    /// at every profile.
    Escapes,
}

impl CaseVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            CaseVerdict::BoundViolation { .. } => "bound_violation",
            CaseVerdict::Dominated { .. } => "dominated",
            CaseVerdict::Escapes => "escapes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Domination {
    pub allocation: Allocation,
    pub preferences: Vec<PreferenceOrder>,
    pub dominated_by: Allocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Case {
    /// `Y` for an officer who reports any strict order, `N` for silence.
    pub configuration: String,
    #[serde(flatten)]
    pub verdict: CaseVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImpossibilityReport {
    pub instance: String,
    /// No configuration escapes.
    pub impossible: bool,
    pub cases: Vec<Case>,
}

fn product_count(sizes: impl IntoIterator<Item = usize>) -> u128 {
    sizes
        .into_iter()
        .try_fold(1u128, |acc, s| acc.checked_mul(s as u128))
        .unwrap_or(u128::MAX)
}

fn guard(count: u128, cap: u128) -> Result<()> {
    if count > cap {
        Err(Error::CapExceeded { count, cap })
    } else {
        Ok(())
    }
}

/// Classifies every configuration. `cap` bounds each enumeration: profiles
/// per configuration, feasible allocations and consistent preference
/// profiles per allocation.
pub fn impossibility_search(
    name: &str,
    problem: &Problem,
    h: &UpperBoundSystem,
    cap: u128,
) -> Result<ImpossibilityReport> {
    let uni = problem.universe();
    let n = problem.n();
    let compiled = CompiledBounds::new(problem, h)?;
    let complete = MessageSpace::Complete(uni.clone()).enumerate(cap)?;
    let silent = vec![Message::empty(uni)];
    let orders: Vec<PreferenceOrder> = {
        guard(product_count(1..=uni.len()), cap)?;
        PreferenceOrder::all(uni).collect()
    };
    let allocations = problem.feasible_allocations(cap)?;
    let mut cases = Vec::with_capacity(1 << n);
    for config in (0..n).map(|_| [true, false]).multi_cartesian_product() {
        let label: String = config.iter().map(|&y| if y { 'Y' } else { 'N' }).collect();
        let spaces: Vec<&Vec<Message>> = config.iter().map(|&y| if y { &complete } else { &silent }).collect();
        guard(product_count(spaces.iter().map(|s| s.len())), cap)?;
        let mut bound_violation = None;
        let mut dominated = None;
        for profile in spaces.iter().map(|s| s.iter().cloned()).multi_cartesian_product() {
            let fair: Vec<&Vec<usize>> = allocations
                .iter()
                .filter(|a| unfair_slots(problem, a, &profile).is_none())
                .collect();
            let respecting: Vec<&Vec<usize>> = fair.iter().copied().filter(|a| compiled.respects(a)).collect();
            if respecting.is_empty() {
                if !fair.is_empty() {
                    bound_violation = Some(CaseVerdict::BoundViolation {
                        fair: fair.iter().map(|a| problem.allocation(a)).collect(),
                        profile,
                    });
                    break;
                }
                continue;
            }
            if dominated.is_some() {
                continue;
            }
            let consistent: Vec<Vec<&PreferenceOrder>> = profile
                .iter()
                .map(|m| {
                    orders
                        .iter()
                        .filter(|p| m.index_pairs().iter().all(|&(a, b)| p.prefers(a, b)))
                        .collect()
                })
                .collect();
            guard(product_count(consistent.iter().map(Vec::len)), cap)?;
            let mut dominations = Vec::with_capacity(respecting.len());
            for slots in &respecting {
                let mut found = None;
                for prefs in consistent.iter().map(|c| c.iter().copied()).multi_cartesian_product() {
                    let better = |k: usize, new: usize, old: usize| prefs[k].prefers(new, old);
                    if let Some(alt) = find_dominating(problem, slots, &better, Some(&compiled), DEFAULT_SEARCH_BUDGET)?
                    {
                        found = Some(Domination {
                            allocation: problem.allocation(slots),
                            preferences: prefs.into_iter().cloned().collect(),
                            dominated_by: problem.allocation(&alt),
                        });
                        break;
                    }
                }
                match found {
                    Some(d) => dominations.push(d),
                    None => break,
                }
            }
            if dominations.len() == respecting.len() {
                dominated = Some(CaseVerdict::Dominated { profile, dominations });
            }
        }
        cases.push(Case {
            configuration: label,
            verdict: bound_violation.or(dominated).unwrap_or(CaseVerdict::Escapes),
        });
    }
    Ok(ImpossibilityReport {
        instance: name.to_string(),
        impossible: cases.iter().all(|c| c.verdict != CaseVerdict::Escapes),
        cases,
    })
}
