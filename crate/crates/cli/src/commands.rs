//! Mechanism runs, audits and mechanism-level checks.

use serde::{Deserialize, Serialize};
use serde_json::json;
use vfair_core::axioms::{
    self, check_availability, check_coherence, check_dynamic_stepwise_dominance, check_expressiveness,
    check_strategy_proof, check_weak_availability, constrained_pareto_efficient, pareto_efficient, reconstruct_m_queue,
    visibly_efficient_with_budget, visibly_unfair_witness, MechanismUnderTest, DEFAULT_PROFILE_CAP,
    DEFAULT_SEARCH_BUDGET,
};
use vfair_core::constraints::{check_sequential_solvency, respects_bounds, SolvencyVerdict, DEFAULT_SOLVENCY_BUDGET};
use vfair_core::mechanisms::{
    dynamic_modular_priority_run, m_queue_run, partitioned_priority_run, ranked_partitioned_priority_run,
    replay_solvency_counterexample, ModularPriority, RankingProvider, RunTrace, TruthProvider,
};
use vfair_core::relations::Message;
use vfair_core::spaces::{MessageSpace, Partition, DEFAULT_MESSAGE_CAP};
use vfair_core::{Allocation, Error, OfficerId, StateId};

use crate::error::CliError;
use crate::instance::{Instance, MechanismName};
use crate::report::{assignments, AuditReport, AxiomVerdict, CheckReport, Verdict};

/// Enumeration and search limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Messages per space.
    pub message_cap: u128,
    /// Profiles per tabulated mechanism.
    pub profile_cap: u128,
    /// Search nodes; `None` uses each search's default.
    pub budget: Option<u64>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            message_cap: DEFAULT_MESSAGE_CAP,
            profile_cap: DEFAULT_PROFILE_CAP,
            budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    /// No visible envy or waste under the reported messages.
    Fairness,
    /// Every upper bound holds.
    Bounds,
    /// Visible efficiency under the reported messages.
    Efficiency,
    /// Pareto efficiency under the true preferences.
    Pareto,
    /// Pareto efficiency among allocations that respect the bounds.
    Cpe,
    /// The allocation is an m-queue outcome.
    Mqueue,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::Fairness => "fairness",
            AuditKind::Bounds => "bounds",
            AuditKind::Efficiency => "efficiency",
            AuditKind::Pareto => "pareto",
            AuditKind::Cpe => "cpe",
            AuditKind::Mqueue => "mqueue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Strategy-proofness; per-step dominance for the dynamic mechanism.
    Sp,
    /// Sequential solvency of the upper bounds.
    Solvency,
    /// Richness of every officer's message space.
    Richness,
    /// Visible fairness of the outcome at every profile.
    FairnessSweep,
    Coherence,
    Expressiveness,
    Availability,
    WeakAvailability,
}

impl CheckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckKind::Sp => "sp",
            CheckKind::Solvency => "solvency",
            CheckKind::Richness => "richness",
            CheckKind::FairnessSweep => "fairness-sweep",
            CheckKind::Coherence => "coherence",
            CheckKind::Expressiveness => "expressiveness",
            CheckKind::Availability => "availability",
            CheckKind::WeakAvailability => "weak-availability",
        }
    }

    /// Checks that need a mechanism.
    pub fn needs_mechanism(self) -> bool {
        !matches!(self, CheckKind::Solvency | CheckKind::Richness)
    }
}

/// An allocation with the profile and trace that produced it, if known.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub mechanism: MechanismName,
    pub allocation: Allocation,
    pub profile: Option<Vec<Message>>,
    pub trace: Option<RunTrace>,
}

pub fn mechanism_or_default(inst: &Instance, mech: Option<MechanismName>) -> Result<MechanismName, CliError> {
    mech.or(inst.default_mechanism()).ok_or_else(|| {
        CliError::Usage(format!(
            "instance `{}` names no default mechanism; pass --mechanism",
            inst.name
        ))
    })
}

fn precondition(msg: impl Into<String>) -> CliError {
    CliError::Core(Error::Precondition(msg.into()))
}

fn partitions(inst: &Instance, ranked: bool, mech: MechanismName) -> Result<Vec<Partition>, CliError> {
    inst.spaces
        .iter()
        .map(|s| match (s, ranked) {
            (MessageSpace::Zonal(p), false) | (MessageSpace::RankedZonal(p), true) => Ok(p.clone()),
            _ => Err(precondition(format!(
                "{mech} requires {} message spaces for every officer",
                if ranked { "ranked_zonal" } else { "zonal" }
            ))),
        })
        .collect()
}

type Engine<'a> = Box<dyn Fn(&[Message]) -> vfair_core::Result<RunTrace> + 'a>;
type Outcomes<'a> = Box<dyn FnMut(&[Message]) -> vfair_core::Result<Vec<usize>> + 'a>;

/// A static mechanism as a function from profiles to state indices, with
/// the message spaces it is defined on.
pub struct StaticMechanism<'a> {
    pub name: MechanismName,
    pub spaces: Vec<MessageSpace>,
    run: Engine<'a>,
    modular: Option<ModularPriority>,
}

impl<'a> StaticMechanism<'a> {
    pub fn new(inst: &'a Instance, name: MechanismName) -> Result<Self, CliError> {
        let problem = &inst.problem;
        let rules = &inst.rules;
        let mut modular = None;
        let run: Engine<'a> = match name {
            MechanismName::Sd => {
                if inst.spaces.iter().any(|s| !matches!(s, MessageSpace::Complete(_))) {
                    return Err(precondition("sd requires complete message spaces for every officer"));
                }
                Box::new(move |m| m_queue_run(problem, m, &[]))
            }
            MechanismName::Mqueue => Box::new(move |m| m_queue_run(problem, m, rules)),
            MechanismName::Pp => {
                let parts = partitions(inst, false, name)?;
                Box::new(move |m| partitioned_priority_run(problem, &parts, m, rules))
            }
            MechanismName::Rpp => {
                let parts = partitions(inst, true, name)?;
                Box::new(move |m| ranked_partitioned_priority_run(problem, &parts, m, rules))
            }
            MechanismName::Modular => {
                let mp = ModularPriority::new(problem, &inst.bounds, Some(inst.exogenous.clone()))?;
                modular = Some(mp.clone());
                Box::new(move |m| mp.run(m))
            }
            MechanismName::DynamicModular | MechanismName::Table | MechanismName::Given => {
                return Err(precondition(format!("{name} is not a static engine")));
            }
        };
        let spaces = match &modular {
            Some(mp) => (0..problem.n()).map(|k| mp.space(k)).collect(),
            None => inst.spaces.clone(),
        };
        Ok(Self {
            name,
            spaces,
            run,
            modular,
        })
    }

    pub fn run(&self, profile: &[Message]) -> vfair_core::Result<RunTrace> {
        (self.run)(profile)
    }

    /// The explicit profile, or the canonical truthful one in this
    /// mechanism's spaces.
    pub fn profile(&self, inst: &Instance) -> Result<Vec<Message>, CliError> {
        if let Some(p) = &inst.profile {
            for (k, m) in p.iter().enumerate() {
                if !self.spaces[k].contains(m) {
                    return Err(Error::MessageNotInSpace {
                        officer: inst.problem.officers()[k].id.clone(),
                    }
                    .into());
                }
            }
            return Ok(p.clone());
        }
        match (&self.modular, &inst.preferences) {
            (Some(mp), Some(prefs)) => Ok(mp.truthful_profile(prefs)?),
            _ => inst.message_profile(),
        }
    }
}

fn table_lookup<'a>(
    inst: &'a Instance,
) -> Result<impl Fn(&[Message]) -> vfair_core::Result<Vec<usize>> + 'a, CliError> {
    let rows = inst
        .outcomes
        .as_ref()
        .ok_or_else(|| precondition("the table mechanism needs an `outcomes` table"))?;
    Ok(move |profile: &[Message]| {
        let (_, a) = rows
            .iter()
            .find(|(m, _)| m.as_slice() == profile)
            .ok_or_else(|| Error::Precondition("the outcome table has no row for this profile".into()))?;
        inst.problem.allocation_indices(a)
    })
}

/// Runs `mech` on the instance. The dynamic mechanism asks `provider`, or the
/// instance preferences when none is given.
pub fn execute(
    inst: &Instance,
    mech: MechanismName,
    provider: Option<&mut dyn RankingProvider>,
) -> Result<RunOutcome, CliError> {
    let problem = &inst.problem;
    match mech {
        MechanismName::DynamicModular => {
            let trace = match provider {
                Some(p) => dynamic_modular_priority_run(problem, &inst.bounds, p)?,
                None => {
                    let prefs = inst
                        .preferences
                        .clone()
                        .ok_or_else(|| precondition("the dynamic mechanism needs preferences or a ranking provider"))?;
                    dynamic_modular_priority_run(problem, &inst.bounds, &mut TruthProvider::new(prefs))?
                }
            };
            Ok(RunOutcome::from_trace(mech, trace))
        }
        MechanismName::Table => {
            let profile = inst.message_profile()?;
            let slots = table_lookup(inst)?(&profile)?;
            Ok(RunOutcome {
                mechanism: mech,
                allocation: problem.allocation(&slots),
                profile: Some(profile),
                trace: None,
            })
        }
        MechanismName::Given => {
            let allocation = inst
                .allocation
                .clone()
                .ok_or_else(|| precondition("the given mechanism needs an `allocation`"))?;
            let profile = if inst.profile.is_some() || inst.preferences.is_some() {
                Some(inst.message_profile()?)
            } else {
                None
            };
            Ok(RunOutcome {
                mechanism: mech,
                allocation,
                profile,
                trace: None,
            })
        }
        _ => {
            let engine = StaticMechanism::new(inst, mech)?;
            let profile = engine.profile(inst)?;
            let trace = engine.run(&profile)?;
            Ok(RunOutcome {
                mechanism: mech,
                allocation: trace.allocation(),
                profile: Some(profile),
                trace: Some(trace),
            })
        }
    }
}

/// Fairness and bounds, plus constrained efficiency when preferences exist.
pub fn default_audits(inst: &Instance) -> Vec<AuditKind> {
    let mut out = vec![AuditKind::Fairness, AuditKind::Bounds];
    if inst.preferences.is_some() {
        out.push(AuditKind::Cpe);
    }
    out
}

fn capped<T>(r: vfair_core::Result<T>, f: impl FnOnce(T) -> Verdict) -> Result<Verdict, CliError> {
    match r {
        Ok(x) => Ok(f(x)),
        Err(Error::CapExceeded { count, cap }) => Ok(Verdict::Inconclusive { count, cap }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct NotMaximal {
    officer: OfficerId,
    state: StateId,
    maximal: Vec<StateId>,
}

/// First officer whose state is not maximal among the states left for them.
fn first_non_maximal(inst: &Instance, slots: &[usize], m: &[Message]) -> Option<NotMaximal> {
    let problem = &inst.problem;
    let uni = problem.universe();
    let mut avail = uni.full();
    let mut occ = vec![0; problem.m()];
    for (k, &s) in slots.iter().enumerate() {
        let g = m[k].maximal(avail);
        if !g.contains(s) {
            return Some(NotMaximal {
                officer: problem.officers()[k].id.clone(),
                state: uni.id(s).clone(),
                maximal: g.iter().map(|x| uni.id(x).clone()).collect(),
            });
        }
        occ[s] += 1;
        if occ[s] == problem.capacity(s) {
            avail.remove(s);
        }
    }
    None
}

/// Audits one allocation.
pub fn audit(
    inst: &Instance,
    a: &Allocation,
    profile: Option<&[Message]>,
    kinds: &[AuditKind],
    limits: Limits,
) -> Result<Vec<AxiomVerdict>, CliError> {
    let problem = &inst.problem;
    let need_profile = || profile.ok_or_else(|| precondition("this audit needs a message profile or preferences"));
    let need_prefs = || {
        inst.preferences
            .as_deref()
            .ok_or_else(|| precondition("this audit needs true preferences"))
    };
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let v = match kind {
            AuditKind::Fairness => {
                let w = visibly_unfair_witness(a, need_profile()?, problem)?;
                AxiomVerdict::new(kind.as_str(), w.map_or(Verdict::Pass, Verdict::fail))
            }
            AuditKind::Bounds => {
                let v = respects_bounds(a, &inst.bounds, problem)?;
                let binding: Vec<usize> = v
                    .counts
                    .iter()
                    .zip(inst.bounds.bounds())
                    .enumerate()
                    .filter(|(_, (c, b))| **c == b.ceiling)
                    .map(|(i, _)| i)
                    .collect();
                let verdict = if v.passes() {
                    Verdict::Pass
                } else {
                    Verdict::fail(&v.violations)
                };
                AxiomVerdict::new(kind.as_str(), verdict).with_detail(json!({"counts": v.counts, "binding": binding}))
            }
            AuditKind::Efficiency => {
                let budget = limits.budget.unwrap_or(DEFAULT_SEARCH_BUDGET);
                let r = visibly_efficient_with_budget(a, need_profile()?, problem, budget);
                AxiomVerdict::new(kind.as_str(), capped(r, efficiency_verdict)?)
            }
            AuditKind::Pareto => {
                let r = pareto_efficient(a, need_prefs()?, problem);
                AxiomVerdict::new(kind.as_str(), capped(r, efficiency_verdict)?)
            }
            AuditKind::Cpe => {
                let r = constrained_pareto_efficient(a, need_prefs()?, &inst.bounds, problem);
                let verdict = match r {
                    Err(Error::BoundViolated { bound, count, ceiling }) => {
                        Verdict::fail(json!({"bound_violated": {"bound": bound, "count": count, "ceiling": ceiling}}))
                    }
                    r => capped(r, efficiency_verdict)?,
                };
                AxiomVerdict::new(kind.as_str(), verdict)
            }
            AuditKind::Mqueue => {
                let m = need_profile()?;
                let verdict = match reconstruct_m_queue(a, m, problem)? {
                    Some(_) => Verdict::Pass,
                    None => {
                        let slots = problem.allocation_indices(a)?;
                        Verdict::fail(first_non_maximal(inst, &slots, m))
                    }
                };
                AxiomVerdict::new(kind.as_str(), verdict)
            }
        };
        out.push(v);
    }
    Ok(out)
}

fn efficiency_verdict(e: axioms::Efficiency) -> Verdict {
    match e.witness() {
        None => Verdict::Pass,
        Some(w) => Verdict::fail(w),
    }
}

/// Audits a finished run of `mech`.
pub fn report_for(
    inst: &Instance,
    outcome: RunOutcome,
    audits: Option<&[AuditKind]>,
    limits: Limits,
) -> Result<AuditReport, CliError> {
    let kinds = audits
        .map(<[AuditKind]>::to_vec)
        .unwrap_or_else(|| default_audits(inst));
    let verdicts = audit(inst, &outcome.allocation, outcome.profile.as_deref(), &kinds, limits)?;
    Ok(AuditReport {
        instance: inst.name.clone(),
        mechanism: outcome.mechanism.to_string(),
        allocation: assignments(&inst.problem, &outcome.allocation),
        verdicts,
        trace: outcome.trace,
        elapsed_ms: None,
    })
}

impl RunOutcome {
    pub fn from_trace(mechanism: MechanismName, trace: RunTrace) -> Self {
        Self {
            mechanism,
            allocation: trace.allocation(),
            profile: Some(trace.profile()),
            trace: Some(trace),
        }
    }
}

/// Runs a mechanism and audits its allocation.
pub fn run(
    inst: &Instance,
    mech: Option<MechanismName>,
    audits: Option<&[AuditKind]>,
    provider: Option<&mut dyn RankingProvider>,
    limits: Limits,
) -> Result<AuditReport, CliError> {
    let mech = mechanism_or_default(inst, mech)?;
    let outcome = execute(inst, mech, provider)?;
    report_for(inst, outcome, audits, limits)
}

/// Tabulates a static mechanism or the outcome table over its message spaces.
pub fn mechanism_under_test(
    inst: &Instance,
    mech: MechanismName,
    limits: Limits,
) -> Result<MechanismUnderTest, CliError> {
    let (spaces, mut f): (Vec<MessageSpace>, Outcomes<'_>) = match mech {
        MechanismName::Table => (inst.spaces.clone(), Box::new(table_lookup(inst)?)),
        MechanismName::DynamicModular | MechanismName::Given => {
            return Err(precondition(format!(
                "{mech} cannot be tabulated over message profiles"
            )));
        }
        _ => {
            let engine = StaticMechanism::new(inst, mech)?;
            let spaces = engine.spaces.clone();
            (spaces, Box::new(move |m: &[Message]| engine.run(m).map(|t| t.slots())))
        }
    };
    let listed = spaces
        .iter()
        .map(|s| s.enumerate(limits.message_cap))
        .collect::<vfair_core::Result<Vec<_>>>()?;
    Ok(MechanismUnderTest::new(
        mech.as_str(),
        &inst.problem,
        listed,
        limits.profile_cap,
        &mut f,
    )?)
}

#[derive(Serialize)]
struct UnfairProfile {
    profile: Vec<Message>,
    allocation: Allocation,
    witness: axioms::FairnessWitness,
}

#[derive(Serialize)]
struct RichnessFailure {
    officer: OfficerId,
    message: Message,
    pair: (StateId, StateId),
}

fn check_one(
    inst: &Instance,
    mech: Option<MechanismName>,
    kind: CheckKind,
    mut_cache: &mut Option<Result<MechanismUnderTest, (u128, u128)>>,
    limits: Limits,
) -> Result<AxiomVerdict, CliError> {
    let problem = &inst.problem;
    let name = kind.as_str();
    match kind {
        CheckKind::Solvency => {
            let budget = limits.budget.unwrap_or(DEFAULT_SOLVENCY_BUDGET);
            return Ok(match check_sequential_solvency(problem, &inst.bounds, budget)? {
                SolvencyVerdict::Solvent { nodes } => {
                    AxiomVerdict::new(name, Verdict::Pass).with_detail(json!({"nodes": nodes}))
                }
                SolvencyVerdict::Inconclusive { nodes, budget } => AxiomVerdict::new(
                    name,
                    Verdict::Inconclusive {
                        count: nodes as u128,
                        cap: budget as u128,
                    },
                ),
                SolvencyVerdict::Counterexample(ce) => {
                    let replay = replay_solvency_counterexample(problem, &inst.bounds, &ce)?;
                    AxiomVerdict::new(name, Verdict::fail(json!({"counterexample": ce, "replay": replay})))
                }
            });
        }
        CheckKind::Richness => {
            let spaces = match mech {
                Some(MechanismName::Modular) => StaticMechanism::new(inst, MechanismName::Modular)?.spaces,
                _ => inst.spaces.clone(),
            };
            for (k, s) in spaces.iter().enumerate() {
                match s.check_richness(limits.message_cap) {
                    Ok(None) => {}
                    Ok(Some(w)) => {
                        return Ok(AxiomVerdict::new(
                            name,
                            Verdict::fail(RichnessFailure {
                                officer: problem.officers()[k].id.clone(),
                                message: w.message,
                                pair: w.pair,
                            }),
                        ))
                    }
                    Err(Error::CapExceeded { count, cap }) => {
                        return Ok(AxiomVerdict::new(name, Verdict::Inconclusive { count, cap }))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            return Ok(AxiomVerdict::new(name, Verdict::Pass));
        }
        _ => {}
    }
    let mech = mech.ok_or_else(|| CliError::Usage(format!("check `{name}` needs a mechanism")))?;
    if mech == MechanismName::DynamicModular {
        if kind != CheckKind::Sp {
            return Err(precondition(format!(
                "check `{name}` is not defined for the dynamic mechanism"
            )));
        }
        let prefs = inst
            .preferences
            .as_ref()
            .ok_or_else(|| precondition("per-step dominance needs true preferences"))?;
        let r = check_dynamic_stepwise_dominance(problem, &inst.bounds, prefs, limits.profile_cap);
        return Ok(
            AxiomVerdict::new(name, capped(r, |w| w.map_or(Verdict::Pass, Verdict::fail))?)
                .with_detail("per-step dominance over every ranking of each presented menu"),
        );
    }
    if mut_cache.is_none() {
        *mut_cache = Some(match mechanism_under_test(inst, mech, limits) {
            Ok(m) => Ok(m),
            Err(CliError::Core(Error::CapExceeded { count, cap })) => Err((count, cap)),
            Err(e) => return Err(e),
        });
    }
    let mech_ut = match mut_cache.as_ref().expect("filled above") {
        Ok(m) => m,
        Err((count, cap)) => {
            return Ok(AxiomVerdict::new(
                name,
                Verdict::Inconclusive {
                    count: *count,
                    cap: *cap,
                },
            ))
        }
    };
    let deviation =
        |r: vfair_core::Result<Option<axioms::DeviationWitness>>| capped(r, |w| w.map_or(Verdict::Pass, Verdict::fail));
    let verdict = match kind {
        CheckKind::Sp => deviation(check_strategy_proof(mech_ut))?,
        CheckKind::Coherence => deviation(check_coherence(mech_ut))?,
        CheckKind::Expressiveness => deviation(check_expressiveness(mech_ut))?,
        CheckKind::Availability => deviation(check_availability(mech_ut))?,
        CheckKind::WeakAvailability => deviation(check_weak_availability(mech_ut))?,
        CheckKind::FairnessSweep => {
            let mut verdict = Verdict::Pass;
            for idx in 0..mech_ut.profile_count() {
                let profile = mech_ut.messages(idx);
                let a = problem.allocation(mech_ut.outcome(idx));
                if let Some(witness) = visibly_unfair_witness(&a, &profile, problem)? {
                    verdict = Verdict::fail(UnfairProfile {
                        profile,
                        allocation: a,
                        witness,
                    });
                    break;
                }
            }
            verdict
        }
        CheckKind::Solvency | CheckKind::Richness => unreachable!("handled above"),
    };
    Ok(AxiomVerdict::new(name, verdict))
}

/// Runs each check in order. Mechanism-level checks use `mech` or the
/// instance's default mechanism.
pub fn check(
    inst: &Instance,
    mech: Option<MechanismName>,
    kinds: &[CheckKind],
    limits: Limits,
) -> Result<CheckReport, CliError> {
    let mech = if kinds.iter().any(|k| k.needs_mechanism()) {
        Some(mechanism_or_default(inst, mech)?)
    } else {
        mech.or(inst.default_mechanism())
    };
    let mut cache = None;
    let checks = kinds
        .iter()
        .map(|&k| check_one(inst, mech, k, &mut cache, limits))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CheckReport {
        instance: inst.name.clone(),
        mechanism: mech.map(|m| m.to_string()),
        checks,
        elapsed_ms: None,
    })
}
