//! Instance documents: strict JSON schema and validation into core types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vfair_core::constraints::{UpperBound, UpperBoundSystem};
use vfair_core::mechanisms::Rule;
use vfair_core::relations::{validate_message, Message, PreferenceOrder};
use vfair_core::spaces::{induced_partition, MessageSpace, MessageSpaceSpec, Partition};
use vfair_core::{Allocation, Officer, OfficerType, Problem, State, Universe};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfficerDoc {
    pub id: String,
    #[serde(rename = "type")]
    pub otype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub id: String,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundDoc {
    pub types: Vec<String>,
    pub states: Vec<String>,
    pub ceiling: usize,
}

pub type PairsDoc = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceDoc {
    Complete {},
    Zonal { zones: Vec<Vec<String>> },
    RankedZonal { zones: Vec<Vec<String>> },
    Explicit { messages: Vec<PairsDoc> },
    ModularInduced {},
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<SpaceDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_type: BTreeMap<String, SpaceDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_officer: BTreeMap<String, SpaceDoc>,
}

/// Selection rule; orders name states, and zone engines read each state as
/// the zone containing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleDoc {
    Default,
    Order(Vec<String>),
    When {
        officer: String,
        prefers: (String, String),
        then: Box<RuleDoc>,
        otherwise: Box<RuleDoc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeRowDoc {
    pub profile: BTreeMap<String, PairsDoc>,
    pub allocation: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismName {
    /// Serial dictatorship; complete message spaces only.
    Sd,
    /// m-queue with per-officer state-order rules.
    Mqueue,
    /// Partitioned priority over zonal spaces.
    Pp,
    /// Ranked partitioned priority over ranked-zonal spaces.
    Rpp,
    /// Static modular priority.
    Modular,
    /// Dynamic modular priority, elicited one officer at a time.
    DynamicModular,
    /// The instance's explicit outcome table.
    Table,
    /// The instance's stated allocation, for audits only.
    Given,
}

impl MechanismName {
    pub fn as_str(self) -> &'static str {
        match self {
            MechanismName::Sd => "sd",
            MechanismName::Mqueue => "mqueue",
            MechanismName::Pp => "pp",
            MechanismName::Rpp => "rpp",
            MechanismName::Modular => "modular",
            MechanismName::DynamicModular => "dynamic-modular",
            MechanismName::Table => "table",
            MechanismName::Given => "given",
        }
    }
}

impl fmt::Display for MechanismName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub officers: Vec<OfficerDoc>,
    pub states: Vec<StateDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<BoundDoc>,
    #[serde(default)]
    pub message_spaces: SpacesDoc,
    /// True preferences, best first, by officer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferences: Option<BTreeMap<String, Vec<String>>>,
    /// Explicit message profile, by officer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<BTreeMap<String, PairsDoc>>,
    /// Exogenous zone rankings by officer; zones are named by a member state.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub exogenous: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub exogenous_by_type: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rules: BTreeMap<String, RuleDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<OutcomeRowDoc>>,
    /// Allocation in priority order, audited by the `given` mechanism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_mechanism: Option<MechanismName>,
    /// Documented outcomes; ignored by the tool, asserted by tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<serde_json::Value>,
}

/// A validated instance. Officers are stored in priority order.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub doc: InstanceDocument,
    pub problem: Problem,
    pub bounds: UpperBoundSystem,
    pub specs: Vec<MessageSpaceSpec>,
    pub spaces: Vec<MessageSpace>,
    pub preferences: Option<Vec<PreferenceOrder>>,
    pub profile: Option<Vec<Message>>,
    /// Zone indices of each officer's induced partition.
    pub exogenous: Vec<Vec<usize>>,
    pub rules: Vec<Rule>,
    pub outcomes: Option<Vec<(Vec<Message>, Allocation)>>,
    pub allocation: Option<Allocation>,
}

impl Instance {
    pub fn parse(text: &str, fallback_name: &str) -> Result<Self, CliError> {
        let doc: InstanceDocument = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_document(doc, fallback_name)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
        Self::parse(&text, stem)
    }

    pub fn from_document(doc: InstanceDocument, fallback_name: &str) -> Result<Self, CliError> {
        let name = doc.name.clone().unwrap_or_else(|| fallback_name.to_string());
        let officers = ordered_officers(&doc.officers)?;
        let states: Vec<State> = doc
            .states
            .iter()
            .map(|s| State {
                id: s.id.as_str().into(),
                capacity: s.capacity,
            })
            .collect();
        let problem = Problem::new(officers, states)?;
        let uni = problem.universe().clone();
        let bounds = UpperBoundSystem::new(
            doc.bounds
                .iter()
                .map(|b| {
                    UpperBound::new(
                        b.types.iter().map(String::as_str),
                        b.states.iter().map(String::as_str),
                        b.ceiling,
                    )
                })
                .collect(),
        )?;
        bounds.validate(&problem)?;
        let known_types = problem.types();
        for (i, b) in doc.bounds.iter().enumerate() {
            if let Some(t) = b
                .types
                .iter()
                .find(|t| !known_types.contains(&OfficerType::new(t.as_str())))
            {
                return Err(CliError::Integrity(format!(
                    "bound {} names unknown officer type `{t}`",
                    i + 1
                )));
            }
        }

        let officer_ids: BTreeSet<&str> = doc.officers.iter().map(|o| o.id.as_str()).collect();
        let check_officer = |id: &str, field: &str| -> Result<(), CliError> {
            if officer_ids.contains(id) {
                Ok(())
            } else {
                Err(CliError::Integrity(format!("`{field}` names unknown officer `{id}`")))
            }
        };
        let check_type = |t: &str, field: &str| -> Result<(), CliError> {
            if known_types.contains(&OfficerType::new(t)) {
                Ok(())
            } else {
                Err(CliError::Integrity(format!(
                    "`{field}` names unknown officer type `{t}`"
                )))
            }
        };
        for id in doc.message_spaces.by_officer.keys() {
            check_officer(id, "message_spaces.by_officer")?;
        }
        for t in doc.message_spaces.by_type.keys() {
            check_type(t, "message_spaces.by_type")?;
        }

        let mut specs = Vec::with_capacity(problem.n());
        let mut spaces = Vec::with_capacity(problem.n());
        for o in problem.officers() {
            let sd = doc
                .message_spaces
                .by_officer
                .get(o.id.as_str())
                .or_else(|| doc.message_spaces.by_type.get(o.otype.as_str()))
                .or(doc.message_spaces.default.as_ref())
                .cloned()
                .unwrap_or(SpaceDoc::Complete {});
            let spec = space_spec(&sd, &uni, &o.otype)?;
            spaces.push(MessageSpace::resolve(&spec, &uni, &bounds)?);
            specs.push(spec);
        }

        let preferences = match &doc.preferences {
            None => None,
            Some(map) => {
                for id in map.keys() {
                    check_officer(id, "preferences")?;
                }
                let mut out = Vec::with_capacity(problem.n());
                for o in problem.officers() {
                    let ranking = map.get(o.id.as_str()).ok_or_else(|| {
                        CliError::Integrity(format!("`preferences` has no entry for officer `{}`", o.id))
                    })?;
                    out.push(PreferenceOrder::new(&uni, ranking.iter().map(String::as_str))?);
                }
                Some(out)
            }
        };

        let profile = match &doc.profile {
            None => None,
            Some(map) => {
                for id in map.keys() {
                    check_officer(id, "profile")?;
                }
                let mut out = Vec::with_capacity(problem.n());
                for (k, o) in problem.officers().iter().enumerate() {
                    let pairs = map
                        .get(o.id.as_str())
                        .ok_or_else(|| CliError::Integrity(format!("`profile` has no entry for officer `{}`", o.id)))?;
                    let m = message(pairs, &uni)?;
                    if !spaces[k].contains(&m) {
                        return Err(vfair_core::Error::MessageNotInSpace { officer: o.id.clone() }.into());
                    }
                    out.push(m);
                }
                Some(out)
            }
        };

        for id in doc.exogenous.keys() {
            check_officer(id, "exogenous")?;
        }
        for t in doc.exogenous_by_type.keys() {
            check_type(t, "exogenous_by_type")?;
        }
        let mut exogenous = Vec::with_capacity(problem.n());
        for o in problem.officers() {
            let part = induced_partition(&bounds, &o.otype, &uni);
            let listed = doc
                .exogenous
                .get(o.id.as_str())
                .or_else(|| doc.exogenous_by_type.get(o.otype.as_str()));
            exogenous.push(zone_order(listed.map(Vec::as_slice).unwrap_or(&[]), &part, &uni)?);
        }

        let officer_index = |id: &str| problem.officer_index(id);
        let mut rules = vec![Rule::Default; problem.n()];
        for (id, r) in &doc.rules {
            check_officer(id, "rules")?;
            rules[officer_index(id)?] = rule(r, &problem)?;
        }

        let outcomes = match &doc.outcomes {
            None => None,
            Some(rows) => {
                let mut out = Vec::with_capacity(rows.len());
                for (r, row) in rows.iter().enumerate() {
                    for id in row.profile.keys() {
                        check_officer(id, "outcomes.profile")?;
                    }
                    let mut ms = Vec::with_capacity(problem.n());
                    for o in problem.officers() {
                        let pairs = row.profile.get(o.id.as_str()).ok_or_else(|| {
                            CliError::Integrity(format!("outcome row {} has no message for officer `{}`", r + 1, o.id))
                        })?;
                        ms.push(message(pairs, &uni)?);
                    }
                    let a = Allocation::new(row.allocation.iter().map(String::as_str));
                    problem.check_feasible(&problem.allocation_indices(&a)?)?;
                    out.push((ms, a));
                }
                Some(out)
            }
        };

        let allocation = match &doc.allocation {
            None => None,
            Some(ids) => {
                let a = Allocation::new(ids.iter().map(String::as_str));
                problem.check_feasible(&problem.allocation_indices(&a)?)?;
                Some(a)
            }
        };

        Ok(Self {
            name,
            doc,
            problem,
            bounds,
            specs,
            spaces,
            preferences,
            profile,
            exogenous,
            rules,
            outcomes,
            allocation,
        })
    }

    /// The explicit profile, or the canonical truthful profile for the
    /// instance's preferences.
    pub fn message_profile(&self) -> Result<Vec<Message>, CliError> {
        if let Some(p) = &self.profile {
            return Ok(p.clone());
        }
        let prefs = self.preferences.as_ref().ok_or_else(|| {
            CliError::Core(vfair_core::Error::Precondition(
                "instance has neither a message profile nor preferences".into(),
            ))
        })?;
        Ok(self
            .spaces
            .iter()
            .zip(prefs)
            .map(|(s, p)| s.truthful_message(p))
            .collect::<vfair_core::Result<Vec<_>>>()?)
    }

    pub fn default_mechanism(&self) -> Option<MechanismName> {
        self.doc.default_mechanism
    }
}

fn ordered_officers(docs: &[OfficerDoc]) -> Result<Vec<Officer>, CliError> {
    let given = docs.iter().filter(|o| o.priority.is_some()).count();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    if given > 0 {
        if given != docs.len() {
            return Err(CliError::Integrity(
                "priority must be given for every officer or for none".into(),
            ));
        }
        let mut ranks: Vec<usize> = docs.iter().map(|o| o.priority.unwrap_or(0)).collect();
        order.sort_by_key(|&k| ranks[k]);
        ranks.sort_unstable();
        if ranks.iter().enumerate().any(|(k, &r)| r != k + 1) {
            return Err(CliError::Integrity(format!(
                "officer priorities must be a permutation of 1..={}",
                docs.len()
            )));
        }
    }
    Ok(order
        .into_iter()
        .map(|k| Officer {
            id: docs[k].id.as_str().into(),
            otype: docs[k].otype.as_str().into(),
        })
        .collect())
}

pub fn message(pairs: &PairsDoc, uni: &Universe) -> Result<Message, CliError> {
    Ok(validate_message(
        pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        uni,
    )?)
}

fn space_spec(sd: &SpaceDoc, uni: &Universe, t: &OfficerType) -> Result<MessageSpaceSpec, CliError> {
    Ok(match sd {
        SpaceDoc::Complete {} => MessageSpaceSpec::Complete,
        SpaceDoc::Zonal { zones } => MessageSpaceSpec::Zonal(Partition::new(uni, zones.iter())?),
        SpaceDoc::RankedZonal { zones } => MessageSpaceSpec::RankedZonal(Partition::new(uni, zones.iter())?),
        SpaceDoc::Explicit { messages } => {
            MessageSpaceSpec::Explicit(messages.iter().map(|m| message(m, uni)).collect::<Result<_, _>>()?)
        }
        SpaceDoc::ModularInduced {} => MessageSpaceSpec::ModularInduced(t.clone()),
    })
}

fn zone_order(listed: &[String], part: &Partition, uni: &Universe) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::with_capacity(part.len());
    for s in listed {
        let z = part.zone_of(uni.index_of(s)?);
        if out.contains(&z) {
            return Err(CliError::Integrity(format!(
                "exogenous ranking names the zone of `{s}` twice"
            )));
        }
        out.push(z);
    }
    let rest: Vec<usize> = (0..part.len()).filter(|z| !out.contains(z)).collect();
    out.extend(rest);
    Ok(out)
}

fn rule(doc: &RuleDoc, problem: &Problem) -> Result<Rule, CliError> {
    let uni = problem.universe();
    Ok(match doc {
        RuleDoc::Default => Rule::Default,
        RuleDoc::Order(states) => Rule::Order(
            states
                .iter()
                .map(|s| uni.index_of(s))
                .collect::<vfair_core::Result<_>>()?,
        ),
        RuleDoc::When {
            officer,
            prefers,
            then,
            otherwise,
        } => Rule::When {
            officer: problem.officer_index(officer)?,
            prefers: (uni.index_of(&prefers.0)?, uni.index_of(&prefers.1)?),
            then: Box::new(rule(then, problem)?),
            otherwise: Box::new(rule(otherwise, problem)?),
        },
    })
}
