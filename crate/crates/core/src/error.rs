use crate::ids::{OfficerId, StateId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("unknown state `{0}`")]
    UnknownState(StateId),
    #[error("duplicate state `{0}`")]
    DuplicateState(StateId),
    #[error("unknown officer `{0}`")]
    UnknownOfficer(OfficerId),
    #[error("duplicate officer `{0}`")]
    DuplicateOfficer(OfficerId),
    #[error("universe has {0} states; at most {max} are supported", max = crate::MAX_STATES)]
    UniverseTooLarge(usize),
    #[error("message relates `{0}` to itself")]
    ReflexivePair(StateId),
    #[error("message contains the cycle {}", display_path(.0))]
    Cycle(Vec<StateId>),
    #[error("maximal elements of an empty set are undefined")]
    EmptySet,
    #[error("operands are defined over different state universes")]
    UniverseMismatch,
    #[error("invalid preference order: {0}")]
    InvalidOrder(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("order for zone {zone} does not list exactly the zone's states")]
    OrderNotCoveringZone { zone: usize },
    #[error("invalid zone ranking: {0}")]
    InvalidZoneRanking(String),
    #[error("enumeration would produce {count} items, above the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },
    #[error("state `{state}` holds {occupancy} officers but has capacity {capacity}")]
    InfeasibleAllocation {
        state: StateId,
        occupancy: usize,
        capacity: usize,
    },
    #[error("allocation lists {got} officers, problem has {expected}")]
    AllocationLength { expected: usize, got: usize },
    #[error("total capacity {capacity} is below the number of officers {officers}")]
    CapacityShortfall { capacity: usize, officers: usize },
    #[error("state `{0}` must have positive capacity")]
    ZeroCapacity(StateId),
    #[error("upper bound {0} covers no officer types")]
    EmptyBoundTypes(usize),
    #[error("allocation violates upper bound {bound} ({count} > {ceiling})")]
    BoundViolated { bound: usize, count: usize, ceiling: usize },
    #[error("profile has {got} messages, problem has {expected} officers")]
    ProfileLength { expected: usize, got: usize },
    #[error("message of officer `{officer}` is not in their message space")]
    MessageNotInSpace { officer: OfficerId },
    #[error("selection for officer `{officer}` returned `{state}`, which is not maximal among available states")]
    NonMaximalSelection { officer: OfficerId, state: StateId },
    #[error("zone selected for officer `{officer}` has no available state")]
    EmptyZoneSelection { officer: OfficerId },
    #[error("ranked zone selector violated condition {condition} for officer `{officer}`: {detail}")]
    SelectorCondition {
        officer: OfficerId,
        condition: u8,
        detail: String,
    },
    #[error("no admissible zone for officer `{officer}`; the upper-bound system is not sequentially solvent")]
    NoAdmissibleZone { officer: OfficerId },
    #[error("menu for officer `{officer}` is empty; the upper-bound system is not sequentially solvent")]
    EmptyMenu { officer: OfficerId },
    #[error("invalid ranking from officer `{officer}`: {reason}")]
    InvalidRanking { officer: OfficerId, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

fn display_path(path: &[StateId]) -> String {
    path.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" -> ")
}
