//! Priority-based allocation under partial preference reports.
//!
//! Officers are processed in a single strict priority order and report
//! *messages*: irreflexive, acyclic relations over the states they may be
//! assigned to. The crate provides
//!
//! * [`relations`]: the algebra of messages (maximal elements, comparability,
//!   truthfulness, information ordering),
//! * [`spaces`]: complete, zonal, ranked-zonal, explicit and modular-induced
//!   message spaces, with enumeration and richness checks,
//! * [`constraints`]: modular upper-bound systems and the sequential-solvency
//!   verifier,
//! * [`mechanisms`]: the sequential engines (serial dictatorship, m-queue,
//!   partitioned and ranked-partitioned priority, static and dynamic modular
//!   priority), each producing a [`mechanisms::RunTrace`],
//! * [`axioms`]: exhaustive oracles for fairness, efficiency and incentive
//!   properties.

pub mod axioms;
pub mod constraints;
mod error;
mod ids;
pub mod mechanisms;
mod problem;
pub mod relations;
pub mod spaces;

pub use error::{Error, Result};
pub use ids::{OfficerId, OfficerType, StateId, StateSet, Universe, MAX_STATES};
pub use problem::{Allocation, Officer, Problem, State};
