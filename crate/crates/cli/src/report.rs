//! Serializable audit and check reports.

use serde::Serialize;
use serde_json::Value;
use vfair_core::mechanisms::RunTrace;
use vfair_core::{Allocation, OfficerId, Problem, StateId};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { witness: Value },
    Inconclusive { count: u128, cap: u128 },
}

impl Verdict {
    pub fn fail(witness: impl Serialize) -> Self {
        Verdict::Fail {
            witness: serde_json::to_value(witness).expect("witnesses serialize"),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail { .. } => "fail",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomVerdict {
    pub axiom: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl AxiomVerdict {
    pub fn new(axiom: impl Into<String>, verdict: Verdict) -> Self {
        Self {
            axiom: axiom.into(),
            verdict,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Serialize) -> Self {
        self.detail = Some(serde_json::to_value(detail).expect("details serialize"));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub officer: OfficerId,
    pub state: StateId,
}

pub fn assignments(problem: &Problem, a: &Allocation) -> Vec<Assignment> {
    problem
        .officers()
        .iter()
        .zip(&a.0)
        .map(|(o, s)| Assignment {
            officer: o.id.clone(),
            state: s.clone(),
        })
        .collect()
}

/// Result of running a mechanism and auditing its allocation.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub instance: String,
    pub mechanism: String,
    pub allocation: Vec<Assignment>,
    pub verdicts: Vec<AxiomVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<RunTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl AuditReport {
    /// Allocation states in priority order.
    pub fn states(&self) -> Vec<&str> {
        self.allocation.iter().map(|a| a.state.as_str()).collect()
    }

    pub fn verdict(&self, axiom: &str) -> Option<&AxiomVerdict> {
        self.verdicts.iter().find(|v| v.axiom == axiom)
    }
}

/// Result of one or more mechanism-level checks.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub instance: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<String>,
    pub checks: Vec<AxiomVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl CheckReport {
    pub fn verdict(&self, check: &str) -> Option<&AxiomVerdict> {
        self.checks.iter().find(|v| v.axiom == check)
    }
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

/// Any failure wins over an inconclusive verdict.
pub fn exit_code<'a>(verdicts: impl IntoIterator<Item = &'a AxiomVerdict>) -> i32 {
    let mut code = EXIT_PASS;
    for v in verdicts {
        match v.verdict {
            Verdict::Fail { .. } => return EXIT_FAIL,
            Verdict::Inconclusive { .. } => code = EXIT_INCONCLUSIVE,
            Verdict::Pass => {}
        }
    }
    code
}
