//! One dynamic-mechanism elicitation, advanced by submitted rankings.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::Serialize;
use vfair_core::mechanisms::{DynamicRun, MenuState, MenuView, RunTrace};
use vfair_core::{Error, OfficerId, StateId};

use crate::commands::{report_for, Limits, RunOutcome};
use crate::error::CliError;
use crate::instance::{Instance, MechanismName};
use crate::report::{assignments, Assignment, AuditReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    AwaitingInput,
    Complete,
    /// The active officer's menu is empty.
    Stranded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Committed {
    pub officer: OfficerId,
    /// Omitted when assignments are hidden.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<StateId>,
}

/// Everything a client may see about a session.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub instance: String,
    pub status: Status,
    pub round: usize,
    pub officers: usize,
    pub committed: Vec<Committed>,
    /// Bounds met with equality so far.
    pub binding: Vec<usize>,
    pub remaining: Vec<MenuState>,
    pub menu: Option<MenuView>,
    pub allocation: Option<Vec<Assignment>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmitResult {
    pub committed: Committed,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_menu: Option<MenuView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Vec<Assignment>>,
}

/// Why a submission or report request was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionError {
    /// The submission names an officer who is not active.
    StaleOfficer {
        expected: Option<OfficerId>,
        got: String,
    },
    Complete,
    Incomplete,
    Stranded(OfficerId),
    InvalidRanking(String),
    Internal(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::StaleOfficer { .. } => "stale_officer",
            SessionError::Complete => "session_complete",
            SessionError::Incomplete => "session_incomplete",
            SessionError::Stranded(_) => "not_solvent",
            SessionError::InvalidRanking(_) => "invalid_ranking",
            SessionError::Internal(_) => "internal",
        }
    }

    pub fn message(&self) -> String {
        match self {
            SessionError::StaleOfficer { expected: Some(e), got } => {
                format!("officer `{e}` is active; a ranking from `{got}` was submitted")
            }
            SessionError::StaleOfficer { expected: None, got } => {
                format!("no officer is active; a ranking from `{got}` was submitted")
            }
            SessionError::Complete => "every officer is already placed".into(),
            SessionError::Incomplete => "the report is available once every officer is placed".into(),
            SessionError::Stranded(o) => format!("officer `{o}` has no admissible state"),
            SessionError::InvalidRanking(m) | SessionError::Internal(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    instance: Arc<Instance>,
    run: DynamicRun,
    hide_assignments: bool,
}

impl Session {
    pub fn new(instance: Arc<Instance>, hide_assignments: bool) -> Result<Self, CliError> {
        let run = DynamicRun::new(&instance.problem, &instance.bounds)?;
        Ok(Self {
            instance,
            run,
            hide_assignments,
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn status(&self) -> Status {
        match self.run.menu() {
            None => Status::Complete,
            Some(m) if m.z1.is_empty() => Status::Stranded,
            Some(_) => Status::AwaitingInput,
        }
    }

    pub fn menu(&self) -> Option<MenuView> {
        self.run
            .menu()
            .map(|m| m.view(&self.instance.problem, &self.instance.bounds))
    }

    fn committed(&self, k: usize) -> Committed {
        let step = &self.run.trace().steps[k];
        Committed {
            officer: self.instance.problem.officers()[step.officer].id.clone(),
            state: (!self.hide_assignments).then(|| self.instance.problem.universe().id(step.assigned).clone()),
        }
    }

    fn allocation(&self) -> Option<Vec<Assignment>> {
        self.run
            .is_complete()
            .then(|| assignments(&self.instance.problem, &self.run.trace().allocation()))
    }

    pub fn view(&self, id: &str) -> SessionView {
        let problem = &self.instance.problem;
        SessionView {
            session_id: id.to_string(),
            instance: self.instance.name.clone(),
            status: self.status(),
            round: self.run.round(),
            officers: problem.n(),
            committed: (0..self.run.round()).map(|k| self.committed(k)).collect(),
            binding: self.run.binding().into_iter().collect(),
            remaining: self
                .run
                .remaining()
                .into_iter()
                .enumerate()
                .map(|(s, remaining)| MenuState {
                    id: problem.universe().id(s).clone(),
                    remaining,
                })
                .collect(),
            menu: self.menu(),
            allocation: self.allocation(),
        }
    }

    /// Commits the active officer's ranking. A refused submission leaves the
    /// session unchanged.
    pub fn submit(&mut self, officer_id: &str, ranking: &[String]) -> Result<SubmitResult, SessionError> {
        let problem = &self.instance.problem;
        let Some(menu) = self.run.menu() else {
            return Err(SessionError::Complete);
        };
        let active = &problem.officers()[menu.round].id;
        if active.as_str() != officer_id {
            return Err(SessionError::StaleOfficer {
                expected: Some(active.clone()),
                got: officer_id.to_string(),
            });
        }
        if menu.z1.is_empty() {
            return Err(SessionError::Stranded(active.clone()));
        }
        match self.run.commit_ids(ranking) {
            Ok(_) => {}
            Err(e @ Error::InvalidRanking { .. }) => return Err(SessionError::InvalidRanking(e.to_string())),
            Err(e) => return Err(SessionError::Internal(e.to_string())),
        }
        let committed = Committed {
            officer: active.clone(),
            state: Some(
                problem
                    .universe()
                    .id(self.run.trace().steps[menu.round].assigned)
                    .clone(),
            ),
        };
        Ok(SubmitResult {
            committed,
            status: self.status(),
            next_menu: self.menu(),
            allocation: self.allocation(),
        })
    }

    pub fn trace(&self) -> &RunTrace {
        self.run.trace()
    }

    /// Elicits every remaining ranking on a terminal: each menu is shown on
    /// `out` and a whitespace- or comma-separated ranking is read from
    /// `input`, asking again after a refused ranking.
    pub fn prompt<R: BufRead, W: Write>(&mut self, mut input: R, mut out: W) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(e.to_string());
        while let Some(menu) = self.menu() {
            if menu.states.is_empty() {
                return Err(Error::NoAdmissibleZone {
                    officer: menu.officer_id,
                }
                .into());
            }
            let listed: Vec<String> = menu
                .states
                .iter()
                .map(|s| format!("{} ({} left)", s.id, s.remaining))
                .collect();
            writeln!(
                out,
                "officer {} (type {}), menu: {}",
                menu.officer_id,
                menu.officer_type,
                listed.join(", ")
            )
            .map_err(io)?;
            if !menu.binding.is_empty() {
                let bound: Vec<String> = menu.binding.iter().map(|b| b.index.to_string()).collect();
                writeln!(out, "binding bounds: {}", bound.join(", ")).map_err(io)?;
            }
            write!(out, "ranking> ").map_err(io)?;
            out.flush().map_err(io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io)? == 0 {
                return Err(Error::InvalidRanking {
                    officer: menu.officer_id,
                    reason: "input ended before a ranking was given".into(),
                }
                .into());
            }
            let ranking: Vec<String> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            match self.submit(menu.officer_id.as_str(), &ranking) {
                Ok(r) => {
                    writeln!(out, "{} -> {}", menu.officer_id, r.committed.state.expect("own state")).map_err(io)?
                }
                Err(SessionError::InvalidRanking(m)) => writeln!(out, "{m}").map_err(io)?,
                Err(e) => return Err(CliError::Usage(e.message())),
            }
        }
        Ok(())
    }

    /// Fairness and bounds of the elicited allocation under the submitted
    /// rankings, plus constrained efficiency under the instance preferences.
    pub fn report(&self) -> Result<AuditReport, SessionError> {
        if !self.run.is_complete() {
            return Err(SessionError::Incomplete);
        }
        let outcome = RunOutcome::from_trace(MechanismName::DynamicModular, self.run.trace().clone());
        report_for(&self.instance, outcome, None, Limits::default()).map_err(|e| SessionError::Internal(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn session() -> Session {
        Session::new(Arc::new(fixtures::load("example_6_1").unwrap()), false).unwrap()
    }

    #[test]
    fn refused_submissions_change_nothing() {
        let mut s = session();
        let before = serde_json::to_value(s.view("1")).unwrap();
        assert!(matches!(
            s.submit("i2", &["s1".into()]),
            Err(SessionError::StaleOfficer { .. })
        ));
        assert!(matches!(
            s.submit("i1", &["s1".into()]),
            Err(SessionError::InvalidRanking(_))
        ));
        assert!(matches!(
            s.submit("i1", &["s1".into(), "s1".into()]),
            Err(SessionError::InvalidRanking(_))
        ));
        assert_eq!(serde_json::to_value(s.view("1")).unwrap(), before);
        assert_eq!(s.report().unwrap_err(), SessionError::Incomplete);
    }

    #[test]
    fn truthful_session_matches_the_dynamic_engine() {
        let mut s = session();
        let r = s.submit("i1", &["s2".into(), "s1".into()]).unwrap();
        assert_eq!(r.status, Status::AwaitingInput);
        let menu: Vec<&str> = r
            .next_menu
            .as_ref()
            .unwrap()
            .states
            .iter()
            .map(|m| m.id.as_str())
            .collect();
        assert_eq!(menu, ["s1"]);
        let r = s.submit("i2", &["s1".into()]).unwrap();
        assert_eq!(r.status, Status::Complete);
        assert_eq!(s.submit("i2", &["s1".into()]).unwrap_err(), SessionError::Complete);
        let report = s.report().unwrap();
        assert_eq!(report.states(), ["s2", "s1"]);
        assert_eq!(report.verdict("cpe").unwrap().verdict.label(), "pass");
    }

    #[test]
    fn prompt_retries_until_valid() {
        let mut s = session();
        let mut out = Vec::new();
        s.prompt(b"s3\ns1\ns2 s1\ns2\ns1\n" as &[u8], &mut out).unwrap();
        assert_eq!(s.trace().allocation().0, ["s2", "s1"].map(Into::into));
        let shown = String::from_utf8(out).unwrap();
        assert!(shown.contains("unknown state `s3`"), "{shown}");
        assert_eq!(shown.matches("is not ranked").count(), 1, "{shown}");
        assert_eq!(shown.matches("is not on the menu").count(), 1, "{shown}");
    }

    #[test]
    fn prompt_reports_end_of_input() {
        let err = session().prompt(b"" as &[u8], Vec::new()).unwrap_err();
        assert_eq!(err.code(), "invalid_ranking");
    }

    #[test]
    fn hidden_assignments_are_omitted() {
        let mut s = Session::new(Arc::new(fixtures::load("example_6_1").unwrap()), true).unwrap();
        s.submit("i1", &["s1".into(), "s2".into()]).unwrap();
        let v = s.view("1");
        assert_eq!(v.committed[0].state, None);
        assert!(v.allocation.is_none());
    }
}
