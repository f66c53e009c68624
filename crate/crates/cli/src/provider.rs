//! Ranking files for the dynamic mechanism.

use std::collections::VecDeque;
use std::path::Path;

use vfair_core::mechanisms::{Menu, RankingProvider};
use vfair_core::{Error, Problem};

use crate::error::CliError;

/// Rankings read from a JSON list of state-id lists, one per officer in turn.
#[derive(Debug, Clone)]
pub struct FileProvider {
    rankings: VecDeque<Vec<String>>,
}

impl FileProvider {
    pub fn new(rankings: Vec<Vec<String>>) -> Self {
        Self {
            rankings: rankings.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let rankings: Vec<Vec<String>> = serde_json::from_str(&text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(Self::new(rankings))
    }
}

fn to_indices(problem: &Problem, menu: &Menu, ids: &[String]) -> vfair_core::Result<Vec<usize>> {
    let officer = problem.officers()[menu.round].id.clone();
    ids.iter()
        .map(|s| {
            problem.universe().index_of(s).map_err(|_| Error::InvalidRanking {
                officer: officer.clone(),
                reason: format!("unknown state `{s}`"),
            })
        })
        .collect()
}

impl RankingProvider for FileProvider {
    fn rank(&mut self, problem: &Problem, menu: &Menu) -> vfair_core::Result<Vec<usize>> {
        let ids = self.rankings.pop_front().ok_or_else(|| Error::InvalidRanking {
            officer: problem.officers()[menu.round].id.clone(),
            reason: "the provider file has no ranking left".into(),
        })?;
        to_indices(problem, menu, &ids)
    }
}
