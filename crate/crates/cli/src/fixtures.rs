//! Built-in instances.

use std::path::Path;

use crate::error::CliError;
use crate::instance::Instance;

const FIXTURES: &[(&str, &str)] = &[
    ("efficient_unfair", include_str!("../fixtures/efficient_unfair.json")),
    ("elicitation_limit", include_str!("../fixtures/elicitation_limit.json")),
    ("fair_not_pareto", include_str!("../fixtures/fair_not_pareto.json")),
    ("example_4_1", include_str!("../fixtures/example_4_1.json")),
    ("example_4_2", include_str!("../fixtures/example_4_2.json")),
    ("example_5_1", include_str!("../fixtures/example_5_1.json")),
    ("example_5_2", include_str!("../fixtures/example_5_2.json")),
    ("example_6_1", include_str!("../fixtures/example_6_1.json")),
    ("example_pp", include_str!("../fixtures/example_pp.json")),
    ("example_rpp", include_str!("../fixtures/example_rpp.json")),
    (
        "solvency_violation",
        include_str!("../fixtures/solvency_violation.json"),
    ),
    ("zone_rank", include_str!("../fixtures/zone_rank.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<Instance, CliError> {
    let text = source(name).ok_or_else(|| CliError::UnknownFixture(name.to_string()))?;
    Instance::parse(text, name)
}

/// A path to an existing file, otherwise a fixture name.
pub fn resolve(arg: &str) -> Result<Instance, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        Instance::load(path)
    } else {
        load(arg)
    }
}
