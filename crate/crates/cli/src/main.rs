use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vfair::commands::{self, AuditKind, CheckKind, Limits, RunOutcome};
use vfair::impossibility::impossibility_search;
use vfair::provider::FileProvider;
use vfair::report::{exit_code, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};
use vfair::service::{serve, ServiceConfig};
use vfair::session::Session;
use vfair::{fixtures, CliError, MechanismName};

#[derive(Parser)]
#[command(
    name = "vfair",
    version,
    about = "Visibly fair priority allocation: run, audit and check mechanisms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Instance file, or the name of a built-in fixture.
    #[arg(long, short)]
    instance: String,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Node budget for searches.
    #[arg(long)]
    budget: Option<u64>,
    /// Largest number of message profiles to tabulate.
    #[arg(long)]
    profile_cap: Option<u128>,
    /// Largest number of messages to enumerate per space.
    #[arg(long)]
    message_cap: Option<u128>,
    /// Include wall-clock time in the report.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn limits(&self) -> Limits {
        let d = Limits::default();
        Limits {
            message_cap: self.message_cap.unwrap_or(d.message_cap),
            profile_cap: self.profile_cap.unwrap_or(d.profile_cap),
            budget: self.budget,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    /// Rank every menu by the instance preferences.
    Truth,
    /// Ask for each ranking on the terminal.
    Prompt,
    /// Read rankings from --provider-file.
    File,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mechanism and audit its allocation.
    Run {
        #[command(flatten)]
        common: Common,
        /// Defaults to the instance's mechanism.
        #[arg(long, short)]
        mechanism: Option<MechanismName>,
        /// Audits to run; defaults to fairness, bounds and, with preferences, cpe.
        #[arg(long, value_delimiter = ',')]
        audit: Vec<AuditKind>,
        /// Ranking source for the dynamic mechanism.
        #[arg(long, value_enum)]
        provider: Option<ProviderKind>,
        /// JSON list of rankings, one per officer in priority order.
        #[arg(long)]
        provider_file: Option<PathBuf>,
        /// Leave the step-by-step trace out of the report.
        #[arg(long)]
        no_trace: bool,
    },
    /// Check mechanism-level properties.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        mechanism: Option<MechanismName>,
        #[arg(long, value_delimiter = ',', required = true)]
        check: Vec<CheckKind>,
    },
    /// Classify every speak-or-stay-silent configuration. Exits 1 when none
    /// escapes.
    Impossibility {
        #[command(flatten)]
        common: Common,
    },
    /// Serve the dynamic mechanism over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Hide other officers' assigned states until every officer is placed.
        #[arg(long)]
        hide_assignments: bool,
    },
    /// List or print the built-in fixtures.
    Fixtures {
        #[command(subcommand)]
        action: FixtureAction,
    },
}

#[derive(Subcommand)]
enum FixtureAction {
    List,
    Show { name: String },
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn elapsed(start: Instant, on: bool) -> Option<f64> {
    on.then(|| start.elapsed().as_secs_f64() * 1e3)
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            common,
            mechanism,
            audit,
            provider,
            provider_file,
            no_trace,
        } => {
            let start = Instant::now();
            let inst = fixtures::resolve(&common.instance)?;
            let kind = match (provider, &provider_file) {
                (None, Some(_)) => Some(ProviderKind::File),
                (Some(ProviderKind::File), None) => {
                    return Err(CliError::Usage("--provider file needs --provider-file".into()))
                }
                (k, _) => k,
            };
            let audits = (!audit.is_empty()).then_some(audit.as_slice());
            let mech = commands::mechanism_or_default(&inst, mechanism)?;
            if kind.is_some_and(|k| k != ProviderKind::Truth) && mech != MechanismName::DynamicModular {
                return Err(CliError::Usage(
                    "ranking providers apply to the dynamic-modular mechanism only".into(),
                ));
            }
            let mut report = match kind {
                None | Some(ProviderKind::Truth) => commands::run(&inst, Some(mech), audits, None, common.limits())?,
                Some(ProviderKind::File) => {
                    let mut file = FileProvider::load(provider_file.as_deref().expect("checked above"))?;
                    commands::run(&inst, Some(mech), audits, Some(&mut file), common.limits())?
                }
                Some(ProviderKind::Prompt) => {
                    let mut session = Session::new(Arc::new(inst.clone()), false)?;
                    session.prompt(std::io::stdin().lock(), std::io::stderr())?;
                    let outcome = RunOutcome::from_trace(mech, session.trace().clone());
                    commands::report_for(&inst, outcome, audits, common.limits())?
                }
            };
            if no_trace {
                report.trace = None;
            }
            report.elapsed_ms = elapsed(start, common.timing);
            emit(&report, common.out.as_ref())?;
            Ok(exit_code(&report.verdicts))
        }
        Command::Check {
            common,
            mechanism,
            check,
        } => {
            let start = Instant::now();
            let inst = fixtures::resolve(&common.instance)?;
            let mut report = commands::check(&inst, mechanism, &check, common.limits())?;
            report.elapsed_ms = elapsed(start, common.timing);
            emit(&report, common.out.as_ref())?;
            Ok(exit_code(&report.checks))
        }
        Command::Impossibility { common } => {
            let inst = fixtures::resolve(&common.instance)?;
            let cap = common.profile_cap.unwrap_or(Limits::default().profile_cap);
            let report = impossibility_search(&inst.name, &inst.problem, &inst.bounds, cap)?;
            emit(&report, common.out.as_ref())?;
            Ok(if report.impossible { EXIT_FAIL } else { EXIT_PASS })
        }
        Command::Serve { addr, hide_assignments } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            rt.block_on(serve(&addr, ServiceConfig { hide_assignments }))
                .map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
            Ok(EXIT_PASS)
        }
        Command::Fixtures { action } => {
            match action {
                FixtureAction::List => {
                    for name in fixtures::names() {
                        let inst = fixtures::load(name)?;
                        println!("{name:<20} {}", inst.doc.description.as_deref().unwrap_or(""));
                    }
                }
                FixtureAction::Show { name } => {
                    let text = fixtures::source(&name).ok_or(CliError::UnknownFixture(name))?;
                    print!("{text}");
                }
            }
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
