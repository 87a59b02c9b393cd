use std::error::Error as StdError;
use std::process::ExitCode;

use catalysis_core::conference::ConferenceError;
use catalysis_core::dynamics::DynamicsError;
use catalysis_core::fitting::FitError;
use catalysis_core::interaction::InteractionError;
use catalysis_core::potential::PotentialError;
use catalysis_core::scheduler::SchedulerError;
use catalysis_core::stats::StatsError;
use catalysis_core::synth::SynthError;
use serde::Serialize;
use serde_json::json;

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Usage,
    Data,
    Numerical,
}

impl Failure {
    pub fn exit_code(self) -> u8 {
        match self {
            Failure::Usage => 2,
            Failure::Data => 3,
            Failure::Numerical => 4,
        }
    }
}

/// Invalid flag values or combinations that clap cannot check.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn fit_failure(e: &FitError) -> Failure {
    match e {
        FitError::NonFiniteStart(_) | FitError::AllStartsFailed { .. } => Failure::Numerical,
        FitError::Dynamics(d) => dynamics_failure(d),
        _ => Failure::Data,
    }
}

fn dynamics_failure(e: &DynamicsError) -> Failure {
    match e {
        DynamicsError::NonFinite { .. } => Failure::Numerical,
        DynamicsError::BadStep(_) => Failure::Usage,
        _ => Failure::Data,
    }
}

fn classify_cause(e: &(dyn StdError + 'static)) -> Option<Failure> {
    if e.is::<UsageError>() {
        return Some(Failure::Usage);
    }
    if let Some(f) = e.downcast_ref::<FitError>() {
        return Some(fit_failure(f));
    }
    if let Some(d) = e.downcast_ref::<DynamicsError>() {
        return Some(dynamics_failure(d));
    }
    if let Some(s) = e.downcast_ref::<StatsError>() {
        return Some(match s {
            StatsError::BadLevel(_) => Failure::Usage,
            _ => Failure::Data,
        });
    }
    if let Some(s) = e.downcast_ref::<SynthError>() {
        return Some(match s {
            SynthError::Fit(f) => fit_failure(f),
            _ => Failure::Data,
        });
    }
    let data = e.is::<ConferenceError>()
        || e.is::<InteractionError>()
        || e.is::<PotentialError>()
        || e.is::<SchedulerError>()
        || e.is::<serde_json::Error>()
        || e.is::<csv::Error>()
        || e.is::<std::io::Error>();
    data.then_some(Failure::Data)
}

/// Class of the first recognised error in the chain; unrecognised errors
/// count as data errors.
pub fn classify(err: &anyhow::Error) -> Failure {
    err.chain().find_map(classify_cause).unwrap_or(Failure::Data)
}

fn emit(kind: Failure, message: String, causes: Vec<String>) -> ExitCode {
    let report = json!({
        "error": {
            "kind": kind,
            "exit_code": kind.exit_code(),
            "message": message,
            "causes": causes,
        }
    });
    eprintln!("{report}");
    ExitCode::from(kind.exit_code())
}

/// Writes the machine-readable error report to stderr.
pub fn report(err: &anyhow::Error) -> ExitCode {
    emit(classify(err), format!("{err:#}"), err.chain().map(|c| c.to_string()).collect())
}

/// Argument errors print clap's usage text followed by the JSON report;
/// `--help` and `--version` exit normally.
pub fn argument_failure(err: clap::Error) -> ExitCode {
    if !err.use_stderr() {
        let _ = err.print();
        return ExitCode::SUCCESS;
    }
    let _ = err.print();
    emit(Failure::Usage, err.kind().to_string(), vec![err.render().to_string().trim().to_owned()])
}
