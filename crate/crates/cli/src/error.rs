use thiserror::Error;

/// Exit status for configuration and usage problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("ConfigError at {path}: {rule}")]
    Config { path: String, rule: String },
    #[error("UsageError: {0}")]
    Usage(String),
    #[error("SchemaError in {file} line {line}: {detail}")]
    Schema {
        file: String,
        line: u64,
        detail: String,
    },
    #[error("{kind}: {detail}")]
    Runtime { kind: &'static str, detail: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Schema { .. } | CliError::Runtime { .. } => EXIT_RUNTIME,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
        CliError::Runtime {
            kind: "IoError",
            detail: format!("{}: {e}", path.display()),
        }
    }
}

impl From<acute::curriculum::CurriculumError> for CliError {
    fn from(e: acute::curriculum::CurriculumError) -> Self {
        use acute::curriculum::CurriculumError as E;
        let kind = match &e {
            E::InvalidConfig(_) => "InvalidConfig",
            E::NoFeasibleGoal => "NoFeasibleGoal",
            E::Validation { .. } => "ValidationError",
            E::InfeasibleHfTask { .. } => "InfeasibleHfTask",
            E::Io(_) => "IoError",
            E::Params(_) => "ParamsError",
            E::Mapping(_) => "MappingError",
            E::Agent(_) => "AgentError",
        };
        CliError::Runtime {
            kind,
            detail: e.to_string(),
        }
    }
}
