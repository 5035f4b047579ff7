use landau_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{op}: {source}")]
    Solver {
        op: &'static str,
        #[source]
        source: CoreError,
    },
    #[error("{0}")]
    IncompatibleRuns(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// `0` success, `2` invalid input, `3` solver failure, `1` I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::IncompatibleRuns(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Solver { source, .. } => match source {
                CoreError::InvalidParameter(_)
                | CoreError::GridTooSmall { .. }
                | CoreError::ProblemTooLarge(_)
                | CoreError::InvalidExponent { .. }
                | CoreError::TimeTooLarge { .. }
                | CoreError::ZeroRelativeVelocity => 2,
                CoreError::NotConverged { .. }
                | CoreError::StepDiverged { .. }
                | CoreError::SingularPair { .. }
                | CoreError::MomentBoundViolated { .. }
                | CoreError::Infeasible(_) => 3,
            },
        }
    }

    /// `ERROR <module>.<op>: <message>`.
    pub fn report(&self) -> String {
        match self {
            CliError::Config(m) => format!("ERROR cli.config: {m}"),
            CliError::IncompatibleRuns(m) => format!("ERROR cli.compare: incompatible runs: {m}"),
            CliError::Io { .. } => format!("ERROR cli.io: {self}"),
            CliError::Solver { op, source } => format!("ERROR {op}: {source}"),
        }
    }
}

/// Tags a core error with the `module.op` that raised it.
pub trait At<T> {
    fn at(self, op: &'static str) -> Result<T, CliError>;
}

impl<T> At<T> for landau_core::Result<T> {
    fn at(self, op: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Solver { op, source })
    }
}
