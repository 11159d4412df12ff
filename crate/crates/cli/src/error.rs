use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] stwave::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// 2 configuration, 3 supercritical refusal, 4 above-threshold refusal,
    /// 5 non-convergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use stwave::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidExponent { .. } | E::InvalidParameter(_) | E::InvalidGrid(_) | E::Parse(_)) => 2,
            CliError::Core(E::RefusedSupercritical(_)) => 3,
            CliError::Core(E::RefusedAboveThreshold { .. }) => 4,
            CliError::Core(E::NonConvergence { .. }) => 5,
            _ => 1,
        }
    }

    /// Short status label recorded in the manifest.
    pub fn status(&self) -> &'static str {
        match self.exit_code() {
            2 => "config_error",
            3 => "refused_supercritical",
            4 => "refused_above_threshold",
            5 => "nonconvergence",
            _ => "failed",
        }
    }
}
