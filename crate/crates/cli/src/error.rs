use thiserror::Error;

/// Command failure, mapped onto the process exit code by [`CliError::exit_code`].
#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid config:\n{}", bullet(.0))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

fn bullet(items: &[String]) -> String {
    items.iter().map(|s| format!("  - {s}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Invariant(_) => 5,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<nemflex::Error> for CliError {
    fn from(e: nemflex::Error) -> Self {
        use nemflex::Error as E;
        match e {
            E::Io(e) => CliError::Io(e.to_string()),
            E::InvalidParameter(m) | E::UnsupportedGrid(m) => {
                CliError::Config(m.split("; ").map(str::to_string).collect())
            }
            E::Parse { .. } | E::Input(_) => CliError::Parse(e.to_string()),
            E::Invariant(_) | E::Infeasible { .. } => CliError::Invariant(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
