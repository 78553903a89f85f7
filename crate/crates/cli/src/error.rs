use cea_core::CeaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CeaError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_capability() => 3,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 2,
            CliError::Io(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            3 => "capability",
            4 => "numerical",
            _ => match self {
                CliError::Io(_) => "io",
                _ => "config",
            },
        }
    }

    /// `error kind=<kind> code=<code> reason=<single line>`
    pub fn line(&self) -> String {
        let reason = self.to_string().replace(['\n', '\r'], " ");
        format!(
            "error kind={} code={} reason={reason}",
            self.kind(),
            self.exit_code()
        )
    }
}
