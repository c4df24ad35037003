use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Core(locreg::Error),
    Io(String),
    Parse(String),
    Config(String),
}

impl From<locreg::Error> for CliError {
    fn from(e: locreg::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "Io",
            CliError::Parse(_) => "Parse",
            CliError::Config(_) => "Config",
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) | CliError::Parse(m) | CliError::Config(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}
