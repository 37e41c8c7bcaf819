use std::fmt;

/// CLI failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input, invalid configuration: exit 2.
    Input(String),
    /// Numerical failure inside the library: exit 3.
    Numeric(String),
    /// Output could not be written: exit 4.
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Output(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<jkraim::Error> for CliError {
    fn from(e: jkraim::Error) -> Self {
        use jkraim::Error as E;
        match e {
            E::Parse(_) | E::Config(_) | E::UnknownSatellite(_) | E::EmptySample => CliError::Input(e.to_string()),
            E::Io(_) => CliError::Output(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
