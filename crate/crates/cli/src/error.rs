use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] kspv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest digest mismatch for {0}")]
    Digest(String),
}

impl CliError {
    /// 2 for invalid configuration or inputs, 3 for numerical failures, 1
    /// otherwise.
    pub fn exit_code(&self) -> u8 {
        use kspv::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(E::InvalidCount(_) | E::InvalidParameter(_) | E::InvalidBox(_)) => 2,
            CliError::Core(_) | CliError::Io(_) | CliError::Digest(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_separate_config_from_numerics() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(kspv::Error::InvalidCount("n".into())).exit_code(), 2);
        assert_eq!(
            CliError::from(kspv::Error::AllTruncated { threshold: 1.0 }).exit_code(),
            3
        );
        assert_eq!(CliError::from(kspv::Error::EmptyDecomposition).exit_code(), 3);
        assert_eq!(CliError::from(kspv::Error::Format("x".into())).exit_code(), 1);
    }
}
