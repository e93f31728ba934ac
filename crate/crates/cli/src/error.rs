use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] nldp_core::Error),

    /// A check ran to completion and reported a violation.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) if e.is_config_error() => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> String {
        match self {
            CliError::Config(_) => "config".into(),
            CliError::CheckFailed(_) => "check_failed".into(),
            CliError::Core(e) => {
                let dbg = format!("{e:?}");
                let name = dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Core");
                snake(name)
            }
        }
    }
}

fn snake(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_and_kinds() {
        let c = CliError::Config("x".into());
        assert_eq!((c.exit_code(), c.kind().as_str()), (1, "config"));
        let e = CliError::from(nldp_core::Error::SelectionFailed("y".into()));
        assert_eq!((e.exit_code(), e.kind().as_str()), (2, "selection_failed"));
        let e = CliError::from(nldp_core::Error::OutsideMargin { point: [1.9, 0.0], margin: 0.1, required: 0.2 });
        assert_eq!((e.exit_code(), e.kind().as_str()), (1, "outside_margin"));
        assert_eq!(CliError::CheckFailed("z".into()).exit_code(), 2);
    }
}
