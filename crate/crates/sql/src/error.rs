use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("parse error at byte {position}: {message} (near `{token}`)")]
    Parse { message: String, token: String, position: usize },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("execution error: {0}")]
    Execution(String),
}

impl SqlError {
    pub(crate) fn parse(message: &str, token: &str, position: usize) -> Self {
        SqlError::Parse { message: message.to_string(), token: token.to_string(), position }
    }

    pub(crate) fn exec(message: impl Into<String>) -> Self {
        SqlError::Execution(message.into())
    }

    /// The offending token for parse errors.
    pub fn token(&self) -> Option<&str> {
        match self {
            SqlError::Parse { token, .. } => Some(token),
            _ => None,
        }
    }
}
