use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VdpError {
    #[error("syntax error at {at}: {message}")]
    Syntax { at: String, message: String },
    #[error("unsupported VDP version {0} (only version 1 is supported)")]
    UnsupportedVersion(u64),
    #[error("duplicate sibling id {id:?} at {at}")]
    DuplicateSiblingId { at: String, id: String },
    #[error("empty split at {at}")]
    EmptySplit { at: String },
    #[error("invalid shares at {at}: shares must be a positive integer")]
    InvalidShares { at: String },
    #[error("unknown keyword {key:?} at {at}")]
    UnknownKeyword { at: String, key: String },

    #[error("failed to fetch {url}: {reason}")]
    Fetch { url: String, reason: String },
    #[error("cycle detected: {url} is already on the resolution path")]
    Cycle { url: String },
    #[error("resolution depth exceeds {max} documents")]
    DepthExceeded { max: usize },
    #[error("resolution would fetch more than {max} documents")]
    DocumentBudgetExceeded { max: usize },
    #[error("in document {url}: {source}")]
    Nested {
        url: String,
        #[source]
        source: Box<VdpError>,
    },

    #[error("unresolved external reference at {path}")]
    UnresolvedNode { path: String },
    #[error("value exceeds the supported exact-integer range")]
    Overflow,

    #[error("attribution requires at least one contribution")]
    EmptyContributions,
}

impl VdpError {
    pub(crate) fn syntax(at: &str, message: impl Into<String>) -> Self {
        VdpError::Syntax {
            at: at.to_string(),
            message: message.into(),
        }
    }

    /// The innermost error, looking through `Nested` wrappers.
    pub fn root_cause(&self) -> &VdpError {
        match self {
            VdpError::Nested { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
