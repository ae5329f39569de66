// SPDX-License-Identifier: Apache-2.0

use crate::guest_memory::PartitionId;
use crate::syscall_annotations::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Configuration and API misuse errors.
///
/// Sanitizer findings are not errors: they are returned as dedicated
/// violation values by the checking functions and end up in run reports.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("configuration error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("partition {0} is no longer initializing; regions are frozen")]
    Phase(PartitionId),

    #[error("partition {partition}: cannot fit {requested} bytes (payload plus redzones), {available} left")]
    OutOfMemory {
        partition: PartitionId,
        requested: u64,
        available: u64,
    },

    #[error("shadow encoding cannot represent {operation} of [{offset:#x}, +{len})")]
    Encoding {
        operation: &'static str,
        offset: u64,
        len: u64,
    },

    #[error("range [{offset:#x}, +{len}) is outside partition memory of {size} bytes")]
    OutOfRange { offset: u64, len: u64, size: u64 },

    #[error("unknown type `{0}`")]
    UnknownType(String),

    #[error("parameter `{0}` is not bound")]
    Bind(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
