// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// A precondition on a public operation's arguments was violated.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid argument: {message}")]
pub struct ArgumentError {
    pub message: String,
}

impl ArgumentError {
    pub fn new(message: impl Into<String>) -> Self {
        ArgumentError {
            message: message.into(),
        }
    }
}
