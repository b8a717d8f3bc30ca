//! Driver library for the `mechforce` binary.
//!
//! Splits into: config documents and their compilation into core systems
//! ([`config`]), the builtin registry ([`registry`]), report and file
//! formats ([`report`]), and the command drivers ([`run`]).

pub mod config;
pub mod registry;
pub mod report;
pub mod run;

/// An error paired with the process exit code it should produce: 2 for
/// unusable input, 1 for analytic failures.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: String) -> Self {
        Failure { code: 2, message }
    }

    pub fn run(message: String) -> Self {
        Failure { code: 1, message }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}
