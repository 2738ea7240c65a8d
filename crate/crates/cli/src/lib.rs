//! Command-line front end: the analysis pipeline plus one subcommand per
//! library operation.

pub mod commands;
pub mod config;
pub mod datasets;
pub mod files;
pub mod pipeline;

use emreduce_core::Error;

/// 1 for bad input or configuration, 2 for numerical failures.
pub fn exit_code(error: &Error) -> i32 {
    if error.is_numerical() {
        2
    } else {
        1
    }
}

/// Worker count from `EMREDUCE_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("EMREDUCE_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}
