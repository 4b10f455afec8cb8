//! Command-line entry point. See the subcommand functions for the individual
//! pipeline stages.

/// Parse arguments from the environment and run. Returns the process exit
/// code: 0 success, 2 config/flag error, 3 I/O error, 4 numerical abort,
/// 5 verification failure.
pub fn run() -> i32 {
    0
}
