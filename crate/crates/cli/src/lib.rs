//! Command implementations behind the `hwnas` binary.

pub mod commands;
pub mod config;
pub mod genome;
pub mod report;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// A reproduction or comparison check failed.
    pub const CHECK_FAILED: i32 = 1;
    /// Bad arguments, config or input files.
    pub const USAGE: i32 = 2;
    /// The search found nothing that fits the budget or constraint.
    pub const INFEASIBLE: i32 = 3;
    pub const IO: i32 = 4;
}

/// Maps an error chain to an exit code.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<hwnas_core::Error>().is_some()
            || cause.downcast_ref::<hwnas_core::accel::AccelError>().is_some()
        {
            return exit::INFEASIBLE;
        }
        if cause.downcast_ref::<genome::ParseError>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
            || cause.downcast_ref::<hwnas_core::search_space::SpaceError>().is_some()
        {
            return exit::USAGE;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return exit::IO;
        }
    }
    exit::USAGE
}
