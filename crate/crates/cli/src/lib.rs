//! Library half of the tunescope CLI: argument types, subcommand
//! implementations, and the predictor subprocess protocol.

pub mod args;
pub mod commands;
pub mod protocol;
