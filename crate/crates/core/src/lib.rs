//! Core arithmetic, sharing, model, planning and cost-model layers for the
//! three-party secure CNN inference stack.
//!
//! Everything here is deterministic given its seeds and runs at desk scale;
//! the networked protocol implementations live in the companion `mpcnn-proto`
//! crate, the command line in `mpcnn-cli`.

pub mod bits;
pub mod comm;
pub mod patch;
pub mod planner;
pub mod profile;
pub mod ring;
pub mod shares;
pub mod tensor;
