//! Exit-code policy.
//!
//! Every failure leaving `main` is classified into one of three classes so
//! scripts can branch on the process status without parsing text:
//!
//! * `2` — configuration error: bad flags, missing or malformed files,
//!   infeasible planner inputs. Also what clap itself exits with on usage
//!   errors, so the class is uniform whether parsing or execution failed.
//! * `3` — protocol abort: a party disconnected, timed out, or the
//!   transcript failed an internal consistency check mid-run.
//! * `4` — verification mismatch: the run completed but its output did not
//!   match the plaintext reference it was checked against.
//!
//! Alongside the exit status, `main` prints a single machine-readable JSON
//! object on stderr: `{"error": ..., "kind": ..., "code": ...}`.

use std::fmt;

use mpcnn_proto::ProtoError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Config,
    Protocol,
    Verification,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Protocol => 3,
            Kind::Verification => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Protocol => "protocol",
            Kind::Verification => "verification",
        }
    }
}

/// An error that pins its exit class explicitly. Anything else bubbling up
/// through anyhow is classified by [`classify`].
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Failure { kind: Kind::Config, message: message.into() })
    }

    pub fn verification(message: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Failure { kind: Kind::Verification, message: message.into() })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

/// Walk the error chain and decide the exit class. A [`Failure`] anywhere in
/// the chain wins. [`ProtoError`]s split: model/plan/encoding problems the
/// engine happens to detect are still configuration errors, while transport
/// and transcript failures are genuine protocol aborts. Everything else is
/// treated as a configuration problem.
pub fn classify(err: &anyhow::Error) -> Kind {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind;
        }
        if let Some(p) = cause.downcast_ref::<ProtoError>() {
            return match p {
                ProtoError::Model(_)
                | ProtoError::Patch(_)
                | ProtoError::Ring(_)
                | ProtoError::Unsupported(_) => Kind::Config,
                _ => Kind::Protocol,
            };
        }
    }
    Kind::Config
}
