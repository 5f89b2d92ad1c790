//! Optional TOML run configuration.
//!
//! Every value a config file can carry is also a command-line flag; flags
//! win, then the file, then the built-in default. Sections are named after
//! the subcommand they feed. Unknown keys are rejected so typos fail loudly
//! instead of silently falling back to defaults.
//!
//! ```toml
//! profile = "exact-64bit"
//! seed = 7
//!
//! [estimate]
//! samples = 64
//!
//! [plan]
//! budget-frac = 0.25
//! granularity = 1
//!
//! [analyze-bits]
//! target-error = 0.000244140625
//! trials = 100000
//!
//! [secure-infer]
//! transport = "in-proc"
//! tolerance = 0.00390625
//! timeout-secs = 10
//!
//! [report]
//! samples = 16
//! plans = 200
//! ```

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    /// All three parties run as threads inside this process.
    InProc,
    /// Parties connect over TCP sockets.
    Tcp,
}

impl Transport {
    pub fn label(self) -> &'static str {
        match self {
            Transport::InProc => "in-proc",
            Transport::Tcp => "tcp",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    /// Fixed-point/compare profile name, e.g. "exact-64bit".
    pub profile: Option<String>,
    /// Default seed for anything derived from randomness.
    pub seed: Option<u64>,
    pub estimate: EstimateCfg,
    pub plan: PlanCfg,
    pub analyze_bits: BitsCfg,
    pub secure_infer: SecureCfg,
    pub report: ReportCfg,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EstimateCfg {
    pub samples: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PlanCfg {
    pub budget_frac: Option<f64>,
    pub granularity: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BitsCfg {
    pub samples: Option<u32>,
    pub target_error: Option<f64>,
    pub trials: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SecureCfg {
    pub transport: Option<Transport>,
    pub tolerance: Option<f64>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportCfg {
    pub samples: Option<u32>,
    pub plans: Option<u32>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}
