//! Analytic communication model: closed-form per-layer traffic for a
//! parameterized conv+activation block under each protocol variant.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use mpcnn_core::comm::{table, CommParams};

use crate::errors::Failure;

#[derive(Args)]
pub struct CommArgs {
    /// Named operating point to start from.
    #[arg(long, default_value = "typical")]
    pub preset: String,
    /// Input feature-map height/width.
    #[arg(long)]
    pub h: Option<u64>,
    /// Input channels.
    #[arg(long)]
    pub i: Option<u64>,
    /// Output channels.
    #[arg(long)]
    pub o: Option<u64>,
    /// Filter size.
    #[arg(long)]
    pub f: Option<u64>,
    /// Ring element width in bits.
    #[arg(long)]
    pub ell: Option<u64>,
    /// Truncated compare width in bits.
    #[arg(long)]
    pub ell_star: Option<u64>,
    /// Fraction of sign decisions kept elementwise under a partial plan.
    #[arg(long)]
    pub q: Option<f64>,
    /// log2 of the compare field size.
    #[arg(long)]
    pub logp: Option<u64>,
    /// Also write the table as CSV.
    #[arg(long, value_name = "CSV")]
    pub csv: Option<PathBuf>,
}

pub fn comm_model(args: &CommArgs) -> Result<()> {
    let mut p = match args.preset.as_str() {
        "typical" => CommParams::typical(),
        other => {
            return Err(Failure::config(format!(
                "unknown operating point {other:?}; available: typical"
            )))
        }
    };
    if let Some(v) = args.h {
        p.h = v;
    }
    if let Some(v) = args.i {
        p.i = v;
    }
    if let Some(v) = args.o {
        p.o = v;
    }
    if let Some(v) = args.f {
        p.f = v;
    }
    if let Some(v) = args.ell {
        p.ell = v;
    }
    if let Some(v) = args.ell_star {
        p.ell_star = v;
    }
    if let Some(v) = args.q {
        p.q = v;
    }
    if let Some(v) = args.logp {
        p.logp = v;
    }
    p.validate()?;

    let rows = table(&p);
    crate::util::out_line(&format!(
        "operating point: h={} i={} o={} f={} ell={} ell*={} q={} logp={}",
        p.h, p.i, p.o, p.f, p.ell, p.ell_star, p.q, p.logp
    ))?;
    crate::util::out_line(&format!("{:<28} {:>12} {:>10}", "variant", "MB", "displayed"))?;
    for row in &rows {
        crate::util::out_line(&format!(
            "{:<28} {:>12.2} {:>10}",
            row.kind.label(),
            row.mb,
            row.displayed
        ))?;
    }

    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("writing table {}", path.display()))?;
        w.write_record(["variant", "bits", "mb", "displayed_mb"])?;
        for row in &rows {
            w.write_record([
                row.kind.label().to_string(),
                format!("{:.0}", row.bits),
                format!("{:.4}", row.mb),
                row.displayed.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}
