//! `summarize`: recompute posterior summaries from a saved chain.csv.

use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use flankmatch_core::analysis::summarize_records;
use flankmatch_core::io;

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// chain.csv written by fit or fit-heuristic
    #[arg(long)]
    chain: PathBuf,
    /// Where to write summary.csv
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let samples = io::parse_chain(&args.chain)
        .with_context(|| format!("reading {}", args.chain.display()))?;
    let summary = summarize_records(&samples)?;
    io::write_summary(&args.out, &summary)?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{} samples", samples.len())?;
    writeln!(stdout, "parameter mean sd mode q2.5 q50 q97.5")?;
    for (name, s) in &summary {
        writeln!(
            stdout,
            "{name} {:.4} {:.4} {} {:.4} {:.4} {:.4}",
            s.mean,
            s.sd,
            s.mode.map_or_else(|| "-".to_string(), |v| v.to_string()),
            s.q2_5,
            s.q50,
            s.q97_5
        )?;
    }
    writeln!(stdout, "wrote {}", args.out.display())?;
    Ok(())
}
