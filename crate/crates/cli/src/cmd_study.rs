//! `simstudy`: replicate simulation study over estimator arms.

use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use flankmatch_core::analysis::{run_study_with_progress, StudyConfig};
use flankmatch_core::io;

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Study scenario JSON (see README for the schema)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Override the config's master seed
    #[arg(long)]
    master_seed: Option<u64>,
    /// Override the config's replicate count
    #[arg(long)]
    replicates: Option<usize>,
    /// Override the config's scenario name
    #[arg(long)]
    name: Option<String>,
}

pub fn run(args: Args) -> Result<()> {
    let mut config: StudyConfig = io::read_json(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(seed) = args.master_seed {
        config.master_seed = seed;
    }
    if let Some(r) = args.replicates {
        config.n_replicates = r;
    }
    if let Some(name) = args.name {
        config.name = name;
    }

    let total = config.n_replicates * config.estimators.len();
    eprintln!(
        "study `{}`: {} replicates x {} arms = {} chains",
        config.name,
        config.n_replicates,
        config.estimators.len(),
        total
    );
    let progress = |done: usize, total: usize| eprintln!("  chain {done}/{total} finished");
    let result = run_study_with_progress(&config, Some(&progress))?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    io::write_json(&args.out.join("study_config.json"), &config)?;
    io::write_study_rows(&args.out.join("replicates.csv"), &config.name, &result.rows)?;
    io::write_study_metrics(&args.out.join("metrics.csv"), &config.name, &result.metrics)?;

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "scenario {} (N = {}, {} replicates):",
        config.name, config.n_true, config.n_replicates
    )?;
    writeln!(stdout, "estimator mean(postMean) mean(postMode) mean(postSD) coverage95")?;
    for m in &result.metrics {
        writeln!(
            stdout,
            "{} {:.3} {:.3} {:.3} {:.3}",
            m.estimator.as_str(),
            m.mean_posterior_mean,
            m.mean_posterior_mode,
            m.mean_posterior_sd,
            m.coverage95
        )?;
    }
    writeln!(stdout, "wrote {}", args.out.display())?;
    Ok(())
}
