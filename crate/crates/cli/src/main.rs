//! Command-line front end: simulate two-flank surveys, fit the latent-identity
//! model or the independent-sides baseline, summarize chains, tabulate pairing
//! posteriors, and run replicate studies. Every command takes its settings
//! from flags, from a JSON config file (`--config`), or both — flags win.

mod cmd_fit;
mod cmd_id_table;
mod cmd_simulate;
mod cmd_study;
mod cmd_summarize;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "flankmatch",
    version,
    about = "Spatial capture-recapture with two unreconciled photo sides"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a survey, scramble the flank identities, write the answer key
    Simulate(cmd_simulate::Args),
    /// Fit the latent-identity model (full, known_id, or all_known mode)
    Fit(cmd_fit::FitArgs),
    /// Fit the independent-sides baseline (no identity matching)
    FitHeuristic(cmd_fit::HeuristicArgs),
    /// Recompute posterior summaries from a saved chain
    Summarize(cmd_summarize::Args),
    /// Tabulate posterior pairing frequencies, optionally scored against truth
    IdTable(cmd_id_table::Args),
    /// Replicate simulation study comparing estimator arms
    Simstudy(cmd_study::Args),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate::run(a),
        Cmd::Fit(a) => cmd_fit::run_fit(a),
        Cmd::FitHeuristic(a) => cmd_fit::run_heuristic(a),
        Cmd::Summarize(a) => cmd_summarize::run(a),
        Cmd::IdTable(a) => cmd_id_table::run(a),
        Cmd::Simstudy(a) => cmd_study::run(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// flag value, else config-file value, else error naming the setting.
pub(crate) fn require<T>(name: &str, flag: Option<T>, file: Option<T>) -> anyhow::Result<T> {
    flag.or(file)
        .ok_or_else(|| anyhow::anyhow!("missing required setting `{name}` (flag or config file)"))
}

/// flag value, else config-file value, else default.
pub(crate) fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
