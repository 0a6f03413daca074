//! `fit` and `fit-heuristic`: run a chain on CSV data, write chain/summary/meta.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use flankmatch_core::analysis::summarize_records;
use flankmatch_core::data::EncounterMatrix;
use flankmatch_core::geom::{StateSpace, TrapArray};
use flankmatch_core::identity::canonicalize;
use flankmatch_core::io::{self, DataFacts, RunMeta, QUANTILE_DEFINITION};
use flankmatch_core::sampler::{
    run_chain_with_progress, run_heuristic_with_progress, ChainOutput, Mode, Progress,
    SamplerConfig,
};
use serde::Deserialize;

use crate::{pick, require};

pub fn parse_mode(s: &str) -> Result<Mode> {
    match s.replace('-', "_").as_str() {
        "full" => Ok(Mode::Full),
        "known_id" => Ok(Mode::KnownId),
        "all_known" => Ok(Mode::AllKnown),
        "heuristic" => Ok(Mode::Heuristic),
        _ => bail!("unknown mode `{s}` (expected full, known_id, all_known, or heuristic)"),
    }
}

/// Fresh seed when none was given; always echoed into meta.json.
pub fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| rand::random())
}

/// Print progress to stderr at ~5% steps.
pub fn progress_printer(label: &'static str) -> impl FnMut(Progress) {
    move |p: Progress| {
        let step = (p.iters / 20).max(1);
        if p.iter % step == 0 || p.iter == p.iters {
            eprintln!(
                "{label}: iter {}/{} ({}%)",
                p.iter,
                p.iters,
                100 * p.iter / p.iters
            );
        }
    }
}

/// JSON config file accepted by `fit` and `fit-heuristic`; every field is
/// optional and any flag with the same name wins.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFileConfig {
    pub traps: Option<PathBuf>,
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub k: Option<u16>,
    pub m: Option<usize>,
    pub n_known: Option<usize>,
    pub mode: Option<String>,
    pub buffer: Option<f64>,
    pub iters: Option<u64>,
    pub burnin: Option<u64>,
    pub thin: Option<u64>,
    pub seed: Option<u64>,
    pub prior_upper_lambda0: Option<f64>,
    pub prior_upper_sigma: Option<f64>,
    pub proposal_sd_log_lambda0: Option<f64>,
    pub proposal_sd_log_sigma: Option<f64>,
    pub proposal_sd_s: Option<f64>,
    pub n_swaps_per_iter: Option<u32>,
    pub swap_radius: Option<f64>,
    pub record_id_samples: Option<bool>,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FitFileConfig> {
    match path {
        Some(p) => io::read_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(FitFileConfig::default()),
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON config file; flags below override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trap coordinates CSV (trap_id,x,y)
    #[arg(long)]
    pub traps: Option<PathBuf>,
    /// Left-side encounter CSV (t1..tJ)
    #[arg(long)]
    pub left: Option<PathBuf>,
    /// Right-side encounter CSV (t1..tJ)
    #[arg(long)]
    pub right: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampling occasions per trap
    #[arg(long)]
    pub k: Option<u16>,
    /// Augmented population bound M
    #[arg(long)]
    pub m: Option<usize>,
    /// Pre-matched rows at the top of both files
    #[arg(long)]
    pub n_known: Option<usize>,
    /// full | known_id | all_known
    #[arg(long)]
    pub mode: Option<String>,
    /// State-space buffer around the trap bounding box
    #[arg(long)]
    pub buffer: Option<f64>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub prior_upper_lambda0: Option<f64>,
    #[arg(long)]
    pub prior_upper_sigma: Option<f64>,
    #[arg(long)]
    pub proposal_sd_log_lambda0: Option<f64>,
    #[arg(long)]
    pub proposal_sd_log_sigma: Option<f64>,
    #[arg(long)]
    pub proposal_sd_s: Option<f64>,
    /// Identity swap proposals per sweep
    #[arg(long)]
    pub n_swaps_per_iter: Option<u32>,
    /// Swap candidate radius (default 3 x initial sigma)
    #[arg(long)]
    pub swap_radius: Option<f64>,
    /// Record the pairing each recorded sweep (id_samples.csv)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub record_id_samples: Option<bool>,
}

/// Inputs shared by both fit flavors, loaded and cross-checked.
pub struct LoadedData {
    pub traps: TrapArray,
    pub space: StateSpace,
    pub left: EncounterMatrix,
    pub right: EncounterMatrix,
}

pub fn load_data(
    traps_path: &Path,
    left_path: &Path,
    right_path: &Path,
    k: u16,
    buffer: f64,
) -> Result<LoadedData> {
    let traps = io::parse_traps(traps_path)?;
    let space = StateSpace::buffered(&traps, buffer)?;
    let left = io::parse_encounters(left_path, k)?;
    let right = io::parse_encounters(right_path, k)?;
    for (name, mat) in [("left", &left), ("right", &right)] {
        if mat.n_traps() != traps.len() {
            bail!(
                "{name} file has {} trap columns but the trap file lists {} traps",
                mat.n_traps(),
                traps.len()
            );
        }
    }
    Ok(LoadedData { traps, space, left, right })
}

fn augment(side: &str, mat: &EncounterMatrix, m: usize) -> Result<EncounterMatrix> {
    mat.augment_to(m).with_context(|| format!("augmenting the {side} file to M = {m}"))
}

/// Common tail: write chain.csv, summary.csv, meta.json, optional
/// id_samples.csv, and print the N summary line.
fn write_outputs(out_dir: &Path, output: &ChainOutput, meta: &RunMeta) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    io::write_chain(&out_dir.join("chain.csv"), &output.samples)?;
    let summary = summarize_records(&output.samples)?;
    io::write_summary(&out_dir.join("summary.csv"), &summary)?;
    io::write_json(&out_dir.join("meta.json"), meta)?;
    if let Some(ids) = &output.id_samples {
        io::write_id_samples(&out_dir.join("id_samples.csv"), ids)?;
    }

    let mut stdout = std::io::stdout().lock();
    for (name, s) in &summary {
        if name == "N" {
            writeln!(
                stdout,
                "N: mean {:.3}, sd {:.3}, mode {}, 95% interval [{:.1}, {:.1}]",
                s.mean,
                s.sd,
                s.mode.map_or_else(|| "-".to_string(), |v| v.to_string()),
                s.q2_5,
                s.q97_5
            )?;
        }
    }
    writeln!(stdout, "wrote {}", out_dir.display())?;
    Ok(())
}

pub fn run_fit(args: FitArgs) -> Result<()> {
    let file = load_file_config(args.config.as_deref())?;

    let traps_path = require("traps", args.traps, file.traps)?;
    let left_path = require("left", args.left, file.left)?;
    let right_path = require("right", args.right, file.right)?;
    let out_dir = require("out", args.out, file.out)?;
    let k = require("k", args.k, file.k)?;
    let m = require("m", args.m, file.m)?;
    let iters = require("iters", args.iters, file.iters)?;
    let burnin = require("burnin", args.burnin, file.burnin)?;
    let buffer = require("buffer", args.buffer, file.buffer)?;
    let mode = parse_mode(&pick(args.mode, file.mode, "full".to_string()))?;
    if mode == Mode::Heuristic {
        bail!("mode heuristic is fit by the fit-heuristic command");
    }
    let n_known = pick(args.n_known, file.n_known, 0);
    let seed = seed_or_entropy(args.seed.or(file.seed));

    let data = load_data(&traps_path, &left_path, &right_path, k, buffer)?;
    let left_aug = augment("left", &data.left, m)?;
    let right_aug = augment("right", &data.right, m)?;
    let (dataset, sides_swapped) = canonicalize(&left_aug, &right_aug, n_known)?;
    let rows_reordered = if sides_swapped {
        dataset.left != right_aug || dataset.right != left_aug
    } else {
        dataset.left != left_aug || dataset.right != right_aug
    };

    let mut cfg = SamplerConfig::new(iters, burnin, m, mode, seed);
    cfg.thin = pick(args.thin, file.thin, cfg.thin);
    cfg.prior_upper_lambda0 =
        pick(args.prior_upper_lambda0, file.prior_upper_lambda0, cfg.prior_upper_lambda0);
    cfg.prior_upper_sigma = args.prior_upper_sigma.or(file.prior_upper_sigma);
    cfg.proposal_sd_log_lambda0 = pick(
        args.proposal_sd_log_lambda0,
        file.proposal_sd_log_lambda0,
        cfg.proposal_sd_log_lambda0,
    );
    cfg.proposal_sd_log_sigma =
        pick(args.proposal_sd_log_sigma, file.proposal_sd_log_sigma, cfg.proposal_sd_log_sigma);
    cfg.proposal_sd_s = pick(args.proposal_sd_s, file.proposal_sd_s, cfg.proposal_sd_s);
    cfg.n_swaps_per_iter = pick(args.n_swaps_per_iter, file.n_swaps_per_iter, cfg.n_swaps_per_iter);
    cfg.swap_radius = args.swap_radius.or(file.swap_radius);
    cfg.record_id_samples = pick(args.record_id_samples, file.record_id_samples, false);

    let mut progress = progress_printer("fit");
    let output =
        run_chain_with_progress(&dataset, &data.traps, data.space, &cfg, &mut progress)?;

    // The chain refers to canonical row order; republish the inputs whenever
    // that differs from the files as given.
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    if sides_swapped || rows_reordered {
        io::write_encounters(
            &out_dir.join("canonical_left.csv"),
            &dataset.left.truncated(dataset.n_left)?,
        )?;
        io::write_encounters(
            &out_dir.join("canonical_right.csv"),
            &dataset.right.truncated(dataset.n_right)?,
        )?;
        eprintln!(
            "note: inputs were reoriented (sides_swapped = {sides_swapped}, rows_reordered = \
             {rows_reordered}); chain and pairing indices refer to canonical_left.csv / \
             canonical_right.csv"
        );
    }

    let meta = RunMeta {
        command: "fit".to_string(),
        config: output.config.clone(),
        state_space: data.space,
        data: DataFacts {
            m,
            n_left: dataset.n_left,
            n_right: dataset.n_right,
            n_known,
            n_traps: data.traps.len(),
            k,
        },
        sides_swapped,
        rows_reordered,
        acceptance: output.acceptance.clone(),
        n_definition: output.n_definition.clone(),
        quantile_definition: QUANTILE_DEFINITION.to_string(),
    };
    write_outputs(&out_dir, &output, &meta)
}

#[derive(Debug, Args)]
pub struct HeuristicArgs {
    /// JSON config file; flags below override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub traps: Option<PathBuf>,
    #[arg(long)]
    pub left: Option<PathBuf>,
    #[arg(long)]
    pub right: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<u16>,
    /// Augmented bound M applied to each side separately
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub buffer: Option<f64>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub prior_upper_lambda0: Option<f64>,
    #[arg(long)]
    pub prior_upper_sigma: Option<f64>,
    #[arg(long)]
    pub proposal_sd_log_lambda0: Option<f64>,
    #[arg(long)]
    pub proposal_sd_log_sigma: Option<f64>,
    #[arg(long)]
    pub proposal_sd_s: Option<f64>,
}

pub fn run_heuristic(args: HeuristicArgs) -> Result<()> {
    let file = load_file_config(args.config.as_deref())?;
    if let Some(mode) = &file.mode {
        if parse_mode(mode)? != Mode::Heuristic {
            bail!("fit-heuristic always runs in heuristic mode; config file says `{mode}`");
        }
    }
    if file.n_known.unwrap_or(0) != 0 {
        bail!("the heuristic has no known-identity block; n_known must be 0");
    }
    if file.record_id_samples == Some(true) {
        bail!("the heuristic samples no pairing, so record_id_samples is unavailable");
    }

    let traps_path = require("traps", args.traps, file.traps)?;
    let left_path = require("left", args.left, file.left)?;
    let right_path = require("right", args.right, file.right)?;
    let out_dir = require("out", args.out, file.out)?;
    let k = require("k", args.k, file.k)?;
    let m = require("m", args.m, file.m)?;
    let iters = require("iters", args.iters, file.iters)?;
    let burnin = require("burnin", args.burnin, file.burnin)?;
    let buffer = require("buffer", args.buffer, file.buffer)?;
    let seed = seed_or_entropy(args.seed.or(file.seed));

    let data = load_data(&traps_path, &left_path, &right_path, k, buffer)?;
    let n_left_obs = (0..data.left.n_rows()).filter(|&i| !data.left.row_is_zero(i)).count();
    let n_right_obs = (0..data.right.n_rows()).filter(|&i| !data.right.row_is_zero(i)).count();
    let left_aug = augment("left", &data.left, m)?;
    let right_aug = augment("right", &data.right, m)?;

    let mut cfg = SamplerConfig::new(iters, burnin, m, Mode::Heuristic, seed);
    cfg.thin = pick(args.thin, file.thin, cfg.thin);
    cfg.prior_upper_lambda0 =
        pick(args.prior_upper_lambda0, file.prior_upper_lambda0, cfg.prior_upper_lambda0);
    cfg.prior_upper_sigma = args.prior_upper_sigma.or(file.prior_upper_sigma);
    cfg.proposal_sd_log_lambda0 = pick(
        args.proposal_sd_log_lambda0,
        file.proposal_sd_log_lambda0,
        cfg.proposal_sd_log_lambda0,
    );
    cfg.proposal_sd_log_sigma =
        pick(args.proposal_sd_log_sigma, file.proposal_sd_log_sigma, cfg.proposal_sd_log_sigma);
    cfg.proposal_sd_s = pick(args.proposal_sd_s, file.proposal_sd_s, cfg.proposal_sd_s);

    let mut progress = progress_printer("fit-heuristic");
    let output = run_heuristic_with_progress(
        &left_aug,
        &right_aug,
        &data.traps,
        data.space,
        &cfg,
        Some(&mut progress),
    )?;

    let meta = RunMeta {
        command: "fit-heuristic".to_string(),
        config: output.config.clone(),
        state_space: data.space,
        data: DataFacts {
            m,
            n_left: n_left_obs,
            n_right: n_right_obs,
            n_known: 0,
            n_traps: data.traps.len(),
            k,
        },
        sides_swapped: false,
        rows_reordered: false,
        acceptance: output.acceptance.clone(),
        n_definition: output.n_definition.clone(),
        quantile_definition: QUANTILE_DEFINITION.to_string(),
    };
    write_outputs(&out_dir, &output, &meta)
}
