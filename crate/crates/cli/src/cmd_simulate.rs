//! `simulate`: generate a survey, scramble identities, write data + answer key.

use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args as ClapArgs;
use flankmatch_core::geom::{StateSpace, TrapArray};
use flankmatch_core::io::{self, TruthFile};
use flankmatch_core::model::DetectionParams;
use flankmatch_core::rng::rng_from_seed;
use flankmatch_core::simulate::{scramble, simulate};
use serde::Deserialize;

use crate::cmd_fit::seed_or_entropy;
use crate::{pick, require};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    out: Option<PathBuf>,
    n: Option<usize>,
    lambda0: Option<f64>,
    sigma: Option<f64>,
    k: Option<u16>,
    m: Option<usize>,
    n_known: Option<usize>,
    buffer: Option<f64>,
    traps: Option<PathBuf>,
    grid_side: Option<usize>,
    grid_spacing: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// JSON config file; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: Option<PathBuf>,
    /// True population size
    #[arg(long)]
    n: Option<usize>,
    /// Baseline encounter rate at distance zero
    #[arg(long)]
    lambda0: Option<f64>,
    /// Spatial decay scale of the encounter rate
    #[arg(long)]
    sigma: Option<f64>,
    /// Sampling occasions per trap
    #[arg(long)]
    k: Option<u16>,
    /// Augmented row count in the written answer key
    #[arg(long)]
    m: Option<usize>,
    /// Individuals (drawn from the whole population) published as pre-matched
    #[arg(long)]
    n_known: Option<usize>,
    /// State-space buffer around the trap bounding box
    #[arg(long)]
    buffer: Option<f64>,
    /// Trap coordinates CSV; alternative to --grid-side/--grid-spacing
    #[arg(long, conflicts_with_all = ["grid_side", "grid_spacing"])]
    traps: Option<PathBuf>,
    /// Square trap grid side length (traps = side^2)
    #[arg(long)]
    grid_side: Option<usize>,
    /// Spacing between neighboring grid traps
    #[arg(long)]
    grid_spacing: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args) -> Result<()> {
    let file: FileConfig = match args.config.as_deref() {
        Some(p) => io::read_json(p).with_context(|| format!("reading config {}", p.display()))?,
        None => FileConfig::default(),
    };

    let out_dir = require("out", args.out, file.out)?;
    let n = require("n", args.n, file.n)?;
    let lambda0 = require("lambda0", args.lambda0, file.lambda0)?;
    let sigma = require("sigma", args.sigma, file.sigma)?;
    let k = require("k", args.k, file.k)?;
    let m = require("m", args.m, file.m)?;
    let buffer = require("buffer", args.buffer, file.buffer)?;
    let n_known = pick(args.n_known, file.n_known, 0);
    let seed = seed_or_entropy(args.seed.or(file.seed));

    let traps = match (args.traps.or(file.traps), args.grid_side.or(file.grid_side)) {
        (Some(path), None) => io::parse_traps(&path)?,
        (None, Some(side)) => {
            TrapArray::grid(side, pick(args.grid_spacing, file.grid_spacing, 1.0))?
        }
        (Some(_), Some(_)) => bail!("give either a traps file or a grid, not both"),
        (None, None) => bail!("missing trap layout: give --traps or --grid-side"),
    };
    let space = StateSpace::buffered(&traps, buffer)?;
    let params = DetectionParams::new(lambda0, sigma)?;

    let mut rng = rng_from_seed(seed);
    let truth = simulate(n, &traps, space, &params, k, &mut rng)?;
    let sc = scramble(&truth, n_known, m, &mut rng)?;

    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    io::write_traps(&out_dir.join("traps.csv"), &traps)?;
    io::write_encounters(
        &out_dir.join("left.csv"),
        &sc.data.left.truncated(sc.data.n_left)?,
    )?;
    io::write_encounters(
        &out_dir.join("right.csv"),
        &sc.data.right.truncated(sc.data.n_right)?,
    )?;

    let to_one_based = |v: &[Option<usize>]| -> Vec<Option<usize>> {
        v.iter().map(|o| o.map(|i| i + 1)).collect()
    };
    let truth_file = TruthFile {
        seed,
        n_true: n,
        lambda0,
        sigma,
        k,
        m,
        n_known,
        n_left: sc.data.n_left,
        n_right: sc.data.n_right,
        sides_swapped: sc.sides_swapped,
        key: sc.key.as_slice().iter().map(|&v| v + 1).collect(),
        left_individual: to_one_based(&sc.left_individual),
        right_individual: to_one_based(&sc.right_individual),
        activity_centers: truth.s.clone(),
        state_space: space,
    };
    io::write_json(&out_dir.join("truth.json"), &truth_file)?;

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "simulated N = {n}: {} left rows, {} right rows ({} union captured), seed {seed}",
        sc.data.n_left,
        sc.data.n_right,
        truth.n_captured_union(),
    )?;
    writeln!(stdout, "wrote {}", out_dir.display())?;
    Ok(())
}
