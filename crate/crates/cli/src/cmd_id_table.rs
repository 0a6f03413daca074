//! `id-table`: aggregate recorded pairing samples into per-right-row
//! frequency tables, optionally scored against a simulation answer key.

use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args as ClapArgs;
use flankmatch_core::analysis::{id_match_table, score_id_recovery};
use flankmatch_core::data::AugmentedDataset;
use flankmatch_core::io::{self, TruthFile};

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// id_samples.csv from a fit run with --record-id-samples
    #[arg(long)]
    id_samples: PathBuf,
    /// Left-side encounter CSV in the same row order the fit used
    #[arg(long)]
    left: PathBuf,
    /// Sampling occasions per trap (taken from --truth when omitted)
    #[arg(long)]
    k: Option<u16>,
    /// Where to write id_table.csv
    #[arg(long)]
    out: PathBuf,
    /// Restrict the table to one right row (1-based)
    #[arg(long)]
    right_index: Option<usize>,
    /// truth.json from simulate; enables scoring
    #[arg(long, requires = "right")]
    truth: Option<PathBuf>,
    /// Right-side encounter CSV, required with --truth
    #[arg(long)]
    right: Option<PathBuf>,
    /// Where to write per-row scores (default: id_score.csv next to --out)
    #[arg(long)]
    score_out: Option<PathBuf>,
    /// Score only right rows with at least this many captures
    #[arg(long, default_value_t = 1)]
    min_captures: u32,
}

pub fn run(args: Args) -> Result<()> {
    let truth: Option<TruthFile> = match &args.truth {
        Some(p) => {
            Some(io::read_json(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let k = match (args.k, &truth) {
        (Some(k), _) => k,
        (None, Some(t)) => t.k,
        (None, None) => bail!("missing required setting `k` (flag or --truth file)"),
    };

    let samples = io::parse_id_samples(&args.id_samples)
        .with_context(|| format!("reading {}", args.id_samples.display()))?;
    if samples.is_empty() {
        bail!("no pairing samples in {}", args.id_samples.display());
    }
    let left = io::parse_encounters(&args.left, k)?;

    let mut table = id_match_table(&samples, &left);
    if let Some(r) = args.right_index {
        if r == 0 {
            bail!("--right-index is 1-based");
        }
        table.retain(|row| row.right_index == r - 1);
        if table.is_empty() {
            bail!("no recorded samples for right row {r}");
        }
    }
    io::write_id_table(&args.out, &table)?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{} right rows tabulated from {} samples", table.len(), samples.len())?;
    writeln!(stdout, "wrote {}", args.out.display())?;

    if let Some(truth) = truth {
        let right_path = args.right.as_ref().expect("clap enforces --right with --truth");
        let right = io::parse_encounters(right_path, k)?;
        let left_aug = left.augment_to(truth.m)?;
        let right_aug = right.augment_to(truth.m)?;
        let n_left_obs = left.n_rows();
        let n_right_obs = right.n_rows();
        let data = AugmentedDataset::new(
            left_aug,
            right_aug,
            n_left_obs,
            n_right_obs,
            truth.n_known,
        )?;
        let key = truth.key_assignment()?;
        let score = score_id_recovery(&samples, &key, &data, args.min_captures)?;

        let score_path = args
            .score_out
            .unwrap_or_else(|| args.out.with_file_name("id_score.csv"));
        io::write_id_scores(&score_path, &score.rows)?;
        writeln!(
            stdout,
            "scored {} right rows (>= {} captures, left-captured truth): mean P(true pair) \
             {:.4} vs uniform baseline {:.4}, modal assignment correct {:.1}%",
            score.n_scored,
            args.min_captures,
            score.mean_p_true,
            score.baseline,
            100.0 * score.modal_accuracy
        )?;
        writeln!(stdout, "wrote {}", score_path.display())?;
    }
    Ok(())
}
