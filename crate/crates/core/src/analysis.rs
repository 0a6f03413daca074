//! Posterior summaries, identity-recovery scoring, and the replicate study
//! harness that compares estimator arms on common simulated truths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EncounterMatrix;
use crate::error::{Error, Result};
use crate::geom::{StateSpace, TrapArray};
use crate::identity::IdAssignment;
use crate::model::DetectionParams;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampler::{
    run_chain, run_heuristic, ChainOutput, IdSampleRecord, Mode, SamplerConfig,
};
use crate::simulate::{reconcile_perfect, scramble, simulate};

/// Linear-interpolation quantile (the common "type 7" definition: h = (n-1)p).
/// `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q97_5: f64,
    /// Most frequent value; only populated for integer-valued chains (N),
    /// smallest value on ties.
    pub mode: Option<f64>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, sd)
}

pub fn summarize_continuous(values: &[f64]) -> Result<PosteriorSummary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty sample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot summarize non-finite samples"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (mean, sd) = mean_sd(values);
    Ok(PosteriorSummary {
        mean,
        sd,
        q2_5: quantile_type7(&sorted, 0.025),
        q25: quantile_type7(&sorted, 0.25),
        q50: quantile_type7(&sorted, 0.50),
        q75: quantile_type7(&sorted, 0.75),
        q97_5: quantile_type7(&sorted, 0.975),
        mode: None,
    })
}

/// Integer-count summary: quantiles on the values as reals, plus the modal
/// count (smallest on ties).
pub fn summarize_counts(values: &[u32]) -> Result<PosteriorSummary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty sample"));
    }
    let as_f64: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
    let mut summary = summarize_continuous(&as_f64)?;
    let mut counts = std::collections::BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0u64) += 1;
    }
    // BTreeMap iteration is ascending, so strict > keeps the smallest tie.
    let mut best = (0u32, 0u64);
    for (&v, &c) in &counts {
        if c > best.1 {
            best = (v, c);
        }
    }
    summary.mode = Some(f64::from(best.0));
    Ok(summary)
}

/// Per-parameter summaries of recorded samples, in output order.
pub fn summarize_records(
    samples: &[crate::sampler::SampleRecord],
) -> Result<Vec<(String, PosteriorSummary)>> {
    let pull = |f: fn(&crate::sampler::SampleRecord) -> f64| -> Vec<f64> {
        samples.iter().map(f).collect()
    };
    let ns: Vec<u32> = samples.iter().map(|r| r.n).collect();
    Ok(vec![
        ("N".to_string(), summarize_counts(&ns)?),
        ("lambda0".to_string(), summarize_continuous(&pull(|r| r.lambda0))?),
        ("sigma".to_string(), summarize_continuous(&pull(|r| r.sigma))?),
        ("psi".to_string(), summarize_continuous(&pull(|r| r.psi))?),
    ])
}

pub fn summarize_chain(out: &ChainOutput) -> Result<Vec<(String, PosteriorSummary)>> {
    summarize_records(&out.samples)
}

/// Posterior pairing frequencies for one captured right row. `probs` covers
/// captured left rows in descending probability (ties by index); `p_new` is
/// the pooled mass on all-zero left rows, i.e. "this flank belongs to an
/// individual never photographed on the left".
#[derive(Debug, Clone, Serialize)]
pub struct IdMatchRow {
    pub right_index: usize,
    pub n_samples: u64,
    pub probs: Vec<(usize, f64)>,
    pub p_new: f64,
}

impl IdMatchRow {
    /// Modal assignment: Some(left row) or None for the new-individual bucket.
    /// Captured rows win ties against the bucket; lower index wins otherwise.
    pub fn modal(&self) -> Option<usize> {
        match self.probs.first() {
            Some(&(idx, p)) if p >= self.p_new => Some(idx),
            _ => None,
        }
    }
}

/// Aggregate recorded pairing samples into per-right-row frequency tables.
/// Rows appear in ascending right-row order. `left` may hold observed rows
/// only: indices beyond it are augmentation and count toward the new bucket.
pub fn id_match_table(samples: &[IdSampleRecord], left: &EncounterMatrix) -> Vec<IdMatchRow> {
    let mut by_right: std::collections::BTreeMap<usize, std::collections::BTreeMap<usize, u64>> =
        std::collections::BTreeMap::new();
    for rec in samples {
        *by_right
            .entry(rec.right_index)
            .or_default()
            .entry(rec.left_index)
            .or_insert(0) += 1;
    }
    by_right
        .into_iter()
        .map(|(right_index, counts)| {
            let n_samples: u64 = counts.values().sum();
            let mut new_mass = 0u64;
            let mut probs = Vec::new();
            for (left_index, c) in counts {
                if left_index >= left.n_rows() || left.row_is_zero(left_index) {
                    new_mass += c;
                } else {
                    probs.push((left_index, c as f64 / n_samples as f64));
                }
            }
            probs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            IdMatchRow {
                right_index,
                n_samples,
                probs,
                p_new: new_mass as f64 / n_samples as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RowScore {
    pub right_index: usize,
    pub true_left: usize,
    pub n_right_captures: u32,
    pub p_true: f64,
    pub modal: Option<usize>,
    pub modal_correct: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdRecoveryScore {
    pub n_scored: usize,
    pub mean_p_true: f64,
    pub modal_accuracy: f64,
    /// Chance level for a uniform guess over the captured unknown left rows
    /// plus the new-individual option.
    pub baseline: f64,
    pub rows: Vec<RowScore>,
}

/// Score recorded pairing samples against the simulation answer key.
/// Only unknown right rows with at least `min_captures` captures whose true
/// owner was photographed on the left are scored; for anything else "correct"
/// is ill-defined (any all-zero left row is as good as any other).
pub fn score_id_recovery(
    samples: &[IdSampleRecord],
    key: &IdAssignment,
    data: &crate::data::AugmentedDataset,
    min_captures: u32,
) -> Result<IdRecoveryScore> {
    if key.len() != data.m() {
        return Err(Error::invalid("answer key length does not match the dataset"));
    }
    let table = id_match_table(samples, &data.left);
    let n_unknown_left = data.n_left - data.n_known;
    let baseline = 1.0 / (n_unknown_left as f64 + 1.0);
    let mut rows = Vec::new();
    for row in &table {
        let r = row.right_index;
        if r < data.n_known {
            continue;
        }
        if data.right.row_total(r) < min_captures {
            continue;
        }
        let true_left = key.get(r);
        if data.left.row_is_zero(true_left) {
            continue;
        }
        let p_true = row
            .probs
            .iter()
            .find(|&&(idx, _)| idx == true_left)
            .map_or(0.0, |&(_, p)| p);
        let modal = row.modal();
        rows.push(RowScore {
            right_index: r,
            true_left,
            n_right_captures: data.right.row_total(r),
            p_true,
            modal,
            modal_correct: modal == Some(true_left),
        });
    }
    let n_scored = rows.len();
    let (mean_p_true, modal_accuracy) = if n_scored == 0 {
        (0.0, 0.0)
    } else {
        (
            rows.iter().map(|r| r.p_true).sum::<f64>() / n_scored as f64,
            rows.iter().filter(|r| r.modal_correct).count() as f64 / n_scored as f64,
        )
    };
    Ok(IdRecoveryScore { n_scored, mean_p_true, modal_accuracy, baseline, rows })
}

/// One replicate-study scenario: simulate `n_replicates` truths on a square
/// trap grid and run every listed estimator arm on each, with common random
/// numbers (the truth for replicate r is identical across arms).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    pub n_true: usize,
    pub lambda0: f64,
    pub sigma: f64,
    pub k: u16,
    pub grid_side: usize,
    pub trap_spacing: f64,
    pub buffer: f64,
    pub m: usize,
    /// Pre-matched individuals for the known-identity arm.
    pub n_known: usize,
    pub n_replicates: usize,
    pub iters: u64,
    pub burnin: u64,
    pub thin: u64,
    pub estimators: Vec<Mode>,
    pub master_seed: u64,
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::invalid("n_replicates must be >= 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("at least one estimator arm is required"));
        }
        if self.iters <= self.burnin || (self.iters - self.burnin) < self.thin.max(1) {
            return Err(Error::invalid("iters must leave at least one recorded sample"));
        }
        if self.estimators.contains(&Mode::KnownId) && self.n_known == 0 {
            return Err(Error::invalid("the known_id arm requires n_known >= 1"));
        }
        if self.m < self.n_true {
            return Err(Error::invalid(format!(
                "M = {} must be at least the true population size {}",
                self.m, self.n_true
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub estimator: Mode,
    pub replicate: usize,
    pub n_true: usize,
    pub n_left_obs: usize,
    pub n_right_obs: usize,
    pub post_mean: f64,
    pub post_sd: f64,
    pub post_mode: u32,
    pub q2_5: f64,
    pub q97_5: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyMetrics {
    pub estimator: Mode,
    pub n_replicates: usize,
    pub mean_posterior_mean: f64,
    pub sd_posterior_mean: f64,
    pub bias: f64,
    pub mean_posterior_mode: f64,
    pub mean_posterior_sd: f64,
    pub coverage95: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub metrics: Vec<StudyMetrics>,
}

/// Stable per-arm seed tag so adding or reordering arms never changes any
/// other arm's random numbers.
fn arm_tag(mode: Mode) -> u64 {
    match mode {
        Mode::Full => 1,
        Mode::KnownId => 2,
        Mode::AllKnown => 3,
        Mode::Heuristic => 4,
    }
}

pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    run_study_with_progress(config, None)
}

pub fn run_study_with_progress(
    config: &StudyConfig,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<StudyResult> {
    config.validate()?;
    let traps = TrapArray::grid(config.grid_side, config.trap_spacing)?;
    let space = StateSpace::buffered(&traps, config.buffer)?;
    let params = DetectionParams::new(config.lambda0, config.sigma)?;

    let jobs: Vec<(usize, Mode)> = (0..config.n_replicates)
        .flat_map(|rep| config.estimators.iter().map(move |&e| (rep, e)))
        .collect();
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);

    let mut rows: Vec<StudyRow> = jobs
        .into_par_iter()
        .map(|(rep, arm)| -> Result<StudyRow> {
            // Common random numbers: the truth seed depends only on the
            // replicate, so every arm sees the same population.
            let truth_seed = derive_seed(config.master_seed, &[0, rep as u64]);
            let mut truth_rng = rng_from_seed(truth_seed);
            let truth =
                simulate(config.n_true, &traps, space, &params, config.k, &mut truth_rng)?;

            let tag = arm_tag(arm);
            let prep_seed = derive_seed(config.master_seed, &[tag, rep as u64, 0]);
            let chain_seed = derive_seed(config.master_seed, &[tag, rep as u64, 1]);

            let mut cfg = SamplerConfig::new(config.iters, config.burnin, config.m, arm, chain_seed);
            cfg.thin = config.thin.max(1);

            let out = match arm {
                Mode::Full | Mode::KnownId => {
                    let n_known = if arm == Mode::KnownId { config.n_known } else { 0 };
                    let sc =
                        scramble(&truth, n_known, config.m, &mut rng_from_seed(prep_seed))?;
                    run_chain(&sc.data, &traps, space, &cfg)?
                }
                Mode::AllKnown => {
                    let data = reconcile_perfect(&truth, config.m)?;
                    run_chain(&data, &traps, space, &cfg)?
                }
                Mode::Heuristic => {
                    let sc = scramble(&truth, 0, config.m, &mut rng_from_seed(prep_seed))?;
                    run_heuristic(&sc.data.left, &sc.data.right, &traps, space, &cfg)?
                }
            };

            let ns: Vec<u32> = out.samples.iter().map(|r| r.n).collect();
            let summary = summarize_counts(&ns)?;
            if let Some(cb) = progress {
                let d = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                cb(d, total);
            }
            Ok(StudyRow {
                estimator: arm,
                replicate: rep,
                n_true: config.n_true,
                n_left_obs: truth.n_captured_left(),
                n_right_obs: truth.n_captured_right(),
                post_mean: summary.mean,
                post_sd: summary.sd,
                post_mode: summary.mode.unwrap() as u32,
                q2_5: summary.q2_5,
                q97_5: summary.q97_5,
                covered: summary.q2_5 <= config.n_true as f64
                    && config.n_true as f64 <= summary.q97_5,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // Deterministic output order regardless of scheduling.
    rows.sort_by_key(|r| (arm_tag(r.estimator), r.replicate));

    let metrics = config
        .estimators
        .iter()
        .map(|&arm| {
            let arm_rows: Vec<&StudyRow> = rows.iter().filter(|r| r.estimator == arm).collect();
            let means: Vec<f64> = arm_rows.iter().map(|r| r.post_mean).collect();
            let (mean_posterior_mean, sd_posterior_mean) = mean_sd(&means);
            let n = arm_rows.len() as f64;
            StudyMetrics {
                estimator: arm,
                n_replicates: arm_rows.len(),
                mean_posterior_mean,
                sd_posterior_mean,
                bias: mean_posterior_mean - config.n_true as f64,
                mean_posterior_mode: arm_rows.iter().map(|r| f64::from(r.post_mode)).sum::<f64>()
                    / n,
                mean_posterior_sd: arm_rows.iter().map(|r| r.post_sd).sum::<f64>() / n,
                coverage95: arm_rows.iter().filter(|r| r.covered).count() as f64 / n,
            }
        })
        .collect();

    Ok(StudyResult { rows, metrics })
}
