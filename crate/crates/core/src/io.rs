//! File formats. All CSV files carry headers; row and trap indices are
//! 1-based on disk and 0-based in memory. Floating-point values are written
//! in Rust's shortest round-trip form, so rewriting a parsed file reproduces
//! it byte for byte. Every writer goes through a temp-file-then-rename so a
//! crash never leaves a half-written file behind.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{IdMatchRow, PosteriorSummary, RowScore, StudyMetrics, StudyRow};
use crate::data::EncounterMatrix;
use crate::error::{Error, Result};
use crate::geom::{Point, StateSpace, TrapArray};
use crate::sampler::{
    AcceptanceRates, IdSampleRecord, ResolvedConfig, SampleRecord,
};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::parse(path.display().to_string(), msg)
}

/// Write bytes via a temporary file in the same directory plus an atomic
/// rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| parse_err(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => parse_err(path, format!("cannot open: {e}")),
            _ => parse_err(path, e.to_string()),
        })
}

fn expect_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let got = reader.headers().map_err(|e| parse_err(path, e.to_string()))?;
    let got: Vec<&str> = got.iter().collect();
    if got != want {
        return Err(parse_err(
            path,
            format!("expected header {}, found {}", want.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec
        .get(idx)
        .ok_or_else(|| parse_err(path, format!("line {line}: missing field {}", idx + 1)))?;
    raw.trim()
        .parse::<T>()
        .map_err(|e| parse_err(path, format!("line {line}: bad value {raw:?}: {e}")))
}

// ---------------------------------------------------------------- traps.csv

pub fn write_traps(path: &Path, traps: &TrapArray) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["trap_id", "x", "y"]).map_err(|e| parse_err(path, e.to_string()))?;
    for (j, p) in traps.iter().enumerate() {
        w.write_record(&[(j + 1).to_string(), p.x.to_string(), p.y.to_string()])
            .map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

/// Trap ids must be exactly 1..=J in order: the column index of the encounter
/// matrices is defined by this ordering.
pub fn parse_traps(path: &Path) -> Result<TrapArray> {
    let mut r = open_reader(path)?;
    expect_header(path, &mut r, &["trap_id", "x", "y"])?;
    let mut pts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let line = i as u64 + 2;
        let id: usize = field(path, &rec, 0, line)?;
        if id != i + 1 {
            return Err(parse_err(
                path,
                format!("line {line}: trap_id must be contiguous from 1; expected {}, found {id}", i + 1),
            ));
        }
        let x: f64 = field(path, &rec, 1, line)?;
        let y: f64 = field(path, &rec, 2, line)?;
        pts.push(Point::new(x, y));
    }
    TrapArray::new(pts)
}

// ------------------------------------------------------- encounter matrices

pub fn write_encounters(path: &Path, mat: &EncounterMatrix) -> Result<()> {
    let mut w = csv_writer();
    let header: Vec<String> = (1..=mat.n_traps()).map(|j| format!("t{j}")).collect();
    w.write_record(&header).map_err(|e| parse_err(path, e.to_string()))?;
    for i in 0..mat.n_rows() {
        let row: Vec<String> = mat.row(i).iter().map(|y| y.to_string()).collect();
        w.write_record(&row).map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

/// K is survey metadata, not derivable from counts, so the caller supplies it.
pub fn parse_encounters(path: &Path, k: u16) -> Result<EncounterMatrix> {
    let mut r = open_reader(path)?;
    let headers = r.headers().map_err(|e| parse_err(path, e.to_string()))?.clone();
    let n_traps = headers.len();
    let want: Vec<String> = (1..=n_traps).map(|j| format!("t{j}")).collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != want.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(parse_err(
            path,
            format!("expected header t1..t{n_traps}, found {}", got.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let line = i as u64 + 2;
        if rec.len() != n_traps {
            return Err(parse_err(
                path,
                format!("line {line}: expected {n_traps} fields, found {}", rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(n_traps);
        for j in 0..n_traps {
            row.push(field::<u16>(path, &rec, j, line)?);
        }
        rows.push(row);
    }
    EncounterMatrix::new(rows, n_traps, k)
}

// ----------------------------------------------------------------- chain.csv

pub fn write_chain(path: &Path, samples: &[SampleRecord]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["iter", "lambda0", "sigma", "psi", "N", "loglik"])
        .map_err(|e| parse_err(path, e.to_string()))?;
    for s in samples {
        w.write_record(&[
            s.iter.to_string(),
            s.lambda0.to_string(),
            s.sigma.to_string(),
            s.psi.to_string(),
            s.n.to_string(),
            s.loglik.to_string(),
        ])
        .map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

pub fn parse_chain(path: &Path) -> Result<Vec<SampleRecord>> {
    let mut r = open_reader(path)?;
    expect_header(path, &mut r, &["iter", "lambda0", "sigma", "psi", "N", "loglik"])?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let line = i as u64 + 2;
        out.push(SampleRecord {
            iter: field(path, &rec, 0, line)?,
            lambda0: field(path, &rec, 1, line)?,
            sigma: field(path, &rec, 2, line)?,
            psi: field(path, &rec, 3, line)?,
            n: field(path, &rec, 4, line)?,
            loglik: field(path, &rec, 5, line)?,
        });
    }
    Ok(out)
}

// ------------------------------------------------------------ id_samples.csv

pub fn write_id_samples(path: &Path, samples: &[IdSampleRecord]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["iter", "right_row", "left_row"])
        .map_err(|e| parse_err(path, e.to_string()))?;
    for s in samples {
        w.write_record(&[
            s.iter.to_string(),
            (s.right_index + 1).to_string(),
            (s.left_index + 1).to_string(),
        ])
        .map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

pub fn parse_id_samples(path: &Path) -> Result<Vec<IdSampleRecord>> {
    let mut r = open_reader(path)?;
    expect_header(path, &mut r, &["iter", "right_row", "left_row"])?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e.to_string()))?;
        let line = i as u64 + 2;
        let right: usize = field(path, &rec, 1, line)?;
        let left: usize = field(path, &rec, 2, line)?;
        if right == 0 || left == 0 {
            return Err(parse_err(path, format!("line {line}: row indices are 1-based")));
        }
        out.push(IdSampleRecord {
            iter: field(path, &rec, 0, line)?,
            right_index: right - 1,
            left_index: left - 1,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------- summary.csv

pub fn write_summary(path: &Path, rows: &[(String, PosteriorSummary)]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["parameter", "mean", "sd", "q2.5", "q25", "q50", "q75", "q97.5", "mode"])
        .map_err(|e| parse_err(path, e.to_string()))?;
    for (name, s) in rows {
        w.write_record(&[
            name.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.q2_5.to_string(),
            s.q25.to_string(),
            s.q50.to_string(),
            s.q75.to_string(),
            s.q97_5.to_string(),
            s.mode.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

// ------------------------------------------------------------ pairing tables

/// Long-format posterior match table: one row per (right row, candidate)
/// with nonzero posterior mass; the pooled new-individual bucket appears as
/// left_row = "new".
pub fn write_id_table(path: &Path, table: &[IdMatchRow]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["right_row", "left_row", "prob"])
        .map_err(|e| parse_err(path, e.to_string()))?;
    for row in table {
        for &(left, p) in &row.probs {
            w.write_record(&[
                (row.right_index + 1).to_string(),
                (left + 1).to_string(),
                p.to_string(),
            ])
            .map_err(|e| parse_err(path, e.to_string()))?;
        }
        if row.p_new > 0.0 {
            w.write_record(&[
                (row.right_index + 1).to_string(),
                "new".to_string(),
                row.p_new.to_string(),
            ])
            .map_err(|e| parse_err(path, e.to_string()))?;
        }
    }
    finish(path, w)
}

pub fn write_id_scores(path: &Path, rows: &[RowScore]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record([
        "right_row", "true_left_row", "n_right_captures", "p_true", "modal_left_row",
        "modal_correct",
    ])
    .map_err(|e| parse_err(path, e.to_string()))?;
    for r in rows {
        w.write_record(&[
            (r.right_index + 1).to_string(),
            (r.true_left + 1).to_string(),
            r.n_right_captures.to_string(),
            r.p_true.to_string(),
            r.modal.map(|m| (m + 1).to_string()).unwrap_or_else(|| "new".to_string()),
            r.modal_correct.to_string(),
        ])
        .map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

// ------------------------------------------------------------- study outputs

pub fn write_study_rows(path: &Path, scenario: &str, rows: &[StudyRow]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record([
        "scenario", "estimator", "replicate", "n_true", "n_left_obs", "n_right_obs",
        "post_mean", "post_sd", "post_mode", "q2.5", "q97.5", "covered",
    ])
    .map_err(|e| parse_err(path, e.to_string()))?;
    for r in rows {
        w.write_record(&[
            scenario.to_string(),
            r.estimator.as_str().to_string(),
            (r.replicate + 1).to_string(),
            r.n_true.to_string(),
            r.n_left_obs.to_string(),
            r.n_right_obs.to_string(),
            r.post_mean.to_string(),
            r.post_sd.to_string(),
            r.post_mode.to_string(),
            r.q2_5.to_string(),
            r.q97_5.to_string(),
            r.covered.to_string(),
        ])
        .map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

pub fn write_study_metrics(path: &Path, scenario: &str, metrics: &[StudyMetrics]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record([
        "scenario", "estimator", "n_replicates", "mean_posterior_mean", "sd_posterior_mean",
        "bias", "mean_posterior_mode", "mean_posterior_sd", "coverage95",
    ])
    .map_err(|e| parse_err(path, e.to_string()))?;
    for m in metrics {
        w.write_record(&[
            scenario.to_string(),
            m.estimator.as_str().to_string(),
            m.n_replicates.to_string(),
            m.mean_posterior_mean.to_string(),
            m.sd_posterior_mean.to_string(),
            m.bias.to_string(),
            m.mean_posterior_mode.to_string(),
            m.mean_posterior_sd.to_string(),
            m.coverage95.to_string(),
        ])
        .map_err(|e| parse_err(path, e.to_string()))?;
    }
    finish(path, w)
}

// ------------------------------------------------------------------- JSON

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| parse_err(path, format!("cannot serialize: {e}")))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e.to_string()))
}

/// Everything a fit run records about itself (meta.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub config: ResolvedConfig,
    pub state_space: StateSpace,
    pub data: DataFacts,
    /// True when canonicalization exchanged the two input files' roles
    /// (right had more observed rows).
    pub sides_swapped: bool,
    /// True when canonicalization moved observed rows ahead of all-zero rows;
    /// chain and pairing outputs refer to the canonical row order.
    pub rows_reordered: bool,
    pub acceptance: AcceptanceRates,
    pub n_definition: String,
    pub quantile_definition: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataFacts {
    pub m: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub n_known: usize,
    pub n_traps: usize,
    pub k: u16,
}

pub const QUANTILE_DEFINITION: &str =
    "linear interpolation of order statistics at h = (n-1)p (type 7)";

/// Simulation ground truth as written next to the scrambled data (truth.json).
/// Row and individual indices are 1-based; `key[r]` is the left row owning
/// right row r+1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub seed: u64,
    pub n_true: usize,
    pub lambda0: f64,
    pub sigma: f64,
    pub k: u16,
    pub m: usize,
    pub n_known: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub sides_swapped: bool,
    pub key: Vec<usize>,
    pub left_individual: Vec<Option<usize>>,
    pub right_individual: Vec<Option<usize>>,
    pub activity_centers: Vec<Point>,
    pub state_space: StateSpace,
}

impl TruthFile {
    /// The answer key with indices back in 0-based form.
    pub fn key_assignment(&self) -> Result<crate::identity::IdAssignment> {
        if self.key.iter().any(|&v| v == 0) {
            return Err(Error::invalid("truth key rows are 1-based"));
        }
        let id: Vec<usize> = self.key.iter().map(|&v| v - 1).collect();
        crate::identity::IdAssignment::new(id, self.n_known)
    }
}
