//! Encounter matrices and the augmented two-side dataset.

use crate::error::{Error, Result};

/// Individuals-by-traps matrix of capture counts out of `k` occasions.
///
/// Counts are stored row-major. A row is "all-zero" iff every entry is 0;
/// all-zero rows are either data augmentation or observed null histories of
/// known-identity individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct EncounterMatrix {
    n_rows: usize,
    n_traps: usize,
    k: u16,
    counts: Vec<u16>,
}

impl EncounterMatrix {
    pub fn new(rows: Vec<Vec<u16>>, n_traps: usize, k: u16) -> Result<Self> {
        if k == 0 || k > crate::model::MAX_K {
            return Err(Error::invalid(format!(
                "number of occasions k must be in 1..={}, got {k}",
                crate::model::MAX_K
            )));
        }
        if n_traps == 0 {
            return Err(Error::invalid("encounter matrix needs at least one trap column"));
        }
        let mut counts = Vec::with_capacity(rows.len() * n_traps);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_traps {
                return Err(Error::invalid(format!(
                    "row {} has {} columns, expected {}",
                    i + 1,
                    row.len(),
                    n_traps
                )));
            }
            for (j, &y) in row.iter().enumerate() {
                if y > k {
                    return Err(Error::invalid(format!(
                        "count {} at row {}, trap {} exceeds k = {}",
                        y,
                        i + 1,
                        j + 1,
                        k
                    )));
                }
            }
            counts.extend_from_slice(row);
        }
        Ok(EncounterMatrix { n_rows: rows.len(), n_traps, k, counts })
    }

    pub fn zeros(n_rows: usize, n_traps: usize, k: u16) -> Self {
        EncounterMatrix { n_rows, n_traps, k, counts: vec![0; n_rows * n_traps] }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_traps(&self) -> usize {
        self.n_traps
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    pub fn row(&self, i: usize) -> &[u16] {
        &self.counts[i * self.n_traps..(i + 1) * self.n_traps]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.counts.chunks_exact(self.n_traps)
    }

    pub fn row_is_zero(&self, i: usize) -> bool {
        self.row(i).iter().all(|&y| y == 0)
    }

    /// Total captures in row `i` across traps.
    pub fn row_total(&self, i: usize) -> u32 {
        self.row(i).iter().map(|&y| y as u32).sum()
    }

    /// Swap two rows in place.
    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let j = self.n_traps;
        let (a0, b0) = (a * j, b * j);
        for c in 0..j {
            self.counts.swap(a0 + c, b0 + c);
        }
    }

    /// Append all-zero rows until the matrix has `m` rows.
    pub fn augment_to(&self, m: usize) -> Result<EncounterMatrix> {
        if m < self.n_rows {
            return Err(Error::invalid(format!(
                "augmented size {} is smaller than the {} rows already present",
                m, self.n_rows
            )));
        }
        let mut counts = self.counts.clone();
        counts.resize(m * self.n_traps, 0);
        Ok(EncounterMatrix { n_rows: m, n_traps: self.n_traps, k: self.k, counts })
    }

    /// The first `n` rows as their own matrix (e.g. to strip augmentation
    /// before writing observed data to disk).
    pub fn truncated(&self, n: usize) -> Result<EncounterMatrix> {
        if n > self.n_rows {
            return Err(Error::invalid(format!(
                "cannot keep {n} rows of a {}-row matrix",
                self.n_rows
            )));
        }
        Ok(EncounterMatrix {
            n_rows: n,
            n_traps: self.n_traps,
            k: self.k,
            counts: self.counts[..n * self.n_traps].to_vec(),
        })
    }

    /// New matrix whose rows are `self`'s rows in the given order.
    pub fn permuted(&self, order: &[usize]) -> EncounterMatrix {
        assert_eq!(order.len(), self.n_rows);
        let mut counts = Vec::with_capacity(self.counts.len());
        for &i in order {
            counts.extend_from_slice(self.row(i));
        }
        EncounterMatrix { n_rows: self.n_rows, n_traps: self.n_traps, k: self.k, counts }
    }
}

/// Both flanks of an augmented dataset in canonical orientation: the left
/// matrix is the one with at least as many observed rows, known-identity rows
/// come first on both sides and are matched by index, and observed rows
/// precede the all-zero augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub left: EncounterMatrix,
    pub right: EncounterMatrix,
    /// Observed rows on each side, counting the known block (whose rows may
    /// legitimately be all-zero).
    pub n_left: usize,
    pub n_right: usize,
    pub n_known: usize,
}

impl AugmentedDataset {
    pub fn new(
        left: EncounterMatrix,
        right: EncounterMatrix,
        n_left: usize,
        n_right: usize,
        n_known: usize,
    ) -> Result<Self> {
        if left.n_traps != right.n_traps {
            return Err(Error::invalid(format!(
                "left has {} traps, right has {}",
                left.n_traps, right.n_traps
            )));
        }
        if left.k != right.k {
            return Err(Error::invalid(format!(
                "left has k = {}, right has k = {}",
                left.k, right.k
            )));
        }
        if left.n_rows != right.n_rows {
            return Err(Error::invalid(format!(
                "left has {} rows, right has {}; both sides must be augmented to the same M",
                left.n_rows, right.n_rows
            )));
        }
        if !(n_known <= n_right && n_right <= n_left && n_left <= left.n_rows) {
            return Err(Error::invalid(format!(
                "need n_known <= n_right <= n_left <= M, got {n_known}, {n_right}, {n_left}, {}",
                left.n_rows
            )));
        }
        for i in n_left..left.n_rows {
            if !left.row_is_zero(i) {
                return Err(Error::invalid(format!(
                    "left row {} is beyond n_left = {} but has captures",
                    i + 1,
                    n_left
                )));
            }
        }
        for i in n_right..right.n_rows {
            if !right.row_is_zero(i) {
                return Err(Error::invalid(format!(
                    "right row {} is beyond n_right = {} but has captures",
                    i + 1,
                    n_right
                )));
            }
        }
        // Unknown observed rows must actually be observed: an all-zero history
        // is only data for the known block.
        for i in n_known..n_left {
            if left.row_is_zero(i) {
                return Err(Error::invalid(format!(
                    "left row {} is all-zero but lies in the unknown observed block",
                    i + 1
                )));
            }
        }
        for i in n_known..n_right {
            if right.row_is_zero(i) {
                return Err(Error::invalid(format!(
                    "right row {} is all-zero but lies in the unknown observed block",
                    i + 1
                )));
            }
        }
        Ok(AugmentedDataset { left, right, n_left, n_right, n_known })
    }

    pub fn m(&self) -> usize {
        self.left.n_rows
    }

    pub fn n_traps(&self) -> usize {
        self.left.n_traps
    }

    pub fn k(&self) -> u16 {
        self.left.k
    }
}
