//! The latent pairing between right-side and left-side encounter rows.
//!
//! An [`IdAssignment`] is a bijection on row indices: `id[i]` is the left row
//! that right row `i` belongs to. Known-identity rows occupy the first
//! `n_known` positions on both sides and are fixed points. Everything the
//! samplers need to propose pairing moves lives here: capture centroids, the
//! distance-based swap neighborhood, the greedy initializer, and the
//! canonical orientation rule (the side with more observed rows is "left").

use crate::data::{AugmentedDataset, EncounterMatrix};
use crate::error::{Error, Result};
use crate::geom::{Point, TrapArray};

/// Bijection from right-row indices to left-row indices, fixing the known
/// block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdAssignment {
    id: Vec<usize>,
    n_known: usize,
}

impl IdAssignment {
    pub fn new(id: Vec<usize>, n_known: usize) -> Result<Self> {
        if n_known > id.len() {
            return Err(Error::invalid(format!(
                "n_known = {} exceeds the {} rows",
                n_known,
                id.len()
            )));
        }
        let mut seen = vec![false; id.len()];
        for (i, &t) in id.iter().enumerate() {
            if t >= id.len() {
                return Err(Error::invalid(format!(
                    "id[{}] = {} is out of range for {} rows",
                    i + 1,
                    t + 1,
                    id.len()
                )));
            }
            if seen[t] {
                return Err(Error::invalid(format!(
                    "id maps two right rows to left row {}",
                    t + 1
                )));
            }
            seen[t] = true;
        }
        for (i, &t) in id.iter().take(n_known).enumerate() {
            if t != i {
                return Err(Error::invalid(format!(
                    "known right row {} must map to left row {}, got {}",
                    i + 1,
                    i + 1,
                    t + 1
                )));
            }
        }
        Ok(IdAssignment { id, n_known })
    }

    pub fn identity(m: usize, n_known: usize) -> Self {
        IdAssignment { id: (0..m).collect(), n_known }
    }

    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_empty()
    }

    pub fn n_known(&self) -> usize {
        self.n_known
    }

    /// Left row owning right row `i`.
    pub fn get(&self, i: usize) -> usize {
        self.id[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.id
    }

    /// Exchange the left rows of right rows `a` and `b`. Neither may be in
    /// the known block.
    pub fn swap(&mut self, a: usize, b: usize) {
        assert!(a >= self.n_known && b >= self.n_known, "known rows are fixed points");
        self.id.swap(a, b);
    }

    /// inverse()[left_row] = right row assigned to it.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0usize; self.id.len()];
        for (i, &t) in self.id.iter().enumerate() {
            inv[t] = i;
        }
        inv
    }

    /// Check bijectivity and the fixed known block (used by the structural
    /// invariant suite).
    pub fn validate(&self) -> Result<()> {
        IdAssignment::new(self.id.clone(), self.n_known).map(|_| ())
    }
}

/// Count-weighted mean of the trap locations at which a row was captured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureCentroid {
    pub point: Point,
    /// Total captures contributing to the centroid.
    pub n_captures: u32,
}

/// Centroid of one encounter row; `None` for an all-zero row.
pub fn centroid(row: &[u16], traps: &TrapArray) -> Option<CaptureCentroid> {
    debug_assert_eq!(row.len(), traps.len());
    let mut n: u32 = 0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (j, &y) in row.iter().enumerate() {
        if y > 0 {
            let x = traps.get(j);
            n += u32::from(y);
            sx += f64::from(y) * x.x;
            sy += f64::from(y) * x.y;
        }
    }
    (n > 0).then(|| CaptureCentroid {
        point: Point::new(sx / f64::from(n), sy / f64::from(n)),
        n_captures: n,
    })
}

/// Centroids for every row of a matrix.
pub fn centroids(matrix: &EncounterMatrix, traps: &TrapArray) -> Vec<Option<CaptureCentroid>> {
    (0..matrix.n_rows()).map(|i| centroid(matrix.row(i), traps)).collect()
}

/// Reorder the right matrix so that output row `id[i]` is input row `i`,
/// aligning each right history with the left row it is assigned to.
pub fn reorder_right(right: &EncounterMatrix, id: &IdAssignment) -> EncounterMatrix {
    assert_eq!(right.n_rows(), id.len());
    right.permuted(&id.inverse())
}

/// Put a pair of equally-augmented matrices into canonical orientation:
/// within the unknown block observed (captured) rows precede augmentation on
/// both sides, preserving relative order, and if the right side ends up with
/// more observed rows than the left the two sides are exchanged. Returns the
/// dataset and whether the sides were swapped.
///
/// The first `n_known` rows of each input are the matched known block and
/// stay in place (they may be all-zero: a known individual that was never
/// photographed).
pub fn canonicalize(
    left: &EncounterMatrix,
    right: &EncounterMatrix,
    n_known: usize,
) -> Result<(AugmentedDataset, bool)> {
    if left.n_traps() != right.n_traps() {
        return Err(Error::invalid(format!(
            "left has {} traps, right has {}",
            left.n_traps(),
            right.n_traps()
        )));
    }
    if left.k() != right.k() {
        return Err(Error::invalid(format!("left has k = {}, right has k = {}", left.k(), right.k())));
    }
    if left.n_rows() != right.n_rows() {
        return Err(Error::invalid(format!(
            "sides must be augmented to a common M before canonicalizing (got {} and {} rows)",
            left.n_rows(),
            right.n_rows()
        )));
    }
    if n_known > left.n_rows() {
        return Err(Error::invalid(format!(
            "n_known = {} exceeds the {} rows per side",
            n_known,
            left.n_rows()
        )));
    }

    // Stable partition of the unknown block: captured rows first.
    let sort_side = |m: &EncounterMatrix| -> (EncounterMatrix, usize) {
        let mut order: Vec<usize> = (0..n_known).collect();
        let captured: Vec<usize> =
            (n_known..m.n_rows()).filter(|&i| !m.row_is_zero(i)).collect();
        let n_obs = n_known + captured.len();
        order.extend(captured);
        order.extend((n_known..m.n_rows()).filter(|&i| m.row_is_zero(i)));
        (m.permuted(&order), n_obs)
    };

    let (mut left_sorted, mut n_left) = sort_side(left);
    let (mut right_sorted, mut n_right) = sort_side(right);
    let swapped = n_right > n_left;
    if swapped {
        std::mem::swap(&mut left_sorted, &mut right_sorted);
        std::mem::swap(&mut n_left, &mut n_right);
    }
    let dataset = AugmentedDataset::new(left_sorted, right_sorted, n_left, n_right, n_known)?;
    Ok((dataset, swapped))
}

/// Initial pairing: repeatedly match the unmatched captured right row and
/// unmatched captured left row whose centroids are closest, ties broken by
/// the lower (right index, left index). Leftover rows (all-zero right rows,
/// and captured right rows if the left side is exhausted) fill the remaining
/// left slots in ascending index order. Known rows stay fixed.
pub fn greedy_init(data: &AugmentedDataset, traps: &TrapArray) -> IdAssignment {
    let m = data.m();
    let nk = data.n_known;
    let left_cent = centroids(&data.left, traps);
    let right_cent = centroids(&data.right, traps);

    let right_captured: Vec<usize> =
        (nk..m).filter(|&i| right_cent[i].is_some()).collect();
    let left_captured: Vec<usize> = (nk..m).filter(|&i| left_cent[i].is_some()).collect();

    // All candidate pairs sorted by (distance, right index, left index).
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for &ir in &right_captured {
        let rc = right_cent[ir].unwrap().point;
        for &il in &left_captured {
            let lc = left_cent[il].unwrap().point;
            pairs.push((rc.dist(&lc), ir, il));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });

    let mut id = vec![usize::MAX; m];
    let mut left_taken = vec![false; m];
    for i in 0..nk {
        id[i] = i;
        left_taken[i] = true;
    }
    for &(_, ir, il) in &pairs {
        if id[ir] == usize::MAX && !left_taken[il] {
            id[ir] = il;
            left_taken[il] = true;
        }
    }
    // Remaining rows (all-zero right rows, unmatched captured right rows) map
    // to the free left slots in ascending order.
    let mut free = (0..m).filter(|&l| !left_taken[l]);
    for i in nk..m {
        if id[i] == usize::MAX {
            id[i] = free.next().expect("free left slot must exist");
        }
    }
    IdAssignment { id, n_known: nk }
}

/// Candidate swap partners for right row `i` under the current assignment:
/// every `i' != i` outside the known block such that either (a) right row
/// `i'` and its assigned left row are both all-zero (a free slot), or (b) the
/// centroid of left row `id[i']` lies within `radius` of the centroid of
/// right row `i`. A left row with no captures has no centroid; its distance
/// is treated as +inf, so it only qualifies through (a) or when radius is
/// infinite. If right row `i` is itself all-zero no distance is computable
/// and all eligible rows qualify.
pub fn swap_neighborhood(
    i: usize,
    id: &IdAssignment,
    left_cent: &[Option<CaptureCentroid>],
    right_cent: &[Option<CaptureCentroid>],
    radius: f64,
) -> Vec<usize> {
    let m = id.len();
    let nk = id.n_known();
    debug_assert!(i >= nk, "known rows are never swap pivots");
    let anchor = right_cent[i].map(|c| c.point);
    let mut out = Vec::new();
    for cand in nk..m {
        if cand == i {
            continue;
        }
        let l = id.get(cand);
        let free_slot = right_cent[cand].is_none() && left_cent[l].is_none();
        let qualifies = match anchor {
            None => true,
            Some(a) => {
                free_slot
                    || left_cent[l]
                        .map(|c| a.dist(&c.point) <= radius)
                        .unwrap_or(radius == f64::INFINITY)
            }
        };
        if qualifies {
            out.push(cand);
        }
    }
    out
}
