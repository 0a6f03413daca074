//! Data generation: simulate a two-flank SCR survey, then either scramble the
//! identities (what a real camera-trap study observes) or reconcile them
//! perfectly (the oracle arm of the replicate studies). Scrambling returns the
//! true pairing as an answer key so recovery can be scored.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};

use crate::data::{AugmentedDataset, EncounterMatrix};
use crate::error::{Error, Result};
use crate::geom::{Point, StateSpace, TrapArray};
use crate::identity::IdAssignment;
use crate::model::{detection_prob, hazard, DetectionParams};
use crate::rng::Rng;

/// A simulated population with both flanks still attached to their owners:
/// row i of `left` and row i of `right` are the same individual.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub n: usize,
    pub s: Vec<Point>,
    pub left: EncounterMatrix,
    pub right: EncounterMatrix,
    pub params: DetectionParams,
}

impl SimTruth {
    pub fn k(&self) -> u16 {
        self.left.k()
    }

    pub fn captured_left(&self, i: usize) -> bool {
        !self.left.row_is_zero(i)
    }

    pub fn captured_right(&self, i: usize) -> bool {
        !self.right.row_is_zero(i)
    }

    pub fn n_captured_left(&self) -> usize {
        (0..self.n).filter(|&i| self.captured_left(i)).count()
    }

    pub fn n_captured_right(&self) -> usize {
        (0..self.n).filter(|&i| self.captured_right(i)).count()
    }

    /// Individuals captured on at least one side.
    pub fn n_captured_union(&self) -> usize {
        (0..self.n)
            .filter(|&i| self.captured_left(i) || self.captured_right(i))
            .count()
    }
}

/// Simulate N individuals: activity centers uniform on the state space,
/// counts Binomial(K, p(s, x)) independently per trap and side, with the same
/// center driving both sides. Draw order is fixed (per individual: s, then
/// left and right counts trap by trap), so a seeded RNG reproduces exactly.
pub fn simulate(
    n: usize,
    traps: &TrapArray,
    space: StateSpace,
    params: &DetectionParams,
    k: u16,
    rng: &mut Rng,
) -> Result<SimTruth> {
    if n == 0 {
        return Err(Error::invalid("population size must be >= 1"));
    }
    if k == 0 || k > crate::model::MAX_K {
        return Err(Error::invalid(format!(
            "K must be in 1..={}, got {k}",
            crate::model::MAX_K
        )));
    }
    for (j, x) in traps.iter().enumerate() {
        if !space.contains(*x) {
            return Err(Error::invalid(format!("trap {} lies outside the state space", j + 1)));
        }
    }
    let mut s = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for _ in 0..n {
        let center = space.sample_uniform(rng);
        s.push(center);
        let mut yl = Vec::with_capacity(traps.len());
        let mut yr = Vec::with_capacity(traps.len());
        for x in traps.iter() {
            let p = detection_prob(center, *x, params);
            let binom = Binomial::new(u64::from(k), p)
                .map_err(|e| Error::invalid(format!("invalid binomial draw: {e}")))?;
            yl.push(binom.sample(rng) as u16);
            yr.push(binom.sample(rng) as u16);
        }
        left.push(yl);
        right.push(yr);
    }
    Ok(SimTruth {
        n,
        s,
        left: EncounterMatrix::new(left, traps.len(), k)?,
        right: EncounterMatrix::new(right, traps.len(), k)?,
        params: *params,
    })
}

/// A scrambled dataset plus everything needed to score recovery against the
/// truth. `key` is the true pairing: left row `key.get(r)` owns right row r.
/// `left_individual[i]` / `right_individual[i]` give the simulated individual
/// behind each observed row (None for augmented all-zero rows), already in the
/// returned dataset's orientation.
#[derive(Debug, Clone)]
pub struct Scrambled {
    pub data: AugmentedDataset,
    pub key: IdAssignment,
    pub sides_swapped: bool,
    pub left_individual: Vec<Option<usize>>,
    pub right_individual: Vec<Option<usize>>,
}

/// Break the row correspondence the way field data loses it. `n_known`
/// individuals are selected uniformly from the whole population (tagging does
/// not depend on being photographed) and occupy the first rows of both sides
/// in selection order, captured or not. The remaining captured rows of each
/// side are independently shuffled, then both sides are zero-padded to M rows.
/// Sides are swapped if needed so the left side is the one with more observed
/// rows. The answer key extends the true pairing to a full bijection by
/// assigning each right-only individual a designated augmented left row (and
/// pairing leftover all-zero rows arbitrarily but deterministically).
pub fn scramble(truth: &SimTruth, n_known: usize, m: usize, rng: &mut Rng) -> Result<Scrambled> {
    let n = truth.n;
    if n_known > n {
        return Err(Error::invalid(format!(
            "cannot pre-match {n_known} of {n} individuals"
        )));
    }

    // Uniform selection without replacement via partial Fisher-Yates, so the
    // selection order itself is the known-block row order.
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..n_known {
        let j = rng.random_range(t..n);
        order.swap(t, j);
    }
    let known = &order[..n_known];
    let mut is_known = vec![false; n];
    for &w in known {
        is_known[w] = true;
    }

    let mut unk_left: Vec<usize> =
        (0..n).filter(|&w| !is_known[w] && truth.captured_left(w)).collect();
    let mut unk_right: Vec<usize> =
        (0..n).filter(|&w| !is_known[w] && truth.captured_right(w)).collect();
    unk_left.shuffle(rng);
    unk_right.shuffle(rng);

    let union: usize = (0..n)
        .filter(|&w| is_known[w] || truth.captured_left(w) || truth.captured_right(w))
        .count();
    if m < union {
        return Err(Error::invalid(format!(
            "M = {m} is too small: {union} rows are observed or pre-matched"
        )));
    }

    let n_left = n_known + unk_left.len();
    let n_right = n_known + unk_right.len();
    let j = truth.left.n_traps();
    let k = truth.k();

    let build = |mat: &EncounterMatrix, rows: &[usize]| -> Result<EncounterMatrix> {
        let rows: Vec<Vec<u16>> = known
            .iter()
            .chain(rows.iter())
            .map(|&w| mat.row(w).to_vec())
            .collect();
        EncounterMatrix::new(rows, j, k)?.augment_to(m)
    };
    let left = build(&truth.left, &unk_left)?;
    let right = build(&truth.right, &unk_right)?;

    // Row provenance on each side.
    let mut left_ind: Vec<Option<usize>> = vec![None; m];
    let mut right_ind: Vec<Option<usize>> = vec![None; m];
    for (t, &w) in known.iter().enumerate() {
        left_ind[t] = Some(w);
        right_ind[t] = Some(w);
    }
    for (pos, &w) in unk_left.iter().enumerate() {
        left_ind[n_known + pos] = Some(w);
    }
    for (pos, &w) in unk_right.iter().enumerate() {
        right_ind[n_known + pos] = Some(w);
    }

    // Every observed individual gets one designated row per side: those
    // captured on only one side claim augmented all-zero rows of the other,
    // ascending. This keeps the key meaningful in both orientations.
    let mut left_row_of = vec![usize::MAX; n];
    let mut right_row_of = vec![usize::MAX; n];
    for i in 0..m {
        if let Some(w) = left_ind[i] {
            left_row_of[w] = i;
        }
        if let Some(w) = right_ind[i] {
            right_row_of[w] = i;
        }
    }
    let mut next_free_left = n_left;
    for &w in unk_right.iter() {
        if left_row_of[w] == usize::MAX {
            left_row_of[w] = next_free_left;
            left_ind[next_free_left] = Some(w);
            next_free_left += 1;
        }
    }
    let mut next_free_right = n_right;
    for &w in unk_left.iter() {
        if right_row_of[w] == usize::MAX {
            right_row_of[w] = next_free_right;
            right_ind[next_free_right] = Some(w);
            next_free_right += 1;
        }
    }

    // Assemble the key from the per-individual rows; leftover zero rows are
    // paired in ascending order.
    let mut id = vec![usize::MAX; m];
    let mut left_used = vec![false; m];
    for w in 0..n {
        let r = right_row_of[w];
        if r != usize::MAX {
            id[r] = left_row_of[w];
            left_used[left_row_of[w]] = true;
        }
    }
    let mut spare = (0..m).filter(|&u| !left_used[u]);
    for slot in id.iter_mut() {
        if *slot == usize::MAX {
            *slot = spare.next().expect("as many spare left rows as unclaimed right rows");
        }
    }

    // Orientation: left must be the side with more observed rows.
    let sides_swapped = n_right > n_left;
    let (data, key, left_ind, right_ind) = if sides_swapped {
        let key = IdAssignment::new(id, n_known)?.inverse();
        (
            AugmentedDataset::new(right, left, n_right, n_left, n_known)?,
            IdAssignment::new(key, n_known)?,
            right_ind,
            left_ind,
        )
    } else {
        (
            AugmentedDataset::new(left, right, n_left, n_right, n_known)?,
            IdAssignment::new(id, n_known)?,
            left_ind,
            right_ind,
        )
    };
    Ok(Scrambled {
        data,
        key,
        sides_swapped,
        left_individual: left_ind,
        right_individual: right_ind,
    })
}

/// Perfectly reconciled dataset: one row per individual captured on either
/// side, in simulation order, pairing intact, marked fully known. This is the
/// complete-identity oracle arm.
pub fn reconcile_perfect(truth: &SimTruth, m: usize) -> Result<AugmentedDataset> {
    let observed: Vec<usize> = (0..truth.n)
        .filter(|&w| truth.captured_left(w) || truth.captured_right(w))
        .collect();
    if m < observed.len() {
        return Err(Error::invalid(format!(
            "M = {m} is too small: {} individuals were captured",
            observed.len()
        )));
    }
    let j = truth.left.n_traps();
    let k = truth.k();
    let take = |mat: &EncounterMatrix| -> Result<EncounterMatrix> {
        let rows: Vec<Vec<u16>> = observed.iter().map(|&w| mat.row(w).to_vec()).collect();
        EncounterMatrix::new(rows, j, k)?.augment_to(m)
    };
    let n_obs = observed.len();
    AugmentedDataset::new(take(&truth.left)?, take(&truth.right)?, n_obs, n_obs, n_obs)
}

/// Expected number of individuals captured on ONE side, by midpoint
/// quadrature over the state space: N * mean over s of
/// 1 - exp(-K * sum_j h(s, x_j)). Used to calibrate survey effort in tests
/// and to cross-check the simulator against an independent computation.
pub fn expected_side_captures(
    n: usize,
    traps: &TrapArray,
    space: StateSpace,
    params: &DetectionParams,
    k: u16,
    grid_per_axis: usize,
) -> f64 {
    assert!(grid_per_axis >= 2);
    let gx = (space.xmax - space.xmin) / grid_per_axis as f64;
    let gy = (space.ymax - space.ymin) / grid_per_axis as f64;
    let mut acc = 0.0;
    for ix in 0..grid_per_axis {
        for iy in 0..grid_per_axis {
            let s = Point::new(
                space.xmin + (ix as f64 + 0.5) * gx,
                space.ymin + (iy as f64 + 0.5) * gy,
            );
            let total_h: f64 = traps.iter().map(|x| hazard(s, *x, params)).sum();
            acc += 1.0 - (-f64::from(k) * total_h).exp();
        }
    }
    n as f64 * acc / (grid_per_axis * grid_per_axis) as f64
}
