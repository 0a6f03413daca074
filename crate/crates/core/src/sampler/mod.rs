//! Metropolis-within-Gibbs samplers for the two-flank SCR model.
//!
//! One sweep updates, in order: detection parameters (random walk on the log
//! scale), the latent identity pairing (distance-guided swaps; full and
//! known-identity modes only), the inclusion indicators z (exact Gibbs), psi
//! (conjugate Beta), and the activity centers (per-row random walk, with a
//! uniform redraw for excluded rows). The observation log-likelihood is held
//! in a per-row cache that updates incrementally; its agreement with the
//! reference implementation in [`crate::model`] is part of the structural
//! invariant test suite.

mod heuristic;

pub use heuristic::{run_heuristic, run_heuristic_with_progress};

use rand::Rng as _;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AugmentedDataset, EncounterMatrix};
use crate::error::{Error, Result};
use crate::geom::{Point, StateSpace, TrapArray};
use crate::identity::{
    self, centroids, greedy_init, reorder_right, CaptureCentroid, IdAssignment,
};
use crate::model::{hazard, ln_detection_prob, DetectionParams, LnBinomTable};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No identities known: the pairing is fully latent.
    Full,
    /// The first n_known rows are pre-matched individuals (e.g. telemetered);
    /// they are excluded from the psi/N information and their z is pinned.
    KnownId,
    /// Perfectly reconciled data: identity pairing fixed, ordinary augmented
    /// SCR on the paired histories.
    AllKnown,
    /// The two sides are modeled as independent SCR datasets sharing
    /// detection parameters and psi; no pairing at all.
    Heuristic,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::KnownId => "known_id",
            Mode::AllKnown => "all_known",
            Mode::Heuristic => "heuristic",
        }
    }
}

/// Sampler configuration. `None` fields are resolved at run start (the
/// resolved values are echoed in [`ChainOutput::config`]): the sigma prior
/// upper bound defaults to half the state-space diagonal and the swap radius
/// to 3x the initial sigma.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iters: u64,
    pub burnin: u64,
    /// Record every thin-th post-burn-in sweep.
    pub thin: u64,
    /// Augmented size; must equal the dataset's row count.
    pub m: usize,
    pub mode: Mode,
    pub seed: u64,
    pub prior_upper_lambda0: f64,
    pub prior_upper_sigma: Option<f64>,
    pub proposal_sd_log_lambda0: f64,
    pub proposal_sd_log_sigma: f64,
    pub proposal_sd_s: f64,
    pub n_swaps_per_iter: u32,
    pub swap_radius: Option<f64>,
    pub record_id_samples: bool,
}

impl SamplerConfig {
    /// Defaults for everything except problem size, mode, and seed.
    pub fn new(iters: u64, burnin: u64, m: usize, mode: Mode, seed: u64) -> Self {
        SamplerConfig {
            iters,
            burnin,
            thin: 1,
            m,
            mode,
            seed,
            prior_upper_lambda0: 5.0,
            prior_upper_sigma: None,
            proposal_sd_log_lambda0: 0.1,
            proposal_sd_log_sigma: 0.1,
            proposal_sd_s: 0.5,
            n_swaps_per_iter: 50,
            swap_radius: None,
            record_id_samples: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::invalid("iters must be >= 1"));
        }
        if self.burnin >= self.iters {
            return Err(Error::invalid(format!(
                "burnin ({}) must be smaller than iters ({})",
                self.burnin, self.iters
            )));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be >= 1"));
        }
        if !(self.prior_upper_lambda0 > 0.0 && self.prior_upper_lambda0.is_finite()) {
            return Err(Error::invalid("prior_upper_lambda0 must be positive and finite"));
        }
        if let Some(u) = self.prior_upper_sigma {
            if !(u > 0.0 && u.is_finite()) {
                return Err(Error::invalid("prior_upper_sigma must be positive and finite"));
            }
        }
        for (name, v) in [
            ("proposal_sd_log_lambda0", self.proposal_sd_log_lambda0),
            ("proposal_sd_log_sigma", self.proposal_sd_log_sigma),
            ("proposal_sd_s", self.proposal_sd_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        if let Some(r) = self.swap_radius {
            if !(r > 0.0) {
                return Err(Error::invalid("swap_radius must be positive"));
            }
        }
        Ok(())
    }
}

/// Fully resolved configuration actually used by a run; serialized into run
/// metadata so outputs are self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub iters: u64,
    pub burnin: u64,
    pub thin: u64,
    pub m: usize,
    pub mode: Mode,
    pub seed: u64,
    pub prior_upper_lambda0: f64,
    pub prior_upper_sigma: f64,
    pub proposal_sd_log_lambda0: f64,
    pub proposal_sd_log_sigma: f64,
    pub proposal_sd_s: f64,
    pub n_swaps_per_iter: u32,
    pub swap_radius: f64,
    pub record_id_samples: bool,
    pub lambda0_init: f64,
    pub sigma_init: f64,
}

/// Latent chain state; mutated in place by [`Sampler::sweep`].
#[derive(Debug, Clone)]
pub struct LatentState {
    pub params: DetectionParams,
    pub psi: f64,
    pub z: Vec<bool>,
    pub s: Vec<Point>,
    pub id: IdAssignment,
    /// Right matrix reordered so row i belongs to left row i.
    pub right_star: EncounterMatrix,
    /// Cached total observation log-likelihood.
    pub loglik: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub lambda0: MoveStats,
    pub sigma: MoveStats,
    pub s_moves: MoveStats,
    pub id_swaps: MoveStats,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleRecord {
    pub iter: u64,
    pub lambda0: f64,
    pub sigma: f64,
    pub psi: f64,
    pub n: u32,
    pub loglik: f64,
}

/// One recorded pairing of a captured right row (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdSampleRecord {
    pub iter: u64,
    pub right_index: usize,
    pub left_index: usize,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<SampleRecord>,
    pub id_samples: Option<Vec<IdSampleRecord>>,
    pub acceptance: AcceptanceRates,
    pub config: ResolvedConfig,
    /// How the recorded N is defined for this mode.
    pub n_definition: String,
}

/// Progress callback payload.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub iter: u64,
    pub iters: u64,
    pub acceptance: AcceptanceRates,
}

/// Test-support hooks. `s_grid` restricts activity centers to a finite point
/// set (prior and proposals become uniform on the grid) so that exact
/// enumeration of the posterior is possible; `fix_detection_params` disables
/// the lambda0/sigma updates. Production runs use `SamplerHooks::default()`.
#[derive(Debug, Clone, Default)]
pub struct SamplerHooks {
    pub s_grid: Option<Vec<Point>>,
    pub fix_detection_params: bool,
}

/// The full / known-identity / all-known sampler with its incremental
/// likelihood cache.
pub struct Sampler {
    data: AugmentedDataset,
    traps: TrapArray,
    space: StateSpace,
    cfg: ResolvedConfig,
    hooks: SamplerHooks,

    // Fixed capture structure. caps_right is indexed by ORIGINAL right row.
    caps_left: Vec<Vec<(usize, u16)>>,
    caps_right: Vec<Vec<(usize, u16)>>,
    cl_const: Vec<f64>,
    cr_const: Vec<f64>,
    left_cent: Vec<Option<CaptureCentroid>>,
    right_cent: Vec<Option<CaptureCentroid>>,
    /// Unknown captured right rows: the swap pivot pool.
    swap_pool: Vec<usize>,
    /// All captured right rows (for id_samples recording).
    right_captured: Vec<usize>,

    state: LatentState,
    /// attached[left_row] = original right row assigned to it (inverse of id).
    attached: Vec<usize>,
    /// e_row[i] = sum_j exp(-||s_i - x_j||^2 / (2 sigma^2)), kept current.
    e_row: Vec<f64>,
    row_ll: Vec<f64>,
    // Scratch buffers for full-pass candidate evaluations.
    e_scratch: Vec<f64>,
    ll_scratch: Vec<f64>,

    rng: Rng,
    acc: AcceptanceRates,
}

impl Sampler {
    pub fn new(
        data: &AugmentedDataset,
        traps: &TrapArray,
        space: StateSpace,
        config: &SamplerConfig,
    ) -> Result<Self> {
        Self::with_hooks(data, traps, space, config, SamplerHooks::default())
    }

    pub fn with_hooks(
        data: &AugmentedDataset,
        traps: &TrapArray,
        space: StateSpace,
        config: &SamplerConfig,
        hooks: SamplerHooks,
    ) -> Result<Self> {
        config.validate()?;
        if config.m != data.m() {
            return Err(Error::invalid(format!(
                "config declares M = {} but the dataset is augmented to {}",
                config.m,
                data.m()
            )));
        }
        if data.n_traps() != traps.len() {
            return Err(Error::invalid(format!(
                "dataset has {} trap columns but the trap array has {}",
                data.n_traps(),
                traps.len()
            )));
        }
        for (j, x) in traps.iter().enumerate() {
            if !(x.x > space.xmin && x.x < space.xmax && x.y > space.ymin && x.y < space.ymax) {
                return Err(Error::invalid(format!(
                    "trap {} lies outside the interior of the state space",
                    j + 1
                )));
            }
        }
        match config.mode {
            Mode::Full if data.n_known != 0 => {
                return Err(Error::invalid(
                    "full mode requires n_known = 0; use known_id for pre-matched rows",
                ));
            }
            Mode::KnownId if data.n_known == 0 => {
                return Err(Error::invalid("known_id mode requires n_known >= 1"));
            }
            Mode::Heuristic => {
                return Err(Error::invalid(
                    "the heuristic sampler has its own entry point (run_heuristic)",
                ));
            }
            _ => {}
        }
        if let Some(grid) = &hooks.s_grid {
            if grid.is_empty() {
                return Err(Error::invalid("s_grid hook must contain at least one point"));
            }
            if grid.iter().any(|p| !space.contains(*p)) {
                return Err(Error::invalid("s_grid hook points must lie in the state space"));
            }
        }

        let m = data.m();
        let sigma_upper = config.prior_upper_sigma.unwrap_or(0.5 * space.diagonal());
        let sigma_init = 0.5 * sigma_upper;
        let lambda0_init = 0.5 * config.prior_upper_lambda0;
        let cfg = ResolvedConfig {
            iters: config.iters,
            burnin: config.burnin,
            thin: config.thin,
            m: config.m,
            mode: config.mode,
            seed: config.seed,
            prior_upper_lambda0: config.prior_upper_lambda0,
            prior_upper_sigma: sigma_upper,
            proposal_sd_log_lambda0: config.proposal_sd_log_lambda0,
            proposal_sd_log_sigma: config.proposal_sd_log_sigma,
            proposal_sd_s: config.proposal_sd_s,
            n_swaps_per_iter: config.n_swaps_per_iter,
            swap_radius: config.swap_radius.unwrap_or(3.0 * sigma_init),
            record_id_samples: config.record_id_samples,
            lambda0_init,
            sigma_init,
        };

        let lnc = LnBinomTable::new(data.k())?;
        let sparse = |mat: &EncounterMatrix| -> (Vec<Vec<(usize, u16)>>, Vec<f64>) {
            let mut caps = Vec::with_capacity(m);
            let mut consts = Vec::with_capacity(m);
            for i in 0..m {
                let row = mat.row(i);
                let c: Vec<(usize, u16)> =
                    row.iter().enumerate().filter(|(_, &y)| y > 0).map(|(j, &y)| (j, y)).collect();
                consts.push(row.iter().map(|&y| lnc.get(y)).sum());
                caps.push(c);
            }
            (caps, consts)
        };
        let (caps_left, cl_const) = sparse(&data.left);
        let (caps_right, cr_const) = sparse(&data.right);
        let left_cent = centroids(&data.left, traps);
        let right_cent = centroids(&data.right, traps);
        let swap_pool: Vec<usize> =
            (data.n_known..m).filter(|&i| !caps_right[i].is_empty()).collect();
        let right_captured: Vec<usize> = (0..m).filter(|&i| !caps_right[i].is_empty()).collect();

        let mut rng = rng_from_seed(config.seed);
        let params = DetectionParams::new(lambda0_init, sigma_init)?;

        // Initial pairing: greedy centroid matching, except in all-known mode
        // where the identity pairing is the (fixed) truth.
        let id = match config.mode {
            Mode::AllKnown => IdAssignment::identity(m, data.n_known),
            _ => greedy_init(data, traps),
        };
        let attached = id.inverse();
        let right_star = reorder_right(&data.right, &id);

        // z: deterministically 1 for rows with captures on either flank (and
        // for the known block), Bernoulli(1/2) otherwise.
        let mut z = Vec::with_capacity(m);
        for i in 0..m {
            let captured = !caps_left[i].is_empty() || !caps_right[attached[i]].is_empty();
            let pinned = captured || (config.mode == Mode::KnownId && i < data.n_known);
            z.push(if pinned { true } else { rng.random_bool(0.5) });
        }

        // s: combined capture centroid of the paired histories, else uniform.
        let mut s = Vec::with_capacity(m);
        for i in 0..m {
            let mut n: u32 = 0;
            let (mut sx, mut sy) = (0.0, 0.0);
            for &(j, y) in caps_left[i].iter().chain(caps_right[attached[i]].iter()) {
                let x = traps.get(j);
                n += u32::from(y);
                sx += f64::from(y) * x.x;
                sy += f64::from(y) * x.y;
            }
            let p = if n > 0 {
                Point::new(sx / f64::from(n), sy / f64::from(n))
            } else {
                match &hooks.s_grid {
                    Some(grid) => grid[rng.random_range(0..grid.len())],
                    None => space.sample_uniform(&mut rng),
                }
            };
            s.push(p);
        }
        if let Some(grid) = &hooks.s_grid {
            // Snap centroid-initialized rows onto the grid (nearest point) so
            // the chain starts in-support.
            for p in s.iter_mut() {
                let nearest = grid
                    .iter()
                    .min_by(|a, b| a.dist2(p).partial_cmp(&b.dist2(p)).unwrap())
                    .unwrap();
                *p = *nearest;
            }
        }

        let n_z: usize = z.iter().filter(|&&b| b).count();
        let psi = (n_z as f64 + 1.0) / (m as f64 + 2.0);

        let state = LatentState {
            params,
            psi,
            z,
            s,
            id,
            right_star,
            loglik: 0.0,
        };

        let mut sampler = Sampler {
            data: data.clone(),
            traps: traps.clone(),
            space,
            cfg,
            hooks,
            caps_left,
            caps_right,
            cl_const,
            cr_const,
            left_cent,
            right_cent,
            swap_pool,
            right_captured,
            state,
            attached,
            e_row: vec![0.0; m],
            row_ll: vec![0.0; m],
            e_scratch: vec![0.0; m],
            ll_scratch: vec![0.0; m],
            rng,
            acc: AcceptanceRates::default(),
        };
        sampler.rebuild_cache();
        Ok(sampler)
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn acceptance(&self) -> AcceptanceRates {
        self.acc
    }

    pub fn config(&self) -> &ResolvedConfig {
        &self.cfg
    }

    fn m(&self) -> usize {
        self.data.m()
    }

    fn k_f64(&self) -> f64 {
        f64::from(self.data.k())
    }

    fn e_of(&self, s: Point, sigma: f64) -> f64 {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut e = 0.0;
        for x in self.traps.iter() {
            e += (-s.dist2(x) * inv).exp();
        }
        e
    }

    /// y * (ln p + h) at trap j for an individual at s; the captured-pair term
    /// of the row log-likelihood.
    fn cap_term(&self, s: Point, j: usize, y: u16, params: &DetectionParams) -> f64 {
        let h = hazard(s, self.traps.get(j), params);
        f64::from(y) * (ln_detection_prob(h) + h)
    }

    /// Row log-likelihood for an included row with right row `att` attached.
    /// `e` must be sum_j exp(-d^2/(2 sigma^2)) for this row's s under
    /// `params.sigma`.
    fn row_ll_z1(&self, i: usize, att: usize, s: Point, params: &DetectionParams, e: f64) -> f64 {
        let mut ll = self.cl_const[i] + self.cr_const[att]
            - 2.0 * self.k_f64() * params.lambda0 * e;
        for &(j, y) in &self.caps_left[i] {
            ll += self.cap_term(s, j, y, params);
        }
        for &(j, y) in &self.caps_right[att] {
            ll += self.cap_term(s, j, y, params);
        }
        ll
    }

    /// Recompute e_row, row_ll, and the total from the current state.
    fn rebuild_cache(&mut self) {
        let mut total = 0.0;
        for i in 0..self.m() {
            self.e_row[i] = self.e_of(self.state.s[i], self.state.params.sigma);
            self.row_ll[i] = if self.state.z[i] {
                self.row_ll_z1(i, self.attached[i], self.state.s[i], &self.state.params, self.e_row[i])
            } else {
                0.0
            };
            total += self.row_ll[i];
        }
        self.state.loglik = total;
    }

    /// Candidate full pass under different detection parameters, writing
    /// per-row values into the scratch buffers. Returns the candidate total.
    fn full_pass(&mut self, params: &DetectionParams, sigma_changed: bool) -> f64 {
        let mut total = 0.0;
        for i in 0..self.m() {
            let e = if sigma_changed {
                self.e_of(self.state.s[i], params.sigma)
            } else {
                self.e_row[i]
            };
            self.e_scratch[i] = e;
            let ll = if self.state.z[i] {
                self.row_ll_z1(i, self.attached[i], self.state.s[i], params, e)
            } else {
                0.0
            };
            self.ll_scratch[i] = ll;
            total += ll;
        }
        total
    }

    fn accept_full_pass(&mut self, params: DetectionParams, total: f64, sigma_changed: bool) {
        self.state.params = params;
        std::mem::swap(&mut self.row_ll, &mut self.ll_scratch);
        if sigma_changed {
            std::mem::swap(&mut self.e_row, &mut self.e_scratch);
        }
        self.state.loglik = total;
    }

    /// One log-scale random-walk step on lambda0 or sigma. The proposal is
    /// symmetric in log space; the Jacobian factor (x*/x) keeps the prior
    /// uniform on the natural scale. Proposals above the prior upper bound
    /// are rejected outright.
    fn update_detection_params(&mut self) {
        if self.hooks.fix_detection_params {
            return;
        }
        // lambda0
        {
            self.acc.lambda0.proposed += 1;
            let cur = self.state.params.lambda0;
            let step: f64 = self.rng.sample(StandardNormal);
            let cand = cur * (self.cfg.proposal_sd_log_lambda0 * step).exp();
            if cand <= self.cfg.prior_upper_lambda0 {
                let params = DetectionParams { lambda0: cand, ..self.state.params };
                let total = self.full_pass(&params, false);
                let ln_ratio = total - self.state.loglik + (cand / cur).ln();
                if self.rng.random::<f64>().ln() < ln_ratio {
                    self.accept_full_pass(params, total, false);
                    self.acc.lambda0.accepted += 1;
                }
            }
        }
        // sigma
        {
            self.acc.sigma.proposed += 1;
            let cur = self.state.params.sigma;
            let step: f64 = self.rng.sample(StandardNormal);
            // multiplicative form of the log-scale walk: commutes exactly with
            // a rescaling of the coordinate units, unlike ln()+step
            let cand = cur * (self.cfg.proposal_sd_log_sigma * step).exp();
            if cand <= self.cfg.prior_upper_sigma {
                let params = DetectionParams { sigma: cand, ..self.state.params };
                let total = self.full_pass(&params, true);
                let ln_ratio = total - self.state.loglik + (cand / cur).ln();
                if self.rng.random::<f64>().ln() < ln_ratio {
                    self.accept_full_pass(params, total, true);
                    self.acc.sigma.accepted += 1;
                }
            }
        }
    }

    /// One pairing swap proposal. Pivot: a captured unknown right row, picked
    /// uniformly. Partner: uniform over the pivot's swap neighborhood. The
    /// proposal is asymmetric, so the ratio |C_fwd|/|C_rev| enters the
    /// acceptance probability, with the reverse neighborhood evaluated in the
    /// post-swap state; if the partner is absent from the reverse
    /// neighborhood the reverse move is not proposable and the swap is
    /// rejected outright (detailed balance per pivot).
    fn propose_swap(&mut self) {
        if self.swap_pool.is_empty() {
            return;
        }
        self.acc.id_swaps.proposed += 1;
        let i = self.swap_pool[self.rng.random_range(0..self.swap_pool.len())];
        let c_fwd = identity::swap_neighborhood(
            i,
            &self.state.id,
            &self.left_cent,
            &self.right_cent,
            self.cfg.swap_radius,
        );
        if c_fwd.is_empty() {
            return;
        }
        let i2 = c_fwd[self.rng.random_range(0..c_fwd.len())];
        let (u, v) = (self.state.id.get(i), self.state.id.get(i2));

        // Candidate row log-likelihoods with the right rows exchanged.
        let cand_u = self.row_ll_after_attach(u, i2);
        let cand_v = self.row_ll_after_attach(v, i);
        let delta = cand_u + cand_v - self.row_ll[u] - self.row_ll[v];

        self.state.id.swap(i, i2);
        let c_rev = identity::swap_neighborhood(
            i,
            &self.state.id,
            &self.left_cent,
            &self.right_cent,
            self.cfg.swap_radius,
        );
        let reversible = c_rev.contains(&i2);
        let ln_ratio =
            delta + (c_fwd.len() as f64).ln() - (c_rev.len().max(1) as f64).ln();
        if reversible && self.rng.random::<f64>().ln() < ln_ratio {
            self.attached[u] = i2;
            self.attached[v] = i;
            self.state.right_star.swap_rows(u, v);
            self.state.loglik += cand_u - self.row_ll[u] + cand_v - self.row_ll[v];
            self.row_ll[u] = cand_u;
            self.row_ll[v] = cand_v;
            self.acc.id_swaps.accepted += 1;
        } else {
            self.state.id.swap(i, i2);
        }
    }

    /// Row log-likelihood of left row `u` if right row `r` were attached to it.
    fn row_ll_after_attach(&self, u: usize, r: usize) -> f64 {
        if self.state.z[u] {
            self.row_ll_z1(u, r, self.state.s[u], &self.state.params, self.e_row[u])
        } else if self.caps_right[r].is_empty() {
            // caps_left[u] is empty whenever z[u] = 0.
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn update_ids(&mut self) {
        if self.cfg.mode == Mode::AllKnown {
            return;
        }
        for _ in 0..self.cfg.n_swaps_per_iter {
            self.propose_swap();
        }
    }

    /// Exact Gibbs draw of z for every row whose paired history is all-zero:
    /// P(z = 1 | rest) = psi q / (psi q + 1 - psi) with q the probability of
    /// a double all-zero history, exp(-2K sum_j h_j). Rows with captures stay
    /// z = 1; the known block stays pinned in known-identity mode.
    fn update_z(&mut self) {
        let two_k = 2.0 * self.k_f64();
        let lambda0 = self.state.params.lambda0;
        let psi = self.state.psi;
        for i in 0..self.m() {
            let captured =
                !self.caps_left[i].is_empty() || !self.caps_right[self.attached[i]].is_empty();
            if captured {
                debug_assert!(self.state.z[i]);
                continue;
            }
            if self.cfg.mode == Mode::KnownId && i < self.data.n_known {
                debug_assert!(self.state.z[i]);
                continue;
            }
            let q = (-two_k * lambda0 * self.e_row[i]).exp();
            let p1 = psi * q / (psi * q + 1.0 - psi);
            let z_new = self.rng.random::<f64>() < p1;
            if z_new != self.state.z[i] {
                let ll_new = if z_new { -two_k * lambda0 * self.e_row[i] } else { 0.0 };
                self.state.loglik += ll_new - self.row_ll[i];
                self.row_ll[i] = ll_new;
                self.state.z[i] = z_new;
            }
        }
    }

    /// Conjugate Beta draw for psi. In known-identity mode the known block
    /// carries no information about inclusion (those individuals were found by
    /// other means), so it is left out of both counts.
    fn update_psi(&mut self) {
        let skip = if self.cfg.mode == Mode::KnownId { self.data.n_known } else { 0 };
        let a: u64 = self.state.z[skip..].iter().filter(|&&b| b).count() as u64;
        let b = (self.m() - skip) as u64 - a;
        let beta = Beta::new(1.0 + a as f64, 1.0 + b as f64).expect("valid Beta parameters");
        self.state.psi = beta.sample(&mut self.rng);
    }

    /// Per-row activity-center update: random-walk MH against the row's own
    /// likelihood for included rows (proposals outside the state space are
    /// rejected), exact uniform redraw for excluded rows.
    fn update_activity_centers(&mut self) {
        for i in 0..self.m() {
            if !self.state.z[i] {
                let p = match &self.hooks.s_grid {
                    Some(grid) => grid[self.rng.random_range(0..grid.len())],
                    None => self.space.sample_uniform(&mut self.rng),
                };
                self.state.s[i] = p;
                self.e_row[i] = self.e_of(p, self.state.params.sigma);
                debug_assert_eq!(self.row_ll[i], 0.0);
                continue;
            }
            self.acc.s_moves.proposed += 1;
            let cand = match &self.hooks.s_grid {
                Some(grid) => grid[self.rng.random_range(0..grid.len())],
                None => {
                    let dx: f64 = self.rng.sample(StandardNormal);
                    let dy: f64 = self.rng.sample(StandardNormal);
                    Point::new(
                        self.state.s[i].x + self.cfg.proposal_sd_s * dx,
                        self.state.s[i].y + self.cfg.proposal_sd_s * dy,
                    )
                }
            };
            if !self.space.contains(cand) {
                continue;
            }
            let e = self.e_of(cand, self.state.params.sigma);
            let ll = self.row_ll_z1(i, self.attached[i], cand, &self.state.params, e);
            if self.rng.random::<f64>().ln() < ll - self.row_ll[i] {
                self.state.s[i] = cand;
                self.e_row[i] = e;
                self.state.loglik += ll - self.row_ll[i];
                self.row_ll[i] = ll;
                self.acc.s_moves.accepted += 1;
            }
        }
    }

    /// One full sweep in the fixed update order.
    pub fn sweep(&mut self) {
        self.update_detection_params();
        self.update_ids();
        self.update_z();
        self.update_psi();
        self.update_activity_centers();
    }

    /// Recorded population size: included rows, counting the pinned known
    /// block (so in known-identity mode this is n_known plus the included
    /// unknowns).
    pub fn current_n(&self) -> u32 {
        self.state.z.iter().filter(|&&b| b).count() as u32
    }

    /// Recompute the total log-likelihood from scratch through the reference
    /// implementation (structural invariant checks).
    pub fn reference_loglik(&self) -> Result<f64> {
        crate::model::total_loglik(
            &self.data.left,
            &self.state.right_star,
            &self.state.z,
            &self.state.s,
            &self.traps,
            &self.state.params,
        )
    }

    /// Structural consistency of the mutable state: id is a bijection fixing
    /// the known block, right_star matches the pairing, attached is the
    /// inverse, z is 1 on every captured row, s lies in the state space, and
    /// the cached likelihood agrees with the reference within `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        self.state.id.validate()?;
        for i in 0..self.m() {
            let u = self.state.id.get(i);
            if self.attached[u] != i {
                return Err(Error::invalid(format!("attached is not the inverse of id at {i}")));
            }
            if self.state.right_star.row(u) != self.data.right.row(i) {
                return Err(Error::invalid(format!("right_star row {u} does not match pairing")));
            }
            let captured =
                !self.caps_left[i].is_empty() || !self.caps_right[self.attached[i]].is_empty();
            if captured && !self.state.z[i] {
                return Err(Error::invalid(format!("row {i} has captures but z = 0")));
            }
            if !self.space.contains(self.state.s[i]) {
                return Err(Error::invalid(format!("s[{i}] left the state space")));
            }
        }
        let reference = self.reference_loglik()?;
        if (reference - self.state.loglik).abs() > tol {
            return Err(Error::invalid(format!(
                "cached loglik {} drifted from reference {}",
                self.state.loglik, reference
            )));
        }
        Ok(())
    }

    fn record_ids(&self, iter: u64, out: &mut Vec<IdSampleRecord>) {
        for &i in &self.right_captured {
            out.push(IdSampleRecord { iter, right_index: i, left_index: self.state.id.get(i) });
        }
    }
}

/// Run a full chain and collect recorded samples.
pub fn run_chain(
    data: &AugmentedDataset,
    traps: &TrapArray,
    space: StateSpace,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    run_chain_with_hooks(data, traps, space, config, SamplerHooks::default(), None)
}

pub fn run_chain_with_progress(
    data: &AugmentedDataset,
    traps: &TrapArray,
    space: StateSpace,
    config: &SamplerConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<ChainOutput> {
    run_chain_with_hooks(data, traps, space, config, SamplerHooks::default(), Some(progress))
}

pub fn run_chain_with_hooks(
    data: &AugmentedDataset,
    traps: &TrapArray,
    space: StateSpace,
    config: &SamplerConfig,
    hooks: SamplerHooks,
    mut progress: Option<&mut dyn FnMut(Progress)>,
) -> Result<ChainOutput> {
    if config.mode == Mode::Heuristic {
        return Err(Error::invalid("use run_heuristic for heuristic mode"));
    }
    let mut sampler = Sampler::with_hooks(data, traps, space, config, hooks)?;
    let cfg = sampler.config().clone();
    let n_records = (cfg.iters - cfg.burnin) / cfg.thin;
    let mut samples = Vec::with_capacity(n_records as usize);
    let mut id_samples = cfg.record_id_samples.then(Vec::new);

    for iter in 1..=cfg.iters {
        sampler.sweep();
        if iter > cfg.burnin && (iter - cfg.burnin) % cfg.thin == 0 {
            let st = sampler.state();
            samples.push(SampleRecord {
                iter,
                lambda0: st.params.lambda0,
                sigma: st.params.sigma,
                psi: st.psi,
                n: sampler.current_n(),
                loglik: st.loglik,
            });
            if let Some(ids) = id_samples.as_mut() {
                sampler.record_ids(iter, ids);
            }
        }
        if let Some(cb) = progress.as_deref_mut() {
            cb(Progress { iter, iters: cfg.iters, acceptance: sampler.acceptance() });
        }
    }

    let n_definition = match cfg.mode {
        Mode::KnownId => "n_known + sum of z over unknown rows".to_string(),
        _ => "sum of z over all rows".to_string(),
    };
    Ok(ChainOutput {
        samples,
        id_samples,
        acceptance: sampler.acceptance(),
        config: cfg,
        n_definition,
    })
}
