//! Independent-sides baseline: each flank is treated as its own SCR dataset
//! with its own inclusion indicators and activity centers, sharing lambda0,
//! sigma, and psi. No pairing is attempted; the recorded population size is
//! the average of the two sides' inclusion counts, rounded to the nearest
//! integer.

use rand::Rng as _;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::data::EncounterMatrix;
use crate::error::{Error, Result};
use crate::geom::{Point, StateSpace, TrapArray};
use crate::model::{hazard, ln_detection_prob, DetectionParams, LnBinomTable};
use crate::rng::{rng_from_seed, Rng};

use super::{
    AcceptanceRates, ChainOutput, Mode, Progress, ResolvedConfig, SampleRecord, SamplerConfig,
};

struct Side {
    caps: Vec<Vec<(usize, u16)>>,
    c_const: Vec<f64>,
    z: Vec<bool>,
    s: Vec<Point>,
    e: Vec<f64>,
    row_ll: Vec<f64>,
    total: f64,
}

struct HeuristicSampler {
    traps: TrapArray,
    space: StateSpace,
    cfg: ResolvedConfig,
    k: f64,
    params: DetectionParams,
    psi: f64,
    left: Side,
    right: Side,
    rng: Rng,
    acc: AcceptanceRates,
}

fn e_of(traps: &TrapArray, s: Point, sigma: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    traps.iter().map(|x| (-s.dist2(x) * inv).exp()).sum()
}

fn row_ll_z1(
    traps: &TrapArray,
    caps: &[(usize, u16)],
    c_const: f64,
    s: Point,
    params: &DetectionParams,
    k: f64,
    e: f64,
) -> f64 {
    let mut ll = c_const - k * params.lambda0 * e;
    for &(j, y) in caps {
        let h = hazard(s, traps.get(j), params);
        ll += f64::from(y) * (ln_detection_prob(h) + h);
    }
    ll
}

impl Side {
    fn build(
        mat: &EncounterMatrix,
        traps: &TrapArray,
        space: &StateSpace,
        lnc: &LnBinomTable,
        rng: &mut Rng,
    ) -> Side {
        let m = mat.n_rows();
        let mut caps = Vec::with_capacity(m);
        let mut c_const = Vec::with_capacity(m);
        for i in 0..m {
            let row = mat.row(i);
            caps.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &y)| y > 0)
                    .map(|(j, &y)| (j, y))
                    .collect::<Vec<_>>(),
            );
            c_const.push(row.iter().map(|&y| lnc.get(y)).sum());
        }
        let mut z = Vec::with_capacity(m);
        for c in &caps {
            z.push(if c.is_empty() { rng.random_bool(0.5) } else { true });
        }
        let mut s = Vec::with_capacity(m);
        for c in &caps {
            if c.is_empty() {
                s.push(space.sample_uniform(rng));
            } else {
                let (mut n, mut sx, mut sy) = (0u32, 0.0, 0.0);
                for &(j, y) in c {
                    let x = traps.get(j);
                    n += u32::from(y);
                    sx += f64::from(y) * x.x;
                    sy += f64::from(y) * x.y;
                }
                s.push(Point::new(sx / f64::from(n), sy / f64::from(n)));
            }
        }
        Side {
            caps,
            c_const,
            z,
            s,
            e: vec![0.0; m],
            row_ll: vec![0.0; m],
            total: 0.0,
        }
    }

    fn rebuild(&mut self, traps: &TrapArray, params: &DetectionParams, k: f64) {
        let mut total = 0.0;
        for i in 0..self.z.len() {
            self.e[i] = e_of(traps, self.s[i], params.sigma);
            self.row_ll[i] = if self.z[i] {
                row_ll_z1(traps, &self.caps[i], self.c_const[i], self.s[i], params, k, self.e[i])
            } else {
                0.0
            };
            total += self.row_ll[i];
        }
        self.total = total;
    }

    fn n_included(&self) -> u64 {
        self.z.iter().filter(|&&b| b).count() as u64
    }
}

impl HeuristicSampler {
    /// Candidate total for one side under new parameters; scratch receives
    /// e then ll interleaved is avoided by recomputing on accept instead.
    fn side_candidate_total(&self, side: &Side, params: &DetectionParams, sigma_changed: bool) -> f64 {
        let mut total = 0.0;
        for i in 0..side.z.len() {
            if !side.z[i] {
                continue;
            }
            let e = if sigma_changed {
                e_of(&self.traps, side.s[i], params.sigma)
            } else {
                side.e[i]
            };
            total += row_ll_z1(&self.traps, &side.caps[i], side.c_const[i], side.s[i], params, self.k, e);
        }
        total
    }

    fn update_detection_params(&mut self) {
        // lambda0
        {
            self.acc.lambda0.proposed += 1;
            let cur = self.params.lambda0;
            let step: f64 = self.rng.sample(StandardNormal);
            let cand = cur * (self.cfg.proposal_sd_log_lambda0 * step).exp();
            if cand <= self.cfg.prior_upper_lambda0 {
                let params = DetectionParams { lambda0: cand, ..self.params };
                let total = self.side_candidate_total(&self.left, &params, false)
                    + self.side_candidate_total(&self.right, &params, false);
                let ln_ratio = total - (self.left.total + self.right.total) + (cand / cur).ln();
                if self.rng.random::<f64>().ln() < ln_ratio {
                    self.params = params;
                    let (k, p) = (self.k, self.params);
                    self.left.rebuild(&self.traps, &p, k);
                    self.right.rebuild(&self.traps, &p, k);
                    self.acc.lambda0.accepted += 1;
                }
            }
        }
        // sigma
        {
            self.acc.sigma.proposed += 1;
            let cur = self.params.sigma;
            let step: f64 = self.rng.sample(StandardNormal);
            let cand = cur * (self.cfg.proposal_sd_log_sigma * step).exp();
            if cand <= self.cfg.prior_upper_sigma {
                let params = DetectionParams { sigma: cand, ..self.params };
                let total = self.side_candidate_total(&self.left, &params, true)
                    + self.side_candidate_total(&self.right, &params, true);
                let ln_ratio = total - (self.left.total + self.right.total) + (cand / cur).ln();
                if self.rng.random::<f64>().ln() < ln_ratio {
                    self.params = params;
                    let (k, p) = (self.k, self.params);
                    self.left.rebuild(&self.traps, &p, k);
                    self.right.rebuild(&self.traps, &p, k);
                    self.acc.sigma.accepted += 1;
                }
            }
        }
    }

    /// Gibbs z for one side: a single all-zero history has probability
    /// exp(-K sum_j h_j) under inclusion.
    fn update_z_side(side: &mut Side, params: &DetectionParams, k: f64, psi: f64, rng: &mut Rng) {
        for i in 0..side.z.len() {
            if !side.caps[i].is_empty() {
                continue;
            }
            let q = (-k * params.lambda0 * side.e[i]).exp();
            let p1 = psi * q / (psi * q + 1.0 - psi);
            let z_new = rng.random::<f64>() < p1;
            if z_new != side.z[i] {
                let ll_new = if z_new { -k * params.lambda0 * side.e[i] } else { 0.0 };
                side.total += ll_new - side.row_ll[i];
                side.row_ll[i] = ll_new;
                side.z[i] = z_new;
            }
        }
    }

    fn update_psi(&mut self) {
        let a = self.left.n_included() + self.right.n_included();
        let b = 2 * (self.cfg.m as u64) - a;
        let beta = Beta::new(1.0 + a as f64, 1.0 + b as f64).expect("valid Beta parameters");
        self.psi = beta.sample(&mut self.rng);
    }

    fn update_s_side(
        side: &mut Side,
        traps: &TrapArray,
        space: &StateSpace,
        cfg: &ResolvedConfig,
        params: &DetectionParams,
        k: f64,
        rng: &mut Rng,
        acc: &mut AcceptanceRates,
    ) {
        for i in 0..side.z.len() {
            if !side.z[i] {
                side.s[i] = space.sample_uniform(rng);
                side.e[i] = e_of(traps, side.s[i], params.sigma);
                continue;
            }
            acc.s_moves.proposed += 1;
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let cand = Point::new(
                side.s[i].x + cfg.proposal_sd_s * dx,
                side.s[i].y + cfg.proposal_sd_s * dy,
            );
            if !space.contains(cand) {
                continue;
            }
            let e = e_of(traps, cand, params.sigma);
            let ll = row_ll_z1(traps, &side.caps[i], side.c_const[i], cand, params, k, e);
            if rng.random::<f64>().ln() < ll - side.row_ll[i] {
                side.s[i] = cand;
                side.e[i] = e;
                side.total += ll - side.row_ll[i];
                side.row_ll[i] = ll;
                acc.s_moves.accepted += 1;
            }
        }
    }

    fn sweep(&mut self) {
        self.update_detection_params();
        Self::update_z_side(&mut self.left, &self.params, self.k, self.psi, &mut self.rng);
        Self::update_z_side(&mut self.right, &self.params, self.k, self.psi, &mut self.rng);
        self.update_psi();
        Self::update_s_side(
            &mut self.left, &self.traps, &self.space, &self.cfg, &self.params, self.k,
            &mut self.rng, &mut self.acc,
        );
        Self::update_s_side(
            &mut self.right, &self.traps, &self.space, &self.cfg, &self.params, self.k,
            &mut self.rng, &mut self.acc,
        );
    }

    fn current_n(&self) -> u32 {
        let total = self.left.n_included() + self.right.n_included();
        ((total as f64) / 2.0).round() as u32
    }
}

/// Run the independent-sides sampler. Both matrices must already be augmented
/// to `config.m` rows. `config.mode` must be [`Mode::Heuristic`].
pub fn run_heuristic(
    left: &EncounterMatrix,
    right: &EncounterMatrix,
    traps: &TrapArray,
    space: StateSpace,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    run_heuristic_with_progress(left, right, traps, space, config, None)
}

pub fn run_heuristic_with_progress(
    left: &EncounterMatrix,
    right: &EncounterMatrix,
    traps: &TrapArray,
    space: StateSpace,
    config: &SamplerConfig,
    mut progress: Option<&mut dyn FnMut(Progress)>,
) -> Result<ChainOutput> {
    config.validate()?;
    if config.mode != Mode::Heuristic {
        return Err(Error::invalid("run_heuristic requires heuristic mode"));
    }
    if config.record_id_samples {
        return Err(Error::invalid(
            "the heuristic sampler has no identity pairing to record",
        ));
    }
    for (name, mat) in [("left", left), ("right", right)] {
        if mat.n_rows() != config.m {
            return Err(Error::invalid(format!(
                "{name} matrix has {} rows but config declares M = {}",
                mat.n_rows(),
                config.m
            )));
        }
    }
    if left.n_traps() != right.n_traps() || left.k() != right.k() {
        return Err(Error::invalid("left and right matrices must share traps and K"));
    }
    if left.n_traps() != traps.len() {
        return Err(Error::invalid(format!(
            "dataset has {} trap columns but the trap array has {}",
            left.n_traps(),
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
        record_id_samples: false,
        lambda0_init,
        sigma_init,
    };

    let lnc = LnBinomTable::new(left.k())?;
    let mut rng = rng_from_seed(config.seed);
    let params = DetectionParams::new(lambda0_init, sigma_init)?;
    let mut left_side = Side::build(left, traps, &space, &lnc, &mut rng);
    let mut right_side = Side::build(right, traps, &space, &lnc, &mut rng);
    let k = f64::from(left.k());
    left_side.rebuild(traps, &params, k);
    right_side.rebuild(traps, &params, k);
    let n0 = left_side.n_included() + right_side.n_included();
    let psi = (n0 as f64 + 1.0) / (2.0 * config.m as f64 + 2.0);

    let mut sampler = HeuristicSampler {
        traps: traps.clone(),
        space,
        cfg: cfg.clone(),
        k,
        params,
        psi,
        left: left_side,
        right: right_side,
        rng,
        acc: AcceptanceRates::default(),
    };

    let n_records = (cfg.iters - cfg.burnin) / cfg.thin;
    let mut samples = Vec::with_capacity(n_records as usize);
    for iter in 1..=cfg.iters {
        sampler.sweep();
        if iter > cfg.burnin && (iter - cfg.burnin) % cfg.thin == 0 {
            samples.push(SampleRecord {
                iter,
                lambda0: sampler.params.lambda0,
                sigma: sampler.params.sigma,
                psi: sampler.psi,
                n: sampler.current_n(),
                loglik: sampler.left.total + sampler.right.total,
            });
        }
        if let Some(cb) = progress.as_deref_mut() {
            cb(Progress { iter, iters: cfg.iters, acceptance: sampler.acc });
        }
    }

    Ok(ChainOutput {
        samples,
        id_samples: None,
        acceptance: sampler.acc,
        config: cfg,
        n_definition: "rounded average of the two sides' inclusion counts".to_string(),
    })
}
