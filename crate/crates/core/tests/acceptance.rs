//! End-to-end acceptance suite. Each test covers one numbered criterion and
//! prints a single line
//!
//!     [criterion N] <name>: PASS|FAIL — <measurements>
//!
//! (visible with `cargo test --test acceptance -- --nocapture`). Every
//! tolerance is a named constant pinned next to the check it governs, and the
//! stochastic criteria run under fixed seeds so the suite is deterministic.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng as _;
use statrs::distribution::{Binomial, Discrete};

use flankmatch_core::analysis::{run_study, score_id_recovery, StudyConfig, StudyMetrics, StudyResult};
use flankmatch_core::data::{AugmentedDataset, EncounterMatrix};
use flankmatch_core::geom::{Point, StateSpace, TrapArray};
use flankmatch_core::identity::reorder_right;
use flankmatch_core::io;
use flankmatch_core::model::{total_loglik, DetectionParams};
use flankmatch_core::rng::{derive_seed, rng_from_seed, Rng};
use flankmatch_core::sampler::{
    run_chain, run_chain_with_hooks, Mode, Sampler, SamplerConfig, SamplerHooks,
};
use flankmatch_core::simulate::{expected_side_captures, scramble, simulate};

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "[criterion {criterion}] {name}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "[criterion {criterion}] {name}: {detail}");
}

fn grid5() -> (TrapArray, StateSpace) {
    let traps = TrapArray::unit_grid(5).unwrap();
    let space = StateSpace::buffered(&traps, 2.0).unwrap();
    (traps, space)
}

// ---------------------------------------------------------------------------
// Criterion 1: on random small instances the total log-likelihood equals a
// brute-force product of binomial pmfs within relative error 1e-10, in < 1 s.
// ---------------------------------------------------------------------------

const C1_REL_TOL: f64 = 1e-10;
const C1_TIME_BUDGET_S: f64 = 1.0;

/// ln C(k, y) as a direct integer ratio; exact in f64 for the small k used
/// here (the library builds the coefficient from cumulative ln-factorials).
fn ln_choose(k: u16, y: u16) -> f64 {
    let mut c = 1.0f64;
    for t in 0..y {
        c *= f64::from(k - t) / f64::from(t + 1);
    }
    c.ln()
}

/// Brute-force total log-likelihood sharing no assembly with the library:
/// dense per-trap loops, factorial-ratio coefficients, and a branch-selected
/// stable form of ln(1-p) (ln1p(expm1(-h)) below h = 1/2, ln(exp(-h)) above;
/// each branch holds full relative precision on its side), so the comparison
/// stays meaningful at 1e-10 relative error across all hazard scales.
fn oracle_total(
    left: &EncounterMatrix,
    right_star: &EncounterMatrix,
    z: &[bool],
    s: &[Point],
    traps: &TrapArray,
    params: &DetectionParams,
) -> f64 {
    let k = left.k();
    let mut total = 0.0;
    for i in 0..left.n_rows() {
        let (yl, yr) = (left.row(i), right_star.row(i));
        if !z[i] {
            if yl.iter().all(|&y| y == 0) && yr.iter().all(|&y| y == 0) {
                continue;
            }
            return f64::NEG_INFINITY;
        }
        for (j, x) in traps.iter().enumerate() {
            let dx = s[i].x - x.x;
            let dy = s[i].y - x.y;
            let h = params.lambda0
                * (-(dx * dx + dy * dy) / (2.0 * params.sigma * params.sigma)).exp();
            let p = -(-h).exp_m1();
            let ln_q = if h < 0.5 { (-h).exp_m1().ln_1p() } else { (-h).exp().ln() };
            for y in [yl[j], yr[j]] {
                total += ln_choose(k, y) + f64::from(k - y) * ln_q;
                if y > 0 {
                    total += f64::from(y) * p.ln();
                }
            }
        }
    }
    total
}

/// Same brute force through statrs' Binomial pmf. Linear-space ln(1-p) loses
/// relative precision once any hazard is tiny or p is within ~1e-5 of 1, so
/// this cross-check is only applied to instances whose active hazards all lie
/// in [1e-6, 10] and compared with a floor on the relative scale.
fn statrs_total(
    left: &EncounterMatrix,
    right_star: &EncounterMatrix,
    z: &[bool],
    s: &[Point],
    traps: &TrapArray,
    params: &DetectionParams,
) -> f64 {
    let k = left.k();
    let mut total = 0.0;
    for i in 0..left.n_rows() {
        let (yl, yr) = (left.row(i), right_star.row(i));
        if !z[i] {
            continue; // caller guarantees the all-zero case
        }
        for (j, x) in traps.iter().enumerate() {
            let dx = s[i].x - x.x;
            let dy = s[i].y - x.y;
            let h = params.lambda0
                * (-(dx * dx + dy * dy) / (2.0 * params.sigma * params.sigma)).exp();
            let p = -(-h).exp_m1();
            let binom = Binomial::new(p, u64::from(k)).unwrap();
            total += binom.ln_pmf(u64::from(yl[j])) + binom.ln_pmf(u64::from(yr[j]));
        }
    }
    total
}

fn random_counts(rng: &mut Rng, m: usize, j: usize, k: u16) -> EncounterMatrix {
    let rows: Vec<Vec<u16>> = (0..m)
        .map(|_| {
            (0..j)
                .map(|_| if rng.random_bool(0.5) { 0 } else { rng.random_range(1..=k) })
                .collect()
        })
        .collect();
    EncounterMatrix::new(rows, j, k).unwrap()
}

#[test]
fn criterion_1_likelihood_oracle() {
    let t0 = Instant::now();
    let mut rng = rng_from_seed(0xACCE_0001);
    let mut worst_rel = 0.0f64;
    let mut worst_statrs = 0.0f64;
    let mut n_inf = 0usize;
    let mut n_statrs = 0usize;

    for _ in 0..100 {
        let m = rng.random_range(1..=4usize);
        let j = rng.random_range(1..=3usize);
        let k: u16 = rng.random_range(1..=3);
        let traps = TrapArray::new(
            (0..j)
                .map(|_| Point::new(rng.random_range(0.0..1.5), rng.random_range(0.0..1.5)))
                .collect(),
        )
        .unwrap();
        let params =
            DetectionParams::new(rng.random_range(0.05..3.0), rng.random_range(0.25..1.5))
                .unwrap();
        let s: Vec<Point> = (0..m)
            .map(|_| Point::new(rng.random_range(-1.0..2.5), rng.random_range(-1.0..2.5)))
            .collect();
        let left = random_counts(&mut rng, m, j, k);
        let right_star = random_counts(&mut rng, m, j, k);
        let z: Vec<bool> = (0..m).map(|_| rng.random_bool(0.8)).collect();

        let ours = total_loglik(&left, &right_star, &z, &s, &traps, &params).unwrap();
        let oracle = oracle_total(&left, &right_star, &z, &s, &traps, &params);

        if oracle == f64::NEG_INFINITY || ours == f64::NEG_INFINITY {
            assert_eq!(ours, oracle, "impossible-state sentinel must agree");
            n_inf += 1;
            continue;
        }
        let rel = if oracle == 0.0 {
            if ours == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            ((ours - oracle) / oracle).abs()
        };
        worst_rel = worst_rel.max(rel);

        // statrs cross-check on instances inside its precision regime.
        let benign = (0..m).filter(|&i| z[i]).all(|i| {
            traps.iter().all(|x| {
                let h = params.lambda0
                    * (-s[i].dist2(x) / (2.0 * params.sigma * params.sigma)).exp();
                (1e-6..=10.0).contains(&h)
            })
        });
        if benign {
            n_statrs += 1;
            let st = statrs_total(&left, &right_star, &z, &s, &traps, &params);
            worst_statrs = worst_statrs.max((ours - st).abs() / st.abs().max(1.0));
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst_rel <= C1_REL_TOL
        && worst_statrs <= 1e-9
        && n_statrs >= 20
        && elapsed < C1_TIME_BUDGET_S;
    report(
        1,
        "likelihood oracle",
        pass,
        &format!(
            "100 instances: worst relative error {worst_rel:.2e} (tol {C1_REL_TOL:.0e}), \
             {n_inf} impossible states matched exactly; statrs cross-check on {n_statrs} \
             in-regime instances, worst {worst_statrs:.2e}; {:.0} ms (budget 1 s)",
            elapsed * 1e3
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: on a discretized toy (2 traps, K = 1, M = 3, activity centers
// on 4 grid points, detection parameters held fixed) the chain's marginals of
// N and of the captured right row's assignment match full enumeration of the
// posterior within total variation 0.05 at 2e5 recorded sweeps, in < 5 min.
// ---------------------------------------------------------------------------

const C2_TV_TOL: f64 = 0.05;
const C2_TIME_BUDGET_S: f64 = 300.0;

#[test]
fn criterion_2_exact_posterior_enumeration() {
    let t0 = Instant::now();
    let traps = TrapArray::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
    let space = StateSpace::new(-1.0, 2.0, -1.0, 1.0).unwrap();
    let grid = vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(-0.5, 0.5),
        Point::new(1.5, -0.5),
    ];
    let k = 1u16;
    let m = 3usize;
    let left = EncounterMatrix::new(vec![vec![1, 0], vec![0, 1], vec![0, 0]], 2, k).unwrap();
    let right = EncounterMatrix::new(vec![vec![1, 0], vec![0, 0], vec![0, 0]], 2, k).unwrap();
    let data = AugmentedDataset::new(left.clone(), right.clone(), 2, 1, 0).unwrap();
    let params = DetectionParams::new(0.2, 0.5).unwrap();

    // Exact enumeration over (pairing, z, s^M) with psi integrated out: a
    // uniform prior on psi makes P(z | N included) proportional to A! B! with
    // A = sum(z), B = M - A. Uniform priors over pairings and grid points are
    // constants and cancel in the normalization.
    let perms: [[usize; 3]; 6] =
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let fact = [1.0f64, 1.0, 2.0, 6.0];
    struct Cell {
        ll: f64,
        psi_weight: f64,
        n: usize,
        id0: usize,
    }
    let mut cells: Vec<Cell> = Vec::new();
    let mut ll_max = f64::NEG_INFINITY;
    for perm in &perms {
        // star row perm[r] is right row r (the right history attached there).
        let mut star_rows = vec![vec![0u16; 2]; m];
        for r in 0..m {
            star_rows[perm[r]] = right.row(r).to_vec();
        }
        let star = EncounterMatrix::new(star_rows, 2, k).unwrap();
        for zbits in 0..8u32 {
            let z: Vec<bool> = (0..m).map(|i| zbits >> i & 1 == 1).collect();
            for a in 0..grid.len() {
                for b in 0..grid.len() {
                    for c in 0..grid.len() {
                        let s = vec![grid[a], grid[b], grid[c]];
                        let ll = total_loglik(&left, &star, &z, &s, &traps, &params).unwrap();
                        if ll == f64::NEG_INFINITY {
                            continue;
                        }
                        let n = z.iter().filter(|&&v| v).count();
                        cells.push(Cell {
                            ll,
                            psi_weight: fact[n] * fact[m - n],
                            n,
                            id0: perm[0],
                        });
                        ll_max = ll_max.max(ll);
                    }
                }
            }
        }
    }
    let mut p_n = [0.0f64; 4];
    let mut p_id = [0.0f64; 3];
    let mut norm = 0.0;
    for cell in &cells {
        let w = (cell.ll - ll_max).exp() * cell.psi_weight;
        norm += w;
        p_n[cell.n] += w;
        p_id[cell.id0] += w;
    }
    for v in p_n.iter_mut() {
        *v /= norm;
    }
    for v in p_id.iter_mut() {
        *v /= norm;
    }

    // The chain, with detection parameters pinned at the enumeration's values
    // (init = upper/2) and activity centers restricted to the same grid.
    let mut cfg = SamplerConfig::new(205_000, 5_000, m, Mode::Full, 0xE11C);
    cfg.prior_upper_lambda0 = 0.4; // init 0.2
    cfg.prior_upper_sigma = Some(1.0); // init 0.5
    cfg.n_swaps_per_iter = 4;
    cfg.swap_radius = Some(1e6); // every pairing reachable
    cfg.record_id_samples = true;
    let hooks = SamplerHooks { s_grid: Some(grid.clone()), fix_detection_params: true };
    let out = run_chain_with_hooks(&data, &traps, space, &cfg, hooks, None).unwrap();
    assert!(out.samples.iter().all(|r| r.lambda0 == 0.2 && r.sigma == 0.5));
    assert_eq!(out.samples.len(), 200_000);

    let mut q_n = [0.0f64; 4];
    for r in &out.samples {
        q_n[r.n as usize] += 1.0;
    }
    for v in q_n.iter_mut() {
        *v /= out.samples.len() as f64;
    }
    let ids = out.id_samples.as_ref().unwrap();
    assert!(ids.iter().all(|r| r.right_index == 0));
    let mut q_id = [0.0f64; 3];
    for r in ids {
        q_id[r.left_index] += 1.0;
    }
    for v in q_id.iter_mut() {
        *v /= ids.len() as f64;
    }

    let tv_n: f64 = 0.5 * p_n.iter().zip(&q_n).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let tv_id: f64 = 0.5 * p_id.iter().zip(&q_id).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = tv_n <= C2_TV_TOL && tv_id <= C2_TV_TOL && elapsed < C2_TIME_BUDGET_S;
    report(
        2,
        "exact-posterior enumeration",
        pass,
        &format!(
            "TV(N) = {tv_n:.4}, TV(assignment of right row 1) = {tv_id:.4} (tol {C2_TV_TOL}) \
             over 200000 recorded sweeps; exact P(N) = [{:.4}, {:.4}] on {{2,3}}, chain [{:.4}, {:.4}]; {elapsed:.1} s (budget 300 s)",
            p_n[2], p_n[3], q_n[2], q_n[3]
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: single-dataset replication band. Simulate the standard design
// (5x5 unit grid, buffer 2, N = 60, lambda0 = 0.2, sigma = 0.5, M = 120, K
// calibrated by quadrature so E(observed left rows) sits inside [20, 36])
// over 20 seeds; the 95% interval for N must cover 60 in >= 16 of 20 runs
// (binomial 2-sigma floor) and every posterior mean must land in [42, 78].
// ---------------------------------------------------------------------------

const C3_K: u16 = 10; // E(n_left) ~ 28.1 by quadrature, centering [20, 36]
const C3_COVER_MIN: usize = 16;
const C3_MEAN_BAND: (f64, f64) = (42.0, 78.0);
const C3_NLEFT_BAND: (f64, f64) = (20.0, 36.0);

#[test]
fn criterion_3_replication_band() {
    let t0 = Instant::now();
    let cfg = StudyConfig {
        name: "replication-band".to_string(),
        n_true: 60,
        lambda0: 0.2,
        sigma: 0.5,
        k: C3_K,
        grid_side: 5,
        trap_spacing: 1.0,
        buffer: 2.0,
        m: 120,
        n_known: 0,
        n_replicates: 20,
        iters: 12_000,
        burnin: 2_000,
        thin: 1,
        estimators: vec![Mode::Full],
        master_seed: 60_2020,
    };
    let res = run_study(&cfg).unwrap();
    let covered = res.rows.iter().filter(|r| r.covered).count();
    let means: Vec<f64> = res.rows.iter().map(|r| r.post_mean).collect();
    let (mean_lo, mean_hi) = means
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let means_ok = mean_lo >= C3_MEAN_BAND.0 && mean_hi <= C3_MEAN_BAND.1;
    let n_left_mean =
        res.rows.iter().map(|r| r.n_left_obs as f64).sum::<f64>() / res.rows.len() as f64;
    let n_left_ok = (C3_NLEFT_BAND.0..=C3_NLEFT_BAND.1).contains(&n_left_mean);

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = covered >= C3_COVER_MIN && means_ok && n_left_ok;
    report(
        3,
        "replication band",
        pass,
        &format!(
            "coverage {covered}/20 (floor {C3_COVER_MIN}); posterior means in \
             [{mean_lo:.1}, {mean_hi:.1}] (band [{}, {}]); mean observed left rows \
             {n_left_mean:.1} at K = {C3_K} (calibration band [{}, {}]); {elapsed:.0} s",
            C3_MEAN_BAND.0, C3_MEAN_BAND.1, C3_NLEFT_BAND.0, C3_NLEFT_BAND.1
        ),
    );
}

// ---------------------------------------------------------------------------
// Criteria 4 and 5 share one replicate study: N = 120, sigma = 0.7,
// lambda0 = 0.2 on the 5x5 unit grid with buffer 2, M = 240, K = 11
// (quadrature-calibrated to E ~ 77.5 observed rows per side), R = 20
// replicates at 6000 iterations / 1000 burn-in, with all four estimator arms
// run on common simulated truths.
// ---------------------------------------------------------------------------

const C45_K: u16 = 11;
const C4_MODE_BAND: (f64, f64) = (114.0, 126.0); // 120 +/- 6
const C4_COVERAGE_FLOOR: f64 = 0.75; // binomial 2-sigma floor at R = 20
const C4_MAX_INVERSIONS: usize = 1;
const C5_COVERAGE_SLACK: f64 = 0.05;

fn case1_study() -> &'static (StudyResult, f64) {
    static STUDY: OnceLock<(StudyResult, f64)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let t0 = Instant::now();
        let cfg = StudyConfig {
            name: "four-arm-comparison".to_string(),
            n_true: 120,
            lambda0: 0.2,
            sigma: 0.7,
            k: C45_K,
            grid_side: 5,
            trap_spacing: 1.0,
            buffer: 2.0,
            m: 240,
            n_known: 10,
            n_replicates: 20,
            iters: 6_000,
            burnin: 1_000,
            thin: 1,
            estimators: vec![Mode::Full, Mode::KnownId, Mode::AllKnown, Mode::Heuristic],
            master_seed: 120_2020,
        };
        (run_study(&cfg).unwrap(), t0.elapsed().as_secs_f64())
    })
}

fn arm(res: &StudyResult, mode: Mode) -> &StudyMetrics {
    res.metrics.iter().find(|m| m.estimator == mode).unwrap()
}

#[test]
fn criterion_4_estimator_comparison() {
    let (res, study_secs) = case1_study();
    let full = arm(res, Mode::Full);
    let known = arm(res, Mode::KnownId);
    let all = arm(res, Mode::AllKnown);

    let mode_ok = (C4_MODE_BAND.0..=C4_MODE_BAND.1).contains(&full.mean_posterior_mode);
    let cover_ok = full.coverage95 >= C4_COVERAGE_FLOOR;
    // Information ordering of the three designs: pre-matching identities can
    // only sharpen the posterior. One inversion tolerated at R = 20.
    let inversions = usize::from(all.mean_posterior_sd > known.mean_posterior_sd)
        + usize::from(known.mean_posterior_sd > full.mean_posterior_sd);
    let order_ok = inversions <= C4_MAX_INVERSIONS;

    let pass = mode_ok && cover_ok && order_ok;
    report(
        4,
        "estimator comparison",
        pass,
        &format!(
            "full-model mean posterior mode {:.2} (band [{}, {}]); full coverage {:.2} \
             (floor {C4_COVERAGE_FLOOR}); mean posterior SD all-known {:.3} <= known-10 {:.3} \
             <= full {:.3} with {inversions} inversion(s) (max {C4_MAX_INVERSIONS}); \
             R = 20, K = {C45_K}, shared study took {study_secs:.0} s",
            full.mean_posterior_mode,
            C4_MODE_BAND.0,
            C4_MODE_BAND.1,
            full.coverage95,
            all.mean_posterior_sd,
            known.mean_posterior_sd,
            full.mean_posterior_sd
        ),
    );
}

#[test]
fn criterion_5_heuristic_liberality() {
    let (res, study_secs) = case1_study();
    let full = arm(res, Mode::Full);
    let heur = arm(res, Mode::Heuristic);

    // Ignoring the pairing problem discards a source of uncertainty, so the
    // heuristic posterior must look tighter while covering no better.
    let sd_ok = heur.mean_posterior_sd < full.mean_posterior_sd;
    let cover_ok = heur.coverage95 <= full.coverage95 + C5_COVERAGE_SLACK;

    let pass = sd_ok && cover_ok;
    report(
        5,
        "heuristic liberality",
        pass,
        &format!(
            "heuristic mean posterior SD {:.3} < full {:.3}; heuristic coverage {:.2} <= \
             full {:.2} + {C5_COVERAGE_SLACK}; shared study took {study_secs:.0} s",
            heur.mean_posterior_sd, full.mean_posterior_sd, heur.coverage95, full.coverage95
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: identity recovery. On 10 datasets from the criterion-3 design,
// pooled over unknown right rows with >= 2 captures whose true owner was
// photographed on the left: the mean posterior probability on the true left
// row must exceed the uniform baseline (1 / (unknown captured left rows + 1))
// by a factor >= 3, and the modal assignment must be correct >= 40% of rows.
// ---------------------------------------------------------------------------

const C6_FACTOR: f64 = 3.0;
const C6_MODAL_FLOOR: f64 = 0.40;
const C6_MASTER: u64 = 0x1D_5EED;

#[test]
fn criterion_6_identity_recovery() {
    let t0 = Instant::now();
    let (traps, space) = grid5();
    let params = DetectionParams::new(0.2, 0.5).unwrap();

    let mut n_rows = 0usize;
    let mut sum_p = 0.0f64;
    let mut sum_base = 0.0f64;
    let mut n_modal = 0usize;
    for rep in 0..10u64 {
        let mut rng = rng_from_seed(derive_seed(C6_MASTER, &[rep]));
        let truth = simulate(60, &traps, space, &params, C3_K, &mut rng).unwrap();
        let sc = scramble(&truth, 0, 120, &mut rng).unwrap();
        let mut cfg =
            SamplerConfig::new(6_000, 1_000, 120, Mode::Full, derive_seed(C6_MASTER, &[rep, 1]));
        cfg.record_id_samples = true;
        cfg.thin = 5;
        let out = run_chain(&sc.data, &traps, space, &cfg).unwrap();
        let score =
            score_id_recovery(out.id_samples.as_ref().unwrap(), &sc.key, &sc.data, 2).unwrap();
        n_rows += score.n_scored;
        sum_p += score.mean_p_true * score.n_scored as f64;
        sum_base += score.baseline * score.n_scored as f64;
        n_modal += score.rows.iter().filter(|r| r.modal_correct).count();
    }
    let mean_p = sum_p / n_rows as f64;
    let baseline = sum_base / n_rows as f64;
    let modal_acc = n_modal as f64 / n_rows as f64;

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = n_rows >= 50 && mean_p >= C6_FACTOR * baseline && modal_acc >= C6_MODAL_FLOOR;
    report(
        6,
        "identity recovery",
        pass,
        &format!(
            "{n_rows} scored rows over 10 datasets: mean P(true pairing) {mean_p:.3} vs uniform \
             baseline {baseline:.3} (factor {:.1}, floor {C6_FACTOR}); modal assignment correct \
             {:.0}% (floor {:.0}%); {elapsed:.0} s",
            mean_p / baseline,
            modal_acc * 100.0,
            C6_MODAL_FLOOR * 100.0
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: structural invariants stay green, in < 1 min. After every
// sweep: the pairing is a bijection fixing the known block, z = 1 on every
// captured row, the reordered right matrix and inverse map match the pairing,
// activity centers stay in the state space, and the incremental likelihood
// cache agrees with the reference recomputation within 1e-8 (checked every
// sweep, which is stricter than the 1e-8-per-1000-updates drift bound).
// Plus: reorder/inverse round-trip, file-format round-trips (bitwise for
// floats), and bit-identical chain reruns under a fixed seed.
// ---------------------------------------------------------------------------

const C7_CACHE_TOL: f64 = 1e-8;
const C7_TIME_BUDGET_S: f64 = 60.0;

#[test]
fn criterion_7_structural_invariants() {
    let t0 = Instant::now();
    let (traps, space) = grid5();
    let params = DetectionParams::new(0.3, 0.6).unwrap();
    let mut rng = rng_from_seed(71);
    let truth = simulate(40, &traps, space, &params, 3, &mut rng).unwrap();
    let sc_full = scramble(&truth, 0, 80, &mut rng).unwrap();
    let sc_known = scramble(&truth, 6, 80, &mut rng).unwrap();
    let mut fails: Vec<String> = Vec::new();

    // (a) per-sweep invariants in both latent-pairing modes.
    let mut sweeps_checked = 0usize;
    for (data, mode) in [(&sc_full.data, Mode::Full), (&sc_known.data, Mode::KnownId)] {
        let cfg = SamplerConfig::new(1_000, 10, 80, mode, 72);
        let mut sampler = Sampler::new(data, &traps, space, &cfg).unwrap();
        for sweep in 0..500 {
            sampler.sweep();
            if let Err(e) = sampler.check_invariants(C7_CACHE_TOL) {
                fails.push(format!("invariants broke in {} at sweep {sweep}: {e}", mode.as_str()));
                break;
            }
            sweeps_checked += 1;
        }
    }

    // (b) reorder/inverse round-trip through the scramble answer key.
    let star = reorder_right(&sc_full.data.right, &sc_full.key);
    if star.permuted(sc_full.key.as_slice()) != sc_full.data.right {
        fails.push("reorder/inverse round-trip changed the right matrix".to_string());
    }

    // (c) file-format round-trips, bitwise for floating point.
    let dir = tempfile::tempdir().unwrap();
    let irregular = TrapArray::new(
        (0..7)
            .map(|_| Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect(),
    )
    .unwrap();
    let traps_path = dir.path().join("traps.csv");
    io::write_traps(&traps_path, &irregular).unwrap();
    let traps_back = io::parse_traps(&traps_path).unwrap();
    let traps_ok = irregular.len() == traps_back.len()
        && irregular
            .iter()
            .zip(traps_back.iter())
            .all(|(a, b)| a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits());
    if !traps_ok {
        fails.push("trap coordinates did not survive a write/parse round-trip".to_string());
    }
    let enc_path = dir.path().join("left.csv");
    io::write_encounters(&enc_path, &sc_full.data.left).unwrap();
    if io::parse_encounters(&enc_path, truth.k()).unwrap() != sc_full.data.left {
        fails.push("encounter matrix did not survive a write/parse round-trip".to_string());
    }

    let mut cfg = SamplerConfig::new(400, 100, 80, Mode::Full, 0x7777);
    cfg.record_id_samples = true;
    let out_a = run_chain(&sc_full.data, &traps, space, &cfg).unwrap();
    let chain_path = dir.path().join("chain.csv");
    io::write_chain(&chain_path, &out_a.samples).unwrap();
    let chain_back = io::parse_chain(&chain_path).unwrap();
    let chain_ok = chain_back.len() == out_a.samples.len()
        && chain_back.iter().zip(&out_a.samples).all(|(a, b)| {
            a.iter == b.iter
                && a.lambda0.to_bits() == b.lambda0.to_bits()
                && a.sigma.to_bits() == b.sigma.to_bits()
                && a.psi.to_bits() == b.psi.to_bits()
                && a.n == b.n
                && a.loglik.to_bits() == b.loglik.to_bits()
        });
    if !chain_ok {
        fails.push("chain samples did not survive a write/parse round-trip bitwise".to_string());
    }
    let ids_path = dir.path().join("id_samples.csv");
    io::write_id_samples(&ids_path, out_a.id_samples.as_ref().unwrap()).unwrap();
    if &io::parse_id_samples(&ids_path).unwrap() != out_a.id_samples.as_ref().unwrap() {
        fails.push("pairing samples did not survive a write/parse round-trip".to_string());
    }

    // (d) chain reruns under a fixed seed are bit-identical.
    let out_b = run_chain(&sc_full.data, &traps, space, &cfg).unwrap();
    let rerun_ok = out_a.samples.len() == out_b.samples.len()
        && out_a.samples.iter().zip(&out_b.samples).all(|(a, b)| {
            a.lambda0.to_bits() == b.lambda0.to_bits()
                && a.sigma.to_bits() == b.sigma.to_bits()
                && a.psi.to_bits() == b.psi.to_bits()
                && a.n == b.n
                && a.loglik.to_bits() == b.loglik.to_bits()
        })
        && out_a.id_samples == out_b.id_samples;
    if !rerun_ok {
        fails.push("rerun with the same seed was not bit-identical".to_string());
    }

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = fails.is_empty() && elapsed < C7_TIME_BUDGET_S;
    report(
        7,
        "structural invariants",
        pass,
        &if fails.is_empty() {
            format!(
                "{sweeps_checked} sweeps invariant-checked across full and known-identity modes \
                 (cache tol {C7_CACHE_TOL:.0e}); reorder and file round-trips bitwise clean; \
                 rerun bit-identical; {elapsed:.1} s (budget 60 s)"
            )
        } else {
            fails.join("; ")
        },
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: simulator calibration, in < 1 min. On 3 parameter settings the
// Monte Carlo mean of observed left rows matches the deterministic quadrature
// oracle (expected_side_captures) within 2 empirical standard errors.
// ---------------------------------------------------------------------------

const C8_SE_BAND: f64 = 2.0;
const C8_REPS: usize = 300;
const C8_TIME_BUDGET_S: f64 = 60.0;

#[test]
fn criterion_8_simulator_calibration() {
    let t0 = Instant::now();
    let (traps, space) = grid5();
    let settings: [(f64, f64, u16, usize); 3] =
        [(0.2, 0.5, C3_K, 60), (0.2, 0.7, C45_K, 120), (0.75, 1.0, 2, 40)];
    let mut fails = 0usize;
    let mut lines: Vec<String> = Vec::new();
    for (idx, &(lambda0, sigma, k, n)) in settings.iter().enumerate() {
        let params = DetectionParams::new(lambda0, sigma).unwrap();
        let expect = expected_side_captures(n, &traps, space, &params, k, 256);
        let mut rng = rng_from_seed(derive_seed(0xCA11B, &[idx as u64]));
        let counts: Vec<f64> = (0..C8_REPS)
            .map(|_| {
                simulate(n, &traps, space, &params, k, &mut rng).unwrap().n_captured_left()
                    as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / C8_REPS as f64;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
            / (C8_REPS as f64 - 1.0);
        let se = (var / C8_REPS as f64).sqrt();
        let dev = (mean - expect).abs() / se;
        if dev > C8_SE_BAND {
            fails += 1;
        }
        lines.push(format!(
            "(lambda0 {lambda0}, sigma {sigma}, K {k}, N {n}): quadrature {expect:.2}, \
             Monte Carlo {mean:.2} ({dev:.2} SE)"
        ));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = fails == 0 && elapsed < C8_TIME_BUDGET_S;
    report(
        8,
        "simulator calibration",
        pass,
        &format!(
            "{} within {C8_SE_BAND} SE over {C8_REPS} replicates each; {elapsed:.1} s (budget 60 s)",
            lines.join("; ")
        ),
    );
}
