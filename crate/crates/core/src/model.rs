//! Half-normal hazard detection model and the observation log-likelihood.
//!
//! Encounter counts are Binomial(K, p) per individual, trap, and side, with
//! p(s, x) = 1 - exp(-h(s, x)) and hazard h(s, x) = lambda0 *
//! exp(-||s - x||^2 / (2 sigma^2)). Both flanks share the same hazard. All
//! likelihood code works in log space; ln(1 - p) is computed as -h exactly,
//! so augmented all-zero histories never lose precision. Impossible
//! configurations are f64::NEG_INFINITY, which IEEE addition propagates
//! through sums.

use serde::{Deserialize, Serialize};

use crate::data::EncounterMatrix;
use crate::error::{Error, Result};
use crate::geom::{Point, TrapArray};

/// Largest supported number of occasions; bounds the binomial-coefficient
/// cache.
pub const MAX_K: u16 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Baseline encounter rate: hazard at zero distance.
    pub lambda0: f64,
    /// Spatial scale of the half-normal hazard decay.
    pub sigma: f64,
}

impl DetectionParams {
    pub fn new(lambda0: f64, sigma: f64) -> Result<Self> {
        if !(lambda0.is_finite() && lambda0 > 0.0) {
            return Err(Error::invalid(format!("lambda0 must be finite and positive, got {lambda0}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be finite and positive, got {sigma}")));
        }
        Ok(DetectionParams { lambda0, sigma })
    }
}

/// Encounter hazard of an individual centered at `s` at a trap located at `x`.
pub fn hazard(s: Point, x: Point, params: &DetectionParams) -> f64 {
    hazard_d2(s.dist2(&x), params)
}

/// Hazard as a function of squared distance (hot-path form).
#[inline]
pub fn hazard_d2(d2: f64, params: &DetectionParams) -> f64 {
    params.lambda0 * (-d2 / (2.0 * params.sigma * params.sigma)).exp()
}

/// Per-occasion detection probability, 1 - exp(-hazard).
pub fn detection_prob(s: Point, x: Point, params: &DetectionParams) -> f64 {
    -(-hazard(s, x, params)).exp_m1()
}

/// ln of the detection probability for a given hazard. -inf when the hazard
/// underflows to zero.
#[inline]
pub fn ln_detection_prob(h: f64) -> f64 {
    (-(-h).exp_m1()).ln()
}

/// Cached ln C(k, y) for one fixed k.
#[derive(Debug, Clone)]
pub struct LnBinomTable {
    k: u16,
    lnc: Vec<f64>,
}

impl LnBinomTable {
    pub fn new(k: u16) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::invalid(format!("k must be in 1..={MAX_K}, got {k}")));
        }
        // ln k! by cumulative summation; exact to f64 rounding for k <= 64.
        let mut lnfact = vec![0.0f64; k as usize + 1];
        for i in 1..=k as usize {
            lnfact[i] = lnfact[i - 1] + (i as f64).ln();
        }
        let lnc = (0..=k as usize)
            .map(|y| lnfact[k as usize] - lnfact[y] - lnfact[k as usize - y])
            .collect();
        Ok(LnBinomTable { k, lnc })
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    /// ln C(k, y); y must not exceed k.
    #[inline]
    pub fn get(&self, y: u16) -> f64 {
        self.lnc[y as usize]
    }
}

/// Log-likelihood of one individual's row: the left history and the right
/// history currently attached to it, both Binomial(K, p) at every trap when
/// the individual is in the population (z = true). When z = false the row is
/// possible only if both histories are all-zero (contribution 0.0, else
/// -inf).
pub fn row_loglik(
    y_left: &[u16],
    y_right: &[u16],
    z: bool,
    s: Point,
    traps: &TrapArray,
    params: &DetectionParams,
    lnc: &LnBinomTable,
) -> f64 {
    debug_assert_eq!(y_left.len(), traps.len());
    debug_assert_eq!(y_right.len(), traps.len());
    let k = lnc.k();
    if !z {
        let zero = y_left.iter().all(|&y| y == 0) && y_right.iter().all(|&y| y == 0);
        return if zero { 0.0 } else { f64::NEG_INFINITY };
    }
    let mut ll = 0.0;
    for (j, x) in traps.iter().enumerate() {
        let h = hazard(s, *x, params);
        let lnp = ln_detection_prob(h); // -inf only if h underflowed
        let (yl, yr) = (y_left[j], y_right[j]);
        // ln Binom(y; K, p) = ln C(K, y) + y ln p + (K - y)(-h).
        // The y ln p term is skipped for y = 0 so an underflowed p cannot
        // produce 0 * -inf = NaN.
        ll += lnc.get(yl) - f64::from(k - yl) * h;
        if yl > 0 {
            ll += f64::from(yl) * lnp;
        }
        ll += lnc.get(yr) - f64::from(k - yr) * h;
        if yr > 0 {
            ll += f64::from(yr) * lnp;
        }
    }
    ll
}

/// Sum of `row_loglik` over all M rows. `right_star` is the right matrix
/// already reordered so row i is the right history attached to left row i.
///
/// This is the readable reference implementation; the sampler keeps its own
/// incrementally updated version and is checked against this one.
pub fn total_loglik(
    left: &EncounterMatrix,
    right_star: &EncounterMatrix,
    z: &[bool],
    s: &[Point],
    traps: &TrapArray,
    params: &DetectionParams,
) -> Result<f64> {
    if left.n_rows() != right_star.n_rows()
        || left.n_traps() != right_star.n_traps()
        || left.k() != right_star.k()
    {
        return Err(Error::invalid("left and reordered right matrices disagree in shape or k"));
    }
    if left.n_traps() != traps.len() {
        return Err(Error::invalid(format!(
            "matrix has {} trap columns but the trap array has {}",
            left.n_traps(),
            traps.len()
        )));
    }
    if z.len() != left.n_rows() || s.len() != left.n_rows() {
        return Err(Error::invalid("z and s must have one entry per row"));
    }
    let lnc = LnBinomTable::new(left.k())?;
    let mut total = 0.0;
    for i in 0..left.n_rows() {
        total += row_loglik(left.row(i), right_star.row(i), z[i], s[i], traps, params, &lnc);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn params(l0: f64, sigma: f64) -> DetectionParams {
        DetectionParams::new(l0, sigma).unwrap()
    }

    #[test]
    fn hazard_at_zero_distance_is_lambda0() {
        let p = params(0.2, 0.5);
        let s = Point::new(1.0, 1.0);
        assert_eq!(hazard(s, s, &p), 0.2);
    }

    #[test]
    fn hazard_at_reference_distances() {
        let p = params(0.2, 0.5);
        let s = Point::new(0.0, 0.0);
        // d = 0.5: 0.2 exp(-0.25 / 0.5) = 0.2 exp(-1/2)
        close(hazard(s, Point::new(0.5, 0.0), &p), 0.2 * (-0.5f64).exp(), 1e-15);
        close(hazard(s, Point::new(0.5, 0.0), &p), 0.121306, 1e-6);
        // d = 2: 0.2 exp(-4 / 0.5) = 0.2 exp(-8)
        close(hazard(s, Point::new(2.0, 0.0), &p), 0.2 * (-8.0f64).exp(), 1e-18);
    }

    #[test]
    fn detection_prob_reference_values() {
        let p = params(0.2, 0.5);
        let s = Point::new(0.0, 0.0);
        close(detection_prob(s, s, &p), 0.181269, 1e-6);
        let x = Point::new(1.0, 0.0);
        close(hazard(s, x, &p), 0.027067, 1e-6);
        close(detection_prob(s, x, &p), 0.026704, 1e-6);
    }

    #[test]
    fn one_minus_p_equals_exp_minus_h() {
        let p = params(1.7, 0.8);
        let s = Point::new(0.3, -0.2);
        for (dx, dy) in [(0.0, 0.0), (0.4, 0.1), (1.5, 2.0), (3.0, 0.0)] {
            let x = Point::new(s.x + dx, s.y + dy);
            let h = hazard(s, x, &p);
            let one_minus_p = 1.0 - detection_prob(s, x, &p);
            close(one_minus_p.ln(), -h, 1e-12);
        }
    }

    #[test]
    fn detection_prob_decreases_with_distance() {
        let p = params(0.9, 0.6);
        let s = Point::new(0.0, 0.0);
        let mut last = f64::INFINITY;
        for i in 0..40 {
            let x = Point::new(0.1 * i as f64, 0.0);
            let v = detection_prob(s, x, &p);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn row_loglik_single_trap_reference_value() {
        // J = 1, K = 1, s on the trap, lambda0 = 0.2: left capture, right miss.
        let p = params(0.2, 0.5);
        let traps = TrapArray::new(vec![Point::new(0.0, 0.0)]).unwrap();
        let lnc = LnBinomTable::new(1).unwrap();
        let ll = row_loglik(&[1], &[0], true, Point::new(0.0, 0.0), &traps, &p, &lnc);
        let expected = (1.0 - (-0.2f64).exp()).ln() - 0.2;
        close(ll, expected, 1e-12);
        close(ll, -1.9077718, 1e-6);
    }

    #[test]
    fn row_loglik_z0_cases() {
        let p = params(0.2, 0.5);
        let traps = TrapArray::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        let lnc = LnBinomTable::new(2).unwrap();
        let s = Point::new(0.5, 0.0);
        assert_eq!(row_loglik(&[0, 0], &[0, 0], false, s, &traps, &p, &lnc), 0.0);
        assert_eq!(
            row_loglik(&[0, 1], &[0, 0], false, s, &traps, &p, &lnc),
            f64::NEG_INFINITY
        );
        assert_eq!(
            row_loglik(&[0, 0], &[2, 0], false, s, &traps, &p, &lnc),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn z1_all_zero_row_is_exactly_minus_2k_sum_h() {
        let p = params(0.4, 0.7);
        let traps =
            TrapArray::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 0.5)])
                .unwrap();
        let lnc = LnBinomTable::new(3).unwrap();
        let s = Point::new(0.6, 0.3);
        let sum_h: f64 = traps.iter().map(|x| hazard(s, *x, &p)).sum();
        let ll = row_loglik(&[0, 0, 0], &[0, 0, 0], true, s, &traps, &p, &lnc);
        close(ll, -2.0 * 3.0 * sum_h, 1e-12);
    }

    #[test]
    fn neg_infinity_propagates_through_total() {
        let p = params(0.2, 0.5);
        let traps = TrapArray::new(vec![Point::new(0.0, 0.0)]).unwrap();
        let left = EncounterMatrix::new(vec![vec![1], vec![1]], 1, 1).unwrap();
        let right = EncounterMatrix::new(vec![vec![0], vec![0]], 1, 1).unwrap();
        let s = vec![Point::new(0.0, 0.0); 2];
        // Row 2 captured but z = false: impossible, so the total is -inf.
        let ll =
            total_loglik(&left, &right, &[true, false], &s, &traps, &p).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn binom_table_matches_direct_coefficients() {
        let t = LnBinomTable::new(5).unwrap();
        close(t.get(0), 0.0, 1e-15);
        close(t.get(2), 10.0f64.ln(), 1e-12);
        close(t.get(5), 0.0, 1e-15);
        let t64 = LnBinomTable::new(64).unwrap();
        // C(64, 2) = 2016
        close(t64.get(2), 2016.0f64.ln(), 1e-12);
        assert!(LnBinomTable::new(65).is_err());
        assert!(LnBinomTable::new(0).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DetectionParams::new(0.0, 0.5).is_err());
        assert!(DetectionParams::new(0.2, -1.0).is_err());
        assert!(DetectionParams::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn total_loglik_shape_mismatches_rejected() {
        let p = params(0.2, 0.5);
        let traps = TrapArray::new(vec![Point::new(0.0, 0.0)]).unwrap();
        let a = EncounterMatrix::zeros(2, 1, 1);
        let b = EncounterMatrix::zeros(3, 1, 1);
        let s = vec![Point::new(0.0, 0.0); 2];
        assert!(total_loglik(&a, &b, &[false, false], &s, &traps, &p).is_err());
        let c = EncounterMatrix::zeros(2, 1, 2);
        assert!(total_loglik(&a, &c, &[false, false], &s, &traps, &p).is_err());
        assert!(total_loglik(&a, &a, &[false], &s, &traps, &p).is_err());
    }
}
