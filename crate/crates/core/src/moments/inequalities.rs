//! Moment inequalities that hold for every probability measure (or every
//! normalized one), checked on empirical ensembles.

use super::{ln_moment, Ensemble, MomentError};
use crate::scalar::Real;

const SLACK: f64 = 1e-12;

/// `m_{a+α} m_b <= m_{b+α} m_a` for `b >= a >= 0`, `α > 0`, compared in log
/// space with relative slack `1e-12`.
pub fn check_log_convexity<T: Real>(ens: &Ensemble<T>, a: f64, b: f64, alpha: f64) -> Result<bool, MomentError> {
    if !(a >= 0.0 && b >= a && alpha > 0.0) {
        return Err(MomentError::InvalidArgument(format!(
            "need b >= a >= 0 and alpha > 0, got a={a}, b={b}, alpha={alpha}"
        )));
    }
    let lhs = ln_moment(ens, a + alpha) + ln_moment(ens, b);
    let rhs = ln_moment(ens, b + alpha) + ln_moment(ens, a);
    Ok(lhs <= rhs + SLACK || lhs == f64::NEG_INFINITY)
}

/// `m_s <= m_r^{(s-2)/(r-2)}` for `r >= s >= 2` on a normalized ensemble.
pub fn check_holder_interp<T: Real>(ens: &Ensemble<T>, s: f64, r: f64) -> Result<bool, MomentError> {
    if !(s >= 2.0 && r >= s) {
        return Err(MomentError::InvalidArgument(format!(
            "need r >= s >= 2, got s={s}, r={r}"
        )));
    }
    ens.require_normalized()?;
    if r == 2.0 {
        return Ok(true);
    }
    let lhs = ln_moment(ens, s);
    let rhs = (s - 2.0) / (r - 2.0) * ln_moment(ens, r);
    // m_2 = 1 holds only to the normalization tolerance
    let tol = SLACK + ens.normalization_defect();
    Ok(lhs <= rhs + tol)
}

/// `m_{2n} <= m_{2n+γ}/2 + 2^{2n/γ}`, from `x^{2n} <= x^{2n+γ}/2 + 2^{2n/γ}` for `x >= 0`.
pub fn check_pointwise_bound<T: Real>(ens: &Ensemble<T>, n: usize, gamma: f64) -> Result<bool, MomentError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(MomentError::InvalidArgument(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    let nf = n as f64;
    let lhs = ln_moment(ens, 2.0 * nf);
    let a = ln_moment(ens, 2.0 * nf + gamma) - std::f64::consts::LN_2;
    let b = 2.0 * nf / gamma * std::f64::consts::LN_2;
    let rhs = a.max(b) + (-(a - b).abs()).exp().ln_1p();
    Ok(lhs <= rhs + SLACK)
}

/// `σ^{n+γ/2} m_{2n+γ} >= σ^n m_{2n} - 1` for `σ ∈ (0, 1]`, from
/// `x^{n+γ/2} >= x^n - 1` at `x = σ|v|²`.
pub fn check_step4_pointwise<T: Real>(
    ens: &Ensemble<T>,
    n: usize,
    gamma: f64,
    sigma: f64,
) -> Result<bool, MomentError> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(MomentError::InvalidArgument(format!(
            "sigma must lie in (0, 1], got {sigma}"
        )));
    }
    let nf = n as f64;
    let ln_s = sigma.ln();
    let lhs = (nf + gamma / 2.0) * ln_s + ln_moment(ens, 2.0 * nf + gamma);
    let term = nf * ln_s + ln_moment(ens, 2.0 * nf);
    if term <= 0.0 {
        return Ok(true);
    }
    // ln(e^term - 1) = term + ln(1 - e^{-term})
    let rhs = term + (-(-term).exp()).ln_1p();
    Ok(lhs >= rhs - SLACK)
}

#[cfg(test)]
mod tests {
    use super::super::testing::{random_ensemble, rng};
    use super::*;
    use crate::vec3::Vec3;
    use rand::Rng;

    fn speeds(s: &[f64]) -> Ensemble {
        Ensemble::new(s.iter().map(|&r| Vec3::new(r, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn single_speed_is_equality() {
        let e = speeds(&[1.7, -1.7]);
        assert!(check_log_convexity(&e, 0.5, 3.0, 2.0).unwrap());
        let a = ln_moment(&e, 2.5) + ln_moment(&e, 3.0);
        let b = ln_moment(&e, 5.0) + ln_moment(&e, 0.5);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn two_speed_example() {
        // m_1 m_2 = 1.5 · 2.5 <= m_3 m_0 = 4.5
        let e = speeds(&[1.0, 2.0]);
        assert!(check_log_convexity(&e, 0.0, 2.0, 1.0).unwrap());
        assert!(check_log_convexity(&e, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn holder_edge_cases() {
        let mut r = rng(10);
        let e = random_ensemble(&mut r, 300);
        assert!(check_holder_interp(&e, 2.0, 9.0).unwrap());
        assert!(check_holder_interp(&e, 5.0, 5.0).unwrap());
        assert!(check_holder_interp(&e, 2.0, 2.0).unwrap());
        let raw = speeds(&[1.0, 2.0]);
        assert!(matches!(
            check_holder_interp(&raw, 3.0, 4.0),
            Err(MomentError::NotNormalized { .. })
        ));
    }

    #[test]
    fn randomized_sweep_has_no_violations() {
        let mut r = rng(11);
        for _ in 0..200 {
            let n = r.random_range(10..400);
            let e = random_ensemble(&mut r, n);
            let a = r.random_range(0.0..6.0);
            let b = a + r.random_range(0.0..6.0);
            let alpha = r.random_range(0.01..4.0);
            assert!(check_log_convexity(&e, a, b, alpha).unwrap());
            let s = r.random_range(2.0..8.0);
            assert!(check_holder_interp(&e, s, s + r.random_range(0.0..8.0)).unwrap());
            let k = r.random_range(1..12);
            let gamma = r.random_range(0.05..=1.0);
            assert!(check_pointwise_bound(&e, k, gamma).unwrap());
            assert!(check_step4_pointwise(&e, k, gamma, r.random_range(0.01..=1.0)).unwrap());
        }
    }

    #[test]
    fn pointwise_bound_is_sharp_at_the_crossover() {
        // x = 2^{1/γ}: x^{2n} = 2^{2n/γ} and the bound reads 2^{2n/γ} <= 2^{2n/γ} + 2^{2n/γ}
        let x = 2f64.powf(1.0);
        let e = speeds(&[x]);
        assert!(check_pointwise_bound(&e, 3, 1.0).unwrap());
    }
}
