//! Angular integrals against `β(θ) = κ θ^{-ν-1}`.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{gamma_ratio, LnFactorials};
use crate::kernel::KernelParams;
use crate::quadrature::{integrate_graded, Integral, Options};
use crate::scalar::{CompensatedSum, Real};

use super::expansion::{half_angle_weights, loss_weight};
use super::PovznerError;

fn check_order(n: usize) -> Result<(), PovznerError> {
    if n < 2 {
        Err(PovznerError::OrderBelowTwo(n))
    } else {
        Ok(())
    }
}

/// `a_n = ∫_0^π (1 - x^n - y^n) β(θ) dθ`, nonnegative since `x^n + (1-x)^n <= 1`.
pub fn a_n_integral<T: Real>(n: usize, params: &KernelParams<T>) -> Result<T, PovznerError> {
    Ok(a_n_detailed(n, params, &Options::with_tol(1e-10))?.value)
}

pub fn a_n_detailed<T: Real>(
    n: usize,
    params: &KernelParams<T>,
    opts: &Options<T>,
) -> Result<Integral<T>, PovznerError> {
    check_order(n)?;
    let r = integrate_graded(
        |theta: T| {
            let (x, y) = half_angle_weights(theta);
            params.beta_weighted(loss_weight(n, x, y), theta)
        },
        T::PI(),
        opts,
    )?;
    Ok(r)
}

/// `J_{n,a} = ∫_0^π x^a y^{n-a} β(θ) dθ`, integrable at `0` since `n - a >= 1`.
pub fn j_integral<T: Real>(n: usize, a: usize, params: &KernelParams<T>) -> Result<T, PovznerError> {
    Ok(j_detailed(n, a, params, &Options::with_tol(1e-10))?.value)
}

pub fn j_detailed<T: Real>(
    n: usize,
    a: usize,
    params: &KernelParams<T>,
    opts: &Options<T>,
) -> Result<Integral<T>, PovznerError> {
    if a < 1 || a + 1 > n {
        return Err(PovznerError::SplitIndex { n, a });
    }
    let (ai, bi) = (a as i32, (n - a) as i32);
    Ok(integrate_graded(
        |theta: T| {
            let (x, y) = half_angle_weights(theta);
            params.beta_weighted(x.powi(ai) * y.powi(bi), theta)
        },
        T::PI(),
        opts,
    )?)
}

/// `I_{i,j,k} = ∫_0^π x^i y^j (sin θ / 2)^k β(θ) dθ`, with `sin θ` taken directly.
pub fn i_integral<T: Real>(i: usize, j: usize, k: usize, params: &KernelParams<T>) -> Result<T, PovznerError> {
    if j + k == 0 {
        return Err(PovznerError::NonIntegrable { i, j, k });
    }
    let (ii, ji, ki) = (i as i32, j as i32, k as i32);
    let r = integrate_graded(
        |theta: T| {
            let (x, y) = half_angle_weights(theta);
            params.beta_weighted(x.powi(ii) * y.powi(ji) * (theta.sin() * T::c(0.5)).powi(ki), theta)
        },
        T::PI(),
        &Options::with_tol(1e-11),
    )?;
    Ok(r.value)
}

/// `K_{n,a} = Σ_{ℓ=0}^{a ∧ (n-a)} n!/((a-ℓ)! (n-a-ℓ)! (ℓ!)²) · I_{a-ℓ, n-a-ℓ, 2ℓ}`,
/// summed term by term (each `I` is its own quadrature).
pub fn k_sum<T: Real>(n: usize, a: usize, params: &KernelParams<T>) -> Result<T, PovznerError> {
    if a < 1 || a + 1 > n {
        return Err(PovznerError::SplitIndex { n, a });
    }
    let lnf = LnFactorials::new(n);
    let mut acc = CompensatedSum::new();
    for l in 0..=a.min(n - a) {
        let w = T::c(lnf.ln_trinomial_weight(a - l, n - a - l, l).exp());
        acc.add(w * i_integral(a - l, n - a - l, 2 * l, params)?);
    }
    Ok(acc.value())
}

/// The split `J_{n,a} <= κ2 (K_{ν,n,a} + L_{ν,n,a})` at `θ = π/2`; returns `(K, L)`.
#[cfg(test)]
pub(crate) fn kl_split(nu: f64, n: usize, a: usize) -> Result<(f64, f64), PovznerError> {
    if a < 1 || a + 1 > n {
        return Err(PovznerError::SplitIndex { n, a });
    }
    let (ai, bi) = (a as i32, (n - a) as i32);
    let opts = Options::with_tol(1e-10);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let k = integrate_graded(
        |theta: f64| {
            let (x, y) = half_angle_weights(theta);
            x.powi(ai) * y.powi(bi) * theta.powf(-nu - 1.0)
        },
        half_pi,
        &opts,
    )?
    .value;
    let l = crate::quadrature::integrate(
        |theta: f64| {
            let (x, y) = half_angle_weights(theta);
            x.powi(ai) * y.powi(bi)
        },
        half_pi,
        std::f64::consts::PI,
        &opts,
    )?
    .value
        * (2.0 / std::f64::consts::PI).powf(nu + 1.0);
    Ok((k, l))
}

/// Beta-function envelope `4 u_{ν,n} / ((n-a-ν/2) u_{ν,n-a})` of `C(n,a) K_{ν,n,a}`.
#[cfg(test)]
pub(crate) fn k_beta_bound(nu: f64, n: usize, a: usize) -> f64 {
    4.0 * gamma_ratio(nu, n as u64) / ((n - a) as f64 - nu / 2.0) / gamma_ratio(nu, (n - a) as u64)
}

/// Tabulated angular integrals for one kernel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegralTable {
    pub nu: f64,
    pub kappa: f64,
    pub n_max: usize,
    /// `a_n[n]` for `n = 2..=n_max` (entries 0 and 1 unused, set to 0).
    pub a_n: Vec<f64>,
    /// `j[n][a - 1]` for `1 <= a <= n-1`.
    pub j: Vec<Vec<f64>>,
    /// `u_{ν,k}` for `k = 0..=n_max`.
    pub u: Vec<f64>,
    /// Largest quadrature error estimate relative to the integral.
    pub worst_rel_error: f64,
}

impl IntegralTable {
    pub fn compute(params: &KernelParams<f64>, n_max: usize) -> Result<Self, PovznerError> {
        check_order(n_max)?;
        let opts = Options::with_tol(1e-10);
        let mut worst: f64 = 0.0;
        let mut a_n = vec![0.0; n_max + 1];
        let mut j = vec![Vec::new(); n_max + 1];
        for n in 2..=n_max {
            let r = a_n_detailed(n, params, &opts)?;
            worst = worst.max(r.error / r.value.abs());
            a_n[n] = r.value;
            let mut row = Vec::with_capacity(n - 1);
            for a in 1..n {
                let r = j_detailed(n, a, params, &opts)?;
                worst = worst.max(r.error / r.value.abs());
                row.push(r.value);
            }
            j[n] = row;
        }
        let u = (0..=n_max as u64).map(|k| gamma_ratio(params.nu, k)).collect();
        Ok(Self {
            nu: params.nu,
            kappa: params.kappa,
            n_max,
            a_n,
            j,
            u,
            worst_rel_error: worst,
        })
    }

    #[inline]
    pub fn j(&self, n: usize, a: usize) -> f64 {
        self.j[n][a - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::binomial_exact;
    use std::f64::consts::PI;

    fn params(nu: f64) -> KernelParams<f64> {
        KernelParams::new(1.0, nu).unwrap()
    }

    // Independent route for a_2 = (1/2) ∫ sin²θ β: substitute θ = s² to remove
    // the endpoint singularity and integrate on a uniform mesh.
    fn a2_oracle(nu: f64) -> f64 {
        let m = 20_000;
        let upper = PI.sqrt();
        let h = upper / m as f64;
        let f = |s: f64| {
            if s == 0.0 {
                return if nu == 1.5 { 1.0 } else { 0.0 };
            }
            // θ = s², dθ = 2s ds; the integrand becomes (sin θ/θ)² s^{3-2ν}
            let theta = s * s;
            let sinc = theta.sin() / theta;
            sinc * sinc * s.powf(3.0 - 2.0 * nu)
        };
        // composite Simpson
        let mut acc = f(0.0) + f(upper);
        for k in 1..m {
            acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn a2_reduces_to_sine_square() {
        for nu in [0.5, 1.0, 1.5] {
            let a2 = a_n_integral(2, &params(nu)).unwrap();
            let oracle = a2_oracle(nu);
            assert!((a2 - oracle).abs() < 1e-9 * oracle, "nu={nu}: {a2} vs {oracle}");
        }
    }

    #[test]
    fn a_n_lower_bound_and_monotone() {
        for nu in [0.5, 1.0, 1.5] {
            let p = params(nu);
            let zeta1 = 1.0 / (20.0 * (2.0 - nu));
            let mut prev = 0.0;
            for n in [2_usize, 3, 5, 10, 50, 200] {
                let a = a_n_integral(n, &p).unwrap();
                assert!(a >= zeta1 * (n as f64).powf(nu / 2.0));
                assert!(a > prev);
                prev = a;
            }
        }
    }

    #[test]
    fn rejects_bad_orders() {
        let p = params(1.0);
        assert_eq!(a_n_integral(1, &p), Err(PovznerError::OrderBelowTwo(1)));
        assert!(j_integral(3, 0, &p).is_err());
        assert!(j_integral(3, 3, &p).is_err());
    }

    #[test]
    fn a_n_is_sum_of_binomial_j() {
        // 1 - x^n - y^n = Σ_{a=1}^{n-1} C(n,a) x^a y^{n-a}
        let p = params(1.0);
        for n in [2_usize, 7, 15] {
            let s: f64 = (1..n)
                .map(|a| binomial_exact(n as u64, a as u64).unwrap() as f64 * j_integral(n, a, &p).unwrap())
                .sum();
            let a = a_n_integral(n, &p).unwrap();
            assert!((s - a).abs() < 1e-9 * a);
        }
    }

    #[test]
    fn k_sum_equals_j_times_binomial_square() {
        let p = params(1.0);
        for (n, a) in [(2, 1), (6, 3), (11, 4), (20, 17)] {
            let k = k_sum(n, a, &p).unwrap();
            let c = binomial_exact(n as u64, a as u64).unwrap() as f64;
            let j = j_integral(n, a, &p).unwrap();
            assert!((k - j * c * c).abs() < 1e-8 * k, "n={n} a={a}");
        }
    }

    #[test]
    fn kl_split_bounds_j() {
        for nu in [0.5, 1.5] {
            let p = params(nu);
            for (n, a) in [(2, 1), (10, 3), (40, 39), (40, 1)] {
                let (k, l) = kl_split(nu, n, a).unwrap();
                let j = j_integral(n, a, &p).unwrap();
                assert!(j <= p.kappa2 * (k + l) * (1.0 + 1e-10));
                let c = binomial_exact(n as u64, a as u64).unwrap() as f64;
                assert!(c * k <= k_beta_bound(nu, n, a) * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn table_is_consistent() {
        let t = IntegralTable::compute(&params(0.5), 12).unwrap();
        assert_eq!(t.j[12].len(), 11);
        assert!(t.worst_rel_error < 1e-9);
        assert!(t.a_n[2..].iter().all(|&a| a > 0.0));
        assert!(t.j[2..].iter().flatten().all(|&j| j > 0.0 && j.is_finite()));
        assert!((t.j(5, 2) - j_integral(5, 2, &params(0.5)).unwrap()).abs() < 1e-12);
    }
}
