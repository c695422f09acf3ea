//! Overflow-safe combinatorics: log-factorial tables, binomials, the Wallis
//! factor and the Vandermonde convolution.

use thiserror::Error;

use crate::scalar::{log_sum_exp, Real};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CombinatoricsError {
    #[error("the Wallis factor is only defined for even k, got {0}")]
    OddWallisIndex(u64),
}

/// Table of `ln k!` for `k = 0..=n`, accumulated as `Σ ln j`.
#[derive(Clone, Debug)]
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut acc = 0.0_f64;
        let mut c = 0.0_f64;
        for j in 1..=n {
            // compensated accumulation keeps ln 200! accurate to a few ulps
            let y = (j as f64).ln() - c;
            let t = acc + y;
            c = (t - acc) - y;
            acc = t;
            table.push(acc);
        }
        Self { table }
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.table[k]
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.get(n) - self.get(k) - self.get(n - k)
    }

    /// `ln [n! / (i! j! (ℓ!)²)]` with `n = i + j + 2ℓ`.
    #[inline]
    pub fn ln_trinomial_weight(&self, i: usize, j: usize, l: usize) -> f64 {
        self.get(i + j + 2 * l) - self.get(i) - self.get(j) - 2.0 * self.get(l)
    }
}

/// `ln n!` via the log-gamma function.
pub fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if n <= 1024 {
        let t = LnFactorials::new(n as usize);
        return t.ln_binomial(n as usize, k as usize);
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Exact binomial coefficient; `None` on overflow of `u128`.
pub fn binomial_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// `k! / (2^k ((k/2)!)²)`, the mean of `sin^k` over a full period.
///
/// Evaluated as the product `Π_{m=1}^{k/2} (2m-1)/(2m)` (every factor below one),
/// switching to log-gamma for very large `k`.
pub fn wallis_factor<T: Real>(k: u64) -> Result<T, CombinatoricsError> {
    if k % 2 == 1 {
        return Err(CombinatoricsError::OddWallisIndex(k));
    }
    let half = k / 2;
    if half <= 4096 {
        let mut acc = 1.0_f64;
        for m in 1..=half {
            acc *= (2 * m - 1) as f64 / (2 * m) as f64;
        }
        return Ok(T::c(acc));
    }
    let ln = ln_factorial(k) - k as f64 * std::f64::consts::LN_2 - 2.0 * ln_factorial(half);
    Ok(T::c(ln.exp()))
}

/// Both sides of `Σ_ℓ C(a,ℓ) C(b,ℓ) = C(a+b, a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VandermondeCheck {
    /// Integer arithmetic, used when `a + b <= 60`.
    Exact { sum: u128, binomial: u128 },
    /// Natural logarithms of both sides.
    Log { ln_sum: f64, ln_binomial: f64 },
}

impl VandermondeCheck {
    /// Exact equality, or agreement to `1e-12` relative in log-space.
    pub fn holds(&self) -> bool {
        match *self {
            VandermondeCheck::Exact { sum, binomial } => sum == binomial,
            VandermondeCheck::Log { ln_sum, ln_binomial } => ((ln_sum - ln_binomial).exp() - 1.0).abs() <= 1e-12,
        }
    }

    /// The common value when exact.
    pub fn exact_value(&self) -> Option<u128> {
        match *self {
            VandermondeCheck::Exact { sum, binomial } if sum == binomial => Some(sum),
            _ => None,
        }
    }
}

/// Evaluates both sides of the Vandermonde convolution independently.
pub fn vandermonde(a: u64, b: u64) -> VandermondeCheck {
    if a + b <= 60 {
        let sum = (0..=a.min(b))
            .map(|l| binomial_exact(a, l).unwrap() * binomial_exact(b, l).unwrap())
            .sum();
        let binomial = binomial_exact(a + b, a).unwrap();
        VandermondeCheck::Exact { sum, binomial }
    } else {
        vandermonde_log(a, b)
    }
}

/// Log-space evaluation of both sides, valid for any `a, b`.
pub fn vandermonde_log(a: u64, b: u64) -> VandermondeCheck {
    let t = LnFactorials::new((a + b) as usize);
    let (au, bu) = (a as usize, b as usize);
    let terms: Vec<f64> = (0..=au.min(bu))
        .map(|l| t.ln_binomial(au, l) + t.ln_binomial(bu, l))
        .collect();
    VandermondeCheck::Log {
        ln_sum: log_sum_exp(&terms),
        ln_binomial: t.ln_binomial(au + bu, au),
    }
}

/// `u_{ν,k} = Γ(k+1) / Γ(k+1-ν/2)`, which behaves like `k^{ν/2}` for large `k`.
pub fn gamma_ratio(nu: f64, k: u64) -> f64 {
    let x = k as f64 + 1.0;
    (libm::lgamma(x) - libm::lgamma(x - nu / 2.0)).exp()
}

/// Empirical envelope `[min, max]` of `u_{ν,k} / k^{ν/2}` over `1 <= k <= k_max`.
pub fn gamma_ratio_envelope(nu: f64, k_max: u64) -> (f64, f64) {
    (1..=k_max)
        .map(|k| gamma_ratio(nu, k) / (k as f64).powf(nu / 2.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Options};
    use std::f64::consts::PI;

    #[test]
    fn wallis_small_values() {
        assert_eq!(wallis_factor::<f64>(0).unwrap(), 1.0);
        assert_eq!(wallis_factor::<f64>(2).unwrap(), 0.5);
        assert_eq!(wallis_factor::<f64>(4).unwrap(), 0.375);
        assert_eq!(wallis_factor::<f64>(3), Err(CombinatoricsError::OddWallisIndex(3)));
    }

    #[test]
    fn wallis_matches_quadrature() {
        for k in [10_u64, 40, 100] {
            let q = integrate(
                |x: f64| x.sin().powi(k as i32),
                0.0,
                PI / 2.0,
                &Options::with_tol(1e-13),
            )
            .unwrap()
            .value
                * 2.0
                / PI;
            let w: f64 = wallis_factor(k).unwrap();
            assert!((w - q).abs() < 1e-10 * q, "k={k}: {w} vs {q}");
        }
    }

    #[test]
    fn wallis_large_k_paths_agree() {
        let k = 8192;
        let prod: f64 = wallis_factor(k).unwrap();
        let ln = ln_factorial(k) - k as f64 * std::f64::consts::LN_2 - 2.0 * ln_factorial(k / 2);
        assert!((prod - ln.exp()).abs() < 1e-9 * prod);
        let far: f64 = wallis_factor(20_000).unwrap();
        assert!(far > 0.0 && far < prod);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial_exact(4, 2), Some(6));
        assert_eq!(binomial_exact(60, 30), Some(118_264_581_564_861_424));
        assert_eq!(binomial_exact(3, 5), Some(0));
        let ln = ln_binomial(200, 100);
        assert!(ln.is_finite() && ln > 130.0);
        assert!((ln_binomial(60, 30) - (118_264_581_564_861_424_f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn vandermonde_examples() {
        assert_eq!(vandermonde(2, 2).exact_value(), Some(6));
        for b in 0..20 {
            assert_eq!(vandermonde(0, b).exact_value(), Some(1));
        }
        let log = vandermonde_log(25, 25);
        assert!(log.holds());
        assert!(vandermonde(100, 150).holds());
    }

    #[test]
    fn vandermonde_exact_grid() {
        for a in 0..=60 {
            for b in 0..=(60 - a) {
                assert!(vandermonde(a, b).holds(), "a={a} b={b}");
            }
        }
    }

    #[test]
    fn gamma_ratio_approaches_power() {
        for nu in [0.5, 1.0, 1.5] {
            let mut prev_gap = f64::INFINITY;
            for k in [100_u64, 300, 1000, 3000, 10_000] {
                let r = gamma_ratio(nu, k) / (k as f64).powf(nu / 2.0);
                assert!((0.9..=1.1).contains(&r));
                let gap = (r - 1.0).abs();
                assert!(gap < prev_gap);
                prev_gap = gap;
            }
        }
    }
}
