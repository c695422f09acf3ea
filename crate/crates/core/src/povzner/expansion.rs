//! Closed-form azimuthal average of `|v'|^{2n}` and the pair polynomials it
//! induces.
//!
//! With `x = cos²(θ/2)`, `y = sin²(θ/2)` (so `sin²θ / 4 = xy`) and
//! `Q = |v|²|v*|² - (v·v*)² = |v × v*|²`,
//!
//! ```text
//! Θ_n(v, v*, θ) = Σ_{i+j+2ℓ=n} n!/(i! j! (ℓ!)²) x^i y^j (xy)^ℓ |v|^{2i} |v*|^{2j} Q^ℓ
//! ```
//!
//! Grouping the terms by `a = i + ℓ` turns the angular dependence into
//! `x^a y^{n-a}`, which is what the `J_{n,a}` integrals integrate.

use crate::combinatorics::LnFactorials;
use crate::scalar::{log_sum_exp, Real};
use crate::vec3::Vec3;

use super::PovznerError;

#[inline]
fn ln_pow(ln_base: f64, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_base
    }
}

/// `(cos²(θ/2), sin²(θ/2))`.
#[inline]
pub fn half_angle_weights<T: Real>(theta: T) -> (T, T) {
    let (s, c) = (theta * T::c(0.5)).sin_cos();
    (c * c, s * s)
}

/// `1 - x^n - y^n` with `x + y = 1`, free of cancellation near either endpoint.
#[inline]
pub fn loss_weight<T: Real>(n: usize, x: T, y: T) -> T {
    let nf = T::from_usize_lossy(n);
    if y <= x {
        -(nf * (-y).ln_1p()).exp_m1() - y.powi(n as i32)
    } else {
        -(nf * (-x).ln_1p()).exp_m1() - x.powi(n as i32)
    }
}

/// `ln Θ_n(v, v*, θ)`, finite for any `n` (all terms are summed in log-space).
pub fn ln_theta_average<T: Real>(n: usize, v: Vec3<T>, vstar: Vec3<T>, theta: T) -> Result<f64, PovznerError> {
    if n == 0 {
        return Err(PovznerError::ZeroOrder);
    }
    if !(theta > T::zero() && theta <= T::PI()) {
        return Err(PovznerError::Angle(theta.to_f64_lossy()));
    }
    let theta = theta.to_f64_lossy();
    let (x, y) = half_angle_weights(theta);
    let ln_x = x.ln();
    let ln_y = y.ln();
    let ln_p = v.norm_squared().to_f64_lossy().ln();
    let ln_q = vstar.norm_squared().to_f64_lossy().ln();
    let ln_cross = v.cross(&vstar).norm_squared().to_f64_lossy().ln();
    let lnf = LnFactorials::new(n);
    let mut terms = Vec::with_capacity((n / 2 + 1) * (n + 1));
    for l in 0..=n / 2 {
        for i in 0..=(n - 2 * l) {
            let j = n - 2 * l - i;
            terms.push(
                lnf.ln_trinomial_weight(i, j, l)
                    + ln_pow(ln_x + ln_p, i)
                    + ln_pow(ln_y + ln_q, j)
                    + ln_pow(ln_x + ln_y + ln_cross, l),
            );
        }
    }
    Ok(log_sum_exp(&terms))
}

/// `Θ_n(v, v*, θ) = (2π)^{-1} ∫ |v'|^{2n} dφ` in closed form.
///
/// Overflows to `+inf` only when the value itself is not representable.
pub fn theta_average_exact<T: Real>(n: usize, v: Vec3<T>, vstar: Vec3<T>, theta: T) -> Result<T, PovznerError> {
    Ok(T::c(ln_theta_average(n, v, vstar, theta)?.exp()))
}

/// Coefficients of `x^a y^{n-a}` in `Λ_n(v, v*, θ) + Λ_n(v*, v, θ)`, the
/// mixed part of `Θ_n(v,v*,θ) + Θ_n(v*,v,θ)` (the two extreme terms of each
/// average are excluded, leaving `1 <= a <= n-1`).
#[derive(Clone, Debug)]
pub struct PairPolynomial<T> {
    pub n: usize,
    /// `mixed[a - 1]` multiplies `x^a y^{n-a}`.
    pub mixed: Vec<T>,
    /// `|v|^{2n} + |v*|^{2n}`.
    pub pure: T,
}

impl<T: Real> PairPolynomial<T> {
    /// Builds the coefficients for squared speeds `p = |v|²`, `q = |v*|²` and
    /// `cross = |v × v*|²`, enumerating `(i, j, 2ℓ)` as `i = a - ℓ`, `j = n - a - ℓ`.
    pub fn new(n: usize, p: T, q: T, cross: T, lnf: &LnFactorials) -> Self {
        let (ln_p, ln_q, ln_c) = (p.to_f64_lossy().ln(), q.to_f64_lossy().ln(), cross.to_f64_lossy().ln());
        let mut mixed = Vec::with_capacity(n.saturating_sub(1));
        for a in 1..n {
            let mut acc = 0.0_f64;
            for l in 0..=a.min(n - a) {
                let (i, j) = (a - l, n - a - l);
                let w = lnf.ln_trinomial_weight(i, j, l) + ln_pow(ln_c, l);
                let forward = ln_pow(ln_p, i) + ln_pow(ln_q, j);
                let backward = ln_pow(ln_q, i) + ln_pow(ln_p, j);
                acc += (w + forward).exp() + (w + backward).exp();
            }
            mixed.push(T::c(acc));
        }
        let pure = p.powi(n as i32) + q.powi(n as i32);
        Self { n, mixed, pure }
    }

    pub fn from_velocities(n: usize, v: Vec3<T>, vstar: Vec3<T>, lnf: &LnFactorials) -> Self {
        Self::new(
            n,
            v.norm_squared(),
            vstar.norm_squared(),
            v.cross(&vstar).norm_squared(),
            lnf,
        )
    }

    /// `Θ_n(v,v*,θ) + Θ_n(v*,v,θ) - |v|^{2n} - |v*|^{2n}` at half-angle weights `(x, y)`.
    pub fn azimuthal_gain(&self, x: T, y: T, scratch: &mut Vec<T>) -> T {
        let n = self.n;
        scratch.clear();
        scratch.resize(n + 1, T::zero());
        // scratch holds y^k for k = 0..=n
        let mut yp = T::one();
        for s in scratch.iter_mut() {
            *s = yp;
            yp *= y;
        }
        let mut xp = x;
        let mut acc = T::zero();
        for (idx, &c) in self.mixed.iter().enumerate() {
            let a = idx + 1;
            acc += c * xp * scratch[n - a];
            xp *= x;
        }
        acc - loss_weight(n, x, y) * self.pure
    }
}
