//! Collision geometry, cross section and angular sampling for the non-cutoff
//! hard-potential kernel `B(v - v*, θ) = |v - v*|^γ β(θ)` with
//! `β(θ) = κ θ^{-ν-1}` on `(0, π]`.
//!
//! Post-collision velocities are parameterized by the deviation angle `θ` and
//! an azimuth `φ` around the relative velocity `X = v - v*`:
//!
//! ```text
//! Γ(X, φ) = cos φ · I(X) + sin φ · J(X)
//! v'  = v  - (1 - cos θ)/2 · X + (sin θ)/2 · Γ(X, φ)
//! v'* = v* + (1 - cos θ)/2 · X - (sin θ)/2 · Γ(X, φ)
//! ```
//!
//! where `(X, I(X), J(X))/|X|` is an orthonormal basis and `I(0) = J(0) = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("gamma must lie in (0, 1], got {0}")]
    Gamma(f64),
    #[error("nu must lie in (0, 2), got {0}")]
    Nu(f64),
    #[error("need 0 < kappa1 <= kappa <= kappa2, got kappa1={kappa1}, kappa={kappa}, kappa2={kappa2}")]
    Kappa { kappa1: f64, kappa: f64, kappa2: f64 },
    #[error("eps_cut must lie in (0, pi), got {0}")]
    Cutoff(f64),
    #[error("angular rate diverges for lower bound {0} <= 0 (non-cutoff singularity)")]
    DivergentRate(f64),
    #[error("lower bound {0} is not below pi")]
    EmptyRange(f64),
}

/// Cross-section data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<T = f64> {
    /// Velocity exponent, `0 < γ <= 1`.
    pub gamma: T,
    /// Angular singularity, `0 < ν < 2`.
    pub nu: T,
    /// Lower envelope constant of `β`.
    pub kappa1: T,
    /// Upper envelope constant of `β`.
    pub kappa2: T,
    /// Amplitude of the concrete cross section `β(θ) = κ θ^{-ν-1}`.
    pub kappa: T,
    /// Angular cutoff used by the particle solver only.
    pub eps_cut: T,
}

impl<T: Real> KernelParams<T> {
    /// `κ = κ1 = κ2 = 1`, `eps_cut = 1e-3`.
    pub fn new(gamma: T, nu: T) -> Result<Self, KernelError> {
        Self {
            gamma,
            nu,
            kappa1: T::one(),
            kappa2: T::one(),
            kappa: T::one(),
            eps_cut: T::c(1e-3),
        }
        .validated()
    }

    pub fn with_cutoff(mut self, eps_cut: T) -> Result<Self, KernelError> {
        self.eps_cut = eps_cut;
        self.validated()
    }

    pub fn with_kappa(mut self, kappa1: T, kappa: T, kappa2: T) -> Result<Self, KernelError> {
        self.kappa1 = kappa1;
        self.kappa = kappa;
        self.kappa2 = kappa2;
        self.validated()
    }

    pub fn validated(self) -> Result<Self, KernelError> {
        let f = |x: T| x.to_f64_lossy();
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return Err(KernelError::Gamma(f(self.gamma)));
        }
        if !(self.nu > T::zero() && self.nu < T::c(2.0)) {
            return Err(KernelError::Nu(f(self.nu)));
        }
        if !(self.kappa1 > T::zero() && self.kappa1 <= self.kappa && self.kappa <= self.kappa2) {
            return Err(KernelError::Kappa {
                kappa1: f(self.kappa1),
                kappa: f(self.kappa),
                kappa2: f(self.kappa2),
            });
        }
        if !(self.eps_cut > T::zero() && self.eps_cut < T::PI()) {
            return Err(KernelError::Cutoff(f(self.eps_cut)));
        }
        Ok(self)
    }

    /// `β(θ) = κ θ^{-ν-1}`.
    #[inline]
    pub fn beta(&self, theta: T) -> T {
        self.kappa * theta.powf(-self.nu - T::one())
    }

    /// `w · β(θ)`, zero whenever `w` is, and without overflow of `β` alone
    /// as long as the product is representable.
    #[inline]
    pub fn beta_weighted(&self, w: T, theta: T) -> T {
        if w == T::zero() {
            return T::zero();
        }
        let h = theta.powf(-(self.nu + T::one()) * T::c(0.5));
        self.kappa * (w * h) * h
    }

    pub fn cast<U: Real>(&self) -> KernelParams<U> {
        let c = |x: T| U::c(x.to_f64_lossy());
        KernelParams {
            gamma: c(self.gamma),
            nu: c(self.nu),
            kappa1: c(self.kappa1),
            kappa2: c(self.kappa2),
            kappa: c(self.kappa),
            eps_cut: c(self.eps_cut),
        }
    }
}

/// Orthogonal frame around a relative velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionFrame<T = f64> {
    pub x: Vec3<T>,
    pub i: Vec3<T>,
    pub j: Vec3<T>,
}

impl<T: Real> CollisionFrame<T> {
    /// `Γ(X, φ) = cos φ · I + sin φ · J`.
    #[inline]
    pub fn gamma_vector(&self, phi: T) -> Vec3<T> {
        let (s, c) = phi.sin_cos();
        self.i * c + self.j * s
    }
}

/// Builds `I(X), J(X)` with `|I| = |J| = |X|`, mutually orthogonal and orthogonal to `X`.
///
/// The helper axis is the coordinate axis least aligned with `X` (ties go to the
/// later axis); `I` is `e × X` rescaled to `|X|` and `J = X × I / |X|`.
pub fn build_frame<T: Real>(x: Vec3<T>) -> CollisionFrame<T> {
    let norm = x.norm();
    if norm == T::zero() {
        return CollisionFrame {
            x,
            i: Vec3::zero(),
            j: Vec3::zero(),
        };
    }
    let a = x.0.map(|c| c.abs());
    let mut axis = 2;
    if a[1] < a[axis] {
        axis = 1;
    }
    if a[0] < a[axis] {
        axis = 0;
    }
    let mut e = Vec3::zero();
    e.0[axis] = T::one();
    let raw = e.cross(&x);
    let i = raw * (norm / raw.norm());
    let j = x.cross(&i) * norm.recip();
    CollisionFrame { x, i, j }
}

/// Post-collision velocities `(v', v'*)`.
///
/// `(1 - cos θ)/2` is evaluated as `sin²(θ/2)` to stay accurate for grazing angles.
#[inline]
pub fn post_collision<T: Real>(v: Vec3<T>, vstar: Vec3<T>, theta: T, phi: T) -> (Vec3<T>, Vec3<T>) {
    let frame = build_frame(v - vstar);
    post_collision_in_frame(&frame, v, vstar, theta, phi)
}

#[inline]
pub fn post_collision_in_frame<T: Real>(
    frame: &CollisionFrame<T>,
    v: Vec3<T>,
    vstar: Vec3<T>,
    theta: T,
    phi: T,
) -> (Vec3<T>, Vec3<T>) {
    let half = theta * T::c(0.5);
    let sh = half.sin();
    let shrink = sh * sh;
    let tilt = theta.sin() * T::c(0.5);
    let delta = frame.gamma_vector(phi) * tilt - frame.x * shrink;
    (v + delta, vstar - delta)
}

/// Total collision mass above a cutoff, `2π ∫_lower^π β(θ) dθ`, in closed form.
pub fn angular_rate<T: Real>(params: &KernelParams<T>, lower: T) -> Result<T, KernelError> {
    if !(lower > T::zero()) {
        return Err(KernelError::DivergentRate(lower.to_f64_lossy()));
    }
    if lower > T::PI() {
        return Err(KernelError::EmptyRange(lower.to_f64_lossy()));
    }
    let nu = params.nu;
    Ok(T::TAU() * params.kappa * (lower.powf(-nu) - T::PI().powf(-nu)) / nu)
}

/// Inverse-CDF sample of `β` restricted to `[eps_cut, π]`.
#[inline]
pub fn sample_theta<T: Real>(params: &KernelParams<T>, u: T) -> T {
    sample_theta_above(params.nu, params.eps_cut, u)
}

/// Inverse-CDF sample of `θ^{-ν-1}` restricted to `[lower, π]`.
#[inline]
pub fn sample_theta_above<T: Real>(nu: T, lower: T, u: T) -> T {
    let lo = lower.powf(-nu);
    let hi = T::PI().powf(-nu);
    let theta = (lo - u * (lo - hi)).powf(-nu.recip());
    theta.max(lower).min(T::PI())
}

/// [`sample_theta_above`] with the range constants hoisted out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaSampler<T = f64> {
    lower: T,
    lo: T,
    span: T,
    exponent: T,
}

impl<T: Real> ThetaSampler<T> {
    pub fn new(nu: T, lower: T) -> Self {
        let lo = lower.powf(-nu);
        Self {
            lower,
            lo,
            span: lo - T::PI().powf(-nu),
            exponent: -nu.recip(),
        }
    }

    #[inline]
    pub fn sample(&self, u: T) -> T {
        (self.lo - u * self.span)
            .powf(self.exponent)
            .max(self.lower)
            .min(T::PI())
    }
}

/// Analytic CDF of the truncated angular law, used by the sampling tests.
pub fn theta_cdf<T: Real>(params: &KernelParams<T>, theta: T) -> T {
    let nu = params.nu;
    let lo = params.eps_cut.powf(-nu);
    let hi = T::PI().powf(-nu);
    let th = theta.max(params.eps_cut).min(T::PI());
    (lo - th.powf(-nu)) / (lo - hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            scale * (rng.random::<f64>() * 2.0 - 1.0),
            scale * (rng.random::<f64>() * 2.0 - 1.0),
            scale * (rng.random::<f64>() * 2.0 - 1.0),
        )
    }

    #[test]
    fn zero_relative_velocity_has_zero_frame() {
        let f = build_frame(Vec3::<f64>::zero());
        assert_eq!(f.i, Vec3::zero());
        assert_eq!(f.j, Vec3::zero());
    }

    #[test]
    fn axis_aligned_frame_follows_convention() {
        let f = build_frame(Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(f.i, Vec3::new(0.0, 2.0, 0.0));
        assert_eq!(f.j, Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn random_frames_are_orthogonal_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let mut x = random_vec(&mut rng, 1.0);
            x = x * (5.0 / x.norm());
            let f = build_frame(x);
            let worst =
                f.i.dot(&x)
                    .abs()
                    .max(f.j.dot(&x).abs())
                    .max(f.i.dot(&f.j).abs())
                    .max((f.i.norm() - 5.0).abs())
                    .max((f.j.norm() - 5.0).abs());
            assert!(worst < 1e-12 * 25.0, "worst {worst}");
        }
    }

    #[test]
    fn head_on_backscatter_swaps_velocities() {
        let v = Vec3::new(1.0, 0.0, 0.0);
        let w = Vec3::new(-1.0, 0.0, 0.0);
        for phi in [0.0, 1.0, 4.0] {
            let (a, b) = post_collision(v, w, PI, phi);
            assert!((a - w).max_abs() < 1e-15);
            assert!((b - v).max_abs() < 1e-15);
        }
    }

    #[test]
    fn equal_velocities_are_fixed() {
        let v = Vec3::new(0.3, -1.2, 2.0);
        let (a, b) = post_collision(v, v, 1.3, 2.2);
        assert_eq!(a, v);
        assert_eq!(b, v);
    }

    #[test]
    fn right_angle_deflection() {
        let (a, b) = post_collision(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), PI / 2.0, 0.0);
        assert!((a - Vec3::new(0.0, 1.0, 0.0)).max_abs() < 1e-15);
        assert!((b - Vec3::new(0.0, -1.0, 0.0)).max_abs() < 1e-15);
    }

    #[test]
    fn grazing_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let v = random_vec(&mut rng, 3.0);
            let w = random_vec(&mut rng, 3.0);
            let theta = PI * rng.random::<f64>().max(1e-9);
            let phi = 2.0 * PI * rng.random::<f64>();
            let (a, _) = post_collision(v, w, theta, phi);
            let lhs = (a - v).norm();
            let rhs = 0.5 * theta * (v - w).norm();
            assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn azimuthal_averages_do_not_depend_on_frame() {
        // Replace (I, J) by a rotated pair and compare φ-averages of a polynomial in v'.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 64;
        for _ in 0..50 {
            let v = random_vec(&mut rng, 2.0);
            let w = random_vec(&mut rng, 2.0);
            let theta = PI * rng.random::<f64>();
            let base = build_frame(v - w);
            let rot: f64 = 2.0 * PI * rng.random::<f64>();
            let (s, c) = rot.sin_cos();
            let rotated = CollisionFrame {
                x: base.x,
                i: base.i * c + base.j * s,
                j: base.j * c - base.i * s,
            };
            let poly = |u: Vec3| {
                let n2 = u.norm_squared();
                n2 * n2 * n2 + u.x() * u.y() * u.z() + u.x().powi(3)
            };
            let avg = |f: &CollisionFrame<f64>| {
                (0..m)
                    .map(|k| {
                        let phi = 2.0 * PI * k as f64 / m as f64;
                        poly(post_collision_in_frame(f, v, w, theta, phi).0)
                    })
                    .sum::<f64>()
                    / m as f64
            };
            let (a, b) = (avg(&base), avg(&rotated));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn angular_rate_closed_form() {
        let p = KernelParams::new(1.0, 1.0).unwrap();
        let r = angular_rate(&p, 0.01).unwrap();
        let expected = 2.0 * PI * (100.0 - 1.0 / PI);
        assert!((r - expected).abs() < 1e-12 * expected);
        assert!(angular_rate(&p, PI).unwrap().abs() < 1e-15);
        assert!(angular_rate(&p, 0.005).unwrap() > r);
        assert!(matches!(angular_rate(&p, 0.0), Err(KernelError::DivergentRate(_))));
        assert!(matches!(angular_rate(&p, -1.0), Err(KernelError::DivergentRate(_))));
    }

    #[test]
    fn sample_theta_endpoints_and_midpoint() {
        let p = KernelParams::<f64>::new(1.0, 1.0).unwrap().with_cutoff(0.01).unwrap();
        assert!((sample_theta(&p, 0.0) - 0.01).abs() < 1e-15);
        assert!((sample_theta(&p, 1.0) - PI).abs() < 1e-12);
        let mid = sample_theta(&p, 0.5);
        let expected = 1.0 / (100.0 - 0.5 * (100.0 - 1.0 / PI));
        assert!((mid - expected).abs() < 1e-14);
        assert!((mid - 0.01994).abs() < 1e-5);
    }

    #[test]
    fn sample_theta_matches_cdf() {
        let p = KernelParams::new(1.0, 0.5).unwrap().with_cutoff(1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| sample_theta(&p, rng.random::<f64>())).collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let f = theta_cdf(&p, x);
                (f - k as f64 / n as f64)
                    .abs()
                    .max((f - (k + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn params_validation() {
        assert!(KernelParams::new(0.0, 1.0).is_err());
        assert!(KernelParams::new(1.5, 1.0).is_err());
        assert!(KernelParams::new(1.0, 2.0).is_err());
        assert!(KernelParams::new(1.0, 1.0).unwrap().with_cutoff(4.0).is_err());
        assert!(KernelParams::new(1.0, 1.0).unwrap().with_kappa(1.0, 0.5, 2.0).is_err());
        let p = KernelParams::new(1.0, 1.0).unwrap().with_kappa(0.5, 1.0, 2.0).unwrap();
        for theta in [1e-6, 0.1, 1.0, PI] {
            let b = p.beta(theta);
            let env = theta.powf(-p.nu - 1.0);
            assert!(p.kappa1 * env <= b && b <= p.kappa2 * env);
        }
    }

    #[test]
    fn single_precision_collisions_conserve() {
        let v = Vec3::<f32>::new(1.0, 0.5, -0.25);
        let w = Vec3::<f32>::new(-0.5, 0.25, 1.0);
        let (a, b) = post_collision(v, w, 0.7_f32, 1.1_f32);
        assert!(((a + b) - (v + w)).max_abs() < 1e-6);
        let e0 = v.norm_squared() + w.norm_squared();
        assert!((a.norm_squared() + b.norm_squared() - e0).abs() < 1e-5 * e0);
    }
}
