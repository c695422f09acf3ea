//! Deterministic verification of the non-cutoff Povzner inequality
//!
//! ```text
//! D_n(v,v*) <= -λ1 n^{ν/2} (|v|^{2n} + |v*|^{2n})
//!              + λ2 Σ_{a=1}^{n-1} C(n,a) (n^{ν/2}/(n-a)^{ν/2+1} + 1/a)
//!                   (|v|^{2a}|v*|^{2(n-a)} + |v|^{2(n-a)}|v*|^{2a})
//! ```
//!
//! where `D_n(v,v*) = ∫_0^π ∫_0^{2π} [|v'|^{2n} + |v'*|^{2n} - |v|^{2n} - |v*|^{2n}] dφ β(θ) dθ`.
//!
//! `λ1 = 2π ζ1` with the explicit `ζ1 = κ1 / (20 (2-ν))` from the lower bound
//! `a_n >= ζ1 n^{ν/2}`. `λ2 = 2π ζ2` where `ζ2` bounds
//! `C(n,a) J_{n,a} / (n^{ν/2}/(n-a)^{ν/2+1} + 1/a)`; it is calibrated on a finite
//! grid with a 5% margin, so the certificate is only claimed on that grid.

mod calibrate;
mod expansion;
mod integrals;

pub use calibrate::{
    calibrate_constants, certify, povzner_rhs_scaled, split_weight, ConstantSource, Constants, PovznerGrid,
    PovznerReport, SlackPoint, ZETA2_MARGIN,
};
pub use expansion::{half_angle_weights, ln_theta_average, loss_weight, theta_average_exact, PairPolynomial};
pub use integrals::{a_n_detailed, a_n_integral, i_integral, j_detailed, j_integral, k_sum, IntegralTable};

use thiserror::Error;

use crate::combinatorics::LnFactorials;
use crate::kernel::KernelParams;
use crate::quadrature::{integrate_graded, Options, QuadratureError};
use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PovznerError {
    #[error("order n must be at least 1")]
    ZeroOrder,
    #[error("order n must be at least 2, got {0}")]
    OrderBelowTwo(usize),
    #[error("deflection angle must lie in (0, pi], got {0}")]
    Angle(f64),
    #[error("split index must satisfy 1 <= a <= n-1, got n={n}, a={a}")]
    SplitIndex { n: usize, a: usize },
    #[error("I_{{{i},{j},{k}}} diverges at theta = 0")]
    NonIntegrable { i: usize, j: usize, k: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// `D_n` in units of `s^{2n}` with `s = max(|v|, |v*|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionIntegral<T> {
    pub n: usize,
    /// `D_n(v/s, v*/s)`.
    pub scaled: T,
    /// Quadrature error estimate on `scaled`.
    pub error: T,
    /// `s = max(|v|, |v*|)`.
    pub scale: T,
}

impl<T: Real> CollisionIntegral<T> {
    /// `D_n(v, v*) = s^{2n} · scaled`; may overflow to `±inf` for huge speeds.
    pub fn value(&self) -> T {
        self.scaled * self.scale.powi(2 * self.n as i32)
    }
}

const COLLISION_TOL: f64 = 1e-8;

/// `D_n(v, v*)` by adaptive quadrature over `θ` of the closed-form azimuthal average.
pub fn collision_functional<T: Real>(
    n: usize,
    v: Vec3<T>,
    vstar: Vec3<T>,
    params: &KernelParams<T>,
) -> Result<T, PovznerError> {
    Ok(collision_functional_detailed(n, v, vstar, params, &LnFactorials::new(n))?.value())
}

/// As [`collision_functional`] but reports the scaled value and error estimate.
/// `lnf` must cover `0..=n`.
pub fn collision_functional_detailed<T: Real>(
    n: usize,
    v: Vec3<T>,
    vstar: Vec3<T>,
    params: &KernelParams<T>,
    lnf: &LnFactorials,
) -> Result<CollisionIntegral<T>, PovznerError> {
    if n < 2 {
        return Err(PovznerError::OrderBelowTwo(n));
    }
    let scale = v.norm().max(vstar.norm());
    if scale == T::zero() {
        return Ok(CollisionIntegral {
            n,
            scaled: T::zero(),
            error: T::zero(),
            scale,
        });
    }
    let (u, w) = (v * scale.recip(), vstar * scale.recip());
    let poly = PairPolynomial::from_velocities(n, u, w, lnf);
    let mut scratch = Vec::with_capacity(n + 1);
    let mut opts = Options::with_tol(COLLISION_TOL);
    // Pairs with v ≈ v* cancel to rounding noise; accept an absolute error
    // far below the size of the loss term instead.
    opts.abs_tol =
        T::c(1e-2 * COLLISION_TOL * loss_scale(n, params.nu.to_f64_lossy(), params.kappa.to_f64_lossy())) * poly.pure;
    let r = integrate_graded(
        |theta: T| {
            let (x, y) = half_angle_weights(theta);
            params.beta_weighted(poly.azimuthal_gain(x, y, &mut scratch), theta)
        },
        T::PI(),
        &opts,
    )?;
    Ok(CollisionIntegral {
        n,
        scaled: T::TAU() * r.value,
        error: T::TAU() * r.error,
        scale,
    })
}

/// Upper bound for `a_n` from `1 - x^n - y^n <= min(1, n θ²/4)`.
fn loss_scale(n: usize, nu: f64, kappa: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let t0 = (2.0 / (n as f64).sqrt()).min(pi);
    let near = n as f64 * t0.powf(2.0 - nu) / (4.0 * (2.0 - nu));
    let far = (t0.powf(-nu) - pi.powf(-nu)) / nu;
    kappa * (near + far)
}

/// Precomputed `a_n` and `J_{n,a}` for one order, evaluating
/// `D_n(v,v*) = 2π [ -a_n (|v|^{2n} + |v*|^{2n}) + Σ_a J_{n,a} P_a(v,v*) ]`
/// without a quadrature per pair. Optionally restricted to `θ >= lower`.
#[derive(Clone, Debug)]
pub struct PovznerKernel {
    pub n: usize,
    pub a_n: f64,
    pub j: Vec<f64>,
    lnf: LnFactorials,
}

impl PovznerKernel {
    pub fn new(params: &KernelParams<f64>, n: usize) -> Result<Self, PovznerError> {
        Self::with_lower_cutoff(params, n, 0.0)
    }

    /// Integrals taken over `[lower, π]` only (the kernel seen by a particle
    /// solver with angular cutoff `lower`).
    pub fn with_lower_cutoff(params: &KernelParams<f64>, n: usize, lower: f64) -> Result<Self, PovznerError> {
        if n < 2 {
            return Err(PovznerError::OrderBelowTwo(n));
        }
        let opts = Options::with_tol(1e-11);
        let restrict = |theta: f64| if theta < lower { 0.0 } else { 1.0 };
        let mesh_start = |f: &dyn Fn(f64) -> f64| -> Result<f64, PovznerError> {
            if lower > 0.0 {
                Ok(crate::quadrature::integrate(f, lower, std::f64::consts::PI, &opts)?.value)
            } else {
                Ok(integrate_graded(f, std::f64::consts::PI, &opts)?.value)
            }
        };
        let a_n = mesh_start(&|theta| {
            let (x, y) = half_angle_weights(theta);
            params.beta_weighted(restrict(theta) * loss_weight(n, x, y), theta)
        })?;
        let mut j = Vec::with_capacity(n - 1);
        for a in 1..n {
            let (ai, bi) = (a as i32, (n - a) as i32);
            j.push(mesh_start(&|theta| {
                let (x, y) = half_angle_weights(theta);
                params.beta_weighted(restrict(theta) * x.powi(ai) * y.powi(bi), theta)
            })?);
        }
        Ok(Self {
            n,
            a_n,
            j,
            lnf: LnFactorials::new(n),
        })
    }

    /// `D_n(v, v*)`.
    pub fn eval(&self, v: Vec3, vstar: Vec3) -> f64 {
        let scale = v.norm().max(vstar.norm());
        if scale == 0.0 {
            return 0.0;
        }
        let (u, w) = (v * scale.recip(), vstar * scale.recip());
        let poly = PairPolynomial::from_velocities(self.n, u, w, &self.lnf);
        let gain: f64 = poly.mixed.iter().zip(&self.j).map(|(c, j)| c * j).sum();
        std::f64::consts::TAU * (gain - self.a_n * poly.pure) * scale.powi(2 * self.n as i32)
    }
}
