//! Moment flux of the collision operator and the ODE barrier for `m_{2n}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_stderr, Ensemble, MomentError};
use crate::kernel::KernelParams;
use crate::povzner::PovznerKernel;
use crate::scalar::compensated_sum;

/// Largest ensemble for which the flux is summed over all pairs.
pub const EXACT_FLUX_LIMIT: usize = 5000;
const SAMPLED_PAIRS: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxEstimate {
    pub value: f64,
    /// Zero for the exact double sum.
    pub stderr: f64,
    pub pairs: usize,
    pub exact: bool,
}

/// `d/dt m_{2n} = (1/N²) Σ_{i,j} D_n(v_i, v_j) |v_i - v_j|^γ` for the
/// empirical measure. Exact for `N <= 5000`, otherwise estimated from
/// uniformly sampled pairs with a fixed seed.
pub fn collision_moment_flux(
    ens: &Ensemble,
    n: usize,
    params: &KernelParams<f64>,
) -> Result<FluxEstimate, MomentError> {
    let kernel = PovznerKernel::new(params, n)?;
    Ok(flux_with_kernel(ens, &kernel, params.gamma, SAMPLED_PAIRS, 0))
}

/// As [`collision_moment_flux`] with a precomputed (possibly truncated) kernel.
pub fn flux_with_kernel(
    ens: &Ensemble,
    kernel: &PovznerKernel,
    gamma: f64,
    sampled_pairs: usize,
    seed: u64,
) -> FluxEstimate {
    let vs = ens.velocities();
    let nf = vs.len() as f64;
    let pair = |i: usize, j: usize| kernel.eval(vs[i], vs[j]) * (vs[i] - vs[j]).norm().powf(gamma);
    if vs.len() <= EXACT_FLUX_LIMIT {
        let rows: Vec<f64> = (0..vs.len())
            .into_par_iter()
            .map(|i| compensated_sum((i + 1..vs.len()).map(|j| pair(i, j))))
            .collect();
        return FluxEstimate {
            value: 2.0 * compensated_sum(rows) / (nf * nf),
            stderr: 0.0,
            pairs: vs.len() * (vs.len() - 1) / 2,
            exact: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..sampled_pairs)
        .map(|_| {
            let i = rng.random_range(0..vs.len());
            let mut j = rng.random_range(0..vs.len() - 1);
            if j >= i {
                j += 1;
            }
            pair(i, j)
        })
        .collect();
    let (mean, se) = mean_stderr(draws);
    let off_diagonal = (nf - 1.0) / nf;
    FluxEstimate {
        value: off_diagonal * mean,
        stderr: off_diagonal * se,
        pairs: sampled_pairs,
        exact: false,
    }
}

/// Solution of `m' = -(c1/2) m^{1+β} + A_n`, `β = γ/(2n-2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub t: Vec<f64>,
    pub m: Vec<f64>,
    /// `(C, β, m*)` of the barrier `C t^{-1/β} + m*` for an infinite start.
    pub closed_form: Option<(f64, f64, f64)>,
}

impl Curve {
    /// Closed form where available, else linear interpolation between steps
    /// (an upper bound on the convex decreasing branch).
    pub fn eval(&self, t: f64) -> f64 {
        if let Some((c, beta, m_star)) = self.closed_form {
            return c * t.powf(-1.0 / beta) + m_star;
        }
        match self.t.partition_point(|&s| s <= t) {
            0 => self.m[0],
            k if k == self.t.len() => *self.m.last().expect("non-empty curve"),
            k => {
                let (t0, t1) = (self.t[k - 1], self.t[k]);
                let w = (t - t0) / (t1 - t0);
                self.m[k - 1] * (1.0 - w) + self.m[k] * w
            }
        }
    }
}

/// Integrates the upper barrier for `m_{2n}` on `[0, t_end]`. `m0 = +inf`
/// selects the exact supersolution `C t^{-1/β} + m*` with
/// `C = (β c1/2)^{-1/β}` and `m* = (2 A_n/c1)^{1/(1+β)}`.
pub fn supersolution_ode(n: usize, m0: f64, c1: f64, a_n: f64, gamma: f64, t_end: f64) -> Result<Curve, MomentError> {
    if n < 2 || !(c1 > 0.0) || !(a_n >= 0.0) || !(gamma > 0.0 && gamma <= 1.0) || !(t_end > 0.0) || !(m0 > 0.0) {
        return Err(MomentError::InvalidArgument(format!(
            "need n >= 2, c1 > 0, A_n >= 0, gamma in (0, 1], t_end > 0, m0 > 0; got n={n}, c1={c1}, A_n={a_n}, gamma={gamma}, t_end={t_end}, m0={m0}"
        )));
    }
    let beta = gamma / (2.0 * n as f64 - 2.0);
    let m_star = (2.0 * a_n / c1).powf(1.0 / (1.0 + beta));
    if m0.is_infinite() {
        let c = (beta * c1 / 2.0).powf(-1.0 / beta);
        let t: Vec<f64> = (0..=200)
            .map(|k| t_end * 10f64.powf(-6.0 + 6.0 * k as f64 / 200.0))
            .collect();
        let m = t.iter().map(|&s| c * s.powf(-1.0 / beta) + m_star).collect();
        return Ok(Curve {
            t,
            m,
            closed_form: Some((c, beta, m_star)),
        });
    }
    let rhs = |m: f64| -0.5 * c1 * m.powf(1.0 + beta) + a_n;
    // Bogacki–Shampine 3(2) with FSAL
    let (rtol, atol) = (1e-10, 1e-14 * m0.max(1.0));
    let h_max = t_end / 200.0;
    let (mut t, mut m) = (0.0, m0);
    let mut k1 = rhs(m);
    let mut h = (1e-3 * m0 / k1.abs().max(1e-300)).min(h_max);
    let (mut ts, mut ms) = (vec![t], vec![m]);
    while t < t_end {
        h = h.min(t_end - t);
        if h < 1e-14 * (1.0 + t) {
            return Err(MomentError::StepUnderflow { t });
        }
        let k2 = rhs(m + 0.5 * h * k1);
        let k3 = rhs(m + 0.75 * h * k2);
        let next = m + h * (2.0 * k1 + 3.0 * k2 + 4.0 * k3) / 9.0;
        let k4 = rhs(next);
        let low = m + h * (7.0 * k1 / 24.0 + k2 / 4.0 + k3 / 3.0 + k4 / 8.0);
        let err = (next - low).abs();
        let tol = atol + rtol * next.abs().max(m.abs());
        if err <= tol && next > 0.0 {
            t += h;
            m = next;
            k1 = k4;
            ts.push(t);
            ms.push(m);
        }
        let factor = if err == 0.0 {
            4.0
        } else {
            (0.9 * (tol / err).powf(1.0 / 3.0)).clamp(0.2, 4.0)
        };
        h = (h * factor).min(h_max);
    }
    Ok(Curve {
        t: ts,
        m: ms,
        closed_form: None,
    })
}
