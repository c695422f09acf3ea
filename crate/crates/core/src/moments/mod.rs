//! Moments of empirical velocity distributions, the interpolation
//! inequalities between them, series/exponential-moment conversions and the
//! moment flux of the collision operator.

mod flux;
mod inequalities;
mod series;

pub use flux::{collision_moment_flux, supersolution_ode, Curve, FluxEstimate, EXACT_FLUX_LIMIT};
pub use inequalities::{check_holder_interp, check_log_convexity, check_pointwise_bound, check_step4_pointwise};
pub use series::{
    check_step4_propagation, exp_moment, exp_to_series, s_n, series_functionals, series_to_exp, SeriesForm,
    SeriesReport, SeriesToExp, SERIES_TO_EXP_ORDERS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{log_sum_exp, CompensatedSum, Real};
use crate::vec3::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("ensemble is empty")]
    Empty,
    #[error("velocity {index} is not finite")]
    NonFinite { index: usize },
    #[error("all particles share one velocity; the energy cannot be normalized")]
    Degenerate,
    #[error("ensemble is not normalized (defect {defect:e})")]
    NotNormalized { defect: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hypothesis fails: {0}")]
    Hypothesis(String),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error(transparent)]
    Povzner(#[from] crate::povzner::PovznerError),
}

/// Tolerance on `|Σ v_i|/N` and `|m_2 - 1|` for the `normalized` flag.
pub fn normalization_tol<T: Real>() -> f64 {
    (64.0 * T::epsilon().to_f64_lossy()).max(1e-12)
}

/// Looser tolerance accepted by the checks that assume `m_0 = m_2 = 1` and
/// zero momentum, so that states produced by long simulations (energy drift
/// from rounding only) qualify.
pub fn analysis_tol<T: Real>() -> f64 {
    (1e4 * T::epsilon().to_f64_lossy()).max(1e-9)
}

/// Empirical measure `(1/N) Σ δ_{v_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble<T = f64> {
    velocities: Vec<Vec3<T>>,
    normalized: bool,
}

impl<T: Real> Ensemble<T> {
    pub fn new(velocities: Vec<Vec3<T>>) -> Result<Self, MomentError> {
        if velocities.is_empty() {
            return Err(MomentError::Empty);
        }
        if let Some(index) = velocities.iter().position(|v| !v.is_finite()) {
            return Err(MomentError::NonFinite { index });
        }
        let mut ens = Self {
            velocities,
            normalized: false,
        };
        ens.normalized = ens.normalization_defect() <= normalization_tol::<T>();
        Ok(ens)
    }

    /// Applies `v ↦ (v - v̄)/s` with `s² = m_2` of the centered sample.
    pub fn normalized(velocities: Vec<Vec3<T>>) -> Result<Self, MomentError> {
        let mut ens = Self::new(velocities)?;
        ens.normalize()?;
        Ok(ens)
    }

    pub fn normalize(&mut self) -> Result<(), MomentError> {
        let mean = self.mean();
        let mut acc = CompensatedSum::new();
        for v in &mut self.velocities {
            *v -= mean;
            acc.add(v.norm_squared());
        }
        let m2 = acc.value() / T::from_usize_lossy(self.len());
        if !(m2 > T::zero()) {
            return Err(MomentError::Degenerate);
        }
        let inv = m2.sqrt().recip();
        for v in &mut self.velocities {
            *v = v.scale(inv);
        }
        self.normalized = self.normalization_defect() <= normalization_tol::<T>();
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    #[inline]
    pub fn velocities(&self) -> &[Vec3<T>] {
        &self.velocities
    }

    pub fn into_velocities(self) -> Vec<Vec3<T>> {
        self.velocities
    }

    /// Whether zero momentum and unit energy held (to [`normalization_tol`])
    /// when the ensemble was built or last normalized.
    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mean(&self) -> Vec3<T> {
        let mut acc = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
        for v in &self.velocities {
            for (a, c) in acc.iter_mut().zip(v.0) {
                a.add(c);
            }
        }
        let n = T::from_usize_lossy(self.len());
        Vec3(acc.map(|a| a.value() / n))
    }

    /// `max(|Σ v_i|/N, |m_2 - 1|)`.
    pub fn normalization_defect(&self) -> f64 {
        let mean = self.mean().norm().to_f64_lossy();
        let m2 = moment(self, 2.0).to_f64_lossy();
        mean.max((m2 - 1.0).abs())
    }

    /// Errors unless the ensemble is normalized to [`analysis_tol`].
    pub fn require_normalized(&self) -> Result<(), MomentError> {
        if self.normalized {
            return Ok(());
        }
        let defect = self.normalization_defect();
        if defect <= analysis_tol::<T>() {
            Ok(())
        } else {
            Err(MomentError::NotNormalized { defect })
        }
    }

    pub fn max_speed(&self) -> T {
        self.velocities.iter().map(|v| v.norm()).fold(T::zero(), T::max)
    }

    pub fn speeds(&self) -> impl Iterator<Item = T> + '_ {
        self.velocities.iter().map(|v| v.norm())
    }

    pub fn cast<U: Real>(&self) -> Ensemble<U> {
        Ensemble::new(self.velocities.iter().map(|v| v.cast()).collect()).expect("finite input stays finite")
    }
}

/// `m_p = (1/N) Σ |v_i|^p`, with `m_0 = 1` exactly.
pub fn moment<T: Real>(ens: &Ensemble<T>, p: f64) -> T {
    if p == 0.0 {
        return T::one();
    }
    let half = T::c(p / 2.0);
    let even = (p / 2.0).fract() == 0.0 && p / 2.0 <= i32::MAX as f64;
    let acc: CompensatedSum<T> = ens
        .velocities
        .iter()
        .map(|v| {
            let r2 = v.norm_squared();
            if even {
                r2.powi((p / 2.0) as i32)
            } else {
                r2.powf(half)
            }
        })
        .collect();
    acc.value() / T::from_usize_lossy(ens.len())
}

/// `ln m_p`, finite for every order the speeds allow (`-inf` if all speeds vanish).
pub fn ln_moment<T: Real>(ens: &Ensemble<T>, p: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let logs: Vec<f64> = ens
        .velocities
        .iter()
        .map(|v| 0.5 * p * v.norm_squared().to_f64_lossy().ln())
        .collect();
    log_sum_exp(&logs) - (ens.len() as f64).ln()
}

/// Moment estimates with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub orders: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Replicates averaged (1 means the error is the within-sample one).
    pub n_seeds: usize,
    /// Largest even order `2n` tracked.
    pub n_max: usize,
}

impl MomentTable {
    /// Even orders `0, 2, ..., 2 n_max` followed by `2n + γ` for `n = 1..=n_max`.
    pub fn standard_orders(n_max: usize, gamma: f64) -> Vec<f64> {
        let mut orders: Vec<f64> = (0..=n_max).map(|n| 2.0 * n as f64).collect();
        orders.extend((1..=n_max).map(|n| 2.0 * n as f64 + gamma));
        orders
    }

    /// Single ensemble: standard error `sd(|v|^p)/√N`.
    pub fn from_ensemble<T: Real>(ens: &Ensemble<T>, orders: &[f64]) -> Self {
        let n = ens.len() as f64;
        let mut values = Vec::with_capacity(orders.len());
        let mut stderr = Vec::with_capacity(orders.len());
        for &p in orders {
            let m = moment(ens, p).to_f64_lossy();
            let m2 = if p == 0.0 {
                1.0
            } else {
                moment(ens, 2.0 * p).to_f64_lossy()
            };
            values.push(m);
            let var = (m2 - m * m).max(0.0) * n / (n - 1.0).max(1.0);
            stderr.push((var / n).sqrt());
        }
        Self {
            orders: orders.to_vec(),
            values,
            stderr,
            n_seeds: 1,
            n_max: max_even(orders),
        }
    }

    /// Replicate mean, standard error `sd/√R` across replicates (the
    /// within-sample error when only one replicate is given).
    pub fn from_replicates<T: Real>(replicates: &[Ensemble<T>], orders: &[f64]) -> Result<Self, MomentError> {
        match replicates {
            [] => Err(MomentError::Empty),
            [one] => Ok(Self::from_ensemble(one, orders)),
            many => {
                let rows: Vec<Vec<f64>> = many
                    .iter()
                    .map(|e| orders.iter().map(|&p| moment(e, p).to_f64_lossy()).collect())
                    .collect();
                Ok(Self::from_rows(orders, &rows))
            }
        }
    }

    /// Aggregates per-replicate moment rows (`rows[r][k]` is order `orders[k]`).
    pub fn from_rows(orders: &[f64], rows: &[Vec<f64>]) -> Self {
        let (values, stderr): (Vec<f64>, Vec<f64>) = (0..orders.len())
            .map(|k| mean_stderr(rows.iter().map(|r| r[k])))
            .unzip();
        Self {
            orders: orders.to_vec(),
            values,
            stderr,
            n_seeds: rows.len(),
            n_max: max_even(orders),
        }
    }

    pub fn get(&self, order: f64) -> Option<(f64, f64)> {
        self.orders
            .iter()
            .position(|&p| (p - order).abs() < 1e-12)
            .map(|k| (self.values[k], self.stderr[k]))
    }
}

fn max_even(orders: &[f64]) -> usize {
    orders
        .iter()
        .filter(|p| p.fract() == 0.0 && (**p as usize).is_multiple_of(2))
        .fold(0.0_f64, |a, &b| a.max(b)) as usize
}

/// Sample mean and its standard error; the error is `0` for fewer than two values.
pub fn mean_stderr(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = values.into_iter().collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Random normalized ensemble of `n` particles with isotropic directions and
/// a speed law picked at random among a half-normal, the stretched
/// exponential `s²`, `s ~ Gamma(6, 1)`, a uniform law on `[0, 3)` and a
/// Pareto-type tail `u^{-1/9}`.
pub fn random_ensemble<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Ensemble {
    use rand_distr::{Distribution, Gamma, StandardNormal};
    let kind = rng.random_range(0..4);
    let vs = (0..n)
        .map(|_| {
            let dir = Vec3::<f64>::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            let dir = dir.scale(dir.norm().recip());
            let r: f64 = match kind {
                0 => {
                    let g: f64 = StandardNormal.sample(rng);
                    g.abs()
                }
                1 => Gamma::<f64>::new(6.0, 1.0).unwrap().sample(rng).powi(2),
                2 => rng.random_range(0.0..3.0),
                _ => {
                    let u: f64 = rng.random_range(1e-6..1.0);
                    u.powf(-1.0 / 9.0)
                }
            };
            dir.scale(r)
        })
        .collect();
    Ensemble::normalized(vs).expect("non-degenerate sample")
}

#[cfg(test)]
pub(crate) mod testing {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub use super::random_ensemble;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }
}
