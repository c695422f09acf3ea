//! Mittag-Leffler-type moment series and their relation to exponential moments.

use serde::{Deserialize, Serialize};

use super::{Ensemble, MomentError};
use crate::combinatorics::LnFactorials;
use crate::kernel::KernelParams;
use crate::scalar::{log_sum_exp, CompensatedSum, Real};

/// Orders `n <= 50` are inspected by [`series_to_exp`] and [`exp_to_series`].
pub const SERIES_TO_EXP_ORDERS: usize = 50;

/// `ln m_q` for many orders `q` from one pass over `ln |v|²`.
pub(crate) struct LnMoments {
    ln_r2: Vec<f64>,
    ln_n: f64,
}

impl LnMoments {
    pub(crate) fn new<T: Real>(ens: &Ensemble<T>) -> Self {
        Self {
            ln_r2: ens
                .velocities()
                .iter()
                .map(|v| v.norm_squared().to_f64_lossy().ln())
                .collect(),
            ln_n: (ens.len() as f64).ln(),
        }
    }

    pub(crate) fn get(&self, q: f64) -> f64 {
        if q == 0.0 {
            return 0.0;
        }
        let logs: Vec<f64> = self.ln_r2.iter().map(|l| 0.5 * q * l).collect();
        log_sum_exp(&logs) - self.ln_n
    }
}

/// How the series weights depend on time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum SeriesForm {
    /// Weights `(σt)^{2n/γ}`.
    Creation { t: f64 },
    /// Weights `σ^n`.
    Propagation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub sigma: f64,
    pub alpha: f64,
    /// `2/α`, the order of the matching exponential moment.
    pub rho: f64,
    pub p: usize,
    pub form: SeriesForm,
    pub gamma: f64,
    pub nu: f64,
    /// `Σ_{n=0}^p w_n m_{2n}/(n!)^α`.
    pub e_p: f64,
    /// `E_p` accumulated from `n = p` down to `0`.
    pub e_p_reverse: f64,
    /// `Σ_{n=2}^p n^{ν/2} w_n m_{2n+γ}/(n!)^α`.
    pub f_p: f64,
    /// `Σ_{n=2}^p w_n S_n/(n!)^α`.
    pub g_p: f64,
    /// `Σ_{n=1}^p n (σt)^{2n/γ-1} m_{2n}/(n!)^α`; creation form only.
    pub h_p: Option<f64>,
    /// `(1/N) Σ exp(s |v_i|^ρ)` with `s = σ t^{ρ/γ}` (creation) or `s = σ`.
    pub exp_moment: f64,
    /// `S_n` for `n = 0..=p` (zero below 2).
    pub s_n: Vec<f64>,
    /// Geometric estimate of the omitted tail of `E_p`.
    pub truncation_tail_bound: f64,
    /// Last included term of `E_p` exceeds `1e-12` of the sum.
    pub truncated: bool,
}

/// `S_n = Σ_{a=1}^{⌊n/2⌋} C(n,a) n^{ν/2}/a^{ν/2+1} m_{2a} m_{2(n-a)+γ}`.
pub fn s_n<T: Real>(ens: &Ensemble<T>, n: usize, params: &KernelParams<f64>) -> Result<f64, MomentError> {
    if n < 2 {
        return Err(MomentError::InvalidArgument(format!("S_n needs n >= 2, got {n}")));
    }
    let lm = LnMoments::new(ens);
    Ok(s_n_with(&lm, &LnFactorials::new(n), n, params))
}

fn s_n_with(lm: &LnMoments, lnf: &LnFactorials, n: usize, params: &KernelParams<f64>) -> f64 {
    let (nu, gamma) = (params.nu, params.gamma);
    let nf = n as f64;
    (1..=n / 2)
        .map(|a| {
            let af = a as f64;
            (lnf.ln_binomial(n, a) + 0.5 * nu * nf.ln() - (0.5 * nu + 1.0) * af.ln()
                + lm.get(2.0 * af)
                + lm.get(2.0 * (nf - af) + gamma))
            .exp()
        })
        .collect::<CompensatedSum<f64>>()
        .value()
}

/// `(1/N) Σ exp(σ |v_i|^ρ)`, `+inf` when not representable.
pub fn exp_moment<T: Real>(ens: &Ensemble<T>, sigma: f64, rho: f64) -> f64 {
    let logs: Vec<f64> = ens
        .velocities()
        .iter()
        .map(|v| sigma * v.norm_squared().to_f64_lossy().powf(0.5 * rho))
        .collect();
    (log_sum_exp(&logs) - (ens.len() as f64).ln()).exp()
}

/// Evaluates `E_p, F_p, G_p, H_p`, `S_n` and the matching exponential moment.
pub fn series_functionals<T: Real>(
    ens: &Ensemble<T>,
    sigma: f64,
    alpha: f64,
    p: usize,
    params: &KernelParams<f64>,
    form: SeriesForm,
) -> Result<SeriesReport, MomentError> {
    if p < 2 || !(alpha >= 1.0) || !(sigma >= 0.0) {
        return Err(MomentError::InvalidArgument(format!(
            "need p >= 2, alpha >= 1, sigma >= 0; got p={p}, alpha={alpha}, sigma={sigma}"
        )));
    }
    let (gamma, nu) = (params.gamma, params.nu);
    let lm = LnMoments::new(ens);
    let lnf = LnFactorials::new(p);
    // ln of the weight base: w_n = exp(n · ln_w)
    let (ln_w, ln_st) = match form {
        SeriesForm::Creation { t } => {
            if !(t >= 0.0) {
                return Err(MomentError::InvalidArgument(format!("time must be >= 0, got {t}")));
            }
            let ln_st = (sigma * t).ln();
            (2.0 / gamma * ln_st, Some(ln_st))
        }
        SeriesForm::Propagation => (sigma.ln(), None),
    };
    let term = |n: usize, ln_m: f64| -> f64 {
        if n == 0 {
            return ln_m.exp();
        }
        (n as f64 * ln_w + ln_m - alpha * lnf.get(n)).exp()
    };

    let e_terms: Vec<f64> = (0..=p).map(|n| term(n, lm.get(2.0 * n as f64))).collect();
    let e_p = e_terms.iter().copied().collect::<CompensatedSum<f64>>().value();
    let e_p_reverse = e_terms.iter().rev().copied().collect::<CompensatedSum<f64>>().value();

    let f_p = (2..=p)
        .map(|n| (n as f64).powf(0.5 * nu) * term(n, lm.get(2.0 * n as f64 + gamma)))
        .collect::<CompensatedSum<f64>>()
        .value();

    let mut s = vec![0.0; p + 1];
    for (n, slot) in s.iter_mut().enumerate().skip(2) {
        *slot = s_n_with(&lm, &lnf, n, params);
    }
    let g_p = (2..=p)
        .map(|n| if s[n] > 0.0 { term(n, s[n].ln()) } else { 0.0 })
        .collect::<CompensatedSum<f64>>()
        .value();

    let h_p = ln_st.map(|ln_st| {
        (1..=p)
            .map(|n| {
                let nf = n as f64;
                (nf.ln() + (2.0 * nf / gamma - 1.0) * ln_st + lm.get(2.0 * nf) - alpha * lnf.get(n)).exp()
            })
            .collect::<CompensatedSum<f64>>()
            .value()
    });

    let rho = 2.0 / alpha;
    let s_eff = match form {
        SeriesForm::Creation { t } => sigma * t.powf(rho / gamma),
        SeriesForm::Propagation => sigma,
    };
    let last = e_terms[p];
    let prev = e_terms[p - 1];
    let ratio = if prev > 0.0 { last / prev } else { 0.0 };
    let truncation_tail_bound = if last == 0.0 {
        0.0
    } else if ratio < 1.0 {
        last * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    Ok(SeriesReport {
        sigma,
        alpha,
        rho,
        p,
        form,
        gamma,
        nu,
        e_p,
        e_p_reverse,
        f_p,
        g_p,
        h_p,
        exp_moment: exp_moment(ens, s_eff, rho),
        s_n: s,
        truncation_tail_bound,
        truncated: last > 1e-12 * e_p,
    })
}

/// `F_p >= σ^{-γ/2} (E_p - e)` for a propagation-form report on a normalized
/// ensemble with `σ ∈ (0, 1]` and `α >= 1`. A consequence of `m_0 = m_2 = 1`
/// alone, so `false` signals a defect in the inputs or the arithmetic.
pub fn check_step4_propagation<T: Real>(
    rep: &SeriesReport,
    ens: &Ensemble<T>,
    params: &KernelParams<f64>,
) -> Result<bool, MomentError> {
    if rep.form != SeriesForm::Propagation {
        return Err(MomentError::InvalidArgument("needs a propagation-form report".into()));
    }
    if !(rep.sigma > 0.0 && rep.sigma <= 1.0) || rep.alpha < 1.0 {
        return Err(MomentError::InvalidArgument(format!(
            "needs sigma in (0, 1] and alpha >= 1, got sigma={}, alpha={}",
            rep.sigma, rep.alpha
        )));
    }
    ens.require_normalized()?;
    let rhs = rep.sigma.powf(-0.5 * params.gamma) * (rep.e_p - std::f64::consts::E);
    // absolute 1e-10, scaled up with the size of E_p to absorb rounding
    Ok(rep.f_p >= rhs - 1e-10 * rep.e_p.max(1.0))
}

/// Outcome of the series-to-exponential-moment implication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum SeriesToExp {
    /// Hypothesis certified for all orders and `lhs <= rhs`.
    Holds { lhs: f64, rhs: f64 },
    /// Hypothesis certified for all orders but `lhs > rhs`.
    Violated { lhs: f64, rhs: f64 },
    /// `σ0^n m_{2n}/(n!)^α > K` for some `n <= 50`.
    HypothesisFails { sup: f64, n: usize },
    /// Hypothesis holds up to `n = 50` but the terms may still grow beyond.
    Unverifiable { sup: f64 },
}

impl SeriesToExp {
    pub fn is_violation(&self) -> bool {
        matches!(self, Self::Violated { .. })
    }
}

/// If `sup_n σ0^n m_{2n}/(n!)^α <= K` then `∫ exp(σ0^{1/α}|v|^{2/α}/2) <= 2 K^{1/α}`.
///
/// The supremum is evaluated for `n <= 50`; it extends to every `n` when
/// `σ0 R² <= 51^α` (`R` the largest speed), since the terms then decrease
/// from `n = 50` on.
pub fn series_to_exp<T: Real>(ens: &Ensemble<T>, sigma0: f64, alpha: f64, k: f64) -> Result<SeriesToExp, MomentError> {
    if !(sigma0 > 0.0 && alpha >= 1.0 && k >= 1.0) {
        return Err(MomentError::InvalidArgument(format!(
            "need sigma0 > 0, alpha >= 1, K >= 1; got {sigma0}, {alpha}, {k}"
        )));
    }
    let n_max = SERIES_TO_EXP_ORDERS;
    let lm = LnMoments::new(ens);
    let lnf = LnFactorials::new(n_max);
    let (mut ln_sup, mut arg) = (f64::NEG_INFINITY, 0);
    for n in 0..=n_max {
        let l = n as f64 * sigma0.ln() + lm.get(2.0 * n as f64) - alpha * lnf.get(n);
        if l > ln_sup {
            (ln_sup, arg) = (l, n);
        }
    }
    let sup = ln_sup.exp();
    if ln_sup > k.ln() + 1e-12 {
        return Ok(SeriesToExp::HypothesisFails { sup, n: arg });
    }
    let r2 = ens.max_speed().to_f64_lossy().powi(2);
    if sigma0 * r2 > ((n_max + 1) as f64).powf(alpha) {
        return Ok(SeriesToExp::Unverifiable { sup });
    }
    let lhs = exp_moment(ens, sigma0.powf(1.0 / alpha) / 2.0, 2.0 / alpha);
    let rhs = 2.0 * k.powf(1.0 / alpha);
    Ok(if lhs <= rhs * (1.0 + 1e-12) {
        SeriesToExp::Holds { lhs, rhs }
    } else {
        SeriesToExp::Violated { lhs, rhs }
    })
}

/// Largest `σ1 <= 1` with `σ1^n m_{2n}/(n!)^{2/ρ} <= 1` for all `n <= 50`,
/// given `∫ exp(σ0 |v|^ρ) <= K`. The constraint set is an interval, so the
/// maximizer is `min_n (m_{2n}/(n!)^{2/ρ})^{-1/n}` in closed form.
pub fn exp_to_series<T: Real>(ens: &Ensemble<T>, sigma0: f64, rho: f64, k: f64) -> Result<f64, MomentError> {
    if !(sigma0 > 0.0 && sigma0 <= 1.0 && rho > 0.0 && rho <= 2.0 && k > 1.0) {
        return Err(MomentError::InvalidArgument(format!(
            "need sigma0 in (0, 1], rho in (0, 2], K > 1; got {sigma0}, {rho}, {k}"
        )));
    }
    let em = exp_moment(ens, sigma0, rho);
    if em > k {
        return Err(MomentError::Hypothesis(format!(
            "exponential moment {em} exceeds K = {k}"
        )));
    }
    let n_max = SERIES_TO_EXP_ORDERS;
    let lm = LnMoments::new(ens);
    let lnf = LnFactorials::new(n_max);
    let sigma1 = (1..=n_max)
        .map(|n| (-(lm.get(2.0 * n as f64) - 2.0 / rho * lnf.get(n)) / n as f64).exp())
        .fold(1.0_f64, f64::min);
    if sigma1 > 0.0 {
        Ok(sigma1)
    } else {
        Err(MomentError::Hypothesis("no positive sigma1".into()))
    }
}
