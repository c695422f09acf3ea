//! Deterministic and randomized verification suites built on the kernel,
//! Povzner and moment modules. Every suite returns a serializable report
//! with explicit violation records.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial_exact, vandermonde, LnFactorials};
use crate::kernel::{post_collision, KernelParams};
use crate::moments::{
    check_holder_interp, check_log_convexity, check_pointwise_bound, check_step4_pointwise, check_step4_propagation,
    random_ensemble, series_functionals, series_to_exp, MomentError, SeriesForm, SeriesToExp,
};
use crate::povzner::{
    a_n_integral, calibrate_constants, k_sum, split_weight, theta_average_exact, IntegralTable, PovznerError,
};
use crate::vec3::Vec3;

type V = Vec3<f64>;

/// Isotropic vector with log-uniform length in `[lo, hi]`.
fn random_vector<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> V {
    let d = loop {
        let g: V = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = g.norm();
        if n > 1e-12 {
            break g.scale(n.recip());
        }
    };
    let r = (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
    d.scale(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConservationReport {
    pub samples: usize,
    /// `max |Δ(v + v*)| / max(1, |v| + |v*|)`.
    pub max_momentum_error: f64,
    /// `max |Δ(|v|² + |v*|²)| / (|v|² + |v*|²)`.
    pub max_energy_error: f64,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
    pub seconds: f64,
}

/// Random collisions with speeds log-uniform in `[1e-3, 1e3]`, `θ` uniform in
/// `(0, π]` and `φ` uniform.
pub fn collision_conservation(samples: usize, seed: u64) -> ConservationReport {
    let start = Instant::now();
    let tolerance = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_p, mut max_e) = (0.0_f64, 0.0_f64);
    let mut violations = Vec::new();
    for k in 0..samples {
        let v = random_vector(&mut rng, 1e-3, 1e3);
        let w = random_vector(&mut rng, 1e-3, 1e3);
        let theta = std::f64::consts::PI * (1.0 - rng.random::<f64>());
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let (vp, wp) = post_collision(v, w, theta, phi);
        let dp = ((vp + wp) - (v + w)).norm() / (v.norm() + w.norm()).max(1.0);
        let e0 = v.norm_squared() + w.norm_squared();
        let de = (vp.norm_squared() + wp.norm_squared() - e0).abs() / e0;
        max_p = max_p.max(dp);
        max_e = max_e.max(de);
        if !(dp <= tolerance && de <= tolerance) {
            violations.push(Violation {
                check: "collision conservation".into(),
                detail: format!("sample {k}: momentum {dp:e}, energy {de:e}"),
            });
        }
    }
    ConservationReport {
        samples,
        max_momentum_error: max_p,
        max_energy_error: max_e,
        tolerance,
        violations,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedFormReport {
    pub samples: usize,
    pub nodes: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
}

/// Closed-form azimuthal average of `|v'|^{2n}` against the `nodes`-point
/// trapezoidal rule in `φ` (exact for the trigonometric polynomial once
/// `nodes > 2n`, up to rounding).
pub fn closed_form_vs_quadrature(
    samples: usize,
    n_max: usize,
    nodes: usize,
    seed: u64,
) -> Result<ClosedFormReport, PovznerError> {
    let tolerance = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut violations = Vec::new();
    for k in 0..samples {
        let n = rng.random_range(1..=n_max);
        let v = random_vector(&mut rng, 1e-1, 1e1);
        let w = random_vector(&mut rng, 1e-1, 1e1);
        let theta = std::f64::consts::PI * (1.0 - rng.random::<f64>());
        let exact = theta_average_exact(n, v, w, theta)?;
        let quad = (0..nodes)
            .map(|j| {
                let phi = std::f64::consts::TAU * j as f64 / nodes as f64;
                post_collision(v, w, theta, phi).0.norm_squared().powi(n as i32)
            })
            .sum::<f64>()
            / nodes as f64;
        let rel = (exact - quad).abs() / quad.abs();
        worst = worst.max(rel);
        if !(rel <= tolerance) {
            violations.push(Violation {
                check: "azimuthal closed form".into(),
                detail: format!("sample {k}: n={n}, theta={theta}, rel error {rel:e}"),
            });
        }
    }
    Ok(ClosedFormReport {
        samples,
        nodes,
        max_rel_error: worst,
        tolerance,
        violations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub nu: f64,
    pub n: usize,
    pub a_n: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBoundReport {
    /// Smallest `a_n / bound` seen.
    pub min_ratio: f64,
    pub rows: Vec<LowerBoundRow>,
    pub violations: Vec<Violation>,
}

/// `a_n >= κ1/(20(2-ν)) n^{ν/2}` for `2 <= n <= n_max` at each `ν` (with
/// `κ = κ1 = κ2 = 1`).
pub fn a_n_lower_bound(nus: &[f64], n_max: usize) -> Result<LowerBoundReport, PovznerError> {
    let rows: Vec<LowerBoundRow> = nus
        .iter()
        .flat_map(|&nu| (2..=n_max).map(move |n| (nu, n)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(nu, n)| {
            let params = KernelParams::new(1.0, nu).expect("nu in (0, 2)");
            let a_n = a_n_integral(n, &params)?;
            let bound = params.kappa1 / (20.0 * (2.0 - nu)) * (n as f64).powf(nu / 2.0);
            Ok(LowerBoundRow { nu, n, a_n, bound })
        })
        .collect::<Result<_, PovznerError>>()?;
    let violations = rows
        .iter()
        .filter(|r| !(r.a_n >= r.bound))
        .map(|r| Violation {
            check: "a_n lower bound".into(),
            detail: format!("nu={}, n={}: a_n={} < {}", r.nu, r.n, r.a_n, r.bound),
        })
        .collect();
    let min_ratio = rows.iter().map(|r| r.a_n / r.bound).fold(f64::INFINITY, f64::min);
    Ok(LowerBoundReport {
        min_ratio,
        rows,
        violations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitReport {
    pub nu: f64,
    pub n_max: usize,
    pub zeta2: f64,
    /// `max C(n,a) J_{n,a} / (ζ2 · split_weight)`; at most 1 when the bound holds.
    pub max_bound_ratio: f64,
    /// `ζ2` from orders `n <= 50` only, and the largest ratio it leaves over
    /// the full range (informational).
    pub zeta2_low_orders: f64,
    pub max_ratio_low_order_zeta2: f64,
    pub k_identity_max_rel_error: f64,
    pub vandermonde_checked: usize,
    pub violations: Vec<Violation>,
}

/// `C(n,a) J_{n,a} <= ζ2 (n^{ν/2}/(n-a)^{ν/2+1} + 1/a)` for `1 <= a < n <= n_max`,
/// `K_{n,a} = C(n,a)² J_{n,a}` for `n <= k_n_max` and Vandermonde's identity
/// `Σ_k C(a,k) C(b,k) = C(a+b,a)` for `a + b <= vandermonde_max`.
pub fn split_integral_bounds(
    nu: f64,
    n_max: usize,
    k_n_max: usize,
    vandermonde_max: u64,
) -> Result<SplitReport, PovznerError> {
    let params = KernelParams::new(1.0, nu).expect("nu in (0, 2)");
    let report = calibrate_constants(&params, n_max)?;
    let table = report.table.as_ref().expect("calibration keeps its table");
    let zeta2 = report.zeta2;
    let zeta2_low_orders = if n_max > 50 {
        let low = IntegralTable::compute(&params, 50)?;
        let lnf = LnFactorials::new(50);
        crate::povzner::ZETA2_MARGIN
            * (2..=50)
                .flat_map(|n| (1..n).map(move |a| (n, a)))
                .map(|(n, a)| lnf.ln_binomial(n, a).exp() * low.j(n, a) / split_weight(nu, n, a))
                .fold(f64::NEG_INFINITY, f64::max)
    } else {
        zeta2
    };
    let lnf = LnFactorials::new(n_max);
    let mut violations = Vec::new();
    let (mut max_ratio, mut max_low) = (0.0_f64, 0.0_f64);
    for n in 2..=n_max {
        for a in 1..n {
            let lhs = lnf.ln_binomial(n, a).exp() * table.j(n, a);
            let w = split_weight(nu, n, a);
            let ratio = lhs / (zeta2 * w);
            max_ratio = max_ratio.max(ratio);
            max_low = max_low.max(lhs / (zeta2_low_orders * w));
            if !(ratio <= 1.0) {
                violations.push(Violation {
                    check: "split integral bound".into(),
                    detail: format!("nu={nu}, n={n}, a={a}: ratio {ratio}"),
                });
            }
        }
    }
    let k_pairs: Vec<(usize, usize)> = (2..=k_n_max).flat_map(|n| (1..n).map(move |a| (n, a))).collect();
    let k_errors: Vec<(usize, usize, f64)> = k_pairs
        .into_par_iter()
        .map(|(n, a)| {
            let k = k_sum(n, a, &params)?;
            let c = binomial_exact(n as u64, a as u64).expect("small binomial") as f64;
            let j = table.j(n, a);
            Ok((n, a, (k - c * c * j).abs() / (c * c * j)))
        })
        .collect::<Result<_, PovznerError>>()?;
    let mut k_max = 0.0_f64;
    for (n, a, e) in k_errors {
        k_max = k_max.max(e);
        if !(e <= 1e-8) {
            violations.push(Violation {
                check: "K identity".into(),
                detail: format!("nu={nu}, n={n}, a={a}: rel error {e:e}"),
            });
        }
    }
    let mut vandermonde_checked = 0;
    for s in 0..=vandermonde_max {
        for a in 0..=s {
            vandermonde_checked += 1;
            if !vandermonde(a, s - a).holds() {
                violations.push(Violation {
                    check: "Vandermonde".into(),
                    detail: format!("a={a}, b={}", s - a),
                });
            }
        }
    }
    Ok(SplitReport {
        nu,
        n_max,
        zeta2,
        max_bound_ratio: max_ratio,
        zeta2_low_orders,
        max_ratio_low_order_zeta2: max_low,
        k_identity_max_rel_error: k_max,
        vandermonde_checked,
        violations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityReport {
    pub ensembles: usize,
    pub checks: usize,
    /// Series-to-exponential-moment instances whose hypothesis could not be certified for all orders.
    pub unverifiable: usize,
    pub violations: Vec<Violation>,
}

/// Randomized suite of the moment inequalities on `count` ensembles of
/// log-uniform size in `[10, 10^4]` with mixed tails: log-convexity, Hölder
/// interpolation, the pointwise bound `m_{2n} <= m_{2n+γ}/2 + 2^{2n/γ}`, the
/// pointwise and series forms of `x^{n+γ/2} >= x^n - 1`, and the
/// series-to-exponential-moment implication where certifiable.
pub fn inequality_suite(count: usize, seed: u64) -> Result<InequalityReport, MomentError> {
    let per: Vec<(usize, usize, Vec<Violation>)> = (0..count)
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(e as u64);
            let size = (10f64.ln() + rng.random::<f64>() * 1000f64.ln()).exp().round() as usize;
            let ens = random_ensemble(&mut rng, size);
            let gamma: f64 = rng.random_range(0.05..=1.0);
            let nu: f64 = rng.random_range(0.05..1.95);
            let params = KernelParams::new(gamma, nu).expect("valid draw");
            let mut checks = 0;
            let mut unverifiable = 0;
            let mut bad = Vec::new();
            let mut record = |name: &str, ok: bool, detail: String| {
                if !ok {
                    bad.push(Violation {
                        check: name.into(),
                        detail: format!("ensemble {e} (N={size}): {detail}"),
                    });
                }
            };

            let a: f64 = rng.random_range(0.0..8.0);
            let b = a + rng.random_range(0.0..8.0);
            let alpha: f64 = rng.random_range(0.01..6.0);
            record(
                "log-convexity",
                check_log_convexity(&ens, a, b, alpha)?,
                format!("a={a}, b={b}, alpha={alpha}"),
            );
            let s: f64 = rng.random_range(2.0..10.0);
            let r = s + rng.random_range(0.0..10.0);
            record(
                "Hölder interpolation",
                check_holder_interp(&ens, s, r)?,
                format!("s={s}, r={r}"),
            );
            let n = rng.random_range(0..=12);
            record(
                "pointwise bound",
                check_pointwise_bound(&ens, n, gamma)?,
                format!("n={n}, gamma={gamma}"),
            );
            let sigma: f64 = 1.0 - rng.random::<f64>();
            let n1 = rng.random_range(0..=12);
            record(
                "pointwise step-4",
                check_step4_pointwise(&ens, n1, gamma, sigma)?,
                format!("n={n1}, gamma={gamma}, sigma={sigma}"),
            );
            let alpha_series = (2.0 - nu).max(gamma) / gamma;
            let p = rng.random_range(2..=20);
            let rep = series_functionals(&ens, sigma, alpha_series, p, &params, SeriesForm::Propagation)?;
            record(
                "series step-4",
                check_step4_propagation(&rep, &ens, &params)?,
                format!("p={p}, sigma={sigma}, gamma={gamma}, nu={nu}"),
            );
            checks += 5;

            let sigma0: f64 = 10f64.powf(rng.random_range(-3.0..0.0));
            let k_bound: f64 = 1.0 + 10f64.powf(rng.random_range(-1.0..3.0));
            match series_to_exp(&ens, sigma0, alpha_series, k_bound)? {
                SeriesToExp::Holds { .. } => checks += 1,
                SeriesToExp::Violated { lhs, rhs } => {
                    checks += 1;
                    record("series to exponential moment", false, format!("lhs={lhs} > rhs={rhs}"));
                }
                SeriesToExp::Unverifiable { .. } => unverifiable += 1,
                SeriesToExp::HypothesisFails { .. } => {}
            }
            Ok((checks, unverifiable, bad))
        })
        .collect::<Result<_, MomentError>>()?;
    let mut report = InequalityReport {
        ensembles: count,
        checks: 0,
        unverifiable: 0,
        violations: Vec::new(),
    };
    for (c, u, v) in per {
        report.checks += c;
        report.unverifiable += u;
        report.violations.extend(v);
    }
    Ok(report)
}
