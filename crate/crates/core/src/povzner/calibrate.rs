//! Constant calibration and grid certification of the Povzner bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::LnFactorials;
use crate::kernel::KernelParams;
use crate::vec3::Vec3;

use super::integrals::IntegralTable;
use super::{collision_functional_detailed, PovznerError};

/// Safety factor applied to the grid maximum defining `ζ2`.
pub const ZETA2_MARGIN: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConstantSource {
    /// Explicit closed form, valid for every order.
    Formula,
    /// Maximum over `2 <= n <= n_max` times `margin`; valid on that range only.
    GridCalibrated { n_max: usize, margin: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub zeta1: f64,
    pub zeta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub zeta1_source: ConstantSource,
    pub zeta2_source: ConstantSource,
    /// `(n, a)` attaining the grid maximum behind `ζ2`.
    pub zeta2_argmax: (usize, usize),
}

/// Orders, speeds and relative angles on which the bound is checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PovznerGrid {
    pub n_min: usize,
    pub n_max: usize,
    pub speeds: Vec<f64>,
    /// Angles between `v` and `v*`.
    pub angles: Vec<f64>,
}

impl Default for PovznerGrid {
    /// `n ∈ [2, 50]`, 9 log-spaced speeds in `[1e-2, 1e2]`, 5 angles in `[0, π]`.
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 50,
            speeds: (0..9).map(|k| 10f64.powf(-2.0 + 0.5 * k as f64)).collect(),
            angles: (0..5).map(|k| std::f64::consts::FRAC_PI_4 * k as f64).collect(),
        }
    }
}

impl PovznerGrid {
    pub fn len(&self) -> usize {
        (self.n_max + 1).saturating_sub(self.n_min) * self.speeds.len().pow(2) * self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One certified grid point. `d_n`, `rhs` and `error` are in units of
/// `s^{2n}`, `s = max(|v|, |v*|)`; `slack` is further divided by
/// `(|v|^{2n} + |v*|^{2n}) / s^{2n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackPoint {
    pub n: usize,
    pub speed: f64,
    pub speed_star: f64,
    pub angle: f64,
    pub d_n: f64,
    pub rhs: f64,
    pub error: f64,
    pub slack: f64,
}

impl SlackPoint {
    /// Negative slack beyond the quadrature error estimate.
    pub fn is_violation(&self) -> bool {
        self.d_n - self.rhs > self.error
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PovznerReport {
    pub params: KernelParams<f64>,
    pub grid: Option<PovznerGrid>,
    pub zeta1: f64,
    pub zeta2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub constants: Constants,
    pub worst_slack: Option<f64>,
    pub violations: Vec<SlackPoint>,
    /// Largest relative quadrature error over the integral table.
    pub table_rel_error: f64,
    #[serde(skip)]
    pub points: Vec<SlackPoint>,
    #[serde(skip)]
    pub table: Option<IntegralTable>,
    pub certified: bool,
}

/// `n^{ν/2}/(n-a)^{ν/2+1} + 1/a`.
pub fn split_weight(nu: f64, n: usize, a: usize) -> f64 {
    let (nf, rest) = (n as f64, (n - a) as f64);
    nf.powf(nu / 2.0) / rest.powf(nu / 2.0 + 1.0) + 1.0 / a as f64
}

/// Right-hand side of the Povzner bound for squared speeds `p`, `q`
/// (typically already divided by `s²`).
pub fn povzner_rhs_scaled(n: usize, p: f64, q: f64, nu: f64, c: &Constants, lnf: &LnFactorials) -> f64 {
    let nf = n as f64;
    let ni = n as i32;
    let loss = -c.lambda1 * nf.powf(nu / 2.0) * (p.powi(ni) + q.powi(ni));
    let gain: f64 = (1..n)
        .map(|a| {
            let (ai, bi) = (a as i32, (n - a) as i32);
            lnf.ln_binomial(n, a).exp() * split_weight(nu, n, a) * (p.powi(ai) * q.powi(bi) + p.powi(bi) * q.powi(ai))
        })
        .sum();
    loss + c.lambda2 * gain
}

/// `ζ1 = κ1/(20(2-ν))`, `ζ2 = 1.05 · max C(n,a) J_{n,a} / split_weight` over
/// `2 <= n <= n_max`, `λ_i = 2π ζ_i`.
pub fn calibrate_constants(params: &KernelParams<f64>, n_max: usize) -> Result<PovznerReport, PovznerError> {
    let table = IntegralTable::compute(params, n_max)?;
    let lnf = LnFactorials::new(n_max);
    let nu = params.nu;
    let mut best = (f64::NEG_INFINITY, (2, 1));
    for n in 2..=n_max {
        for a in 1..n {
            let r = lnf.ln_binomial(n, a).exp() * table.j(n, a) / split_weight(nu, n, a);
            if r > best.0 {
                best = (r, (n, a));
            }
        }
    }
    let zeta1 = params.kappa1 / (20.0 * (2.0 - nu));
    let zeta2 = ZETA2_MARGIN * best.0;
    let tau = std::f64::consts::TAU;
    let constants = Constants {
        zeta1,
        zeta2,
        lambda1: tau * zeta1,
        lambda2: tau * zeta2,
        zeta1_source: ConstantSource::Formula,
        zeta2_source: ConstantSource::GridCalibrated {
            n_max,
            margin: ZETA2_MARGIN,
        },
        zeta2_argmax: best.1,
    };
    Ok(PovznerReport {
        params: *params,
        grid: None,
        zeta1,
        zeta2,
        lambda1: constants.lambda1,
        lambda2: constants.lambda2,
        constants,
        worst_slack: None,
        violations: Vec::new(),
        table_rel_error: table.worst_rel_error,
        points: Vec::new(),
        table: Some(table),
        certified: false,
    })
}

/// Evaluates `D_n` by quadrature and the bound at every grid point. The
/// report is marked certified when no point violates the bound and the grid
/// stays inside the calibrated order range.
pub fn certify(mut report: PovznerReport, grid: &PovznerGrid) -> Result<PovznerReport, PovznerError> {
    let params = report.params;
    let nu = params.nu;
    let lnf = LnFactorials::new(grid.n_max.max(2));
    let constants = report.constants.clone();
    let rows: Result<Vec<Vec<SlackPoint>>, PovznerError> = (grid.n_min.max(2)..=grid.n_max)
        .into_par_iter()
        .map(|n| {
            let mut out = Vec::with_capacity(grid.speeds.len().pow(2) * grid.angles.len());
            for &r in &grid.speeds {
                for &rs in &grid.speeds {
                    for &psi in &grid.angles {
                        let v = Vec3::new(r, 0.0, 0.0);
                        let w = Vec3::new(rs * psi.cos(), rs * psi.sin(), 0.0);
                        let d = collision_functional_detailed(n, v, w, &params, &lnf)?;
                        let s2 = d.scale * d.scale;
                        let (p, q) = (r * r / s2, rs * rs / s2);
                        let rhs = povzner_rhs_scaled(n, p, q, nu, &constants, &lnf);
                        let norm = p.powi(n as i32) + q.powi(n as i32);
                        out.push(SlackPoint {
                            n,
                            speed: r,
                            speed_star: rs,
                            angle: psi,
                            d_n: d.scaled,
                            rhs,
                            error: d.error,
                            slack: (rhs - d.scaled) / norm,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let points: Vec<SlackPoint> = rows?.into_iter().flatten().collect();
    report.worst_slack = points.iter().map(|p| p.slack).reduce(f64::min);
    report.violations = points.iter().filter(|p| p.is_violation()).cloned().collect();
    let in_range = match report.constants.zeta2_source {
        ConstantSource::GridCalibrated { n_max, .. } => grid.n_max <= n_max,
        ConstantSource::Formula => true,
    };
    report.certified = report.violations.is_empty() && in_range && !points.is_empty();
    report.points = points;
    report.grid = Some(grid.clone());
    Ok(report)
}
