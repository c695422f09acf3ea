use serde::{Deserialize, Serialize};

use crate::simulator::MomentRow;

/// Times used by [`fit_growth_exponent`].
pub const FIT_WINDOW: (f64, f64) = (0.05, 0.5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// The slope's standard error is at least as large as the slope.
    Refused,
    /// Fewer than three usable times in the window.
    InsufficientData,
}

/// Least-squares slope of `ln m_{2n}(t)` against `ln(1/t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub label: String,
    pub n: usize,
    pub slope: f64,
    pub slope_stderr: f64,
    /// Heuristic band `[(2n-2)/γ, 2n/γ]`.
    pub predicted: (f64, f64),
    pub points: usize,
    pub status: FitStatus,
}

/// Exploratory small-time growth exponents from moment rows (one row per
/// `(t, order)`). Never used as a pass/fail gate.
///
/// Points are weighted by `(m/se)²`, the delta-method variance of `ln m`;
/// the reported error is the larger of the weighted and the residual-based
/// slope error.
pub fn fit_growth_exponent(rows: &[MomentRow], n_list: &[usize], gamma: f64) -> Vec<GrowthFit> {
    n_list
        .iter()
        .map(|&n| {
            let order = 2.0 * n as f64;
            let pts: Vec<(f64, f64, f64)> = rows
                .iter()
                .filter(|r| (r.order - order).abs() < 1e-12 && r.t >= FIT_WINDOW.0 && r.t <= FIT_WINDOW.1)
                .filter(|r| r.value > 0.0 && r.t > 0.0)
                .map(|r| ((1.0 / r.t).ln(), r.value.ln(), r.stderr / r.value))
                .collect();
            let predicted = ((order - 2.0) / gamma, order / gamma);
            let label = "EXPLORATORY".to_string();
            if pts.len() < 3 {
                return GrowthFit {
                    label,
                    n,
                    slope: f64::NAN,
                    slope_stderr: f64::NAN,
                    predicted,
                    points: pts.len(),
                    status: FitStatus::InsufficientData,
                };
            }
            let weighted = pts.iter().all(|p| p.2 > 0.0);
            let w: Vec<f64> = pts.iter().map(|p| if weighted { p.2.powi(-2) } else { 1.0 }).collect();
            let sw: f64 = w.iter().sum();
            let xm = pts.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
            let ym = pts.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
            let sxx: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - xm).powi(2)).sum();
            let sxy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - xm) * (p.1 - ym)).sum();
            let slope = sxy / sxx;
            let rss: f64 = pts
                .iter()
                .zip(&w)
                .map(|(p, w)| w * (p.1 - ym - slope * (p.0 - xm)).powi(2))
                .sum();
            let dof = (pts.len() - 2) as f64;
            let residual_se = (rss / dof / sxx).sqrt();
            let slope_stderr = if weighted {
                residual_se.max(sxx.recip().sqrt())
            } else {
                residual_se
            };
            let status = if slope_stderr >= slope.abs() {
                FitStatus::Refused
            } else {
                FitStatus::Fitted
            };
            GrowthFit {
                label,
                n,
                slope,
                slope_stderr,
                predicted,
                points: pts.len(),
                status,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(f: impl Fn(f64) -> f64, se_rel: f64) -> Vec<MomentRow> {
        (1..=10)
            .map(|k| {
                let t = 0.05 * k as f64;
                let value = f(t);
                MomentRow {
                    t,
                    order: 4.0,
                    value,
                    stderr: se_rel * value,
                    n_seeds: 10,
                }
            })
            .collect()
    }

    #[test]
    fn recovers_a_power_law() {
        let fit = &fit_growth_exponent(&rows(|t| 3.0 * t.powf(-2.0), 0.01), &[2], 1.0)[0];
        assert!((fit.slope - 2.0).abs() < 1e-10);
        assert_eq!(fit.status, FitStatus::Fitted);
        assert_eq!(fit.predicted, (2.0, 4.0));
        assert_eq!(fit.points, 10);
        assert_eq!(fit.label, "EXPLORATORY");
    }

    #[test]
    fn constant_moments_give_zero_slope_and_are_refused() {
        let fit = &fit_growth_exponent(&rows(|_| 5.0 / 3.0, 0.01), &[2], 1.0)[0];
        assert!(fit.slope.abs() < 1e-12);
        assert_eq!(fit.status, FitStatus::Refused);
    }

    #[test]
    fn too_few_points() {
        let fit = &fit_growth_exponent(&rows(|t| t, 0.01)[..2], &[2], 1.0)[0];
        assert_eq!(fit.status, FitStatus::InsufficientData);
        let none = &fit_growth_exponent(&rows(|t| t, 0.01), &[3], 1.0)[0];
        assert_eq!(none.points, 0);
    }
}
