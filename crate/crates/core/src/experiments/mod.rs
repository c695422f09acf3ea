//! Creation and propagation experiments for exponential moments, and an
//! exploratory fit of small-time moment growth.

mod creation;
mod fit;
mod propagation;

pub use creation::{run_creation, CreationCell, CreationReport, CreationSpec, ShapeCheck, ShapePoint};
pub use fit::{fit_growth_exponent, FitStatus, GrowthFit, FIT_WINDOW};
pub use propagation::{run_propagation, PropagationPoint, PropagationReport, PropagationSpec};

use serde::{Deserialize, Serialize};

use crate::simulator::{FlatSimConfig, SimConfig, SimError};

/// Outcome of an experiment or check, mapped onto process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// A certified inequality or a tested property failed.
    Violation,
    /// Monte Carlo error too large to decide.
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Violation => 1,
            Verdict::Inconclusive => 2,
        }
    }

    /// Worst of two verdicts (violation beats inconclusive beats pass).
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Violation, _) | (_, Violation) => Violation,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

/// Relative stderr above which an estimate is reported as inconclusive.
pub const INCONCLUSIVE_REL_STDERR: f64 = 0.3;

/// `ρ = min{2γ/(2-ν), 2}` and `α = 2/ρ = max{1, (2-ν)/γ}`.
pub fn rho_alpha(gamma: f64, nu: f64) -> (f64, f64) {
    let rho = (2.0 * gamma / (2.0 - nu)).min(2.0);
    (rho, 2.0 / rho)
}

/// Splits a flat table into the simulation keys and the experiment keys
/// listed in `own`.
pub(crate) fn split_config(text: &str, own: &[&str]) -> Result<(SimConfig, toml::Table), SimError> {
    let mut table: toml::Table = toml::from_str(text)?;
    let mut extra = toml::Table::new();
    for key in own {
        if let Some(v) = table.remove(*key) {
            extra.insert((*key).to_string(), v);
        }
    }
    let flat: FlatSimConfig = toml::Value::Table(table).try_into()?;
    Ok((flat.into_config()?, extra))
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    crate::moments::mean_stderr(values.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rho_alpha_at_the_corner_values() {
        assert_eq!(rho_alpha(1.0, 1.0), (2.0, 1.0));
        let (rho, alpha) = rho_alpha(0.5, 1.0);
        assert!((rho - 1.0).abs() < 1e-15 && (alpha - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rho_exceeds_gamma_and_pairs_with_alpha(gamma in 1e-3..=1.0f64, nu in 1e-3..1.999f64) {
            let (rho, alpha) = rho_alpha(gamma, nu);
            prop_assert!(rho > gamma);
            prop_assert!(rho <= 2.0);
            prop_assert!((rho * alpha - 2.0).abs() < 1e-12);
            prop_assert!((alpha - (1.0f64).max((2.0 - nu) / gamma)).abs() < 1e-9 * alpha);
        }
    }

    #[test]
    fn verdicts_combine_by_severity() {
        use Verdict::*;
        assert_eq!(Pass.and(Inconclusive), Inconclusive);
        assert_eq!(Inconclusive.and(Violation), Violation);
        assert_eq!(Pass.and(Pass), Pass);
        assert_eq!(Violation.exit_code(), 1);
    }

    #[test]
    fn split_config_separates_keys() {
        let text = "gamma = 1.0\nnu = 1.0\nN = 10\nt_end = 1.0\ninitial_law = \"two_point\"\ncap = 3.0\n";
        let (sim, extra) = split_config(text, &["cap", "sigma_grid"]).unwrap();
        assert_eq!(sim.n, 10);
        assert_eq!(extra["cap"].as_float(), Some(3.0));
        assert!(split_config(&format!("{text}unknown = 1\n"), &["cap"]).is_err());
    }
}
