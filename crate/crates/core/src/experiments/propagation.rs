use serde::{Deserialize, Serialize};

use super::{mean_and_stderr, split_config, Verdict, INCONCLUSIVE_REL_STDERR};
use crate::kernel::KernelParams;
use crate::moments::{check_step4_propagation, exp_moment, exp_to_series, series_functionals, SeriesForm};
use crate::simulator::{init, run_observed, InitialLaw, MomentRow, SimConfig, SimError};

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationSpec {
    pub params: KernelParams<f64>,
    pub rho: f64,
    /// Exponential-moment parameter assumed of the initial law.
    pub sigma0: f64,
    /// Assumed bound `∫ exp(σ0 |v|^ρ) f_0 <= A`.
    pub a_bound: f64,
    /// Tracked `σ`; defaults to the `σ1` obtained at `t = 0`.
    pub sigma: Option<f64>,
    /// Largest admissible `sup_t E(t)/E(0)` of the exponential moment.
    pub ratio_cap: f64,
    pub terms: usize,
    /// Light-tailed start; `t_end` is the horizon.
    pub sim: SimConfig,
}

const OWN_KEYS: [&str; 6] = ["rho", "sigma0", "A", "sigma", "ratio_cap", "terms"];

impl PropagationSpec {
    pub fn new(sim: SimConfig, rho: f64, sigma0: f64, a_bound: f64) -> Result<Self, SimError> {
        let spec = Self {
            params: sim.params,
            rho,
            sigma0,
            a_bound,
            sigma: None,
            ratio_cap: 1.5,
            terms: 6,
            sim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.sim.validate()?;
        if !(self.rho > 0.0 && self.rho <= 2.0) {
            return bad(format!("rho must lie in (0, 2], got {}", self.rho));
        }
        if !(self.sigma0 > 0.0 && self.sigma0 <= 1.0) {
            return bad(format!("sigma0 must lie in (0, 1], got {}", self.sigma0));
        }
        if !(self.a_bound > 1.0) {
            return bad(format!("A must exceed 1, got {}", self.a_bound));
        }
        if let Some(s) = self.sigma {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("sigma must lie in [0, 1], got {s}"));
            }
        }
        if self.sim.snapshot_times().first() != Some(&0.0) {
            return bad("the first snapshot must be at t = 0".into());
        }
        if self.terms < 2 || !(self.ratio_cap >= 1.0) {
            return bad("need terms >= 2 and ratio_cap >= 1".into());
        }
        if matches!(self.sim.initial_law, InitialLaw::StretchedExp) {
            return bad("propagation needs a light-tailed initial law".into());
        }
        Ok(())
    }

    /// Flat TOML: the simulation keys plus `rho`, `sigma0`, `A`, and
    /// optionally `sigma`, `ratio_cap`, `terms`.
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let (sim, extra) = split_config(text, &OWN_KEYS)?;
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Extra {
            rho: f64,
            sigma0: f64,
            #[serde(rename = "A")]
            a: f64,
            sigma: Option<f64>,
            ratio_cap: Option<f64>,
            terms: Option<usize>,
        }
        let e: Extra = toml::Value::Table(extra).try_into()?;
        let mut spec = Self::new(sim, e.rho, e.sigma0, e.a)?;
        spec.sigma = e.sigma;
        if let Some(r) = e.ratio_cap {
            spec.ratio_cap = r;
        }
        if let Some(t) = e.terms {
            spec.terms = t;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Replicate-averaged tracked quantities at one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationPoint {
    pub t: f64,
    /// `Σ_{n<=terms} σ^n m_{2n}/(n!)^α`.
    pub series: f64,
    pub series_stderr: f64,
    pub exp_moment: f64,
    pub exp_stderr: f64,
    pub step4_violations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropagationReport {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    pub alpha: f64,
    pub sigma0: f64,
    pub a_bound: f64,
    /// `∫ exp(σ0|v|^ρ)` of each replicate's initial state.
    pub initial_exp_moments: Vec<f64>,
    /// Smallest `σ1` over the replicates.
    pub sigma1: f64,
    pub sigma: f64,
    pub points: Vec<PropagationPoint>,
    /// `sup_t` of the replicate-mean exponential moment over its initial value.
    pub sup_exp_ratio: f64,
    /// Largest per-replicate `sup_t E(t)/E(0)`.
    pub max_replicate_exp_ratio: f64,
    pub sup_series_ratio: f64,
    pub step4_checks: usize,
    pub step4_violations: usize,
    pub inconclusive_points: usize,
    pub moments: Vec<MomentRow>,
    pub verdict: Verdict,
}

struct Obs {
    series: f64,
    exp: f64,
    step4: Option<bool>,
}

pub fn run_propagation(spec: &PropagationSpec) -> Result<PropagationReport, SimError> {
    spec.validate()?;
    let alpha = 2.0 / spec.rho;
    let mut initial_exp_moments = Vec::with_capacity(spec.sim.n_seeds);
    let mut sigma1 = f64::INFINITY;
    for r in 0..spec.sim.n_seeds {
        let (state, _) = init(&spec.sim, r)?;
        let ens = state.ensemble()?;
        initial_exp_moments.push(exp_moment(&ens, spec.sigma0, spec.rho));
        sigma1 = sigma1.min(exp_to_series(&ens, spec.sigma0, spec.rho, spec.a_bound)?);
    }
    let sigma = spec.sigma.unwrap_or(sigma1);
    if sigma > sigma1 {
        return Err(SimError::Config(format!("sigma = {sigma} exceeds sigma1 = {sigma1}")));
    }

    let params = spec.params;
    let out = run_observed(&spec.sim, |_, _, ens| -> Result<Obs, SimError> {
        if sigma == 0.0 {
            return Ok(Obs {
                series: 1.0,
                exp: 1.0,
                step4: None,
            });
        }
        let rep = series_functionals(ens, sigma, alpha, spec.terms, &params, SeriesForm::Propagation)?;
        let step4 = check_step4_propagation(&rep, ens, &params)?;
        Ok(Obs {
            series: rep.e_p,
            exp: rep.exp_moment,
            step4: Some(step4),
        })
    })?;
    let moments = out.moment_rows();
    let obs: Vec<Vec<Obs>> = out
        .observations
        .into_iter()
        .map(|row| row.into_iter().collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;

    let times = spec.sim.snapshot_times();
    let mut points = Vec::with_capacity(times.len());
    for (s, &t) in times.iter().enumerate() {
        let ser: Vec<f64> = obs.iter().map(|o| o[s].series).collect();
        let exp: Vec<f64> = obs.iter().map(|o| o[s].exp).collect();
        let (series, series_stderr) = mean_and_stderr(&ser);
        let (exp_moment, exp_stderr) = mean_and_stderr(&exp);
        points.push(PropagationPoint {
            t,
            series,
            series_stderr,
            exp_moment,
            exp_stderr,
            step4_violations: obs.iter().filter(|o| o[s].step4 == Some(false)).count(),
        });
    }
    let first = &points[0];
    let sup_exp_ratio = points
        .iter()
        .map(|p| p.exp_moment / first.exp_moment)
        .fold(0.0, f64::max);
    let sup_series_ratio = points.iter().map(|p| p.series / first.series).fold(0.0, f64::max);
    let max_replicate_exp_ratio = obs
        .iter()
        .map(|o| o.iter().map(|x| x.exp / o[0].exp).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let step4_checks = obs.iter().flatten().filter(|o| o.step4.is_some()).count();
    let step4_violations = points.iter().map(|p| p.step4_violations).sum();
    let inconclusive_points = points
        .iter()
        .filter(|p| p.exp_stderr > INCONCLUSIVE_REL_STDERR * p.exp_moment || !p.exp_moment.is_finite())
        .count();

    let verdict = if step4_violations > 0 {
        Verdict::Violation
    } else if max_replicate_exp_ratio <= spec.ratio_cap {
        Verdict::Pass
    } else if inconclusive_points > 0 {
        Verdict::Inconclusive
    } else {
        Verdict::Violation
    };
    Ok(PropagationReport {
        gamma: params.gamma,
        nu: params.nu,
        rho: spec.rho,
        alpha,
        sigma0: spec.sigma0,
        a_bound: spec.a_bound,
        initial_exp_moments,
        sigma1,
        sigma,
        points,
        sup_exp_ratio,
        max_replicate_exp_ratio,
        sup_series_ratio,
        step4_checks,
        step4_violations,
        inconclusive_points,
        moments,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> PropagationSpec {
        let params = KernelParams::new(1.0, 0.5).unwrap().with_cutoff(0.01).unwrap();
        let mut sim = SimConfig::new(params, 2000, 1.0, InitialLaw::Maxwellian);
        sim.n_seeds = 3;
        sim.snapshot_times = vec![0.0, 0.5, 1.0];
        let mut spec = PropagationSpec::new(sim, 2.0, 0.1, 2.0).unwrap();
        spec.sigma = Some(0.1);
        spec
    }

    #[test]
    fn maxwellian_exponential_moment_stays_flat() {
        let report = run_propagation(&small_spec()).unwrap();
        assert_eq!(report.sigma1, 1.0);
        assert_eq!(report.step4_violations, 0);
        assert_eq!(report.step4_checks, 9);
        assert!(report.max_replicate_exp_ratio < 1.05);
        // Gaussian with per-component variance 1/3: (1 - 2σ/3)^{-3/2}
        let exact = (1.0 - 2.0 * 0.1 / 3.0_f64).powf(-1.5);
        assert!((report.points[0].exp_moment - exact).abs() < 0.01);
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn zero_sigma_tracks_ones() {
        let mut spec = small_spec();
        spec.sigma = Some(0.0);
        let report = run_propagation(&spec).unwrap();
        for p in &report.points {
            assert_eq!((p.series, p.exp_moment), (1.0, 1.0));
        }
        assert_eq!(report.step4_checks, 0);
    }

    #[test]
    fn rejects_sigma_above_sigma1_and_heavy_tails() {
        let mut spec = small_spec();
        spec.sim.initial_law = InitialLaw::StretchedExp;
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.a_bound = 1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn parses_flat_config() {
        let text = r#"
            gamma = 1.0
            nu = 0.5
            N = 100
            t_end = 1.0
            initial_law = "maxwellian"
            rho = 2.0
            sigma0 = 0.2
            A = 3.0
            sigma = 0.1
        "#;
        let spec = PropagationSpec::from_toml_str(text).unwrap();
        assert_eq!(
            (spec.rho, spec.sigma0, spec.a_bound, spec.sigma),
            (2.0, 0.2, 3.0, Some(0.1))
        );
        assert!(PropagationSpec::from_toml_str(&text.replace("A = 3.0", "")).is_err());
    }
}
