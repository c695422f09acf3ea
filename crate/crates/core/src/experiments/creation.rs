use serde::{Deserialize, Serialize};

use super::{mean_and_stderr, rho_alpha, split_config, Verdict, INCONCLUSIVE_REL_STDERR};
use crate::combinatorics::LnFactorials;
use crate::kernel::KernelParams;
use crate::moments::{exp_moment, moment};
use crate::simulator::{run_observed, MomentRow, SimConfig, SimError};

#[derive(Clone, Debug, PartialEq)]
pub struct CreationSpec {
    pub params: KernelParams<f64>,
    pub rho: f64,
    pub alpha: f64,
    pub sigma_grid: Vec<f64>,
    /// Sorted times in `[0, 1]`, also the snapshot times of `sim`.
    pub time_grid: Vec<f64>,
    pub sim: SimConfig,
    /// Bound the truncated series must respect for `σ` to qualify.
    pub cap: f64,
    /// Series truncated after `n = terms`.
    pub terms: usize,
    /// `n` of the shape functionals `t^{(2n-2)/γ} m_{2n}(t)`.
    pub shape_orders: Vec<usize>,
    /// Times of the shape check.
    pub shape_window: (f64, f64),
}

const OWN_KEYS: [&str; 6] = [
    "sigma_grid",
    "time_grid",
    "cap",
    "terms",
    "shape_orders",
    "shape_window",
];

impl CreationSpec {
    /// Defaults: `σ` from 0.05 to 2, `t = 0.1, 0.2, ..., 1`, cap 2.5, six
    /// terms, shape orders 2..=4 over `[0.1, 1]`.
    pub fn new(mut sim: SimConfig) -> Result<Self, SimError> {
        let (rho, alpha) = rho_alpha(sim.params.gamma, sim.params.nu);
        let time_grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        sim.t_end = 1.0;
        sim.snapshot_times = time_grid.clone();
        let spec = Self {
            params: sim.params,
            rho,
            alpha,
            sigma_grid: vec![0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0],
            time_grid,
            sim,
            cap: 2.5,
            terms: 6,
            shape_orders: vec![2, 3, 4],
            shape_window: (0.1, 1.0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_time_grid(mut self, times: Vec<f64>) -> Result<Self, SimError> {
        self.sim.t_end = times.iter().copied().fold(0.0, f64::max);
        self.sim.snapshot_times = times.clone();
        self.time_grid = times;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.sim.validate()?;
        if !(self.rho > self.params.gamma && self.rho <= 2.0) || (self.rho * self.alpha - 2.0).abs() > 1e-12 {
            return bad(format!(
                "rho = {} and alpha = {} are inconsistent",
                self.rho, self.alpha
            ));
        }
        if self.time_grid.is_empty() || self.time_grid.iter().any(|t| !(*t >= 0.0 && *t <= 1.0)) {
            return bad("time_grid must be a non-empty list in [0, 1]".into());
        }
        if self.time_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("time_grid must be strictly increasing".into());
        }
        if self.sim.snapshot_times != self.time_grid {
            return bad("simulation snapshots must equal the time grid".into());
        }
        if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("sigma_grid must be a non-empty list of positive numbers".into());
        }
        if !(self.cap > 1.0) || self.terms == 0 || self.shape_orders.iter().any(|n| *n < 1) {
            return bad("need cap > 1, terms >= 1 and shape orders >= 1".into());
        }
        if self.sim.initial_law.is_light_tailed() {
            return bad("creation needs an initial law without exponential moments".into());
        }
        Ok(())
    }

    /// Flat TOML: the simulation keys plus `sigma_grid`, `time_grid`, `cap`,
    /// `terms`, `shape_orders` and `shape_window = [lo, hi]`. `t_end` and
    /// `snapshot_times` are taken from the time grid.
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let (sim, extra) = split_config(text, &OWN_KEYS)?;
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Extra {
            sigma_grid: Option<Vec<f64>>,
            time_grid: Option<Vec<f64>>,
            cap: Option<f64>,
            terms: Option<usize>,
            shape_orders: Option<Vec<usize>>,
            shape_window: Option<(f64, f64)>,
        }
        let e: Extra = toml::Value::Table(extra).try_into()?;
        let mut spec = Self::new(sim)?;
        if let Some(g) = e.sigma_grid {
            spec.sigma_grid = g;
        }
        if let Some(c) = e.cap {
            spec.cap = c;
        }
        if let Some(t) = e.terms {
            spec.terms = t;
        }
        if let Some(s) = e.shape_orders {
            spec.shape_orders = s;
        }
        if let Some(w) = e.shape_window {
            spec.shape_window = w;
        }
        match e.time_grid {
            Some(t) => spec.with_time_grid(t),
            None => {
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}

/// Truncated series and exponential moment at one `(t, σ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreationCell {
    pub t: f64,
    pub sigma: f64,
    /// `Σ_{n<=terms} (σt)^{2n/γ} m_{2n}/(n!)^α`.
    pub series: f64,
    pub series_stderr: f64,
    /// `∫ exp(σ t^{ρ/γ} |v|^ρ)`.
    pub exp_moment: f64,
    pub exp_stderr: f64,
    pub inconclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapePoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

/// `t^{(2n-2)/γ} m_{2n}(t)` over the shape window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeCheck {
    pub n: usize,
    pub points: Vec<ShapePoint>,
    pub sup: f64,
    /// Grows by more than three standard errors at every step towards
    /// smaller `t`.
    pub blow_up: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreationReport {
    pub gamma: f64,
    pub nu: f64,
    pub rho: f64,
    pub alpha: f64,
    pub particles: usize,
    pub n_seeds: usize,
    pub cap: f64,
    pub terms: usize,
    pub cells: Vec<CreationCell>,
    /// Largest grid `σ` whose series stays within the cap at every time.
    pub best_sigma: Option<f64>,
    pub shape: Vec<ShapeCheck>,
    pub inconclusive_cells: usize,
    pub moments: Vec<MomentRow>,
    pub verdict: Verdict,
}

struct Obs {
    m: Vec<f64>,
    exp: Vec<f64>,
}

pub fn run_creation(spec: &CreationSpec) -> Result<CreationReport, SimError> {
    spec.validate()?;
    let gamma = spec.params.gamma;
    let n_top = spec.terms.max(spec.shape_orders.iter().copied().max().unwrap_or(0));
    let out = run_observed(&spec.sim, |_, t, ens| Obs {
        m: (0..=n_top).map(|n| moment(ens, 2.0 * n as f64)).collect(),
        exp: spec
            .sigma_grid
            .iter()
            .map(|s| exp_moment(ens, s * t.powf(spec.rho / gamma), spec.rho))
            .collect(),
    })?;
    let lnf = LnFactorials::new(n_top);
    let obs = &out.observations;
    let series = |r: usize, s: usize, sigma: f64, t: f64| -> f64 {
        let m = &obs[r][s].m;
        (0..=spec.terms)
            .map(|n| {
                if n == 0 {
                    return m[0];
                }
                let ln_w = 2.0 * n as f64 / gamma * (sigma * t).ln() - spec.alpha * lnf.get(n);
                ln_w.exp() * m[n]
            })
            .sum()
    };

    let mut cells = Vec::new();
    for (s, &t) in spec.time_grid.iter().enumerate() {
        for (k, &sigma) in spec.sigma_grid.iter().enumerate() {
            let ser: Vec<f64> = (0..obs.len()).map(|r| series(r, s, sigma, t)).collect();
            let exp: Vec<f64> = (0..obs.len()).map(|r| obs[r][s].exp[k]).collect();
            let (series, series_stderr) = mean_and_stderr(&ser);
            let (exp_moment, exp_stderr) = mean_and_stderr(&exp);
            let inconclusive = series_stderr > INCONCLUSIVE_REL_STDERR * series.abs()
                || exp_stderr > INCONCLUSIVE_REL_STDERR * exp_moment.abs()
                || !series.is_finite()
                || !exp_moment.is_finite();
            cells.push(CreationCell {
                t,
                sigma,
                series,
                series_stderr,
                exp_moment,
                exp_stderr,
                inconclusive,
            });
        }
    }
    let within = |sigma: f64| {
        cells
            .iter()
            .filter(|c| c.sigma == sigma)
            .all(|c| c.series.is_finite() && c.series <= spec.cap)
    };
    let best_sigma = spec
        .sigma_grid
        .iter()
        .copied()
        .filter(|&s| within(s))
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))));

    let (lo, hi) = spec.shape_window;
    let shape: Vec<ShapeCheck> = spec
        .shape_orders
        .iter()
        .map(|&n| {
            let points: Vec<ShapePoint> = spec
                .time_grid
                .iter()
                .enumerate()
                .filter(|(_, t)| **t >= lo && **t <= hi)
                .map(|(s, &t)| {
                    let w = t.powf((2.0 * n as f64 - 2.0) / gamma);
                    let vals: Vec<f64> = (0..obs.len()).map(|r| w * obs[r][s].m[n]).collect();
                    let (value, stderr) = mean_and_stderr(&vals);
                    ShapePoint { t, value, stderr }
                })
                .collect();
            let sup = points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
            let blow_up = points.len() >= 2
                && points.windows(2).all(|w| {
                    let jump = w[0].value - w[1].value;
                    jump > 3.0 * w[0].stderr.hypot(w[1].stderr)
                });
            ShapeCheck {
                n,
                points,
                sup,
                blow_up,
            }
        })
        .collect();

    let inconclusive_cells = cells.iter().filter(|c| c.inconclusive).count();
    let smallest = spec.sigma_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let verdict = if best_sigma.is_some() && !shape.iter().any(|s| s.blow_up) {
        Verdict::Pass
    } else if best_sigma.is_none()
        && cells
            .iter()
            .filter(|c| c.sigma == smallest && !(c.series <= spec.cap))
            .all(|c| c.inconclusive)
    {
        Verdict::Inconclusive
    } else {
        Verdict::Violation
    };
    Ok(CreationReport {
        gamma,
        nu: spec.params.nu,
        rho: spec.rho,
        alpha: spec.alpha,
        particles: spec.sim.n,
        n_seeds: spec.sim.n_seeds,
        cap: spec.cap,
        terms: spec.terms,
        cells,
        best_sigma,
        shape,
        inconclusive_cells,
        moments: out.moment_rows(),
        verdict,
    })
}
