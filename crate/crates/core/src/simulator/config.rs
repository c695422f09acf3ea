use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::kernel::KernelParams;

/// Law of the initial velocities (before the normalizing affine map).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    /// Isotropic Gaussian, per-component variance `1/3`.
    Maxwellian,
    /// Isotropic, speed `s²` with `s ~ Gamma(6, 1)`: density `∝ e^{-|v|^{1/2}}`.
    StretchedExp,
    /// `±e1`, alternating.
    TwoPoint,
    /// First block of a binary snapshot file.
    File(PathBuf),
}

impl InitialLaw {
    pub fn is_light_tailed(&self) -> bool {
        matches!(self, InitialLaw::Maxwellian | InitialLaw::TwoPoint)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: KernelParams<f64>,
    /// Particle count `N`.
    pub n: usize,
    pub t_end: f64,
    pub initial_law: InitialLaw,
    pub seed: u64,
    pub n_seeds: usize,
    /// Sorted times in `[0, t_end]`; empty means `[0, t_end]`.
    pub snapshot_times: Vec<f64>,
    /// Proposals between recomputations of the speed majorant.
    pub majorant_refresh: u64,
    /// Sample angles from `[sampling_cutoff, π]` and discard those below
    /// `eps_cut`. Used to couple runs at different cutoffs.
    pub sampling_cutoff: Option<f64>,
    /// Largest `n` of the tracked orders `2n` and `2n + γ`.
    pub moment_n_max: usize,
    /// Keep every replicate's ensemble at every snapshot.
    pub keep_snapshots: bool,
}

impl SimConfig {
    pub fn new(params: KernelParams<f64>, n: usize, t_end: f64, initial_law: InitialLaw) -> Self {
        Self {
            params,
            n,
            t_end,
            initial_law,
            seed: 0,
            n_seeds: 1,
            snapshot_times: Vec::new(),
            majorant_refresh: n as u64,
            sampling_cutoff: None,
            moment_n_max: 8,
            keep_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validated()?;
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive and finite, got {}", self.t_end));
        }
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        if self.majorant_refresh == 0 {
            return bad("majorant_refresh must be at least 1".into());
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_end)) {
            return bad(format!("snapshot times must lie in [0, {}]", self.t_end));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("snapshot times must be sorted".into());
        }
        if let Some(lower) = self.sampling_cutoff {
            if !(lower > 0.0 && lower <= self.params.eps_cut) {
                return bad(format!("sampling_cutoff must lie in (0, eps_cut], got {lower}"));
            }
        }
        Ok(())
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        if self.snapshot_times.is_empty() {
            vec![0.0, self.t_end]
        } else {
            self.snapshot_times.clone()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let flat: FlatSimConfig = toml::from_str(text)?;
        flat.into_config()
    }

    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

fn one() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    1e-3
}

fn default_n_seeds() -> usize {
    1
}

fn default_n_max() -> usize {
    8
}

/// On-disk form of [`SimConfig`]: a flat table of keys.
///
/// ```toml
/// gamma = 1.0
/// nu = 0.5
/// eps_cut = 1e-3
/// N = 50000
/// t_end = 5.0
/// initial_law = "maxwellian"   # stretched_exp | two_point | file
/// initial_file = "start.bin"   # only with initial_law = "file"
/// seed = 7
/// n_seeds = 10
/// snapshot_times = [0.0, 1.0, 5.0]
/// majorant_refresh = 50000
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatSimConfig {
    pub gamma: f64,
    pub nu: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "one")]
    pub kappa1: f64,
    #[serde(default = "one")]
    pub kappa2: f64,
    #[serde(default = "default_eps")]
    pub eps_cut: f64,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    pub t_end: f64,
    pub initial_law: String,
    #[serde(default)]
    pub initial_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub majorant_refresh: Option<u64>,
    #[serde(default)]
    pub sampling_cutoff: Option<f64>,
    #[serde(default = "default_n_max")]
    pub moment_n_max: usize,
    #[serde(default)]
    pub keep_snapshots: bool,
}

impl FlatSimConfig {
    pub fn into_config(self) -> Result<SimConfig, SimError> {
        let params = KernelParams {
            gamma: self.gamma,
            nu: self.nu,
            kappa1: self.kappa1,
            kappa2: self.kappa2,
            kappa: self.kappa,
            eps_cut: self.eps_cut,
        }
        .validated()?;
        let initial_law = match (self.initial_law.as_str(), self.initial_file) {
            ("maxwellian", None) => InitialLaw::Maxwellian,
            ("stretched_exp", None) => InitialLaw::StretchedExp,
            ("two_point", None) => InitialLaw::TwoPoint,
            ("file", Some(path)) => InitialLaw::File(path),
            ("file", None) => return Err(SimError::Config("initial_law = \"file\" needs initial_file".into())),
            (_, Some(_)) => {
                return Err(SimError::Config(
                    "initial_file is only valid with initial_law = \"file\"".into(),
                ))
            }
            (other, None) => return Err(SimError::Config(format!("unknown initial_law {other:?}"))),
        };
        let cfg = SimConfig {
            params,
            n: self.n,
            t_end: self.t_end,
            initial_law,
            seed: self.seed,
            n_seeds: self.n_seeds,
            snapshot_times: self.snapshot_times,
            majorant_refresh: self.majorant_refresh.unwrap_or(self.n as u64),
            sampling_cutoff: self.sampling_cutoff,
            moment_n_max: self.moment_n_max,
            keep_snapshots: self.keep_snapshots,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &SimConfig) -> Self {
        let (initial_law, initial_file) = match &cfg.initial_law {
            InitialLaw::Maxwellian => ("maxwellian", None),
            InitialLaw::StretchedExp => ("stretched_exp", None),
            InitialLaw::TwoPoint => ("two_point", None),
            InitialLaw::File(p) => ("file", Some(p.clone())),
        };
        Self {
            gamma: cfg.params.gamma,
            nu: cfg.params.nu,
            kappa: cfg.params.kappa,
            kappa1: cfg.params.kappa1,
            kappa2: cfg.params.kappa2,
            eps_cut: cfg.params.eps_cut,
            n: cfg.n,
            t_end: cfg.t_end,
            initial_law: initial_law.to_string(),
            initial_file,
            seed: cfg.seed,
            n_seeds: cfg.n_seeds,
            snapshot_times: cfg.snapshot_times.clone(),
            majorant_refresh: Some(cfg.majorant_refresh),
            sampling_cutoff: cfg.sampling_cutoff,
            moment_n_max: cfg.moment_n_max,
            keep_snapshots: cfg.keep_snapshots,
        }
    }
}
