//! Stochastic N-particle solver for the homogeneous Boltzmann equation with a
//! truncated angular kernel.
//!
//! The chain proposes unordered pairs at the constant majorant rate
//! `R̄ = (N-1) Λ_ε (2V)^γ`, where `V` bounds every particle speed, and accepts
//! a proposal with probability `(|v_i - v_j| / 2V)^γ`. Accepted pairs then
//! collide at the true pair rate `λ_ij = (2Λ_ε/N)|v_i - v_j|^γ`, under which
//! the empirical measure solves the weak form in expectation.

mod config;
mod io;

pub use config::{FlatSimConfig, InitialLaw, SimConfig};
pub use io::{
    content_hash, read_moments_csv, read_snapshots, read_snapshots_from, save_run, write_json, write_moments_csv,
    write_snapshots, MomentRow, RunMeta,
};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{angular_rate, post_collision, KernelError, KernelParams, ThetaSampler};
use crate::moments::{exp_moment, mean_stderr, moment, Ensemble, MomentError, MomentTable};
use crate::scalar::CompensatedSum;
use crate::Velocity;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("non-finite velocity produced at event {event}")]
    NonFinite { event: u64 },
    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// What a single proposal did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Rejected,
    /// Accepted by the speed test, but the sampled angle fell below the
    /// physical cutoff of a coupled run.
    Null,
    Collision,
}

/// Particle system and jump-chain clock.
#[derive(Clone, Debug)]
pub struct SimState {
    velocities: Vec<Velocity>,
    pub t: f64,
    pub v_max_bound: f64,
    pub event_count: u64,
    pub accepted_count: u64,
    pub null_count: u64,
    params: KernelParams<f64>,
    sampler: ThetaSampler,
    lambda: f64,
    rate: f64,
    majorant_refresh: u64,
    since_refresh: u64,
    momentum0: [f64; 3],
    energy0: f64,
}

fn totals(vs: &[Velocity]) -> ([f64; 3], f64) {
    let mut p = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    let mut e = CompensatedSum::new();
    for v in vs {
        for (acc, c) in p.iter_mut().zip(v.0) {
            acc.add(c);
        }
        e.add(v.norm_squared());
    }
    ([p[0].value(), p[1].value(), p[2].value()], e.value())
}

impl SimState {
    /// Wraps raw velocities without normalizing them. `sampling_lower` is
    /// the lower end of the angular sampling range; angles below
    /// `params.eps_cut` are drawn only in coupled runs and discarded.
    pub fn from_velocities(
        params: KernelParams<f64>,
        velocities: Vec<Velocity>,
        sampling_lower: Option<f64>,
        majorant_refresh: u64,
    ) -> Result<Self, SimError> {
        let params = params.validated()?;
        if velocities.len() < 2 {
            return Err(SimError::Config(format!(
                "need at least 2 particles, got {}",
                velocities.len()
            )));
        }
        if let Some(index) = velocities.iter().position(|v| !v.is_finite()) {
            return Err(MomentError::NonFinite { index }.into());
        }
        let lower = sampling_lower.unwrap_or(params.eps_cut);
        if lower > params.eps_cut {
            return Err(SimError::Config(format!(
                "sampling cutoff {lower} exceeds eps_cut {}",
                params.eps_cut
            )));
        }
        let lambda = angular_rate(&params, lower)?;
        let (momentum0, energy0) = totals(&velocities);
        let v_max = velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut state = Self {
            velocities,
            t: 0.0,
            v_max_bound: v_max,
            event_count: 0,
            accepted_count: 0,
            null_count: 0,
            params,
            sampler: ThetaSampler::new(params.nu, lower),
            lambda,
            rate: 0.0,
            majorant_refresh: majorant_refresh.max(1),
            since_refresh: 0,
            momentum0,
            energy0,
        };
        state.update_rate();
        Ok(state)
    }

    #[inline]
    pub fn velocities(&self) -> &[Velocity] {
        &self.velocities
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn params(&self) -> &KernelParams<f64> {
        &self.params
    }

    /// Angular mass `Λ` of the sampling range.
    pub fn angular_rate(&self) -> f64 {
        self.lambda
    }

    /// Total proposal rate `(N-1) Λ (2V)^γ`.
    pub fn majorant_rate(&self) -> f64 {
        self.rate
    }

    pub fn ensemble(&self) -> Result<Ensemble, MomentError> {
        Ensemble::new(self.velocities.clone())
    }

    /// Largest relative drift of total momentum (per unit energy scale) and
    /// total energy since construction.
    pub fn conservation_defect(&self) -> f64 {
        let (p, e) = totals(&self.velocities);
        let scale = self.energy0.max(f64::MIN_POSITIVE);
        let dp = p
            .iter()
            .zip(self.momentum0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let n = self.velocities.len() as f64;
        (dp / (scale * n).sqrt()).max((e - self.energy0).abs() / scale)
    }

    fn update_rate(&mut self) {
        let n = self.velocities.len() as f64;
        self.rate = (n - 1.0) * self.lambda * (2.0 * self.v_max_bound).powf(self.params.gamma);
    }

    fn refresh_majorant(&mut self) {
        self.v_max_bound = self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max);
        self.since_refresh = 0;
        self.update_rate();
    }

    /// One event of the chain: waiting time, then one proposal.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepOutcome, SimError> {
        let e: f64 = Exp1.sample(rng);
        if self.rate > 0.0 {
            self.t += e / self.rate;
        } else {
            self.t = f64::INFINITY;
        }
        self.propose(rng)
    }

    /// Runs events until the next one would land beyond `target`, then sets
    /// the clock to `target` (exact by memorylessness of the waiting time).
    pub fn advance_to<R: Rng + ?Sized>(&mut self, target: f64, rng: &mut R) -> Result<(), SimError> {
        while self.t < target {
            if !(self.rate > 0.0) {
                break;
            }
            let e: f64 = Exp1.sample(rng);
            let next = self.t + e / self.rate;
            if next > target {
                break;
            }
            self.t = next;
            self.propose(rng)?;
        }
        self.t = self.t.max(target);
        Ok(())
    }

    /// Every proposal consumes the same five variates whatever its outcome,
    /// so runs that differ only in `eps_cut` stay on a common random stream.
    fn propose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepOutcome, SimError> {
        let n = self.velocities.len();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let u_accept: f64 = rng.random();
        let u_theta: f64 = rng.random();
        let u_phi: f64 = rng.random();
        self.event_count += 1;
        self.since_refresh += 1;

        let outcome = self.collide(i, j, u_accept, u_theta, u_phi)?;
        if self.since_refresh >= self.majorant_refresh {
            self.refresh_majorant();
        }
        Ok(outcome)
    }

    #[inline]
    fn collide(
        &mut self,
        i: usize,
        j: usize,
        u_accept: f64,
        u_theta: f64,
        u_phi: f64,
    ) -> Result<StepOutcome, SimError> {
        let v = self.velocities[i];
        let w = self.velocities[j];
        let rel = (v - w).norm();
        let bound = 2.0 * self.v_max_bound;
        let gamma = self.params.gamma;
        let accept = if gamma == 1.0 {
            rel > u_accept * bound
        } else {
            (rel / bound).powf(gamma) > u_accept
        };
        if !accept {
            return Ok(StepOutcome::Rejected);
        }
        let theta = self.sampler.sample(u_theta);
        if theta < self.params.eps_cut {
            self.null_count += 1;
            return Ok(StepOutcome::Null);
        }
        let phi = std::f64::consts::TAU * u_phi;
        let (vp, wp) = post_collision(v, w, theta, phi);
        if !(vp.is_finite() && wp.is_finite()) {
            return Err(SimError::NonFinite {
                event: self.event_count,
            });
        }
        self.velocities[i] = vp;
        self.velocities[j] = wp;
        self.accepted_count += 1;
        let top = vp.norm().max(wp.norm());
        if top > self.v_max_bound {
            self.v_max_bound = top;
            self.update_rate();
        }
        debug_assert!(self.v_max_bound >= vp.norm() && self.v_max_bound >= wp.norm());
        Ok(StepOutcome::Collision)
    }
}

/// Random stream of the particle chain.
pub type SimRng = Xoshiro256PlusPlus;

/// Stream for replicate `r` of a run seeded with `seed`: the seeded
/// generator advanced by `r` jumps of `2^128` draws, so replicate streams
/// never overlap.
pub fn replicate_rng(seed: u64, replicate: usize) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    for _ in 0..replicate {
        rng.jump();
    }
    rng
}

fn isotropic_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Velocity {
    let mut g = [0.0; 3];
    for c in &mut g {
        *c = StandardNormal.sample(rng);
    }
    crate::Vec3(g)
}

fn isotropic_direction<R: Rng + ?Sized>(rng: &mut R) -> Velocity {
    loop {
        let g = isotropic_gaussian(rng);
        let norm = g.norm();
        if norm > 1e-12 {
            return g.scale(norm.recip());
        }
    }
}

/// Draws `n` raw velocities from `law` (before normalization).
pub fn sample_initial<R: Rng + ?Sized>(law: &InitialLaw, n: usize, rng: &mut R) -> Result<Vec<Velocity>, SimError> {
    Ok(match law {
        InitialLaw::Maxwellian => {
            let sd = (1.0_f64 / 3.0).sqrt();
            (0..n).map(|_| isotropic_gaussian(rng).scale(sd)).collect()
        }
        InitialLaw::StretchedExp => {
            let gamma = Gamma::new(6.0, 1.0).expect("valid shape");
            (0..n)
                .map(|_| {
                    let s: f64 = gamma.sample(rng);
                    isotropic_direction(rng).scale(s * s)
                })
                .collect()
        }
        InitialLaw::TwoPoint => (0..n)
            .map(|k| Velocity::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0))
            .collect(),
        InitialLaw::File(path) => {
            let blocks = read_snapshots(path)?;
            let first = blocks
                .into_iter()
                .next()
                .ok_or_else(|| SimError::Config(format!("{} holds no snapshot", path.display())))?;
            if first.len() != n {
                return Err(SimError::Config(format!(
                    "{} holds {} particles, config asks for {n}",
                    path.display(),
                    first.len()
                )));
            }
            first
        }
    })
}

/// Samples replicate `replicate` of `config` and normalizes it.
pub fn init(config: &SimConfig, replicate: usize) -> Result<(SimState, SimRng), SimError> {
    config.validate()?;
    let mut rng = replicate_rng(config.seed, replicate);
    let raw = sample_initial(&config.initial_law, config.n, &mut rng)?;
    let ens = Ensemble::normalized(raw)?;
    let state = SimState::from_velocities(
        config.params,
        ens.into_velocities(),
        config.sampling_cutoff,
        config.majorant_refresh,
    )?;
    Ok((state, rng))
}

/// Event counters of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateStats {
    pub replicate: usize,
    pub events: u64,
    pub accepted: u64,
    pub null_events: u64,
    pub conservation_defect: f64,
}

/// One replicate's trajectory sampled at the snapshot times.
#[derive(Clone, Debug)]
pub struct ReplicateRun<O> {
    pub stats: ReplicateStats,
    /// `rows[s][k]`: moment of order `orders[k]` at snapshot `s`.
    pub rows: Vec<Vec<f64>>,
    pub ensembles: Vec<Ensemble>,
    pub observations: Vec<O>,
}

/// Replicate-aggregated view at one snapshot time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub table: MomentTable,
    /// Per-replicate ensembles, kept only with `keep_snapshots`.
    pub ensembles: Vec<Ensemble>,
}

#[derive(Clone, Debug)]
pub struct RunOutput<O = ()> {
    pub orders: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub stats: Vec<ReplicateStats>,
    /// `observations[r][s]` for replicate `r`, snapshot `s`.
    pub observations: Vec<Vec<O>>,
}

impl<O> RunOutput<O> {
    pub fn moment_rows(&self) -> Vec<MomentRow> {
        let mut out = Vec::new();
        for snap in &self.snapshots {
            for (k, &p) in snap.table.orders.iter().enumerate() {
                out.push(MomentRow {
                    t: snap.t,
                    order: p,
                    value: snap.table.values[k],
                    stderr: snap.table.stderr[k],
                    n_seeds: snap.table.n_seeds,
                });
            }
        }
        out
    }
}

/// Runs one replicate, calling `observe` on every snapshot.
pub fn run_replicate<O, F>(
    config: &SimConfig,
    replicate: usize,
    orders: &[f64],
    observe: &F,
) -> Result<ReplicateRun<O>, SimError>
where
    F: Fn(usize, f64, &Ensemble) -> O,
{
    let (mut state, mut rng) = init(config, replicate)?;
    let times = config.snapshot_times();
    let mut rows = Vec::with_capacity(times.len());
    let mut ensembles = Vec::new();
    let mut observations = Vec::with_capacity(times.len());
    for &t in &times {
        state.advance_to(t, &mut rng)?;
        let ens = state.ensemble()?;
        rows.push(orders.iter().map(|&p| moment(&ens, p)).collect());
        observations.push(observe(replicate, t, &ens));
        if config.keep_snapshots {
            ensembles.push(ens);
        }
    }
    state.advance_to(config.t_end, &mut rng)?;
    Ok(ReplicateRun {
        stats: ReplicateStats {
            replicate,
            events: state.event_count,
            accepted: state.accepted_count,
            null_events: state.null_count,
            conservation_defect: state.conservation_defect(),
        },
        rows,
        ensembles,
        observations,
    })
}

/// All replicates of `config`, in parallel, with per-snapshot observations.
/// Results do not depend on the number of worker threads.
pub fn run_observed<O, F>(config: &SimConfig, observe: F) -> Result<RunOutput<O>, SimError>
where
    O: Send,
    F: Fn(usize, f64, &Ensemble) -> O + Sync,
{
    config.validate()?;
    let orders = MomentTable::standard_orders(config.moment_n_max, config.params.gamma);
    let runs: Vec<ReplicateRun<O>> = (0..config.n_seeds)
        .into_par_iter()
        .map(|r| {
            run_replicate(config, r, &orders, &observe).map_err(|e| SimError::Replicate {
                replicate: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let times = config.snapshot_times();
    let mut snapshots = Vec::with_capacity(times.len());
    for (s, &t) in times.iter().enumerate() {
        let rows: Vec<Vec<f64>> = runs.iter().map(|r| r.rows[s].clone()).collect();
        let table = if rows.len() == 1 && !runs[0].ensembles.is_empty() {
            MomentTable::from_ensemble(&runs[0].ensembles[s], &orders)
        } else {
            MomentTable::from_rows(&orders, &rows)
        };
        let ensembles = runs.iter().filter_map(|r| r.ensembles.get(s).cloned()).collect();
        snapshots.push(Snapshot { t, table, ensembles });
    }
    let mut stats = Vec::with_capacity(runs.len());
    let mut observations = Vec::with_capacity(runs.len());
    for run in runs {
        stats.push(run.stats);
        observations.push(run.observations);
    }
    Ok(RunOutput {
        orders,
        snapshots,
        stats,
        observations,
    })
}

pub fn run(config: &SimConfig) -> Result<RunOutput, SimError> {
    run_observed(config, |_, _, _| ())
}

/// Paired difference between two cutoff levels, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffDelta {
    pub eps_coarse: f64,
    pub eps_fine: f64,
    pub m4_delta: f64,
    pub m4_stderr: f64,
    pub exp_delta: f64,
    pub exp_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffLevel {
    pub eps: f64,
    pub m4: f64,
    pub m4_stderr: f64,
    pub exp_moment: f64,
    pub exp_stderr: f64,
    pub events_per_replicate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffStudy {
    pub t: f64,
    pub sigma: f64,
    pub rho: f64,
    pub levels: Vec<CutoffLevel>,
    pub deltas: Vec<CutoffDelta>,
}

/// Matched-seed runs at each cutoff in the non-increasing list `eps_list`.
///
/// All levels sample angles from the smallest cutoff and discard those below
/// their own, so consecutive levels share every random variate and differ
/// only through the discarded grazing collisions. Reports `m_4(t_end)` and
/// `∫ exp(σ|v|^ρ)` per level and their paired deltas.
pub fn cutoff_study(config: &SimConfig, eps_list: &[f64], sigma: f64, rho: f64) -> Result<CutoffStudy, SimError> {
    if eps_list.is_empty() {
        return Err(SimError::Config("empty cutoff list".into()));
    }
    if eps_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(SimError::Config("cutoff list must be decreasing".into()));
    }
    let finest = *eps_list.last().unwrap();
    let mut per_level: Vec<Vec<(f64, f64)>> = Vec::with_capacity(eps_list.len());
    let mut levels = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut cfg = config.clone();
        cfg.params = cfg.params.with_cutoff(eps)?;
        cfg.sampling_cutoff = Some(finest);
        cfg.snapshot_times = vec![cfg.t_end];
        cfg.keep_snapshots = false;
        let out = run_observed(&cfg, |_, _, ens| (moment(ens, 4.0), exp_moment(ens, sigma, rho)))?;
        let pairs: Vec<(f64, f64)> = out.observations.iter().map(|obs| obs[0]).collect();
        let (m4, m4_stderr) = mean_stderr(pairs.iter().map(|p| p.0));
        let (exp_m, exp_stderr) = mean_stderr(pairs.iter().map(|p| p.1));
        let events = out.stats.iter().map(|s| s.events as f64).sum::<f64>() / out.stats.len() as f64;
        levels.push(CutoffLevel {
            eps,
            m4,
            m4_stderr,
            exp_moment: exp_m,
            exp_stderr,
            events_per_replicate: events,
        });
        per_level.push(pairs);
    }
    let deltas = eps_list
        .windows(2)
        .zip(per_level.windows(2))
        .map(|(eps, runs)| {
            let (m4_delta, m4_stderr) = mean_stderr(runs[1].iter().zip(&runs[0]).map(|(f, c)| f.0 - c.0));
            let (exp_delta, exp_stderr) = mean_stderr(runs[1].iter().zip(&runs[0]).map(|(f, c)| f.1 - c.1));
            CutoffDelta {
                eps_coarse: eps[0],
                eps_fine: eps[1],
                m4_delta,
                m4_stderr,
                exp_delta,
                exp_stderr,
            }
        })
        .collect();
    Ok(CutoffStudy {
        t: config.t_end,
        sigma,
        rho,
        levels,
        deltas,
    })
}
