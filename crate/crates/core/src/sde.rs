//! Itô integration of trajectory ensembles.
//!
//! Each trajectory owns a ChaCha8 stream selected by its index under the
//! ensemble's master seed, so results do not depend on how trajectories are
//! scheduled across threads. Within a step the gauge draws first (the
//! randomized SVD test matrix) and the Wiener increment second.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::Mat;
use num_complex::Complex64 as c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::GaugeMethod;
use crate::lattice::{validate_bell, BellState, InitialState, Spin};
use crate::linalg::expi_symmetric;
use crate::phase_space::{flat_index, HubbardModel, PhaseSpacePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `n' = n + A(n) dt + B(n) dW`.
    EulerMaruyama,
    /// Euler-Maruyama for the interaction drift and the noise, followed by
    /// the exact hopping propagator `n -> P n P*`, `P = exp(iJ dt/ħ)`.
    /// Weak order one like plain Euler-Maruyama, and exact at `U = 0`.
    #[default]
    ExponentialEuler,
}

/// Which entries of a point a snapshot keeps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordMode {
    #[default]
    Full,
    /// Only the listed `(i, j, spin)` entries.
    Entries(Vec<(usize, usize, Spin)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub snapshot_stride: usize,
    pub spike_threshold: f64,
    pub gauge: GaugeMethod,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub record: RecordMode,
    /// Stop every trajectory at the earliest failure in the ensemble.
    #[serde(default)]
    pub stop_at_first_failure: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            t_max: 3.0,
            snapshot_stride: 25,
            spike_threshold: 1e6,
            gauge: GaugeMethod::randomized(),
            scheme: Scheme::default(),
            record: RecordMode::Full,
            stop_at_first_failure: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max.is_finite() && self.t_max >= self.dt) {
            return Err(Error::InvalidConfig(format!("t_max must be at least dt, got {}", self.t_max)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidConfig("snapshot_stride must be at least 1".into()));
        }
        if !(self.spike_threshold > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "spike_threshold must exceed 1, got {}",
                self.spike_threshold
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil() as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Positions of recorded entries inside a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordLayout {
    n_sites: usize,
    entries: Option<Vec<(usize, usize, Spin)>>,
}

impl RecordLayout {
    pub fn new(n_sites: usize, mode: &RecordMode) -> Result<Self> {
        let entries = match mode {
            RecordMode::Full => None,
            RecordMode::Entries(list) => {
                if let Some(&(i, j, _)) = list.iter().find(|(i, j, _)| *i >= n_sites || *j >= n_sites) {
                    return Err(Error::InvalidConfig(format!("recorded entry ({i}, {j}) outside {n_sites} sites")));
                }
                Some(list.clone())
            }
        };
        Ok(Self { n_sites, entries })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn len(&self) -> usize {
        match &self.entries {
            None => 2 * self.n_sites * self.n_sites,
            Some(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, i: usize, j: usize, s: Spin) -> Option<usize> {
        match &self.entries {
            None => (i < self.n_sites && j < self.n_sites).then(|| flat_index(self.n_sites, i, j, s)),
            Some(e) => e.iter().position(|&x| x == (i, j, s)),
        }
    }

    fn capture(&self, p: &PhaseSpacePoint) -> Vec<c64> {
        match &self.entries {
            None => p.flatten(),
            Some(e) => e.iter().map(|&(i, j, s)| p.entry(i, j, s)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub values: Vec<c64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Spike,
    NonFinite,
    Gauge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub step: usize,
    pub time: f64,
    pub kind: FailureKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Stream index under the ensemble's master seed.
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    pub failure: Option<Failure>,
    /// Last step the trajectory was integrated to.
    pub last_step: usize,
}

impl TrajectoryRecord {
    pub fn failure_time(&self) -> Option<f64> {
        self.failure.map(|f| f.time)
    }
}

/// Per-trajectory stream: `master_seed` picks the key, `index` the stream.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// `k` independent `N(0, dt)` increments.
pub fn sample_wiener<R: Rng + ?Sized>(k: usize, dt: f64, rng: &mut R) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Model plus the precomputed hopping propagator for one time step.
pub struct Stepper {
    model: HubbardModel,
    cfg: IntegratorConfig,
    hop: Option<Mat<c64>>,
}

impl Stepper {
    pub fn new(model: HubbardModel, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.gauge.validate(model.n_sites())?;
        let hop = match cfg.scheme {
            Scheme::EulerMaruyama => None,
            Scheme::ExponentialEuler => {
                let j = Mat::from_fn(model.n_sites(), model.n_sites(), |a, b| model.tunneling()[(a, b)].re);
                Some(expi_symmetric(j.as_ref(), cfg.dt / model.params().hbar))
            }
        };
        Ok(Self { model, cfg, hop })
    }

    pub fn model(&self) -> &HubbardModel {
        &self.model
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    /// One step; a gauge failure is returned as an error and leaves `p`
    /// untouched.
    pub fn step<R: Rng + ?Sized>(&self, p: &PhaseSpacePoint, rng: &mut R) -> Result<PhaseSpacePoint> {
        let dt = self.cfg.dt;
        let u = self.model.params().u;
        let noise = if u != 0.0 { Some(self.cfg.gauge.operator(&self.model, p, rng)?) } else { None };
        let dn = noise.as_ref().map(|op| op.apply(&sample_wiener(op.channels(), dt, rng)));

        let advance = |s: Spin| -> Mat<c64> {
            let n = p.spin(s);
            let other = p.spin(s.flip());
            let drift = match self.hop {
                None => self.model.drift_spin(n.as_ref(), other.as_ref()),
                Some(_) => hartree_drift(&self.model, n, other),
            };
            let mut next = n + &(drift * faer::Scale(c64::new(dt, 0.0)));
            if let Some((up, down)) = &dn {
                next += match s {
                    Spin::Up => up,
                    Spin::Down => down,
                };
            }
            match &self.hop {
                None => next,
                Some(prop) => prop * &next * prop.adjoint(),
            }
        };
        PhaseSpacePoint::new(advance(Spin::Up), advance(Spin::Down))
    }
}

/// Interaction part of the drift, `(iU/ħ)(n d - d n)` with `d = diag(n_-σ)`.
fn hartree_drift(model: &HubbardModel, n: &Mat<c64>, other: &Mat<c64>) -> Mat<c64> {
    let ns = n.nrows();
    let pre = c64::new(0.0, model.params().u / model.params().hbar);
    Mat::from_fn(ns, ns, |i, j| pre * (other[(j, j)] - other[(i, i)]) * n[(i, j)])
}

fn classify(p: &PhaseSpacePoint, threshold: f64) -> Option<FailureKind> {
    let m = p.max_abs();
    if !m.is_finite() {
        Some(FailureKind::NonFinite)
    } else if m > threshold {
        Some(FailureKind::Spike)
    } else {
        None
    }
}

/// Integrates until `t_max` (or `horizon`, if smaller) or the first failure.
fn integrate<R: Rng + ?Sized>(
    stepper: &Stepper,
    init: PhaseSpacePoint,
    layout: &RecordLayout,
    seed: u64,
    rng: &mut R,
    horizon: &AtomicUsize,
) -> TrajectoryRecord {
    let cfg = stepper.config();
    let mut record = TrajectoryRecord { seed, snapshots: Vec::new(), failure: None, last_step: 0 };
    if let Some(kind) = classify(&init, cfg.spike_threshold) {
        record.failure = Some(Failure { step: 0, time: 0.0, kind });
        if cfg.stop_at_first_failure {
            horizon.fetch_min(0, Ordering::Relaxed);
        }
        return record;
    }
    record.snapshots.push(Snapshot { step: 0, values: layout.capture(&init) });
    let mut p = init;
    let mut step = 0;
    while step < horizon.load(Ordering::Relaxed) {
        step += 1;
        let outcome = stepper.step(&p, rng);
        let kind = match &outcome {
            Err(_) => Some(FailureKind::Gauge),
            Ok(next) => classify(next, cfg.spike_threshold),
        };
        if let Some(kind) = kind {
            record.failure = Some(Failure { step, time: cfg.time(step), kind });
            if cfg.stop_at_first_failure {
                horizon.fetch_min(step, Ordering::Relaxed);
            }
            break;
        }
        p = outcome.expect("checked above");
        record.last_step = step;
        if step % cfg.snapshot_stride == 0 {
            record.snapshots.push(Snapshot { step, values: layout.capture(&p) });
        }
    }
    record
}

pub fn run_trajectory(
    init: &PhaseSpacePoint,
    stepper: &Stepper,
    master_seed: u64,
    index: u64,
) -> Result<TrajectoryRecord> {
    let layout = RecordLayout::new(init.n_sites(), &stepper.config().record)?;
    let mut rng = trajectory_rng(master_seed, index);
    let horizon = AtomicUsize::new(stepper.config().n_steps());
    Ok(integrate(stepper, init.clone(), &layout, index, &mut rng, &horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BellNoise {
    #[default]
    Binary,
    Gaussian,
}

/// Source of initial points.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSampler {
    /// Every trajectory starts from the same point.
    Delta(PhaseSpacePoint),
    Bell { state: BellState, noise: BellNoise },
}

impl InitSampler {
    pub fn from_state(state: &InitialState, noise: BellNoise) -> Result<Self> {
        match state {
            InitialState::Bell(b) => Ok(InitSampler::Bell { state: validate_bell(b.alpha, b.beta)?, noise }),
            other => Ok(InitSampler::Delta(PhaseSpacePoint::from_initial_state(other)?)),
        }
    }

    pub fn n_sites(&self) -> usize {
        match self {
            InitSampler::Delta(p) => p.n_sites(),
            InitSampler::Bell { .. } => 2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhaseSpacePoint {
        match self {
            InitSampler::Delta(p) => p.clone(),
            InitSampler::Bell { state, noise } => sample_bell_initial(state, *noise, rng),
        }
    }
}

/// Stochastic initial point for `α|↑↓, 0> + β|0, ↑↓>`:
///
/// ```text
/// n↑ = [ |α|²(1+W1)   β̄ W3        ]    n↓ = [ |α|²(1+W1)   α W3        ]
///      [ ᾱ W2         |β|²(1-W1)  ]         [ β W2         |β|²(1-W1)  ]
/// ```
///
/// with `W1..W3` either fair ±1 variables or standard normals.
pub fn sample_bell_initial<R: Rng + ?Sized>(state: &BellState, noise: BellNoise, rng: &mut R) -> PhaseSpacePoint {
    let mut draw = || match noise {
        BellNoise::Binary => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        BellNoise::Gaussian => rng.sample::<f64, _>(StandardNormal),
    };
    let (w1, w2, w3) = (draw(), draw(), draw());
    let (a, b) = (state.alpha, state.beta);
    let (a2, b2) = (a.norm_sqr(), b.norm_sqr());
    let diag = [c64::new(a2 * (1.0 + w1), 0.0), c64::new(b2 * (1.0 - w1), 0.0)];
    let up = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => b.conj() * w3,
        (1, 0) => a.conj() * w2,
        _ => diag[i],
    });
    let down = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => a * w3,
        (1, 0) => b * w2,
        _ => diag[i],
    });
    PhaseSpacePoint::new(up, down).expect("2x2 blocks")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub records: Vec<TrajectoryRecord>,
    pub config: IntegratorConfig,
    pub layout: RecordLayout,
    pub master_seed: u64,
    /// Recorded steps, shared by all trajectories.
    pub snapshot_steps: Vec<usize>,
    /// Trajectories holding a snapshot at each recorded step.
    pub alive: Vec<usize>,
    /// Last integrated step.
    pub horizon: usize,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&s| self.config.time(s)).collect()
    }

    pub fn n_sites(&self) -> usize {
        self.layout.n_sites()
    }

    pub fn failure_times(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.failure_time()).collect()
    }

    pub fn gauge_failures(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.failure, Some(Failure { kind: FailureKind::Gauge, .. })))
            .count()
    }

    /// Value of entry `(i, j, s)` in trajectory `k` at snapshot `idx`, if
    /// recorded.
    pub fn value(&self, k: usize, idx: usize, i: usize, j: usize, s: Spin) -> Option<c64> {
        let pos = self.layout.position(i, j, s)?;
        self.records[k].snapshots.get(idx).map(|snap| snap.values[pos])
    }
}

pub fn run_ensemble(
    sampler: &InitSampler,
    m: usize,
    stepper: &Stepper,
    master_seed: u64,
) -> Result<TrajectoryEnsemble> {
    if m == 0 {
        return Err(Error::InvalidConfig("ensemble needs at least one trajectory".into()));
    }
    let n_sites = sampler.n_sites();
    if n_sites != stepper.model().n_sites() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} sites", stepper.model().n_sites()),
            found: format!("{n_sites} sites"),
        });
    }
    let cfg = stepper.config().clone();
    let layout = RecordLayout::new(n_sites, &cfg.record)?;
    let horizon = AtomicUsize::new(cfg.n_steps());
    let mut records: Vec<TrajectoryRecord> = (0..m as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(master_seed, k);
            let init = sampler.sample(&mut rng);
            integrate(stepper, init, &layout, k, &mut rng, &horizon)
        })
        .collect();

    let final_step = if cfg.stop_at_first_failure {
        let first = records.iter().filter_map(|r| r.failure.map(|f| f.step)).min();
        first.unwrap_or(cfg.n_steps())
    } else {
        cfg.n_steps()
    };
    if cfg.stop_at_first_failure {
        // Scheduling decides how far past the first failure a trajectory
        // got; cut everything back so the result is deterministic.
        for r in &mut records {
            r.snapshots.retain(|s| s.step <= final_step);
            if r.failure.is_some_and(|f| f.step > final_step) {
                r.failure = None;
            }
            r.last_step = r.last_step.min(final_step);
        }
    }

    let snapshot_steps: Vec<usize> = (0..=final_step).step_by(cfg.snapshot_stride).collect();
    let alive = (0..snapshot_steps.len())
        .map(|idx| records.iter().filter(|r| r.snapshots.len() > idx).count())
        .collect();
    Ok(TrajectoryEnsemble { records, config: cfg, layout, master_seed, snapshot_steps, alive, horizon: final_step })
}

/// Earliest failure time in the ensemble, or the integrated horizon when
/// nothing failed.
pub fn practical_simulation_time(e: &TrajectoryEnsemble) -> f64 {
    e.records
        .iter()
        .filter_map(|r| r.failure_time())
        .fold(e.config.time(e.horizon), f64::min)
}

/// Failure times with survivors censored at the horizon.
pub fn censored_failure_times(e: &TrajectoryEnsemble) -> Vec<f64> {
    let end = e.config.time(e.horizon);
    e.records.iter().map(|r| r.failure_time().unwrap_or(end)).collect()
}

/// Quantile (linear interpolation) of the censored failure times.
pub fn failure_quantile(e: &TrajectoryEnsemble, q: f64) -> f64 {
    let mut t = censored_failure_times(e);
    t.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (t.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    t[lo] + (t[hi] - t[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Trajectories that reached the horizon.
    pub survivors: usize,
}

pub fn failure_histogram(e: &TrajectoryEnsemble, bins: usize) -> FailureHistogram {
    let bins = bins.max(1);
    let end = e.config.time(e.horizon).max(e.config.dt);
    let edges: Vec<f64> = (0..=bins).map(|b| end * b as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    let mut survivors = 0;
    for r in &e.records {
        match r.failure_time() {
            Some(t) => counts[((t / end * bins as f64) as usize).min(bins - 1)] += 1,
            None => survivors += 1,
        }
    }
    FailureHistogram { edges, counts, survivors }
}
