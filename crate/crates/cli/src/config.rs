//! Experiment configuration files and command-line overrides.

use std::path::{Path, PathBuf};

use hubbard_gpsr::ed::{basis_for, DEFAULT_DIM_LIMIT};
use hubbard_gpsr::lattice::{spin_wave_occupation, validate_bell};
use hubbard_gpsr::{build_lattice, BellNoise, GaugeMethod, HubbardParams, InitialState, LatticeSpec, Observable, Scheme, Spin};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "HUBBARD_GPSR_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GpsrAnalytic,
    GpsrRsvd,
    GpsrSvd,
    GpsrLowrank,
    Ed,
    Hf,
}

impl Method {
    pub fn is_gpsr(self) -> bool {
        !matches!(self, Method::Ed | Method::Hf)
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::GpsrAnalytic => "gpsr-analytic",
            Method::GpsrRsvd => "gpsr-rsvd",
            Method::GpsrSvd => "gpsr-svd",
            Method::GpsrLowrank => "gpsr-lowrank",
            Method::Ed => "ed",
            Method::Hf => "hf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    SpinWave,
    /// `alpha |↑↓,0> + beta |0,↑↓>`, amplitudes as `[re, im]`.
    Bell { alpha: [f64; 2], beta: [f64; 2] },
    Custom { up: Vec<f64>, down: Vec<f64> },
}

impl InitialConfig {
    pub fn build(&self, lat: &LatticeSpec) -> Result<InitialState, CliError> {
        let state = match self {
            InitialConfig::SpinWave => spin_wave_occupation(lat)?,
            InitialConfig::Bell { alpha, beta } => InitialState::Bell(validate_bell(
                c64::new(alpha[0], alpha[1]),
                c64::new(beta[0], beta[1]),
            )?),
            InitialConfig::Custom { up, down } => InitialState::custom(up.clone(), down.clone())?,
        };
        state.validate_for(lat)?;
        Ok(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeOptions {
    /// Retained singular triplets; `2 n_s` when unset.
    pub rank: Option<usize>,
    pub oversample: usize,
    pub power_iters: usize,
    /// Randomized SVD of the explicit diffusion block.
    pub explicit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Lattice extents, e.g. `[8]` or `[3, 3, 4]`.
    pub dims: Vec<usize>,
    pub params: HubbardParams,
    pub initial: InitialConfig,
    pub method: Method,
    pub trajectories: usize,
    pub dt: f64,
    pub t_max: f64,
    pub snapshot_stride: usize,
    pub spike_threshold: f64,
    pub master_seed: u64,
    /// Observable ids; all occupations and both traces when empty.
    pub observables: Vec<Observable>,
    pub output: Option<PathBuf>,
    pub gauge: GaugeOptions,
    pub scheme: Scheme,
    pub stop_at_first_failure: bool,
    pub bell_noise: BellNoise,
    pub ed_dim_limit: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: vec![8],
            params: HubbardParams::default(),
            initial: InitialConfig::SpinWave,
            method: Method::GpsrRsvd,
            trajectories: 1000,
            dt: 2e-3,
            t_max: 3.0,
            snapshot_stride: 25,
            spike_threshold: 1e6,
            master_seed: 1,
            observables: Vec::new(),
            output: None,
            gauge: GaugeOptions::default(),
            scheme: Scheme::default(),
            stop_at_first_failure: false,
            bell_noise: BellNoise::default(),
            ed_dim_limit: DEFAULT_DIM_LIMIT,
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub method: Option<Method>,
    pub trajectories: Option<usize>,
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub seed: Option<u64>,
    pub rank: Option<usize>,
    pub spike_threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(m) = o.trajectories {
            self.trajectories = m;
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(t) = o.t_max {
            self.t_max = t;
        }
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(r) = o.rank {
            self.gauge.rank = Some(r);
        }
        if let Some(s) = o.spike_threshold {
            self.spike_threshold = s;
        }
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
    }

    pub fn lattice(&self) -> Result<LatticeSpec, CliError> {
        Ok(build_lattice(&self.dims, self.params.j)?)
    }

    pub fn initial_state(&self) -> Result<InitialState, CliError> {
        self.initial.build(&self.lattice()?)
    }

    pub fn gauge_method(&self) -> Option<GaugeMethod> {
        let g = self.gauge;
        match self.method {
            Method::GpsrAnalytic => Some(GaugeMethod::Analytic),
            Method::GpsrSvd => Some(GaugeMethod::ClassicalSvd),
            Method::GpsrLowrank => Some(GaugeMethod::LowRankSvd { rank: g.rank }),
            Method::GpsrRsvd => Some(GaugeMethod::RandomizedSvd {
                rank: g.rank,
                oversample: g.oversample,
                power_iters: g.power_iters,
                explicit: g.explicit,
            }),
            Method::Ed | Method::Hf => None,
        }
    }

    /// The configured observables, or the default set.
    pub fn observable_list(&self, n_sites: usize) -> Vec<Observable> {
        if !self.observables.is_empty() {
            return self.observables.clone();
        }
        let mut out = Vec::new();
        for s in Spin::BOTH {
            out.extend((0..n_sites).map(|i| Observable::occupation(i, s)));
        }
        out.extend(Spin::BOTH.map(|spin| Observable::Trace { spin }));
        out
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil() as usize
    }

    /// Checks every constraint, naming the first one violated.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        if !(self.spike_threshold > 0.0) {
            return bad(format!("spike_threshold must be positive, got {}", self.spike_threshold));
        }
        if self.method.is_gpsr() && self.trajectories == 0 {
            return bad("trajectories must be at least 1".into());
        }
        let lat = self.lattice()?;
        let state = self.initial_state()?;
        for o in self.observable_list(lat.n_sites()) {
            o.validate(lat.n_sites())?;
        }
        if let Some(g) = self.gauge_method() {
            g.validate(lat.n_sites())?;
        }
        if self.method == Method::Ed {
            basis_for(&state, &lat, self.ed_dim_limit)?;
        }
        Ok(())
    }
}
