//! Wall-clock scaling of the noise step with lattice size.
//!
//! For each chain length the harness evolves a spin wave for a few steps
//! to reach a generic point, then times the diffusion-block build, each
//! factorization on that block, and one full integrator step per gauge.
//! A least-squares line through `(ln n_s, ln t)` gives the exponent.

use std::collections::BTreeMap;
use std::hint::black_box;
use std::time::Instant;

use hubbard_gpsr::gauge::{
    classical_spectral, default_rank, lowrank_from_operator, randomized_compressed, randomized_from_operator,
    DenseDiffusion, RsvdOptions,
};
use hubbard_gpsr::lattice::spin_wave_occupation;
use hubbard_gpsr::sde::trajectory_rng;
use hubbard_gpsr::{
    build_lattice, GaugeMethod, HubbardModel, HubbardParams, IntegratorConfig, PhaseSpacePoint, Scheme, Stepper,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Fits below this coefficient of determination are flagged.
pub const MIN_R2: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    Analytic,
    /// Randomized SVD of the explicit diffusion block.
    Rsvd,
    /// Randomized SVD through the compressed range coordinates.
    RsvdCompressed,
    Svd,
    Lowrank,
}

impl BenchMethod {
    pub fn label(self) -> &'static str {
        match self {
            BenchMethod::Analytic => "analytic",
            BenchMethod::Rsvd => "rsvd",
            BenchMethod::RsvdCompressed => "rsvd-compressed",
            BenchMethod::Svd => "svd",
            BenchMethod::Lowrank => "lowrank",
        }
    }

    fn gauge(self) -> GaugeMethod {
        match self {
            BenchMethod::Analytic => GaugeMethod::Analytic,
            BenchMethod::Rsvd => GaugeMethod::RandomizedSvd { rank: None, oversample: 0, power_iters: 0, explicit: true },
            BenchMethod::RsvdCompressed => GaugeMethod::randomized(),
            BenchMethod::Svd => GaugeMethod::ClassicalSvd,
            BenchMethod::Lowrank => GaugeMethod::LowRankSvd { rank: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub methods: Vec<BenchMethod>,
    /// Timed repetitions; one extra untimed repetition runs first.
    pub reps: usize,
    pub seed: u64,
    pub warmup_steps: usize,
    pub dt: f64,
    /// Skip the full-step timing.
    pub factor_only: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![8, 12, 16, 24, 32],
            methods: vec![BenchMethod::Analytic, BenchMethod::Rsvd, BenchMethod::RsvdCompressed, BenchMethod::Svd],
            reps: 3,
            seed: 1,
            warmup_steps: 20,
            dt: 2e-3,
            factor_only: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.sizes.len() < 4 {
            return Err(CliError::Config(format!("need at least 4 sizes for a fit, got {}", self.sizes.len())));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) || self.sizes[0] < 2 {
            return Err(CliError::Config("sizes must be increasing and at least 2".into()));
        }
        if self.sizes.iter().any(|n| n % 2 != 0) {
            return Err(CliError::Config("sizes must be even (spin-wave warm-up state)".into()));
        }
        if self.reps < 3 {
            return Err(CliError::Config(format!("reps must be at least 3, got {}", self.reps)));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("no methods to benchmark".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_sites: usize,
    /// Mean seconds to assemble the diffusion block.
    pub build: f64,
    pub factorization: BTreeMap<String, f64>,
    pub step: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    /// `ln t` at `ln n_s = 0`.
    pub intercept: f64,
    pub r2: f64,
    /// `r2` below [`MIN_R2`].
    pub flagged: bool,
}

/// Least squares `ln t = exponent * ln n + intercept`.
pub fn fit_power_law(n: &[f64], t: &[f64]) -> PowerFit {
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    PowerFit { exponent, intercept, r2, flagged: r2 < MIN_R2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    /// Keyed `build`, `factor/<method>` and `step/<method>`.
    pub fits: BTreeMap<String, PowerFit>,
}

impl BenchResult {
    pub fn exponent(&self, key: &str) -> Option<f64> {
        self.fits.get(key).map(|f| f.exponent)
    }
}

fn mean_time(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    let t = Instant::now();
    for _ in 0..reps {
        f();
    }
    t.elapsed().as_secs_f64() / reps as f64
}

/// A point reached from the spin wave after a few analytic-gauge steps.
pub fn warm_state(model: &HubbardModel, n_sites: usize, cfg: &BenchConfig) -> Result<PhaseSpacePoint, CliError> {
    let lat = build_lattice(&[n_sites], model.params().j)?;
    let icfg = IntegratorConfig {
        dt: cfg.dt,
        t_max: cfg.dt * cfg.warmup_steps.max(1) as f64,
        gauge: GaugeMethod::Analytic,
        scheme: Scheme::EulerMaruyama,
        ..IntegratorConfig::default()
    };
    let stepper = Stepper::new(model.clone(), icfg)?;
    let mut p = PhaseSpacePoint::from_initial_state(&spin_wave_occupation(&lat)?)?;
    let mut rng = trajectory_rng(cfg.seed, n_sites as u64);
    for _ in 0..cfg.warmup_steps {
        p = stepper.step(&p, &mut rng)?;
    }
    Ok(p)
}

pub fn bench_noise_step(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchResult, CliError> {
    cfg.validate()?;
    let par = HubbardParams::default();
    let mut rows = Vec::new();
    for &ns in &cfg.sizes {
        let lat = build_lattice(&[ns], par.j)?;
        let model = HubbardModel::new(&lat, &par)?;
        let p = warm_state(&model, ns, cfg)?;
        let mut rng = trajectory_rng(cfg.seed, 1_000 + ns as u64);
        let build = mean_time(cfg.reps, || {
            black_box(model.diffusion_block(&p).expect("block"));
        });
        let dq = model.diffusion_block(&p)?;
        let rank = default_rank(ns);
        let opts = RsvdOptions::default();
        let mut row = BenchRow { n_sites: ns, build, factorization: BTreeMap::new(), step: BTreeMap::new() };
        for &m in &cfg.methods {
            let t = match m {
                BenchMethod::Analytic => mean_time(cfg.reps, || {
                    black_box(model.analytic_noise(&p).expect("analytic"));
                }),
                BenchMethod::Rsvd => {
                    let op = DenseDiffusion::new(&dq);
                    mean_time(cfg.reps, || {
                        black_box(randomized_from_operator(&op, rank, opts, &mut rng).expect("rsvd"));
                    })
                }
                BenchMethod::RsvdCompressed => mean_time(cfg.reps, || {
                    black_box(randomized_compressed(&p, model.noise_scale(), rank, opts, &mut rng).expect("rsvd"));
                }),
                BenchMethod::Svd => mean_time(cfg.reps, || {
                    black_box(classical_spectral(&dq).expect("svd"));
                }),
                BenchMethod::Lowrank => {
                    let op = DenseDiffusion::new(&dq);
                    mean_time(cfg.reps, || {
                        black_box(lowrank_from_operator(&op, rank).expect("lowrank"));
                    })
                }
            };
            row.factorization.insert(m.label().to_string(), t);
            if !cfg.factor_only {
                let icfg = IntegratorConfig { dt: cfg.dt, gauge: m.gauge(), ..IntegratorConfig::default() };
                let stepper = Stepper::new(model.clone(), icfg)?;
                let t = mean_time(cfg.reps, || {
                    black_box(stepper.step(&p, &mut rng).expect("step"));
                });
                row.step.insert(m.label().to_string(), t);
            }
        }
        progress(&row);
        rows.push(row);
    }
    let n: Vec<f64> = rows.iter().map(|r| r.n_sites as f64).collect();
    let mut fits = BTreeMap::new();
    fits.insert("build".to_string(), fit_power_law(&n, &rows.iter().map(|r| r.build).collect::<Vec<_>>()));
    for &m in &cfg.methods {
        let label = m.label();
        let f: Vec<f64> = rows.iter().map(|r| r.factorization[label]).collect();
        fits.insert(format!("factor/{label}"), fit_power_law(&n, &f));
        if !cfg.factor_only {
            let s: Vec<f64> = rows.iter().map(|r| r.step[label]).collect();
            fits.insert(format!("step/{label}"), fit_power_law(&n, &s));
        }
    }
    Ok(BenchResult { config: cfg.clone(), rows, fits })
}
