//! Gaussian phase-space simulation of the Fermi-Hubbard model.
//!
//! The crate maps the Hubbard dynamics onto Itô stochastic equations for
//! per-trajectory Green's functions, with a choice of noise gauge, and
//! provides exact-diagonalization and Hartree-Fock references to compare
//! against.

pub mod ed;
pub mod error;
pub mod gauge;
pub mod hf;
pub mod lattice;
pub mod linalg;
pub mod observables;
pub mod phase_space;
pub mod sde;
pub mod testutil;

pub use error::{Error, Result};
pub use gauge::{verify_factorization, FactorizationReport, GaugeMethod, NoiseOperator, RsvdOptions};
pub use lattice::{build_lattice, BellState, HubbardParams, InitialState, LatticeSpec, Spin};
pub use phase_space::{
    analytic_noise, diffusion_block, drift, DiffusionBlock, DriftValue, HubbardModel, NoiseFactor,
    PhaseSpacePoint,
};
pub use sde::{
    practical_simulation_time, run_ensemble, run_trajectory, sample_bell_initial, sample_wiener, BellNoise,
    InitSampler, IntegratorConfig, RecordMode, Scheme, Stepper, TrajectoryEnsemble, TrajectoryRecord,
};
pub use ed::{build_hamiltonian, ed_evolve, ed_observables, ed_step, EdEvolution, EdObservables, EdState, FockBasis};
pub use hf::{hf_evolve, hf_initial, HfEvolution};
pub use observables::{ensemble_series, g2, occupation, series_from_ed, series_from_hf, Observable, ObservableSeries, Window};
