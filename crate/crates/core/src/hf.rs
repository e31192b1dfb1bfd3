//! Time-dependent Hartree-Fock.
//!
//! The Wick-factorized Heisenberg equations for `n_ijσ = <c†_jσ c_iσ>` are
//! the deterministic part of the phase-space drift, so the mean-field
//! trajectory is the noise-free stochastic trajectory integrated with
//! classic RK4.

use faer::Mat;
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};
use crate::lattice::{HubbardParams, InitialState, LatticeSpec};
use crate::phase_space::{HubbardModel, PhaseSpacePoint};

pub const HERMITICITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HfEvolution {
    pub times: Vec<f64>,
    pub states: Vec<PhaseSpacePoint>,
}

fn hermitian_defect(m: &Mat<c64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn axpy(base: &PhaseSpacePoint, k: &PhaseSpacePoint, h: f64) -> PhaseSpacePoint {
    let s = faer::Scale(c64::new(h, 0.0));
    PhaseSpacePoint::new(base.up() + s * k.up(), base.down() + s * k.down()).expect("square blocks")
}

fn rate(model: &HubbardModel, p: &PhaseSpacePoint) -> Result<PhaseSpacePoint> {
    let a = model.drift(p)?;
    PhaseSpacePoint::new(a.up, a.down)
}

/// One classic RK4 step of the mean-field equations.
pub fn hf_step(model: &HubbardModel, p: &PhaseSpacePoint, dt: f64) -> Result<PhaseSpacePoint> {
    let k1 = rate(model, p)?;
    let k2 = rate(model, &axpy(p, &k1, dt / 2.0))?;
    let k3 = rate(model, &axpy(p, &k2, dt / 2.0))?;
    let k4 = rate(model, &axpy(p, &k3, dt))?;
    let mut out = p.clone();
    for (w, k) in [(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)] {
        out = axpy(&out, k, dt * w / 6.0);
    }
    Ok(out)
}

/// Integrates from `h0` over `n_steps` steps of `dt`, keeping every
/// `stride`-th state.
pub fn hf_evolve(
    h0: &PhaseSpacePoint,
    lat: &LatticeSpec,
    par: &HubbardParams,
    dt: f64,
    n_steps: usize,
    stride: usize,
) -> Result<HfEvolution> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    if h0.n_sites() != lat.n_sites() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} sites", lat.n_sites()),
            found: format!("{} sites", h0.n_sites()),
        });
    }
    for m in [h0.up(), h0.down()] {
        let d = hermitian_defect(m);
        if d > HERMITICITY_TOL {
            return Err(Error::InvalidInitialState(format!("HF density matrix not Hermitian (defect {d:.2e})")));
        }
    }
    let model = HubbardModel::new(lat, par)?;
    let stride = stride.max(1);
    let mut p = h0.clone();
    let mut out = HfEvolution { times: vec![0.0], states: vec![p.clone()] };
    for step in 1..=n_steps {
        p = hf_step(&model, &p, dt)?;
        if step % stride == 0 {
            out.times.push(step as f64 * dt);
            out.states.push(p.clone());
        }
    }
    Ok(out)
}

pub fn hf_initial(state: &InitialState, lat: &LatticeSpec) -> Result<PhaseSpacePoint> {
    state.validate_for(lat)?;
    match state {
        InitialState::Bell(b) => {
            // Pairs hop together, so the one-body density matrix is diagonal.
            let occ = [b.alpha.norm_sqr(), b.beta.norm_sqr()];
            PhaseSpacePoint::from_diagonal(&occ, &occ)
        }
        other => {
            let (u, d) = other.diagonal().expect("diagonal state");
            PhaseSpacePoint::from_diagonal(u, d)
        }
    }
}
