//! Lattice geometry, Hubbard parameters and initial states.
//!
//! Sites are enumerated row-major over their coordinates with `x` varying
//! fastest, so on a `[3, 3, 4]` lattice the 1-based site 10 sits at
//! coordinates `(1, 1, 2)`. Boundaries are open.

use faer::Mat;
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|alpha|^2 + |beta|^2 - 1` for Bell states.
pub const BELL_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    pub fn flip(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Spin::Up => "up",
            Spin::Down => "down",
        }
    }
}

/// Hubbard model energies. Time is measured in units of `hbar / j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HubbardParams {
    /// Nearest-neighbour tunneling amplitude.
    pub j: f64,
    /// On-site interaction between opposite spins.
    pub u: f64,
    pub hbar: f64,
}

impl Default for HubbardParams {
    fn default() -> Self {
        Self { j: 1.0, u: 1.0, hbar: 1.0 }
    }
}

impl HubbardParams {
    pub fn new(j: f64, u: f64) -> Result<Self> {
        let p = Self { j, u, hbar: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j.is_finite() && self.u.is_finite() && self.hbar.is_finite()) {
            return Err(Error::InvalidParams("parameters must be finite".into()));
        }
        if self.hbar <= 0.0 {
            return Err(Error::InvalidParams(format!("hbar must be positive, got {}", self.hbar)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LatticeSpec {
    dims: Vec<usize>,
    n_sites: usize,
    tunneling: Mat<f64>,
}

impl LatticeSpec {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Real symmetric tunneling matrix `J`, zero on the diagonal.
    pub fn tunneling(&self) -> &Mat<f64> {
        &self.tunneling
    }

    pub fn tunneling_complex(&self) -> Mat<c64> {
        Mat::from_fn(self.n_sites, self.n_sites, |i, j| c64::new(self.tunneling[(i, j)], 0.0))
    }

    /// Zero-based coordinates of a site.
    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut rest = site;
        self.dims
            .iter()
            .map(|&extent| {
                let c = rest % extent;
                rest /= extent;
                c
            })
            .collect()
    }

    pub fn site_index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.dims).rev().fold(0, |acc, (&c, &extent)| acc * extent + c)
    }

    /// Undirected nearest-neighbour edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for a in 0..self.n_sites {
            for b in a + 1..self.n_sites {
                if self.tunneling[(a, b)] != 0.0 {
                    edges.push((a, b));
                }
            }
        }
        edges
    }

    pub fn neighbours(&self, site: usize) -> Vec<usize> {
        (0..self.n_sites).filter(|&b| self.tunneling[(site, b)] != 0.0).collect()
    }
}

/// Builds an open-boundary hypercubic lattice with tunneling `j_amp` on
/// every nearest-neighbour bond.
pub fn build_lattice(dims: &[usize], j_amp: f64) -> Result<LatticeSpec> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(Error::InvalidLattice(format!(
            "expected 1 to 3 extents, got {}",
            dims.len()
        )));
    }
    if let Some(&bad) = dims.iter().find(|&&d| d == 0) {
        return Err(Error::InvalidLattice(format!("extent {bad} is not positive")));
    }
    let n_sites: usize = dims.iter().product();
    if n_sites < 2 {
        return Err(Error::InvalidLattice("a lattice needs at least two sites".into()));
    }
    if !j_amp.is_finite() {
        return Err(Error::InvalidParams("tunneling amplitude must be finite".into()));
    }

    let mut spec = LatticeSpec {
        dims: dims.to_vec(),
        n_sites,
        tunneling: Mat::zeros(n_sites, n_sites),
    };
    for a in 0..n_sites {
        let ca = spec.coords(a);
        for (axis, &extent) in dims.iter().enumerate() {
            if ca[axis] + 1 < extent {
                let mut cb = ca.clone();
                cb[axis] += 1;
                let b = spec.site_index(&cb);
                spec.tunneling[(a, b)] = j_amp;
                spec.tunneling[(b, a)] = j_amp;
            }
        }
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellState {
    pub alpha: c64,
    pub beta: c64,
}

/// Checks `|alpha|^2 + |beta|^2 = 1` and returns the Bell state
/// `alpha |updown, 0> + beta |0, updown>`.
pub fn validate_bell(alpha: c64, beta: c64) -> Result<BellState> {
    let norm = alpha.norm_sqr() + beta.norm_sqr();
    if !norm.is_finite() || (norm - 1.0).abs() > BELL_NORM_TOL {
        return Err(Error::InvalidInitialState(format!(
            "Bell amplitudes have |alpha|^2 + |beta|^2 = {norm}, expected 1"
        )));
    }
    Ok(BellState { alpha, beta })
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Product Fock state from the spin-wave pattern.
    SpinWave { up: Vec<f64>, down: Vec<f64> },
    /// Two-site entangled state; only valid for `n_s = 2`.
    Bell(BellState),
    /// Arbitrary diagonal occupations in `[0, 1]`.
    CustomDiagonal { up: Vec<f64>, down: Vec<f64> },
}

impl InitialState {
    pub fn custom(up: Vec<f64>, down: Vec<f64>) -> Result<Self> {
        if up.len() != down.len() {
            return Err(Error::InvalidInitialState(
                "spin-up and spin-down occupations differ in length".into(),
            ));
        }
        if up.iter().chain(&down).any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidInitialState("occupations must lie in [0, 1]".into()));
        }
        Ok(InitialState::CustomDiagonal { up, down })
    }

    /// Diagonal occupations for product states, `None` for Bell states.
    pub fn diagonal(&self) -> Option<(&[f64], &[f64])> {
        match self {
            InitialState::SpinWave { up, down } | InitialState::CustomDiagonal { up, down } => {
                Some((up, down))
            }
            InitialState::Bell(_) => None,
        }
    }

    /// Checks the state against a lattice.
    pub fn validate_for(&self, lattice: &LatticeSpec) -> Result<()> {
        let n = lattice.n_sites();
        match self {
            InitialState::Bell(b) => {
                if n != 2 {
                    return Err(Error::InvalidInitialState(format!(
                        "Bell states require 2 sites, lattice has {n}"
                    )));
                }
                validate_bell(b.alpha, b.beta).map(|_| ())
            }
            InitialState::SpinWave { up, down } | InitialState::CustomDiagonal { up, down } => {
                if up.len() != n || down.len() != n {
                    return Err(Error::InvalidInitialState(format!(
                        "expected {n} occupations per spin, got {} and {}",
                        up.len(),
                        down.len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// `true` when the state is a single Slater determinant (integer
    /// occupations), i.e. when its phase-space density is a delta function.
    pub fn is_slater(&self) -> bool {
        match self.diagonal() {
            Some((up, down)) => up.iter().chain(down).all(|&x| x == 0.0 || x == 1.0),
            None => false,
        }
    }
}

/// Spin-up fermions on one half of the lattice, spin-down on the other.
///
/// Chains and 3D lattices split the site enumeration in half. 2D lattices
/// with even extents alternate 2x2 plaquettes between spin-up and spin-down
/// in a checkerboard, otherwise they fall back to the half/half split.
pub fn spin_wave_occupation(lattice: &LatticeSpec) -> Result<InitialState> {
    let n = lattice.n_sites();
    if n % 2 != 0 {
        return Err(Error::InvalidInitialState(format!(
            "spin wave needs an even number of sites, got {n}"
        )));
    }
    let dims = lattice.dims();
    let plaquettes = dims.len() == 2 && dims.iter().all(|d| d % 2 == 0);
    let is_up = |site: usize| -> bool {
        if plaquettes {
            let c = lattice.coords(site);
            (c[0] / 2 + c[1] / 2) % 2 == 0
        } else {
            site < n / 2
        }
    };
    let up: Vec<f64> = (0..n).map(|s| if is_up(s) { 1.0 } else { 0.0 }).collect();
    let down: Vec<f64> = up.iter().map(|x| 1.0 - x).collect();
    Ok(InitialState::SpinWave { up, down })
}
