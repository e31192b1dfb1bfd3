//! Phase-space variables of the Gaussian representation and the
//! Fokker-Planck coefficients evaluated at a point.
//!
//! A point holds one Green's-function matrix per spin, with the convention
//! `n[(i, j)] = <c†_j c_i>`. Stacked as a vector, the spin-up entries come
//! first and each block is row-major in `(i, j)`; this is the row order of
//! every noise matrix and of the full diffusion matrix.
//!
//! With on-site interaction `U` the diffusion matrix couples only opposite
//! spins,
//!
//! ```text
//! D = [ 0     D_q ]
//!     [ D_qᵀ  0   ]
//! ```
//!
//! and the analytic noise matrix is
//! `B0 = [B1↑, iB1↑, B2↑, iB2↑; B1↓, -iB1↓, B2↓, -iB2↓]` with
//! `B1_σ[(ij, p)] = s n_σ[(i, p)] ñ_σ[(p, j)]`,
//! `B2_σ[(ij, p)] = i s ñ_σ[(i, p)] n_σ[(p, j)]`, `s = sqrt(iU/ħ)/sqrt(2)`,
//! where `ñ = I - n` is the hole Green's function.

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};
use crate::lattice::{HubbardParams, InitialState, LatticeSpec, Spin};

const I: c64 = c64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpacePoint {
    up: Mat<c64>,
    down: Mat<c64>,
}

impl PhaseSpacePoint {
    pub fn new(up: Mat<c64>, down: Mat<c64>) -> Result<Self> {
        let n = up.nrows();
        for m in [&up, &down] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n}x{n}"),
                    found: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
        }
        Ok(Self { up, down })
    }

    pub fn zeros(n_sites: usize) -> Self {
        Self { up: Mat::zeros(n_sites, n_sites), down: Mat::zeros(n_sites, n_sites) }
    }

    pub fn from_diagonal(up: &[f64], down: &[f64]) -> Result<Self> {
        if up.len() != down.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} occupations", up.len()),
                found: format!("{} occupations", down.len()),
            });
        }
        let n = up.len();
        let diag = |occ: &[f64]| {
            Mat::from_fn(n, n, |i, j| if i == j { c64::new(occ[i], 0.0) } else { c64::new(0.0, 0.0) })
        };
        Ok(Self { up: diag(up), down: diag(down) })
    }

    /// Delta-function point of a product initial state.
    pub fn from_initial_state(state: &InitialState) -> Result<Self> {
        match state.diagonal() {
            Some((up, down)) => Self::from_diagonal(up, down),
            None => Err(Error::InvalidInitialState(
                "entangled states have no single phase-space point; sample them instead".into(),
            )),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.up.nrows()
    }

    pub fn spin(&self, s: Spin) -> &Mat<c64> {
        match s {
            Spin::Up => &self.up,
            Spin::Down => &self.down,
        }
    }

    pub fn spin_mut(&mut self, s: Spin) -> &mut Mat<c64> {
        match s {
            Spin::Up => &mut self.up,
            Spin::Down => &mut self.down,
        }
    }

    pub fn up(&self) -> &Mat<c64> {
        &self.up
    }

    pub fn down(&self) -> &Mat<c64> {
        &self.down
    }

    pub fn entry(&self, i: usize, j: usize, s: Spin) -> c64 {
        self.spin(s)[(i, j)]
    }

    pub fn trace(&self, s: Spin) -> c64 {
        let m = self.spin(s);
        (0..m.nrows()).map(|i| m[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        let mut out: f64 = 0.0;
        for m in [&self.up, &self.down] {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let a = m[(i, j)].norm();
                    if a.is_nan() {
                        return f64::NAN;
                    }
                    out = out.max(a);
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.max_abs().is_finite()
    }

    /// Stacks the variables into a vector of length `2 n_s^2`.
    pub fn flatten(&self) -> Vec<c64> {
        let n = self.n_sites();
        let mut v = Vec::with_capacity(2 * n * n);
        for m in [&self.up, &self.down] {
            for i in 0..n {
                for j in 0..n {
                    v.push(m[(i, j)]);
                }
            }
        }
        v
    }

    pub fn unflatten(n_sites: usize, v: &[c64]) -> Result<Self> {
        let nn = n_sites * n_sites;
        if v.len() != 2 * nn {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", 2 * nn),
                found: format!("{} entries", v.len()),
            });
        }
        let block = |off: usize| Mat::from_fn(n_sites, n_sites, |i, j| v[off + i * n_sites + j]);
        Ok(Self { up: block(0), down: block(nn) })
    }
}

/// Row of the stacked variable `(i, j, σ)`.
pub fn flat_index(n_sites: usize, i: usize, j: usize, s: Spin) -> usize {
    s.index() * n_sites * n_sites + i * n_sites + j
}

/// Tunneling matrix and interaction prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct HubbardModel {
    tunneling: Mat<c64>,
    params: HubbardParams,
}

impl HubbardModel {
    pub fn new(lattice: &LatticeSpec, params: &HubbardParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { tunneling: lattice.tunneling_complex(), params: *params })
    }

    pub fn n_sites(&self) -> usize {
        self.tunneling.nrows()
    }

    pub fn params(&self) -> &HubbardParams {
        &self.params
    }

    pub fn tunneling(&self) -> MatRef<'_, c64> {
        self.tunneling.as_ref()
    }

    fn check(&self, p: &PhaseSpacePoint) -> Result<()> {
        if p.n_sites() != self.n_sites() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} sites", self.n_sites()),
                found: format!("{} sites", p.n_sites()),
            });
        }
        Ok(())
    }

    /// Drift of one spin component:
    /// `(i/ħ)[J, n_σ] + (iU/ħ)(n_σ d - d n_σ)` with `d = diag(n_-σ)`.
    pub fn drift_spin(&self, n: MatRef<'_, c64>, other: MatRef<'_, c64>) -> Mat<c64> {
        let ns = self.n_sites();
        let HubbardParams { u, hbar, .. } = self.params;
        let jn = self.tunneling.as_ref() * n;
        let nj = n * self.tunneling.as_ref();
        let pre = I / hbar;
        Mat::from_fn(ns, ns, |i, j| {
            let hop = jn[(i, j)] - nj[(i, j)];
            let hartree = u * (other[(j, j)] - other[(i, i)]) * n[(i, j)];
            pre * (hop + hartree)
        })
    }

    pub fn drift(&self, p: &PhaseSpacePoint) -> Result<DriftValue> {
        self.check(p)?;
        Ok(DriftValue {
            up: self.drift_spin(p.up.as_ref(), p.down.as_ref()),
            down: self.drift_spin(p.down.as_ref(), p.up.as_ref()),
        })
    }

    /// Prefactor `sqrt(iU/ħ)/sqrt(2)` on the principal branch.
    pub fn noise_scale(&self) -> c64 {
        (I * (self.params.u / self.params.hbar)).sqrt() / std::f64::consts::SQRT_2
    }

    /// The `n_s^2 x n_s` blocks `(B1_σ, B2_σ)` of the analytic noise matrix.
    pub fn noise_blocks(&self, n: MatRef<'_, c64>) -> (Mat<c64>, Mat<c64>) {
        let ns = n.nrows();
        let s = self.noise_scale();
        let hole = |a: usize, b: usize| {
            let id = if a == b { 1.0 } else { 0.0 };
            c64::new(id, 0.0) - n[(a, b)]
        };
        let mut b1 = Mat::zeros(ns * ns, ns);
        let mut b2 = Mat::zeros(ns * ns, ns);
        for p in 0..ns {
            for i in 0..ns {
                let n_ip = s * n[(i, p)];
                let h_ip = I * s * hole(i, p);
                for j in 0..ns {
                    b1[(i * ns + j, p)] = n_ip * hole(p, j);
                    b2[(i * ns + j, p)] = h_ip * n[(p, j)];
                }
            }
        }
        (b1, b2)
    }

    /// Analytic noise matrix `B0`, of size `2 n_s^2 x 4 n_s`.
    pub fn analytic_noise(&self, p: &PhaseSpacePoint) -> Result<NoiseFactor> {
        self.check(p)?;
        let ns = self.n_sites();
        let nn = ns * ns;
        let mut b = Mat::zeros(2 * nn, 4 * ns);
        for (s, sign) in [(Spin::Up, 1.0), (Spin::Down, -1.0)] {
            let (b1, b2) = self.noise_blocks(p.spin(s).as_ref());
            let row0 = s.index() * nn;
            let rot = I * sign;
            for r in 0..nn {
                for q in 0..ns {
                    b[(row0 + r, q)] = b1[(r, q)];
                    b[(row0 + r, ns + q)] = rot * b1[(r, q)];
                    b[(row0 + r, 2 * ns + q)] = b2[(r, q)];
                    b[(row0 + r, 3 * ns + q)] = rot * b2[(r, q)];
                }
            }
        }
        Ok(NoiseFactor { b })
    }

    /// Factors `(L, R)` with `D_q = 2 L Rᵀ`, `L = [B1↑ B2↑]`, `R = [B1↓ B2↓]`.
    pub fn diffusion_factors(&self, p: &PhaseSpacePoint) -> Result<(Mat<c64>, Mat<c64>)> {
        self.check(p)?;
        let ns = self.n_sites();
        let stack = |n: &Mat<c64>| {
            let (b1, b2) = self.noise_blocks(n.as_ref());
            Mat::from_fn(ns * ns, 2 * ns, |r, c| if c < ns { b1[(r, c)] } else { b2[(r, c - ns)] })
        };
        Ok((stack(&p.up), stack(&p.down)))
    }

    /// Off-diagonal block `D_q = 2 (B1↑ B1↓ᵀ + B2↑ B2↓ᵀ)`.
    pub fn diffusion_block(&self, p: &PhaseSpacePoint) -> Result<DiffusionBlock> {
        let (l, r) = self.diffusion_factors(p)?;
        let mut dq = &l * r.transpose();
        dq *= faer::Scale(c64::new(2.0, 0.0));
        Ok(DiffusionBlock { dq })
    }
}

pub fn drift(p: &PhaseSpacePoint, lattice: &LatticeSpec, params: &HubbardParams) -> Result<DriftValue> {
    HubbardModel::new(lattice, params)?.drift(p)
}

pub fn analytic_noise(p: &PhaseSpacePoint, params: &HubbardParams) -> Result<NoiseFactor> {
    model_for_point(p, params)?.analytic_noise(p)
}

pub fn diffusion_block(p: &PhaseSpacePoint, params: &HubbardParams) -> Result<DiffusionBlock> {
    model_for_point(p, params)?.diffusion_block(p)
}

// The noise terms do not depend on the tunneling matrix.
fn model_for_point(p: &PhaseSpacePoint, params: &HubbardParams) -> Result<HubbardModel> {
    params.validate()?;
    Ok(HubbardModel { tunneling: Mat::zeros(p.n_sites(), p.n_sites()), params: *params })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftValue {
    pub up: Mat<c64>,
    pub down: Mat<c64>,
}

impl DriftValue {
    pub fn spin(&self, s: Spin) -> &Mat<c64> {
        match s {
            Spin::Up => &self.up,
            Spin::Down => &self.down,
        }
    }
}

/// Noise matrix `B` with `B Bᵀ = D`; each column is one real Wiener channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFactor {
    pub b: Mat<c64>,
}

impl NoiseFactor {
    pub fn channels(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_sites(&self) -> usize {
        ((self.b.nrows() / 2) as f64).sqrt().round() as usize
    }

    /// `B dW` for real increments `dw`.
    pub fn apply(&self, dw: &[f64]) -> Vec<c64> {
        assert_eq!(dw.len(), self.b.ncols(), "one increment per noise channel");
        let mut out = vec![c64::new(0.0, 0.0); self.b.nrows()];
        for (k, &w) in dw.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let col = self.b.col(k);
            for (o, &x) in out.iter_mut().zip(col.iter()) {
                *o += x * w;
            }
        }
        out
    }

    pub fn gram(&self) -> Mat<c64> {
        &self.b * self.b.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionBlock {
    pub dq: Mat<c64>,
}

impl DiffusionBlock {
    pub fn n_sites(&self) -> usize {
        (self.dq.nrows() as f64).sqrt().round() as usize
    }

    pub fn zeros(n_sites: usize) -> Self {
        let nn = n_sites * n_sites;
        Self { dq: Mat::zeros(nn, nn) }
    }

    /// Full `2 n_s^2 x 2 n_s^2` diffusion matrix.
    pub fn assemble(&self) -> Mat<c64> {
        let nn = self.dq.nrows();
        Mat::from_fn(2 * nn, 2 * nn, |r, c| match (r < nn, c < nn) {
            (true, false) => self.dq[(r, c - nn)],
            (false, true) => self.dq[(c, r - nn)],
            _ => c64::new(0.0, 0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::linalg::{frobenius, numeric_rank};
    use crate::testutil::{random_point, rng};

    /// Entry of the diffusion matrix from the explicit index sum, used as an
    /// oracle independent of the matrix-product evaluation.
    fn diffusion_sum(p: &PhaseSpacePoint, u: f64, i: usize, j: usize, k: usize, l: usize) -> c64 {
        let ns = p.n_sites();
        let (a_up, a_dn) = (p.up(), p.down());
        let hole = |m: &Mat<c64>, a: usize, b: usize| {
            c64::new(if a == b { 1.0 } else { 0.0 }, 0.0) - m[(a, b)]
        };
        let mut acc = c64::new(0.0, 0.0);
        for a in 0..ns {
            acc += hole(a_up, a, j) * a_up[(i, a)] * hole(a_dn, a, l) * a_dn[(k, a)]
                - a_up[(a, j)] * hole(a_up, i, a) * a_dn[(a, l)] * hole(a_dn, k, a);
        }
        I * u * acc
    }

    #[test]
    fn drift_vanishes_for_multiple_of_identity() {
        let lat = build_lattice(&[4], 1.0).unwrap();
        let c = 0.37;
        let p = PhaseSpacePoint::from_diagonal(&[c; 4], &[c; 4]).unwrap();
        let a = drift(&p, &lat, &HubbardParams::default()).unwrap();
        assert_eq!(frobenius(a.up.as_ref()), 0.0);
        assert_eq!(frobenius(a.down.as_ref()), 0.0);
    }

    #[test]
    fn drift_two_site_hand_value() {
        let lat = build_lattice(&[2], 1.0).unwrap();
        let p = PhaseSpacePoint::from_diagonal(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let a = drift(&p, &lat, &HubbardParams::default()).unwrap();
        assert_eq!(a.up[(0, 1)], c64::new(0.0, -1.0));
        assert_eq!(a.up[(1, 0)], c64::new(0.0, 1.0));
        assert_eq!(a.up[(0, 0)], c64::new(0.0, 0.0));
        assert_eq!(a.up[(1, 1)], c64::new(0.0, 0.0));
    }

    #[test]
    fn drift_is_traceless() {
        let mut r = rng(3);
        let lat = build_lattice(&[2, 3], 1.0).unwrap();
        for _ in 0..5 {
            let p = random_point(6, &mut r);
            let a = drift(&p, &lat, &HubbardParams { j: 1.0, u: 1.7, hbar: 1.0 }).unwrap();
            for s in Spin::BOTH {
                let tr: c64 = (0..6).map(|i| a.spin(s)[(i, i)]).sum();
                assert!(tr.norm() < 1e-13, "trace {tr}");
            }
        }
    }

    #[test]
    fn drift_is_linear_without_interaction() {
        let mut r = rng(4);
        let lat = build_lattice(&[5], 1.0).unwrap();
        let par = HubbardParams { j: 1.0, u: 0.0, hbar: 0.8 };
        let p = random_point(5, &mut r);
        let base = drift(&p, &lat, &par).unwrap();
        let eps = c64::new(1e-3, 2e-3);
        let (k, l) = (1, 3);
        let mut q = p.clone();
        q.spin_mut(Spin::Up)[(k, l)] += eps;
        let moved = drift(&q, &lat, &par).unwrap();
        let jm = lat.tunneling();
        // (i/ħ)(J E - E J) with E = eps e_k e_lᵀ.
        for i in 0..5 {
            for j in 0..5 {
                let je = if j == l { jm[(i, k)] } else { 0.0 };
                let ej = if i == k { jm[(l, j)] } else { 0.0 };
                let expected = I / par.hbar * eps * (je - ej);
                let got = moved.up[(i, j)] - base.up[(i, j)];
                assert!((got - expected).norm() < 1e-13);
            }
        }
        assert_eq!(moved.down, base.down);
    }

    #[test]
    fn analytic_noise_vanishes_for_full_and_empty() {
        let par = HubbardParams::default();
        for occ in [1.0, 0.0] {
            let p = PhaseSpacePoint::from_diagonal(&[occ; 3], &[occ; 3]).unwrap();
            let b = analytic_noise(&p, &par).unwrap();
            assert_eq!(frobenius(b.b.as_ref()), 0.0);
            assert_eq!(frobenius(diffusion_block(&p, &par).unwrap().dq.as_ref()), 0.0);
        }
    }

    #[test]
    fn diffusion_vanishes_without_interaction() {
        let p = random_point(3, &mut rng(5));
        let dq = diffusion_block(&p, &HubbardParams { j: 1.0, u: 0.0, hbar: 1.0 }).unwrap();
        assert_eq!(frobenius(dq.dq.as_ref()), 0.0);
    }

    #[test]
    fn spin_wave_diffusion_has_block_structure() {
        let lat = build_lattice(&[4], 1.0).unwrap();
        let st = crate::lattice::spin_wave_occupation(&lat).unwrap();
        let p = PhaseSpacePoint::from_initial_state(&st).unwrap();
        let model = HubbardModel::new(&lat, &HubbardParams::default()).unwrap();
        let b0 = model.analytic_noise(&p).unwrap();
        assert_eq!(b0.b.nrows(), 32);
        assert_eq!(b0.b.ncols(), 16);
        let d = b0.gram();
        let dq = model.diffusion_block(&p).unwrap();
        let full = dq.assemble();
        for r in 0..32 {
            for c in 0..32 {
                if (r < 16) == (c < 16) {
                    assert!(d[(r, c)].norm() < 1e-15);
                }
                assert!((d[(r, c)] - full[(r, c)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn product_form_matches_index_sum() {
        let mut r = rng(6);
        let u = 1.3;
        for _ in 0..3 {
            let p = random_point(3, &mut r);
            let dq = diffusion_block(&p, &HubbardParams { j: 1.0, u, hbar: 1.0 }).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            let want = diffusion_sum(&p, u, i, j, k, l);
                            num += (dq.dq[(i * 3 + j, k * 3 + l)] - want).norm_sqr();
                            den += want.norm_sqr();
                        }
                    }
                }
            }
            assert!((num / den).sqrt() < 1e-12);
        }
    }

    #[test]
    fn analytic_gram_matches_assembled_diffusion() {
        let mut r = rng(7);
        for ns in [3, 4, 6, 8] {
            let p = random_point(ns, &mut r);
            let par = HubbardParams::default();
            let d = analytic_noise(&p, &par).unwrap().gram();
            let full = diffusion_block(&p, &par).unwrap().assemble();
            let diff = &d - &full;
            assert!(frobenius(diff.as_ref()) / frobenius(full.as_ref()) < 1e-10);
            // D is symmetric.
            let asym = &full - full.transpose();
            assert_eq!(frobenius(asym.as_ref()), 0.0);
        }
    }

    #[test]
    fn ranks_at_generic_points() {
        let mut r = rng(8);
        for ns in [3, 4, 6, 8] {
            let p = random_point(ns, &mut r);
            let par = HubbardParams::default();
            let b0 = analytic_noise(&p, &par).unwrap();
            let dq = diffusion_block(&p, &par).unwrap();
            assert_eq!(numeric_rank(b0.b.as_ref(), 1e-9), 4 * ns - 2, "B0, n_s={ns}");
            assert_eq!(numeric_rank(dq.assemble().as_ref(), 1e-9), 4 * ns - 4, "D, n_s={ns}");
            assert!(numeric_rank(dq.dq.as_ref(), 1e-9) <= 2 * ns);
        }
    }

    #[test]
    fn flatten_layout() {
        let p = random_point(3, &mut rng(9));
        let v = p.flatten();
        assert_eq!(v[flat_index(3, 1, 2, Spin::Up)], p.up()[(1, 2)]);
        assert_eq!(v[flat_index(3, 2, 0, Spin::Down)], p.down()[(2, 0)]);
        assert_eq!(PhaseSpacePoint::unflatten(3, &v).unwrap(), p);
    }

    #[test]
    fn noise_scale_branch() {
        let lat = build_lattice(&[2], 1.0).unwrap();
        let m = HubbardModel::new(&lat, &HubbardParams::default()).unwrap();
        let s = m.noise_scale();
        assert!((s.arg() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((s.norm_sqr() - 0.5).abs() < 1e-15);
    }
}
