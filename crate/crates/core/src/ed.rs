//! Exact diagonalization in the fixed particle-number Fock basis.
//!
//! Modes are ordered spin-up sites `0..n_s` first, then spin-down sites.
//! A basis ket is `c†_{m1} c†_{m2} ... |0>` with `m1 < m2 < ...`, so
//! `c†_a c_b` picks up `(-1)^(occupied modes strictly between a and b)`.
//! The Hamiltonian is
//!
//! ```text
//! H = -Σ_{ab,σ} J_ab c†_{aσ} c_{bσ} + U Σ_a n_{a↑} n_{a↓}
//! ```
//!
//! which is the sign convention under which the one-body Green's function
//! obeys `dn/dt = (i/ħ)[J, n]` at `U = 0`.

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{HubbardParams, InitialState, LatticeSpec, Spin};
use crate::linalg::expmi_hermitian;
use crate::phase_space::PhaseSpacePoint;

/// Default cap on the basis dimension.
pub const DEFAULT_DIM_LIMIT: usize = 1_000_000;

pub const KRYLOV_DIM: usize = 30;
pub const KRYLOV_TOL: f64 = 1e-12;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Basis dimension without enumerating it.
pub fn basis_dimension(n_sites: usize, n_up: usize, n_down: usize) -> u128 {
    binomial(n_sites, n_up) * binomial(n_sites, n_down)
}

fn combinations(n: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    if k == 0 {
        return vec![0];
    }
    // Gosper's hack enumerates k-bit words in increasing order.
    let mut x: u64 = (1u64 << k) - 1;
    let limit = 1u64 << n;
    while x < limit {
        out.push(x);
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    n_sites: usize,
    n_up: usize,
    n_down: usize,
    up: Vec<u64>,
    down: Vec<u64>,
}

impl FockBasis {
    pub fn new(n_sites: usize, n_up: usize, n_down: usize, dim_limit: usize) -> Result<Self> {
        if n_sites == 0 || n_sites > 63 {
            return Err(Error::InvalidLattice(format!("ED supports 1..=63 sites, got {n_sites}")));
        }
        if n_up > n_sites || n_down > n_sites {
            return Err(Error::InvalidInitialState(format!(
                "{n_up} up / {n_down} down particles do not fit on {n_sites} sites"
            )));
        }
        let dim = basis_dimension(n_sites, n_up, n_down);
        if dim > dim_limit as u128 {
            return Err(Error::BasisTooLarge { dim, limit: dim_limit });
        }
        Ok(Self { n_sites, n_up, n_down, up: combinations(n_sites, n_up), down: combinations(n_sites, n_down) })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn particles(&self) -> (usize, usize) {
        (self.n_up, self.n_down)
    }

    pub fn dim(&self) -> usize {
        self.up.len() * self.down.len()
    }

    /// Occupation bitstrings `(up, down)` of basis state `k`.
    pub fn state(&self, k: usize) -> (u64, u64) {
        (self.up[k / self.down.len()], self.down[k % self.down.len()])
    }

    pub fn index(&self, up: u64, down: u64) -> Option<usize> {
        let iu = self.up.binary_search(&up).ok()?;
        let id = self.down.binary_search(&down).ok()?;
        Some(iu * self.down.len() + id)
    }

    fn bits(&self, k: usize, s: Spin) -> u64 {
        let (u, d) = self.state(k);
        match s {
            Spin::Up => u,
            Spin::Down => d,
        }
    }

    fn with_bits(&self, k: usize, s: Spin, bits: u64) -> Option<usize> {
        let (u, d) = self.state(k);
        match s {
            Spin::Up => self.index(bits, d),
            Spin::Down => self.index(u, bits),
        }
    }
}

/// `c†_a c_b` on a single-spin bitstring: the new bitstring and its sign.
fn hop(bits: u64, a: usize, b: usize) -> Option<(u64, f64)> {
    if bits >> b & 1 == 0 {
        return None;
    }
    if a == b {
        return Some((bits, 1.0));
    }
    if bits >> a & 1 == 1 {
        return None;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let between = bits & ((1u64 << hi) - 1) & !((1u64 << (lo + 1)) - 1);
    let sign = if between.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some((bits ^ (1 << b) ^ (1 << a), sign))
}

/// Hermitian Hamiltonian in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![c64::new(0.0, 0.0); self.dim];
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = c64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.cols[k]] * self.vals[k];
            }
            *out = acc;
        }
        y
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] += self.vals[k];
            }
        }
        m
    }

    pub fn expectation(&self, psi: &[c64]) -> f64 {
        inner(psi, &self.apply(psi)).re
    }
}

pub fn build_hamiltonian(basis: &FockBasis, lat: &LatticeSpec, par: &HubbardParams) -> Result<SparseHamiltonian> {
    par.validate()?;
    if lat.n_sites() != basis.n_sites() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} sites", basis.n_sites()),
            found: format!("{} sites", lat.n_sites()),
        });
    }
    let j = lat.tunneling();
    let ns = basis.n_sites();
    let dim = basis.dim();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::new();
    for k in 0..dim {
        row.clear();
        let (u, d) = basis.state(k);
        let double = (u & d).count_ones() as f64;
        if par.u != 0.0 && double > 0.0 {
            row.push((k, par.u * double));
        }
        for s in Spin::BOTH {
            let bits = basis.bits(k, s);
            for a in 0..ns {
                for b in 0..ns {
                    let amp = j[(a, b)];
                    if amp == 0.0 || a == b {
                        continue;
                    }
                    // <k| c†_a c_b |m> with m = the state c†_b c_a maps k to.
                    if let Some((m_bits, sign)) = hop(bits, b, a) {
                        let m = basis.with_bits(k, s, m_bits).expect("particle number conserved");
                        row.push((m, -amp * sign));
                    }
                }
            }
        }
        row.sort_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for &(c, v) in row.iter() {
            if last == Some(c) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                last = Some(c);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseHamiltonian { dim, row_ptr, cols, vals })
}

fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdState {
    pub amplitudes: Vec<c64>,
}

impl EdState {
    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }
}

/// Basis for the particle numbers of `state` on `lat`, honouring `dim_limit`.
pub fn basis_for(state: &InitialState, lat: &LatticeSpec, dim_limit: usize) -> Result<FockBasis> {
    state.validate_for(lat)?;
    let (nu, nd) = match state {
        InitialState::Bell(_) => (1, 1),
        other => {
            let (u, d) = other.diagonal().expect("diagonal state");
            let count = |v: &[f64]| -> Result<usize> {
                if v.iter().any(|&x| x != 0.0 && x != 1.0) {
                    return Err(Error::InvalidInitialState("ED needs 0/1 occupations".into()));
                }
                Ok(v.iter().filter(|&&x| x == 1.0).count())
            };
            (count(u)?, count(d)?)
        }
    };
    FockBasis::new(lat.n_sites(), nu, nd, dim_limit)
}

pub fn initial_ed_state(state: &InitialState, basis: &FockBasis) -> Result<EdState> {
    let mut amps = vec![c64::new(0.0, 0.0); basis.dim()];
    match state {
        InitialState::Bell(b) => {
            if basis.n_sites() != 2 {
                return Err(Error::InvalidInitialState("Bell state needs two sites".into()));
            }
            let first = basis.index(0b01, 0b01).ok_or_else(|| Error::InvalidInitialState("basis lacks |↑↓,0>".into()))?;
            let second = basis.index(0b10, 0b10).ok_or_else(|| Error::InvalidInitialState("basis lacks |0,↑↓>".into()))?;
            amps[first] = b.alpha;
            amps[second] = b.beta;
        }
        other => {
            let (u, d) = other.diagonal().expect("diagonal state");
            let word = |v: &[f64]| v.iter().enumerate().filter(|(_, &x)| x == 1.0).fold(0u64, |w, (i, _)| w | 1 << i);
            let k = basis
                .index(word(u), word(d))
                .ok_or_else(|| Error::InvalidInitialState("occupations outside the basis sector".into()))?;
            amps[k] = c64::new(1.0, 0.0);
        }
    }
    Ok(EdState { amplitudes: amps })
}

/// Slater determinant `Π_k (Σ_i Φ↑_ik c†_i↑) Π_k (Σ_i Φ↓_ik c†_i↓) |0>`.
pub fn slater_state(basis: &FockBasis, orb_up: MatRef<'_, c64>, orb_down: MatRef<'_, c64>) -> EdState {
    let det_of = |orb: MatRef<'_, c64>, bits: u64| -> c64 {
        let rows: Vec<usize> = (0..basis.n_sites()).filter(|&i| bits >> i & 1 == 1).collect();
        let k = rows.len();
        if k == 0 {
            return c64::new(1.0, 0.0);
        }
        let sub = Mat::from_fn(k, k, |a, b| orb[(rows[a], b)]);
        sub.determinant()
    };
    let amplitudes = (0..basis.dim())
        .map(|k| {
            let (u, d) = basis.state(k);
            det_of(orb_up, u) * det_of(orb_down, d)
        })
        .collect();
    EdState { amplitudes }
}

/// `c†_a c_b` on spin `s`.
pub fn apply_hopping(basis: &FockBasis, s: Spin, a: usize, b: usize, psi: &[c64]) -> Vec<c64> {
    let mut out = vec![c64::new(0.0, 0.0); basis.dim()];
    for (k, &amp) in psi.iter().enumerate() {
        if amp == c64::new(0.0, 0.0) {
            continue;
        }
        if let Some((bits, sign)) = hop(basis.bits(k, s), a, b) {
            let m = basis.with_bits(k, s, bits).expect("particle number conserved");
            out[m] += amp * sign;
        }
    }
    out
}

/// One-body Green's functions `n_ij = <c†_j c_i>` for both spins.
pub fn green_function(basis: &FockBasis, psi: &EdState) -> PhaseSpacePoint {
    let ns = basis.n_sites();
    let g = |s: Spin| {
        Mat::from_fn(ns, ns, |i, j| inner(&psi.amplitudes, &apply_hopping(basis, s, j, i, &psi.amplitudes)))
    };
    PhaseSpacePoint::new(g(Spin::Up), g(Spin::Down)).expect("square blocks")
}

/// Exact site occupations and diagonal pair densities.
#[derive(Debug, Clone, PartialEq)]
pub struct EdObservables {
    /// `occupation[σ][i] = <n_iσ>`
    pub occupation: [Vec<f64>; 2],
    /// `pair[(σ, i), (σ', k)] = <:n_iσ n_kσ':>` over `2 n_s` modes.
    pub pair: Mat<f64>,
}

impl EdObservables {
    pub fn occupation(&self, i: usize, s: Spin) -> f64 {
        self.occupation[s.index()][i]
    }

    pub fn normal_ordered(&self, a: (usize, Spin), b: (usize, Spin)) -> f64 {
        let ns = self.occupation[0].len();
        self.pair[(a.1.index() * ns + a.0, b.1.index() * ns + b.0)]
    }

    /// `<:n_a n_b:> / (<n_a><n_b>)`
    pub fn g2(&self, a: (usize, Spin), b: (usize, Spin)) -> f64 {
        self.normal_ordered(a, b) / (self.occupation(a.0, a.1) * self.occupation(b.0, b.1))
    }
}

pub fn ed_observables(psi: &EdState, basis: &FockBasis) -> EdObservables {
    let ns = basis.n_sites();
    let mut occ = [vec![0.0; ns], vec![0.0; ns]];
    let mut pair = Mat::<f64>::zeros(2 * ns, 2 * ns);
    let mut modes = Vec::with_capacity(2 * ns);
    for (k, amp) in psi.amplitudes.iter().enumerate() {
        let w = amp.norm_sqr();
        if w == 0.0 {
            continue;
        }
        let (u, d) = basis.state(k);
        modes.clear();
        modes.extend((0..ns).filter(|&i| u >> i & 1 == 1));
        modes.extend((0..ns).filter(|&i| d >> i & 1 == 1).map(|i| ns + i));
        for &a in &modes {
            occ[a / ns][a % ns] += w;
            for &b in &modes {
                if a != b {
                    pair[(a, b)] += w;
                }
            }
        }
    }
    EdObservables { occupation: occ, pair }
}

/// `exp(-iH dt/ħ) ψ` through a Lanczos basis of dimension at most `m`,
/// substepping until the a-posteriori error estimate is below `tol`.
pub fn ed_step(psi: &EdState, h: &SparseHamiltonian, dt: f64, hbar: f64) -> Result<EdState> {
    krylov_step(psi, h, dt / hbar, KRYLOV_DIM, KRYLOV_TOL)
}

pub fn krylov_step(psi: &EdState, h: &SparseHamiltonian, tau: f64, m: usize, tol: f64) -> Result<EdState> {
    let mut state = psi.amplitudes.clone();
    let mut remaining = tau;
    let mut sub = tau;
    let mut halvings = 0;
    while remaining.abs() > 0.0 {
        let try_t = if sub.abs() > remaining.abs() { remaining } else { sub };
        match lanczos_exp(&state, h, try_t, m, tol) {
            Some(next) => {
                state = next;
                remaining -= try_t;
            }
            None => {
                halvings += 1;
                if halvings > 40 {
                    return Err(Error::KrylovFailure(format!("no convergence for step {tau}")));
                }
                sub *= 0.5;
            }
        }
    }
    Ok(EdState { amplitudes: state })
}

/// Returns `None` when the error estimate exceeds `tol`.
fn lanczos_exp(psi: &[c64], h: &SparseHamiltonian, t: f64, m: usize, tol: f64) -> Option<Vec<c64>> {
    let beta0 = norm(psi);
    if beta0 == 0.0 || t == 0.0 {
        return Some(psi.to_vec());
    }
    let m = m.min(h.dim()).max(1);
    let mut v: Vec<Vec<c64>> = vec![psi.iter().map(|x| x / beta0).collect()];
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    let mut next_beta = 0.0;
    for j in 0..m {
        let mut w = h.apply(&v[j]);
        let a = inner(&v[j], &w).re;
        alpha.push(a);
        for (k, x) in w.iter_mut().enumerate() {
            *x -= v[j][k] * a;
            if j > 0 {
                *x -= v[j - 1][k] * beta[j - 1];
            }
        }
        // Full reorthogonalization keeps the small basis orthonormal.
        for vk in &v {
            let c = inner(vk, &w);
            for (x, y) in w.iter_mut().zip(vk) {
                *x -= c * y;
            }
        }
        let b = norm(&w);
        if j + 1 == m || b < 1e-14 * (1.0 + a.abs()) {
            next_beta = if j + 1 == m { b } else { 0.0 };
            break;
        }
        beta.push(b);
        v.push(w.iter().map(|x| x / b).collect());
    }
    let k = alpha.len();
    let t_mat = Mat::from_fn(k, k, |i, j| {
        if i == j {
            c64::new(alpha[i], 0.0)
        } else if i + 1 == j || j + 1 == i {
            c64::new(beta[i.min(j)], 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let e = expmi_hermitian(t_mat.as_ref(), t);
    let err = next_beta * e[(k - 1, 0)].norm() * beta0;
    if err > tol {
        return None;
    }
    let mut out = vec![c64::new(0.0, 0.0); psi.len()];
    for (j, vj) in v.iter().enumerate().take(k) {
        let c = e[(j, 0)] * beta0;
        for (o, x) in out.iter_mut().zip(vj) {
            *o += c * x;
        }
    }
    Some(out)
}

/// Dense propagator `exp(-iH t/ħ)`, for small bases.
pub fn dense_propagator(h: &SparseHamiltonian, t: f64, hbar: f64) -> Mat<c64> {
    let dense = crate::linalg::to_complex(h.to_dense().as_ref());
    expmi_hermitian(dense.as_ref(), t / hbar)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdSample {
    pub time: f64,
    pub norm: f64,
    pub energy: f64,
}

/// States and bookkeeping along an ED evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EdEvolution {
    pub basis: FockBasis,
    pub times: Vec<f64>,
    pub observables: Vec<EdObservables>,
    pub diagnostics: Vec<EdSample>,
}

/// Evolves with steps of `dt` and records every `stride` steps.
pub fn ed_evolve(
    state: &InitialState,
    lat: &LatticeSpec,
    par: &HubbardParams,
    dt: f64,
    n_steps: usize,
    stride: usize,
    dim_limit: usize,
) -> Result<EdEvolution> {
    let basis = basis_for(state, lat, dim_limit)?;
    let h = build_hamiltonian(&basis, lat, par)?;
    let mut psi = initial_ed_state(state, &basis)?;
    let stride = stride.max(1);
    let mut out = EdEvolution { basis, times: Vec::new(), observables: Vec::new(), diagnostics: Vec::new() };
    for step in 0..=n_steps {
        if step > 0 {
            psi = ed_step(&psi, &h, dt, par.hbar)?;
        }
        if step % stride == 0 {
            let t = step as f64 * dt;
            out.times.push(t);
            out.observables.push(ed_observables(&psi, &out.basis));
            out.diagnostics.push(EdSample { time: t, norm: psi.norm(), energy: h.expectation(&psi.amplitudes) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, spin_wave_occupation, validate_bell};
    use crate::phase_space::HubbardModel;
    use crate::testutil::rng;

    #[test]
    fn gosper_enumeration() {
        let c = combinations(4, 2);
        assert_eq!(c, vec![0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        assert_eq!(combinations(3, 0), vec![0]);
        assert_eq!(combinations(8, 4).len(), 70);
    }

    #[test]
    fn dimensions() {
        assert_eq!(basis_dimension(8, 4, 4), 4900);
        let b = FockBasis::new(8, 4, 4, DEFAULT_DIM_LIMIT).unwrap();
        assert_eq!(b.dim(), 4900);
        assert!(matches!(FockBasis::new(36, 18, 18, DEFAULT_DIM_LIMIT), Err(Error::BasisTooLarge { .. })));
        assert_eq!(FockBasis::new(2, 2, 0, 10).unwrap().dim(), 1);
    }

    #[test]
    fn hop_signs() {
        // c†_2 c_0 on |0,1,2 occupied> crosses mode 1.
        assert_eq!(hop(0b011, 2, 0), Some((0b110, -1.0)));
        assert_eq!(hop(0b001, 2, 0), Some((0b100, 1.0)));
        assert_eq!(hop(0b101, 2, 0), None);
        assert_eq!(hop(0b100, 2, 0), None);
    }

    #[test]
    fn two_site_spectrum() {
        let lat = build_lattice(&[2], 1.0).unwrap();
        let b = FockBasis::new(2, 1, 1, 100).unwrap();
        let h = build_hamiltonian(&b, &lat, &HubbardParams { j: 1.0, u: 0.0, hbar: 1.0 }).unwrap();
        let d = h.to_dense();
        let asym = Mat::from_fn(4, 4, |i, j| d[(i, j)] - d[(j, i)]);
        assert_eq!(asym.norm_l2(), 0.0);
        let mut ev: Vec<f64> = d.self_adjoint_eigen(faer::Side::Lower).unwrap().S().column_vector().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (got, want) in ev.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn pauli_blocked_sector() {
        let lat = build_lattice(&[2], 1.0).unwrap();
        let b = FockBasis::new(2, 2, 0, 100).unwrap();
        let h = build_hamiltonian(&b, &lat, &HubbardParams::default()).unwrap();
        assert_eq!(h.nnz(), 0);
    }

    #[test]
    fn zero_step_is_identity() {
        let lat = build_lattice(&[4], 1.0).unwrap();
        let st = spin_wave_occupation(&lat).unwrap();
        let b = basis_for(&st, &lat, 1000).unwrap();
        let h = build_hamiltonian(&b, &lat, &HubbardParams::default()).unwrap();
        let psi = initial_ed_state(&st, &b).unwrap();
        assert_eq!(ed_step(&psi, &h, 0.0, 1.0).unwrap(), psi);
    }

    #[test]
    fn eigenvector_only_rotates() {
        let lat = build_lattice(&[3], 1.0).unwrap();
        let b = FockBasis::new(3, 2, 1, 1000).unwrap();
        let h = build_hamiltonian(&b, &lat, &HubbardParams::default()).unwrap();
        let evd = h.to_dense().self_adjoint_eigen(faer::Side::Lower).unwrap();
        let e0 = evd.S().column_vector()[0];
        let psi = EdState { amplitudes: (0..b.dim()).map(|k| c64::new(evd.U()[(k, 0)], 0.0)).collect() };
        let out = ed_step(&psi, &h, 0.7, 1.0).unwrap();
        let phase = c64::from_polar(1.0, -e0 * 0.7);
        for (a, b) in out.amplitudes.iter().zip(&psi.amplitudes) {
            assert!((a - b * phase).norm() < 1e-10);
        }
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        for (dims, nu, nd) in [(vec![2], 1, 1), (vec![4], 2, 2), (vec![2, 3], 2, 1)] {
            let lat = build_lattice(&dims, 1.0).unwrap();
            let ns = lat.n_sites();
            let b = FockBasis::new(ns, nu, nd, 1000).unwrap();
            assert!(b.dim() <= 200);
            let par = HubbardParams { j: 1.0, u: 1.3, hbar: 1.0 };
            let h = build_hamiltonian(&b, &lat, &par).unwrap();
            let mut r = rng(3);
            let v = crate::testutil::random_complex_matrix(b.dim(), 1, &mut r);
            let nrm = v.norm_l2();
            let psi = EdState { amplitudes: (0..b.dim()).map(|k| v[(k, 0)] / nrm).collect() };
            let t = 0.9;
            let exact = dense_propagator(&h, t, par.hbar);
            let kry = ed_step(&psi, &h, t, par.hbar).unwrap();
            for k in 0..b.dim() {
                let want: c64 = (0..b.dim()).map(|m| exact[(k, m)] * psi.amplitudes[m]).sum();
                assert!((kry.amplitudes[k] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn bell_state_initial_observables() {
        let lat = build_lattice(&[2], 1.0).unwrap();
        let a = 0.5f64.sqrt();
        let st = InitialState::Bell(validate_bell(c64::new(a, 0.0), c64::new(0.0, a)).unwrap());
        let b = basis_for(&st, &lat, 100).unwrap();
        let psi = initial_ed_state(&st, &b).unwrap();
        let obs = ed_observables(&psi, &b);
        assert!((obs.normal_ordered((0, Spin::Up), (0, Spin::Down)) - 0.5).abs() < 1e-15);
        assert!((obs.g2((0, Spin::Up), (0, Spin::Down)) - 2.0).abs() < 1e-14);
        assert!((obs.occupation(0, Spin::Up) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn evolution_conserves_norm_energy_and_number() {
        let lat = build_lattice(&[6], 1.0).unwrap();
        let st = spin_wave_occupation(&lat).unwrap();
        let ev = ed_evolve(&st, &lat, &HubbardParams::default(), 0.05, 60, 5, 100_000).unwrap();
        let first = &ev.diagnostics[0];
        assert_eq!(ev.observables[0].occupation[0], vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        for (d, o) in ev.diagnostics.iter().zip(&ev.observables) {
            assert!((d.norm - 1.0).abs() < 1e-10);
            assert!((d.energy - first.energy).abs() < 1e-9);
            for s in 0..2 {
                assert!((o.occupation[s].iter().sum::<f64>() - 3.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn slater_green_function() {
        let lat = build_lattice(&[3], 1.0).unwrap();
        let b = FockBasis::new(3, 2, 1, 100).unwrap();
        let _ = lat;
        let mut r = rng(8);
        let orth = |m: usize, k: usize, r: &mut rand_chacha::ChaCha8Rng| {
            crate::testutil::random_complex_matrix(m, k, r).qr().compute_thin_Q()
        };
        let (pu, pd) = (orth(3, 2, &mut r), orth(3, 1, &mut r));
        let psi = slater_state(&b, pu.as_ref(), pd.as_ref());
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let g = green_function(&b, &psi);
        let want = &pu * pu.adjoint();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.up()[(i, j)] - want[(i, j)]).norm() < 1e-12);
            }
        }
    }

    fn random_slater(b: &FockBasis, seed: u64) -> EdState {
        let (nu, nd) = b.particles();
        let mut r = rng(seed);
        let mut orth = |k: usize| crate::testutil::random_complex_matrix(b.n_sites(), k, &mut r).qr().compute_thin_Q();
        let (pu, pd) = (orth(nu), orth(nd));
        slater_state(b, pu.as_ref(), pd.as_ref())
    }

    fn time_derivative(h: &SparseHamiltonian, psi: &[c64], o_psi: &[c64], o_h_psi: &[c64], hbar: f64) -> c64 {
        let h_psi = h.apply(psi);
        (inner(&h_psi, o_psi) - inner(psi, o_h_psi)) * c64::new(0.0, 1.0 / hbar)
    }

    #[test]
    fn drift_matches_exact_slater_evolution() {
        let lat = build_lattice(&[2, 2], 1.0).unwrap();
        let par = HubbardParams { j: 1.0, u: 1.7, hbar: 1.3 };
        let b = FockBasis::new(4, 2, 1, 1000).unwrap();
        let h = build_hamiltonian(&b, &lat, &par).unwrap();
        let psi = random_slater(&b, 21);
        let p = green_function(&b, &psi);
        let a = HubbardModel::new(&lat, &par).unwrap().drift(&p).unwrap();
        let h_psi = h.apply(&psi.amplitudes);
        for s in Spin::BOTH {
            for i in 0..4 {
                for j in 0..4 {
                    let o = apply_hopping(&b, s, j, i, &psi.amplitudes);
                    let oh = apply_hopping(&b, s, j, i, &h_psi);
                    let want = time_derivative(&h, &psi.amplitudes, &o, &oh, par.hbar);
                    assert!((a.spin(s)[(i, j)] - want).norm() < 1e-11, "{s:?} {i}{j}");
                }
            }
        }
    }

    #[test]
    fn diffusion_matches_exact_slater_correlations() {
        let ns = 3;
        let lat = build_lattice(&[ns], 1.0).unwrap();
        let par = HubbardParams { j: 1.0, u: 0.9, hbar: 1.0 };
        let b = FockBasis::new(ns, 2, 2, 1000).unwrap();
        let h = build_hamiltonian(&b, &lat, &par).unwrap();
        let psi = random_slater(&b, 4);
        let p = green_function(&b, &psi);
        let model = HubbardModel::new(&lat, &par).unwrap();
        let a = model.drift(&p).unwrap();
        let dq = model.diffusion_block(&p).unwrap().dq;
        let h_psi = h.apply(&psi.amplitudes);
        let pair = |i: usize, j: usize, k: usize, l: usize, v: &[c64]| {
            apply_hopping(&b, Spin::Up, j, i, &apply_hopping(&b, Spin::Down, l, k, v))
        };
        let mut worst: f64 = 0.0;
        for i in 0..ns {
            for j in 0..ns {
                for k in 0..ns {
                    for l in 0..ns {
                        let o = pair(i, j, k, l, &psi.amplitudes);
                        let oh = pair(i, j, k, l, &h_psi);
                        let d4 = time_derivative(&h, &psi.amplitudes, &o, &oh, par.hbar);
                        let want = d4 - a.up[(i, j)] * p.down()[(k, l)] - p.up()[(i, j)] * a.down[(k, l)];
                        worst = worst.max((dq[(i * ns + j, k * ns + l)] - want).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-11, "{worst}");
    }
}
