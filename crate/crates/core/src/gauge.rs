//! Numerical diffusion gauges.
//!
//! All gauges factor the off-diagonal diffusion block through
//! `D_q2 = -(i/2) D_q = U S V*` and assemble
//!
//! ```text
//! B = [ U√S    iU√S ]
//!     [ iV̄√S   V̄√S  ]
//! ```
//!
//! which satisfies `B Bᵀ = D` whenever `U S V*` reproduces `D_q2`. The
//! methods differ only in how the singular triplets are obtained: a full
//! SVD, a deterministic Golub-Kahan-Lanczos truncated SVD, or a randomized
//! range finder followed by a small SVD.

use std::time::Instant;

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, numeric_rank, pivoted_cholesky, upper_triangular_inverse};
use crate::phase_space::{DiffusionBlock, HubbardModel, NoiseFactor, PhaseSpacePoint};

const I: c64 = c64 { re: 0.0, im: 1.0 };
const MINUS_HALF_I: c64 = c64 { re: 0.0, im: -0.5 };

/// Relative threshold for counting singular values as nonzero.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GaugeMethod {
    Analytic,
    ClassicalSvd,
    /// Deterministic truncated SVD; `rank` defaults to `2 n_s`.
    LowRankSvd { rank: Option<usize> },
    RandomizedSvd {
        rank: Option<usize>,
        #[serde(default)]
        oversample: usize,
        #[serde(default)]
        power_iters: usize,
        /// Sketch the explicit `n_s^2 x n_s^2` block instead of its
        /// compressed form. Same algorithm, `O(n_s^4)` per step.
        #[serde(default)]
        explicit: bool,
    },
}

impl GaugeMethod {
    pub fn randomized() -> Self {
        GaugeMethod::RandomizedSvd { rank: None, oversample: 0, power_iters: 0, explicit: false }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GaugeMethod::Analytic => "analytic",
            GaugeMethod::ClassicalSvd => "svd",
            GaugeMethod::LowRankSvd { .. } => "lowrank",
            GaugeMethod::RandomizedSvd { .. } => "rsvd",
        }
    }

    /// Number of Wiener channels the gauge produces on `n_sites` sites.
    pub fn channels(&self, n_sites: usize) -> usize {
        let full = default_rank(n_sites);
        match *self {
            GaugeMethod::Analytic | GaugeMethod::ClassicalSvd => 2 * full,
            GaugeMethod::LowRankSvd { rank } | GaugeMethod::RandomizedSvd { rank, .. } => {
                2 * rank.unwrap_or(full)
            }
        }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        match *self {
            GaugeMethod::LowRankSvd { rank: Some(r) } | GaugeMethod::RandomizedSvd { rank: Some(r), .. } => {
                check_rank(r, n_sites * n_sites)
            }
            _ => Ok(()),
        }
    }

    /// Noise matrix at `p`. The randomized gauge draws its test matrix from
    /// `rng`; the other gauges leave it untouched.
    pub fn noise<R: Rng + ?Sized>(
        &self,
        model: &HubbardModel,
        p: &PhaseSpacePoint,
        rng: &mut R,
    ) -> Result<NoiseFactor> {
        match self.operator(model, p, rng)? {
            NoiseOperator::Analytic(a) => model.analytic_noise(&a.point),
            NoiseOperator::Spectral(sp) => Ok(sp.to_factor()),
            NoiseOperator::Compressed(c) => Ok(c.to_factor()),
        }
    }

    /// Like [`GaugeMethod::noise`] but keeps the factor in a form that
    /// applies to a Wiener increment in `O(n_s^3)`.
    pub fn operator<R: Rng + ?Sized>(
        &self,
        model: &HubbardModel,
        p: &PhaseSpacePoint,
        rng: &mut R,
    ) -> Result<NoiseOperator> {
        let ns = model.n_sites();
        Ok(match *self {
            GaugeMethod::Analytic => NoiseOperator::Analytic(AnalyticNoise {
                point: p.clone(),
                scale: model.noise_scale(),
            }),
            GaugeMethod::ClassicalSvd => NoiseOperator::Spectral(classical_spectral(&model.diffusion_block(p)?)?),
            GaugeMethod::LowRankSvd { rank } => {
                let op = DenseDiffusion::new(&model.diffusion_block(p)?);
                NoiseOperator::Spectral(lowrank_from_operator(&op, rank.unwrap_or(default_rank(ns)))?)
            }
            GaugeMethod::RandomizedSvd { rank, oversample, power_iters, explicit } => {
                let rank = rank.unwrap_or(default_rank(ns));
                let opts = RsvdOptions { oversample, power_iters };
                if explicit {
                    let (l, r) = model.diffusion_factors(p)?;
                    let op = FactoredDiffusion { left: l, right: r };
                    NoiseOperator::Spectral(randomized_from_operator(&op, rank, opts, rng)?)
                } else {
                    NoiseOperator::Compressed(randomized_compressed(p, model.noise_scale(), rank, opts, rng)?)
                }
            }
        })
    }
}

/// Noise matrix in a form suited to repeated `B dW` products.
#[derive(Debug, Clone)]
pub enum NoiseOperator {
    Analytic(AnalyticNoise),
    Spectral(SpectralNoise),
    Compressed(CompressedNoise),
}

impl NoiseOperator {
    pub fn channels(&self) -> usize {
        match self {
            NoiseOperator::Analytic(a) => 4 * a.point.n_sites(),
            NoiseOperator::Spectral(s) => 2 * s.rank(),
            NoiseOperator::Compressed(c) => 2 * c.rank(),
        }
    }

    /// `B dW` reshaped to one matrix per spin.
    pub fn apply(&self, dw: &[f64]) -> (Mat<c64>, Mat<c64>) {
        assert_eq!(dw.len(), self.channels(), "one increment per noise channel");
        match self {
            NoiseOperator::Analytic(a) => a.apply(dw),
            NoiseOperator::Spectral(s) => s.apply(dw),
            NoiseOperator::Compressed(c) => c.apply(dw),
        }
    }
}

/// `B0 dW` evaluated as `s (n diag(x) ñ) + i s (ñ diag(y) n)` per spin.
#[derive(Debug, Clone)]
pub struct AnalyticNoise {
    pub point: PhaseSpacePoint,
    pub scale: c64,
}

impl AnalyticNoise {
    fn apply(&self, dw: &[f64]) -> (Mat<c64>, Mat<c64>) {
        let ns = self.point.n_sites();
        let one = |n: &Mat<c64>, sign: f64| {
            let rot = I * sign;
            let w: Vec<c64> = (0..2 * ns)
                .map(|q| {
                    let (blk, p) = (q / ns, q % ns);
                    dw[2 * blk * ns + p] + rot * dw[(2 * blk + 1) * ns + p]
                })
                .collect();
            factor_apply(n, self.scale, &w)
        };
        (one(self.point.up(), 1.0), one(self.point.down(), -1.0))
    }
}

fn hole(n: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(n.nrows(), n.ncols(), |a, b| {
        let id = if a == b { 1.0 } else { 0.0 };
        c64::new(id, 0.0) - n[(a, b)]
    })
}

/// `L w` for `L = [B1 B2]` of one spin, reshaped to `n_s x n_s`:
/// `s (n diag(w1) ñ) + i s (ñ diag(w2) n)`.
fn factor_apply(n: &Mat<c64>, scale: c64, w: &[c64]) -> Mat<c64> {
    let ns = n.nrows();
    let h = hole(n);
    let nw = Mat::from_fn(ns, ns, |i, p| n[(i, p)] * w[p]);
    let hw = Mat::from_fn(ns, ns, |i, p| h[(i, p)] * (I * w[ns + p]));
    let mut out = &nw * &h + &hw * n;
    out *= faer::Scale(scale);
    out
}

/// Gram matrix `L* L` of `L = [B1 B2]`. Columns of `L` are outer products,
/// so each entry factors into two `n_s x n_s` inner products.
fn factor_gram(n: &Mat<c64>, scale: c64) -> Mat<c64> {
    let ns = n.nrows();
    let h = hole(n);
    // Column p of B1 is s n[:, p] ⊗ ñ[p, :], of B2 is i s ñ[:, p] ⊗ n[p, :].
    let xs = [n, &h];
    let ys = [h.transpose().to_owned(), n.transpose().to_owned()];
    let coef = [scale, I * scale];
    let mut g = Mat::zeros(2 * ns, 2 * ns);
    for a in 0..2 {
        for b in 0..2 {
            let xx = xs[a].adjoint() * xs[b];
            let yy = ys[a].adjoint() * &ys[b];
            let c = coef[a].conj() * coef[b];
            for p in 0..ns {
                for q in 0..ns {
                    g[(a * ns + p, b * ns + q)] = c * xx[(p, q)] * yy[(p, q)];
                }
            }
        }
    }
    g
}

/// Eigenvalues of a Gram matrix below this fraction of the largest are
/// treated as zero.
const GRAM_TOL: f64 = 1e-13;

/// Orthonormal coordinates for the range of `L` from its Gram matrix:
/// `L = Φ T` with `Φ = L X`. Returns `(X, T)`.
fn range_coordinates(gram: &Mat<c64>) -> Result<(Mat<c64>, Mat<c64>)> {
    let m = gram.nrows();
    if !is_finite(gram) {
        return Err(Error::GaugeFailure("non-finite Gram matrix".into()));
    }
    let (perm, c) = pivoted_cholesky(gram.as_ref(), GRAM_TOL);
    let k = c.ncols();
    let mut t = Mat::zeros(k, m);
    for i in 0..m {
        for a in 0..k {
            t[(a, perm[i])] = c[(i, a)].conj();
        }
    }
    let lead = c.subrows(0, k).adjoint().to_owned();
    let inv = upper_triangular_inverse(lead.as_ref());
    let mut x = Mat::zeros(m, k);
    for i in 0..k {
        for a in 0..k {
            x[(perm[i], a)] = inv[(i, a)];
        }
    }
    Ok((x, t))
}

/// Randomized SVD of `D_q2 = -i L Rᵀ` run in orthonormal coordinates of
/// `range(L)` and `range(R)`, where `D_q2 = Φ K Ψᵀ` with a small core
/// `K`. For a Gaussian `Z`, `Ψᵀ Z` is again standard Gaussian, so sketching
/// `K` is the same algorithm as sketching `D_q2`; nothing of size `n_s^2`
/// is ever formed.
pub fn randomized_compressed<R: Rng + ?Sized>(
    p: &PhaseSpacePoint,
    scale: c64,
    rank: usize,
    opts: RsvdOptions,
    rng: &mut R,
) -> Result<CompressedNoise> {
    let ns = p.n_sites();
    check_rank(rank, ns * ns)?;
    let (cl, tl) = range_coordinates(&factor_gram(p.up(), scale))?;
    let (cr, tr) = range_coordinates(&factor_gram(p.down(), scale))?;
    let zero = || CompressedNoise {
        point: p.clone(),
        scale,
        left: Mat::zeros(2 * ns, rank),
        right: Mat::zeros(2 * ns, rank),
    };
    if tl.nrows() == 0 || tr.nrows() == 0 {
        return Ok(zero());
    }
    // D_q2 = -i L Rᵀ = Φ (-i T_L T_Rᵀ) Ψᵀ.
    let mut k = &tl * tr.transpose();
    k *= faer::Scale(-I);

    let samples = (rank + opts.oversample).min(ns * ns);
    let z = standard_complex_normal(k.ncols(), samples, rng);
    let mut q = thin_q((&k * &z).as_ref());
    for _ in 0..opts.power_iters {
        let w = thin_q((k.adjoint() * &q).as_ref());
        q = thin_q((&k * &w).as_ref());
    }
    let small = q.adjoint() * &k;
    let svd = small
        .thin_svd()
        .map_err(|e| Error::GaugeFailure(format!("SVD of projected block: {e:?}")))?;
    let uk = &q * svd.U();
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    let avail = rank.min(s.len());
    let lu = &cl * &uk;
    let rv = &cr * svd.V().conjugate();
    let mut out = zero();
    for c in 0..avail {
        let root = s[c].max(0.0).sqrt();
        for r in 0..2 * ns {
            out.left[(r, c)] = lu[(r, c)] * root;
            out.right[(r, c)] = rv[(r, c)] * root;
        }
    }
    if !(is_finite(&out.left) && is_finite(&out.right)) {
        return Err(Error::GaugeFailure("non-finite singular triplets".into()));
    }
    Ok(out)
}

fn is_finite(m: &Mat<c64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

/// Singular triplets of `D_q2` held as coefficients on the structured
/// factors: `U √S = L left`, `V̄ √S = R right`.
#[derive(Debug, Clone)]
pub struct CompressedNoise {
    point: PhaseSpacePoint,
    scale: c64,
    left: Mat<c64>,
    right: Mat<c64>,
}

impl CompressedNoise {
    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn to_factor(&self) -> NoiseFactor {
        let ns = self.point.n_sites();
        let nn = ns * ns;
        let r = self.rank();
        let mut b = Mat::zeros(2 * nn, 2 * r);
        for k in 0..r {
            let lw: Vec<c64> = (0..2 * ns).map(|q| self.left[(q, k)]).collect();
            let rw: Vec<c64> = (0..2 * ns).map(|q| self.right[(q, k)]).collect();
            let top = factor_apply(self.point.up(), self.scale, &lw);
            let bot = factor_apply(self.point.down(), self.scale, &rw);
            for i in 0..ns {
                for j in 0..ns {
                    let row = i * ns + j;
                    b[(row, k)] = top[(i, j)];
                    b[(row, r + k)] = I * top[(i, j)];
                    b[(nn + row, k)] = I * bot[(i, j)];
                    b[(nn + row, r + k)] = bot[(i, j)];
                }
            }
        }
        NoiseFactor { b }
    }

    fn apply(&self, dw: &[f64]) -> (Mat<c64>, Mat<c64>) {
        let r = self.rank();
        let ns = self.point.n_sites();
        let c: Vec<c64> = (0..r).map(|k| c64::new(dw[k], dw[r + k])).collect();
        let combine = |m: &Mat<c64>, coef: &dyn Fn(usize) -> c64| -> Vec<c64> {
            (0..2 * ns).map(|q| (0..r).map(|k| m[(q, k)] * coef(k)).sum()).collect()
        };
        let lw = combine(&self.left, &|k| c[k]);
        let rw = combine(&self.right, &|k| I * c[k].conj());
        (factor_apply(self.point.up(), self.scale, &lw), factor_apply(self.point.down(), self.scale, &rw))
    }
}

/// Leading singular triplets of `D_q2 = U S V*`.
#[derive(Debug, Clone)]
pub struct SpectralNoise {
    u: Mat<c64>,
    sqrt_s: Vec<f64>,
    v: Mat<c64>,
}

impl SpectralNoise {
    /// Keeps `keep` triplets, padding with zero columns if fewer exist.
    pub fn new(u: MatRef<'_, c64>, s: &[f64], v: MatRef<'_, c64>, keep: usize) -> Result<Self> {
        let nn = u.nrows();
        let avail = keep.min(s.len()).min(u.ncols()).min(v.ncols());
        let take = |m: MatRef<'_, c64>| {
            Mat::from_fn(nn, keep, |r, k| if k < avail { m[(r, k)] } else { c64::new(0.0, 0.0) })
        };
        let sqrt_s = (0..keep).map(|k| if k < avail { s[k].max(0.0).sqrt() } else { 0.0 }).collect();
        let out = Self { u: take(u), sqrt_s, v: take(v) };
        if !out.is_finite() {
            return Err(Error::GaugeFailure("non-finite singular triplets".into()));
        }
        Ok(out)
    }

    pub fn zeros(nn: usize, rank: usize) -> Self {
        Self { u: Mat::zeros(nn, rank), sqrt_s: vec![0.0; rank], v: Mat::zeros(nn, rank) }
    }

    pub fn rank(&self) -> usize {
        self.sqrt_s.len()
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.sqrt_s.iter().map(|x| x * x).collect()
    }

    fn is_finite(&self) -> bool {
        let ok = |m: &Mat<c64>| {
            (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
        };
        ok(&self.u) && ok(&self.v) && self.sqrt_s.iter().all(|x| x.is_finite())
    }

    pub fn to_factor(&self) -> NoiseFactor {
        assemble_noise(self.u.as_ref(), &self.singular_values(), self.v.as_ref(), self.rank())
    }

    /// With `c = dW_1 + i dW_2` the top half is `U √S c` and the bottom
    /// half is `V̄ √S (i c̄)`.
    fn apply(&self, dw: &[f64]) -> (Mat<c64>, Mat<c64>) {
        let r = self.rank();
        let nn = self.u.nrows();
        let ns = (nn as f64).sqrt().round() as usize;
        let c: Vec<c64> = (0..r).map(|k| c64::new(dw[k], dw[r + k])).collect();
        let top_w = Mat::from_fn(r, 1, |k, _| c[k] * self.sqrt_s[k]);
        // conj(V̄ w) = V w̄, with w = √S i c̄  =>  w̄ = -i √S c.
        let bot_w = Mat::from_fn(r, 1, |k, _| -I * c[k] * self.sqrt_s[k]);
        let top = &self.u * &top_w;
        let bot = &self.v * &bot_w;
        (
            Mat::from_fn(ns, ns, |i, j| top[(i * ns + j, 0)]),
            Mat::from_fn(ns, ns, |i, j| bot[(i * ns + j, 0)].conj()),
        )
    }
}

/// Rank of the diffusion block is at most `2 n_s`.
pub fn default_rank(n_sites: usize) -> usize {
    (2 * n_sites).min(n_sites * n_sites)
}

fn check_rank(rank: usize, max: usize) -> Result<()> {
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RsvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
}

/// Linear operator view of `D_q2`.
pub trait DiffusionOperator {
    fn dim(&self) -> usize;
    /// `D_q2 x`
    fn apply(&self, x: MatRef<'_, c64>) -> Mat<c64>;
    /// `D_q2* x`
    fn apply_adjoint(&self, x: MatRef<'_, c64>) -> Mat<c64>;
}

/// `D_q2` from an explicit diffusion block.
pub struct DenseDiffusion {
    dq2: Mat<c64>,
}

impl DenseDiffusion {
    pub fn new(dq: &DiffusionBlock) -> Self {
        let mut dq2 = dq.dq.clone();
        dq2 *= faer::Scale(MINUS_HALF_I);
        Self { dq2 }
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.dq2.as_ref()
    }
}

impl DiffusionOperator for DenseDiffusion {
    fn dim(&self) -> usize {
        self.dq2.nrows()
    }

    fn apply(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        &self.dq2 * x
    }

    fn apply_adjoint(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        self.dq2.adjoint() * x
    }
}

/// `D_q2 = -i L Rᵀ` kept in factored form, so products cost `O(n_s^4)`
/// instead of `O(n_s^5)`.
pub struct FactoredDiffusion {
    pub left: Mat<c64>,
    pub right: Mat<c64>,
}

impl DiffusionOperator for FactoredDiffusion {
    fn dim(&self) -> usize {
        self.left.nrows()
    }

    fn apply(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let inner = self.right.transpose() * x;
        let mut out = &self.left * &inner;
        out *= faer::Scale(-I);
        out
    }

    fn apply_adjoint(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let inner = self.left.adjoint() * x;
        let mut out = self.right.conjugate() * &inner;
        out *= faer::Scale(I);
        out
    }
}

/// Builds `B` from the leading `keep` triplets of `D_q2 = U S V*`.
pub fn assemble_noise(u: MatRef<'_, c64>, s: &[f64], v: MatRef<'_, c64>, keep: usize) -> NoiseFactor {
    let nn = u.nrows();
    let mut b = Mat::zeros(2 * nn, 2 * keep);
    for k in 0..keep.min(s.len()) {
        let root = s[k].max(0.0).sqrt();
        for r in 0..nn {
            let us = u[(r, k)] * root;
            let vs = v[(r, k)].conj() * root;
            b[(r, k)] = us;
            b[(r, keep + k)] = I * us;
            b[(nn + r, k)] = I * vs;
            b[(nn + r, keep + k)] = vs;
        }
    }
    NoiseFactor { b }
}

fn standard_complex_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<c64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re * scale, im * scale)
    })
}

fn thin_q(y: MatRef<'_, c64>) -> Mat<c64> {
    y.qr().compute_thin_Q()
}

/// Randomized SVD gauge on an explicit diffusion block.
pub fn factorize_randomized<R: Rng + ?Sized>(
    dq: &DiffusionBlock,
    rank: usize,
    opts: RsvdOptions,
    rng: &mut R,
) -> Result<NoiseFactor> {
    Ok(randomized_from_operator(&DenseDiffusion::new(dq), rank, opts, rng)?.to_factor())
}

/// Range finder `Q ≈ range(D_q2 Z)`, then the SVD of `Q* D_q2` lifted back
/// through `Q`.
pub fn randomized_from_operator<O: DiffusionOperator, R: Rng + ?Sized>(
    op: &O,
    rank: usize,
    opts: RsvdOptions,
    rng: &mut R,
) -> Result<SpectralNoise> {
    let n = op.dim();
    check_rank(rank, n)?;
    let samples = (rank + opts.oversample).min(n);
    let z = standard_complex_normal(n, samples, rng);
    let mut q = thin_q(op.apply(z.as_ref()).as_ref());
    for _ in 0..opts.power_iters {
        let w = thin_q(op.apply_adjoint(q.as_ref()).as_ref());
        q = thin_q(op.apply(w.as_ref()).as_ref());
    }
    // Q* D_q2 = (D_q2* Q)*
    let projected = op.apply_adjoint(q.as_ref());
    let small = projected.adjoint().to_owned();
    let svd = small
        .thin_svd()
        .map_err(|e| Error::GaugeFailure(format!("SVD of projected block: {e:?}")))?;
    let u = &q * svd.U();
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    SpectralNoise::new(u.as_ref(), &s, svd.V(), rank)
}

/// Full SVD of `D_q2`, keeping the leading `2 n_s` triplets (the block's
/// rank is at most `2 n_s - 2`, so nothing is lost).
pub fn factorize_classical(dq: &DiffusionBlock) -> Result<NoiseFactor> {
    Ok(classical_spectral(dq)?.to_factor())
}

pub fn classical_spectral(dq: &DiffusionBlock) -> Result<SpectralNoise> {
    let op = DenseDiffusion::new(dq);
    let svd = op
        .matrix()
        .svd()
        .map_err(|e| Error::GaugeFailure(format!("full SVD: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    let keep = default_rank(dq.n_sites());
    SpectralNoise::new(svd.U(), &s, svd.V(), keep)
}

/// Deterministic truncated SVD through Golub-Kahan-Lanczos
/// bidiagonalization with full reorthogonalization. The start vector comes
/// from a fixed seed, and the small core is `U* D_q2 V`.
pub fn factorize_lowrank(dq: &DiffusionBlock, rank: usize) -> Result<NoiseFactor> {
    Ok(lowrank_from_operator(&DenseDiffusion::new(dq), rank)?.to_factor())
}

pub fn lowrank_from_operator<O: DiffusionOperator>(op: &O, rank: usize) -> Result<SpectralNoise> {
    let n = op.dim();
    check_rank(rank, n)?;
    // A few extra steps let the Krylov space settle on the leading triplets.
    let max_steps = (rank + 4).min(n);
    // Fixed stream: the factorization is a deterministic function of D_q.
    let mut start = rand_chacha::ChaCha8Rng::seed_from_u64(LOWRANK_START_SEED);

    let mut us: Vec<Mat<c64>> = Vec::with_capacity(max_steps);
    let mut vs: Vec<Mat<c64>> = Vec::with_capacity(max_steps);
    let mut scale = 0.0f64;
    let mut v = standard_complex_normal(n, 1, &mut start);
    normalize(&mut v);

    while vs.len() < max_steps {
        let mut u = op.apply(v.as_ref());
        vs.push(v);
        scale = scale.max(col_norm(u.as_ref()));
        if scale == 0.0 {
            return Ok(SpectralNoise::zeros(n, rank));
        }
        let tiny = 1e-13 * scale;
        reorthogonalize(&mut u, &us);
        let mut next = if col_norm(u.as_ref()) > tiny {
            normalize(&mut u);
            let w = op.apply_adjoint(u.as_ref());
            us.push(u);
            w
        } else {
            Mat::zeros(n, 1)
        };
        reorthogonalize(&mut next, &vs);
        if col_norm(next.as_ref()) <= tiny {
            // Invariant subspace reached; restart orthogonally to V.
            next = standard_complex_normal(n, 1, &mut start);
            reorthogonalize(&mut next, &vs);
            if col_norm(next.as_ref()) <= 1e-8 {
                break;
            }
        }
        normalize(&mut next);
        v = next;
    }
    if us.is_empty() {
        return Ok(SpectralNoise::zeros(n, rank));
    }

    let uk = Mat::from_fn(n, us.len(), |r, c| us[c][(r, 0)]);
    let vk = Mat::from_fn(n, vs.len(), |r, c| vs[c][(r, 0)]);
    let core = uk.adjoint() * op.apply(vk.as_ref());
    let svd = core
        .thin_svd()
        .map_err(|e| Error::GaugeFailure(format!("projected SVD: {e:?}")))?;
    let left = &uk * svd.U();
    let right = &vk * svd.V();
    let s: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    SpectralNoise::new(left.as_ref(), &s, right.as_ref(), rank)
}

const LOWRANK_START_SEED: u64 = 0x5eed_10c4;

fn normalize(x: &mut Mat<c64>) {
    let nrm = col_norm(x.as_ref());
    *x *= faer::Scale(c64::new(1.0 / nrm, 0.0));
}

fn col_norm(x: MatRef<'_, c64>) -> f64 {
    frobenius(x)
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn reorthogonalize(x: &mut Mat<c64>, basis: &[Mat<c64>]) {
    for _ in 0..2 {
        for b in basis {
            let mut dot = c64::new(0.0, 0.0);
            for r in 0..x.nrows() {
                dot += b[(r, 0)].conj() * x[(r, 0)];
            }
            for r in 0..x.nrows() {
                x[(r, 0)] -= dot * b[(r, 0)];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// `‖B Bᵀ - D‖_F / ‖D‖_F`
    pub residual: f64,
    /// Numeric rank of `B`.
    pub numeric_rank: usize,
    /// Seconds spent in the check.
    pub elapsed: f64,
}

/// Compares `B Bᵀ` with the diffusion matrix assembled from `dq`.
pub fn verify_factorization(b: &NoiseFactor, dq: &DiffusionBlock) -> Result<FactorizationReport> {
    let start = Instant::now();
    let nn = dq.dq.nrows();
    if b.b.nrows() != 2 * nn {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", 2 * nn),
            found: format!("{} rows", b.b.nrows()),
        });
    }
    let top = b.b.subrows(0, nn);
    let bottom = b.b.subrows(nn, nn);
    let tl = top * top.transpose();
    let br = bottom * bottom.transpose();
    let tr = &(top * bottom.transpose()) - &dq.dq;
    let bl = &(bottom * top.transpose()) - dq.dq.transpose();
    let err2: f64 = [tl.as_ref(), br.as_ref(), tr.as_ref(), bl.as_ref()]
        .iter()
        .map(|m| frobenius(*m).powi(2))
        .sum();
    // ‖D‖_F counts both off-diagonal blocks.
    let norm_d = std::f64::consts::SQRT_2 * frobenius(dq.dq.as_ref());
    let residual = err2.sqrt() / norm_d.max(f64::MIN_POSITIVE);
    Ok(FactorizationReport {
        residual,
        numeric_rank: numeric_rank(b.b.as_ref(), RANK_TOL),
        elapsed: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::HubbardParams;
    use crate::phase_space::{analytic_noise, diffusion_block};
    use crate::testutil::{random_point, rng};

    fn generic_block(ns: usize, seed: u64) -> DiffusionBlock {
        diffusion_block(&random_point(ns, &mut rng(seed)), &HubbardParams::default()).unwrap()
    }

    #[test]
    fn zero_block_gives_zero_noise() {
        let dq = DiffusionBlock::zeros(3);
        for b in [
            factorize_randomized(&dq, 6, RsvdOptions::default(), &mut rng(1)).unwrap(),
            factorize_classical(&dq).unwrap(),
            factorize_lowrank(&dq, 6).unwrap(),
        ] {
            assert_eq!(b.b.ncols(), 12);
            assert_eq!(frobenius(b.b.as_ref()), 0.0);
            assert_eq!(verify_factorization(&b, &dq).unwrap().residual, 0.0);
        }
    }

    #[test]
    fn randomized_exact_at_full_rank() {
        let dq = generic_block(4, 2);
        let b = factorize_randomized(&dq, 8, RsvdOptions::default(), &mut rng(3)).unwrap();
        assert_eq!(b.b.ncols(), 16);
        assert!(verify_factorization(&b, &dq).unwrap().residual < 1e-10);
    }

    #[test]
    fn truncated_residual_decreases_with_rank() {
        let ns = 4;
        let dq = generic_block(ns, 4);
        let mut prev = f64::INFINITY;
        let mut residuals = Vec::new();
        for rank in 1..=2 * ns {
            let b = factorize_randomized(&dq, rank, RsvdOptions { oversample: 4, power_iters: 2 }, &mut rng(5))
                .unwrap();
            let res = verify_factorization(&b, &dq).unwrap().residual;
            residuals.push(res);
            assert!(res <= prev * (1.0 + 1e-6) + 1e-12, "rank {rank}: {residuals:?}");
            prev = res;
        }
        assert!(residuals[0] > 1e-3);
        assert!(residuals[2 * ns - 1] < 1e-10);
    }

    #[test]
    fn classical_and_randomized_agree() {
        for (ns, seed) in [(3, 10), (4, 11), (6, 12)] {
            let dq = generic_block(ns, seed);
            let c = factorize_classical(&dq).unwrap();
            let r = factorize_randomized(&dq, 2 * ns, RsvdOptions::default(), &mut rng(seed)).unwrap();
            let diff = &c.gram() - &r.gram();
            assert!(frobenius(diff.as_ref()) / frobenius(c.gram().as_ref()) < 1e-10);
            assert!(verify_factorization(&c, &dq).unwrap().residual < 1e-10);
        }
    }

    #[test]
    fn classical_block_rank() {
        for ns in [3, 4, 6] {
            let dq = generic_block(ns, 20 + ns as u64);
            let dense = DenseDiffusion::new(&dq);
            assert_eq!(numeric_rank(dense.matrix(), RANK_TOL), 2 * ns - 2);
        }
    }

    #[test]
    fn lowrank_exact_at_full_rank() {
        for ns in [3, 4, 6] {
            let dq = generic_block(ns, 30 + ns as u64);
            let b = factorize_lowrank(&dq, 2 * ns).unwrap();
            let rep = verify_factorization(&b, &dq).unwrap();
            assert!(rep.residual < 1e-10, "n_s={ns}: {}", rep.residual);
        }
    }

    #[test]
    fn analytic_noise_verifies() {
        let p = random_point(4, &mut rng(40));
        let par = HubbardParams::default();
        let b = analytic_noise(&p, &par).unwrap();
        let dq = diffusion_block(&p, &par).unwrap();
        let rep = verify_factorization(&b, &dq).unwrap();
        assert!(rep.residual < 1e-12);
        assert_eq!(rep.numeric_rank, 14);
    }

    #[test]
    fn zeroed_column_is_detected() {
        let p = random_point(4, &mut rng(41));
        let par = HubbardParams::default();
        let dq = diffusion_block(&p, &par).unwrap();
        let mut b = factorize_randomized(&dq, 8, RsvdOptions::default(), &mut rng(42)).unwrap();
        for r in 0..b.b.nrows() {
            b.b[(r, 0)] = c64::new(0.0, 0.0);
        }
        assert!(verify_factorization(&b, &dq).unwrap().residual > 1e-3);
    }

    #[test]
    fn factored_operator_matches_dense() {
        let p = random_point(4, &mut rng(43));
        let par = HubbardParams::default();
        let lat = crate::lattice::build_lattice(&[4], 1.0).unwrap();
        let model = HubbardModel::new(&lat, &par).unwrap();
        let (l, r) = model.diffusion_factors(&p).unwrap();
        let fact = FactoredDiffusion { left: l, right: r };
        let dense = DenseDiffusion::new(&model.diffusion_block(&p).unwrap());
        let x = crate::testutil::random_complex_matrix(16, 3, &mut rng(44));
        let d1 = &fact.apply(x.as_ref()) - &dense.apply(x.as_ref());
        let d2 = &fact.apply_adjoint(x.as_ref()) - &dense.apply_adjoint(x.as_ref());
        assert!(frobenius(d1.as_ref()) < 1e-13);
        assert!(frobenius(d2.as_ref()) < 1e-13);
    }

    #[test]
    fn same_seed_same_noise() {
        let dq = generic_block(4, 50);
        let a = factorize_randomized(&dq, 8, RsvdOptions::default(), &mut rng(7)).unwrap();
        let b = factorize_randomized(&dq, 8, RsvdOptions::default(), &mut rng(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn block_structure_of_assembled_noise() {
        let dq = generic_block(3, 51);
        let b = factorize_randomized(&dq, 6, RsvdOptions::default(), &mut rng(8)).unwrap();
        let (nn, r) = (9, 6);
        for row in 0..nn {
            for k in 0..r {
                assert_eq!(b.b[(row, k)] * I, b.b[(row, r + k)]);
                assert_eq!(b.b[(nn + row, r + k)] * I, b.b[(nn + row, k)]);
            }
        }
    }

    fn flat(m: &(Mat<c64>, Mat<c64>)) -> Vec<c64> {
        PhaseSpacePoint::new(m.0.clone(), m.1.clone()).unwrap().flatten()
    }

    #[test]
    fn operators_match_dense_factors() {
        let lat = crate::lattice::build_lattice(&[2, 2], 1.0).unwrap();
        let model = HubbardModel::new(&lat, &HubbardParams { j: 1.0, u: 1.4, hbar: 1.0 }).unwrap();
        let p = random_point(4, &mut rng(60));
        let mut gen = rng(61);
        let explicit = GaugeMethod::RandomizedSvd { rank: None, oversample: 0, power_iters: 0, explicit: true };
        for gauge in [GaugeMethod::Analytic, GaugeMethod::ClassicalSvd, GaugeMethod::LowRankSvd { rank: None }, GaugeMethod::randomized(), explicit] {
            let op = gauge.operator(&model, &p, &mut rng(62)).unwrap();
            let dense = gauge.noise(&model, &p, &mut rng(62)).unwrap();
            assert_eq!(op.channels(), dense.channels());
            assert_eq!(op.channels(), gauge.channels(4));
            let dw: Vec<f64> = (0..op.channels()).map(|_| gen.sample::<f64, _>(StandardNormal)).collect();
            let fast = flat(&op.apply(&dw));
            let slow = dense.apply(&dw);
            let err: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(err.sqrt() < 1e-12, "{}: {err}", gauge.name());
        }
    }

    #[test]
    fn compressed_randomized_reproduces_diffusion() {
        for (ns, seed) in [(2, 70), (3, 71), (4, 72), (6, 73), (8, 74)] {
            let p = random_point(ns, &mut rng(seed));
            let par = HubbardParams { j: 1.0, u: 1.0, hbar: 1.0 };
            let dq = diffusion_block(&p, &par).unwrap();
            let scale = (I * par.u).sqrt() / std::f64::consts::SQRT_2;
            let c = randomized_compressed(&p, scale, 2 * ns, RsvdOptions::default(), &mut rng(seed)).unwrap();
            let rep = verify_factorization(&c.to_factor(), &dq).unwrap();
            assert!(rep.residual < 1e-9, "n_s={ns}: {}", rep.residual);
        }
    }

    #[test]
    fn factor_gram_matches_dense() {
        let p = random_point(4, &mut rng(75));
        let lat = crate::lattice::build_lattice(&[4], 1.0).unwrap();
        let model = HubbardModel::new(&lat, &HubbardParams::default()).unwrap();
        let (l, _) = model.diffusion_factors(&p).unwrap();
        let dense = l.adjoint() * &l;
        let fast = factor_gram(p.up(), model.noise_scale());
        assert!(frobenius((&dense - &fast).as_ref()) < 1e-13 * frobenius(dense.as_ref()));
    }

    #[test]
    fn compressed_zero_point() {
        let p = PhaseSpacePoint::from_diagonal(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let c = randomized_compressed(&p, c64::new(0.5, 0.5), 4, RsvdOptions::default(), &mut rng(1)).unwrap();
        assert_eq!(frobenius(c.to_factor().b.as_ref()), 0.0);
    }

    #[test]
    fn rank_bounds() {
        let dq = generic_block(3, 52);
        assert!(factorize_randomized(&dq, 0, RsvdOptions::default(), &mut rng(1)).is_err());
        assert!(factorize_randomized(&dq, 10, RsvdOptions::default(), &mut rng(1)).is_err());
        assert!(factorize_lowrank(&dq, 10).is_err());
    }
}
