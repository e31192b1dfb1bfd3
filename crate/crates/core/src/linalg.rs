//! Small dense helpers on top of faer.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as c64;

pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// Singular values in non-increasing order; empty on SVD failure.
pub fn singular_values(m: MatRef<'_, c64>) -> Option<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Some(Vec::new());
    }
    m.singular_values().ok()
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numeric_rank(m: MatRef<'_, c64>, rel_tol: f64) -> usize {
    let s = singular_values(m).unwrap_or_default();
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rel_tol * smax).count(),
        _ => 0,
    }
}

/// `exp(i t H)` for a real symmetric `H`.
pub fn expi_symmetric(h: MatRef<'_, f64>, t: f64) -> Mat<c64> {
    let n = h.nrows();
    let evd = h.self_adjoint_eigen(Side::Lower).expect("symmetric eigensolver failed");
    let v = evd.U();
    let lam = evd.S().column_vector();
    let phase: Vec<c64> = (0..n).map(|k| c64::from_polar(1.0, t * lam[k])).collect();
    Mat::from_fn(n, n, |i, j| (0..n).map(|k| phase[k] * (v[(i, k)] * v[(j, k)])).sum())
}

/// `exp(-i t H)` for a Hermitian `H`.
pub fn expmi_hermitian(h: MatRef<'_, c64>, t: f64) -> Mat<c64> {
    let n = h.nrows();
    let evd = h.self_adjoint_eigen(Side::Lower).expect("hermitian eigensolver failed");
    let v = evd.U();
    let lam = evd.S().column_vector();
    let phase: Vec<c64> = (0..n).map(|k| c64::from_polar(1.0, -t * lam[k].re)).collect();
    Mat::from_fn(n, n, |i, j| (0..n).map(|k| phase[k] * v[(i, k)] * v[(j, k)].conj()).sum())
}

/// Diagonally pivoted Cholesky of a Hermitian positive semidefinite `a`,
/// stopped once the largest remaining pivot falls below `rel_tol` times the
/// largest diagonal entry. Returns the permutation and the `m x k` lower
/// trapezoidal factor `c` with `a[perm, perm] ≈ c c*`.
pub fn pivoted_cholesky(a: MatRef<'_, c64>, rel_tol: f64) -> (Vec<usize>, Mat<c64>) {
    let m = a.nrows();
    let mut work = a.to_owned();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut c = Mat::<c64>::zeros(m, m);
    let scale = (0..m).map(|i| a[(i, i)].re).fold(0.0, f64::max);
    let mut k = 0;
    while k < m {
        let piv = (k..m).max_by(|&x, &y| work[(x, x)].re.total_cmp(&work[(y, y)].re)).expect("nonempty");
        let d = work[(piv, piv)].re;
        if !(d > rel_tol * scale) {
            break;
        }
        if piv != k {
            perm.swap(k, piv);
            for j in 0..m {
                let t = work[(k, j)];
                work[(k, j)] = work[(piv, j)];
                work[(piv, j)] = t;
            }
            for i in 0..m {
                let t = work[(i, k)];
                work[(i, k)] = work[(i, piv)];
                work[(i, piv)] = t;
            }
            for j in 0..k {
                let t = c[(k, j)];
                c[(k, j)] = c[(piv, j)];
                c[(piv, j)] = t;
            }
        }
        let root = d.sqrt();
        c[(k, k)] = c64::new(root, 0.0);
        for i in k + 1..m {
            c[(i, k)] = work[(i, k)] / root;
        }
        for j in k + 1..m {
            let cj = c[(j, k)].conj();
            for i in k + 1..m {
                work[(i, j)] -= c[(i, k)] * cj;
            }
        }
        k += 1;
    }
    (perm, c.subcols(0, k).to_owned())
}

/// Inverse of an upper triangular matrix by back substitution.
pub fn upper_triangular_inverse(r: MatRef<'_, c64>) -> Mat<c64> {
    let k = r.nrows();
    let mut inv = Mat::<c64>::zeros(k, k);
    for col in 0..k {
        for row in (0..=col).rev() {
            let mut acc = if row == col { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
            for t in row + 1..=col {
                acc -= r[(row, t)] * inv[(t, col)];
            }
            inv[(row, col)] = acc / r[(row, row)];
        }
    }
    inv
}

pub fn to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}
