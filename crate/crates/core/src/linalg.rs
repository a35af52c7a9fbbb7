//! Small dense complex linear algebra helpers shared by the modules.
//!
//! Qubit ordering convention: in an `n`-qubit operator, the qubit at position
//! `0` is the most significant bit of a basis index (leftmost tensor factor).

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type Mat2 = Matrix2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn mat2_to_dyn(m: &Mat2) -> CMat {
    CMat::from_fn(2, 2, |i, j| m[(i, j)])
}

pub fn dyn_to_mat2(m: &CMat) -> Mat2 {
    Mat2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && max_abs_diff(m, &m.adjoint()) <= tol
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eig(m: &CMat) -> f64 {
    eigvalsh(m)[0]
}

/// Rebuild `V diag(f(λ)) V†` from an eigen-decomposition of the Hermitian part.
pub fn hermitian_map(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let s = f(lam);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * vecs.adjoint()
}

/// Nearest positive semidefinite matrix in Frobenius norm (eigenvalue clipping).
pub fn psd_project(m: &CMat) -> CMat {
    hermitian_map(m, |x| x.max(0.0))
}

pub fn inv_sqrt_psd(m: &CMat) -> CMat {
    hermitian_map(m, |x| 1.0 / x.sqrt())
}

pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `Tr_B` of an operator on `A ⊗ B` with dimensions `(da, db)`.
pub fn partial_trace_second(m: &CMat, da: usize, db: usize) -> CMat {
    CMat::from_fn(da, da, |i, j| {
        (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()
    })
}

/// `Tr_A` of an operator on `A ⊗ B` with dimensions `(da, db)`.
pub fn partial_trace_first(m: &CMat, da: usize, db: usize) -> CMat {
    CMat::from_fn(db, db, |i, j| {
        (0..da).map(|k| m[(k * db + i, k * db + j)]).sum()
    })
}

/// Column-stacking vectorisation: `vec(X)[r + d c] = X[r, c]`.
pub fn vec_col(m: &CMat) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec_col(v: &DVector<C64>, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) / 2f64.sqrt()
    })
}

/// Haar-random unitary via QR of a Ginibre matrix with phase-fixed diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let qr = ginibre(rng, d, d).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 { diag / diag.norm() } else { ONE };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    hermitian_part(&ginibre(rng, d, d))
}

/// Random full-rank density matrix `G G† / Tr[G G†]`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMat {
    let g = ginibre(rng, d, d);
    let w = &g * g.adjoint();
    let t = w.trace();
    w / t
}

/// Index helpers for embedding a subset of qubits inside a larger register.
///
/// `table[other * 2^k + local]` is the full basis index whose bits at
/// `positions` equal `local` (first listed position most significant) and whose
/// remaining bits, in ascending position order, equal `other`.
pub fn embedding_table(n: usize, positions: &[usize]) -> Vec<usize> {
    let k = positions.len();
    let rest: Vec<usize> = (0..n).filter(|p| !positions.contains(p)).collect();
    let mut table = vec![0usize; 1 << n];
    for other in 0..(1usize << rest.len()) {
        for local in 0..(1usize << k) {
            let mut full = 0usize;
            for (t, &p) in positions.iter().enumerate() {
                let bit = (local >> (k - 1 - t)) & 1;
                full |= bit << (n - 1 - p);
            }
            for (t, &p) in rest.iter().enumerate() {
                let bit = (other >> (rest.len() - 1 - t)) & 1;
                full |= bit << (n - 1 - p);
            }
            table[(other << k) | local] = full;
        }
    }
    table
}

/// Apply a `k`-local superoperator (column-stacking convention) to the qubits
/// at `positions` of an `n`-qubit operator.
pub fn apply_superop_embedded(op: &CMat, n: usize, positions: &[usize], superop: &CMat) -> CMat {
    let k = positions.len();
    let dk = 1usize << k;
    debug_assert_eq!(superop.nrows(), dk * dk);
    debug_assert_eq!(op.nrows(), 1 << n);
    let table = embedding_table(n, positions);
    let n_other = 1usize << (n - k);
    let mut out = CMat::zeros(1 << n, 1 << n);
    let mut local = vec![ZERO; dk * dk];
    for ro in 0..n_other {
        for co in 0..n_other {
            for b in 0..dk {
                let col = table[(co << k) | b];
                for a in 0..dk {
                    local[a + dk * b] = op[(table[(ro << k) | a], col)];
                }
            }
            for b in 0..dk {
                let col = table[(co << k) | b];
                for a in 0..dk {
                    let row_idx = a + dk * b;
                    let mut acc = ZERO;
                    for (t, v) in local.iter().enumerate() {
                        acc += superop[(row_idx, t)] * v;
                    }
                    out[(table[(ro << k) | a], col)] = acc;
                }
            }
        }
    }
    out
}

/// Multiply by `probe` on the qubit at `pos` and trace it out:
/// `Tr_pos[(probe ⊗ I) op]`.
pub fn trace_out_with(op: &CMat, n: usize, pos: usize, probe: &Mat2) -> CMat {
    let table = embedding_table(n, &[pos]);
    let m = 1usize << (n - 1);
    CMat::from_fn(m, m, |r, col| {
        let mut acc = ZERO;
        for a in 0..2 {
            for b in 0..2 {
                acc += probe[(a, b)] * op[(table[(r << 1) | b], table[(col << 1) | a])];
            }
        }
        acc
    })
}

/// Insert a new qubit carrying `factor` at position `pos` of an `n`-qubit
/// operator, returning an `(n + 1)`-qubit operator.
pub fn absorb_factor(op: &CMat, n: usize, pos: usize, factor: &Mat2) -> CMat {
    let table = embedding_table(n + 1, &[pos]);
    let m = 1usize << (n + 1);
    let mut out = CMat::zeros(m, m);
    for r in 0..(1usize << n) {
        for col in 0..(1usize << n) {
            let v = op[(r, col)];
            if v == ZERO {
                continue;
            }
            for a in 0..2 {
                for b in 0..2 {
                    out[(table[(r << 1) | a], table[(col << 1) | b])] = v * factor[(a, b)];
                }
            }
        }
    }
    out
}

/// Reorder the qubits of an operator: qubit at new position `t` is the qubit
/// previously at position `order[t]`.
pub fn permute_qubits(op: &CMat, n: usize, order: &[usize]) -> CMat {
    let d = 1usize << n;
    let map: Vec<usize> = (0..d)
        .map(|new| {
            let mut old = 0usize;
            for (t, &src) in order.iter().enumerate() {
                let bit = (new >> (n - 1 - t)) & 1;
                old |= bit << (n - 1 - src);
            }
            old
        })
        .collect();
    CMat::from_fn(d, d, |r, col| op[(map[r], map[col])])
}
